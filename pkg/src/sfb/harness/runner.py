"""End-to-end experiment pipeline: data, model, search, ground truth, normalization."""

from __future__ import annotations

import csv
import io
import json
import os
import platform
import tempfile
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

from .. import __version__
from ..dataset import collect_dataset
from ..envs import make_env
from ..fb.exact import ExactFB
from ..fb.model import FbModel
from ..fb.policy import SoftPolicyFamily
from ..fb.train import train
from ..inference import attach_ground_truth, zero_order_search
from ..measures import explicit_measure_train
from ..mdp import StochasticPolicy
from ..objectives import objective_from_spec
from ..utilities import compute_normalizer, normalize
from .config import ExperimentConfig
from .stats import ConstantInputWarning, spearman

CSV_SCHEMA_VERSION = 1
RESULTS_FILE = "results.csv"
MANIFEST_FILE = "manifest.json"


@dataclass(frozen=True)
class ResultRow:
    env: str
    algorithm: str
    objective: str
    measure_kind: str
    seed: int
    offline_best: float
    ground_truth_of_best: float
    normalized_score: float
    spearman_rho: float
    wall_time: float
    error: str = ""


# wall_time goes to the manifest only, so the CSV is reproducible byte for byte
CSV_COLUMNS = tuple(f.name for f in fields(ResultRow) if f.name != "wall_time")


class ExperimentFailed(RuntimeError):
    """A pipeline stage raised; ``rows`` holds what was flushed, ending in an error row."""

    def __init__(self, message, rows):
        super().__init__(message)
        self.rows = rows


def task_seed(seed: int, index: int) -> int:
    """Independent 63-bit stream for ``(master seed, task index)``."""
    return int(np.random.SeedSequence([seed, index]).generate_state(2, np.uint64)[0] >> np.uint64(1))


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(x)
    return str(x)


def results_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in rows:
        w.writerow([_fmt(getattr(r, c)) for c in CSV_COLUMNS])
    return buf.getvalue()


def write_results(rows, out_dir) -> Path:
    path = Path(out_dir) / RESULTS_FILE
    _atomic_write(path, results_csv(rows))
    return path


def read_results(path) -> list[ResultRow]:
    out = []
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            out.append(ResultRow(
                env=rec["env"], algorithm=rec["algorithm"], objective=rec["objective"],
                measure_kind=rec["measure_kind"], seed=int(rec["seed"]),
                offline_best=float(rec["offline_best"]),
                ground_truth_of_best=float(rec["ground_truth_of_best"]),
                normalized_score=float(rec["normalized_score"]),
                spearman_rho=float(rec["spearman_rho"]), wall_time=float("nan"),
                error=rec["error"]))
    return out


def _objective_label(spec) -> str:
    return spec if isinstance(spec, str) else spec.get("name", spec.get("kind", "objective"))


def _build_family(cfg: ExperimentConfig, env, seed: int):
    mdp = env.mdp
    dataset = None
    if cfg.regime == "learned" or cfg.measure_kind == "explicit":
        behavior = StochasticPolicy.uniform(mdp.n_states, mdp.n_actions)
        dataset = collect_dataset(mdp, behavior, cfg.dataset.n_steps, cfg.dataset.episode_len,
                                  seed=task_seed(seed, 0), env_id=cfg.env)
    if cfg.regime == "exact":
        model = ExactFB(mdp)
    else:
        model = FbModel.initialize(mdp.n_states, mdp.n_actions, cfg.dim, mdp.discount, dataset.rho,
                                   seed=task_seed(seed, 1))
        model = train(model, dataset, cfg.train_config(task_seed(seed, 2)))
    family = SoftPolicyFamily(model, cfg.mode)
    explicit = explicit_measure_train(mdp, dataset, family) if cfg.measure_kind == "explicit" else None
    return family, explicit


def _run_seed(cfg: ExperimentConfig, seed: int, objectives, normalizers, choices: list):
    env = make_env(cfg.env)
    start = time.perf_counter()
    rows = []
    try:
        family, explicit = _build_family(cfg, env, seed)
        for j, (label, obj) in enumerate(objectives):
            t0 = time.perf_counter()
            search = replace(cfg.search, sampler=cfg.sampler, seed=task_seed(seed, 10 + j))
            result = zero_order_search(family, obj, cfg.measure_kind, search, mdp=env.mdp,
                                       explicit=explicit, env=env)
            result = attach_ground_truth(result, env.mdp, family, obj)
            offline = [r.offline_score for r in result.table]
            truth = [r.ground_truth for r in result.table]
            with warnings.catch_warnings(record=True) as caught:
                warnings.simplefilter("always", ConstantInputWarning)
                rho = spearman(offline, truth) if len(offline) >= 2 else 0.0
            if caught:
                choices.append(f"seed {seed} {label}: constant scores, spearman_rho set to 0")
            gt_best = result.table[result.best_index].ground_truth
            score = normalize(normalizers[label], obj.utility(gt_best))
            rows.append(ResultRow(cfg.env, cfg.algorithm, label, cfg.measure_kind, seed,
                                  float(result.offline_score), float(gt_best), float(score),
                                  float(rho), time.perf_counter() - t0))
    except Exception as exc:  # noqa: BLE001  (reported as an error row)
        nan = float("nan")
        rows.append(ResultRow(cfg.env, cfg.algorithm, "", cfg.measure_kind, seed, nan, nan, nan, nan,
                              time.perf_counter() - start, error=f"{type(exc).__name__}: {exc}"))
    return rows


def _manifest(cfg: ExperimentConfig, rows, choices, wall_time, normalizers) -> dict:
    import numba
    import scipy

    return {
        "config": cfg.to_dict(),
        "csv_schema": CSV_SCHEMA_VERSION,
        "columns": list(CSV_COLUMNS),
        "versions": {"sfb": __version__, "python": platform.python_version(),
                     "numpy": np.__version__, "scipy": scipy.__version__, "numba": numba.__version__},
        "normalizers": {k: [v.min_score, v.max_score] for k, v in normalizers.items()},
        "choices": [
            f"policy mode {cfg.mode}; candidates drawn by {cfg.sampler}",
            "argmax ties resolved to the lowest candidate index",
            "soft policies with temperature below 1e-6 fall back to greedy (marked clamped)",
            "implicit measures clamp negative weights to 0 before renormalizing",
            "goal indicator reads 'distance to (0, 0.5) < 0.2' as a Euclidean norm",
            *choices,
        ],
        "row_wall_times": [r.wall_time for r in rows],
        "wall_time": wall_time,
    }


def run_experiment(cfg: ExperimentConfig) -> list[ResultRow]:
    """Run every (seed, objective) task and write ``results.csv`` plus ``manifest.json``.

    Seeds run in ``cfg.workers`` threads; rows are emitted in (seed order,
    objective order) regardless of completion order. If any task fails, the
    rows produced so far plus an error row are written and
    :class:`ExperimentFailed` is raised.
    """
    start = time.perf_counter()
    env = make_env(cfg.env)
    per_seed_choices = [[] for _ in cfg.seeds]
    normalizers = {}
    try:
        objectives = [(_objective_label(s), objective_from_spec(s, env)) for s in cfg.objectives]
        for label, obj in objectives:
            normalizers[label] = compute_normalizer(obj, env.mdp)
    except Exception as exc:  # noqa: BLE001
        nan = float("nan")
        rows = [ResultRow(cfg.env, cfg.algorithm, "", cfg.measure_kind, cfg.seeds[0], nan, nan, nan,
                          nan, time.perf_counter() - start, error=f"{type(exc).__name__}: {exc}")]
    else:
        args = [(cfg, s, objectives, normalizers, per_seed_choices[i]) for i, s in enumerate(cfg.seeds)]
        if cfg.workers == 1:
            chunks = [_run_seed(*a) for a in args]
        else:
            with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
                chunks = list(pool.map(lambda a: _run_seed(*a), args))
        rows = [r for chunk in chunks for r in chunk]
    errors = [r for r in rows if r.error]
    if errors:
        rows = rows[: rows.index(errors[0]) + 1]
    choices = [c for cs in per_seed_choices for c in cs]
    out = Path(cfg.out_dir)
    write_results(rows, out)
    manifest = _manifest(cfg, rows, choices, time.perf_counter() - start, normalizers)
    _atomic_write(out / MANIFEST_FILE, json.dumps(manifest, indent=2, default=str) + "\n")
    if errors:
        raise ExperimentFailed(errors[0].error, rows)
    return rows
