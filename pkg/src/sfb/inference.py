"""Zero-shot task inference: closed-form embeddings and zero-order search."""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .embedding import reparameterize, sample_ball, sample_sphere
from .errors import ContractViolation, UnsatisfiableObjective
from .fb.exact import ExactFB
from .fb.model import FbModel
from .fb.policy import SoftPolicyFamily
from .mdp import RewardVector, TabularMdp, successor_measure
from .measures import ExplicitMeasureModel, exact_measure, implicit_measure, sample_measure
from .utilities import UtilityObjective, exact_eval, sample_eval

RADIAL_CLIP = 1.0 - 1e-6
SAMPLERS = ("ball_uniform", "sphere_uniform")
METHODS = ("shooting", "cem")
EVALUATORS = ("auto", "exact", "plugin", "samples")
MEASURE_KINDS = ("exact", "implicit", "explicit")


@dataclass(frozen=True)
class SearchConfig:
    n_candidates: int = 1024
    sampler: str = "ball_uniform"
    method: str = "shooting"
    cem_population: int = 128
    cem_elite_frac: float = 0.1
    cem_iters: int = 8
    cem_init_std: float = 0.5
    n_measure_samples: int = 2048
    evaluator: str = "auto"
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        if self.sampler not in SAMPLERS:
            raise ContractViolation(f"sampler must be one of {SAMPLERS}")
        if self.method not in METHODS:
            raise ContractViolation(f"method must be one of {METHODS}")
        if self.evaluator not in EVALUATORS:
            raise ContractViolation(f"evaluator must be one of {EVALUATORS}")
        if self.n_candidates < 1 or self.n_measure_samples < 1 or self.workers < 1:
            raise ContractViolation("counts must be positive")
        if self.method == "cem":
            if self.cem_population < 1 or self.cem_iters < 1 or self.cem_init_std <= 0:
                raise ContractViolation("invalid CEM settings")
            if self.n_elites < 1:
                raise ContractViolation("CEM elite count must be at least 1")

    @property
    def n_elites(self) -> int:
        return int(round(self.cem_population * self.cem_elite_frac))


@dataclass
class CandidateRow:
    index: int
    z: np.ndarray
    offline_score: float
    ground_truth: float | None = None


@dataclass
class SearchResult:
    z_best: np.ndarray
    offline_score: float
    best_index: int
    table: list = field(default_factory=list)


def _reward_array(reward) -> tuple[np.ndarray, bool]:
    if isinstance(reward, RewardVector):
        return reward.values.ravel(), reward.per_state
    return np.asarray(reward, dtype=float).ravel(), False


def _embed(model, reward) -> np.ndarray:
    values, per_state = _reward_array(reward)
    if isinstance(model, ExactFB):
        S, A = model.n_states, model.n_actions
        if per_state or (values.size == S and S != S * A):
            values = np.repeat(values.reshape(S, 1), A, axis=1).ravel()
        return model.embed(values)
    if isinstance(model, FbModel):
        return model.embed(values)
    raise ContractViolation(f"unsupported model type {type(model).__name__}")


def infer_linear(model, reward) -> np.ndarray:
    """Unit embedding ``B R / ||B R||`` for a linear reward."""
    z = _embed(model, reward)
    norm = np.linalg.norm(z)
    if norm <= 1e-12:
        raise ContractViolation("reward not representable: ||B R|| is numerically zero")
    return z / norm


def infer_maxent(model, reward, initial_dist=None) -> np.ndarray:
    """Embedding for the maximum-entropy version of a linear task.

    The direction of ``B R`` is rescaled to norm ``c / (c + 1)`` where ``c``
    is ``F_z^T B R`` averaged over ``s0 ~ mu0`` and ``a0 ~ pi_z`` at
    ``z = reparameterize(B R)``. A zero reward (or ``c <= 0``) yields the
    origin, the pure-entropy task.
    """
    z_raw = _embed(model, reward)
    if np.linalg.norm(z_raw) <= 1e-12:
        return np.zeros_like(z_raw)
    if initial_dist is None:
        if not isinstance(model, ExactFB):
            raise ContractViolation("learned models need initial_dist")
        initial_dist = model.mdp.initial_dist
    mu0 = np.asarray(initial_dist, dtype=float)
    start = np.flatnonzero(mu0)
    z0 = reparameterize(z_raw)
    probs = model.policy(z0).probs[start]
    if isinstance(model, ExactFB):
        F = model.forward(z0)[start]
    else:
        F = model.forward(z0, states=start)
    c = float(np.einsum("s,sa,sad,d->", mu0[start], probs, F, z_raw))
    if c <= 0:
        return np.zeros_like(z_raw)
    return z_raw / np.linalg.norm(z_raw) * (c / (c + 1.0))


def evaluate_ground_truth(mdp: TabularMdp, model, z, obj: UtilityObjective, mode: str = "soft") -> float:
    """Raw objective value of ``pi_z`` under its true successor measure."""
    family = model if isinstance(model, SoftPolicyFamily) else SoftPolicyFamily(model, mode)
    policy = family.policy(z)
    return exact_eval(obj, successor_measure(mdp, policy, with_matrix=False))


class _Scorer:
    def __init__(self, family, obj, measure_kind, cfg, mdp, explicit, env):
        if measure_kind not in MEASURE_KINDS:
            raise ContractViolation(f"measure_kind must be one of {MEASURE_KINDS}")
        if measure_kind in ("exact", "implicit") and mdp is None:
            raise ContractViolation(f"{measure_kind} measures need the MDP")
        if measure_kind == "explicit" and not isinstance(explicit, ExplicitMeasureModel):
            raise ContractViolation("explicit measures need a fitted ExplicitMeasureModel")
        self.family, self.obj, self.kind, self.cfg = family, obj, measure_kind, cfg
        self.mdp, self.explicit, self.env = mdp, explicit, env
        evaluator = cfg.evaluator
        if evaluator == "auto":
            has_coords = env is not None and getattr(env, "coords", None) is not None
            if measure_kind == "exact":
                evaluator = "exact"
            elif has_coords and obj.support == "state":
                evaluator = "samples"
            else:
                evaluator = "plugin"
        self.evaluator = evaluator

    def measure(self, z):
        if self.kind == "exact":
            return exact_measure(self.family, z, self.mdp, self.env)
        if self.kind == "implicit":
            return implicit_measure(self.family.model, z, self.mdp, self.family.mode, self.env)
        return self.explicit.estimate(z, self.env)

    def __call__(self, index: int, z) -> float:
        est = self.measure(z)
        if self.evaluator in ("exact", "plugin"):
            return exact_eval(self.obj, est)
        seed = (self.cfg.seed, index)
        samples = sample_measure(est, self.cfg.n_measure_samples, seed)
        return sample_eval(self.obj, samples, n_actions=est.n_actions)


def _project(z: np.ndarray, sampler: str) -> np.ndarray:
    norms = np.linalg.norm(z, axis=1, keepdims=True)
    if sampler == "sphere_uniform":
        return z / np.where(norms > 0, norms, 1.0)
    return np.where(norms > RADIAL_CLIP, z * (RADIAL_CLIP / np.where(norms > 0, norms, 1.0)), z)


def _score_all(scorer: _Scorer, zs: np.ndarray, offset: int, workers: int) -> list:
    idx = range(offset, offset + len(zs))
    if workers == 1:
        return [scorer(i, z) for i, z in zip(idx, zs)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(scorer, idx, zs))


def zero_order_search(model, obj: UtilityObjective, measure_kind: str, cfg: SearchConfig,
                      mdp: TabularMdp | None = None, explicit: ExplicitMeasureModel | None = None,
                      env=None, mode: str = "soft") -> SearchResult:
    """Score sampled embeddings on estimated measures and keep the best.

    ``model`` may be an FB model (used in ``mode``) or a
    :class:`SoftPolicyFamily`. Ties go to the lowest candidate index.
    Offline scores in the table are raw objective values.
    """
    family = model if isinstance(model, SoftPolicyFamily) else SoftPolicyFamily(model, mode)
    scorer = _Scorer(family, obj, measure_kind, cfg, mdp, explicit, env)
    rng = np.random.default_rng(cfg.seed)
    d = family.dim
    draw = sample_ball if cfg.sampler == "ball_uniform" else sample_sphere

    if cfg.method == "shooting":
        zs = draw(rng, cfg.n_candidates, d)
        raws = _score_all(scorer, zs, 0, cfg.workers)
        all_z, all_raw = list(zs), list(raws)
    else:
        mean, std = np.zeros(d), np.full(d, cfg.cem_init_std)
        all_z, all_raw = [], []
        for _ in range(cfg.cem_iters):
            zs = _project(mean + std * rng.standard_normal((cfg.cem_population, d)), cfg.sampler)
            raws = _score_all(scorer, zs, len(all_z), cfg.workers)
            all_z.extend(zs)
            all_raw.extend(raws)
            util = np.array([obj.utility(r) for r in raws])
            util = np.where(np.isnan(util), -math.inf, util)
            elites = zs[np.argsort(-util, kind="stable")[: cfg.n_elites]]
            mean = elites.mean(axis=0)
            std = elites.std(axis=0) + 1e-6

    util = np.array([obj.utility(r) for r in all_raw])
    util = np.where(np.isnan(util), -math.inf, util)
    if not np.any(np.isfinite(util)):
        raise UnsatisfiableObjective("objective unsatisfiable under estimates: every candidate "
                                     "scored an infinite divergence")
    best = int(np.argmax(util))
    table = [CandidateRow(i, np.asarray(z), float(r)) for i, (z, r) in enumerate(zip(all_z, all_raw))]
    return SearchResult(np.asarray(all_z[best]), float(all_raw[best]), best, table)


def attach_ground_truth(result: SearchResult, mdp: TabularMdp, model, obj: UtilityObjective,
                        mode: str = "soft") -> SearchResult:
    rows = [replace(r, ground_truth=evaluate_ground_truth(mdp, model, r.z, obj, mode))
            for r in result.table]
    return replace(result, table=rows)


def write_candidates(path, table) -> None:
    """CSV with columns candidate_index, z_0..z_{d-1}, offline_score, ground_truth."""
    if not table:
        raise ContractViolation("empty candidate table")
    d = table[0].z.size
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["candidate_index", *[f"z_{i}" for i in range(d)], "offline_score", "ground_truth"])
        for r in table:
            gt = "" if r.ground_truth is None else repr(float(r.ground_truth))
            w.writerow([r.index, *[repr(float(x)) for x in r.z], repr(float(r.offline_score)), gt])


def read_candidates(path) -> list:
    rows = []
    with open(Path(path), newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        d = sum(1 for h in header if h.startswith("z_"))
        for rec in reader:
            gt = rec[d + 2]
            rows.append(CandidateRow(int(rec[0]), np.array([float(x) for x in rec[1:d + 1]]),
                                     float(rec[d + 1]), float(gt) if gt else None))
    return rows
