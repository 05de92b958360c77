"""``sfb`` command-line interface.

Exit codes: 0 success, 1 validation failure, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from ..dataset import collect_dataset, load_dataset, save_dataset
from ..envs import make_env
from ..errors import ContractViolation
from ..fb.exact import ExactFB
from ..fb.model import FbModel, load_checkpoint, save_checkpoint
from ..fb.policy import SoftPolicyFamily
from ..fb.train import TrainConfig, train
from ..inference import (
    METHODS,
    MEASURE_KINDS,
    SearchConfig,
    attach_ground_truth,
    evaluate_ground_truth,
    write_candidates,
    zero_order_search,
)
from ..measures import explicit_measure_train
from ..mdp import StochasticPolicy
from ..objectives import load_objective, objective_from_spec
from ..utilities import compute_normalizer, normalize
from .config import ExperimentConfig, load_config
from .counterexample import counterexample_report
from .runner import ExperimentFailed, _atomic_write, run_experiment
from .selfcheck import run_selfcheck

EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(EXIT_VALIDATION)


def _objective(args, env):
    spec = args.objective
    if spec.endswith(".json") and Path(spec).exists():
        return load_objective(spec, env)
    return objective_from_spec(spec, env)


def _model(args, env):
    if args.checkpoint is None:
        return ExactFB(env.mdp)
    model = load_checkpoint(args.checkpoint)
    if (model.n_states, model.n_actions) != (env.mdp.n_states, env.mdp.n_actions):
        raise ContractViolation("checkpoint does not match the environment")
    return model


def _write_json(path: Path, payload) -> None:
    _atomic_write(path, json.dumps(payload, indent=2) + "\n")


def cmd_collect(args):
    env = make_env(args.env)
    mdp = env.mdp
    behavior = StochasticPolicy.uniform(mdp.n_states, mdp.n_actions)
    ds = collect_dataset(mdp, behavior, args.steps, args.episode_len, seed=args.seed, env_id=args.env)
    out = Path(args.out) / "dataset.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    save_dataset(ds, out)
    print(out)


def cmd_train(args):
    env = make_env(args.env)
    ds = load_dataset(args.dataset)
    if (ds.n_states, ds.n_actions) != (env.mdp.n_states, env.mdp.n_actions):
        raise ContractViolation("dataset does not match the environment")
    overrides = json.loads(Path(args.config).read_text()) if args.config else {}
    if args.steps is not None:
        overrides["n_steps"] = args.steps
    try:
        cfg = TrainConfig(**{**overrides, "mode": args.mode, "seed": args.seed})
    except TypeError as exc:
        raise ContractViolation(f"invalid train config: {exc}") from None
    model = FbModel.initialize(env.mdp.n_states, env.mdp.n_actions, args.dim, env.mdp.discount,
                               ds.rho, seed=args.seed)
    model = train(model, ds, cfg)
    out = Path(args.out) / "model.npz"
    out.parent.mkdir(parents=True, exist_ok=True)
    save_checkpoint(model, out)
    print(out)


def cmd_infer(args):
    env = make_env(args.env)
    model = _model(args, env)
    obj = _objective(args, env)
    family = SoftPolicyFamily(model, args.mode)
    explicit = None
    if args.measure == "explicit":
        if args.dataset is None:
            raise ContractViolation("--dataset is required for explicit measures")
        explicit = explicit_measure_train(env.mdp, load_dataset(args.dataset), family)
    sampler = "sphere_uniform" if args.mode == "hard" else "ball_uniform"
    cfg = SearchConfig(n_candidates=args.candidates, method=args.method, sampler=sampler, seed=args.seed)
    result = zero_order_search(family, obj, args.measure, cfg, mdp=env.mdp, explicit=explicit, env=env)
    result = attach_ground_truth(result, env.mdp, family, obj)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_candidates(out / "candidates.csv", result.table)
    _write_json(out / "best.json", {"z": result.z_best.tolist(), "offline_score": result.offline_score,
                                    "candidate_index": result.best_index})
    print(json.dumps({"z": result.z_best.tolist(), "offline_score": result.offline_score}))


def cmd_eval(args):
    env = make_env(args.env)
    model = _model(args, env)
    obj = _objective(args, env)
    if args.z is not None:
        z = np.array([float(x) for x in args.z.split(",")])
    elif args.best is not None:
        z = np.array(json.loads(Path(args.best).read_text())["z"], dtype=float)
    else:
        raise ContractViolation("give --z or --best")
    raw = evaluate_ground_truth(env.mdp, model, z, obj, args.mode)
    score = normalize(compute_normalizer(obj, env.mdp), obj.utility(raw))
    print(json.dumps({"ground_truth": raw, "normalized_score": score}))


def cmd_sweep(args):
    if args.config is None:
        raise ContractViolation("sweep needs --config")
    cfg = load_config(args.config)
    changes = {}
    if args.out is not None:
        changes["out_dir"] = args.out
    if args.seed is not None:
        changes["seeds"] = [args.seed]
    if changes:
        cfg = ExperimentConfig.from_dict({**cfg.to_dict(), **changes})
    rows = run_experiment(cfg)
    print(f"{len(rows)} rows written to {Path(cfg.out_dir) / 'results.csv'}")


def cmd_counterexample(args):
    report = counterexample_report(args.gamma)
    if args.out is not None:
        _write_json(Path(args.out) / "counterexample.json", report)
    print(json.dumps(report, indent=2))


def cmd_selfcheck(args):
    results = run_selfcheck()
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'} {r.name}: {r.detail}")
    return EXIT_OK if all(r.passed for r in results) else EXIT_RUNTIME


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sfb", description="Soft forward-backward workbench on tabular MDPs.")
    sub = parser.add_subparsers(dest="verb", required=True, parser_class=_Parser)

    def common(p, env=True, objective=False):
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", default=".")
        if env:
            p.add_argument("--env", default="grid9")
        if objective:
            p.add_argument("--objective", required=True,
                           help="objective name for the env or a JSON objective file")

    p = sub.add_parser("collect", help="collect a uniform-behaviour dataset")
    common(p)
    p.add_argument("--steps", type=int, default=100_000)
    p.add_argument("--episode-len", type=int, default=4)
    p.set_defaults(func=cmd_collect)

    p = sub.add_parser("train", help="train a learned FB model")
    common(p)
    p.add_argument("--dataset", required=True)
    p.add_argument("--config", help="JSON file of TrainConfig overrides")
    p.add_argument("--steps", type=int)
    p.add_argument("--dim", type=int, default=8)
    p.add_argument("--mode", choices=("soft", "hard"), default="soft")
    p.set_defaults(func=cmd_train)

    for verb, func in (("infer", cmd_infer), ("eval", cmd_eval)):
        p = sub.add_parser(verb, help="zero-order inference" if verb == "infer"
                           else "ground-truth evaluation of one embedding")
        common(p, objective=True)
        p.add_argument("--checkpoint", help="learned model (exact FB when omitted)")
        p.add_argument("--mode", choices=("soft", "hard"), default="soft")
        if verb == "infer":
            p.add_argument("--measure", choices=MEASURE_KINDS, default="exact")
            p.add_argument("--dataset")
            p.add_argument("--candidates", type=int, default=1024)
            p.add_argument("--method", choices=METHODS, default="shooting")
        else:
            p.add_argument("--z", help="comma-separated embedding")
            p.add_argument("--best", help="best.json written by infer")
        p.set_defaults(func=func)

    p = sub.add_parser("sweep", help="run an experiment config")
    p.add_argument("--config")
    p.add_argument("--out")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("counterexample", help="single-state counterexample report")
    p.add_argument("--gamma", type=float, default=0.5)
    p.add_argument("--out")
    p.set_defaults(func=cmd_counterexample)

    p = sub.add_parser("selfcheck", help="run the invariant checks")
    p.set_defaults(func=cmd_selfcheck)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        code = args.func(args)
    except ContractViolation as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except ExperimentFailed as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:  # noqa: BLE001
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK if code is None else code


if __name__ == "__main__":
    sys.exit(main())
