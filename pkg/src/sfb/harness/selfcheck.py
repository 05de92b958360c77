"""Fast invariant checks run by ``sfb selfcheck``."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..embedding import reparameterize
from ..envs import make_counterexample, make_random_mdp
from ..fb.exact import ExactFB, exact_fixed_point
from ..fb.losses import critic_terms, fb_terms, ortho_terms
from ..inference import SearchConfig, attach_ground_truth, zero_order_search
from ..mdp import interpolate_policy, maxent_return, soft_value_iteration, successor_measure
from ..utilities import UtilityObjective
from .counterexample import counterexample_report


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


def check_maxent_recovery(n_mdps: int = 5, seed: int = 0) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for i in range(n_mdps):
        S, A = int(rng.integers(2, 5)), int(rng.integers(2, 4))
        mdp = make_random_mdp(S, A, 0.8, seed + i)
        B = np.eye(S * A)
        R = rng.uniform(-1, 1, size=(S, A))
        fp = exact_fixed_point(mdp, B, reparameterize(B @ R.ravel()))
        _, opt = soft_value_iteration(mdp, R)
        worst = max(worst, abs(maxent_return(mdp, fp.policy, R) - maxent_return(mdp, opt, R)))
    return CheckResult("maxent recovery", worst <= 1e-5, f"max gap {worst:.2e}")


def check_simulation_lemma(n_mdps: int = 20, seed: int = 0) -> CheckResult:
    rng = np.random.default_rng(seed)
    violations = 0
    for i in range(n_mdps):
        mdp = make_random_mdp(4, 3, 0.9, seed + 100 + i)
        probs = rng.dirichlet(np.ones(3), size=4)
        base = successor_measure(mdp, probs, with_matrix=False).marginal
        for alpha in (0.05, 0.2, 0.5):
            mixed = successor_measure(mdp, interpolate_policy(probs, alpha), with_matrix=False).marginal
            violations += np.abs(base - mixed).sum() > 2 * alpha / (1 - mdp.discount) + 1e-12
    return CheckResult("simulation lemma", bool(violations == 0), f"{violations} violations")


def _rel_err(analytic, numeric) -> float:
    return float(np.abs(analytic - numeric).max() / max(1e-8, np.abs(numeric).max()))


def _fd(f, x, eps=1e-6):
    g = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        xp, xm = x.copy(), x.copy()
        xp[idx] += eps
        xm[idx] -= eps
        g[idx] = (f(xp) - f(xm)) / (2 * eps)
    return g


def check_gradients(seed: int = 0) -> CheckResult:
    rng = np.random.default_rng(seed)
    b, d, S, A = 4, 3, 5, 3
    F = rng.normal(size=(b, d))
    B = rng.normal(size=(d, S))
    rho = rng.dirichlet(np.ones(S))
    nxt = rng.integers(0, S, size=b)
    f_next, B_t = rng.normal(size=(b, d)), rng.normal(size=(d, S))
    _, gF, gB = fb_terms(F, B, rho, nxt, f_next, B_t, 0.9)
    errs = [_rel_err(gF, _fd(lambda x: fb_terms(x, B, rho, nxt, f_next, B_t, 0.9)[0], F)),
            _rel_err(gB, _fd(lambda x: fb_terms(F, x, rho, nxt, f_next, B_t, 0.9)[0], B)),
            _rel_err(ortho_terms(B, rho)[1], _fd(lambda x: ortho_terms(x, rho)[0], B))]
    h, pi, h_next = rng.normal(size=b), rng.dirichlet(np.ones(A), size=b), rng.normal(size=(b, A))
    errs.append(_rel_err(critic_terms(h, pi, h_next, 0.9)[1],
                         _fd(lambda x: critic_terms(x, pi, h_next, 0.9)[0], h)))
    worst = max(errs)
    return CheckResult("gradients", worst <= 1e-4, f"max relative error {worst:.2e}")


def check_counterexample() -> CheckResult:
    rep = counterexample_report()
    ok = rep["hard_entropy_max"] == 0.0 and abs(rep["soft_entropy_at_zero"] - math.log(2)) <= 1e-9
    return CheckResult("counterexample", ok,
                       f"hard max {rep['hard_entropy_max']:.3g}, soft {rep['soft_entropy_at_zero']:.12f}")


def check_exact_offline_matches_truth() -> CheckResult:
    env = make_counterexample()
    obj = UtilityObjective("entropy", support="state_action")
    res = zero_order_search(ExactFB(env.mdp), obj, "exact", SearchConfig(n_candidates=32),
                            mdp=env.mdp, env=env)
    res = attach_ground_truth(res, env.mdp, ExactFB(env.mdp), obj)
    gap = max(abs(r.offline_score - r.ground_truth) for r in res.table)
    return CheckResult("exact offline == ground truth", gap <= 1e-6, f"max gap {gap:.2e}")


CHECKS = (check_maxent_recovery, check_simulation_lemma, check_gradients, check_counterexample,
          check_exact_offline_matches_truth)


def run_selfcheck() -> list[CheckResult]:
    return [check() for check in CHECKS]
