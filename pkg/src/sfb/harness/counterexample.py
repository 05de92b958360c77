"""One-shot report on the single-state counterexample."""

from __future__ import annotations

import math

import numpy as np

from ..embedding import sample_sphere
from ..envs import make_counterexample
from ..fb.exact import ExactFB
from ..mdp import StochasticPolicy, successor_measure
from ..utilities import UtilityObjective, exact_eval

N_HARD_DIRECTIONS = 64


def counterexample_report(gamma: float = 0.5, n_directions: int = N_HARD_DIRECTIONS,
                          seed: int = 0) -> dict:
    """Successor matrices of both deterministic policies and the entropy utilities.

    Hard-mode utilities are evaluated at ``n_directions`` embeddings on the
    unit circle plus the two axis directions; the soft-mode value is taken at
    ``z = 0``.
    """
    env = make_counterexample(gamma)
    mdp = env.mdp
    model = ExactFB(mdp)
    entropy = UtilityObjective("entropy", support="state_action", name="pure_exploration")
    matrices = {}
    for a, label in enumerate(("a1", "a2")):
        pol = StochasticPolicy.deterministic(np.array([a]), 2)
        matrices[label] = successor_measure(mdp, pol, with_matrix=True).sa_matrix
    zs = np.concatenate([np.array([[1.0, 0.0], [0.0, 1.0]]),
                         sample_sphere(np.random.default_rng(seed), n_directions, 2)])
    hard = np.array([exact_eval(entropy, model.solve(z, "hard").measure) for z in zs])
    soft_fp = model.solve(np.zeros(2), "soft")
    return {
        "gamma": gamma,
        "C_nominal": env.C,
        "M_a1": matrices["a1"].tolist(),
        "M_a2": matrices["a2"].tolist(),
        "hard_entropy_max": float(hard.max()),
        "hard_entropy_min": float(hard.min()),
        "hard_directions": int(len(zs)),
        "soft_entropy_at_zero": exact_eval(entropy, soft_fp.measure),
        "soft_policy_at_zero": soft_fp.policy.probs[0].tolist(),
        "log2": math.log(2.0),
    }
