import math

import numpy as np
import pytest

from conftest import single_state_mdp
from sfb.envs import make_counterexample, make_grid_env, make_random_mdp
from sfb.errors import ContractViolation
from sfb.fb import ExactFB, SoftPolicyFamily
from sfb.measures import MeasureEstimate, exact_measure, sample_measure
from sfb.mdp import StochasticPolicy, successor_measure
from sfb.utilities import (
    ScoreNormalizer,
    UtilityObjective,
    brute_force_optimum,
    brute_force_size,
    compute_normalizer,
    exact_eval,
    normalize,
    policy_utilities,
    sample_eval,
    simplex_grid,
)

ENTROPY_SA = UtilityObjective("entropy", support="state_action")


def est(marginal, n_actions=2):
    m = np.asarray(marginal, dtype=float)
    return MeasureEstimate("exact", m.reshape(-1, n_actions).sum(axis=1), m, n_actions)


def test_entropy_uniform_two_pairs():
    assert exact_eval(ENTROPY_SA, est([0.5, 0.5])) == pytest.approx(math.log(2))


def test_entropy_counterexample_policies():
    mdp = make_counterexample().mdp
    model = ExactFB(mdp)
    for z in np.random.default_rng(0).normal(size=(20, 2)):
        assert exact_eval(ENTROPY_SA, model.solve(z, "hard").measure) == 0.0
    uni = successor_measure(mdp, StochasticPolicy.uniform(1, 2))
    assert exact_eval(ENTROPY_SA, uni) == pytest.approx(math.log(2))


def test_kl_to_self_is_zero_and_support_mismatch_is_infinite():
    q = np.array([0.2, 0.3, 0.5, 0.0])
    obj = UtilityObjective("kl_to_expert", support="state_action", expert=q)
    assert exact_eval(obj, est(q)) == 0.0
    assert exact_eval(obj, est([0.1, 0.1, 0.1, 0.7])) == math.inf
    assert not obj.maximize and obj.utility(2.0) == -2.0


def test_empirical_expert_smoothing_makes_kl_finite():
    obj = UtilityObjective("kl_to_expert", support="state_action", expert=np.array([1.0, 0.0]),
                           expert_empirical=True)
    assert np.isfinite(exact_eval(obj, est([0.5, 0.5])))


def test_linear_goal_robust_constrained():
    m = est([0.1, 0.2, 0.3, 0.4])
    r = np.array([1.0, 2.0])
    assert exact_eval(UtilityObjective("linear", reward=r), m) == pytest.approx(0.3 + 1.4)
    rob = UtilityObjective("robust_min", support="state_action", rewards=(np.eye(4)[0], np.eye(4)[3]))
    assert exact_eval(rob, m) == pytest.approx(0.1)
    g = np.array([0.0, 1.0])
    soft = UtilityObjective("constrained", reward=g, threshold=0.5)
    assert exact_eval(soft, m) == pytest.approx(0.7 - 10 * 0.2)
    hard = UtilityObjective("constrained", reward=g, threshold=0.5, strict=True, floor=-1.0)
    assert exact_eval(hard, m) == -1.0
    assert exact_eval(UtilityObjective("constrained", reward=g, threshold=0.9), m) == pytest.approx(0.7)


def test_validation():
    with pytest.raises(ContractViolation):
        UtilityObjective("fun")
    with pytest.raises(ContractViolation):
        UtilityObjective("linear")
    with pytest.raises(ContractViolation):
        UtilityObjective("kl_to_expert", expert=np.array([0.5, 0.6]))
    with pytest.raises(ContractViolation):
        UtilityObjective("constrained", reward=np.ones(2))


def test_sample_eval_linear_within_clt():
    env = make_grid_env(3)
    fam = SoftPolicyFamily(ExactFB(env.mdp))
    m = exact_measure(fam, np.zeros(81), env.mdp, env)
    r = env.coords[:, 0] ** 2
    obj = UtilityObjective("linear", reward=r)
    s = sample_measure(m, 4096, seed=0)
    truth = exact_eval(obj, m)
    sd = math.sqrt(m.state_marginal @ (r - truth) ** 2)
    assert abs(sample_eval(obj, s) - truth) <= 3 * sd / math.sqrt(4096)


def test_sample_eval_entropy_knn_matches_lift():
    env = make_grid_env(9)
    uniform = MeasureEstimate("exact", np.full(81, 1 / 81), np.full(81, 1 / 81), 1, coords=env.coords,
                              cell_width=env.cell_width)
    obj = UtilityObjective("entropy", log_volume=env.log_cell_volume)
    # the cell-uniform lift of the uniform state measure is uniform on [-1,1]^2
    assert exact_eval(obj, uniform) == pytest.approx(math.log(4.0))
    assert sample_eval(obj, sample_measure(uniform, 4096, seed=0)) == pytest.approx(math.log(4.0), abs=0.1)


def test_sample_eval_plugin_without_coords():
    m = est([0.25, 0.25, 0.25, 0.25])
    s = sample_measure(m, 8000, seed=0)
    assert sample_eval(ENTROPY_SA, s, n_actions=2) == pytest.approx(math.log(4), abs=0.01)
    with pytest.raises(ContractViolation):
        sample_eval(ENTROPY_SA, s)


def test_normalize():
    n = ScoreNormalizer(0.0, math.log(2))
    assert normalize(n, 0.0) == 0.0
    assert normalize(n, math.log(2)) == 1.0
    assert normalize(n, 5.0) == 1.0
    with pytest.raises(ContractViolation):
        ScoreNormalizer(1.0, 1.0)


def test_normalizer_counterexample_entropy():
    n = compute_normalizer(ENTROPY_SA, make_counterexample().mdp)
    assert n.min_score == pytest.approx(0.0, abs=1e-12)
    assert n.max_score == pytest.approx(math.log(2), abs=1e-6)
    assert normalize(n, math.log(2)) == pytest.approx(1.0, abs=1e-6)


def test_simplex_grid():
    g = simplex_grid(3, 5)
    assert g.shape == (15, 3)
    assert np.allclose(g.sum(axis=1), 1.0)
    assert brute_force_size(2, 3, 5) == 225
    with pytest.raises(ContractViolation):
        simplex_grid(2, 1)


def test_brute_force_entropy_single_state():
    raw, pol = brute_force_optimum(ENTROPY_SA, single_state_mdp(), 201)
    assert raw == pytest.approx(math.log(2))
    assert np.allclose(pol.probs, 0.5)


def test_brute_force_linear_is_vertex():
    mdp = make_random_mdp(3, 2, 0.8, 0)
    r = np.random.default_rng(0).normal(size=6)
    obj = UtilityObjective("linear", support="state_action", reward=r)
    raw, pol = brute_force_optimum(obj, mdp, 11)
    assert set(np.unique(pol.probs)) <= {0.0, 1.0}
    vertices = [np.eye(2)[list(c)] for c in np.ndindex(2, 2, 2)]
    assert raw == pytest.approx(policy_utilities(obj, mdp, np.stack(vertices)).max())


def test_brute_force_robust_counterexample_interior():
    obj = UtilityObjective("robust_min", support="state_action", rewards=(np.eye(2)[0], np.eye(2)[1]))
    mdp = make_counterexample().mdp
    raw, pol = brute_force_optimum(obj, mdp, 201)
    assert raw == pytest.approx(0.5)
    assert np.allclose(pol.probs, 0.5)
    for a in range(2):
        det = successor_measure(mdp, StochasticPolicy.deterministic(np.array([a]), 2))
        assert exact_eval(obj, det) < raw


def test_brute_force_grid_limit():
    with pytest.raises(ContractViolation):
        brute_force_optimum(ENTROPY_SA, make_random_mdp(8, 3, 0.5, 0), 21)


def test_normalizer_max_beats_brute_force():
    mdp = make_random_mdp(3, 2, 0.7, 1)
    for obj in (ENTROPY_SA, UtilityObjective("entropy"),
                UtilityObjective("robust_min", rewards=(np.eye(3)[0], np.eye(3)[2]))):
        n = compute_normalizer(obj, mdp)
        raw, _ = brute_force_optimum(obj, mdp, 21)
        assert n.max_score >= obj.utility(raw) - 1e-6
        assert n.min_score <= obj.utility(raw)


def test_brute_force_nested_grids_monotone():
    mdp = make_random_mdp(2, 2, 0.7, 4)
    for obj in (ENTROPY_SA, UtilityObjective("robust_min", rewards=(np.eye(2)[0], np.eye(2)[1]))):
        coarse, _ = brute_force_optimum(obj, mdp, 5)
        fine, _ = brute_force_optimum(obj, mdp, 9)
        assert fine >= coarse - 1e-12
