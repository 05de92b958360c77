import numpy as np
import pytest

from conftest import single_state_mdp
from sfb.dataset import TransitionBatch
from sfb.fb import FbModel, RandomFourierFeatures, entropy_critic_loss, fb_loss, ortho_loss
from sfb.fb.losses import critic_terms, fb_terms, ortho_terms


def fd_grad(f, x, eps=1e-5):
    g = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        xp, xm = x.copy(), x.copy()
        xp[idx] += eps
        xm[idx] -= eps
        g[idx] = (f(xp) - f(xm)) / (2 * eps)
    return g


def rel_err(a, b):
    return np.abs(a - b).max() / max(np.abs(b).max(), 1e-8)


def small_model(seed, S=3, A=2, d=2, n_features=4):
    rng = np.random.default_rng(seed)
    m = FbModel.initialize(S, A, d, 0.8, rng.dirichlet(np.ones(S)), seed=seed, n_features=n_features,
                           forward_std=0.5)
    return m.with_params(critic_weights=rng.normal(size=m.critic_weights.shape))


def small_batch(seed, S=3, A=2, b=4):
    rng = np.random.default_rng(seed + 100)
    return TransitionBatch(rng.integers(0, S, b), rng.integers(0, A, b), rng.integers(0, S, b))


def z_batch(seed, b=4, d=2):
    z = np.random.default_rng(seed + 200).normal(size=(b, d))
    return 0.9 * z / (1 + np.linalg.norm(z, axis=1, keepdims=True))


def test_single_transition_loss_by_hand():
    rng = np.random.default_rng(0)
    F, B, Bt = rng.normal(size=(1, 2)), rng.normal(size=(2, 3)), rng.normal(size=(2, 3))
    f_next, rho, nxt, g = rng.normal(size=(1, 2)), np.array([0.2, 0.3, 0.5]), np.array([1]), 0.9
    expected = sum(rho[s] * (F[0] @ B[:, s] - g * f_next[0] @ Bt[:, s]) ** 2 for s in range(3))
    expected -= 2 * F[0] @ B[:, 1]
    assert fb_terms(F, B, rho, nxt, f_next, Bt, g)[0] == pytest.approx(expected, rel=1e-12)


@pytest.mark.parametrize("seed", range(10))
def test_fb_loss_gradients(seed):
    model, batch, z = small_model(seed), small_batch(seed), z_batch(seed)
    target = small_model(seed + 50)
    pi = np.random.default_rng(seed).dirichlet(np.ones(2), size=4)
    _, grads = fb_loss(model, batch, z, target=target, next_policy=pi)
    fW = lambda W: fb_loss(model.with_params(forward_weights=W), batch, z, target, pi)[0]
    fB = lambda B: fb_loss(model.with_params(backward=B), batch, z, target, pi)[0]
    assert rel_err(grads["forward_weights"], fd_grad(fW, np.array(model.forward_weights))) <= 1e-4
    assert rel_err(grads["backward"], fd_grad(fB, np.array(model.backward))) <= 1e-4


@pytest.mark.parametrize("seed", range(10))
def test_ortho_and_critic_gradients(seed):
    model, batch, z = small_model(seed), small_batch(seed), z_batch(seed)
    _, g = ortho_loss(model)
    f = lambda B: ortho_loss(model.with_params(backward=B))[0]
    assert rel_err(g["backward"], fd_grad(f, np.array(model.backward))) <= 1e-4
    target = small_model(seed + 50)
    pi = np.random.default_rng(seed).dirichlet(np.ones(2), size=4)
    _, g = entropy_critic_loss(model, batch, z, target=target, next_policy=pi)
    f = lambda H: entropy_critic_loss(model.with_params(critic_weights=H), batch, z, target, pi)[0]
    assert rel_err(g["critic_weights"], fd_grad(f, np.array(model.critic_weights))) <= 1e-4


def test_fb_loss_stationary_at_exact_solution():
    # one state, d=1, B=1, rho=1: the unnormalized measure is 1/(1-g) = 2 for every pair
    mdp = single_state_mdp(0.5)
    feats = RandomFourierFeatures(1, 4, seed=0)
    W = np.zeros((1, 2, 1, feats.size))
    W[..., -1] = 2.0
    model = FbModel(W, np.zeros((1, 2, feats.size)), np.ones((1, 1)), np.ones(1), mdp.discount, feats)
    batch = TransitionBatch(np.zeros(3, int), np.array([0, 1, 0]), np.zeros(3, int))
    z = np.array([[0.3], [-0.5], [0.0]])
    loss, grads = fb_loss(model, batch, z)
    assert loss == pytest.approx(1.0 - 4.0)
    total = np.sqrt(sum(np.sum(g ** 2) for g in grads.values()))
    assert total <= 1e-4


def test_ortho_loss_values():
    rho = np.array([0.25, 0.25, 0.5])
    B = np.zeros((2, 3))
    assert ortho_terms(B, rho)[0] == pytest.approx(2.0)
    B = np.array([[2.0, 0.0, 0.0], [0.0, 2.0, 0.0]])
    assert ortho_terms(B, rho)[0] == pytest.approx(0.0)


def test_critic_fixed_points():
    pi = np.array([[0.5, 0.5]])
    h = np.full((1, 2), np.log(2))
    loss, grad = critic_terms(np.array([np.log(2)]), pi, h, 0.5)
    assert loss == pytest.approx(0.0, abs=1e-15)
    # gradient descent on the deterministic policy from a nonzero start
    q = np.array([1.0, 1.0])
    det = np.array([[1.0, 0.0], [1.0, 0.0]])
    for _ in range(200):
        _, g = critic_terms(q, det, np.stack([q, q]), 0.5)
        q = q - 0.5 * g
    assert np.abs(q).max() <= 1e-3


def test_critic_uniform_policy_converges_to_log2():
    q = np.zeros(2)
    pi = np.full((2, 2), 0.5)
    for _ in range(500):
        _, g = critic_terms(q, pi, np.stack([q, q]), 0.5)
        q = q - 0.5 * g
    assert np.allclose(q, np.log(2), atol=1e-9)
