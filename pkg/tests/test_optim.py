import numpy as np
import pytest

from sfb.errors import ContractViolation
from sfb.fb.optim import DenseMomentum, LazyMomentumTable, catch_up_coefficients


def dense_reference(theta, lr_slot, mu, tau, updates):
    theta = theta.copy()
    vel = np.zeros_like(theta)
    targ = theta.copy()
    lr = lr_slot[None, :, None]
    for rows, grads in updates:
        g = np.zeros_like(theta)
        if rows is not None:
            g[rows] = grads
        vel = mu * vel + g
        theta = theta - lr * vel
        targ = (1 - tau) * targ + tau * theta
    return theta, targ


@pytest.mark.parametrize("seed", range(5))
def test_lazy_table_matches_dense_reference(seed):
    rng = np.random.default_rng(seed)
    n_rows, slots, K = 7, 3, 4
    theta0 = rng.normal(size=(n_rows, slots, K))
    lr_slot = np.array([0.1, 0.2, 0.05])
    table = LazyMomentumTable(theta0, lr_slot, 0.9, 0.05)
    updates = []
    for _ in range(60):
        if rng.random() < 0.2:
            table.skip()
            updates.append((None, None))
            continue
        rows = np.unique(rng.integers(0, n_rows, size=3))
        grads = rng.normal(size=(rows.size, slots, K))
        psi = rng.normal(size=(2, K))
        live, targ = table.gather(rows[:2] if rows.size > 1 else rows, np.zeros(min(2, rows.size), int), psi)
        ref_theta, ref_targ = dense_reference(theta0, lr_slot, 0.9, 0.05, updates)
        idx = rows[:2] if rows.size > 1 else rows
        assert np.allclose(live, ref_theta[idx] @ psi[0], atol=1e-10)
        assert np.allclose(targ, ref_targ[idx] @ psi[0], atol=1e-10)
        table.apply(rows, grads)
        updates.append((rows, grads))
    theta, targ = table.materialize()
    ref_theta, ref_targ = dense_reference(theta0, lr_slot, 0.9, 0.05, updates)
    assert np.allclose(theta, ref_theta, atol=1e-10)
    assert np.allclose(targ, ref_targ, atol=1e-10)


def test_catch_up_coefficients_match_loop():
    mu, tau, k = 0.9, 0.05, 13
    mk, bk, a_live, a_targ = catch_up_coefficients(k, mu, tau)
    # replay k gradient-free steps on a scalar with unit velocity
    w, v, wb = 0.0, 1.0, 0.0
    for _ in range(k):
        v *= mu
        w -= v
        wb = (1 - tau) * wb + tau * w
    assert mk == pytest.approx(mu ** k)
    assert bk == pytest.approx((1 - tau) ** k)
    assert -a_live == pytest.approx(w)
    assert a_targ == pytest.approx(wb)


def test_dense_momentum_step():
    opt = DenseMomentum(np.array([1.0]), 0.1, 0.5, 0.5)
    opt.apply(np.array([2.0]))
    opt.apply(np.array([2.0]))
    # v1=2, p1=0.8; v2=3, p2=0.5
    assert opt.param[0] == pytest.approx(0.5)
    assert opt.targ[0] == pytest.approx(0.5 * (0.5 * 1.0 + 0.5 * 0.8) + 0.5 * 0.5)


def test_table_validation():
    with pytest.raises(ContractViolation):
        LazyMomentumTable(np.zeros((2, 2, 2)), [0.1], 0.9, 0.1)
    with pytest.raises(ContractViolation):
        LazyMomentumTable(np.zeros((2, 1, 2)), [0.1], 1.0, 0.1)
