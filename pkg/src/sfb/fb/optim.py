"""Momentum SGD with Polyak-averaged targets for large row-sparse tables.

Rows of a table only receive gradients when they appear in a batch, yet
momentum and the target average keep evolving every step. Each row stores
its state as of the last step it was touched; the state at any later step
follows in closed form (see ``catch_up_coefficients``), so untouched rows
cost nothing and reads/updates are exact.
"""

from __future__ import annotations

import numpy as np
from numba import njit

from ..errors import ContractViolation


@njit(cache=True)
def catch_up_coefficients(k, mu, tau):
    """Coefficients advancing a row by ``k`` gradient-free steps.

    With ``v_k = mu^k v``, the parameters and target become
    ``W_k = W - lr * a_live * v`` and
    ``Wbar_k = beta^k Wbar + (1 - beta^k) W + lr * a_targ * v``
    where ``beta = 1 - tau``.
    """
    beta = 1.0 - tau
    mk = mu ** k
    bk = beta ** k
    if abs(beta - mu) > 1e-15:
        s_k = mu * (bk - mk) / (beta - mu)
    else:
        s_k = k * mk
    c = mu / (1.0 - mu)
    return mk, bk, c * (1.0 - mk), c * (tau * s_k - (1.0 - bk))


@njit(cache=True, fastmath=True)
def _dot(a, b):
    # accumulate in the storage precision so the loop vectorizes
    acc = a[0] * b[0]
    for f in range(1, a.shape[0]):
        acc += a[f] * b[f]
    return acc


@njit(cache=True)
def gather_rows(theta, vel, targ, last, t_prev, rows, items, psi, mu, tau, lr_slot,
                out_live, out_targ):
    """Contract live and target rows (as of step ``t_prev``) with ``psi[items]``.

    Both contractions are linear in the stored ``(theta, vel, targ)``, so three
    dot products per slot suffice.
    """
    n_slots = theta.shape[1]
    for j in range(rows.shape[0]):
        r = rows[j]
        x = psi[items[j]]
        k = t_prev - last[r]
        if k == 0:
            for p in range(n_slots):
                out_live[j, p] = _dot(theta[r, p], x)
                out_targ[j, p] = _dot(targ[r, p], x)
        else:
            mk, bk, a_live, a_targ = catch_up_coefficients(k, mu, tau)
            for p in range(n_slots):
                lr = lr_slot[p]
                w = _dot(theta[r, p], x)
                v = _dot(vel[r, p], x)
                out_live[j, p] = w - lr * a_live * v
                out_targ[j, p] = bk * _dot(targ[r, p], x) + (1.0 - bk) * w + lr * a_targ * v


@njit(cache=True)
def _advance(theta, vel, targ, last, r, t_to, mu, tau, lr_slot):
    k = t_to - last[r]
    if k <= 0:
        return
    mk, bk, a_live, a_targ = catch_up_coefficients(k, mu, tau)
    for p in range(theta.shape[1]):
        lr = lr_slot[p]
        for f in range(theta.shape[2]):
            w = theta[r, p, f]
            v = vel[r, p, f]
            theta[r, p, f] = w - lr * a_live * v
            targ[r, p, f] = bk * targ[r, p, f] + (1.0 - bk) * w + lr * a_targ * v
            vel[r, p, f] = mk * v
    last[r] = t_to


@njit(cache=True)
def apply_row_gradients(theta, vel, targ, last, t, rows, grads, mu, tau, lr_slot):
    """Momentum step ``t`` for the given (unique) rows, then the Polyak update."""
    beta = 1.0 - tau
    for j in range(rows.shape[0]):
        r = rows[j]
        _advance(theta, vel, targ, last, r, t - 1, mu, tau, lr_slot)
        for p in range(theta.shape[1]):
            lr = lr_slot[p]
            for f in range(theta.shape[2]):
                v = mu * vel[r, p, f] + grads[j, p, f]
                vel[r, p, f] = v
                w = theta[r, p, f] - lr * v
                theta[r, p, f] = w
                targ[r, p, f] = beta * targ[r, p, f] + tau * w
        last[r] = t


@njit(cache=True)
def advance_all(theta, vel, targ, last, t_to, mu, tau, lr_slot):
    for r in range(theta.shape[0]):
        _advance(theta, vel, targ, last, r, t_to, mu, tau, lr_slot)


class LazyMomentumTable:
    """Row table ``theta[row, slot, feature]`` trained by momentum SGD.

    ``lr_slot`` gives one learning rate per slot so that heterogeneous
    parameter groups can share rows.
    """

    def __init__(self, theta: np.ndarray, lr_slot, momentum: float, polyak: float,
                 dtype=np.float64):
        if not 0.0 <= momentum < 1.0:
            raise ContractViolation("momentum must lie in [0, 1)")
        if not 0.0 < polyak <= 1.0:
            raise ContractViolation("polyak coefficient must lie in (0, 1]")
        self.theta = np.array(theta, dtype=dtype, order="C")
        self.vel = np.zeros_like(self.theta)
        self.targ = self.theta.copy()
        self.last = np.zeros(self.theta.shape[0], dtype=np.int64)
        self.lr_slot = np.ascontiguousarray(lr_slot, dtype=float)
        if self.lr_slot.shape != (self.theta.shape[1],):
            raise ContractViolation("lr_slot needs one entry per slot")
        self.momentum = float(momentum)
        self.polyak = float(polyak)
        self.step = 0

    def gather(self, rows, items, psi):
        """Live and target contractions ``(n, slots)`` as of the current step."""
        rows = np.ascontiguousarray(rows, dtype=np.int64)
        items = np.ascontiguousarray(items, dtype=np.int64)
        live = np.empty((rows.size, self.theta.shape[1]))
        targ = np.empty_like(live)
        psi = np.ascontiguousarray(psi, dtype=self.theta.dtype)
        gather_rows(self.theta, self.vel, self.targ, self.last, self.step, rows, items,
                    psi, self.momentum, self.polyak, self.lr_slot, live, targ)
        return live, targ

    def apply(self, rows, grads):
        """Advance one step; ``rows`` must be unique, ``grads`` is ``(n, slots, features)``."""
        self.step += 1
        apply_row_gradients(self.theta, self.vel, self.targ, self.last, self.step,
                            np.ascontiguousarray(rows, dtype=np.int64),
                            np.ascontiguousarray(grads, dtype=self.theta.dtype),
                            self.momentum, self.polyak, self.lr_slot)

    def skip(self):
        """Advance one step with no gradient for any row."""
        self.step += 1

    def materialize(self):
        """Bring every row up to date and return ``(theta, target)``."""
        advance_all(self.theta, self.vel, self.targ, self.last, self.step,
                    self.momentum, self.polyak, self.lr_slot)
        return self.theta, self.targ


class DenseMomentum:
    """Momentum SGD plus Polyak target for a small dense parameter."""

    def __init__(self, param: np.ndarray, lr: float, momentum: float, polyak: float):
        self.param = np.array(param, dtype=float)
        self.vel = np.zeros_like(self.param)
        self.targ = self.param.copy()
        self.lr, self.momentum, self.polyak = float(lr), float(momentum), float(polyak)

    def apply(self, grad: np.ndarray):
        self.vel *= self.momentum
        self.vel += grad
        self.param -= self.lr * self.vel
        self.targ *= 1.0 - self.polyak
        self.targ += self.polyak * self.param
