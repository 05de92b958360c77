"""Training losses of the learned FB model with analytic gradients.

Targets (``target`` model and next-state policies) are held constant when
differentiating. Expectations over ``s' ~ rho`` and ``a' ~ pi_z(.|s_{t+1})``
are taken in closed form since both spaces are finite.
"""

from __future__ import annotations

import numpy as np

from ..dataset import TransitionBatch
from ..errors import ContractViolation
from .model import FbModel

POLICY_FLOOR = 1e-8


def fb_terms(F_cur, B, rho, next_states, f_next, B_target, gamma):
    """Bellman-residual FB loss on precomputed quantities.

    ``F_cur``: (b, d) forward vectors at ``(s_t, a_t, z)``; ``f_next``: (b, d)
    target forward vectors averaged over ``a' ~ pi_z(.|s_{t+1})``.
    Returns ``(loss, dL/dF_cur, dL/dB)``.
    """
    b = F_cur.shape[0]
    pred = F_cur @ B
    resid = pred - gamma * (f_next @ B_target)
    weighted = resid * rho
    B_next = B[:, next_states]
    loss = float(np.sum(weighted * resid) - 2.0 * np.einsum("bd,db->", F_cur, B_next)) / b
    gF = (2.0 * weighted @ B.T - 2.0 * B_next.T) / b
    gB = 2.0 * F_cur.T @ weighted / b
    np.add.at(gB.T, next_states, -2.0 * F_cur / b)
    return loss, gF, gB


def ortho_terms(B, rho):
    d = B.shape[0]
    C = (B * rho) @ B.T - np.eye(d)
    return float(np.sum(C * C)), 4.0 * (C @ B) * rho


def critic_terms(h_cur, pi_next, h_next, gamma, floor=POLICY_FLOOR):
    """Entropy-critic TD loss; returns ``(loss, dL/dh_cur)``."""
    b = h_cur.shape[0]
    log_pi = np.log(np.maximum(pi_next, floor))
    y = gamma * np.sum(pi_next * (h_next - log_pi), axis=1)
    diff = h_cur - y
    return float(np.sum(diff * diff)) / b, 2.0 * diff / b


def _prepare(model: FbModel, batch: TransitionBatch, z_batch):
    if len(batch) == 0:
        raise ContractViolation("batch is empty")
    z = np.asarray(z_batch, dtype=float)
    if z.shape != (len(batch), model.dim):
        raise ContractViolation(f"z_batch must have shape ({len(batch)}, {model.dim}), got {z.shape}")
    return z, model.features(z)


def next_policies(model: FbModel, batch: TransitionBatch, z, mode: str = "soft") -> np.ndarray:
    """``pi_z(.|s_{t+1})`` for every batch item as a (b, A) array."""
    return np.stack([model.policy(zi, mode, states=[s]).probs[0]
                     for zi, s in zip(z, batch.next_states)])


def fb_loss(model: FbModel, batch: TransitionBatch, z_batch, target: FbModel | None = None,
            next_policy=None, mode: str = "soft"):
    """Bellman-residual loss on ``F^T B`` and its gradients for ``W`` and ``B``.

    ``E_{s' ~ rho}[(F^T B(s') - gamma Fbar'^T Bbar(s'))^2] - 2 F^T B(s_{t+1})``,
    averaged over the batch. ``target`` defaults to ``model`` itself.
    """
    z, psi = _prepare(model, batch, z_batch)
    target = model if target is None else target
    pi = next_policies(model, batch, z, mode) if next_policy is None else np.asarray(next_policy)
    W = model.forward_weights
    F_cur = np.einsum("bdk,bk->bd", W[batch.states, batch.actions], psi)
    F_next = np.einsum("badk,bk->bad", target.forward_weights[batch.next_states], psi)
    f_next = np.einsum("ba,bad->bd", pi, F_next)
    loss, gF, gB = fb_terms(F_cur, model.backward, model.rho, batch.next_states, f_next,
                            target.backward, model.discount)
    gW = np.zeros_like(W)
    np.add.at(gW, (batch.states, batch.actions), gF[:, :, None] * psi[:, None, :])
    return loss, {"forward_weights": gW, "backward": gB}


def ortho_loss(model: FbModel):
    """``||E_rho[B(s) B(s)^T] - I||_F^2`` and its gradient in ``B``."""
    loss, gB = ortho_terms(model.backward, model.rho)
    return loss, {"backward": gB}


def entropy_critic_loss(model: FbModel, batch: TransitionBatch, z_batch,
                        target: FbModel | None = None, next_policy=None, mode: str = "soft",
                        floor: float = POLICY_FLOOR):
    """TD loss ``(Q_H - gamma E_{a'}[Qbar_H(s', a') - log pi_z(a'|s')])^2``."""
    z, psi = _prepare(model, batch, z_batch)
    target = model if target is None else target
    pi = next_policies(model, batch, z, mode) if next_policy is None else np.asarray(next_policy)
    H = model.critic_weights
    h_cur = np.einsum("bk,bk->b", H[batch.states, batch.actions], psi)
    h_next = np.einsum("bak,bk->ba", target.critic_weights[batch.next_states], psi)
    loss, gh = critic_terms(h_cur, pi, h_next, model.discount, floor)
    gH = np.zeros_like(H)
    np.add.at(gH, (batch.states, batch.actions), gh[:, None] * psi)
    return loss, {"critic_weights": gH}
