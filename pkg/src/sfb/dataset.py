"""Offline transition datasets."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ContractViolation
from .mdp import TabularMdp, as_probs


@dataclass(frozen=True, eq=False)
class TransitionBatch:
    states: np.ndarray
    actions: np.ndarray
    next_states: np.ndarray

    def __post_init__(self):
        arrays = [np.asarray(x, dtype=np.int64).ravel() for x in
                  (self.states, self.actions, self.next_states)]
        if len({a.size for a in arrays}) != 1:
            raise ContractViolation("batch columns must have equal length")
        if arrays[0].size == 0:
            raise ContractViolation("batch is empty")
        for name, arr in zip(("states", "actions", "next_states"), arrays):
            object.__setattr__(self, name, arr)

    def __len__(self) -> int:
        return self.states.size


@dataclass(frozen=True, eq=False)
class TransitionDataset:
    """``(s, a, s')`` triplets with the state distribution ``rho``.

    ``rho`` is the empirical distribution of all state occurrences, pooling
    both ``s`` and ``s'`` columns.
    """

    states: np.ndarray
    actions: np.ndarray
    next_states: np.ndarray
    n_states: int
    n_actions: int
    source_seed: int | None = None
    env_id: str = ""

    def __post_init__(self):
        batch = TransitionBatch(self.states, self.actions, self.next_states)
        for name in ("states", "actions", "next_states"):
            arr = getattr(batch, name)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        S, A = self.n_states, self.n_actions
        if (self.states.min() < 0 or self.next_states.min() < 0 or self.actions.min() < 0
                or self.states.max() >= S or self.next_states.max() >= S or self.actions.max() >= A):
            raise ContractViolation("dataset index out of MDP bounds")
        counts = np.bincount(self.states, minlength=S) + np.bincount(self.next_states, minlength=S)
        rho = counts / counts.sum()
        rho.setflags(write=False)
        object.__setattr__(self, "rho", rho)

    @property
    def empirical_state_dist(self) -> np.ndarray:
        return self.rho

    def __len__(self) -> int:
        return self.states.size

    def batch(self, index) -> TransitionBatch:
        return TransitionBatch(self.states[index], self.actions[index], self.next_states[index])

    def pair_counts(self) -> np.ndarray:
        """Counts ``N[s, a, s']`` of observed transitions."""
        S, A = self.n_states, self.n_actions
        flat = (self.states * A + self.actions) * S + self.next_states
        return np.bincount(flat, minlength=S * A * S).reshape(S, A, S).astype(float)


def collect_dataset(mdp: TabularMdp, behavior, n_steps: int, episode_len: int, seed: int,
                    env_id: str = "") -> TransitionDataset:
    """Roll out ``behavior`` in episodes of ``episode_len`` steps, restarting from mu0."""
    if n_steps < 1:
        raise ContractViolation("n_steps must be at least 1")
    if episode_len < 1:
        raise ContractViolation("episode_len must be at least 1")
    probs = as_probs(behavior)
    if probs.shape != (mdp.n_states, mdp.n_actions):
        raise ContractViolation("behavior policy does not match the MDP")
    rng = np.random.default_rng(seed)
    pi_cdf = np.cumsum(probs, axis=1)
    p_cdf = np.cumsum(mdp.transition, axis=2)
    mu_cdf = np.cumsum(mdp.initial_dist)
    states = np.empty(n_steps, dtype=np.int64)
    actions = np.empty(n_steps, dtype=np.int64)
    nexts = np.empty(n_steps, dtype=np.int64)
    u = rng.random((n_steps, 3))

    def draw(cdf, x):
        return min(int(np.searchsorted(cdf, x * cdf[-1], side="right")), cdf.size - 1)

    s = 0
    for t in range(n_steps):
        if t % episode_len == 0:
            s = draw(mu_cdf, u[t, 0])
        a = draw(pi_cdf[s], u[t, 1])
        s_next = draw(p_cdf[s, a], u[t, 2])
        states[t], actions[t], nexts[t] = s, a, s_next
        s = s_next
    return TransitionDataset(states, actions, nexts, mdp.n_states, mdp.n_actions,
                             source_seed=seed, env_id=env_id)


def save_dataset(dataset: TransitionDataset, path) -> None:
    lines = [
        f"# env={dataset.env_id}",
        f"# seed={dataset.source_seed}",
        f"# n_steps={len(dataset)}",
        f"# n_states={dataset.n_states}",
        f"# n_actions={dataset.n_actions}",
        "s,a,s_next",
    ]
    body = np.stack([dataset.states, dataset.actions, dataset.next_states], axis=1)
    lines.extend(f"{s},{a},{n}" for s, a, n in body.tolist())
    Path(path).write_text("\n".join(lines) + "\n")


def load_dataset(path) -> TransitionDataset:
    meta = {}
    rows = []
    for line in Path(path).read_text().splitlines():
        if line.startswith("#"):
            key, _, value = line[1:].strip().partition("=")
            meta[key] = value
        elif line and line != "s,a,s_next":
            rows.append([int(x) for x in line.split(",")])
    if "n_states" not in meta or "n_actions" not in meta:
        raise ContractViolation(f"{path}: missing n_states/n_actions header")
    body = np.array(rows, dtype=np.int64).reshape(-1, 3)
    if "n_steps" in meta and int(meta["n_steps"]) != len(body):
        raise ContractViolation(f"{path}: header declares {meta['n_steps']} rows, found {len(body)}")
    seed = meta.get("seed", "None")
    return TransitionDataset(body[:, 0], body[:, 1], body[:, 2], int(meta["n_states"]),
                             int(meta["n_actions"]), source_seed=None if seed == "None" else int(seed),
                             env_id=meta.get("env", ""))
