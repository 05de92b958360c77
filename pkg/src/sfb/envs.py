"""Built-in environments."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractViolation
from .mdp import TabularMdp


@dataclass(frozen=True, eq=False)
class Environment:
    """A tabular MDP plus optional cell geometry.

    When ``coords`` is set, state ``s`` is the square cell of side
    ``cell_width`` centred at ``coords[s]``; sample-based evaluators lift
    states to points inside their cell.
    """

    name: str
    mdp: TabularMdp
    coords: np.ndarray | None = None
    cell_width: float | None = None
    action_coords: np.ndarray | None = None
    metadata: dict = field(default_factory=dict)

    @property
    def has_coords(self) -> bool:
        return self.coords is not None

    @property
    def log_cell_volume(self) -> float:
        """Log-area of one cell (0 without geometry)."""
        if self.coords is None:
            return 0.0
        return float(self.coords.shape[1] * np.log(self.cell_width))


@dataclass(frozen=True, eq=False)
class GridDidacticEnv(Environment):
    grid_side: int = 9

    @property
    def center(self) -> int:
        return (self.grid_side * self.grid_side) // 2

    def cell_at(self, x: float, y: float) -> int:
        """Index of the cell containing the point (clipped to the grid)."""
        w = self.cell_width
        col = int(np.clip(np.floor((x + 1.0) / w), 0, self.grid_side - 1))
        row = int(np.clip(np.floor((y + 1.0) / w), 0, self.grid_side - 1))
        return row * self.grid_side + col


@dataclass(frozen=True, eq=False)
class CounterexampleEnv(Environment):
    @property
    def C(self) -> float:
        """Off-diagonal constant ``(1 - gamma) * gamma`` of the nominal closed form."""
        g = self.mdp.discount
        return (1.0 - g) * g


def grid_coords(grid_side: int) -> np.ndarray:
    w = 2.0 / grid_side
    centers = -1.0 + (np.arange(grid_side) + 0.5) * w
    xs, ys = np.meshgrid(centers, centers)  # row index follows y
    return np.stack([xs.ravel(), ys.ravel()], axis=1)


def make_grid_env(grid_side: int = 9, gamma: float = 0.5) -> GridDidacticEnv:
    """Discretized bandit-like grid: the first action picks the cell to stay in forever.

    States and actions are both the ``grid_side**2`` cells of ``[-1, 1]^2``.
    From the centre cell, action ``a`` moves deterministically to cell ``a``;
    every other cell is absorbing.
    """
    if grid_side < 3 or grid_side % 2 == 0:
        raise ContractViolation(f"grid_side must be odd and >= 3, got {grid_side}")
    n = grid_side * grid_side
    center = n // 2
    P = np.zeros((n, n, n))
    P[np.arange(n), :, np.arange(n)] = 1.0
    P[center] = np.eye(n)
    mu0 = np.zeros(n)
    mu0[center] = 1.0
    coords = grid_coords(grid_side)
    return GridDidacticEnv(
        name=f"grid{grid_side}",
        mdp=TabularMdp(P, mu0, gamma),
        coords=coords,
        cell_width=2.0 / grid_side,
        action_coords=coords,
        metadata={"goal_indicator": "euclidean norm < 0.2"},
        grid_side=grid_side,
    )


def make_counterexample(gamma: float = 0.5) -> CounterexampleEnv:
    """Single state, two actions; both actions self-loop."""
    P = np.ones((1, 2, 1))
    return CounterexampleEnv(name="counterexample", mdp=TabularMdp(P, np.ones(1), gamma))


def make_random_mdp(n_states: int, n_actions: int, gamma: float, seed: int) -> TabularMdp:
    """Random MDP with Dirichlet(1) transition rows and initial distribution."""
    if n_states < 1 or n_actions < 1:
        raise ContractViolation("n_states and n_actions must be positive")
    rng = np.random.default_rng(seed)
    P = rng.dirichlet(np.ones(n_states), size=(n_states, n_actions))
    P /= P.sum(axis=2, keepdims=True)
    mu0 = rng.dirichlet(np.ones(n_states))
    mu0 /= mu0.sum()
    return TabularMdp(P, mu0, gamma)


def make_env(name: str) -> Environment:
    """Resolve ``counterexample``, ``grid<side>`` or ``random:<seed>[:S:A[:gamma]]``."""
    if name == "counterexample":
        return make_counterexample()
    if name.startswith("grid"):
        try:
            side = int(name[4:])
        except ValueError:
            raise ContractViolation(f"unknown environment {name!r}") from None
        return make_grid_env(side)
    if name.startswith("random:"):
        parts = name.split(":")[1:]
        try:
            seed = int(parts[0])
            n_s = int(parts[1]) if len(parts) > 1 else 4
            n_a = int(parts[2]) if len(parts) > 2 else 3
            gamma = float(parts[3]) if len(parts) > 3 else 0.9
        except (IndexError, ValueError):
            raise ContractViolation(f"malformed random environment {name!r}") from None
        return Environment(name=name, mdp=make_random_mdp(n_s, n_a, gamma, seed))
    raise ContractViolation(f"unknown environment {name!r}")
