"""Named objectives for the built-in environments and objective spec files."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .envs import CounterexampleEnv, Environment, GridDidacticEnv
from .errors import ContractViolation
from .measures import MeasureEstimate, sample_measure
from .mdp import StochasticPolicy, successor_measure
from .utilities import UtilityObjective

GOAL = (0.0, 0.5)
GOAL_RADIUS = 0.2
EXPERT_SAMPLES = 4096
EXPERT_SEED = 0


def goal_indicator(env: GridDidacticEnv, goal=GOAL, radius: float = GOAL_RADIUS) -> np.ndarray:
    """1 on cells whose centre lies within Euclidean distance ``radius`` of ``goal``."""
    return (np.linalg.norm(env.coords - np.asarray(goal), axis=1) < radius).astype(float)


def ring_reward(env: GridDidacticEnv) -> np.ndarray:
    r2 = np.sum(env.coords ** 2, axis=1)
    return -(r2 - 1.0)


def line_expert(env: GridDidacticEnv) -> np.ndarray:
    """Uniform over cells with ``|x| <= 0.5`` on the row containing ``y = 0``."""
    x, y = env.coords[:, 0], env.coords[:, 1]
    on_line = (np.abs(x) <= 0.5) & np.isclose(y, env.coords[env.center, 1])
    return on_line / on_line.sum()


def goal_expert(env: GridDidacticEnv, goal=GOAL) -> np.ndarray:
    """Occupancy of the expert that moves from the start to the cell containing ``goal``."""
    target = env.cell_at(*goal)
    actions = np.full(env.mdp.n_states, target)
    policy = StochasticPolicy.deterministic(actions, env.mdp.n_actions)
    return successor_measure(env.mdp, policy, with_matrix=False).state_marginal


def _expert_samples(env: Environment, expert: np.ndarray) -> np.ndarray:
    # a single dummy action makes the pair marginal equal the state marginal
    est = MeasureEstimate("exact", expert, expert, 1, coords=env.coords, cell_width=env.cell_width)
    return sample_measure(est, EXPERT_SAMPLES, EXPERT_SEED).coords


def grid_objectives(env: GridDidacticEnv) -> dict[str, UtilityObjective]:
    g = goal_indicator(env)
    vol = env.log_cell_volume
    det, stoch = goal_expert(env), line_expert(env)
    meta = {"goal_indicator": "euclidean norm < 0.2"}
    return {
        "linear": UtilityObjective("linear", reward=ring_reward(env), name="linear"),
        "goal": UtilityObjective("goal", reward=g, name="goal", metadata=meta),
        "det_il": UtilityObjective("kl_to_expert", expert=det, expert_samples=_expert_samples(env, det),
                                   name="det_il",
                                   metadata={"expert": "occupancy of the start-to-goal policy"}),
        "stoch_il": UtilityObjective("kl_to_expert", expert=stoch,
                                     expert_samples=_expert_samples(env, stoch), name="stoch_il"),
        "pure_exploration": UtilityObjective("entropy", log_volume=vol, name="pure_exploration"),
        "robust": UtilityObjective("robust_min", rewards=(g, 1.0 - g), name="robust", metadata=meta),
        "constrained": UtilityObjective("constrained", reward=g, threshold=0.9, name="constrained",
                                        metadata=meta),
    }


def pair_objectives(env: Environment) -> dict[str, UtilityObjective]:
    """Objectives over state-action pairs for environments without geometry."""
    n = env.mdp.n_pairs
    onehots = tuple(np.eye(n)[i] for i in range(min(n, 2)))
    out = {
        "pure_exploration": UtilityObjective("entropy", support="state_action", name="pure_exploration"),
        "robust": UtilityObjective("robust_min", support="state_action", rewards=onehots, name="robust"),
    }
    if isinstance(env, CounterexampleEnv):
        out["linear"] = UtilityObjective("linear", support="state_action", reward=np.array([2.0, 1.0]),
                                         name="linear")
    return out


def env_objectives(env: Environment) -> dict[str, UtilityObjective]:
    if isinstance(env, GridDidacticEnv):
        return grid_objectives(env)
    return pair_objectives(env)


def objective_from_spec(spec, env: Environment) -> UtilityObjective:
    """Build an objective from a name known to ``env`` or a JSON-compatible dict.

    Dict keys mirror :class:`UtilityObjective` fields; ``reward``/``rewards``
    and ``expert`` may be inline arrays or names (``goal``, ``ring``,
    ``line``, ``goal_expert``) resolved on grid environments.
    """
    named = env_objectives(env)
    if isinstance(spec, str):
        if spec in named:
            return named[spec]
        raise ContractViolation(f"unknown objective {spec!r} for {env.name}; known: {sorted(named)}")
    if "name" in spec and len(spec) == 1:
        return objective_from_spec(spec["name"], env)
    spec = dict(spec)

    def vector(value):
        if isinstance(value, str):
            if not isinstance(env, GridDidacticEnv):
                raise ContractViolation(f"named vector {value!r} requires a grid environment")
            table = {"goal": goal_indicator, "ring": ring_reward, "line": line_expert,
                     "goal_expert": goal_expert}
            if value not in table:
                raise ContractViolation(f"unknown named vector {value!r}")
            return table[value](env)
        return np.asarray(value, dtype=float)

    for key in ("reward", "expert"):
        if key in spec:
            spec[key] = vector(spec[key])
    if "rewards" in spec:
        spec["rewards"] = tuple(vector(r) for r in spec["rewards"])
    if spec.get("kind") == "entropy" and spec.get("support", "state") == "state":
        spec.setdefault("log_volume", env.log_cell_volume)
    if spec.get("kind") == "kl_to_expert" and env.has_coords and spec.get("support", "state") == "state":
        spec.setdefault("expert_samples", _expert_samples(env, spec["expert"]))
    return UtilityObjective(**spec)


def load_objective(path, env: Environment) -> UtilityObjective:
    return objective_from_spec(json.loads(Path(path).read_text()), env)
