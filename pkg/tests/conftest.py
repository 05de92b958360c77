import numpy as np
import pytest
from hypothesis import settings

from sfb.envs import make_counterexample, make_grid_env, make_random_mdp
from sfb.mdp import TabularMdp

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")


def single_state_mdp(gamma=0.5, n_actions=2):
    return TabularMdp(np.ones((1, n_actions, 1)), np.ones(1), gamma)


def truncated_successor(mdp, probs, n_terms=400):
    """(1-g) sum_t g^t P_pi^t over pairs, built with explicit loops."""
    S, A = probs.shape
    n = S * A
    P = np.zeros((n, n))
    for s in range(S):
        for a in range(A):
            for t in range(S):
                for b in range(A):
                    P[s * A + a, t * A + b] = mdp.transition[s, a, t] * probs[t, b]
    g = mdp.discount
    out, term = np.zeros((n, n)), np.eye(n)
    for k in range(n_terms):
        out += (1 - g) * g**k * term
        term = term @ P
    return out


@pytest.fixture
def single_state():
    return single_state_mdp()


@pytest.fixture
def counterexample():
    return make_counterexample()


@pytest.fixture
def grid3():
    return make_grid_env(3)


@pytest.fixture
def random_mdp():
    return make_random_mdp(3, 2, 0.8, seed=11)


GRID_TRAIN_STEPS = 50_000
ACCEPTANCE_LINES: dict = {}


def train_grid_model(seed=0):
    """The 9x9 grid model used by the learned-regime acceptance criteria."""
    import time

    from sfb.dataset import collect_dataset
    from sfb.fb import FbModel, TrainConfig, train
    from sfb.mdp import StochasticPolicy

    env = make_grid_env(9)
    mdp = env.mdp
    t0 = time.perf_counter()
    ds = collect_dataset(mdp, StochasticPolicy.uniform(81, 81), 100_000, 4, seed=seed)
    model = FbModel.initialize(81, 81, 8, mdp.discount, ds.rho, seed=seed)
    model = train(model, ds, TrainConfig(n_steps=GRID_TRAIN_STEPS, seed=seed))
    return {"env": env, "dataset": ds, "model": model, "seconds": time.perf_counter() - t0}


@pytest.fixture(scope="session")
def grid_learned():
    return train_grid_model(0)


def record_acceptance(key, passed, detail):
    line = f"CRITERION {key}: {'PASS' if passed else 'FAIL'} - {detail}"
    ACCEPTANCE_LINES[key] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for key in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[key])
