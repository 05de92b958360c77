import numpy as np
import pytest

from sfb.errors import ContractViolation
from sfb.knn import knn_entropy, knn_kl, log_unit_ball_volume


def test_unit_ball_volume():
    assert np.exp(log_unit_ball_volume(2)) == pytest.approx(np.pi)
    assert np.exp(log_unit_ball_volume(3)) == pytest.approx(4 / 3 * np.pi)


def test_uniform_square_entropy_is_zero():
    est = [knn_entropy(np.random.default_rng(s).random((4096, 2))) for s in range(10)]
    assert abs(np.mean(est)) <= 0.1
    assert max(abs(e) for e in est) <= 0.1


def test_gaussian_entropy():
    x = np.random.default_rng(0).normal(scale=2.0, size=(5000, 2))
    truth = np.log(2 * np.pi * np.e * 4.0)
    assert knn_entropy(x) == pytest.approx(truth, abs=0.1)


def test_kl_same_distribution_near_zero():
    est = [knn_kl(np.random.default_rng(s).random((4096, 2)), np.random.default_rng(100 + s).random((4096, 2)))
           for s in range(10)]
    assert max(abs(e) for e in est) <= 0.15


def test_kl_between_gaussians():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(5000, 1))
    y = rng.normal(loc=1.0, size=(5000, 1))
    assert knn_kl(x, y) == pytest.approx(0.5, abs=0.1)


def test_validation():
    with pytest.raises(ContractViolation):
        knn_entropy(np.zeros((3, 2)))
    with pytest.raises(ContractViolation):
        knn_entropy(np.zeros((10, 2)))
    with pytest.raises(ContractViolation):
        knn_kl(np.random.random((10, 2)), np.random.random((10, 3)))
