import csv

import numpy as np
import pytest

from recdir.dgp import (
    Ar2Params,
    TaskTheta,
    derive_seed,
    generate_task_data,
    is_stable,
    psi,
    sample_task,
    simulate_ar2,
)
from recdir.errors import ValidationError


@pytest.mark.parametrize("a,g,want", [(0, 0, True), (0.5, 0.6, False), (0.9, 0, True),
                                      (-0.5, 0.6, False), (0.0, -1.0, False), (1.2, -0.5, True)])
def test_is_stable(a, g, want):
    assert is_stable(a, g) is want


def test_noiseless_is_zero():
    s = simulate_ar2(Ar2Params(0.5, 0.2, 0.0, 0.0), 100, seed=1)
    assert not s.latent.any() and not s.observed.any()


def test_white_noise_variance():
    s = simulate_ar2(Ar2Params(0, 0, 1, 0), 100_000, seed=2)
    assert s.observed.var() == pytest.approx(1.0, rel=0.05)


def test_same_seed_same_series():
    p = Ar2Params(0.3, -0.2, 1, 0.5)
    a, b = simulate_ar2(p, 500, seed=9), simulate_ar2(p, 500, seed=9)
    np.testing.assert_array_equal(a.latent, b.latent)
    np.testing.assert_array_equal(a.observed, b.observed)
    c = simulate_ar2(p, 500, seed=10)
    assert not np.array_equal(a.observed, c.observed)


def test_unstable_rejected_unless_overridden():
    p = Ar2Params(0.5, 0.6)
    with pytest.raises(ValidationError):
        simulate_ar2(p, 10)
    assert simulate_ar2(p, 10, burn_in=0, allow_unstable=True).latent.shape == (10,)


def test_negative_noise_rejected():
    with pytest.raises(ValidationError):
        Ar2Params(0, 0, -1, 0)


def test_lag1_autocorrelation_matches_yule_walker():
    a, g, n = 0.5, 0.2, 100_000
    x = simulate_ar2(Ar2Params(a, g, 1, 0), n, seed=3).latent
    r1 = np.corrcoef(x[1:], x[:-1])[0, 1]
    rho = a / (1 - g)
    se = (1 - rho ** 2) / np.sqrt(n) * 3  # generous: AR dependence inflates the plain iid s.e.
    assert abs(r1 - rho) < 3 * se


def test_measurement_noise_independent_of_latent():
    s = simulate_ar2(Ar2Params(0.5, 0.2, 1, 1), 100_000, seed=4)
    v = s.observed - s.latent
    assert abs(np.corrcoef(v, s.latent)[0, 1]) < 0.02
    assert v.std() == pytest.approx(1.0, rel=0.02)


def test_series_csv(tmp_path):
    s = simulate_ar2(Ar2Params(0.5, 0.2, 1, 1), 5, seed=4)
    path = tmp_path / "s.csv"
    s.to_csv(path)
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["t", "x", "y"]
    assert float(rows[3][2]) == s.observed[2]


def test_derive_seed_independent_keys():
    assert derive_seed(0, 1, 2) == derive_seed(0, 1, 2)
    assert len({derive_seed(0, 1, k) for k in range(100)}) == 100
    assert derive_seed(0, 1) != derive_seed(1, 1)


# tasks -------------------------------------------------------------------------

def test_point_box():
    b = np.column_stack([np.arange(6.0), np.arange(6.0)])
    assert sample_task(b, 0).theta == tuple(np.arange(6.0))


def test_empty_interval_rejected():
    b = np.zeros((6, 2))
    b[2] = (1, 0)
    with pytest.raises(ValidationError):
        sample_task(b, 0)


def test_task_support_and_mean():
    b = np.column_stack([np.linspace(-3, 0, 6), np.linspace(-1, 4, 6)])
    draws = np.array([sample_task(b, s).theta for s in range(10_000)])
    assert np.all(draws >= b[:, 0]) and np.all(draws <= b[:, 1])
    se = (b[:, 1] - b[:, 0]) / np.sqrt(12 * len(draws))
    assert np.all(np.abs(draws.mean(axis=0) - b.mean(axis=1)) < 3 * se)


def test_task_theta_length():
    with pytest.raises(ValidationError):
        TaskTheta((1, 2, 3))


@pytest.mark.parametrize("theta,want", [((1, 0, 0, 0, 0, 0), 2.0), ((0,) * 6, 0.0), ((0, 0, 0, 0, 0, 1), 9.0)])
def test_task_targets(theta, want):
    th = TaskTheta(theta)
    assert psi([[2, 3]]) @ th.as_array() == pytest.approx([want])


def test_generate_task_data_shapes_and_noise():
    th = TaskTheta((0.5, -0.2, 0.1, 0.3, 0.0, 0.0))
    X, y = generate_task_data(th, 20_000, noise_std=0.1, seed=5)
    assert X.shape == (20_000, 2) and y.shape == (20_000,)
    resid = y - psi(X) @ th.as_array()
    assert resid.std() == pytest.approx(0.1, rel=0.03)
    X0, y0 = generate_task_data(TaskTheta((0,) * 6), 10, noise_std=0.0, seed=5)
    assert not y0.any()
