"""Synthetic data: latent AR(2) plus measurement noise, and bilinear-task sampling.

Randomness comes from numpy ``Generator(Philox)`` streams. ``derive_seed``
turns ``(base_seed, *keys)`` into an independent 64-bit seed via
``SeedSequence(base_seed, spawn_key=keys)``, so any cell or trial can be
regenerated without touching its neighbours.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .kernels import ar2_filter

DEFAULT_BURN_IN = 500

# task-space basis psi(y_t, y_{t-1}) as (lag-0 exponent, lag-1 exponent)
PSI_MONOMIALS = ((1, 0), (0, 1), (1, 1), (2, 0), (2, 1), (0, 2))


def derive_seed(base_seed: int, *keys: int) -> int:
    ss = np.random.SeedSequence(int(base_seed), spawn_key=tuple(int(k) for k in keys))
    return int(ss.generate_state(1, np.uint64)[0])


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed))))


@dataclass(frozen=True)
class Ar2Params:
    a: float
    gamma: float
    sigma_s: float = 1.0
    sigma_e: float = 0.0

    def __post_init__(self):
        if self.sigma_s < 0 or self.sigma_e < 0:
            raise ValidationError("noise standard deviations must be nonnegative")

    @property
    def stable(self) -> bool:
        return is_stable(self.a, self.gamma)


def is_stable(a: float, gamma: float) -> bool:
    """AR(2) stationarity triangle."""
    return (a + gamma < 1) and (gamma - a < 1) and (abs(gamma) < 1)


@dataclass(frozen=True)
class SeriesPair:
    latent: np.ndarray
    observed: np.ndarray
    seed: int
    params: Ar2Params

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "x", "y"])
            for t, (x, y) in enumerate(zip(self.latent, self.observed)):
                w.writerow([t, repr(float(x)), repr(float(y))])


def simulate_ar2(params: Ar2Params, n: int, burn_in: int = DEFAULT_BURN_IN, seed: int = 0,
                 allow_unstable: bool = False, backend=None) -> SeriesPair:
    """Simulate ``n`` observations of the noisy AR(2) model.

    The latent chain starts at zero and the first ``burn_in`` values are
    discarded. Process noise is drawn first (``n + burn_in`` values), then
    measurement noise (``n`` values), from the same seeded stream.
    """
    if n < 3:
        raise ValidationError("need n >= 3")
    if burn_in < 0:
        raise ValidationError("burn_in must be >= 0")
    if not allow_unstable and not params.stable:
        raise ValidationError(f"(a={params.a}, gamma={params.gamma}) is outside the stationarity region")
    rng = make_rng(seed)
    w = rng.standard_normal(n + burn_in) * params.sigma_s
    v = rng.standard_normal(n) * params.sigma_e
    x = ar2_filter(w, params.a, params.gamma, backend=backend)[burn_in:]
    return SeriesPair(latent=x, observed=x + v, seed=int(seed), params=params)


@dataclass(frozen=True)
class TaskTheta:
    """Coefficients on ``[y_t, y_{t-1}, y_t y_{t-1}, y_t^2, y_t^2 y_{t-1}, y_{t-1}^2]``."""

    theta: tuple

    def __post_init__(self):
        th = tuple(float(v) for v in self.theta)
        if len(th) != 6:
            raise ValidationError("task vector must have 6 coordinates")
        object.__setattr__(self, "theta", th)

    def as_array(self) -> np.ndarray:
        return np.array(self.theta)


def psi(pairs) -> np.ndarray:
    """Task basis on rows ``(y_t, y_{t-1})`` -> ``(n, 6)``."""
    P = np.atleast_2d(np.asarray(pairs, dtype=float))
    y0, y1 = P[:, 0], P[:, 1]
    return np.column_stack([y0, y1, y0 * y1, y0 * y0, y0 * y0 * y1, y1 * y1])


def sample_task(bounds, seed: int) -> TaskTheta:
    b = np.asarray(bounds, dtype=float)
    if b.shape != (6, 2):
        raise ValidationError("bounds must be six (low, high) intervals")
    if np.any(b[:, 0] > b[:, 1]):
        raise ValidationError("empty interval in task bounds")
    u = make_rng(seed).random(6)
    return TaskTheta(tuple(b[:, 0] + u * (b[:, 1] - b[:, 0])))


def generate_task_data(theta: TaskTheta, n_pairs: int, input_std: float = 1.0,
                       noise_std: float = 0.05, seed: int = 0):
    """Draw i.i.d. input pairs and two-step targets ``theta . psi + noise``.

    Returns ``(pairs, targets)`` with shapes ``(n, 2)`` and ``(n,)``.
    """
    if n_pairs < 1:
        raise ValidationError("n_pairs must be >= 1")
    rng = make_rng(seed)
    pairs = rng.standard_normal((n_pairs, 2)) * input_std
    noise = rng.standard_normal(n_pairs) * noise_std
    return pairs, psi(pairs) @ theta.as_array() + noise
