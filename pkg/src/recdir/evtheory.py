"""Closed-form aleatoric floors and Jacobian-propagated estimation variance."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dgp import Ar2Params
from .errors import DegenerateError, ValidationError
from .estimate import MomentMatrix, ParamCov


def _sym(m) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    return 0.5 * (m + m.T)


def _mat(x) -> np.ndarray:
    if isinstance(x, ParamCov):
        return _sym(x.sigma)
    if isinstance(x, MomentMatrix):
        return _sym(x.m)
    return _sym(x)


def aleatoric_floor(params: Ar2Params, h: int) -> float:
    """Oracle MSE of the true composed AR(2) coefficients applied to noisy y.

    h=1: ``s^2 + (1 + a^2 + g^2) e^2``
    h=2: ``(1 + a^2) s^2 + (1 + (a^2 + g)^2 + (a g)^2) e^2``
    """
    a, g = params.a, params.gamma
    s2, e2 = params.sigma_s ** 2, params.sigma_e ** 2
    if h == 1:
        return s2 + (1.0 + a * a + g * g) * e2
    if h == 2:
        return (1.0 + a * a) * s2 + (1.0 + (a * a + g) ** 2 + (a * g) ** 2) * e2
    raise ValidationError(f"closed-form floor only available for h in (1, 2), got {h}")


@dataclass(frozen=True)
class AleatoricFloors:
    sigma2_eps1: float
    sigma2_eps2: float
    params: Ar2Params

    @classmethod
    def of(cls, params: Ar2Params) -> "AleatoricFloors":
        return cls(aleatoric_floor(params, 1), aleatoric_floor(params, 2), params)

    @property
    def delta(self) -> float:
        """``sigma2_eps2 - sigma2_eps1``; positive means the one-step task is the quieter one."""
        return self.sigma2_eps2 - self.sigma2_eps1


def ev_recursive(j, sigma_theta, q_tilde) -> float:
    """``tr(J Sigma J^T Q~)``."""
    J = np.atleast_2d(np.asarray(j, dtype=float))
    S = _mat(sigma_theta)
    Qt = _mat(q_tilde)
    if J.shape[1] != S.shape[0] or J.shape[0] != Qt.shape[0]:
        raise ValidationError(f"shape mismatch: J {J.shape}, Sigma {S.shape}, Q~ {Qt.shape}")
    return float(np.sum((J @ S @ J.T) * Qt))


def ev_direct(sigma_theta_h, q) -> float:
    """``tr(Sigma_h Q)``; also the one-step baseline when given the one-step covariance."""
    S = _mat(sigma_theta_h)
    Q = _mat(q)
    if S.shape != Q.shape:
        raise ValidationError(f"shape mismatch: Sigma {S.shape}, Q {Q.shape}")
    return float(np.sum(S * Q))


def amplification(j, sigma_theta, q_tilde, q) -> float:
    base = ev_direct(sigma_theta, q)
    if base <= 0:
        raise DegenerateError("one-step estimation variance is zero; amplification undefined")
    return ev_recursive(j, sigma_theta, q_tilde) / base


def ev_delta(ev_rec: float, ev_dir: float) -> float:
    return float(ev_rec) - float(ev_dir)


@dataclass(frozen=True)
class EvReport:
    ev_rec: float
    ev_dir: float
    ev_one_step: float
    t_h: float
    delta_ev: float
    horizon: int

    @classmethod
    def build(cls, j, sigma_theta, sigma_theta_h, q_tilde, q, horizon: int) -> "EvReport":
        rec = ev_recursive(j, sigma_theta, q_tilde)
        one = ev_direct(sigma_theta, q)
        dr = ev_direct(sigma_theta_h, q)
        t_h = rec / one if one > 0 else float("nan")
        return cls(rec, dr, one, t_h, ev_delta(rec, dr), int(horizon))
