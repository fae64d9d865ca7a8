"""Lagged design matrices, intercept-free OLS, second moments and parameter covariances."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import SingularFitError, ValidationError
from .polypred import CompositionResult, monomial_features

RCOND_MIN = 1e-12


@dataclass(frozen=True)
class DesignMatrix:
    rows: np.ndarray  # (n, p), newest lag first
    targets: np.ndarray  # (n,)
    p: int
    h: int


def lag_windows(series, p: int, h: int = 1) -> np.ndarray:
    """Rows ``(y_{p-1+i}, ..., y_i)`` for every i that still has a target h steps on."""
    y = np.asarray(series, dtype=float)
    n_rows = y.shape[0] - p - h + 1
    if n_rows < 1:
        raise ValidationError(f"series of length {y.shape[0]} too short for p={p}, h={h}")
    return np.column_stack([y[p - 1 - k: p - 1 - k + n_rows] for k in range(p)])


def build_design(series, p: int, h: int) -> DesignMatrix:
    if p < 1 or h < 1:
        raise ValidationError("p and h must be >= 1")
    y = np.asarray(series, dtype=float)
    rows = lag_windows(y, p, h)
    targets = y[p - 1 + h: p - 1 + h + rows.shape[0]]
    return DesignMatrix(rows=rows, targets=targets.copy(), p=p, h=h)


def ols_solve(X, y) -> np.ndarray:
    """Least squares through a reduced QR of ``X``; raises on rank deficiency."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or X.shape[0] < X.shape[1]:
        raise ValidationError(f"need at least as many rows as columns, got {X.shape}")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise ValidationError("non-finite entries in regression data")
    Q, R = np.linalg.qr(X)
    sv = np.linalg.svd(R, compute_uv=False)
    rcond = sv[-1] / sv[0] if sv[0] > 0 else 0.0
    if rcond < RCOND_MIN:
        raise SingularFitError(f"design is numerically rank deficient (rcond={rcond:.3g})", rcond=rcond)
    return np.linalg.solve(R, Q.T @ y)


def ols_fit(design: DesignMatrix) -> np.ndarray:
    if design.rows.shape[0] < design.p:
        raise ValidationError("fewer rows than parameters")
    return ols_solve(design.rows, design.targets)


def residual_variance(design: DesignMatrix, coef) -> float:
    r = design.targets - design.rows @ np.asarray(coef)
    return float(r @ r / r.shape[0])


@dataclass(frozen=True)
class MomentMatrix:
    m: np.ndarray
    kind: str = "base"  # "base" (Q) or "composed" (Q tilde)


def second_moment(features, kind: str = "base") -> MomentMatrix:
    X = np.atleast_2d(np.asarray(features, dtype=float))
    if X.shape[0] < 1:
        raise ValidationError("need at least one row")
    m = X.T @ X / X.shape[0]
    return MomentMatrix(m=0.5 * (m + m.T), kind=kind)


def composed_features(windows, comp: CompositionResult) -> np.ndarray:
    return monomial_features(windows, comp.monomials)


def composed_second_moment(series, comp: CompositionResult) -> MomentMatrix:
    """Second moment of the composed monomials over the h-step design rows."""
    rows = build_design(series, comp.p, comp.h).rows
    return second_moment(composed_features(rows, comp), kind="composed")


@dataclass(frozen=True)
class ParamCov:
    sigma: np.ndarray
    provenance: str  # "analytic-ols" or "empirical"
    n_used: int


def ols_param_cov(sigma2_eps: float, n: int, q: MomentMatrix) -> ParamCov:
    """``(sigma^2 / N) Q^{-1}`` for well-specified OLS."""
    if n < 1:
        raise ValidationError("n must be >= 1")
    if sigma2_eps < 0:
        raise ValidationError("residual variance must be >= 0")
    Q = np.asarray(q.m, dtype=float)
    if np.linalg.cond(Q) > 1.0 / RCOND_MIN:
        raise SingularFitError("moment matrix is singular", rcond=1.0 / np.linalg.cond(Q))
    inv = np.linalg.inv(Q)
    sigma = sigma2_eps / n * 0.5 * (inv + inv.T)
    return ParamCov(sigma=sigma, provenance="analytic-ols", n_used=int(n))


def empirical_param_cov(coeff_samples) -> ParamCov:
    S = np.atleast_2d(np.asarray(coeff_samples, dtype=float))
    if S.shape[0] < 2:
        raise ValidationError("need at least two coefficient samples")
    D = S - S.mean(axis=0)
    return ParamCov(sigma=D.T @ D / (S.shape[0] - 1), provenance="empirical", n_used=S.shape[0])


def write_matrix_csv(path, m) -> None:
    """Row-major dump with a ``# rows=<r> cols=<c>`` header line."""
    m = np.atleast_2d(np.asarray(m, dtype=float))
    with open(path, "w") as fh:
        fh.write(f"# rows={m.shape[0]} cols={m.shape[1]}\n")
        for row in m:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")
