"""Bilinear task space: recursive coefficient cloud, family distances, paired fits.

A task is a coefficient vector ``theta`` on the basis
``psi = [y_t, y_{t-1}, y_t y_{t-1}, y_t^2, y_t^2 y_{t-1}, y_{t-1}^2]``.
The direct bilinear family spans the first three coordinates. The recursive
family is the image ``g(b)`` of the two-fold bilinear composition, living in
the first five coordinates with no ``y_{t-1}^2`` term, so ``theta_6`` adds to
both distances in quadrature.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .dgp import PSI_MONOMIALS, TaskTheta, derive_seed, generate_task_data, make_rng, psi, sample_task
from .errors import SingularFitError, ValidationError
from .estimate import ols_solve
from .kernels.lm import GTOL_CONVERGED, STEP_CONVERGED, quad_project
from .polypred import BILINEAR_BASIS, bilinear, compose, depressed_cubic_roots, invert_linear_two_step

log = logging.getLogger(__name__)

THETA6_BOUNDS = (-1.5, 1.5)
START_BOUNDS = (-1.5, 1.5)


@lru_cache(maxsize=1)
def recursive_map_arrays():
    """``(coef, exps, nterms)`` for ``g: b -> alpha`` with rows in task-basis order."""
    comp = compose(bilinear((1.0, 1.0, 1.0)), 2, basis=BILINEAR_BASIS)
    coef, exps, nterms = comp.param_map_arrays()
    order = [comp.monomials.index(m) for m in PSI_MONOMIALS[:5]]
    return coef[order], exps[order], nterms[order]


def recursive_map(B) -> np.ndarray:
    """Vectorised ``g``: ``(n, 3)`` one-step bilinear parameters -> ``(n, 5)``."""
    B = np.atleast_2d(np.asarray(B, dtype=float))
    coef, exps, nterms = recursive_map_arrays()
    out = np.zeros((B.shape[0], coef.shape[0]))
    for j in range(coef.shape[0]):
        for k in range(nterms[j]):
            out[:, j] += coef[j, k] * np.prod(B ** exps[j, k], axis=1)
    return out


@dataclass(frozen=True)
class TaskBox:
    alpha_bounds: np.ndarray  # (5, 2)
    theta6_bounds: tuple = THETA6_BOUNDS

    def __post_init__(self):
        ab = np.asarray(self.alpha_bounds, dtype=float)
        if ab.shape != (5, 2) or np.any(ab[:, 0] > ab[:, 1]):
            raise ValidationError("alpha_bounds must be five (low, high) intervals")
        if self.theta6_bounds[0] > self.theta6_bounds[1]:
            raise ValidationError("empty theta6 interval")
        object.__setattr__(self, "alpha_bounds", ab)

    def bounds(self) -> np.ndarray:
        """All six sampling intervals, task-basis order."""
        return np.vstack([self.alpha_bounds, np.asarray(self.theta6_bounds, dtype=float)[None]])


def build_task_box(n_samples: int, b_bounds=START_BOUNDS, seed: int = 0) -> TaskBox:
    """Coordinatewise bounds of ``g(b)`` over ``n_samples`` uniform draws of ``b``.

    Draws come off a single stream, so a larger ``n_samples`` with the same
    seed extends the earlier sample instead of replacing it.
    """
    if n_samples < 1:
        raise ValidationError("n_samples must be >= 1")
    lo, hi = float(b_bounds[0]), float(b_bounds[1])
    if lo > hi:
        raise ValidationError("empty b interval")
    u = make_rng(seed).random(3 * n_samples).reshape(n_samples, 3)
    alpha = recursive_map(lo + u * (hi - lo))
    return TaskBox(np.column_stack([alpha.min(axis=0), alpha.max(axis=0)]))


def distance_to_direct(theta: TaskTheta) -> float:
    th = theta.as_array()
    return float(np.sqrt(th[3] ** 2 + th[4] ** 2 + th[5] ** 2))


@dataclass(frozen=True)
class ManifoldProjection:
    """Best multi-start LM result for ``min_b ||R (g(b) - t)||^2``.

    Unpacks as ``(distance, argmin_b)``.
    """

    distance: float
    argmin_b: np.ndarray
    objective: float
    converged: np.ndarray  # per start
    objectives: np.ndarray  # per start

    def __iter__(self):
        return iter((self.distance, self.argmin_b))

    @property
    def n_unconverged(self) -> int:
        return int((~self.converged).sum())


def lm_starts(n_starts: int, seed: int) -> np.ndarray:
    """The origin followed by ``n_starts - 1`` uniform draws from the start box."""
    if n_starts < 1:
        raise ValidationError("n_starts must be >= 1")
    lo, hi = START_BOUNDS
    rest = lo + make_rng(seed).random(3 * (n_starts - 1)).reshape(-1, 3) * (hi - lo)
    return np.vstack([np.zeros((1, 3)), rest])


def structured_starts(target) -> np.ndarray:
    """Starts that match the linear part of ``target`` exactly.

    Every real preimage ``(b1, b2)`` of the first two coordinates is paired
    with each stationary ``b3`` of the Euclidean objective at that ``(b1, b2)``,
    which solves ``b3^3 + p b3 + q = 0``. Random starts in the box miss basins
    whose ``b2`` lies far outside it; these do not.
    """
    t = np.asarray(target, dtype=float)
    out = []
    for b1, b2 in invert_linear_two_step(t[:2]):
        s = b1 + b2
        p = 0.5 * (s * s + b1 * b1 - 2.0 * t[4])
        q = -0.5 * (s * t[2] + b1 * t[3])
        out.extend((b1, b2, b3) for b3 in depressed_cubic_roots(p, q))
    return np.array(out, dtype=float).reshape(-1, 3)


def project_to_manifold(target, metric_root=None, n_starts: int = 16, seed: int = 0,
                        extra: float = 0.0, backend=None, structured: bool = True) -> ManifoldProjection:
    """Project a 5-vector onto the recursive manifold under the metric ``R^T R``.

    Runs LM from ``lm_starts(n_starts, seed)`` plus, when ``structured``, the
    ``structured_starts`` of the target. ``extra`` is a squared residual that no
    ``b`` can remove; it is added before taking the square root.
    """
    t = np.asarray(target, dtype=float).ravel()
    if t.shape != (5,):
        raise ValidationError("target must have 5 coordinates")
    R = np.eye(5) if metric_root is None else np.asarray(metric_root, dtype=float)
    coef, exps, nterms = recursive_map_arrays()
    starts = lm_starts(n_starts, seed)
    if structured:
        starts = np.vstack([starts, structured_starts(t)])
    B, f, gn, step, _ = quad_project(starts, coef, exps, nterms, R, t, backend=backend)
    conv = (gn < GTOL_CONVERGED) | (step < STEP_CONVERGED)
    k = int(np.argmin(f))
    if not conv.all():
        log.debug("%d of %d LM starts did not converge", int((~conv).sum()), conv.size)
    return ManifoldProjection(
        distance=float(np.sqrt(max(f[k], 0.0) + extra)), argmin_b=B[k].copy(),
        objective=float(f[k]), converged=conv, objectives=f,
    )


def distance_to_recursive(theta: TaskTheta, n_starts: int = 16, seed: int = 0,
                          backend=None, structured: bool = True) -> ManifoldProjection:
    th = theta.as_array()
    return project_to_manifold(th[:5], None, n_starts, seed, extra=th[5] ** 2, backend=backend,
                               structured=structured)


@dataclass(frozen=True)
class TaskDataConfig:
    n_train: int = 1000
    n_test: int = 1000
    input_std: float = 1.0
    noise_std: float = 0.05

    def __post_init__(self):
        if self.n_train < 5 or self.n_test < 1:
            raise ValidationError("need n_train >= 5 and n_test >= 1")
        if self.input_std <= 0 or self.noise_std < 0:
            raise ValidationError("input_std must be > 0 and noise_std >= 0")


def fit_both(theta: TaskTheta, data_cfg: TaskDataConfig = TaskDataConfig(), seed: int = 0,
             n_starts: int = 16, backend=None):
    """Fit the direct and recursive bilinear families on the same task data.

    Returns ``(mse_alpha, mse_c, argmin_b)`` measured on a held-out sample.
    The recursive fit minimises training MSE over ``b``; with
    ``G = Psi^T Psi / n`` and ``G t = Psi^T y / n`` that is ``(g - t)^T G (g - t)``
    up to a constant, solved by the same multi-start LM as the projection.
    Raises ``SingularFitError`` on a rank-deficient design.
    """
    Xtr, ytr = generate_task_data(theta, data_cfg.n_train, data_cfg.input_std, data_cfg.noise_std,
                                  derive_seed(seed, 0))
    Xte, yte = generate_task_data(theta, data_cfg.n_test, data_cfg.input_std, data_cfg.noise_std,
                                  derive_seed(seed, 1))
    Ptr, Pte = psi(Xtr)[:, :5], psi(Xte)[:, :5]

    c = ols_solve(Ptr[:, :3], ytr)
    t = ols_solve(Ptr, ytr)
    G = Ptr.T @ Ptr / Ptr.shape[0]
    R = np.linalg.cholesky(0.5 * (G + G.T)).T
    proj = project_to_manifold(t, R, n_starts, derive_seed(seed, 2), backend=backend)
    alpha = recursive_map(proj.argmin_b)[0]
    mse_c = float(np.mean((Pte[:, :3] @ c - yte) ** 2))
    mse_alpha = float(np.mean((Pte @ alpha - yte) ** 2))
    return mse_alpha, mse_c, proj.argmin_b


@dataclass(frozen=True)
class TaskOutcome:
    theta: TaskTheta
    d_alpha: float
    d_c: float
    mse_alpha: float
    mse_c: float
    argmin_b: np.ndarray
    n_unconverged: int = 0

    def row(self, index: int) -> dict:
        d = {"task": index}
        d.update({f"theta{i + 1}": v for i, v in enumerate(self.theta.theta)})
        d.update(d_alpha=self.d_alpha, d_c=self.d_c, mse_alpha=self.mse_alpha, mse_c=self.mse_c)
        d.update({f"b{i + 1}": float(v) for i, v in enumerate(self.argmin_b)})
        d["n_unconverged"] = self.n_unconverged
        return d


@dataclass(frozen=True)
class TaskStudyConfig:
    n_tasks: int = 500
    n_box_samples: int = 100_000
    n_starts: int = 16
    data: TaskDataConfig = TaskDataConfig()

    def __post_init__(self):
        if self.n_tasks < 1:
            raise ValidationError("n_tasks must be >= 1")
        if self.n_box_samples < 1 or self.n_starts < 1:
            raise ValidationError("n_box_samples and n_starts must be >= 1")


def run_task(theta: TaskTheta, cfg: TaskStudyConfig, seed: int):
    """One task end to end; ``None`` when the fit is singular."""
    proj = distance_to_recursive(theta, cfg.n_starts, derive_seed(seed, 0))
    try:
        mse_a, mse_c, b = fit_both(theta, cfg.data, derive_seed(seed, 1), cfg.n_starts)
    except SingularFitError as exc:
        log.warning("task skipped: %s", exc)
        return None
    return TaskOutcome(theta, proj.distance, distance_to_direct(theta), mse_a, mse_c, b,
                       proj.n_unconverged)


def _task_job(args):
    theta, cfg, seed = args
    return run_task(theta, cfg, seed)


def task_work_items(cfg: TaskStudyConfig, seed: int) -> list:
    """``(theta, cfg, task_seed)`` for every task; box and thetas fixed by ``seed``."""
    box = build_task_box(cfg.n_box_samples, START_BOUNDS, derive_seed(seed, 0))
    bounds = box.bounds()
    return [(sample_task(bounds, derive_seed(seed, 1, i)), cfg, derive_seed(seed, 2, i))
            for i in range(cfg.n_tasks)]


def run_study(cfg: TaskStudyConfig, seed: int, map_fn=map):
    """Returns ``(outcomes, n_skipped)``; outcomes keep task order."""
    results = list(map_fn(_task_job, task_work_items(cfg, seed)))
    outcomes = [r for r in results if r is not None]
    return outcomes, len(results) - len(outcomes)


def ecdf(values):
    """Right-continuous ECDF as ``(xs, F)`` at the distinct sorted values."""
    v = np.sort(np.asarray(values, dtype=float).ravel())
    if v.size == 0:
        raise ValidationError("ecdf of an empty sample")
    if np.isnan(v).any():
        raise ValidationError("ecdf input contains NaN")
    xs, counts = np.unique(v, return_counts=True)
    return xs, np.cumsum(counts) / v.size


def ecdf_at(values, x) -> np.ndarray:
    v = np.sort(np.asarray(values, dtype=float).ravel())
    if v.size == 0:
        raise ValidationError("ecdf of an empty sample")
    return np.searchsorted(v, np.asarray(x, dtype=float), side="right") / v.size


def write_tasks_csv(path, outcomes) -> None:
    with open(path, "w", newline="") as fh:
        w = None
        for i, o in enumerate(outcomes):
            row = o.row(i)
            if w is None:
                w = csv.DictWriter(fh, fieldnames=list(row))
                w.writeheader()
            w.writerow({k: repr(float(v)) if isinstance(v, float) else v for k, v in row.items()})


def write_ecdf_csv(path, values) -> None:
    xs, F = ecdf(values)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["value", "cdf"])
        for x, f in zip(xs, F):
            w.writerow([repr(float(x)), repr(float(f))])
