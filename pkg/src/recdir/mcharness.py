"""Monte Carlo engine for the recursive-vs-direct AR(2) noise sweeps.

For every stable ``(a, gamma)`` cell and every ``(sigma_s, sigma_e)`` noise
setting, ``n_seeds`` independent training series are fitted by intercept-free
OLS (one-step and direct two-step), the recursive two-step coefficients are
derived from the one-step fit through the composition map, and all models
are scored on one fixed evaluation series per cell.

Three estimation-variance predictions are reported per cell:

``ev_theory_*``
    Across-trial coefficient covariance pushed through the composition
    Jacobian evaluated at the generating ``(a, gamma)``.
``ev_analytic_*``
    Same Jacobian, but with the large-sample OLS covariance built from the
    closed-form residual floors instead of the measured one.
``ev_meanfit_rec``
    Measured covariance with the Jacobian taken at the mean fitted
    coefficients. Any bias of the fit is absorbed here, so comparing it with
    ``ev_theory_rec`` isolates the effect of bias.

Seeds: the evaluation series of cell ``c`` uses ``derive_seed(base, c, 0)``,
trial ``k`` uses ``derive_seed(base, c, k + 1)``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .dgp import Ar2Params, derive_seed, is_stable, simulate_ar2
from .errors import DegenerateError, SingularFitError, ValidationError
from .estimate import (
    build_design,
    composed_features,
    empirical_param_cov,
    ols_fit,
    ols_param_cov,
    second_moment,
)
from .evtheory import AleatoricFloors, ev_direct, ev_recursive
from .polypred import LINEAR2_BASIS, compose, linear, linear_two_step_map

P_LAGS = 2

_DEFAULT_NOISE = (0.0, 0.2, 0.4, 0.6, 0.8, 1.0)


@dataclass(frozen=True)
class SweepConfig:
    a_grid: tuple = (-0.8, -0.4, 0.0, 0.4, 0.8)
    gamma_grid: tuple = (-0.6, -0.4, -0.2, 0.0, 0.15)
    sigma_s_grid: tuple = _DEFAULT_NOISE
    sigma_e_grid: tuple = _DEFAULT_NOISE
    n_train: int = 2000
    n_eval: int = 5000
    n_seeds: int = 50
    horizon: int = 2
    burn_in: int = 500
    max_fail_frac: float = 0.1

    def __post_init__(self):
        for name in ("a_grid", "gamma_grid", "sigma_s_grid", "sigma_e_grid"):
            vals = tuple(float(v) for v in getattr(self, name))
            if not vals:
                raise ValidationError(f"{name} must be nonempty")
            object.__setattr__(self, name, vals)
        if min(self.sigma_s_grid) < 0 or min(self.sigma_e_grid) < 0:
            raise ValidationError("noise grids must be nonnegative")
        for name in ("n_train", "n_eval", "n_seeds"):
            if int(getattr(self, name)) < 1:
                raise ValidationError(f"{name} must be >= 1")
        if self.horizon != 2:
            raise ValidationError("the AR(2) sweep is defined for horizon 2 only")

    @property
    def stable_pairs(self) -> list:
        return [(a, g) for a in self.a_grid for g in self.gamma_grid if is_stable(a, g)]

    def cells(self) -> list:
        """All ``Ar2Params`` in sweep order: sigma_s, sigma_e, a, gamma."""
        return [
            Ar2Params(a, g, s, e)
            for s in self.sigma_s_grid
            for e in self.sigma_e_grid
            for a, g in self.stable_pairs
        ]


@dataclass
class TrialResult:
    seed: int
    fitted_one_step: np.ndarray
    fitted_direct: np.ndarray
    derived_recursive: np.ndarray
    mse_rec: float
    mse_dir: float
    predictions: dict = field(repr=False, default_factory=dict)


@dataclass(frozen=True)
class CellReport:
    params: Ar2Params
    cell_index: int
    n_ok: int
    n_failed: int
    failed: bool
    ev_theory_rec: float
    ev_theory_dir: float
    ev_theory_one: float
    ev_analytic_rec: float
    ev_analytic_dir: float
    ev_analytic_one: float
    ev_meanfit_rec: float
    ev_emp_rec: float
    ev_emp_dir: float
    ev_emp_one: float
    t_h: float
    pearson_r: float
    bias_distance: float
    mse_rec: float
    mse_dir: float
    mean_b1: float
    mean_b2: float
    floors: AleatoricFloors

    def row(self) -> dict:
        d = {"cell": self.cell_index, **asdict(self.params)}
        for f in fields(self):
            if f.name not in ("params", "cell_index", "floors"):
                d[f.name] = getattr(self, f.name)
        d["sigma2_eps1"] = self.floors.sigma2_eps1
        d["sigma2_eps2"] = self.floors.sigma2_eps2
        return d


def empirical_ev(per_seed_predictions) -> float:
    """Mean over evaluation points of the across-seed variance (ddof=1)."""
    P = np.atleast_2d(np.asarray(per_seed_predictions, dtype=float))
    if P.shape[0] < 2:
        raise ValidationError("need predictions from at least two seeds")
    return float(np.mean(np.var(P, axis=0, ddof=1)))


def pearson(xs, ys) -> float:
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if x.shape != y.shape or x.ndim != 1 or x.shape[0] < 2:
        raise ValidationError("pearson needs two equal-length sequences of length >= 2")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = dx @ dx
    syy = dy @ dy
    if sxx == 0 or syy == 0:
        raise DegenerateError("correlation undefined for a constant sequence")
    return float(np.clip((dx @ dy) / math.sqrt(sxx * syy), -1.0, 1.0))


def _series_len(n_rows: int, h: int) -> int:
    return n_rows + P_LAGS + h - 1


def run_trials(params: Ar2Params, cfg: SweepConfig, base_seed: int, cell_index: int = 0,
               trial_seeds=None, eval_design=None):
    """Fit every trial of one cell. Returns ``(trials, n_failed, eval_design)``."""
    h = cfg.horizon
    if eval_design is None:
        ev_series = simulate_ar2(params, _series_len(cfg.n_eval, h), cfg.burn_in,
                                 derive_seed(base_seed, cell_index, 0)).observed
        eval_design = build_design(ev_series, P_LAGS, h)
    Xe, ye = eval_design.rows, eval_design.targets
    if trial_seeds is None:
        trial_seeds = [derive_seed(base_seed, cell_index, k + 1) for k in range(cfg.n_seeds)]
    trials, n_failed = [], 0
    for seed in trial_seeds:
        y = simulate_ar2(params, _series_len(cfg.n_train, h), cfg.burn_in, seed).observed
        try:
            b = ols_fit(build_design(y[: cfg.n_train + P_LAGS], P_LAGS, 1))
            c = ols_fit(build_design(y, P_LAGS, h))
        except SingularFitError:
            n_failed += 1
            continue
        alpha = np.array(linear_two_step_map(b))
        preds = {"one": Xe @ b, "rec": Xe @ alpha, "dir": Xe @ c}
        trials.append(TrialResult(
            seed=int(seed), fitted_one_step=b, fitted_direct=c, derived_recursive=alpha,
            mse_rec=float(np.mean((preds["rec"] - ye) ** 2)),
            mse_dir=float(np.mean((preds["dir"] - ye) ** 2)),
            predictions=preds,
        ))
    return trials, n_failed, eval_design


def _nan_report(params, cell_index, n_ok, n_failed) -> CellReport:
    fixed = {"params": params, "cell_index": cell_index, "n_ok": n_ok, "n_failed": n_failed,
             "failed": True, "floors": AleatoricFloors.of(params)}
    rest = {f.name: float("nan") for f in fields(CellReport) if f.name not in fixed}
    return CellReport(**fixed, **rest)


def run_cell(params: Ar2Params, cfg: SweepConfig, base_seed: int, cell_index: int = 0,
             trial_seeds=None) -> CellReport:
    if not params.stable:
        raise ValidationError(f"cell {params} is not stable")
    trials, n_failed, design = run_trials(params, cfg, base_seed, cell_index, trial_seeds)
    n_total = len(trials) + n_failed
    if len(trials) < 2 or n_failed > cfg.max_fail_frac * n_total:
        return _nan_report(params, cell_index, len(trials), n_failed)

    Xe = design.rows
    B = np.array([t.fitted_one_step for t in trials])
    C = np.array([t.fitted_direct for t in trials])
    preds = {k: np.array([t.predictions[k] for t in trials]) for k in ("one", "rec", "dir")}
    floors = AleatoricFloors.of(params)

    b_mean = B.mean(axis=0)
    b_true = np.array([params.a, params.gamma])
    comp = compose(linear(b_true), cfg.horizon, basis=LINEAR2_BASIS)
    J = comp.jacobian_at(b_true)
    J_fit = comp.jacobian_at(b_mean)
    Q = second_moment(Xe)
    Xt = composed_features(Xe, comp)
    Qt = second_moment(Xt, kind="composed")

    nan = float("nan")
    emp_b = empirical_param_cov(B)
    emp_c = empirical_param_cov(C)
    th_one = ev_direct(emp_b, Q)
    th_rec = ev_recursive(J, emp_b, Qt)
    try:
        sig1 = ols_param_cov(floors.sigma2_eps1, cfg.n_train, Q)
        sig2 = ols_param_cov(floors.sigma2_eps2, cfg.n_train, Q)
        an = (ev_recursive(J, sig1, Qt), ev_direct(sig2, Q), ev_direct(sig1, Q))
    except SingularFitError:
        an = (nan, nan, nan)

    per_point = np.einsum("ni,ij,nj->n", Xt, J @ emp_b.sigma @ J.T, Xt)
    emp_point = np.var(preds["rec"], axis=0, ddof=1)
    try:
        r = pearson(per_point, emp_point)
    except DegenerateError:
        r = nan
    return CellReport(
        params=params, cell_index=cell_index, n_ok=len(trials), n_failed=n_failed, failed=False,
        ev_theory_rec=th_rec, ev_theory_dir=ev_direct(emp_c, Q), ev_theory_one=th_one,
        ev_analytic_rec=an[0], ev_analytic_dir=an[1], ev_analytic_one=an[2],
        ev_meanfit_rec=ev_recursive(J_fit, emp_b, Qt),
        ev_emp_rec=empirical_ev(preds["rec"]), ev_emp_dir=empirical_ev(preds["dir"]),
        ev_emp_one=empirical_ev(preds["one"]),
        t_h=th_rec / th_one if th_one > 0 else nan,
        pearson_r=r,
        bias_distance=float(np.hypot(params.a - b_mean[0], params.gamma - b_mean[1])),
        mse_rec=float(np.mean([t.mse_rec for t in trials])),
        mse_dir=float(np.mean([t.mse_dir for t in trials])),
        mean_b1=float(b_mean[0]), mean_b2=float(b_mean[1]),
        floors=floors,
    )


def _cell_job(args):
    params, cfg, base_seed, idx = args
    return run_cell(params, cfg, base_seed, idx)


def _corr_or_none(xs, ys):
    xs, ys = np.asarray(xs, float), np.asarray(ys, float)
    ok = np.isfinite(xs) & np.isfinite(ys)
    if ok.sum() < 2:
        return None
    try:
        return pearson(xs[ok], ys[ok])
    except DegenerateError:
        return None


def summarize(cells: list, cfg: SweepConfig) -> dict:
    """Per-noise-configuration aggregates (correlation, bias and winner maps)."""
    configs = []
    for s in cfg.sigma_s_grid:
        for e in cfg.sigma_e_grid:
            group = [c for c in cells if c.params.sigma_s == s and c.params.sigma_e == e]
            ok = [c for c in group if not c.failed]
            entry = {
                "sigma_s": s, "sigma_e": e, "n_cells": len(group), "n_failed_cells": len(group) - len(ok),
                "corr_theory_rec": None, "corr_analytic_rec": None, "corr_meanfit_rec": None,
                "corr_theory_dir": None,
                "mean_bias_distance": None, "prop_rec_wins_analytic": None,
                "prop_rec_wins_empirical": None, "winner_agreement": None,
            }
            if ok:
                emp = [c.ev_emp_rec for c in ok]
                entry["corr_theory_rec"] = _corr_or_none([c.ev_theory_rec for c in ok], emp)
                entry["corr_analytic_rec"] = _corr_or_none([c.ev_analytic_rec for c in ok], emp)
                entry["corr_meanfit_rec"] = _corr_or_none([c.ev_meanfit_rec for c in ok], emp)
                entry["corr_theory_dir"] = _corr_or_none([c.ev_theory_dir for c in ok],
                                                         [c.ev_emp_dir for c in ok])
                entry["mean_bias_distance"] = float(np.mean([c.bias_distance for c in ok]))
                analytic = np.array([c.floors.delta >= 0 for c in ok])
                empirical = np.array([c.mse_rec < c.mse_dir for c in ok])
                entry["prop_rec_wins_analytic"] = float(analytic.mean())
                entry["prop_rec_wins_empirical"] = float(empirical.mean())
                entry["winner_agreement"] = float((analytic == empirical).mean())
            configs.append(entry)
    n_failed = sum(c.failed for c in cells)
    return {
        "n_cells": len(cells),
        "n_failed_cells": n_failed,
        "failed_fraction": n_failed / len(cells) if cells else 0.0,
        "noise_configs": configs,
    }


def sweep_work_items(cfg: SweepConfig, base_seed: int) -> list:
    params = cfg.cells()
    if not params:
        raise ValidationError("no stable cells in the (a, gamma) grid")
    return [(p, cfg, int(base_seed), i) for i, p in enumerate(params)]


def run_sweep(cfg: SweepConfig, base_seed: int, map_fn=map):
    """Run every cell; returns ``(cells, summary)``.

    ``map_fn`` must preserve order (``map``, ``Executor.map``); the result
    does not depend on how the work is spread.
    """
    cells = list(map_fn(_cell_job, sweep_work_items(cfg, base_seed)))
    return cells, summarize(cells, cfg)


def write_cells_csv(path, cells) -> None:
    rows = [c.row() for c in cells]
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        for r in rows:
            w.writerow({k: repr(float(v)) if isinstance(v, float) else v for k, v in r.items()})
