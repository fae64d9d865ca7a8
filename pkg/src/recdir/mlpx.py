"""Width-2 tanh MLP study: recursive (unrolled) versus direct two-step training.

Each ``(n_train, seed)`` pair draws one random subset of training windows,
shared by both strategies, and trains each strategy from its own seeded
initialisation. Test error is the last-step MSE over every test window.
"""
from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field, replace

import numpy as np

from .dgp import derive_seed, make_rng
from .errors import DataError, NumericalFailure, ValidationError
from .estimate import lag_windows
from .kernels.mlp import DIRECT, RECURSIVE, TANH, mlp_loss_grad, mlp_predict, mlp_train

STRATEGIES = {"recursive": RECURSIVE, "direct": DIRECT}
LOSS_MODES = {"last": 0, "mean": 1}


@dataclass(frozen=True)
class MlpParams:
    """``out = w2 tanh(w1 x + b1) + b2``."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray

    def __post_init__(self):
        w1, b1, w2, b2 = (np.asarray(a, dtype=float) for a in (self.w1, self.b1, self.w2, self.b2))
        if w1.ndim != 2 or b1.shape != (w1.shape[0],) or w2.ndim != 2 \
                or w2.shape[1] != w1.shape[0] or b2.shape != (w2.shape[0],):
            raise ValidationError(
                f"inconsistent shapes w1{w1.shape} b1{b1.shape} w2{w2.shape} b2{b2.shape}")
        if not all(np.all(np.isfinite(a)) for a in (w1, b1, w2, b2)):
            raise ValidationError("non-finite parameter")
        for name, a in zip(("w1", "b1", "w2", "b2"), (w1, b1, w2, b2)):
            object.__setattr__(self, name, a)

    @classmethod
    def init(cls, n_in: int, width: int, n_out: int, rng) -> "MlpParams":
        """Uniform on ``+-1/sqrt(fan_in)`` per layer."""
        r1, r2 = 1.0 / math.sqrt(n_in), 1.0 / math.sqrt(width)
        return cls(rng.uniform(-r1, r1, (width, n_in)), rng.uniform(-r1, r1, width),
                   rng.uniform(-r2, r2, (n_out, width)), rng.uniform(-r2, r2, n_out))

    @classmethod
    def zeros(cls, n_in: int, width: int, n_out: int) -> "MlpParams":
        return cls(np.zeros((width, n_in)), np.zeros(width), np.zeros((n_out, width)), np.zeros(n_out))

    def arrays(self) -> tuple:
        return self.w1, self.b1, self.w2, self.b2

    @property
    def n_in(self) -> int:
        return self.w1.shape[1]


@dataclass(frozen=True)
class TrainConfig:
    p: int = 50
    horizon: int = 2
    width: int = 2
    lr: float = 1e-3
    epochs: int = 200
    batch_size: int = 128
    full_batch_below: int = 512
    n_train: int = 1024
    seed: int = 0
    loss_mode: str = "last"  # "mean" also supervises the intermediate recursive step

    def __post_init__(self):
        for name in ("p", "horizon", "width", "epochs", "batch_size", "n_train"):
            if int(getattr(self, name)) < 1:
                raise ValidationError(f"{name} must be >= 1")
        if not self.lr >= 0:
            raise ValidationError("lr must be >= 0")
        if self.loss_mode not in LOSS_MODES:
            raise ValidationError(f"loss_mode must be one of {sorted(LOSS_MODES)}")

    def effective_batch(self, n: int) -> int:
        return n if n < self.full_batch_below else min(self.batch_size, n)


@dataclass(frozen=True)
class Dataset:
    x_train: np.ndarray
    y_train: np.ndarray
    x_test: np.ndarray
    y_test: np.ndarray


@dataclass(frozen=True)
class Scaler:
    mean: float
    std: float

    def apply(self, x):
        return (np.asarray(x, dtype=float) - self.mean) / self.std


@dataclass
class RunRecord:
    strategy: str
    n_train: int
    seed: int
    train_mse: float
    test_mse: float
    curve: np.ndarray = field(repr=False)
    failed: bool = False

    @property
    def key(self) -> str:
        return f"{self.strategy}_n{self.n_train}_s{self.seed}"


@dataclass(frozen=True)
class RatioRow:
    n_train: int
    rho_mse_train: float
    rho_mse_test: float
    rho_var: float
    n_rec: int
    n_dir: int


@dataclass(frozen=True)
class RatioReport:
    rows: tuple

    def by_n(self) -> dict:
        return {r.n_train: r for r in self.rows}


def load_series(path, column: str = "OT") -> np.ndarray:
    """Read one numeric column from a headed CSV file."""
    if not os.path.exists(path):
        raise DataError(f"{path}: no such file")
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DataError(f"{path}: empty file")
        header = [h.strip() for h in header]
        if column not in header:
            raise DataError(f"{path}: column {column!r} not found (have {', '.join(header)})")
        j = header.index(column)
        out = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if j >= len(row):
                raise DataError(f"{path}:{lineno}: row has {len(row)} fields, need column {j + 1}")
            try:
                v = float(row[j])
            except ValueError:
                raise DataError(f"{path}:{lineno}: non-numeric value {row[j]!r} in column {column!r}") from None
            if not math.isfinite(v):
                raise DataError(f"{path}:{lineno}: non-finite value in column {column!r}")
            out.append(v)
    if not out:
        raise DataError(f"{path}: no data rows")
    return np.array(out)


def split_standardize(series, train_frac: float = 0.6):
    """Chronological split; the scaler sees the training part only."""
    if not 0 < train_frac < 1:
        raise ValidationError("train_frac must lie in (0, 1)")
    y = np.asarray(series, dtype=float)
    k = int(math.floor(train_frac * y.shape[0]))
    if k < 2 or y.shape[0] - k < 1:
        raise DataError(f"series of length {y.shape[0]} is too short to split at train_frac={train_frac}")
    train, test = y[:k], y[k:]
    sd = float(train.std())
    if sd == 0:
        raise DataError("training part is constant; cannot standardize")
    sc = Scaler(float(train.mean()), sd)
    return sc.apply(train), sc.apply(test), sc


def make_windows(series, p: int, h: int):
    """Inputs ``(n, p)``, newest lag first, and targets ``(n, h)``."""
    y = np.asarray(series, dtype=float)
    X = lag_windows(y, p, h)
    n = X.shape[0]
    Y = np.column_stack([y[p + s: p + s + n] for s in range(h)])
    return X, Y


def prepare_dataset(series, p: int = 50, h: int = 2, train_frac: float = 0.6) -> Dataset:
    train, test, _ = split_standardize(series, train_frac)
    if train.shape[0] < p + h or test.shape[0] < p + h:
        raise DataError(f"series of length {len(series)} too short for p={p}, h={h}")
    xtr, ytr = make_windows(train, p, h)
    xte, yte = make_windows(test, p, h)
    return Dataset(xtr, ytr, xte, yte)


def forward(params: MlpParams, x) -> np.ndarray:
    """Single-pass network output for one window or a batch of windows."""
    X = np.asarray(x, dtype=float)
    if X.shape[-1] != params.n_in:
        raise ValidationError(f"input has {X.shape[-1]} features, network expects {params.n_in}")
    return np.tanh(X @ params.w1.T + params.b1) @ params.w2.T + params.b2


def loss_and_grad(params: MlpParams, x, y, strategy: str, loss_mode: str = "last", act: int = TANH):
    """MSE and its gradient as ``(loss, MlpParams)``."""
    X = np.atleast_2d(np.asarray(x, dtype=float))
    Y = np.asarray(y, dtype=float).reshape(X.shape[0], -1)
    if X.shape[0] < 1:
        raise ValidationError("empty batch")
    out = mlp_loss_grad(*params.arrays(), X, Y, STRATEGIES[strategy], LOSS_MODES[loss_mode], act)
    return float(out[0]), MlpParams(*out[1:])


def predict(params: MlpParams, X, strategy: str, horizon: int) -> np.ndarray:
    return mlp_predict(*params.arrays(), X, STRATEGIES[strategy], horizon)


def _draw_subset(n_avail: int, n_train: int, seed: int) -> np.ndarray:
    if n_train > n_avail:
        raise DataError(f"n_train={n_train} exceeds the {n_avail} available training windows")
    return np.sort(make_rng(derive_seed(seed, 0, n_train)).permutation(n_avail)[:n_train])


def train(dataset: Dataset, cfg: TrainConfig, strategy: str, init: MlpParams | None = None):
    """Train one network; returns ``(RunRecord, MlpParams)``.

    The training subset depends on ``(seed, n_train)`` only, so both strategies
    see the same windows. Initialisation and shuffling are seeded per strategy.
    """
    if strategy not in STRATEGIES:
        raise ValidationError(f"strategy must be one of {sorted(STRATEGIES)}")
    s = STRATEGIES[strategy]
    idx = _draw_subset(dataset.x_train.shape[0], cfg.n_train, cfg.seed)
    X, Y = dataset.x_train[idx], dataset.y_train[idx, : cfg.horizon]
    n_out = 1 if s == RECURSIVE else cfg.horizon
    if init is None:
        init = MlpParams.init(X.shape[1], cfg.width, n_out, make_rng(derive_seed(cfg.seed, 1, s, cfg.n_train)))
    rng = make_rng(derive_seed(cfg.seed, 2, s, cfg.n_train))
    perms = np.stack([rng.permutation(X.shape[0]) for _ in range(cfg.epochs)])
    arrs, curve, failed = mlp_train(init.arrays(), X, Y, perms, cfg.lr, cfg.effective_batch(X.shape[0]),
                                    s, LOSS_MODES[cfg.loss_mode])
    nan = float("nan")
    if failed or not all(np.all(np.isfinite(a)) for a in arrs):
        return RunRecord(strategy, cfg.n_train, cfg.seed, nan, nan, curve, True), None
    params = MlpParams(*arrs)
    pred = predict(params, dataset.x_test, strategy, cfg.horizon)[:, -1]
    test_mse = float(np.mean((pred - dataset.y_test[:, cfg.horizon - 1]) ** 2))
    return RunRecord(strategy, cfg.n_train, cfg.seed, float(curve[-1]), test_mse, curve,
                     not math.isfinite(test_mse)), params


def _ratio(num: float, den: float) -> float:
    return num / den if den > 0 else float("nan")


def ratio_report(records) -> RatioReport:
    """Across-seed mean and variance ratios, recursive over direct, per ``n_train``."""
    groups: dict = {}
    for r in records:
        if r.failed:
            continue
        groups.setdefault(r.n_train, {}).setdefault(r.strategy, []).append(r)
    all_n = sorted({r.n_train for r in records})
    rows = []
    for n in all_n:
        g = groups.get(n, {})
        rec, dr = g.get("recursive", []), g.get("direct", [])
        if not rec or not dr:
            raise ValidationError(f"n_train={n}: need successful runs of both strategies")
        # sort so the result depends only on the multiset of records
        tr_r = np.sort([r.train_mse for r in rec])
        tr_d = np.sort([r.train_mse for r in dr])
        te_r = np.sort([r.test_mse for r in rec])
        te_d = np.sort([r.test_mse for r in dr])
        var_r = float(np.var(te_r, ddof=1)) if te_r.size > 1 else float("nan")
        var_d = float(np.var(te_d, ddof=1)) if te_d.size > 1 else float("nan")
        rows.append(RatioRow(n, _ratio(tr_r.mean(), tr_d.mean()), _ratio(te_r.mean(), te_d.mean()),
                             _ratio(var_r, var_d), len(rec), len(dr)))
    return RatioReport(tuple(rows))


@dataclass(frozen=True)
class StudyConfig:
    n_train_grid: tuple = (256, 1024, 4096, 16384)
    n_seeds: int = 20
    column: str = "OT"
    train_frac: float = 0.6
    max_fail_frac: float = 0.1
    train: TrainConfig = TrainConfig()

    def __post_init__(self):
        grid = tuple(int(n) for n in self.n_train_grid)
        if not grid or min(grid) < 1:
            raise ValidationError("n_train_grid must hold positive counts")
        object.__setattr__(self, "n_train_grid", grid)
        if self.n_seeds < 1:
            raise ValidationError("n_seeds must be >= 1")


def _run_job(args):
    dataset, tcfg, strategy = args
    return train(dataset, tcfg, strategy)[0]


def study_work_items(dataset: Dataset, cfg: StudyConfig, seed: int) -> list:
    """One item per ``(n_train, seed index, strategy)`` in sorted key order."""
    items = []
    for n in sorted(cfg.n_train_grid):
        for k in range(cfg.n_seeds):
            tcfg = replace(cfg.train, n_train=n, seed=derive_seed(seed, k))
            for strategy in ("direct", "recursive"):
                items.append((dataset, tcfg, strategy))
    return items


def run_study(series, cfg: StudyConfig, seed: int, map_fn=map):
    """Returns ``(records, RatioReport)``; raises ``NumericalFailure`` past the failure budget."""
    t = cfg.train
    dataset = prepare_dataset(series, t.p, t.horizon, cfg.train_frac)
    if max(cfg.n_train_grid) > dataset.x_train.shape[0]:
        raise DataError(f"largest n_train {max(cfg.n_train_grid)} exceeds the "
                        f"{dataset.x_train.shape[0]} available training windows")
    records = list(map_fn(_run_job, study_work_items(dataset, cfg, seed)))
    n_failed = sum(r.failed for r in records)
    if n_failed > cfg.max_fail_frac * len(records):
        raise NumericalFailure(f"{n_failed} of {len(records)} runs diverged")
    return records, ratio_report(records)


def write_runs_csv(path, records) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["strategy", "n_train", "seed", "train_mse", "test_mse", "failed"])
        for r in records:
            w.writerow([r.strategy, r.n_train, r.seed, repr(float(r.train_mse)), repr(float(r.test_mse)),
                        int(r.failed)])


def write_ratios_csv(path, report: RatioReport) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["n_train", "rho_mse_train", "rho_mse_test", "rho_var", "n_rec", "n_dir"])
        for r in report.rows:
            w.writerow([r.n_train, repr(float(r.rho_mse_train)), repr(float(r.rho_mse_test)),
                        repr(float(r.rho_var)), r.n_rec, r.n_dir])


def write_curves(directory, records) -> list:
    os.makedirs(directory, exist_ok=True)
    paths = []
    for r in records:
        path = os.path.join(directory, f"{r.key}.csv")
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["epoch", "train_mse"])
            for e, v in enumerate(r.curve):
                w.writerow([e + 1, repr(float(v))])
        paths.append(path)
    return paths


def plateaued(curve, tail: float = 0.2, tol: float = 0.01) -> bool:
    """Relative improvement over the final ``tail`` share of epochs is below ``tol``."""
    c = np.asarray(curve, dtype=float)
    if c.size < 2 or not np.all(np.isfinite(c)):
        return False
    k = max(1, int(math.ceil(tail * c.size)))
    start = c[-k - 1]
    return bool(start > 0 and (start - c[-1]) / start < tol)
