"""Independent reference implementations used by several test modules."""
import numpy as np
from scipy.optimize import minimize


def g_bilinear(B):
    """Two-step bilinear coefficient map written out by hand, task-basis order.

    Columns: y_t, y_{t-1}, y_t y_{t-1}, y_t^2, y_t^2 y_{t-1}.
    """
    B = np.atleast_2d(B)
    b1, b2, b3 = B[:, 0], B[:, 1], B[:, 2]
    return np.column_stack([b1 * b1 + b2, b1 * b2, b3 * (b1 + b2), b1 * b3, b3 * b3])


def grid_projection(target, theta6=0.0, lo=-3.0, hi=3.0, step=0.05, n_polish=40):
    """Dense grid search over ``b`` with Nelder-Mead polishing of the best cells.

    Returns ``(distance, b)`` for ``sqrt(min_b ||g(b) - target||^2 + theta6^2)``.
    The valleys of the objective can be narrower than the grid step, so the
    ``n_polish`` lowest grid points are each refined, not just the best one.
    """
    t = np.asarray(target, dtype=float)
    axis = np.arange(lo, hi + step / 2, step)
    b1, b2 = np.meshgrid(axis, axis, indexing="ij")
    b1, b2 = b1.ravel(), b2.ravel()
    cand_f, cand_b = [], []
    for b3 in axis:  # slice over b3 to bound memory
        B = np.column_stack([b1, b2, np.full_like(b1, b3)])
        f = np.sum((g_bilinear(B) - t) ** 2, axis=1)
        k = np.argpartition(f, n_polish)[:n_polish]
        cand_f.append(f[k])
        cand_b.append(B[k])
    cand_f, cand_b = np.concatenate(cand_f), np.vstack(cand_b)
    best_f, best_b = np.inf, None
    for b0 in cand_b[np.argsort(cand_f)[:n_polish]]:
        res = minimize(lambda b: float(np.sum((g_bilinear(b)[0] - t) ** 2)), b0, method="Nelder-Mead",
                       options={"xatol": 1e-10, "fatol": 1e-14, "maxiter": 20_000, "maxfev": 40_000})
        if res.fun < best_f:
            best_f, best_b = float(res.fun), res.x
    return float(np.sqrt(best_f + theta6 ** 2)), best_b
