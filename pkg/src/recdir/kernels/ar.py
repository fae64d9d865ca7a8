import numpy as np

from .._backend import BACKEND, njit, pick


@njit
def _ar2_loop(w, a, gamma):
    n = w.shape[0]
    x = np.empty(n)
    x1 = 0.0
    x2 = 0.0
    for t in range(n):
        xt = a * x1 + gamma * x2 + w[t]
        x[t] = xt
        x2 = x1
        x1 = xt
    return x


def ar2_filter_numba(w, a, gamma):
    return _ar2_loop(np.ascontiguousarray(w, dtype=np.float64), float(a), float(gamma))


def ar2_filter_numpy(w, a, gamma):
    # same operation order as the compiled loop, so results match bit for bit
    a = float(a)
    gamma = float(gamma)
    out = []
    append = out.append
    x1 = x2 = 0.0
    for wt in np.asarray(w, dtype=np.float64).tolist():
        xt = a * x1 + gamma * x2 + wt
        append(xt)
        x2 = x1
        x1 = xt
    return np.array(out, dtype=np.float64)


def ar2_filter(w, a, gamma, backend=None):
    """``x_t = a x_{t-1} + gamma x_{t-2} + w_t`` from zero initial state."""
    return pick(ar2_filter_numba, ar2_filter_numpy, backend)(w, a, gamma)
