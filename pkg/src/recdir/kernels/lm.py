"""Multi-start Levenberg-Marquardt for ``min_b (g(b) - t)^T M (g(b) - t)``.

``g`` is a polynomial map given in the dense layout produced by
``CompositionResult.param_map_arrays`` and ``M = R^T R``. Every start runs the
same schedule: one damped Gauss-Newton trial per iteration, damping divided
by 3 on success and multiplied by 10 on failure.
"""
import numpy as np

from .._backend import njit, pick

GTOL_CONVERGED = 1e-6
STEP_CONVERGED = 1e-10


@njit
def _g_and_jac(b, coef, exps, nterms):
    m = coef.shape[0]
    d = b.shape[0]
    g = np.zeros(m)
    J = np.zeros((m, d))
    for j in range(m):
        for k in range(nterms[j]):
            c = coef[j, k]
            term = c
            for i in range(d):
                e = exps[j, k, i]
                if e > 0:
                    term *= b[i] ** e
            g[j] += term
            for i in range(d):
                e = exps[j, k, i]
                if e > 0:
                    part = c * e * b[i] ** (e - 1)
                    for l in range(d):
                        if l != i and exps[j, k, l] > 0:
                            part *= b[l] ** exps[j, k, l]
                    J[j, i] += part
    return g, J


@njit
def _lm_single(b0, coef, exps, nterms, R, t, max_iter, gtol):
    d = b0.shape[0]
    b = b0.copy()
    g, Jg = _g_and_jac(b, coef, exps, nterms)
    r = R @ (g - t)
    Jr = R @ Jg
    f = r @ r
    grad = 2.0 * (Jr.T @ r)
    A = Jr.T @ Jr
    lam = 1e-3 * max(1.0, np.max(np.abs(A)))
    last_step = np.inf
    it = 0
    while it < max_iter:
        gn = np.sqrt(grad @ grad)
        if gn < gtol or last_step < STEP_CONVERGED * 1e-2:
            break
        it += 1
        H = A + lam * np.eye(d)
        delta = np.linalg.solve(H, -0.5 * grad)
        bt = b + delta
        gt, Jgt = _g_and_jac(bt, coef, exps, nterms)
        rt = R @ (gt - t)
        ft = rt @ rt
        if ft <= f:
            last_step = np.sqrt(delta @ delta) / (1.0 + np.sqrt(b @ b))
            b = bt
            r = rt
            Jr = R @ Jgt
            f = ft
            grad = 2.0 * (Jr.T @ r)
            A = Jr.T @ Jr
            lam = max(lam / 3.0, 1e-15)
        else:
            lam *= 10.0
            if lam > 1e20:
                break
    gn = np.sqrt(grad @ grad)
    return b, f, gn, last_step, it


@njit
def _lm_multi(starts, coef, exps, nterms, R, t, max_iter, gtol):
    S, d = starts.shape
    B = np.empty((S, d))
    F = np.empty(S)
    G = np.empty(S)
    steps = np.empty(S)
    iters = np.empty(S, dtype=np.int64)
    for s in range(S):
        b, f, gn, st, it = _lm_single(starts[s].copy(), coef, exps, nterms, R, t, max_iter, gtol)
        B[s] = b
        F[s] = f
        G[s] = gn
        steps[s] = st
        iters[s] = it
    return B, F, G, steps, iters


def _g_and_jac_batch(B, coef, exps, nterms):
    # B: (S, d) -> g (S, m), J (S, m, d)
    mask = np.arange(coef.shape[1])[None, :] < nterms[:, None]
    c = np.where(mask, coef, 0.0)
    pw = np.power(B[:, None, None, :], exps[None])  # (S, m, K, d)
    mono = np.prod(pw, axis=-1)
    g = np.einsum("mk,smk->sm", c, mono)
    d = B.shape[1]
    J = np.empty(g.shape + (d,))
    for i in range(d):
        e = exps[..., i]
        dexps = np.maximum(e - 1, 0)
        pw_i = pw.copy()
        pw_i[..., i] = np.where(e[None] > 0, np.power(B[:, None, None, i], dexps[None]), 0.0)
        J[..., i] = np.einsum("mk,smk->sm", c * e, np.prod(pw_i, axis=-1))
    return g, J


def quad_project_numpy(starts, coef, exps, nterms, R, t, max_iter=500, gtol=1e-12):
    starts = np.array(starts, dtype=float, ndmin=2)
    S, d = starts.shape
    B = starts.copy()
    g, Jg = _g_and_jac_batch(B, coef, exps, nterms)
    r = (g - t) @ R.T
    Jr = np.einsum("ab,sbd->sad", R, Jg)
    f = np.einsum("sa,sa->s", r, r)
    grad = 2.0 * np.einsum("sad,sa->sd", Jr, r)
    A = np.einsum("sad,sae->sde", Jr, Jr)
    lam = 1e-3 * np.maximum(1.0, np.abs(A).reshape(S, -1).max(axis=1))
    last_step = np.full(S, np.inf)
    iters = np.zeros(S, dtype=np.int64)
    active = np.ones(S, dtype=bool)
    eye = np.eye(d)
    for _ in range(max_iter):
        gn = np.sqrt(np.einsum("sd,sd->s", grad, grad))
        active &= ~((gn < gtol) | (last_step < STEP_CONVERGED * 1e-2)) & (lam <= 1e20)
        if not active.any():
            break
        idx = np.flatnonzero(active)
        iters[idx] += 1
        H = A[idx] + lam[idx, None, None] * eye
        delta = np.linalg.solve(H, -0.5 * grad[idx][..., None])[..., 0]
        Bt = B[idx] + delta
        gt, Jgt = _g_and_jac_batch(Bt, coef, exps, nterms)
        rt = (gt - t) @ R.T
        ft = np.einsum("sa,sa->s", rt, rt)
        ok = ft <= f[idx]
        acc, rej = idx[ok], idx[~ok]
        last_step[acc] = np.sqrt(np.einsum("sd,sd->s", delta[ok], delta[ok])) / (
            1.0 + np.sqrt(np.einsum("sd,sd->s", B[acc], B[acc])))
        B[acc] = Bt[ok]
        f[acc] = ft[ok]
        Jr_acc = np.einsum("ab,sbd->sad", R, Jgt[ok])
        grad[acc] = 2.0 * np.einsum("sad,sa->sd", Jr_acc, rt[ok])
        A[acc] = np.einsum("sad,sae->sde", Jr_acc, Jr_acc)
        lam[acc] = np.maximum(lam[acc] / 3.0, 1e-15)
        lam[rej] *= 10.0
    gn = np.sqrt(np.einsum("sd,sd->s", grad, grad))
    return B, f, gn, last_step, iters


def quad_project_numba(starts, coef, exps, nterms, R, t, max_iter=500, gtol=1e-12):
    return _lm_multi(
        np.array(starts, dtype=np.float64, ndmin=2), np.ascontiguousarray(coef, dtype=np.float64),
        np.ascontiguousarray(exps, dtype=np.int64), np.ascontiguousarray(nterms, dtype=np.int64),
        np.ascontiguousarray(R, dtype=np.float64), np.ascontiguousarray(t, dtype=np.float64),
        int(max_iter), float(gtol))


def quad_project(starts, coef, exps, nterms, R, t, max_iter=500, gtol=1e-12, backend=None):
    """Run LM from every row of ``starts``.

    Returns ``(B, f, grad_norm, last_step, iters)`` per start, where ``f`` is
    ``||R (g(b) - t)||^2`` at the final point ``B[s]``.
    """
    fn = pick(quad_project_numba, quad_project_numpy, backend)
    return fn(starts, coef, exps, nterms, R, t, max_iter, gtol)
