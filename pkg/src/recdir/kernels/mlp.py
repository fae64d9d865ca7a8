"""One-hidden-layer MLP: loss, analytic gradients and an Adam training loop.

Strategies
----------
``DIRECT`` (0)
    ``o = W2 tanh(W1 x + b1) + b2`` with one output per horizon step; loss is
    the mean over samples and outputs.
``RECURSIVE`` (1)
    A one-output net applied ``h`` times; after each application the output is
    prepended to the window and the oldest lag dropped. ``loss_mode`` 0 scores
    only the last step, 1 averages over all steps. Gradients flow through the
    fed-back predictions.

``act`` 0 is tanh, 1 is the identity (used by tests to collapse the net to a
linear map).
"""
import numpy as np

from .._backend import njit, pick

DIRECT = 0
RECURSIVE = 1
TANH = 0
IDENTITY = 1


# ---------------------------------------------------------------------------
# numba


@njit
def _act(z, act):
    if act == TANH:
        return np.tanh(z)
    return z


@njit
def _nb_predict(W1, b1, W2, b2, X, strategy, horizon, act):
    n, p = X.shape
    H = W1.shape[0]
    out = np.empty((n, horizon))
    x = np.empty(p)
    a = np.empty(H)
    for i in range(n):
        if strategy == DIRECT:
            for j in range(H):
                z = b1[j]
                for k in range(p):
                    z += W1[j, k] * X[i, k]
                a[j] = _act(z, act)
            for o in range(horizon):
                s = b2[o]
                for j in range(H):
                    s += W2[o, j] * a[j]
                out[i, o] = s
        else:
            for k in range(p):
                x[k] = X[i, k]
            for step in range(horizon):
                for j in range(H):
                    z = b1[j]
                    for k in range(p):
                        z += W1[j, k] * x[k]
                    a[j] = _act(z, act)
                s = b2[0]
                for j in range(H):
                    s += W2[0, j] * a[j]
                out[i, step] = s
                for k in range(p - 1, 0, -1):
                    x[k] = x[k - 1]
                x[0] = s
    return out


@njit
def _nb_loss_grad(W1, b1, W2, b2, X, Y, strategy, loss_mode, act):
    n, p = X.shape
    H = W1.shape[0]
    horizon = Y.shape[1]
    gW1 = np.zeros_like(W1)
    gb1 = np.zeros_like(b1)
    gW2 = np.zeros_like(W2)
    gb2 = np.zeros_like(b2)
    loss = 0.0
    if strategy == DIRECT:
        a = np.empty(H)
        do = np.empty(horizon)
        scale = 1.0 / (n * horizon)
        for i in range(n):
            for j in range(H):
                z = b1[j]
                for k in range(p):
                    z += W1[j, k] * X[i, k]
                a[j] = _act(z, act)
            for o in range(horizon):
                s = b2[o]
                for j in range(H):
                    s += W2[o, j] * a[j]
                e = s - Y[i, o]
                loss += e * e * scale
                do[o] = 2.0 * e * scale
                gb2[o] += do[o]
                for j in range(H):
                    gW2[o, j] += do[o] * a[j]
            for j in range(H):
                da = 0.0
                for o in range(horizon):
                    da += W2[o, j] * do[o]
                dz = da * (1.0 - a[j] * a[j]) if act == TANH else da
                gb1[j] += dz
                for k in range(p):
                    gW1[j, k] += dz * X[i, k]
        return loss, gW1, gb1, gW2, gb2

    xs = np.empty((horizon, p))
    As = np.empty((horizon, H))
    outs = np.empty(horizon)
    dout = np.empty(horizon)
    dx = np.empty((horizon, p))
    if loss_mode == 0:
        scale = 1.0 / n
    else:
        scale = 1.0 / (n * horizon)
    for i in range(n):
        for k in range(p):
            xs[0, k] = X[i, k]
        for step in range(horizon):
            for j in range(H):
                z = b1[j]
                for k in range(p):
                    z += W1[j, k] * xs[step, k]
                As[step, j] = _act(z, act)
            s = b2[0]
            for j in range(H):
                s += W2[0, j] * As[step, j]
            outs[step] = s
            if step + 1 < horizon:
                xs[step + 1, 0] = s
                for k in range(1, p):
                    xs[step + 1, k] = xs[step, k - 1]
        for step in range(horizon):
            dout[step] = 0.0
            if loss_mode == 1 or step == horizon - 1:
                e = outs[step] - Y[i, step]
                loss += e * e * scale
                dout[step] = 2.0 * e * scale
        for step in range(horizon):
            for k in range(p):
                dx[step, k] = 0.0
        for step in range(horizon - 1, -1, -1):
            # the fed-back prediction sits at position 0 of the next window,
            # and earlier predictions shift one slot per step
            if step + 1 < horizon:
                dout[step] += dx[step + 1, 0]
                for k in range(1, min(step + 1, p)):
                    dx[step, k - 1] += dx[step + 1, k]
            d = dout[step]
            gb2[0] += d
            for j in range(H):
                a = As[step, j]
                gW2[0, j] += d * a
                da = W2[0, j] * d
                dz = da * (1.0 - a * a) if act == TANH else da
                gb1[j] += dz
                for k in range(p):
                    gW1[j, k] += dz * xs[step, k]
                for k in range(min(step, p)):
                    dx[step, k] += W1[j, k] * dz
    return loss, gW1, gb1, gW2, gb2


@njit
def _nb_mse_last(W1, b1, W2, b2, X, Y, strategy, act):
    pred = _nb_predict(W1, b1, W2, b2, X, strategy, Y.shape[1], act)
    h = Y.shape[1] - 1
    s = 0.0
    for i in range(X.shape[0]):
        e = pred[i, h] - Y[i, h]
        s += e * e
    return s / X.shape[0]


@njit
def _adam(param, grad, m, v, lr, b1c, b2c, beta1, beta2, eps):
    flat_p = param.ravel()
    flat_g = grad.ravel()
    flat_m = m.ravel()
    flat_v = v.ravel()
    for k in range(flat_p.shape[0]):
        g = flat_g[k]
        flat_m[k] = beta1 * flat_m[k] + (1.0 - beta1) * g
        flat_v[k] = beta2 * flat_v[k] + (1.0 - beta2) * g * g
        mh = flat_m[k] / b1c
        vh = flat_v[k] / b2c
        flat_p[k] -= lr * mh / (np.sqrt(vh) + eps)


@njit
def _nb_train(W1, b1, W2, b2, X, Y, perms, lr, batch_size, strategy, loss_mode, act,
              beta1, beta2, eps):
    n = X.shape[0]
    epochs = perms.shape[0]
    mW1 = np.zeros_like(W1); vW1 = np.zeros_like(W1)
    mb1 = np.zeros_like(b1); vb1 = np.zeros_like(b1)
    mW2 = np.zeros_like(W2); vW2 = np.zeros_like(W2)
    mb2 = np.zeros_like(b2); vb2 = np.zeros_like(b2)
    curve = np.full(epochs, np.nan)
    t = 0
    failed = False
    for ep in range(epochs):
        for start in range(0, n, batch_size):
            stop = min(start + batch_size, n)
            idx = perms[ep, start:stop]
            Xb = X[idx]
            Yb = Y[idx]
            loss, gW1, gb1, gW2, gb2 = _nb_loss_grad(W1, b1, W2, b2, Xb, Yb, strategy, loss_mode, act)
            if not np.isfinite(loss):
                failed = True
                break
            t += 1
            b1c = 1.0 - beta1 ** t
            b2c = 1.0 - beta2 ** t
            _adam(W1, gW1, mW1, vW1, lr, b1c, b2c, beta1, beta2, eps)
            _adam(b1, gb1, mb1, vb1, lr, b1c, b2c, beta1, beta2, eps)
            _adam(W2, gW2, mW2, vW2, lr, b1c, b2c, beta1, beta2, eps)
            _adam(b2, gb2, mb2, vb2, lr, b1c, b2c, beta1, beta2, eps)
        if failed:
            break
        mse = _nb_mse_last(W1, b1, W2, b2, X, Y, strategy, act)
        curve[ep] = mse
        if not np.isfinite(mse):
            failed = True
            break
    return curve, failed


# ---------------------------------------------------------------------------
# numpy


def _np_act(z, act):
    return np.tanh(z) if act == TANH else z


def _np_predict(W1, b1, W2, b2, X, strategy, horizon, act):
    if strategy == DIRECT:
        return _np_act(X @ W1.T + b1, act) @ W2.T + b2
    x = X.copy()
    out = np.empty((X.shape[0], horizon))
    for step in range(horizon):
        o = _np_act(x @ W1.T + b1, act) @ W2[0] + b2[0]
        out[:, step] = o
        x = np.concatenate([o[:, None], x[:, :-1]], axis=1)
    return out


def _np_loss_grad(W1, b1, W2, b2, X, Y, strategy, loss_mode, act):
    n, p = X.shape
    horizon = Y.shape[1]
    if strategy == DIRECT:
        A = _np_act(X @ W1.T + b1, act)
        err = A @ W2.T + b2 - Y
        scale = 1.0 / (n * horizon)
        loss = float(np.sum(err * err) * scale)
        dO = 2.0 * err * scale
        dZ = dO @ W2
        if act == TANH:
            dZ = dZ * (1.0 - A * A)
        return loss, dZ.T @ X, dZ.sum(0), dO.T @ A, dO.sum(0)

    xs, As, outs = [X], [], []
    for step in range(horizon):
        A = _np_act(xs[-1] @ W1.T + b1, act)
        o = A @ W2[0] + b2[0]
        As.append(A)
        outs.append(o)
        if step + 1 < horizon:
            xs.append(np.concatenate([o[:, None], xs[-1][:, :-1]], axis=1))
    scale = 1.0 / n if loss_mode == 0 else 1.0 / (n * horizon)
    loss = 0.0
    dout = [np.zeros(n) for _ in range(horizon)]
    for step in range(horizon):
        if loss_mode == 1 or step == horizon - 1:
            e = outs[step] - Y[:, step]
            loss += float(np.sum(e * e) * scale)
            dout[step] = 2.0 * e * scale
    gW1 = np.zeros_like(W1)
    gb1 = np.zeros_like(b1)
    gW2 = np.zeros_like(W2)
    gb2 = np.zeros_like(b2)
    dx_next = None
    for step in range(horizon - 1, -1, -1):
        d = dout[step].copy()
        dx = np.zeros((n, p))
        if dx_next is not None:
            d += dx_next[:, 0]
            dx[:, :-1] += dx_next[:, 1:]
        A = As[step]
        gb2[0] += d.sum()
        gW2[0] += d @ A
        dZ = np.outer(d, W2[0])
        if act == TANH:
            dZ = dZ * (1.0 - A * A)
        gb1 += dZ.sum(0)
        gW1 += dZ.T @ xs[step]
        dx += dZ @ W1
        dx_next = dx
    return loss, gW1, gb1, gW2, gb2


def _np_train(W1, b1, W2, b2, X, Y, perms, lr, batch_size, strategy, loss_mode, act,
              beta1, beta2, eps):
    params = [W1, b1, W2, b2]
    ms = [np.zeros_like(q) for q in params]
    vs = [np.zeros_like(q) for q in params]
    n = X.shape[0]
    epochs = perms.shape[0]
    curve = np.full(epochs, np.nan)
    t = 0
    failed = False
    for ep in range(epochs):
        for start in range(0, n, batch_size):
            idx = perms[ep, start:start + batch_size]
            loss, *grads = _np_loss_grad(W1, b1, W2, b2, X[idx], Y[idx], strategy, loss_mode, act)
            if not np.isfinite(loss):
                failed = True
                break
            t += 1
            b1c = 1.0 - beta1 ** t
            b2c = 1.0 - beta2 ** t
            for q, g, m, v in zip(params, grads, ms, vs):
                m *= beta1
                m += (1.0 - beta1) * g
                v *= beta2
                v += (1.0 - beta2) * g * g
                q -= lr * (m / b1c) / (np.sqrt(v / b2c) + eps)
        if failed:
            break
        pred = _np_predict(W1, b1, W2, b2, X, strategy, Y.shape[1], act)
        mse = float(np.mean((pred[:, -1] - Y[:, -1]) ** 2))
        curve[ep] = mse
        if not np.isfinite(mse):
            failed = True
            break
    return curve, failed


# ---------------------------------------------------------------------------
# dispatch


def _c(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def mlp_predict(W1, b1, W2, b2, X, strategy, horizon, act=TANH, backend=None):
    """All-step predictions, shape ``(n, horizon)``."""
    fn = pick(_nb_predict, _np_predict, backend)
    return fn(_c(W1), _c(b1), _c(W2), _c(b2), _c(X), int(strategy), int(horizon), int(act))


def mlp_loss_grad_numba(W1, b1, W2, b2, X, Y, strategy, loss_mode=0, act=TANH):
    return _nb_loss_grad(_c(W1), _c(b1), _c(W2), _c(b2), _c(X), _c(Y), int(strategy), int(loss_mode), int(act))


def mlp_loss_grad_numpy(W1, b1, W2, b2, X, Y, strategy, loss_mode=0, act=TANH):
    return _np_loss_grad(_c(W1), _c(b1), _c(W2), _c(b2), _c(X), _c(Y), int(strategy), int(loss_mode), int(act))


def mlp_loss_grad(W1, b1, W2, b2, X, Y, strategy, loss_mode=0, act=TANH, backend=None):
    """``(loss, gW1, gb1, gW2, gb2)`` for one batch."""
    fn = pick(mlp_loss_grad_numba, mlp_loss_grad_numpy, backend)
    return fn(W1, b1, W2, b2, X, Y, strategy, loss_mode, act)


def _train_args(params, X, Y, perms, lr, batch_size, strategy, loss_mode, act, betas, eps):
    W1, b1, W2, b2 = (_c(q).copy() for q in params)
    return (W1, b1, W2, b2, _c(X), _c(Y), np.ascontiguousarray(perms, dtype=np.int64), float(lr),
            int(batch_size), int(strategy), int(loss_mode), int(act), float(betas[0]), float(betas[1]),
            float(eps))


def mlp_train_numba(params, X, Y, perms, lr, batch_size, strategy, loss_mode=0, act=TANH,
                    betas=(0.9, 0.999), eps=1e-8):
    args = _train_args(params, X, Y, perms, lr, batch_size, strategy, loss_mode, act, betas, eps)
    curve, failed = _nb_train(*args)
    return tuple(args[:4]), curve, bool(failed)


def mlp_train_numpy(params, X, Y, perms, lr, batch_size, strategy, loss_mode=0, act=TANH,
                    betas=(0.9, 0.999), eps=1e-8):
    args = _train_args(params, X, Y, perms, lr, batch_size, strategy, loss_mode, act, betas, eps)
    curve, failed = _np_train(*args)
    return tuple(args[:4]), curve, bool(failed)


def mlp_train(params, X, Y, perms, lr, batch_size, strategy, loss_mode=0, act=TANH,
              betas=(0.9, 0.999), eps=1e-8, backend=None):
    """Adam over the row orders in ``perms`` (one row per epoch).

    Returns ``(params, curve, failed)``; ``curve[e]`` is the last-step training
    MSE after epoch ``e`` and the input ``params`` are not modified.
    """
    fn = pick(mlp_train_numba, mlp_train_numpy, backend)
    return fn(params, X, Y, perms, lr, batch_size, strategy, loss_mode, act, betas, eps)
