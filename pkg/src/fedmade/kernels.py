"""Hot numeric kernels, each in a numba and a pure-numpy flavour.

The public names (``mlp_forward``, ``mlp_loss_grad``, ``train_batches``,
``nnls_adam``, ``confusion_counts``) are bound to the numba versions unless
``FEDMADE_DISABLE_NUMBA`` is set or numba is missing. Both flavours are always
importable under ``nb_*`` / ``np_*`` so they can be benchmarked and tested
against each other.

Parameter layout shared by every kernel: ``dims = [d0, d1, ..., dL]`` and a
flat vector holding, for each layer in order, the ``d_in x d_out`` weight
matrix row-major followed by the ``d_out`` bias. Hidden layers use relu, the
last layer softmax.
"""
import numpy as np

from ._accel import USE_NUMBA, njit

SGD = 0
ADAM = 1

STATUS_OK = 0
STATUS_NONFINITE = 1


def n_params(dims):
    return int(sum(int(dims[l]) * int(dims[l + 1]) + int(dims[l + 1]) for l in range(len(dims) - 1)))


# ----------------------------------------------------------------------
# numpy flavour


def _np_layers(flat, dims):
    o = 0
    out = []
    for l in range(len(dims) - 1):
        din, dout = int(dims[l]), int(dims[l + 1])
        W = flat[o:o + din * dout].reshape(din, dout)
        o += din * dout
        b = flat[o:o + dout]
        o += dout
        out.append((W, b))
    return out


def np_mlp_forward(flat, dims, X):
    layers = _np_layers(flat, dims)
    h = X
    for l, (W, b) in enumerate(layers):
        z = h @ W + b
        if l < len(layers) - 1:
            h = np.maximum(z, 0.0)
        else:
            z = z - z.max(axis=1, keepdims=True)
            e = np.exp(z)
            h = e / e.sum(axis=1, keepdims=True)
    return h


def np_mlp_loss_grad(flat, dims, X, y, mu, anchor, corr):
    """Mean cross-entropy (+ proximal and linear correction terms) and its gradient."""
    layers = _np_layers(flat, dims)
    B = X.shape[0]
    hs = [X]
    h = X
    for l, (W, b) in enumerate(layers):
        z = h @ W + b
        if l < len(layers) - 1:
            h = np.maximum(z, 0.0)
        else:
            h = z
        hs.append(h)
    z = hs[-1]
    zmax = z.max(axis=1, keepdims=True)
    e = np.exp(z - zmax)
    s = e.sum(axis=1, keepdims=True)
    p = e / s
    lse = np.log(s[:, 0]) + zmax[:, 0]
    rows = np.arange(B)
    loss = float(np.mean(lse - z[rows, y]))

    grad = np.empty_like(flat)
    delta = p
    delta[rows, y] -= 1.0
    delta /= B
    # walk backwards filling the flat gradient
    offsets = []
    o = 0
    for l in range(len(dims) - 1):
        offsets.append(o)
        o += int(dims[l]) * int(dims[l + 1]) + int(dims[l + 1])
    for l in range(len(layers) - 1, -1, -1):
        W, _ = layers[l]
        din, dout = W.shape
        o = offsets[l]
        grad[o:o + din * dout] = (hs[l].T @ delta).ravel()
        grad[o + din * dout:o + din * dout + dout] = delta.sum(axis=0)
        if l > 0:
            delta = (delta @ W.T) * (hs[l] > 0.0)

    if mu > 0.0:
        d = flat - anchor
        loss += 0.5 * mu * float(d @ d)
        grad += mu * d
    if corr.shape[0] > 0:
        loss += float(corr @ flat)
        grad += corr
    return loss, grad


def np_train_batches(flat, dims, X, y, order, epoch_len, batch_size, kind, lr,
                     m, v, t, b1, b2, eps, mu, anchor, corr):
    """Run minibatch steps over ``order`` (epochs concatenated). Mutates flat, m, v."""
    n_epochs = order.shape[0] // epoch_len
    loss = 0.0
    for e in range(n_epochs):
        base = e * epoch_len
        for start in range(0, epoch_len, batch_size):
            stop = min(start + batch_size, epoch_len)
            idx = order[base + start:base + stop]
            loss, g = np_mlp_loss_grad(flat, dims, X[idx], y[idx], mu, anchor, corr)
            if not np.isfinite(loss) or not np.all(np.isfinite(g)):
                return t, STATUS_NONFINITE, loss
            t += 1
            if kind == ADAM:
                m *= b1
                m += (1.0 - b1) * g
                v *= b2
                v += (1.0 - b2) * g * g
                mhat = m / (1.0 - b1 ** t)
                vhat = v / (1.0 - b2 ** t)
                flat -= lr * mhat / (np.sqrt(vhat) + eps)
            else:
                flat -= lr * g
    return t, STATUS_OK, loss


def np_nnls_adam(P, target, alpha0, iters, lr, b1, b2, eps, tol, patience):
    """Projected Adam on ||P.T @ alpha - target||_2 with alpha >= 0.

    Returns (best alpha, its residual, iterations run).
    """
    alpha = alpha0.copy()
    K = alpha.shape[0]
    m = np.zeros(K)
    v = np.zeros(K)
    r = P.T @ alpha - target
    res = float(np.sqrt(r @ r))
    best = alpha.copy()
    best_res = res
    history = np.full(iters + 1, np.inf)
    history[0] = best_res
    it = 0
    for it in range(1, iters + 1):
        if res > 0.0:
            g = (P @ r) / res
        else:
            g = np.zeros(K)
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * g * g
        mhat = m / (1.0 - b1 ** it)
        vhat = v / (1.0 - b2 ** it)
        alpha = np.maximum(alpha - lr * mhat / (np.sqrt(vhat) + eps), 0.0)
        r = P.T @ alpha - target
        res = float(np.sqrt(r @ r))
        if res < best_res:
            best_res = res
            best = alpha.copy()
        history[it] = best_res
        if it >= patience and history[it - patience] - best_res < tol:
            break
    return best, best_res, it


def np_confusion_counts(preds, labels, n_classes):
    idx = labels.astype(np.int64) * n_classes + preds.astype(np.int64)
    return np.bincount(idx, minlength=n_classes * n_classes).reshape(n_classes, n_classes)


# ----------------------------------------------------------------------
# numba flavour


@njit
def nb_mlp_forward(flat, dims, X):
    L = dims.shape[0] - 1
    h = X
    o = 0
    for l in range(L):
        din = dims[l]
        dout = dims[l + 1]
        W = flat[o:o + din * dout].reshape((din, dout))
        o += din * dout
        b = flat[o:o + dout]
        o += dout
        z = np.dot(h, W)
        for i in range(z.shape[0]):
            for j in range(dout):
                z[i, j] += b[j]
        if l < L - 1:
            for i in range(z.shape[0]):
                for j in range(dout):
                    if z[i, j] < 0.0:
                        z[i, j] = 0.0
        else:
            for i in range(z.shape[0]):
                zm = z[i, 0]
                for j in range(1, dout):
                    if z[i, j] > zm:
                        zm = z[i, j]
                s = 0.0
                for j in range(dout):
                    z[i, j] = np.exp(z[i, j] - zm)
                    s += z[i, j]
                for j in range(dout):
                    z[i, j] /= s
        h = z
    return h


@njit
def _nb_loss_grad_into(flat, dims, X, y, mu, anchor, corr, grad):
    L = dims.shape[0] - 1
    B = X.shape[0]
    offsets = np.empty(L, dtype=np.int64)
    o = 0
    for l in range(L):
        offsets[l] = o
        o += dims[l] * dims[l + 1] + dims[l + 1]

    hs = [X]
    h = X
    for l in range(L):
        din = dims[l]
        dout = dims[l + 1]
        o = offsets[l]
        W = flat[o:o + din * dout].reshape((din, dout))
        b = flat[o + din * dout:o + din * dout + dout]
        z = np.dot(h, W)
        for i in range(B):
            for j in range(dout):
                z[i, j] += b[j]
                if l < L - 1 and z[i, j] < 0.0:
                    z[i, j] = 0.0
        hs.append(z)
        h = z

    nc = dims[L]
    delta = np.empty((B, nc), dtype=flat.dtype)
    loss = 0.0
    for i in range(B):
        zm = h[i, 0]
        for j in range(1, nc):
            if h[i, j] > zm:
                zm = h[i, j]
        s = 0.0
        for j in range(nc):
            delta[i, j] = np.exp(h[i, j] - zm)
            s += delta[i, j]
        loss += np.log(s) + zm - h[i, y[i]]
        for j in range(nc):
            delta[i, j] = delta[i, j] / s / B
        delta[i, y[i]] -= 1.0 / B
    loss /= B

    for l in range(L - 1, -1, -1):
        din = dims[l]
        dout = dims[l + 1]
        o = offsets[l]
        gW = np.dot(hs[l].T, delta)
        for a in range(din):
            for c in range(dout):
                grad[o + a * dout + c] = gW[a, c]
        for c in range(dout):
            s = 0.0
            for i in range(B):
                s += delta[i, c]
            grad[o + din * dout + c] = s
        if l > 0:
            W = flat[o:o + din * dout].reshape((din, dout))
            nd = np.dot(delta, W.T)
            hp = hs[l]
            for i in range(B):
                for a in range(din):
                    if hp[i, a] <= 0.0:
                        nd[i, a] = 0.0
            delta = nd

    if mu > 0.0:
        acc = 0.0
        for k in range(flat.shape[0]):
            d = flat[k] - anchor[k]
            acc += d * d
            grad[k] += mu * d
        loss += 0.5 * mu * acc
    if corr.shape[0] > 0:
        acc = 0.0
        for k in range(flat.shape[0]):
            acc += corr[k] * flat[k]
            grad[k] += corr[k]
        loss += acc
    return loss


@njit
def nb_mlp_loss_grad(flat, dims, X, y, mu, anchor, corr):
    grad = np.empty_like(flat)
    loss = _nb_loss_grad_into(flat, dims, X, y, mu, anchor, corr, grad)
    return loss, grad


@njit
def nb_train_batches(flat, dims, X, y, order, epoch_len, batch_size, kind, lr,
                     m, v, t, b1, b2, eps, mu, anchor, corr):
    n_epochs = order.shape[0] // epoch_len
    P = flat.shape[0]
    grad = np.empty_like(flat)
    loss = 0.0
    for e in range(n_epochs):
        base = e * epoch_len
        for start in range(0, epoch_len, batch_size):
            stop = min(start + batch_size, epoch_len)
            idx = order[base + start:base + stop]
            loss = _nb_loss_grad_into(flat, dims, X[idx], y[idx], mu, anchor, corr, grad)
            if not np.isfinite(loss):
                return t, STATUS_NONFINITE, loss
            for k in range(P):
                if not np.isfinite(grad[k]):
                    return t, STATUS_NONFINITE, loss
            t += 1
            if kind == ADAM:
                c1 = 1.0 - b1 ** t
                c2 = 1.0 - b2 ** t
                for k in range(P):
                    g = grad[k]
                    m[k] = b1 * m[k] + (1.0 - b1) * g
                    v[k] = b2 * v[k] + (1.0 - b2) * g * g
                    flat[k] -= lr * (m[k] / c1) / (np.sqrt(v[k] / c2) + eps)
            else:
                for k in range(P):
                    flat[k] -= lr * grad[k]
    return t, STATUS_OK, loss


@njit
def nb_nnls_adam(P, target, alpha0, iters, lr, b1, b2, eps, tol, patience):
    K = alpha0.shape[0]
    M = target.shape[0]
    alpha = alpha0.copy()
    m = np.zeros(K)
    v = np.zeros(K)
    r = np.empty(M)
    g = np.empty(K)

    def _residual(alpha, r):
        s = 0.0
        for j in range(M):
            acc = -target[j]
            for k in range(K):
                acc += P[k, j] * alpha[k]
            r[j] = acc
            s += acc * acc
        return np.sqrt(s)

    res = _residual(alpha, r)
    best = alpha.copy()
    best_res = res
    history = np.full(iters + 1, np.inf)
    history[0] = best_res
    it = 0
    for it in range(1, iters + 1):
        for k in range(K):
            acc = 0.0
            if res > 0.0:
                for j in range(M):
                    acc += P[k, j] * r[j]
                acc /= res
            g[k] = acc
        c1 = 1.0 - b1 ** it
        c2 = 1.0 - b2 ** it
        for k in range(K):
            m[k] = b1 * m[k] + (1.0 - b1) * g[k]
            v[k] = b2 * v[k] + (1.0 - b2) * g[k] * g[k]
            a = alpha[k] - lr * (m[k] / c1) / (np.sqrt(v[k] / c2) + eps)
            alpha[k] = a if a > 0.0 else 0.0
        res = _residual(alpha, r)
        if res < best_res:
            best_res = res
            best[:] = alpha
        history[it] = best_res
        if it >= patience and history[it - patience] - best_res < tol:
            break
    return best, best_res, it


@njit
def nb_confusion_counts(preds, labels, n_classes):
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    for i in range(preds.shape[0]):
        cm[labels[i], preds[i]] += 1
    return cm


if USE_NUMBA:
    mlp_forward = nb_mlp_forward
    mlp_loss_grad = nb_mlp_loss_grad
    train_batches = nb_train_batches
    nnls_adam = nb_nnls_adam
    confusion_counts = nb_confusion_counts
else:
    mlp_forward = np_mlp_forward
    mlp_loss_grad = np_mlp_loss_grad
    train_batches = np_train_batches
    nnls_adam = np_nnls_adam
    confusion_counts = np_confusion_counts

BACKEND = "numba" if USE_NUMBA else "numpy"
