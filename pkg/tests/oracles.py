"""Slow, obviously-correct reference implementations used by the tests."""
import numpy as np


def brute_dbscan(points, eps, min_pts):
    """Textbook DBSCAN by explicit region growing.

    Returns a partition as a frozenset of frozensets of point indices; noise
    points come back as singletons. Border points join the first cluster
    (in index order of the expanding core point) that reaches them.
    """
    X = np.asarray(points, dtype=float)
    n = len(X)
    dist = np.sqrt(((X[:, None, :] - X[None, :, :]) ** 2).sum(-1))
    neigh = [[j for j in range(n) if dist[i, j] <= eps] for i in range(n)]
    core = [len(neigh[i]) >= min_pts for i in range(n)]
    label = [None] * n
    cid = 0
    for i in range(n):
        if label[i] is not None or not core[i]:
            continue
        label[i] = cid
        queue = [i]
        while queue:
            p = queue.pop(0)
            if not core[p]:
                continue
            for q in neigh[p]:
                if label[q] is None:
                    label[q] = cid
                    queue.append(q)
        cid += 1
    groups = {}
    for i in range(n):
        key = label[i] if label[i] is not None else ("noise", i)
        groups.setdefault(key, set()).add(i)
    return frozenset(frozenset(g) for g in groups.values())


def partition_of(cluster_of):
    groups = {}
    for i, c in enumerate(cluster_of):
        groups.setdefault(int(c), set()).add(i)
    return frozenset(frozenset(g) for g in groups.values())


def _residual(P, t, alpha):
    r = P.T @ alpha - t
    return float(np.sqrt(r @ r))


def _grid_argmin(G, b, tt, axes, chunk=2_000_000):
    """Argmin of a'Ga - 2b'a + tt over the Cartesian grid ``axes``."""
    K = len(axes)
    shape = [len(a) for a in axes]
    total = int(np.prod(shape))
    best, best_val = None, np.inf
    for lo in range(0, total, chunk):
        flat = np.arange(lo, min(total, lo + chunk))
        idx = np.unravel_index(flat, shape)
        A = np.stack([axes[k][idx[k]] for k in range(K)])
        val = np.einsum("ij,ik,kj->j", A, G, A) - 2.0 * (b @ A) + tt
        j = int(np.argmin(val))
        if val[j] < best_val:
            best_val, best = val[j], A[:, j].copy()
    return best


def grid_nnls(ccpms, step=1e-3, refine=1e-4):
    """Non-negative least squares by grid search, for K <= 3.

    The optimum lies in the box [0, 2*sqrt(N_C)/||C_k||] per coordinate
    (non-negative CCPMs: ||sum a_k C_k|| >= a_k ||C_k||, and the optimum is
    no worse than alpha = 0). K <= 2 searches that whole box at ``step``;
    K = 3 first searches it at ``10*step`` and then at ``step`` around the
    best coarse point. Finally a ``refine`` grid spans two ``step`` cells
    around the incumbent. Returns ``(alpha, residual)``.
    """
    P = np.stack([np.asarray(c, float).ravel() for c in ccpms])
    nc = np.asarray(ccpms[0]).shape[0]
    t = np.eye(nc).ravel()
    K = P.shape[0]
    G, b, tt = P @ P.T, P @ t, float(t @ t)
    upper = [2.0 * np.sqrt(nc) / max(np.linalg.norm(P[k]), 1e-12) for k in range(K)]

    def box(center, half, h):
        return [np.arange(max(0.0, c - half), min(u, c + half) + h, h) for c, u in zip(center, upper)]

    if K <= 2:
        best = _grid_argmin(G, b, tt, [np.arange(0.0, u + step, step) for u in upper])
    else:
        coarse = 10 * step
        best = _grid_argmin(G, b, tt, [np.arange(0.0, u + coarse, coarse) for u in upper])
        best = _grid_argmin(G, b, tt, box(best, 2 * coarse, step))
    best = _grid_argmin(G, b, tt, box(best, 2 * step, refine))
    return best, _residual(P, t, best)


def finite_diff_grad(f, x, h=1e-5):
    """Central differences of scalar ``f`` at flat vector ``x``."""
    x = np.asarray(x, dtype=float)
    g = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def loop_forward(tensors, X):
    """Scalar-loop MLP forward pass: relu hidden layers, softmax output."""
    out = []
    L = len(tensors) // 2
    for x in np.asarray(X, dtype=float):
        a = list(x)
        for layer in range(L):
            W, b = tensors[2 * layer], tensors[2 * layer + 1]
            z = [sum(a[i] * W[i][j] for i in range(len(a))) + b[j] for j in range(len(b))]
            a = [max(0.0, v) for v in z] if layer < L - 1 else z
        m = max(a)
        e = [np.exp(v - m) for v in a]
        s = sum(e)
        out.append([v / s for v in e])
    return np.array(out)
