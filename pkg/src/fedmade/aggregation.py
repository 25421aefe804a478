"""Server-side aggregation: FedAvg, SCAFFOLD server step, and CPM-weighted FedMADE."""
import logging
from collections import deque
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from . import kernels
from .data import Dataset
from .errors import AggregationError, ConfigError
from .nn import ModelParams, forward, linear_combination

log = logging.getLogger(__name__)

NOISE = -1


@dataclass
class FedMadeParams:
    eps: Optional[float] = None  # None -> 0.3 * sqrt(num_classes)
    min_pts: int = 2
    iters: int = 500
    lr: float = 0.01
    tol: float = 1e-9
    patience: int = 100

    def eps_for(self, num_classes: int) -> float:
        return float(self.eps) if self.eps is not None else 0.3 * np.sqrt(num_classes)


@dataclass
class ClusterAssignment:
    cluster_of: np.ndarray
    K: int
    core: np.ndarray

    def members(self, k) -> np.ndarray:
        return np.flatnonzero(self.cluster_of == k)

    def sizes(self) -> np.ndarray:
        return np.bincount(self.cluster_of, minlength=self.K)


@dataclass
class WeightSolution:
    alpha: np.ndarray
    residual: float
    iterations: int
    fallback: bool = False


# ----------------------------------------------------------------------
# class probability matrices


def compute_cpm(model: ModelParams, aux: Dataset) -> np.ndarray:
    """Row ``c`` = mean predicted distribution over the auxiliary samples of class ``c``."""
    nc = model.num_classes
    counts = np.bincount(aux.labels, minlength=nc)
    for c in range(nc):
        if counts[c] == 0:
            name = aux.class_names[c] if c < len(aux.class_names) else str(c)
            raise ConfigError(f"auxiliary set has no samples of class {name!r}")
    probs = forward(model, aux.features).astype(np.float64, copy=False)
    onehot = np.zeros((aux.labels.size, nc))
    onehot[np.arange(aux.labels.size), aux.labels] = 1.0
    return (onehot.T @ probs) / counts[:, None]


# ----------------------------------------------------------------------
# DBSCAN


def cluster_cpms(cpms: Sequence[np.ndarray], eps: float, min_pts: int) -> ClusterAssignment:
    """DBSCAN over flattened CPMs (Euclidean), scanning in input order.

    ``min_pts`` counts the point itself. A border point joins the first
    cluster that reaches it; each noise point becomes its own cluster. Ids
    are renumbered 0.. in order of first appearance along the input.
    """
    if eps <= 0 or min_pts < 1:
        raise ConfigError("DBSCAN needs eps > 0 and min_pts >= 1")
    n = len(cpms)
    if n == 0:
        return ClusterAssignment(np.zeros(0, dtype=np.int64), 0, np.zeros(0, dtype=bool))
    pts = np.stack([np.asarray(c, dtype=float).ravel() for c in cpms])
    diff = pts[:, None, :] - pts[None, :, :]
    dist = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    nbrs = [np.flatnonzero(dist[i] <= eps) for i in range(n)]
    core = np.array([len(nb) >= min_pts for nb in nbrs])

    label = np.full(n, -2, dtype=np.int64)  # -2 unvisited
    cid = 0
    for i in range(n):
        if label[i] != -2:
            continue
        if not core[i]:
            label[i] = NOISE
            continue
        label[i] = cid
        queue = deque(nbrs[i])
        while queue:
            j = queue.popleft()
            if label[j] == NOISE:
                label[j] = cid
            if label[j] != -2:
                continue
            label[j] = cid
            if core[j]:
                queue.extend(nbrs[j])
        cid += 1
    for i in range(n):
        if label[i] == NOISE:
            label[i] = cid
            cid += 1
    # renumber by first appearance
    remap = {}
    out = np.empty(n, dtype=np.int64)
    for i in range(n):
        out[i] = remap.setdefault(int(label[i]), len(remap))
    return ClusterAssignment(out, len(remap), core)


def compute_ccpms(cpms: Sequence[np.ndarray], assignment: ClusterAssignment) -> List[np.ndarray]:
    stack = np.stack([np.asarray(c, dtype=float) for c in cpms])
    return [stack[assignment.members(k)].mean(axis=0) for k in range(assignment.K)]


# ----------------------------------------------------------------------
# weights


def solve_weights(ccpms: Sequence[np.ndarray], iters: int = 500, lr: float = 0.01,
                  tol: float = 1e-9, patience: int = 100) -> WeightSolution:
    """Non-negative alpha minimising ``||sum_k alpha_k CCPM_k - I||_F``.

    Projected Adam from the uniform start ``1/K``; stops early once the best
    residual improves by less than ``tol`` over ``patience`` iterations. The
    best iterate seen is returned.
    """
    K = len(ccpms)
    if K < 1 or iters < 1:
        raise ConfigError("solve_weights needs at least one CCPM and one iteration")
    nc = np.asarray(ccpms[0]).shape[0]
    P = np.ascontiguousarray(np.stack([np.asarray(c, dtype=np.float64).ravel() for c in ccpms]))
    target = np.eye(nc).ravel()
    alpha0 = np.full(K, 1.0 / K)
    alpha, res, it = kernels.nnls_adam(P, target, alpha0, int(iters), float(lr), 0.9, 0.999, 1e-8,
                                       float(tol), int(patience))
    alpha = np.asarray(alpha, dtype=float)
    if not np.any(alpha > 0):
        log.warning("weight solver converged to all-zero alpha; using uniform weights")
        alpha = np.full(K, 1.0 / K)
        r = P.T @ alpha - target
        return WeightSolution(alpha, float(np.sqrt(r @ r)), int(it), True)
    return WeightSolution(alpha, float(res), int(it))


def assign_client_weights(alpha, assignment: ClusterAssignment) -> np.ndarray:
    """beta_i = alpha_k / |C_k| for client i in cluster k, normalised to sum 1."""
    alpha = np.asarray(alpha, dtype=float)
    sizes = assignment.sizes()
    beta = alpha[assignment.cluster_of] / sizes[assignment.cluster_of]
    s = beta.sum()
    if not s > 0:
        raise AggregationError("all client weights are zero")
    return beta / s


def fedmade_aggregate(models: Sequence[ModelParams], aux: Dataset, params: Optional[FedMadeParams] = None,
                      client_ids: Optional[Sequence[int]] = None):
    """Cluster clients by CPM, solve cluster weights, and average.

    Models are processed in ascending ``client_ids`` order (input order when
    ids are omitted), so permuting the inputs only permutes ``beta``.
    Returns ``(global_model, diagnostics)``.
    """
    params = params or FedMadeParams()
    if len(models) == 0:
        raise AggregationError("no models to aggregate")
    ids = list(range(len(models))) if client_ids is None else [int(i) for i in client_ids]
    if len(ids) != len(models):
        raise AggregationError("client_ids and models differ in length")
    order = sorted(range(len(models)), key=lambda j: ids[j])
    ordered = [models[j] for j in order]
    for pos, m in enumerate(ordered):
        if not ordered[0].same_shape(m):
            raise AggregationError(f"client {ids[order[pos]]}: model shape does not match")

    cpms = [compute_cpm(m, aux) for m in ordered]
    nc = ordered[0].num_classes
    assignment = cluster_cpms(cpms, params.eps_for(nc), params.min_pts)
    ccpms = compute_ccpms(cpms, assignment)
    sol = solve_weights(ccpms, params.iters, params.lr, params.tol, params.patience)
    beta_sorted = assign_client_weights(sol.alpha, assignment)
    merged = linear_combination(ordered, list(beta_sorted))

    beta = np.empty(len(models))
    clusters = np.empty(len(models), dtype=np.int64)
    for pos, j in enumerate(order):
        beta[j] = beta_sorted[pos]
        clusters[j] = assignment.cluster_of[pos]
    diag = {
        "K": int(assignment.K),
        "alpha": [float(a) for a in sol.alpha],
        "beta": [float(b) for b in beta],
        "residual": float(sol.residual),
        "cluster_ids": [int(c) for c in clusters],
        "solver_iterations": int(sol.iterations),
        "fallback": bool(sol.fallback),
    }
    return merged, diag


def fedavg_weights(dataset_sizes) -> np.ndarray:
    n = np.asarray(dataset_sizes, dtype=float)
    if n.size == 0 or np.any(n <= 0):
        raise AggregationError("dataset sizes must be positive")
    return n / n.sum()


def fedavg_aggregate(models: Sequence[ModelParams], dataset_sizes) -> ModelParams:
    if len(models) != len(dataset_sizes):
        raise AggregationError("models and dataset sizes differ in length")
    return linear_combination(models, list(fedavg_weights(dataset_sizes)))


def scaffold_server_step(models: Sequence[ModelParams], client_variate_deltas, server_variate,
                         num_clients_total: int):
    """Plain mean of the models; server variate += (|U|/N) * mean(deltas)."""
    if len(models) != len(client_variate_deltas):
        raise AggregationError("models and variate deltas differ in length")
    n = len(models)
    merged = linear_combination(models, [1.0 / n] * n)
    deltas = np.stack([np.asarray(d, dtype=float) for d in client_variate_deltas])
    c = np.asarray(server_variate, dtype=float)
    if deltas.shape[1] != c.shape[0]:
        raise AggregationError("variate delta length does not match server variate")
    return merged, c + (n / num_clients_total) * deltas.mean(axis=0)
