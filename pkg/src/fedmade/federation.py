"""Round loop: sampling, local training, adversaries, aggregation, best-model retention."""
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from . import aggregation as agg
from . import attacks
from . import data as D
from . import nn
from .config import ExperimentConfig, validate
from .errors import ConfigError, FedMadeError, NumericalError
from .metrics import confusion, summarize

log = logging.getLogger(__name__)

HONEST = "honest"
DATA_POISONER = "data_poisoner"
MODEL_POISONER = "model_poisoner"

# purpose tags for seed derivation: (seed, tag, round, client_id)
_TAGS = {"data": 1, "split": 2, "holdout": 3, "partition": 4, "smote": 5, "adversary": 6,
         "init": 7, "sample": 8, "local": 9, "aux": 10}


def derive_rng(seed: int, purpose: str, *parts: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), _TAGS[purpose], *[int(p) for p in parts]])


@dataclass
class ClientState:
    client_id: int
    dataset: D.Dataset
    role: str = HONEST
    control_variate: Optional[np.ndarray] = None


@dataclass
class RoundRecord:
    round: int
    participants: List[int]
    per_class_accuracy: List[float]
    accuracy: float
    precision: float
    recall: float
    f1: float
    duration: float
    best_accuracy: float
    improved: bool
    failed: List[int] = field(default_factory=list)
    beta: Optional[List[float]] = None
    K: Optional[int] = None
    residual: Optional[float] = None
    alpha: Optional[List[float]] = None
    cluster_ids: Optional[List[int]] = None

    def to_dict(self):
        return dict(self.__dict__)


@dataclass
class ExperimentReport:
    config: dict
    rounds: List[RoundRecord]
    class_names: List[str]
    best_round: Optional[int] = None
    final: Optional[dict] = None
    compromised: List[int] = field(default_factory=list)
    aborted: bool = False
    error: Optional[str] = None
    wall_clock: float = 0.0
    backend: str = ""
    data_summary: dict = field(default_factory=dict)
    best_model: Optional[nn.ModelParams] = field(default=None, repr=False, compare=False)

    @property
    def mean_round_duration(self) -> float:
        return float(np.mean([r.duration for r in self.rounds])) if self.rounds else 0.0


@dataclass
class Prepared:
    clients: List[ClientState]
    aux: D.Dataset
    validation: D.Dataset
    test: D.Dataset
    holdout_pool: D.Dataset
    class_names: tuple
    compromised: frozenset


def sample_clients(all_ids, gamma: float, rng: np.random.Generator) -> List[int]:
    """floor(gamma * n) clients uniformly without replacement (at least one), sorted."""
    if not 0.0 < gamma <= 1.0:
        raise ConfigError(f"sampling rate must satisfy 0 < gamma <= 1, got {gamma}")
    ids = sorted(int(i) for i in all_ids)
    if gamma >= 1.0:
        return ids
    k = max(1, int(np.floor(gamma * len(ids) + 1e-9)))
    return sorted(int(i) for i in rng.choice(ids, size=k, replace=False))


def evaluate(model: nn.ModelParams, dataset: D.Dataset, positive_class: int = 1) -> dict:
    if len(dataset) == 0:
        raise ConfigError("cannot evaluate on an empty dataset")
    preds = nn.predict(model, dataset.features)
    nc = dataset.num_classes
    cm = confusion(preds, dataset.labels, nc)
    s = summarize(cm, positive_class=min(positive_class, nc - 1))
    out = s.to_dict()
    out["confusion"] = cm.counts.tolist()
    if nc > 2:
        # attack-detection view of a multiclass model
        bin_cm = np.array([[cm.counts[0, 0], cm.counts[0, 1:].sum()],
                           [cm.counts[1:, 0].sum(), cm.counts[1:, 1:].sum()]])
        out["binary_view"] = summarize(type(cm)(bin_cm), positive_class=1).to_dict()
    return out


# ----------------------------------------------------------------------
# data preparation


def _load_source(cfg: ExperimentConfig):
    d = cfg.data
    if d.source == "synthetic":
        spec = d.synthetic.build(cfg.seed)
        ds, victim_map = D.generate_synthetic(spec)
        return ds, None, victim_map, spec.num_clients
    c = d.csv
    schema = c.schema()
    train = D.load_csv(c.train_path, schema)
    test = D.load_csv(c.test_path, schema) if c.test_path else None
    return train, test, {int(k): list(v) for k, v in c.victim_map.items()}, c.num_clients


def prepare(cfg: ExperimentConfig) -> Prepared:
    full, test, victim_map, num_clients = _load_source(cfg)
    if test is None:
        train, test = D.stratified_split(full, cfg.data.test_fraction, derive_rng(cfg.seed, "split"))
    else:
        train = full
    scaler = D.fit_minmax(train)
    train = D.apply_minmax(train, scaler)
    test = D.apply_minmax(test, scaler)

    counts = train.class_counts()
    aux_n = cfg.fedmade.aux_per_class
    cap = cfg.data.holdout_cap
    # the server never keeps more than holdout_cap of a class (at least one row)
    val_n = [min(n, max(1, min(max(aux_n, cfg.data.validation_per_class), int(cap * n)))) for n in counts]
    for c, (n, v) in enumerate(zip(counts, val_n)):
        if 0 < v < aux_n:
            log.warning("class %s: %d training rows, auxiliary set limited to %d of %d",
                        train.class_names[c], n, v, aux_n)
    validation, rest = D.take_per_class(train, val_n, derive_rng(cfg.seed, "holdout"))
    aux, _ = D.take_per_class(validation, [aux_n] * train.num_classes, derive_rng(cfg.seed, "aux", 0))

    parts = D.partition_by_victims(rest, victim_map, num_clients, derive_rng(cfg.seed, "partition"))

    adv = cfg.adversary
    compromised = frozenset()
    if adv.kind != attacks.NONE:
        compromised = attacks.select_compromised(range(num_clients), adv.compromised_fraction,
                                                 derive_rng(adv.seed if adv.seed else cfg.seed, "adversary"))
    clients = []
    for cid, ds in enumerate(parts):
        if len(ds) == 0:
            raise ConfigError(f"client {cid} receives no training data")
        if cfg.smote.enabled:
            ds = D.smote_oversample(ds, cfg.smote.multipliers, cfg.smote.k, derive_rng(cfg.seed, "smote", 0, cid))
        role = HONEST
        if cid in compromised:
            if adv.kind == attacks.DATA_POISON:
                ds = attacks.flip_labels(ds, adv.direction)
                role = DATA_POISONER
            else:
                role = MODEL_POISONER
        if cfg.data.binary:
            ds = D.collapse_to_binary(ds)
        clients.append(ClientState(cid, ds, role))

    if cfg.data.binary:
        aux, validation, test, rest = (D.collapse_to_binary(x) for x in (aux, validation, test, rest))
    return Prepared(clients, aux, validation, test, validation, aux.class_names, compromised)


# ----------------------------------------------------------------------
# local training


@dataclass
class LocalResult:
    client_id: int
    model: Optional[nn.ModelParams]
    num_samples: int
    variate_delta: Optional[np.ndarray] = None
    error: Optional[str] = None


def local_update(global_model: nn.ModelParams, client: ClientState, cfg: ExperimentConfig,
                 rng: np.random.Generator, server_variate: Optional[np.ndarray] = None) -> LocalResult:
    """E epochs of minibatch training from the global model with a fresh optimizer.

    For SCAFFOLD the client's control variate is updated in place on
    ``client`` and the change is returned as ``variate_delta``.
    """
    ds = client.dataset
    if len(ds) == 0:
        raise ConfigError(f"client {client.client_id} has no data")
    if cfg.local_epochs < 1:
        raise ConfigError("local_epochs must be >= 1")
    n = global_model.flat_view.shape[0]
    opt = nn.OptimizerState.fresh(cfg.optimizer, cfg.client_lr, n, dtype=global_model.dtype)
    loss = nn.LossConfig()
    if cfg.algorithm == "fedprox":
        loss = nn.LossConfig(proximal_mu=cfg.proximal_mu)
    elif cfg.algorithm == "scaffold":
        if client.control_variate is None:
            client.control_variate = np.zeros(n)
        loss = nn.LossConfig(scaffold_correction=server_variate - client.control_variate)
    X = ds.features.astype(global_model.dtype, copy=False)
    model, opt = nn.train_epochs(global_model, X, ds.labels, opt, cfg.local_epochs, cfg.batch_size,
                                 rng, loss=loss, anchor=global_model)
    delta = None
    if cfg.algorithm == "scaffold":
        steps = max(opt.step, 1)
        if cfg.client_lr > 0:
            drift = (global_model.flat_view.astype(float) - model.flat_view.astype(float)) / (steps * cfg.client_lr)
        else:
            drift = np.zeros(n)
        new_c = client.control_variate - server_variate + drift
        delta = new_c - client.control_variate
        client.control_variate = new_c
    if client.role == MODEL_POISONER:
        model = attacks.scale_model(model, cfg.adversary.scale)
    return LocalResult(client.client_id, model, len(ds), delta)


def _safe_local(global_model, client, cfg, rng, server_variate):
    try:
        return local_update(global_model, client, cfg, rng, server_variate)
    except NumericalError as exc:
        log.warning("client %d dropped this round: %s", client.client_id, exc)
        return LocalResult(client.client_id, None, len(client.dataset), error=str(exc))


# ----------------------------------------------------------------------
# experiment


def _warm_up(model: nn.ModelParams, prep: Prepared, cfg: ExperimentConfig):
    """Load the compiled kernels so round 1 is not timed with JIT start-up."""
    ds = prep.clients[0].dataset
    X, y = ds.features[:8].astype(model.dtype, copy=False), ds.labels[:8]
    n = model.flat_view.shape[0]
    loss = nn.LossConfig()
    if cfg.algorithm == "fedprox":
        loss = nn.LossConfig(proximal_mu=cfg.proximal_mu)
    elif cfg.algorithm == "scaffold":
        loss = nn.LossConfig(scaffold_correction=np.zeros(n))
    opt = nn.OptimizerState.fresh(cfg.optimizer, cfg.client_lr, n, dtype=model.dtype)
    nn.train_epochs(model, X, y, opt, 1, cfg.batch_size, np.random.default_rng(0), loss=loss, anchor=model)
    nn.predict(model, X)
    if cfg.algorithm == "fedmade":
        agg.solve_weights([agg.compute_cpm(model, prep.aux)], iters=2)


def run_experiment(cfg: ExperimentConfig, prepared: Optional[Prepared] = None) -> ExperimentReport:
    from .config import to_dict
    from .kernels import BACKEND

    validate(cfg)
    t_start = time.perf_counter()
    prep = prepared or prepare(cfg)
    nc = len(prep.class_names)
    F = prep.test.features.shape[1]
    dtype = cfg.model.dtype
    global_model = nn.init_model([F, *cfg.model.hidden, nc], derive_rng(cfg.seed, "init"), dtype=dtype)
    n_params = global_model.flat_view.shape[0]
    server_variate = np.zeros(n_params) if cfg.algorithm == "scaffold" else None
    if cfg.algorithm == "scaffold":
        for c in prep.clients:
            c.control_variate = np.zeros(n_params)
    fm_params = cfg.fedmade.params()
    ids = [c.client_id for c in prep.clients]
    by_id = {c.client_id: c for c in prep.clients}

    report = ExperimentReport(
        config=to_dict(cfg), rounds=[], class_names=list(prep.class_names),
        compromised=sorted(prep.compromised), backend=BACKEND,
        data_summary={
            "client_sizes": [len(c.dataset) for c in prep.clients],
            "client_class_counts": [c.dataset.class_counts().tolist() for c in prep.clients],
            "aux_counts": prep.aux.class_counts().tolist(),
            "validation_counts": prep.validation.class_counts().tolist(),
            "test_counts": prep.test.class_counts().tolist(),
        },
    )
    best_model, best_acc = None, -1.0
    aux = prep.aux
    _warm_up(global_model, prep, cfg)
    pool = ThreadPoolExecutor(cfg.workers) if cfg.workers > 1 else None
    try:
        for r in range(1, cfg.rounds + 1):
            if cfg.fedmade.resample_aux and r > 1:
                aux, _ = D.take_per_class(prep.holdout_pool, [cfg.fedmade.aux_per_class] * nc,
                                          derive_rng(cfg.seed, "aux", r))
            t0 = time.perf_counter()
            U = sample_clients(ids, cfg.sampling_rate, derive_rng(cfg.seed, "sample", r))
            jobs = [(global_model, by_id[i], cfg, derive_rng(cfg.seed, "local", r, i), server_variate) for i in U]
            if pool is not None:
                results = list(pool.map(lambda a: _safe_local(*a), jobs))
            else:
                results = [_safe_local(*a) for a in jobs]
            ok = [res for res in results if res.model is not None]
            failed = [res.client_id for res in results if res.model is None]
            if not ok:
                raise NumericalError(f"round {r}: every participating client failed")
            models = [res.model for res in ok]
            diag = {}
            if cfg.algorithm == "fedmade":
                global_model, diag = agg.fedmade_aggregate(models, aux, fm_params,
                                                           client_ids=[res.client_id for res in ok])
            elif cfg.algorithm == "scaffold":
                global_model, server_variate = agg.scaffold_server_step(
                    models, [res.variate_delta for res in ok], server_variate, len(ids))
                global_model = global_model.astype(dtype)
            else:
                global_model = agg.fedavg_aggregate(models, [res.num_samples for res in ok])
            duration = time.perf_counter() - t0

            ev = evaluate(global_model, prep.validation)
            improved = ev["accuracy"] > best_acc
            if improved:
                best_acc, best_model = ev["accuracy"], global_model
                report.best_model = best_model
                report.best_round = r
            report.rounds.append(RoundRecord(
                round=r, participants=[res.client_id for res in ok],
                per_class_accuracy=ev["per_class_accuracy"], accuracy=ev["accuracy"],
                precision=ev["precision"], recall=ev["recall"], f1=ev["f1"],
                duration=duration, best_accuracy=best_acc, improved=improved, failed=failed,
                beta=diag.get("beta"), K=diag.get("K"), residual=diag.get("residual"),
                alpha=diag.get("alpha"), cluster_ids=diag.get("cluster_ids"),
            ))
            log.info("round %d: val acc %.4f (best %.4f) in %.3fs", r, ev["accuracy"], best_acc, duration)
    except FedMadeError as exc:
        report.aborted = True
        report.error = f"{type(exc).__name__}: {exc}"
        log.error("experiment aborted: %s", report.error)
    finally:
        if pool is not None:
            pool.shutdown()

    if best_model is not None:
        report.final = evaluate(best_model, prep.test)
    report.wall_clock = time.perf_counter() - t_start
    if cfg.output_dir:
        from .report import emit_report
        emit_report(report, cfg.output_dir)
    return report
