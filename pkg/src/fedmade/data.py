"""Client datasets: synthetic generation, CSV ingestion, scaling, partitioning, SMOTE."""
import csv
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from .errors import ConfigError, SchemaError

log = logging.getLogger(__name__)

# 7-class layout used by the desk-scale benchmark. DDoS and DoS share one
# class (the FCNN head has 7 outputs); ratios are percent of all flows.
DESK_CLASSES = ("Benign", "DDoS/DoS", "Mirai", "Recon", "Spoofing", "Web-based", "BruteForce")
DESK_RATIOS = (2.35, 72.79 + 17.33, 5.64, 0.76, 1.04, 0.05, 0.03)
DESK_SMOTE = {0: 2.0, 1: 1.0, 2: 1.0, 3: 2.0, 4: 2.0, 5: 4.0, 6: 4.0}


@dataclass
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    class_names: tuple
    feature_names: tuple = ()

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.features.ndim != 2:
            self.features = self.features.reshape(len(self.labels), -1)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.class_names = tuple(self.class_names)
        if not self.feature_names:
            self.feature_names = tuple(f"f{j}" for j in range(self.features.shape[1]))
        self.feature_names = tuple(self.feature_names)
        if self.features.shape[0] != self.labels.shape[0]:
            raise ConfigError("features and labels differ in length")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= len(self.class_names)):
            raise ConfigError("label index outside class_names")

    def __len__(self):
        return int(self.labels.shape[0])

    @property
    def num_classes(self) -> int:
        return len(self.class_names)

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.num_classes)

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=np.int64)
        return Dataset(self.features[idx], self.labels[idx], self.class_names, self.feature_names)

    def replace(self, features=None, labels=None, class_names=None) -> "Dataset":
        return Dataset(
            self.features if features is None else features,
            self.labels if labels is None else labels,
            self.class_names if class_names is None else class_names,
            self.feature_names,
        )

    def by_class(self) -> List[np.ndarray]:
        return [self.features[self.labels == c] for c in range(self.num_classes)]


def concat(parts: Sequence[Dataset]) -> Dataset:
    ref = parts[0]
    return Dataset(
        np.concatenate([p.features for p in parts]),
        np.concatenate([p.labels for p in parts]),
        ref.class_names,
        ref.feature_names,
    )


def empty_like(ds: Dataset) -> Dataset:
    return Dataset(np.zeros((0, ds.features.shape[1])), np.zeros(0, dtype=np.int64),
                   ds.class_names, ds.feature_names)


# ----------------------------------------------------------------------
# synthetic data


@dataclass
class ClassSpec:
    name: str
    sample_count: int
    victims: List[int]
    centers: List[List[float]]
    noise: float = 0.05


@dataclass
class SyntheticSpec:
    num_features: int
    num_clients: int
    classes: List[ClassSpec]
    seed: int = 0

    @property
    def num_classes(self) -> int:
        return len(self.classes)

    def validate(self):
        if self.num_clients < 1:
            raise ConfigError("num_clients must be at least 1")
        if not self.classes:
            raise ConfigError("synthetic spec has no classes")
        for c, cs in enumerate(self.classes):
            if cs.sample_count <= 0:
                raise ConfigError(f"class {cs.name!r}: sample_count must be positive")
            if not cs.victims:
                raise ConfigError(f"class {cs.name!r}: empty victim list")
            bad = [v for v in cs.victims if not 0 <= v < self.num_clients]
            if bad:
                raise ConfigError(f"class {cs.name!r}: victims {bad} outside [0, {self.num_clients})")
            if not cs.centers:
                raise ConfigError(f"class {cs.name!r}: needs at least one center")
            for ctr in cs.centers:
                if len(ctr) != self.num_features:
                    raise ConfigError(f"class {cs.name!r}: center length {len(ctr)} != num_features")
            if cs.noise < 0:
                raise ConfigError(f"class {cs.name!r}: noise must be non-negative")
        if sorted(set(self.classes[0].victims)) != list(range(self.num_clients)):
            raise ConfigError("benign class (index 0) must list every client as a victim")

    def to_dict(self):
        return {
            "num_features": self.num_features,
            "num_clients": self.num_clients,
            "seed": self.seed,
            "classes": [
                {"name": c.name, "sample_count": c.sample_count, "victims": list(c.victims),
                 "centers": [list(map(float, x)) for x in c.centers], "noise": c.noise}
                for c in self.classes
            ],
        }

    @classmethod
    def from_dict(cls, d):
        classes = [ClassSpec(c["name"], int(c["sample_count"]), [int(v) for v in c["victims"]],
                             [[float(x) for x in ctr] for ctr in c["centers"]], float(c.get("noise", 0.05)))
                   for c in d["classes"]]
        return cls(int(d["num_features"]), int(d["num_clients"]), classes, int(d.get("seed", 0)))


def table_counts(total: int, ratios: Sequence[float] = DESK_RATIOS) -> List[int]:
    r = np.asarray(ratios, dtype=float)
    return [max(1, int(round(total * x / r.sum()))) for x in r]


def desk_scale_spec(total_samples: int = 70_000, num_clients: int = 20, num_features: int = 47,
                    minority_victims: Sequence[int] = (2, 3), seed: int = 0,
                    separation: float = 1.0, minority_offset: float = 1.5,
                    noise: float = 0.12, minority_noise: float = 0.12,
                    nested_minority: bool = True, benign_offset: Optional[float] = 1.5) -> SyntheticSpec:
    """Seven-class spec with the desk-benchmark class ratios.

    Majority classes sit at random points of the unit cube scaled by
    ``separation``. Recon, Web-based and BruteForce get centers at distance
    ``minority_offset`` from a benign center, so the rare classes are easy to
    confuse with benign traffic unless a model has actually seen them.
    With ``benign_offset`` set, two of the three DDoS/DoS centers sit at that
    distance from the benign centers instead of at random points.
    """
    rng = np.random.default_rng([seed, 0x5EED])
    counts = table_counts(total_samples)
    all_clients = list(range(num_clients))
    F = num_features

    def far_center():
        return rng.uniform(0.0, separation, F)

    def near(ref, dist=minority_offset):
        d = rng.normal(size=F)
        return ref + dist * d / np.linalg.norm(d)

    benign = [far_center(), far_center()]
    # victims: majority attacks hit almost every client, minority ones a handful
    def some(frac):
        k = max(1, int(round(frac * num_clients)))
        return sorted(rng.choice(num_clients, size=k, replace=False).tolist())

    victims_web = sorted(rng.choice(num_clients, size=minority_victims[0], replace=False).tolist())
    rest = [c for c in all_clients if c not in victims_web]
    if nested_minority and minority_victims[1] >= minority_victims[0]:
        # the brute-force victims include every web victim
        extra = rng.choice(rest, size=minority_victims[1] - minority_victims[0], replace=False).tolist()
        victims_bf = sorted(victims_web + extra)
    else:
        victims_bf = sorted(rng.choice(rest, size=minority_victims[1], replace=False).tolist())
    if benign_offset is None:
        ddos = [far_center() for _ in range(3)]
    else:
        ddos = [near(benign[0], benign_offset), near(benign[1], benign_offset), far_center()]
    classes = [
        ClassSpec("Benign", counts[0], all_clients, [b.tolist() for b in benign], noise),
        ClassSpec("DDoS/DoS", counts[1], all_clients, [c.tolist() for c in ddos], noise),
        ClassSpec("Mirai", counts[2], some(61 / 63), [far_center().tolist() for _ in range(2)], noise),
        ClassSpec("Recon", counts[3], all_clients, [near(benign[0]).tolist()], noise),
        ClassSpec("Spoofing", counts[4], some(58 / 63), [far_center().tolist()], noise),
        ClassSpec("Web-based", counts[5], victims_web, [near(benign[0]).tolist()], minority_noise),
        ClassSpec("BruteForce", counts[6], victims_bf, [near(benign[1]).tolist()], minority_noise),
    ]
    return SyntheticSpec(F, num_clients, classes, seed)


def generate_synthetic(spec: SyntheticSpec):
    """Gaussian blobs per class. Returns ``(dataset, victim_map)``."""
    spec.validate()
    rng = np.random.default_rng([spec.seed, 1])
    feats, labels = [], []
    for c, cs in enumerate(spec.classes):
        centers = np.asarray(cs.centers, dtype=float)
        which = np.arange(cs.sample_count) % len(centers)
        X = centers[which] + cs.noise * rng.standard_normal((cs.sample_count, spec.num_features))
        feats.append(X)
        labels.append(np.full(cs.sample_count, c, dtype=np.int64))
    ds = Dataset(np.concatenate(feats), np.concatenate(labels), tuple(cs.name for cs in spec.classes))
    victim_map = {c: list(cs.victims) for c, cs in enumerate(spec.classes)}
    return ds, victim_map


def partition_by_victims(dataset: Dataset, victim_map: Dict[int, Sequence[int]], num_clients: int,
                         rng: np.random.Generator) -> List[Dataset]:
    """Split each class's rows over its victim clients in near-equal random chunks."""
    per_client = [[] for _ in range(num_clients)]
    for c in range(dataset.num_classes):
        idx = np.flatnonzero(dataset.labels == c)
        if idx.size == 0:
            continue
        victims = list(victim_map.get(c, []))
        if not victims:
            raise ConfigError(f"class {dataset.class_names[c]!r} has samples but an empty victim list")
        bad = [v for v in victims if not 0 <= v < num_clients]
        if bad:
            raise ConfigError(f"class {dataset.class_names[c]!r}: victims {bad} outside [0, {num_clients})")
        idx = rng.permutation(idx)
        for v, chunk in zip(victims, np.array_split(idx, len(victims))):
            per_client[v].append(chunk)
    out = []
    for parts in per_client:
        idx = np.sort(np.concatenate(parts)) if parts else np.zeros(0, dtype=np.int64)
        out.append(dataset.subset(idx))
    return out


def stratified_split(dataset: Dataset, test_fraction: float, rng: np.random.Generator):
    """Per-class random split. Returns ``(train, test)``."""
    tr, te = [], []
    for c in range(dataset.num_classes):
        idx = rng.permutation(np.flatnonzero(dataset.labels == c))
        n_test = int(round(test_fraction * idx.size))
        te.append(idx[:n_test])
        tr.append(idx[n_test:])
    return dataset.subset(np.sort(np.concatenate(tr))), dataset.subset(np.sort(np.concatenate(te)))


def take_per_class(dataset: Dataset, counts: Sequence[int], rng: np.random.Generator):
    """Draw ``counts[c]`` rows of each class. Returns ``(taken, rest)``."""
    take, keep = [], []
    for c in range(dataset.num_classes):
        idx = rng.permutation(np.flatnonzero(dataset.labels == c))
        k = min(int(counts[c]), idx.size)
        take.append(idx[:k])
        keep.append(idx[k:])
    return dataset.subset(np.sort(np.concatenate(take))), dataset.subset(np.sort(np.concatenate(keep)))


# ----------------------------------------------------------------------
# scaling


@dataclass
class ScalerParams:
    min: np.ndarray
    max: np.ndarray


def fit_minmax(dataset: Dataset) -> ScalerParams:
    if len(dataset) == 0:
        raise ConfigError("cannot fit a scaler on an empty dataset")
    return ScalerParams(dataset.features.min(axis=0), dataset.features.max(axis=0))


def apply_minmax(dataset: Dataset, params: ScalerParams) -> Dataset:
    """(x - min) / (max - min); constant features map to 0, nothing is clipped."""
    rng_ = params.max - params.min
    const = rng_ == 0
    denom = np.where(const, 1.0, rng_)
    X = (dataset.features - params.min) / denom
    X[:, const] = 0.0
    return dataset.replace(features=X)


# ----------------------------------------------------------------------
# SMOTE


def smote_oversample(dataset: Dataset, multipliers: Dict[int, float], k: int = 5,
                     rng: Optional[np.random.Generator] = None) -> Dataset:
    """Grow class ``c`` to ``round(multipliers[c] * n_c)`` rows.

    Synthetic rows are ``x + u * (x_nn - x)`` with ``x`` a random real row of
    the class, ``x_nn`` one of its ``k`` nearest same-class neighbours and
    ``u ~ U[0, 1]``. Original rows come first and are kept unchanged.
    """
    if k < 1:
        raise ConfigError("SMOTE needs k >= 1")
    rng = rng if rng is not None else np.random.default_rng(0)
    new_X, new_y = [dataset.features], [dataset.labels]
    for c in sorted(multipliers):
        mult = float(multipliers[c])
        if mult < 1.0:
            raise ConfigError(f"SMOTE multiplier for class {c} is {mult}; originals are kept so it must be >= 1")
        X = dataset.features[dataset.labels == c]
        n = X.shape[0]
        n_syn = int(round(mult * n)) - n
        if n == 0 or n_syn <= 0:
            continue
        if n == 1:
            log.warning("class %s has a single sample; duplicating instead of interpolating",
                        dataset.class_names[c])
            syn = np.repeat(X, n_syn, axis=0)
        else:
            kk = min(k, n - 1)
            sq = np.sum(X * X, axis=1)
            d2 = sq[:, None] + sq[None, :] - 2.0 * X @ X.T
            np.fill_diagonal(d2, np.inf)
            nbrs = np.argsort(d2, axis=1, kind="stable")[:, :kk]
            base = rng.integers(0, n, size=n_syn)
            pick = nbrs[base, rng.integers(0, kk, size=n_syn)]
            u = rng.random((n_syn, 1))
            syn = X[base] + u * (X[pick] - X[base])
        new_X.append(syn)
        new_y.append(np.full(n_syn, c, dtype=np.int64))
    return dataset.replace(features=np.concatenate(new_X), labels=np.concatenate(new_y))


def collapse_to_binary(dataset: Dataset) -> Dataset:
    labels = (dataset.labels > 0).astype(np.int64)
    return dataset.replace(labels=labels, class_names=(dataset.class_names[0], "attack"))


# ----------------------------------------------------------------------
# CSV


@dataclass
class CsvSchema:
    feature_columns: List[str]
    label_column: str
    class_names: List[str]

    def to_dict(self):
        return {"feature_columns": list(self.feature_columns), "label_column": self.label_column,
                "class_names": list(self.class_names)}

    @classmethod
    def from_dict(cls, d):
        return cls(list(d["feature_columns"]), str(d["label_column"]), list(d["class_names"]))


def load_csv(path, schema: CsvSchema) -> Dataset:
    index = {name: i for i, name in enumerate(schema.class_names)}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: file is empty") from None
        header = [h.strip() for h in header]
        cols = {h: i for i, h in enumerate(header)}
        for name in list(schema.feature_columns) + [schema.label_column]:
            if name not in cols:
                raise SchemaError(f"{path}: missing column {name!r}")
        fidx = [cols[n] for n in schema.feature_columns]
        lidx = cols[schema.label_column]
        rows, labels = [], []
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                rows.append([float(row[i]) for i in fidx])
            except (ValueError, IndexError) as exc:
                raise SchemaError(f"{path}: line {line_no}: cannot parse row ({exc})") from None
            lab = row[lidx].strip()
            if lab not in index:
                raise SchemaError(
                    f"{path}: line {line_no}: unknown label {lab!r}; known classes: {list(schema.class_names)}"
                )
            labels.append(index[lab])
    if not rows:
        raise SchemaError(f"{path}: no data rows (empty dataset)")
    X = np.asarray(rows, dtype=np.float64)
    if not np.all(np.isfinite(X)):
        raise SchemaError(f"{path}: non-finite feature values")
    return Dataset(X, np.asarray(labels, dtype=np.int64), tuple(schema.class_names),
                   tuple(schema.feature_columns))
