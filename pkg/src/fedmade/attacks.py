"""Poisoning adversaries: label flipping on client data, parameter scaling on uploads."""
import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .data import Dataset
from .errors import ConfigError
from .nn import ModelParams, scale

log = logging.getLogger(__name__)

NONE = "none"
DATA_POISON = "data_poison"
MODEL_POISON = "model_poison"
ATTACK_TO_BENIGN = "attack_to_benign"
BENIGN_TO_ATTACK = "benign_to_attack"


@dataclass
class AdversaryConfig:
    kind: str = NONE
    direction: Optional[str] = None
    compromised_fraction: float = 0.0
    scale: float = 1.0
    seed: int = 0

    def validate(self):
        if self.kind not in (NONE, DATA_POISON, MODEL_POISON):
            raise ConfigError(f"adversary.kind: unknown value {self.kind!r}")
        if not 0.0 <= self.compromised_fraction <= 1.0:
            raise ConfigError("adversary.compromised_fraction must lie in [0, 1]")
        if self.kind == MODEL_POISON and not self.scale > 1.0:
            raise ConfigError("adversary.scale must be > 1 for model poisoning")
        if self.kind == DATA_POISON and self.direction not in (ATTACK_TO_BENIGN, BENIGN_TO_ATTACK):
            raise ConfigError("adversary.direction must be attack_to_benign or benign_to_attack")
        if not np.isfinite(self.scale):
            raise ConfigError("adversary.scale must be finite")


def select_compromised(client_ids, fraction: float, rng: np.random.Generator) -> frozenset:
    if not 0.0 <= fraction <= 1.0:
        raise ConfigError("compromised fraction must lie in [0, 1]")
    ids = np.asarray(sorted(client_ids))
    k = int(np.floor(fraction * len(ids) + 1e-9))
    if k == 0:
        return frozenset()
    return frozenset(int(i) for i in rng.choice(ids, size=k, replace=False))


def flip_labels(dataset: Dataset, direction: str) -> Dataset:
    """Relabel a compromised client's data; features are left untouched."""
    y = dataset.labels.copy()
    if direction == ATTACK_TO_BENIGN:
        y[y != 0] = 0
    elif direction == BENIGN_TO_ATTACK:
        counts = dataset.class_counts()
        counts[0] = 0
        if counts.sum() == 0:
            log.warning("client holds no attack samples; benign rows relabelled to class 1")
            target = 1
        else:
            target = int(np.argmax(counts))  # first maximum = lowest index on ties
        y[y == 0] = target
    else:
        raise ConfigError(f"unknown flip direction {direction!r}")
    return dataset.replace(labels=y)


def scale_model(model: ModelParams, factor: float) -> ModelParams:
    if not np.isfinite(factor):
        raise ConfigError("scale factor must be finite")
    return scale(model, factor)
