"""Synthetic logits: three-component Gaussian mixtures per cell plus Gaussian noise.

Stream layout (numpy ``PCG64`` seeded with ``seed``), cells in the order
(0,0), (0,1), (1,0), (1,1); for each cell:

1. ``n`` component indices via ``Generator.choice(3, size=n, p=weights)``
2. ``n`` normal draws ``Generator.normal(means[c], sqrt(variances[c]))``
3. ``n`` noise draws ``Generator.normal(0, noise_sd)``
4. a permutation of ``range(n)`` for the train/val/test split

Rows are emitted cell by cell in the same order.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import CELLS, GroupedLogits, cell_key
from .errors import ConfigError

SPLIT_FRACTIONS = (("train", 0.70), ("val", 0.15))


@dataclass(frozen=True)
class CellMixture:
    means: tuple
    variances: tuple
    weights: tuple
    n: int

    def __post_init__(self):
        for name in ("means", "variances", "weights"):
            object.__setattr__(self, name, tuple(float(v) for v in getattr(self, name)))
        if not (len(self.means) == len(self.variances) == len(self.weights) >= 1):
            raise ConfigError("means, variances and weights must have equal nonzero length")
        if any(v <= 0 for v in self.variances):
            raise ConfigError("variances must be positive")
        if any(w < 0 for w in self.weights) or abs(sum(self.weights) - 1.0) > 1e-9:
            raise ConfigError("weights must be nonnegative and sum to 1")
        if int(self.n) != self.n or self.n <= 0:
            raise ConfigError("sample count must be a positive integer")

    @property
    def mean(self) -> float:
        return sum(w * m for w, m in zip(self.weights, self.means))

    def variance(self, noise_sd: float = 0.0) -> float:
        second = sum(w * (v + m * m) for w, m, v in zip(self.weights, self.means, self.variances))
        return second - self.mean ** 2 + noise_sd ** 2


@dataclass(frozen=True)
class MixtureConfig:
    cells: dict
    noise_sd: float = 1.0
    seed: int = 0

    def __post_init__(self):
        missing = [c for c in CELLS if c not in self.cells]
        if missing:
            raise ConfigError(f"mixture config is missing cells {missing}")
        if not self.noise_sd >= 0:
            raise ConfigError("noise_sd must be nonnegative")

    def to_dict(self) -> dict:
        return {
            "cells": {cell_key(c): {"means": list(m.means), "variances": list(m.variances),
                                    "weights": list(m.weights), "n": m.n}
                      for c, m in ((c, self.cells[c]) for c in CELLS)},
            "noise_sd": self.noise_sd,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "MixtureConfig":
        try:
            cells = {(int(k[0]), int(k[1])): CellMixture(v["means"], v["variances"], v["weights"], v["n"])
                     for k, v in doc["cells"].items()}
            return cls(cells, float(doc.get("noise_sd", 1.0)), int(doc.get("seed", 0)))
        except (KeyError, TypeError, ValueError, IndexError) as exc:
            raise ConfigError(f"malformed mixture config: {exc}") from None


def paper_config(seed: int = 0, noise_sd: float = 1.0) -> MixtureConfig:
    """The four-cell benchmark configuration (40,000 samples)."""
    return MixtureConfig({
        (0, 0): CellMixture((-7.0, -2.0, 1.1), (3.0, 1.5, 2.0), (0.3, 0.5, 0.2), 5000),
        (0, 1): CellMixture((-4.5, -1.2, 1.2), (1.2, 1.5, 2.0), (0.3, 0.5, 0.2), 10000),
        (1, 0): CellMixture((-1.8, 1.5, 6.0), (1.2, 1.3, 2.0), (0.2, 0.5, 0.3), 15000),
        (1, 1): CellMixture((-1.1, 2.3, 7.0), (1.2, 1.5, 2.0), (0.2, 0.4, 0.4), 10000),
    }, noise_sd=noise_sd, seed=seed)


@dataclass
class SynthDataset:
    data: GroupedLogits
    splits: dict = field(default_factory=dict)
    config: MixtureConfig | None = None

    def split(self, name: str) -> GroupedLogits:
        return self.data.subset(self.splits[name])


def split_sizes(n: int) -> tuple:
    train = math.floor(0.70 * n)
    val = math.floor(0.15 * n)
    return train, val, n - train - val


def generate(config: MixtureConfig) -> SynthDataset:
    rng = np.random.Generator(np.random.PCG64(config.seed))
    logits, labels, groups = [], [], []
    splits = {"train": [], "val": [], "test": []}
    offset = 0
    for y, a in CELLS:
        mix = config.cells[(y, a)]
        comp = rng.choice(len(mix.weights), size=mix.n, p=np.asarray(mix.weights))
        means = np.asarray(mix.means)[comp]
        sds = np.sqrt(np.asarray(mix.variances))[comp]
        latent = rng.normal(means, sds)
        noise = rng.normal(0.0, config.noise_sd, size=mix.n) if config.noise_sd > 0 else np.zeros(mix.n)
        perm = rng.permutation(mix.n)
        n_train, n_val, _ = split_sizes(mix.n)
        splits["train"].append(offset + perm[:n_train])
        splits["val"].append(offset + perm[n_train:n_train + n_val])
        splits["test"].append(offset + perm[n_train + n_val:])
        logits.append(latent + noise)
        labels.append(np.full(mix.n, y))
        groups.append(np.full(mix.n, a))
        offset += mix.n
    data = GroupedLogits(np.concatenate(logits), np.concatenate(labels), np.concatenate(groups))
    splits = {k: np.sort(np.concatenate(v)) for k, v in splits.items()}
    return SynthDataset(data, splits, config)


def write_sidecar(dataset: SynthDataset, path) -> None:
    doc = {
        "config": dataset.config.to_dict() if dataset.config else None,
        "seed": dataset.config.seed if dataset.config else None,
        "generator": "numpy.random.PCG64",
        "counts": dataset.data.counts_json()["n"],
        "splits": {k: int(len(v)) for k, v in dataset.splits.items()},
    }
    Path(path).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
