"""Labeled, group-tagged classifier logits."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, NamedTuple

import numpy as np

from .errors import DomainError, NonFiniteError, ParseError

CELLS = ((0, 0), (0, 1), (1, 0), (1, 1))
HEADER = ("logit", "label", "group")


def cell_key(cell) -> str:
    y, a = cell
    return f"{y}{a}"


class Sample(NamedTuple):
    logit: float
    label: int
    group: int


def _readonly(arr):
    arr = np.array(arr, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class GroupedLogits:
    """Logits partitioned by (label y, group a).

    The flat arrays keep the original row order; ``cell(y, a)`` returns the
    logits of one subgroup. Instances are immutable.
    """

    logits: np.ndarray
    labels: np.ndarray
    groups: np.ndarray
    _cells: dict = field(init=False, repr=False)

    def __post_init__(self):
        logits = np.asarray(self.logits, dtype=float).ravel()
        labels = np.asarray(self.labels).ravel()
        groups = np.asarray(self.groups).ravel()
        if not (logits.shape == labels.shape == groups.shape):
            raise ValueError("logits, labels and groups must have equal length")
        if not np.all(np.isfinite(logits)):
            bad = int(np.flatnonzero(~np.isfinite(logits))[0])
            raise NonFiniteError(f"non-finite logit at index {bad}")
        for name, arr in (("label", labels), ("group", groups)):
            ok = (arr == 0) | (arr == 1)
            if not np.all(ok):
                bad = int(np.flatnonzero(~ok)[0])
                raise DomainError(f"{name} at index {bad} is {arr[bad]!r}, expected 0 or 1")
        labels = labels.astype(np.int8)
        groups = groups.astype(np.int8)
        object.__setattr__(self, "logits", _readonly(logits))
        object.__setattr__(self, "labels", _readonly(labels))
        object.__setattr__(self, "groups", _readonly(groups))
        cells = {c: _readonly(logits[(labels == c[0]) & (groups == c[1])]) for c in CELLS}
        object.__setattr__(self, "_cells", cells)

    @classmethod
    def from_samples(cls, samples: Iterable) -> "GroupedLogits":
        rows = [Sample(*s) for s in samples]
        if not rows:
            return cls(np.empty(0), np.empty(0, dtype=int), np.empty(0, dtype=int))
        logits, labels, groups = zip(*rows)
        return cls(np.array(logits, dtype=float), np.array(labels), np.array(groups))

    def __len__(self):
        return self.logits.size

    def __iter__(self) -> Iterator[Sample]:
        for x, y, a in zip(self.logits, self.labels, self.groups):
            yield Sample(float(x), int(y), int(a))

    def cell(self, y: int, a: int) -> np.ndarray:
        return self._cells[(y, a)]

    def n(self, y: int, a: int) -> int:
        return int(self._cells[(y, a)].size)

    @property
    def counts(self) -> dict:
        return {c: self.n(*c) for c in CELLS}

    @property
    def N(self) -> int:
        return int(self.logits.size)

    def group_size(self, a: int) -> int:
        """Number of samples with group ``a`` (n_0a + n_1a)."""
        return self.n(0, a) + self.n(1, a)

    def subset(self, index) -> "GroupedLogits":
        index = np.asarray(index)
        return GroupedLogits(self.logits[index], self.labels[index], self.groups[index])

    def counts_json(self) -> dict:
        return {"n": {cell_key(c): self.n(*c) for c in CELLS}}


def load_csv(path) -> GroupedLogits:
    """Read a ``logit,label,group`` CSV (header required)."""
    path = Path(path)
    logits, labels, groups = [], [], []
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: empty file, expected header {','.join(HEADER)}") from None
        header = tuple(h.strip().lstrip("﻿") for h in header)
        if header[:3] != HEADER:
            raise ParseError(f"{path}: header must start with {','.join(HEADER)}, got {','.join(header)}")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) < 3:
                raise ParseError(f"{path}:{lineno}: expected 3 fields, got {len(row)}")
            try:
                x = float(row[0])
                y = _parse_binary(row[1])
                a = _parse_binary(row[2])
            except ValueError as exc:
                raise ParseError(f"{path}:{lineno}: {exc}") from None
            if not np.isfinite(x):
                raise NonFiniteError(f"{path}:{lineno}: non-finite logit {row[0]!r}")
            if y not in (0, 1) or a not in (0, 1):
                raise DomainError(f"{path}:{lineno}: label/group must be 0 or 1, got ({row[1]}, {row[2]})")
            logits.append(x)
            labels.append(y)
            groups.append(a)
    return GroupedLogits(np.array(logits, dtype=float), np.array(labels, dtype=int),
                         np.array(groups, dtype=int))


def _parse_binary(text: str) -> float:
    # accepts "1", "1.0"; domain is checked by the caller
    v = float(text)
    return int(v) if v.is_integer() else v


def save_csv(data: GroupedLogits, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(HEADER)
        for x, y, a in zip(data.logits, data.labels, data.groups):
            writer.writerow((repr(float(x)), int(y), int(a)))
