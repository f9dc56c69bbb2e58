"""Confusion rates as functions of group thresholds, and the least-squares objective.

The objective is ``L(theta) = L_per(theta) + sum_k lambda_k * L_fair_k(theta)``
where every term is a squared residual built from the per-group rates

    TP_a = 1 - F_1a(theta_a)      FN_a = 1 - TP_a
    FP_a = 1 - F_0a(theta_a)      TN_a = 1 - FP_a

with ``F_ya`` the fitted logit CDF of cell ``(y, a)``. All functions accept
scalar or array thresholds and broadcast.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import density as dens
from .data import CELLS, GroupedLogits, cell_key
from .errors import ConfigError, EmptyCellError, EmptyGroupError

CONSTRAINT_KINDS = ("EOp", "PE", "EOd", "DP")
_KIND_LOOKUP = {k.lower(): k for k in CONSTRAINT_KINDS}


class ThresholdPair(NamedTuple):
    """Per-group decision thresholds on the logit; ``pair[a]`` is group ``a``'s."""

    theta0: float
    theta1: float

    def to_dict(self):
        return {"theta0": float(self.theta0), "theta1": float(self.theta1)}


@dataclass(frozen=True)
class Constraint:
    kind: str
    lam: float

    def __post_init__(self):
        kind = _KIND_LOOKUP.get(str(self.kind).lower())
        if kind is None:
            raise ConfigError(f"unknown constraint {self.kind!r}; choose from {', '.join(CONSTRAINT_KINDS)}")
        lam = float(self.lam)
        if not (lam >= 0 and np.isfinite(lam)):
            raise ConfigError(f"lambda for {kind} must be a finite nonnegative number, got {self.lam!r}")
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "lam", lam)


@dataclass(frozen=True)
class ObjectiveSpec:
    """Ordered fairness constraints with per-constraint weights.

    An empty constraint list is the pure-accuracy objective.
    """

    constraints: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "constraints", tuple(
            c if isinstance(c, Constraint) else Constraint(*c) for c in self.constraints))

    @classmethod
    def parse(cls, kinds, lam: float = 1.0) -> "ObjectiveSpec":
        """Build from ``"DP+EOd"`` / ``"DP,EOd"`` or a list of names, sharing one lambda."""
        if isinstance(kinds, str):
            names = [k for k in kinds.replace("+", ",").split(",") if k.strip()]
        else:
            names = list(kinds)
        return cls(tuple(Constraint(k.strip(), lam) for k in names))

    @classmethod
    def from_dict(cls, doc: dict) -> "ObjectiveSpec":
        try:
            items = doc["constraints"]
            return cls(tuple(Constraint(c["kind"], c.get("lambda", 1.0)) for c in items))
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"malformed objective spec: {exc}") from None

    @classmethod
    def from_json(cls, text: str) -> "ObjectiveSpec":
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"objective spec is not valid JSON: {exc}") from None

    def to_dict(self) -> dict:
        return {"constraints": [{"kind": c.kind, "lambda": c.lam} for c in self.constraints]}

    def with_lambda(self, lam: float) -> "ObjectiveSpec":
        return ObjectiveSpec(tuple(Constraint(c.kind, lam) for c in self.constraints))

    @property
    def label(self) -> str:
        return "+".join(c.kind for c in self.constraints) or "accuracy"


@dataclass(frozen=True, eq=False)
class DensityBundle:
    """Fitted densities ``f_ya`` for all four cells plus the cell counts ``n_ya``."""

    densities: dict
    counts: dict
    diagnostics: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        for c in CELLS:
            if c not in self.densities:
                raise EmptyCellError(c, f"no density for cell (y={c[0]}, a={c[1]})")
            n = self.counts.get(c, 0)
            if int(n) != n or n <= 0:
                raise EmptyCellError(c, f"cell (y={c[0]}, a={c[1]}) needs a positive count, got {n}")
        object.__setattr__(self, "densities", {c: self.densities[c] for c in CELLS})
        object.__setattr__(self, "counts", {c: int(self.counts[c]) for c in CELLS})

    def f(self, y, a):
        return self.densities[(y, a)]

    def n(self, y, a) -> int:
        return self.counts[(y, a)]

    @property
    def N(self) -> int:
        return sum(self.counts.values())

    def group_size(self, a) -> int:
        return self.counts[(0, a)] + self.counts[(1, a)]

    def quantile_span(self, lo=1e-3, hi=1 - 1e-3):
        """Smallest interval containing the [lo, hi] quantile range of every cell."""
        spans = [d.quantile_range(lo, hi) for d in self.densities.values()]
        return min(s[0] for s in spans), max(s[1] for s in spans)

    def to_dict(self) -> dict:
        doc = {
            "counts": {cell_key(c): self.counts[c] for c in CELLS},
            "densities": {cell_key(c): self.densities[c].to_dict() for c in CELLS},
        }
        if self.diagnostics:
            doc["nll"] = {
                cell_key(c): {f.family: (f.nll if f.density is not None else None) for f in fits}
                for c, fits in self.diagnostics.items()
            }
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "DensityBundle":
        try:
            counts = {(int(k[0]), int(k[1])): v for k, v in doc["counts"].items()}
            densities = {(int(k[0]), int(k[1])): dens.density_from_dict(v)
                         for k, v in doc["densities"].items()}
        except (KeyError, TypeError, ValueError, IndexError) as exc:
            raise ConfigError(f"malformed densities document: {exc}") from None
        return cls(densities, counts)


def fit_bundle(data: GroupedLogits, families=dens.PARAMETRIC, num_bins=None,
               kernel_sd=dens.DEFAULT_KERNEL_SD) -> DensityBundle:
    """Fit one density per cell, picking the family with the lowest mean NLL."""
    for c in CELLS:
        if data.n(*c) == 0:
            raise EmptyCellError(c)
    densities, diagnostics = {}, {}
    for c in CELLS:
        x = data.cell(*c)
        fits = dens.fit_candidates(x, families, num_bins=num_bins, kernel_sd=kernel_sd)
        densities[c] = dens.best_candidate(fits).density
        diagnostics[c] = fits
    return DensityBundle(densities, data.counts, diagnostics)


@dataclass(frozen=True)
class RateSet:
    """Per-group confusion rates; each field is a ``(group0, group1)`` pair."""

    tp: tuple
    fp: tuple

    @property
    def fn(self):
        return (1.0 - self.tp[0], 1.0 - self.tp[1])

    @property
    def tn(self):
        return (1.0 - self.fp[0], 1.0 - self.fp[1])


def rates(bundle: DensityBundle, theta) -> RateSet:
    """Confusion rates implied by the fitted CDFs at thresholds ``theta``."""
    t0, t1 = theta
    return RateSet(
        tp=(1.0 - bundle.f(1, 0).cdf(t0), 1.0 - bundle.f(1, 1).cdf(t1)),
        fp=(1.0 - bundle.f(0, 0).cdf(t0), 1.0 - bundle.f(0, 1).cdf(t1)),
    )


def _counts(counts):
    if isinstance(counts, DensityBundle):
        return counts.counts
    if isinstance(counts, GroupedLogits):
        return counts.counts
    return counts


def perf_residual(r: RateSet, counts) -> float:
    """Weighted error rate ``sum_a (n_0a/N) FP_a + (n_1a/N) FN_a`` (unsquared)."""
    n = _counts(counts)
    total = sum(n.values())
    fn = r.fn
    return sum(n[(0, a)] / total * r.fp[a] + n[(1, a)] / total * fn[a] for a in (0, 1))


def perf_loss(r: RateSet, counts) -> float:
    return perf_residual(r, counts) ** 2


def selection_rate(r: RateSet, counts, a: int):
    n = _counts(counts)
    size = n[(0, a)] + n[(1, a)]
    if size == 0:
        raise EmptyGroupError(f"group {a} has no samples; DP is undefined")
    return (r.tp[a] * n[(1, a)] + r.fp[a] * n[(0, a)]) / size


def fair_residuals(kind: str, r: RateSet, counts=None) -> list:
    """Signed residuals whose squares sum to the fairness loss of ``kind``."""
    kind = Constraint(kind, 0.0).kind
    eop = r.tp[1] - r.tp[0]
    pe = r.fp[1] - r.fp[0]
    if kind == "EOp":
        return [eop]
    if kind == "PE":
        return [pe]
    if kind == "EOd":
        return [eop, pe]
    return [selection_rate(r, counts, 1) - selection_rate(r, counts, 0)]


def fair_loss(constraint, r: RateSet, counts=None):
    kind = constraint.kind if isinstance(constraint, Constraint) else constraint
    return sum(v * v for v in fair_residuals(kind, r, counts))


def total_loss(bundle: DensityBundle, theta, spec: ObjectiveSpec):
    r = rates(bundle, theta)
    loss = perf_loss(r, bundle)
    for c in spec.constraints:
        loss = loss + c.lam * fair_loss(c, r, bundle)
    return loss


def loss_breakdown(bundle: DensityBundle, theta, spec: ObjectiveSpec) -> dict:
    r = rates(bundle, theta)
    fair = {c.kind: float(fair_loss(c, r, bundle)) for c in spec.constraints}
    return {
        "perf": float(perf_loss(r, bundle)),
        "fair": fair,
        "total": float(total_loss(bundle, theta, spec)),
    }


class Residual(NamedTuple):
    """One least-squares residual with its partial derivatives."""

    kind: str
    lam: float
    value: float
    d_theta0: float
    d_theta1: float


def residuals(bundle: DensityBundle, theta, spec: ObjectiveSpec) -> tuple:
    """Performance residual and the fairness residuals with analytic gradients.

    Returns ``(perf, terms)``: ``perf`` is a :class:`Residual` with ``lam=1``;
    ``terms`` lists one :class:`Residual` per squared fairness term (EOd
    yields two, sharing its lambda).
    """
    t0, t1 = float(theta[0]), float(theta[1])
    r = rates(bundle, (t0, t1))
    N = bundle.N
    pdf = {(y, a): float(bundle.f(y, a).pdf(t0 if a == 0 else t1)) for y, a in CELLS}

    def perf_d(a):
        return (bundle.n(1, a) * pdf[(1, a)] - bundle.n(0, a) * pdf[(0, a)]) / N

    perf = Residual("perf", 1.0, float(perf_residual(r, bundle)), perf_d(0), perf_d(1))
    eop = (float(r.tp[1] - r.tp[0]), pdf[(1, 0)], -pdf[(1, 1)])
    pe = (float(r.fp[1] - r.fp[0]), pdf[(0, 0)], -pdf[(0, 1)])
    terms = []
    for c in spec.constraints:
        if c.kind in ("EOp", "EOd"):
            terms.append(Residual("EOp", c.lam, *eop))
        if c.kind in ("PE", "EOd"):
            terms.append(Residual("PE", c.lam, *pe))
        if c.kind == "DP":
            value = float(selection_rate(r, bundle, 1) - selection_rate(r, bundle, 0))

            def dsel(a):
                return (bundle.n(1, a) * pdf[(1, a)] + bundle.n(0, a) * pdf[(0, a)]) / bundle.group_size(a)

            terms.append(Residual("DP", c.lam, value, dsel(0), -dsel(1)))
    return perf, terms
