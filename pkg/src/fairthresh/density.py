"""Univariate densities for per-cell logit distributions.

Parametric families are fitted by maximum likelihood; the nonparametric
option is a histogram-weighted Gaussian kernel mixture. Every density
exposes ``pdf``, ``logpdf``, ``cdf``, ``inv_cdf`` and ``max_pdf`` and
serializes to a small JSON document so that thresholds can be optimized
from fitted distributions alone.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, special, stats

from .errors import (
    AllFitsFailed,
    DegenerateSampleError,
    DensityError,
    FitFailure,
    InfiniteNLL,
    OutOfSupport,
)

FAMILIES = ("gaussian", "student_t", "gamma_loc", "kde")
PARAMETRIC = ("gaussian", "student_t", "gamma_loc")
ALIASES = {"normal": "gaussian", "norm": "gaussian", "t": "student_t", "student-t": "student_t",
           "gamma": "gamma_loc"}

DEFAULT_KERNEL_SD = 0.5
MIN_NUMERIC_FIT = 10
KDE_GRID_POINTS = 4096
INV_CDF_XTOL = 1e-10

_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


def canonical_family(name: str) -> str:
    key = name.strip().lower()
    key = ALIASES.get(key, key)
    if key not in FAMILIES:
        raise ValueError(f"unknown density family {name!r}; choose from {', '.join(FAMILIES)}")
    return key


class _Evaluable:
    """Shared evaluation logic; subclasses provide pdf/logpdf/cdf and bracketing hints."""

    support = (-math.inf, math.inf)

    def _center_scale(self):
        raise NotImplementedError

    def inv_cdf(self, p):
        """Quantile function by bracketed bisection (x tolerance 1e-10)."""
        p_arr = np.asarray(p, dtype=float)
        if np.any(~((p_arr > 0.0) & (p_arr < 1.0))):
            raise OutOfSupport("inv_cdf requires p strictly inside (0, 1)")
        flat = p_arr.ravel()
        center, scale = self._center_scale()
        lo_edge, hi_edge = self.support
        lo = np.full(flat.shape, center - scale)
        hi = np.full(flat.shape, center + scale)
        if np.isfinite(lo_edge):
            lo = np.maximum(lo, lo_edge)
        width = scale
        for _ in range(200):
            need = self.cdf(lo) > flat
            if not need.any():
                break
            width *= 2.0
            lo = np.where(need, center - width, lo)
            if np.isfinite(lo_edge):
                lo = np.maximum(lo, lo_edge)
                if np.all(lo[need] == lo_edge):
                    break
        width = scale
        for _ in range(200):
            need = self.cdf(hi) < flat
            if not need.any():
                break
            width *= 2.0
            hi = np.where(need, center + width, hi)
        # cdf is nondecreasing: keep lo with cdf(lo) <= p <= cdf(hi)
        for _ in range(400):
            if np.all(hi - lo <= INV_CDF_XTOL):
                break
            mid = 0.5 * (lo + hi)
            left = self.cdf(mid) < flat
            lo = np.where(left, mid, lo)
            hi = np.where(left, hi, mid)
        out = 0.5 * (lo + hi)
        return out.reshape(p_arr.shape) if p_arr.ndim else float(out[0])

    def quantile_range(self, lo=1e-6, hi=1 - 1e-6):
        q = self.inv_cdf(np.array([lo, hi]))
        return float(q[0]), float(q[1])


@dataclass(frozen=True, eq=False)
class FittedDensity(_Evaluable):
    """A parametric density.

    ``params`` layout per family:
    gaussian ``(loc, scale)``, student_t ``(df, loc, scale)``,
    gamma_loc ``(shape, loc, scale)``.
    """

    family: str
    params: tuple
    _dist: object = field(init=False, repr=False)

    def __post_init__(self):
        family = canonical_family(self.family)
        params = tuple(float(v) for v in self.params)
        expected = {"gaussian": 2, "student_t": 3, "gamma_loc": 3}.get(family)
        if expected is None:
            raise ValueError(f"{family!r} is not a parametric family")
        if len(params) != expected:
            raise ValueError(f"{family} needs {expected} parameters, got {len(params)}")
        if not all(math.isfinite(v) for v in params):
            raise ValueError("density parameters must be finite")
        if family == "gaussian" and params[1] <= 0:
            raise ValueError("gaussian scale must be positive")
        if family == "student_t" and (params[0] <= 0 or params[2] <= 0):
            raise ValueError("student_t df and scale must be positive")
        if family == "gamma_loc" and (params[0] <= 0 or params[2] <= 0):
            raise ValueError("gamma shape and scale must be positive")
        object.__setattr__(self, "family", family)
        object.__setattr__(self, "params", params)
        if family == "student_t":
            dist = stats.t(params[0], loc=params[1], scale=params[2])
        elif family == "gamma_loc":
            dist = stats.gamma(params[0], loc=params[1], scale=params[2])
        else:
            dist = None
        object.__setattr__(self, "_dist", dist)

    @property
    def support(self):
        if self.family == "gamma_loc":
            return (self.params[1], math.inf)
        return (-math.inf, math.inf)

    def pdf(self, x):
        if self.family == "gaussian":
            mu, sd = self.params
            z = (np.asarray(x, dtype=float) - mu) / sd
            return np.exp(-0.5 * z * z - _LOG_SQRT_2PI) / sd
        return self._dist.pdf(x)

    def logpdf(self, x):
        if self.family == "gaussian":
            mu, sd = self.params
            z = (np.asarray(x, dtype=float) - mu) / sd
            return -0.5 * z * z - _LOG_SQRT_2PI - math.log(sd)
        return self._dist.logpdf(x)

    def cdf(self, x):
        if self.family == "gaussian":
            mu, sd = self.params
            return special.ndtr((np.asarray(x, dtype=float) - mu) / sd)
        return self._dist.cdf(x)

    def mode(self) -> float:
        if self.family == "gamma_loc":
            k, loc, scale = self.params
            return loc + max(k - 1.0, 0.0) * scale
        return self.params[-2]

    def max_pdf(self) -> float:
        """Supremum of the pdf, evaluated analytically at the mode."""
        if self.family == "gamma_loc" and self.params[0] < 1.0:
            return math.inf
        if self.family == "gamma_loc" and self.params[0] == 1.0:
            return 1.0 / self.params[2]
        return float(self.pdf(self.mode()))

    def _center_scale(self):
        if self.family == "gamma_loc":
            k, loc, scale = self.params
            return loc + k * scale, math.sqrt(k) * scale
        return self.params[-2], self.params[-1]

    def to_dict(self) -> dict:
        return {"family": self.family, "params": list(self.params)}


@dataclass(frozen=True, eq=False)
class KdeDensity(_Evaluable):
    """Gaussian kernel mixture ``f(x) = sum_b w_b K(x - T_b)``."""

    centers: np.ndarray
    weights: np.ndarray
    kernel_sd: float = DEFAULT_KERNEL_SD
    family: str = field(default="kde", init=False)

    def __post_init__(self):
        centers = np.array(self.centers, dtype=float).ravel()
        weights = np.array(self.weights, dtype=float).ravel()
        if centers.size == 0 or centers.shape != weights.shape:
            raise ValueError("centers and weights must be nonempty and of equal length")
        if np.any(weights < 0) or not np.all(np.isfinite(centers)):
            raise ValueError("weights must be nonnegative and centers finite")
        total = weights.sum()
        if not total > 0:
            raise ValueError("weights must have positive mass")
        if not self.kernel_sd > 0:
            raise ValueError("kernel_sd must be positive")
        weights = weights / total
        centers.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "centers", centers)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "kernel_sd", float(self.kernel_sd))

    def _z(self, x):
        x = np.asarray(x, dtype=float)
        return (x[..., None] - self.centers) / self.kernel_sd

    def pdf(self, x):
        z = self._z(x)
        return np.exp(-0.5 * z * z - _LOG_SQRT_2PI) @ self.weights / self.kernel_sd

    def logpdf(self, x):
        z = self._z(x)
        terms = -0.5 * z * z - _LOG_SQRT_2PI - math.log(self.kernel_sd)
        with np.errstate(divide="ignore"):
            return special.logsumexp(terms, axis=-1, b=self.weights)

    def cdf(self, x):
        return special.ndtr(self._z(x)) @ self.weights

    def max_pdf(self) -> float:
        """Grid estimate of sup pdf over the kernel-covered range."""
        lo = self.centers.min() - 5 * self.kernel_sd
        hi = self.centers.max() + 5 * self.kernel_sd
        grid = np.linspace(lo, hi, KDE_GRID_POINTS)
        return float(np.max(self.pdf(grid)))

    def _center_scale(self):
        mean = float(self.weights @ self.centers)
        var = float(self.weights @ (self.centers - mean) ** 2) + self.kernel_sd ** 2
        return mean, math.sqrt(var)

    def to_dict(self) -> dict:
        return {"family": "kde", "centers": self.centers.tolist(),
                "weights": self.weights.tolist(), "kernel_sd": self.kernel_sd}


Density = FittedDensity | KdeDensity


def density_from_dict(doc: dict) -> Density:
    family = canonical_family(doc["family"])
    if family == "kde":
        return KdeDensity(doc["centers"], doc["weights"], doc.get("kernel_sd", DEFAULT_KERNEL_SD))
    return FittedDensity(family, tuple(doc["params"]))


# --- evaluation -------------------------------------------------------------

def pdf(density: Density, x):
    return density.pdf(x)


def cdf(density: Density, x):
    return density.cdf(x)


def inv_cdf(density: Density, p):
    return density.inv_cdf(p)


def max_pdf(density: Density) -> float:
    return density.max_pdf()


def mean_nll(density: Density, samples) -> float:
    """Mean negative log-likelihood, ``-(1/n) sum ln pdf(x_i)``."""
    x = np.asarray(samples, dtype=float).ravel()
    if x.size == 0:
        raise ValueError("mean_nll needs at least one sample")
    with np.errstate(divide="ignore"):
        logp = np.asarray(density.logpdf(x), dtype=float)
    if not np.all(np.isfinite(logp)):
        bad = x[~np.isfinite(logp)][0]
        raise InfiniteNLL(f"{density.family} density is zero at x={bad!r}")
    return float(-logp.mean())


# --- fitting ----------------------------------------------------------------

def _as_samples(samples) -> np.ndarray:
    x = np.asarray(samples, dtype=float).ravel()
    if not np.all(np.isfinite(x)):
        raise DegenerateSampleError("samples must be finite")
    return x


def fit_gaussian(samples) -> FittedDensity:
    x = _as_samples(samples)
    if x.size < 2:
        raise DegenerateSampleError("gaussian fit needs at least 2 samples")
    mu = float(x.mean())
    var = float(np.mean((x - mu) ** 2))
    if not var > 0:
        raise DegenerateSampleError("all samples are equal")
    return FittedDensity("gaussian", (mu, math.sqrt(var)))


def _minimize(nll, x0, bounds, what):
    with np.errstate(all="ignore"):
        res = optimize.minimize(nll, x0, method="L-BFGS-B", bounds=bounds)
        if not (res.success and np.isfinite(res.fun)):
            res = optimize.minimize(nll, res.x if np.isfinite(res.fun) else x0,
                                    method="Nelder-Mead", bounds=bounds,
                                    options={"maxiter": 4000, "xatol": 1e-8, "fatol": 1e-10})
    if not (res.success and np.isfinite(res.fun)):
        raise FitFailure(f"{what} likelihood maximization did not converge: {res.message}")
    return res.x


def fit_student_t(samples) -> FittedDensity:
    """Location-scale Student's t by bounded numeric MLE."""
    x = _as_samples(samples)
    if x.size < MIN_NUMERIC_FIT:
        raise FitFailure(f"student_t fit needs at least {MIN_NUMERIC_FIT} samples, got {x.size}")
    med = float(np.median(x))
    spread = float(stats.median_abs_deviation(x, scale="normal")) or float(x.std())
    if not spread > 0:
        raise DegenerateSampleError("all samples are equal")

    def nll(v):
        df, loc, scale = math.exp(v[0]), v[1], math.exp(v[2])
        return -np.sum(stats.t.logpdf(x, df, loc=loc, scale=scale)) / x.size

    log_spread = math.log(spread)
    bounds = [(math.log(0.3), math.log(1e3)), (x.min(), x.max()),
              (log_spread - 12.0, log_spread + 6.0)]
    v = _minimize(nll, np.array([math.log(5.0), med, log_spread]), bounds, "student_t")
    return FittedDensity("student_t", (math.exp(v[0]), v[1], math.exp(v[2])))


def fit_gamma_loc(samples) -> FittedDensity:
    """Three-parameter gamma with a location strictly below the sample minimum.

    The shape is bounded to [1, 1e4] so the likelihood stays bounded when
    the location approaches the smallest sample.
    """
    x = _as_samples(samples)
    if x.size < MIN_NUMERIC_FIT:
        raise FitFailure(f"gamma_loc fit needs at least {MIN_NUMERIC_FIT} samples, got {x.size}")
    xmin = float(x.min())
    mean, sd = float(x.mean()), float(x.std())
    if not sd > 0:
        raise DegenerateSampleError("all samples are equal")
    skew = float(stats.skew(x))
    k0 = min(max(4.0 / skew ** 2, 1.0), 1e4) if skew > 0.05 else 100.0
    scale0 = sd / math.sqrt(k0)
    loc0 = mean - k0 * scale0
    if not loc0 < xmin:
        loc0 = xmin - 0.1 * sd

    def nll(v):
        k, gap, scale = math.exp(v[0]), math.exp(v[1]), math.exp(v[2])
        val = -np.sum(stats.gamma.logpdf(x, k, loc=xmin - gap, scale=scale)) / x.size
        return val if np.isfinite(val) else 1e300

    log_sd = math.log(sd)
    bounds = [(0.0, math.log(1e4)), (log_sd - 20.0, log_sd + math.log(1e4) + 3.0),
              (log_sd - 12.0, log_sd + 6.0)]
    v0 = np.array([math.log(k0), math.log(xmin - loc0), math.log(scale0)])
    v = _minimize(nll, np.clip(v0, [b[0] for b in bounds], [b[1] for b in bounds]), bounds, "gamma_loc")
    k, loc, scale = math.exp(v[0]), xmin - math.exp(v[1]), math.exp(v[2])
    if not loc < xmin:
        raise FitFailure("gamma_loc location collapsed onto the sample minimum")
    return FittedDensity("gamma_loc", (k, loc, scale))


def default_num_bins(n: int) -> int:
    return int(min(max(math.ceil(math.sqrt(n)), 10), 200))


def fit_kde(samples, num_bins: int | None = None, kernel_sd: float = DEFAULT_KERNEL_SD) -> KdeDensity:
    """Histogram-weighted Gaussian KDE.

    Bins span ``[min, max]`` of the samples; each occupied bin contributes a
    kernel at the mean logit of its members, weighted by its share of the
    samples. Empty bins carry no weight and are dropped.
    """
    x = _as_samples(samples)
    if x.size < 1:
        raise DegenerateSampleError("kde fit needs at least 1 sample")
    if num_bins is None:
        num_bins = default_num_bins(x.size)
    if num_bins < 1:
        raise ValueError("num_bins must be >= 1")
    if not kernel_sd > 0:
        raise ValueError("kernel_sd must be positive")
    lo, hi = float(x.min()), float(x.max())
    if lo == hi:
        return KdeDensity(np.array([lo]), np.array([1.0]), kernel_sd)
    counts, edges = np.histogram(x, bins=num_bins, range=(lo, hi))
    sums, _ = np.histogram(x, bins=edges, weights=x)
    occupied = counts > 0
    centers = sums[occupied] / counts[occupied]
    return KdeDensity(centers, counts[occupied] / x.size, kernel_sd)


_FITTERS = {
    "gaussian": fit_gaussian,
    "student_t": fit_student_t,
    "gamma_loc": fit_gamma_loc,
}


@dataclass
class CandidateFit:
    family: str
    density: Density | None
    nll: float | None
    error: str | None = None


def fit_candidates(samples, candidates=PARAMETRIC, num_bins=None,
                   kernel_sd=DEFAULT_KERNEL_SD) -> list[CandidateFit]:
    """Fit every candidate family; failures are recorded, not raised."""
    out = []
    for name in candidates:
        family = canonical_family(name)
        try:
            if family == "kde":
                dens = fit_kde(samples, num_bins=num_bins, kernel_sd=kernel_sd)
            else:
                dens = _FITTERS[family](samples)
            out.append(CandidateFit(family, dens, mean_nll(dens, samples)))
        except DensityError as exc:
            out.append(CandidateFit(family, None, None, str(exc)))
    return out


def best_candidate(fits: list[CandidateFit]) -> CandidateFit:
    ok = [f for f in fits if f.density is not None]
    if not ok:
        detail = "; ".join(f"{f.family}: {f.error}" for f in fits)
        raise AllFitsFailed(f"no candidate density could be fitted ({detail})")
    return min(ok, key=lambda f: f.nll)


def select_density(samples, candidates=PARAMETRIC, num_bins=None,
                   kernel_sd=DEFAULT_KERNEL_SD) -> Density:
    """Return the candidate fit with the smallest mean NLL on ``samples``."""
    return best_candidate(fit_candidates(samples, candidates, num_bins, kernel_sd)).density
