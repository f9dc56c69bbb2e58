"""Lambda sweeps, Pareto fronts, rate-gap bounds and ROC-intersection comparison."""

from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, NamedTuple

import numpy as np
from scipy import optimize as sopt

from .errors import DegenerateCurves, HardtConstructionError, NoIntersection
from .metrics import MetricReport, evaluate_thresholds
from .objective import DensityBundle, ObjectiveSpec, ThresholdPair, total_loss
from .optimizer import OptimizeOptions, optimize, optimize_unified

FRONTIER_COLUMNS = ("lambda", "theta0", "theta1", "acc", "eop", "eod", "dimp", "bd")


@dataclass
class FrontierPoint:
    lam: float
    theta: ThresholdPair
    objective_value: float
    converged: bool
    stall_reason: str | None = None
    report: MetricReport | None = None
    iterations: int = 0

    def to_dict(self) -> dict:
        return {
            "lambda": self.lam,
            "theta": self.theta.to_dict(),
            "objective_value": self.objective_value,
            "converged": self.converged,
            "stall_reason": self.stall_reason,
            "iterations": self.iterations,
            "report": self.report.to_dict() if self.report else None,
        }

    def csv_row(self) -> dict:
        r = self.report or MetricReport()
        return {"lambda": self.lam, "theta0": self.theta.theta0, "theta1": self.theta.theta1,
                "acc": r.acc, "eop": r.eop_diff, "eod": r.eod_diff, "dimp": r.one_minus_dimp,
                "bd": r.balanced_diff}


def sweep_lambda(bundle: DensityBundle, spec_template: ObjectiveSpec, lambdas, eval_data=None,
                 opts: OptimizeOptions | None = None, unified: bool = False,
                 warm_start: bool = False, workers: int | None = None) -> list:
    """Optimize once per lambda (shared by all constraints) and evaluate on ``eval_data``.

    Each run starts from ``opts.init`` unless ``warm_start`` is set, in which
    case runs are sequential and seeded with the previous optimum. Output
    order always follows ``lambdas``. Non-converged runs are flagged, not raised.
    """
    lambdas = [float(v) for v in lambdas]
    if not lambdas:
        raise ValueError("lambda list is empty")
    opts = opts or OptimizeOptions()
    run = optimize_unified if unified else optimize

    def point(lam, run_opts):
        spec = spec_template.with_lambda(lam)
        res = run(bundle, spec, run_opts)
        report = None
        if eval_data is not None:
            report = evaluate_thresholds(eval_data, res.theta, strict=False)
        return FrontierPoint(lam, res.theta, res.loss, res.converged, res.stall_reason, report,
                             res.iterations)

    if warm_start:
        out, run_opts = [], opts
        for lam in lambdas:
            p = point(lam, run_opts)
            out.append(p)
            run_opts = OptimizeOptions(**{**opts.__dict__, "init": tuple(p.theta)})
        return out
    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(lambda lam: point(lam, opts), lambdas))
    return [point(lam, opts) for lam in lambdas]


def write_frontier_csv(points, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=FRONTIER_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for p in points:
            row = p.csv_row()
            writer.writerow({k: ("n/a" if v is None else f"{v:.12g}") for k, v in row.items()})


def _key(spec) -> Callable:
    if callable(spec):
        return spec
    return lambda p: getattr(p.report, spec)


def pareto_front(points, fairness="eod_diff", accuracy="acc") -> list:
    """Points not dominated by one with strictly lower violation and strictly higher accuracy.

    ``fairness`` and ``accuracy`` are report field names or callables taking
    a point. Points whose metrics are undefined are dropped. Input order is
    preserved.
    """
    fk, ak = _key(fairness), _key(accuracy)
    scored = []
    for p in points:
        f, a = fk(p), ak(p)
        if f is None or a is None:
            continue
        scored.append((p, f, a))
    return [p for p, f, a in scored
            if not any(f2 < f and a2 > a for _, f2, a2 in scored)]


# --- bound constants --------------------------------------------------------

@dataclass
class BoundConstants:
    u: dict                 # label y -> sup_x |F_y1(x) - F_y0(x)|
    f_hat: dict             # cell -> max pdf
    M: dict                 # cell -> interior Lipschitz estimate of the inverse CDF
    quantile_range: tuple = (1e-3, 1 - 1e-3)

    def to_dict(self) -> dict:
        return {
            "u": {str(y): v for y, v in self.u.items()},
            "f_hat": {f"{y}{a}": v for (y, a), v in self.f_hat.items()},
            "M": {f"{y}{a}": v for (y, a), v in self.M.items()},
            "quantile_range": list(self.quantile_range),
        }


def _sup_cdf_gap(fa, fb, grid_size):
    lo = min(fa.quantile_range(1e-9, 1 - 1e-9)[0], fb.quantile_range(1e-9, 1 - 1e-9)[0])
    hi = max(fa.quantile_range(1e-9, 1 - 1e-9)[1], fb.quantile_range(1e-9, 1 - 1e-9)[1])
    x = np.linspace(lo, hi, grid_size)
    gap = np.abs(fa.cdf(x) - fb.cdf(x))
    i = int(np.argmax(gap))
    best = float(gap[i])
    # polish the grid maximum inside its neighbouring cells
    a, b = x[max(i - 1, 0)], x[min(i + 1, grid_size - 1)]
    if b > a:
        res = sopt.minimize_scalar(lambda t: -abs(float(fa.cdf(t) - fb.cdf(t))), bounds=(a, b),
                                   method="bounded", options={"xatol": 1e-12})
        best = max(best, -float(res.fun))
    return min(best, 1.0)


def estimate_bound_constants(bundle: DensityBundle, quantile_grid_size: int = 1000,
                             quantile_range=(1e-3, 1 - 1e-3)) -> BoundConstants:
    """Empirical constants for the rate-gap bounds.

    Inverse-CDF slopes blow up in the tails, so ``M`` is the largest secant
    slope of ``F^-1`` over an interior quantile grid only.
    """
    if quantile_grid_size < 100:
        raise ValueError("quantile_grid_size must be >= 100")
    u = {y: _sup_cdf_gap(bundle.f(y, 1), bundle.f(y, 0), quantile_grid_size) for y in (0, 1)}
    f_hat = {c: float(d.max_pdf()) for c, d in bundle.densities.items()}
    p = np.linspace(quantile_range[0], quantile_range[1], quantile_grid_size)
    M = {}
    for c, d in bundle.densities.items():
        q = d.inv_cdf(p)
        M[c] = float(np.max(np.diff(q) / np.diff(p)))
    return BoundConstants(u, f_hat, M, tuple(quantile_range))


@dataclass
class GapCheck:
    name: str
    bound: float
    max_gap: float
    trials: int
    violations: int

    @property
    def passed(self) -> bool:
        return self.violations == 0

    def to_dict(self) -> dict:
        return {"name": self.name, "bound": self.bound, "max_gap": self.max_gap,
                "trials": self.trials, "violations": self.violations, "passed": self.passed}


@dataclass
class GapBoundReport:
    fp_gap: GapCheck
    fn_gap: GapCheck

    @property
    def passed(self) -> bool:
        return self.fp_gap.passed and self.fn_gap.passed

    def to_dict(self) -> dict:
        return {"fp_gap_under_perfect_eop": self.fp_gap.to_dict(),
                "fn_gap_under_perfect_pe": self.fn_gap.to_dict(),
                "passed": self.passed}


def _common_interior(fa, fb, lo_p, hi_p):
    lo = max(fa.inv_cdf(lo_p), fb.inv_cdf(lo_p))
    hi = min(fa.inv_cdf(hi_p), fb.inv_cdf(hi_p))
    if hi <= lo:
        # no common interior: fall back to fa's interior
        lo, hi = fa.inv_cdf(lo_p), fa.inv_cdf(hi_p)
    return float(lo), float(hi)


def verify_gap_bound(bundle: DensityBundle, constants: BoundConstants, num_trials: int = 100,
                     seed: int = 0, interior=(0.01, 0.99), atol: float = 1e-9) -> GapBoundReport:
    """Check the FP-gap bound under perfect EOp and the FN-gap bound under perfect PE.

    For each trial a theta_1 is drawn uniformly from the range where both
    relevant CDFs lie inside ``interior`` (so the interior Lipschitz
    estimates apply), and theta_0 is placed on the perfect-fairness manifold.
    A trial violates the bound when its gap exceeds it by more than ``atol``,
    which absorbs the inverse-CDF root-finding error.
    """
    rng = np.random.default_rng(seed)
    f = bundle.f
    tiny = 1e-12

    # perfect EOp: F_11(theta1) = F_10(theta0)
    lo, hi = _common_interior(f(1, 1), f(1, 0), *interior)
    t1 = rng.uniform(lo, hi, num_trials)
    t0 = f(1, 0).inv_cdf(np.clip(f(1, 1).cdf(t1), tiny, 1 - tiny))
    gap = np.abs(f(0, 1).cdf(t1) - f(0, 0).cdf(t0))
    bound = constants.u[0] + constants.f_hat[(0, 1)] * constants.M[(1, 0)] * constants.u[1]
    fp_check = GapCheck("fp_gap", float(bound), float(gap.max()), num_trials, int(np.sum(gap > bound + atol)))

    # perfect PE: F_01(theta1) = F_00(theta0)
    lo, hi = _common_interior(f(0, 1), f(0, 0), *interior)
    t1 = rng.uniform(lo, hi, num_trials)
    t0 = f(0, 0).inv_cdf(np.clip(f(0, 1).cdf(t1), tiny, 1 - tiny))
    gap = np.abs(f(1, 1).cdf(t1) - f(1, 0).cdf(t0))
    bound = constants.u[1] + constants.f_hat[(1, 1)] * constants.M[(0, 0)] * constants.u[0]
    fn_check = GapCheck("fn_gap", float(bound), float(gap.max()), num_trials, int(np.sum(gap > bound + atol)))
    return GapBoundReport(fp_check, fn_check)


# --- ROC intersection -------------------------------------------------------

class RocPoint(NamedTuple):
    fp: float
    tp: float
    theta: ThresholdPair | None = None


@dataclass
class EodIntersection:
    gstar_point: RocPoint
    hardt_point: RocPoint
    q0: RocPoint
    q1: RocPoint
    candidates: list = field(default_factory=list)

    def to_dict(self) -> dict:
        def pt(p):
            d = {"fp": p.fp, "tp": p.tp}
            if p.theta is not None:
                d["theta"] = p.theta.to_dict()
            return d

        return {"gstar_point": pt(self.gstar_point), "hardt_point": pt(self.hardt_point),
                "q0": pt(self.q0), "q1": pt(self.q1)}


def _roc_point(bundle, a, theta):
    return RocPoint(float(1 - bundle.f(0, a).cdf(theta)), float(1 - bundle.f(1, a).cdf(theta)))


def roc_curve_intersections(bundle: DensityBundle, num_points: int = 2001, p_range=(1e-4, 1 - 1e-4)):
    """Threshold pairs where both groups share a (FP, TP) operating point.

    Walks group 1's curve, maps each theta_1 to the theta_0 with equal TP
    and root-finds the FP difference. Raises :class:`DegenerateCurves` if
    the curves coincide and :class:`NoIntersection` if they never cross
    inside the open unit square.
    """
    f = bundle.f
    tiny = 1e-15

    def theta0_of(t1):
        return f(1, 0).inv_cdf(np.clip(f(1, 1).cdf(t1), tiny, 1 - tiny))

    def fp_gap(t1):
        return f(0, 0).cdf(theta0_of(t1)) - f(0, 1).cdf(t1)

    grid = f(1, 1).inv_cdf(np.linspace(p_range[0], p_range[1], num_points))
    g = np.asarray(fp_gap(grid), dtype=float)
    if np.max(np.abs(g)) < 1e-9:
        raise DegenerateCurves("the two group-conditional ROC curves coincide")
    roots = []
    scalar_gap = lambda t: float(fp_gap(t))  # noqa: E731
    for i in np.flatnonzero(np.sign(g[:-1]) * np.sign(g[1:]) < 0):
        a, b = float(grid[i]), float(grid[i + 1])
        ga, gb = scalar_gap(a), scalar_gap(b)
        if ga == 0.0 or gb == 0.0:
            roots.append(a if ga == 0.0 else b)
        elif ga * gb < 0:
            roots.append(sopt.brentq(scalar_gap, a, b, xtol=1e-12))
    roots += [float(grid[i]) for i in np.flatnonzero(g == 0.0)]
    out = []
    for t1 in roots:
        t0 = float(theta0_of(t1))
        p1 = _roc_point(bundle, 1, t1)
        out.append(RocPoint(p1.fp, p1.tp, ThresholdPair(t0, float(t1))))
    out = [p for p in out if 0 < p.fp < 1 and 0 < p.tp < 1]
    if not out:
        raise NoIntersection("the ROC curves do not cross inside the open unit square")
    return out


def hardt_point(q0: RocPoint, q1: RocPoint) -> RocPoint:
    """Intersection of segment q0 -> (1, 1) with segment (0, 0) -> q1."""
    if not q1.fp > q0.fp:
        raise HardtConstructionError(f"q1 (FP={q1.fp:.6g}) must lie right of q0 (FP={q0.fp:.6g})")
    for name, q in (("q0", q0), ("q1", q1)):
        if not q.tp > q.fp:
            raise HardtConstructionError(f"{name} must lie above the diagonal")
    # q0 + s * ((1,1) - q0) = u * q1
    A = np.array([[1 - q0.fp, -q1.fp], [1 - q0.tp, -q1.tp]])
    rhs = -np.array([q0.fp, q0.tp])
    if abs(np.linalg.det(A)) < 1e-15:
        raise NoIntersection("Hardt segments are parallel")
    s, u = np.linalg.solve(A, rhs)
    if not (-1e-12 <= s <= 1 + 1e-12 and -1e-12 <= u <= 1 + 1e-12):
        raise NoIntersection("Hardt segments do not intersect")
    return RocPoint(float(u * q1.fp), float(u * q1.tp))


def eod_intersection(bundle: DensityBundle, baseline=(0.0, 0.0)) -> EodIntersection:
    """Compare the exact ROC-curve intersection with the segment construction.

    ``q0``/``q1`` are the groups' operating points at the ``baseline``
    thresholds; the segment construction derives its equalized-odds point
    from them. Among several curve crossings the one with the largest
    ``TP - FP`` is reported.
    """
    cands = roc_curve_intersections(bundle)
    best = max(cands, key=lambda p: p.tp - p.fp)
    q0 = _roc_point(bundle, 0, baseline[0])
    q1 = _roc_point(bundle, 1, baseline[1])
    return EodIntersection(best, hardt_point(q0, q1), q0, q1, cands)
