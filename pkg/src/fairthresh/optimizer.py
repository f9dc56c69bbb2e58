"""Alternating Gauss-Newton search for group thresholds.

Each sweep updates theta_1 with theta_0 held fixed, then theta_0. For the
active coordinate the residuals are linearized,

    (eta + alpha * d)^2 + sum_k lambda_k (eps_k + beta_k * d)^2,

and the minimizing shift ``d`` has the closed form
``-(alpha*eta + sum lambda beta eps) / (alpha^2 + sum lambda beta^2)``.
A shift is accepted only if it lowers the true objective; otherwise it is
cut by ``cut_factor`` and retried (shift-cutting).
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConfigError, MaxIterations, Stalled
from .objective import DensityBundle, ObjectiveSpec, ThresholdPair, residuals, total_loss

log = logging.getLogger(__name__)

BOTH = "both"


@dataclass(frozen=True)
class StepCoeffs:
    """Linearization of the residuals along one coordinate.

    ``terms`` holds ``(lam, beta, eps)`` per squared fairness term.
    """

    alpha: float
    eta: float
    terms: tuple = ()


@dataclass(frozen=True)
class OptimizeOptions:
    max_iter: int = 1000
    tol: float = 1e-6
    cut_factor: float = 0.5
    max_cuts: int = 60
    init: tuple = (0.0, 0.0)
    extrapolate: bool = True

    def __post_init__(self):
        if self.max_iter < 1:
            raise ConfigError("max_iter must be >= 1")
        if not self.tol > 0:
            raise ConfigError("tol must be positive")
        if not 0 < self.cut_factor < 1:
            raise ConfigError("cut_factor must lie in (0, 1)")
        if self.max_cuts < 0:
            raise ConfigError("max_cuts must be >= 0")


@dataclass
class TraceRecord:
    iteration: int
    theta0: float
    theta1: float
    loss: float
    delta0: float
    delta1: float


@dataclass
class OptimResult:
    theta: ThresholdPair
    loss: float
    iterations: int
    converged: bool
    trace: list = field(default_factory=list)
    stall_reason: str | None = None
    unified: bool = False

    def to_dict(self) -> dict:
        return {
            "theta": self.theta.to_dict(),
            "loss": self.loss,
            "iterations": self.iterations,
            "converged": self.converged,
            "stall_reason": self.stall_reason,
            "unified": self.unified,
            "trace": [asdict(t) for t in self.trace],
        }


def step_coefficients(bundle: DensityBundle, theta, spec: ObjectiveSpec, active) -> StepCoeffs:
    """Coefficients of the linearized residuals along coordinate ``active``.

    ``active`` is a group index (0 or 1) or ``"both"`` for the shared
    coordinate of a unified threshold, whose derivative is the sum of the
    two partials.
    """
    perf, terms = residuals(bundle, theta, spec)

    def deriv(res):
        if active == BOTH:
            return res.d_theta0 + res.d_theta1
        if active in (0, 1):
            return res.d_theta1 if active == 1 else res.d_theta0
        raise ValueError(f"active must be 0, 1 or {BOTH!r}, got {active!r}")

    return StepCoeffs(
        alpha=deriv(perf),
        eta=perf.value,
        terms=tuple((t.lam, deriv(t), t.value) for t in terms),
    )


def gauss_newton_step(coeffs: StepCoeffs) -> float:
    """Exact minimizer of the linearized least-squares model (0 if it is flat)."""
    num = coeffs.alpha * coeffs.eta
    den = coeffs.alpha * coeffs.alpha
    for lam, beta, eps in coeffs.terms:
        num += lam * beta * eps
        den += lam * beta * beta
    if den == 0.0 or not np.isfinite(den):
        return 0.0
    return -num / den


def linearized_loss(coeffs: StepCoeffs, delta):
    out = (coeffs.eta + coeffs.alpha * delta) ** 2
    for lam, beta, eps in coeffs.terms:
        out = out + lam * (eps + beta * delta) ** 2
    return out


def _line_update(loss_at, current_loss, delta, opts):
    """Shift-cutting along one coordinate.

    Returns ``(accepted_delta, new_loss, status)`` with status ``"accepted"``,
    ``"settled"`` (no decrease down to step size ``tol``) or ``"exhausted"``.
    """
    trial = delta
    for _ in range(opts.max_cuts + 1):
        if trial == 0.0:
            return 0.0, current_loss, "settled"
        new_loss = loss_at(trial)
        if new_loss < current_loss:
            return trial, new_loss, "accepted"
        if abs(trial) < opts.tol:
            return 0.0, current_loss, "settled"
        trial *= opts.cut_factor
    return 0.0, current_loss, "exhausted"


def _pattern_move(bundle, spec, theta, loss, deltas, max_doublings=60):
    """Extend a sweep's displacement by doubling while the loss keeps falling.

    Alternating updates zigzag along narrow valleys of the objective when
    lambda is large; moving along the sweep displacement crosses them in
    logarithmically many evaluations. Only decreases are accepted.
    """
    step = np.array([deltas[0], deltas[1]])
    base = np.array(theta)
    best, best_loss, scale = base, loss, 0.0
    t = 1.0
    for _ in range(max_doublings):
        cand = base + t * step
        cand_loss = float(total_loss(bundle, cand, spec))
        if not cand_loss < best_loss:
            break
        best, best_loss, scale = cand, cand_loss, t
        t *= 2.0
    if scale == 0.0:
        return theta, loss, deltas
    total = (1.0 + scale) * step
    return [float(best[0]), float(best[1])], best_loss, {0: float(total[0]), 1: float(total[1])}


def _finish(result, strict):
    if strict and not result.converged:
        cls = Stalled if result.stall_reason == "stalled" else MaxIterations
        raise cls(f"optimization did not converge ({result.stall_reason})", result)
    return result


def optimize(bundle: DensityBundle, spec: ObjectiveSpec, opts: OptimizeOptions | None = None,
             strict: bool = False) -> OptimResult:
    """Minimize the objective over a per-group threshold pair.

    Starts from ``opts.init`` (default ``(0, 0)``) and alternates theta_1 then
    theta_0 updates until both accepted shifts are below ``tol``. A run that
    exhausts ``max_cuts`` on both groups in one sweep stops with
    ``stall_reason="stalled"``; running out of iterations gives
    ``"max_iterations"``. With ``strict=True`` these raise instead.
    """
    opts = opts or OptimizeOptions()
    theta = [float(opts.init[0]), float(opts.init[1])]
    loss = float(total_loss(bundle, theta, spec))
    trace = [TraceRecord(0, theta[0], theta[1], loss, 0.0, 0.0)]
    for it in range(1, opts.max_iter + 1):
        deltas = {0: 0.0, 1: 0.0}
        status = {}
        for a in (1, 0):
            coeffs = step_coefficients(bundle, theta, spec, a)
            proposal = gauss_newton_step(coeffs)

            def loss_at(d, a=a):
                t = list(theta)
                t[a] += d
                return float(total_loss(bundle, t, spec))

            d, loss, status[a] = _line_update(loss_at, loss, proposal, opts)
            theta[a] += d
            deltas[a] = d
        if opts.extrapolate and (deltas[0] or deltas[1]):
            theta, loss, deltas = _pattern_move(bundle, spec, theta, loss, deltas)
        trace.append(TraceRecord(it, theta[0], theta[1], loss, deltas[0], deltas[1]))
        if status[0] == "exhausted" and status[1] == "exhausted":
            log.debug("stalled at iteration %d, theta=%s", it, theta)
            return _finish(OptimResult(ThresholdPair(*theta), loss, it, False, trace, "stalled"), strict)
        if abs(deltas[0]) < opts.tol and abs(deltas[1]) < opts.tol:
            return OptimResult(ThresholdPair(*theta), loss, it, True, trace)
    return _finish(OptimResult(ThresholdPair(*theta), loss, opts.max_iter, False, trace,
                               "max_iterations"), strict)


def optimize_unified(bundle: DensityBundle, spec: ObjectiveSpec, opts: OptimizeOptions | None = None,
                     strict: bool = False) -> OptimResult:
    """Same machinery with a single threshold shared by both groups."""
    opts = opts or OptimizeOptions()
    t = float(opts.init[0])
    loss = float(total_loss(bundle, (t, t), spec))
    trace = [TraceRecord(0, t, t, loss, 0.0, 0.0)]
    for it in range(1, opts.max_iter + 1):
        coeffs = step_coefficients(bundle, (t, t), spec, BOTH)
        proposal = gauss_newton_step(coeffs)
        d, loss, status = _line_update(
            lambda d: float(total_loss(bundle, (t + d, t + d), spec)), loss, proposal, opts)
        t += d
        trace.append(TraceRecord(it, t, t, loss, d, d))
        if status == "exhausted":
            return _finish(OptimResult(ThresholdPair(t, t), loss, it, False, trace, "stalled", True), strict)
        if abs(d) < opts.tol:
            return OptimResult(ThresholdPair(t, t), loss, it, True, trace, unified=True)
    return _finish(OptimResult(ThresholdPair(t, t), loss, opts.max_iter, False, trace,
                               "max_iterations", True), strict)


def grid_oracle(bundle: DensityBundle, spec: ObjectiveSpec, theta_range=None, resolution: int = 200):
    """Exhaustive minimum of the objective over a ``resolution x resolution`` grid.

    ``theta_range`` is ``(lo, hi)`` applied to both coordinates, or a pair of
    such ranges ``((lo0, hi0), (lo1, hi1))``. Defaults to the span of the
    cells' 0.1%-99.9% quantiles.
    """
    if resolution < 2:
        raise ValueError("resolution must be >= 2")
    if theta_range is None:
        theta_range = bundle.quantile_span(1e-3, 1 - 1e-3)
    if np.ndim(theta_range[0]) == 0:
        theta_range = (theta_range, theta_range)
    g0 = np.linspace(*theta_range[0], resolution)
    g1 = np.linspace(*theta_range[1], resolution)
    losses = total_loss(bundle, (g0[:, None], g1[None, :]), spec)
    losses = np.broadcast_to(losses, (resolution, resolution))
    i, j = np.unravel_index(np.argmin(losses), losses.shape)
    return ThresholdPair(float(g0[i]), float(g1[j])), float(losses[i, j])
