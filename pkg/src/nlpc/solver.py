"""Combined projected Newton / projected gradient root finder.

Each iteration first tries a Newton step with a backtracking line search on
the residual norm, every trial point being pulled back into the box by the
configured projector.  When the Newton system is singular or no trial step
reduces the residual enough, a gradient step on ``0.5*||f||**2`` is taken
instead, with an Armijo test along the projection arc and an extra test that
refuses steps which would leave most of the coordinates untouched.
"""

from __future__ import annotations

import csv
import enum
import io
import logging
import math
import warnings
from dataclasses import dataclass, replace
from typing import Callable, Iterable, Iterator, Optional, Union

import numpy as np
import scipy.linalg as sla
from scipy.linalg import lapack

from .problem import DomainError, RootProblem, theta
from .projector import (BoxDomain, _masks, project_nonlinear,
                        project_orthogonal)

log = logging.getLogger(__name__)

__all__ = [
    "StepKind", "Status", "SolverConfig", "IterationRecord", "SolveOutcome",
    "SingularSystemError", "NewtonStep", "GradientStep",
    "condition_estimate", "newton_direction", "try_newton_step", "gradient_step",
    "is_stationary", "stationarity_residual", "nlpc_solve", "nlpc_solve_with_restarts",
    "write_trace_csv", "TRACE_COLUMNS",
]


class StepKind(str, enum.Enum):
    INITIAL = "initial"
    NEWTON = "newton"
    GRADIENT = "gradient"
    GRADIENT_FORCED = "gradient-forced"


class Status(str, enum.Enum):
    CONVERGED = "converged"
    STATIONARY_NOT_ROOT = "stationary-not-root"
    BUDGET_EXHAUSTED = "budget-exhausted"


PROJECTORS = ("nonlinear", "orthogonal")


@dataclass(frozen=True)
class SolverConfig:
    tau: float = 1e-12
    alpha: float = 0.79
    sigma_newton: float = 1e-4
    sigma_gradient: float = 1e-4
    rho: float = 1e-2
    max_newton_backtracks: int = 20
    max_gradient_backtracks: int = 40
    max_iterations: int = 250
    max_restarts: int = 50
    normalize_gradient: bool = True
    jacobian_condition_limit: float = 1e17
    stationarity_tol: float = 1e-10
    # draws rejected by the condition screen before the sampler is declared exhausted
    max_screen_draws: int = 1000
    projector: str = "nonlinear"

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError("tau must be positive")
        for name in ("alpha", "sigma_newton", "sigma_gradient", "rho"):
            v = getattr(self, name)
            if not 0 < v < 1:
                raise ValueError(f"{name} must lie in (0, 1), got {v}")
        for name in ("max_newton_backtracks", "max_gradient_backtracks", "max_iterations",
                     "max_restarts", "max_screen_draws"):
            v = getattr(self, name)
            if int(v) != v or v < 1:
                raise ValueError(f"{name} must be an integer >= 1, got {v}")
        if not self.jacobian_condition_limit > 0:
            raise ValueError("jacobian_condition_limit must be positive")
        if not self.stationarity_tol >= 0:
            raise ValueError("stationarity_tol must be nonnegative")
        if self.projector not in PROJECTORS:
            raise ValueError(f"projector must be one of {PROJECTORS}, got {self.projector!r}")

    def project(self, z, x, dom: BoxDomain) -> np.ndarray:
        if self.projector == "orthogonal":
            return project_orthogonal(z, dom)
        return project_nonlinear(z, x, dom)


@dataclass(frozen=True)
class IterationRecord:
    """State of iterate ``k`` and the step that produced it.

    ``stepsize`` is NaN for the initial point.  ``cond_estimate`` is the
    1-norm condition estimate of the Jacobian at this iterate, NaN when no
    Newton system was formed there and inf when it was singular.
    """

    k: int
    step_kind: StepKind
    stepsize: float
    residual_norm: float
    theta: float
    zero_components: int
    cond_estimate: float = math.nan


@dataclass(frozen=True)
class SolveOutcome:
    status: Status
    x: np.ndarray
    restarts: int = 0
    trace: tuple = ()
    # traces of the runs abandoned before the last restart
    previous_traces: tuple = ()

    @property
    def converged(self) -> bool:
        return self.status is Status.CONVERGED

    @property
    def iterations(self) -> int:
        return max(len(self.trace) - 1, 0)

    @property
    def total_iterations(self) -> int:
        return self.iterations + sum(max(len(t) - 1, 0) for t in self.previous_traces)

    def all_records(self) -> Iterator[IterationRecord]:
        for t in self.previous_traces:
            yield from t
        yield from self.trace


class SingularSystemError(np.linalg.LinAlgError):
    def __init__(self, msg, cond=math.inf):
        super().__init__(msg)
        self.cond = cond


@dataclass(frozen=True)
class NewtonStep:
    point: np.ndarray
    stepsize: float
    residual: np.ndarray


@dataclass(frozen=True)
class GradientStep:
    point: np.ndarray
    stepsize: float
    forced: bool


def _factor(J):
    J = np.asarray(J, dtype=float)
    if not np.all(np.isfinite(J)):
        raise SingularSystemError("Jacobian has non-finite entries")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", sla.LinAlgWarning)
        lu, piv = sla.lu_factor(J, check_finite=False)
    diag = np.abs(np.diag(lu))
    if np.any(diag == 0) or not np.all(np.isfinite(diag)):
        raise SingularSystemError("Jacobian is singular (zero pivot)")
    anorm = np.linalg.norm(J, 1)
    rcond, info = lapack.dgecon(lu, anorm, norm="1")
    cond = math.inf if rcond == 0 else 1.0 / rcond
    return lu, piv, cond


def condition_estimate(J) -> float:
    """1-norm condition number estimate from an LU factorization (inf if singular)."""
    try:
        return _factor(J)[2]
    except SingularSystemError:
        return math.inf


def _newton_solve(J, fx):
    lu, piv, cond = _factor(J)
    bound = 1e-8 * (1.0 + np.linalg.norm(fx))
    d = sla.lu_solve((lu, piv), -fx, check_finite=False)
    # a couple of refinement sweeps recover accuracy lost to poor scaling
    for _ in range(3):
        if not np.all(np.isfinite(d)):
            break
        r = J @ d + fx
        if np.linalg.norm(r) <= bound:
            return d, cond
        d = d - sla.lu_solve((lu, piv), r, check_finite=False)
    if np.all(np.isfinite(d)) and np.linalg.norm(J @ d + fx) <= bound:
        return d, cond
    raise SingularSystemError("Newton system solve residual too large", cond)


def newton_direction(p: RootProblem, x) -> np.ndarray:
    """Solve ``J_f(x) d = -f(x)``.

    Raises
    ------
    SingularSystemError
        If the LU factorization has a zero pivot or the solve residual exceeds
        ``1e-8 * (1 + ||f(x)||)``; the caller should fall back to a gradient step.
    """
    d, _ = _newton_solve(p.jac(x), p.f(x))
    return d


def try_newton_step(p: RootProblem, x, d, cfg: SolverConfig,
                    fx_norm: Optional[float] = None) -> Optional[NewtonStep]:
    """Backtrack along `d` with steps ``alpha**j``, ``j = 0..J``.

    Returns the first projected trial point whose residual norm is at most
    ``sqrt(1 - alpha**j * sigma_newton)`` times the current one, or ``None``.
    """
    x = np.asarray(x, dtype=float)
    d = np.asarray(d, dtype=float)
    if fx_norm is None:
        fx_norm = p.residual_norm(x)
    dom = p.domain
    for j in range(cfg.max_newton_backtracks + 1):
        a = cfg.alpha ** j
        cand = cfg.project(x + a * d, x, dom)
        try:
            fc = p.f(cand)
        except (DomainError, FloatingPointError):
            continue
        nc = np.linalg.norm(fc)
        if np.isfinite(nc) and nc <= math.sqrt(1.0 - a * cfg.sigma_newton) * fx_norm:
            return NewtonStep(cand, a, fc)
    return None


def _clamp_residual_split(x, d, a, dom):
    """Norms of ``P_i(x_i + d_i) - x_i`` over the moved and shrinkable sets."""
    _, moved, shrink = _masks(x, d, a, dom)
    r = project_orthogonal(x + d, dom) - x
    return math.sqrt(float(r[moved] @ r[moved])), math.sqrt(float(r[shrink] @ r[shrink]))


def gradient_step(p: RootProblem, x, cfg: SolverConfig, grad=None) -> GradientStep:
    """Projected gradient step with the arc Armijo rule and the anti-stall test.

    At most ``cfg.max_gradient_backtracks`` step lengths ``alpha**j`` are
    tried.  When none passes both tests the last trial point is returned with
    ``forced=True``.
    """
    x = np.asarray(x, dtype=float)
    dom = p.domain
    g = grad_theta_at(p, x) if grad is None else np.asarray(grad, dtype=float)
    th = theta(p, x)
    d = -g
    if cfg.normalize_gradient:
        gn = np.linalg.norm(g)
        if gn > 0:
            d = d / gn
    cand, a = x, 1.0
    for j in range(cfg.max_gradient_backtracks):
        a = cfg.alpha ** j
        cand = cfg.project(x + a * d, x, dom)
        try:
            tc = theta(p, cand)
        except DomainError:
            continue
        armijo = tc <= th + cfg.sigma_gradient * float(g @ (cand - x))
        if not armijo:
            continue
        moved, shrink = _clamp_residual_split(x, d, a, dom)
        if moved >= cfg.rho * shrink:
            return GradientStep(cand, a, False)
    return GradientStep(cand, a, True)


def grad_theta_at(p: RootProblem, x):
    return p.jac(x).T @ p.f(x)


def stationarity_residual(p: RootProblem, x, grad=None) -> float:
    x = np.asarray(x, dtype=float)
    g = grad_theta_at(p, x) if grad is None else grad
    return float(np.linalg.norm(project_orthogonal(x - g, p.domain) - x))


def is_stationary(p: RootProblem, x, tol: float = 1e-10) -> bool:
    """True when the classical projected gradient map fixes `x` (to `tol`)."""
    return stationarity_residual(p, x) <= tol


def _record(k, kind, a, x, fx, cond=math.nan):
    return IterationRecord(k=k, step_kind=kind, stepsize=a,
                           residual_norm=float(np.linalg.norm(fx)),
                           theta=0.5 * float(fx @ fx),
                           zero_components=int(np.count_nonzero(x == 0)),
                           cond_estimate=cond)


def nlpc_solve(p: RootProblem, x0, cfg: SolverConfig = SolverConfig()) -> SolveOutcome:
    """Run the combined method from `x0` for at most ``cfg.max_iterations`` steps."""
    x = p.domain.require(x0).copy()
    fx = p.f(x)
    res = float(np.linalg.norm(fx))
    trace = [_record(0, StepKind.INITIAL, math.nan, x, fx)]
    use_gradient = False

    def done(status):
        return SolveOutcome(status=status, x=x, trace=tuple(trace))

    for k in range(1, cfg.max_iterations + 1):
        if res <= cfg.tau:
            return done(Status.CONVERGED)
        J = p.jac(x)
        if not use_gradient:
            try:
                d, cond = _newton_solve(J, fx)
            except SingularSystemError as exc:
                d, cond = None, exc.cond
            trace[-1] = replace(trace[-1], cond_estimate=cond)
            step = None if d is None else try_newton_step(p, x, d, cfg, res)
            if step is not None:
                x, fx = step.point, step.residual
                res = float(np.linalg.norm(fx))
                trace.append(_record(k, StepKind.NEWTON, step.stepsize, x, fx))
                continue
            use_gradient = True
        g = J.T @ fx
        if stationarity_residual(p, x, g) <= cfg.stationarity_tol:
            return done(Status.STATIONARY_NOT_ROOT)
        step = gradient_step(p, x, cfg, grad=g)
        x = step.point
        fx = p.f(x)
        res = float(np.linalg.norm(fx))
        kind = StepKind.GRADIENT_FORCED if step.forced else StepKind.GRADIENT
        trace.append(_record(k, kind, step.stepsize, x, fx))
        use_gradient = step.forced
    if res <= cfg.tau:
        return done(Status.CONVERGED)
    return done(Status.BUDGET_EXHAUSTED)


Sampler = Union[Callable[[], np.ndarray], Iterable[np.ndarray]]


def _draw_fn(sampler: Sampler):
    if callable(sampler):
        return sampler
    it = iter(sampler)
    return lambda: next(it)


def nlpc_solve_with_restarts(p: RootProblem, sampler: Sampler,
                             cfg: SolverConfig = SolverConfig()) -> SolveOutcome:
    """Restart :func:`nlpc_solve` from fresh initial points until it converges.

    `sampler` is either a zero-argument callable returning a point or an
    iterable of points.  Draws whose Jacobian condition estimate is not below
    ``cfg.jacobian_condition_limit`` are discarded without counting as a
    restart.  The returned ``restarts`` is the number of runs minus one.
    """
    draw = _draw_fn(sampler)
    failed = []
    last = None
    runs = 0
    rejected = 0
    x0 = None
    while runs <= cfg.max_restarts:
        try:
            x0 = np.asarray(draw(), dtype=float)
        except StopIteration:
            break
        if not condition_estimate(p.jac(x0)) < cfg.jacobian_condition_limit:
            rejected += 1
            if rejected >= cfg.max_screen_draws:
                log.warning("condition screen rejected %d draws, giving up", rejected)
                break
            continue
        out = nlpc_solve(p, x0, cfg)
        runs += 1
        if out.converged:
            return replace(out, restarts=runs - 1, previous_traces=tuple(failed))
        log.debug("run %d ended with %s after %d iterations", runs, out.status.value, out.iterations)
        failed.append(out.trace)
        last = out
    if last is None:
        x = x0 if x0 is not None else np.full(p.dimension, np.nan)
        return SolveOutcome(Status.BUDGET_EXHAUSTED, x=x, restarts=0)
    return SolveOutcome(Status.BUDGET_EXHAUSTED, x=last.x, restarts=runs - 1,
                        trace=last.trace, previous_traces=tuple(failed[:-1]))


TRACE_COLUMNS = ("k", "step_kind", "stepsize", "residual_norm", "theta",
                 "zero_components", "cond_estimate")


def fmt_float(v: float) -> str:
    """Scientific notation with 17 significant digits."""
    return f"{float(v):.16e}"


def write_trace_csv(trace: Iterable[IterationRecord], out=None) -> str:
    """Write a trace as CSV to the file object `out` (or return it as text)."""
    buf = io.StringIO() if out is None else out
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRACE_COLUMNS)
    for r in trace:
        w.writerow([r.k, r.step_kind.value, fmt_float(r.stepsize), fmt_float(r.residual_norm),
                    fmt_float(r.theta), r.zero_components, fmt_float(r.cond_estimate)])
    return buf.getvalue() if out is None else ""
