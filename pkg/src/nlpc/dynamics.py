"""Long-horizon integration of the mass-action ODE as a steady-state baseline.

The integrator is the L-stable Rosenbrock pair of order 2(3) of Shampine and
Reichelt (the scheme behind MATLAB's ``ode23s``), with its continuous
extension for output at requested times.  Linearly implicit methods keep
linear invariants, so conservation laws drift only by roundoff and by the
clamping of tiny negative concentrations.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg as sla

from .crn import CrnNetwork, species_rhs, species_rhs_jacobian
from .solver import fmt_float

__all__ = ["IntegratorConfig", "Trajectory", "IntegrationError", "integrate",
           "dynamic_steady_state", "write_trajectory_csv"]

_D = 1.0 / (2.0 + math.sqrt(2.0))
_E32 = 6.0 + math.sqrt(2.0)


class IntegrationError(RuntimeError):
    def __init__(self, msg, t_reached):
        super().__init__(f"{msg} (reached t={t_reached:.6g})")
        self.t_reached = t_reached


@dataclass(frozen=True)
class IntegratorConfig:
    rtol: float = 1e-6
    atol: float = 1e-9
    horizon: float = 2.5e7
    max_steps: int = 200_000
    samples: int = 101
    # stop once ||S v(x)|| drops below this; None integrates the whole horizon
    early_exit_residual: Optional[float] = None

    def __post_init__(self):
        if not (self.rtol > 0 and self.atol > 0):
            raise ValueError("tolerances must be positive")
        if not self.horizon >= 0:
            raise ValueError("horizon must be nonnegative")
        if self.max_steps < 1 or self.samples < 1:
            raise ValueError("max_steps and samples must be >= 1")


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    n_steps: int = 0
    n_rejected: int = 0
    # (time, most negative value clamped to zero) per accepted step that needed it
    clamp_events: list = field(default_factory=list)

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]


def _sample_times(T, samples):
    if T == 0 or samples == 1:
        return np.array([T], dtype=float)
    return np.linspace(0.0, T, samples)


def integrate(net: CrnNetwork, x0, cfg: IntegratorConfig = IntegratorConfig()) -> Trajectory:
    """Integrate ``x' = S v(x)`` from `x0` over ``[0, cfg.horizon]``.

    States are reported at ``cfg.samples`` equally spaced times (only the
    horizon itself when ``samples == 1``).  With an early exit the
    trajectory stops at the exit time.

    Raises
    ------
    IntegrationError
        On step-size underflow or when ``cfg.max_steps`` is exceeded.
    """
    y = np.array(x0, dtype=float)
    if y.shape != (net.n_species,):
        raise ValueError(f"initial state must have shape ({net.n_species},)")
    if np.any(y < 0) or not np.all(np.isfinite(y)):
        raise ValueError("initial state must be finite and nonnegative")
    T = float(cfg.horizon)
    out_t = _sample_times(T, cfg.samples)
    out_x = np.empty((out_t.size, y.size))
    rtol, atol = cfg.rtol, cfg.atol
    n = y.size
    I = np.eye(n)

    def f(z):
        return species_rhs(net, z)

    def emit_until(t_lo, t_hi, y0, h, k1, k2, upto):
        nonlocal next_out
        while next_out < out_t.size and out_t[next_out] <= t_hi and next_out < upto:
            s = (out_t[next_out] - t_lo) / h if h > 0 else 1.0
            yi = y0 + h * (s * (1 - s) / (1 - 2 * _D) * k1 + s * (s - 2 * _D) / (1 - 2 * _D) * k2)
            out_x[next_out] = np.maximum(yi, 0.0)
            next_out += 1

    traj = Trajectory(out_t, out_x)
    next_out = 0
    t = 0.0
    while next_out < out_t.size and out_t[next_out] <= 0.0:
        out_x[next_out] = y
        next_out += 1
    if T == 0:
        return traj

    F0 = f(y)
    scale0 = atol + rtol * np.abs(y)
    d0 = np.max(np.abs(F0) / scale0)
    h = T if d0 == 0 else min(T, 0.5 * rtol ** (1 / 3) / d0)
    J = species_rhs_jacobian(net, y)
    steps = 0
    while t < T:
        if steps >= cfg.max_steps:
            raise IntegrationError("maximum number of steps exceeded", t)
        hmin = 16 * np.finfo(float).eps * max(abs(t), 1.0)
        h = min(max(h, hmin), T - t)
        rejected = False
        while True:
            lu = sla.lu_factor(I - h * _D * J, check_finite=False)
            k1 = sla.lu_solve(lu, F0, check_finite=False)
            F1 = f(y + 0.5 * h * k1)
            k2 = sla.lu_solve(lu, F1 - k1, check_finite=False) + k1
            ynew = y + h * k2
            F2 = f(ynew)
            k3 = sla.lu_solve(lu, F2 - _E32 * (k2 - F1) - 2.0 * (k1 - F0), check_finite=False)
            err_vec = h / 6.0 * (k1 - 2.0 * k2 + k3)
            scale = atol + rtol * np.maximum(np.abs(y), np.abs(ynew))
            err = float(np.max(np.abs(err_vec) / scale))
            if not math.isfinite(err):
                err = 1e10
            # negativity far beyond roundoff means the step was too long
            elif ynew.min() < -10 * atol:
                err = max(err, 2.0)
            if err <= 1.0:
                break
            traj.n_rejected += 1
            rejected = True
            if h <= hmin:
                raise IntegrationError("step size underflow", t)
            h = max(hmin, h * max(0.1, 0.8 * err ** (-1 / 3)))
        steps += 1
        t_new = T if T - (t + h) <= hmin else t + h
        emit_until(t, t_new, y, h, k1, k2, out_t.size)
        neg = ynew.min()
        if neg < 0:
            traj.clamp_events.append((t_new, float(neg)))
            ynew = np.maximum(ynew, 0.0)
            F2 = f(ynew)
        t, y, F0 = t_new, ynew, F2
        if cfg.early_exit_residual is not None and np.linalg.norm(F0) <= cfg.early_exit_residual:
            keep = next_out
            if keep and out_t[keep - 1] == t:
                keep -= 1
            traj.times = np.append(out_t[:keep], t)
            traj.states = np.vstack([out_x[:keep], y[None, :]])
            traj.n_steps = steps
            return traj
        J = species_rhs_jacobian(net, y)
        grow = 5.0 if not rejected else 1.0
        h = h * min(grow, 0.8 * err ** (-1 / 3)) if err > 0 else h * grow
    # the horizon itself is always reported as the accepted end state
    if out_t[-1] == T:
        out_x[-1] = y
    traj.n_steps = steps
    return traj


def dynamic_steady_state(net: CrnNetwork, x0, cfg: IntegratorConfig = IntegratorConfig()) -> np.ndarray:
    """State at the end of the horizon; no convergence check is made."""
    return integrate(net, x0, cfg).final.copy()


def write_trajectory_csv(net: CrnNetwork, traj: Trajectory, out) -> None:
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["t", *net.species])
    for t, x in zip(traj.times, traj.states):
        w.writerow([fmt_float(t), *(fmt_float(v) for v in x)])
