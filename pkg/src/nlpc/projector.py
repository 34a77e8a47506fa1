"""Projections onto boxes and the coordinate partition used by the line searches.

Two operators are provided.  ``project_orthogonal`` is the usual clamp onto
``[lower, upper]``.  ``project_nonlinear`` keeps every coordinate of the trial
point that is feasible and resets the infeasible ones to the current iterate,
so it never lands on the boundary unless the current iterate already sits there.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class InfeasiblePointError(ValueError):
    """Raised when an operation requires a point inside the box."""


@dataclass(frozen=True)
class BoxDomain:
    """Product of closed intervals, bounds may be infinite."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.array(self.lower, dtype=float).reshape(-1)
        up = np.array(self.upper, dtype=float).reshape(-1)
        if lo.shape != up.shape:
            raise ValueError(f"bound shapes differ: {lo.shape} vs {up.shape}")
        if lo.size == 0:
            raise ValueError("domain must have at least one coordinate")
        if np.isnan(lo).any() or np.isnan(up).any():
            raise ValueError("bounds must not be NaN")
        if not np.all(lo < up):
            bad = np.flatnonzero(~(lo < up))
            raise ValueError(f"degenerate or inverted interval at coordinates {bad.tolist()}")
        lo.flags.writeable = False
        up.flags.writeable = False
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", up)

    @classmethod
    def nonnegative(cls, n: int) -> "BoxDomain":
        return cls(np.zeros(n), np.full(n, np.inf))

    @classmethod
    def unbounded(cls, n: int) -> "BoxDomain":
        return cls(np.full(n, -np.inf), np.full(n, np.inf))

    @property
    def dimension(self) -> int:
        return self.lower.size

    def member_mask(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        return (self.lower <= z) & (z <= self.upper)

    def contains(self, x) -> bool:
        x = np.asarray(x, dtype=float)
        return x.shape == self.lower.shape and bool(np.all(self.member_mask(x)))

    def require(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != self.lower.shape:
            raise InfeasiblePointError(
                f"point has shape {x.shape}, domain dimension is {self.dimension}")
        if not np.all(self.member_mask(x)):
            bad = np.flatnonzero(~self.member_mask(x))
            raise InfeasiblePointError(f"point outside domain at coordinates {bad.tolist()}")
        return x


@dataclass(frozen=True)
class IndexSets:
    """Coordinates split by how they react to a step ``x + alpha*d``.

    ``blocked`` coordinates leave the box for every positive step,
    ``moved`` ones stay inside for this ``alpha``, ``shrinkable`` ones would
    stay inside for a small enough step.  Indices are zero-based.
    """

    blocked: frozenset
    moved: frozenset
    shrinkable: frozenset


def project_nonlinear(z, x, dom: BoxDomain) -> np.ndarray:
    """Keep the feasible coordinates of `z`, take the others from `x`.

    `x` must lie in `dom`; the result then lies in `dom` as well.
    """
    x = dom.require(x)
    z = np.asarray(z, dtype=float)
    return np.where(dom.member_mask(z), z, x)


def project_orthogonal(z, dom: BoxDomain) -> np.ndarray:
    """Euclidean projection onto the box (componentwise clamp)."""
    return np.clip(np.asarray(z, dtype=float), dom.lower, dom.upper)


def _masks(x, d, alpha, dom):
    if not alpha > 0:
        raise ValueError(f"step length must be positive, got {alpha}")
    x = dom.require(x)
    d = np.asarray(d, dtype=float)
    blocked = ((x == dom.lower) & (d < 0)) | ((x == dom.upper) & (d > 0))
    # underflow of alpha*d can make a blocked coordinate look feasible
    moved = dom.member_mask(x + alpha * d) & ~blocked
    shrinkable = ~(blocked | moved)
    return blocked, moved, shrinkable


def index_sets(x, d, alpha: float, dom: BoxDomain) -> IndexSets:
    blocked, moved, shrinkable = _masks(x, d, alpha, dom)
    return IndexSets(
        blocked=frozenset(np.flatnonzero(blocked).tolist()),
        moved=frozenset(np.flatnonzero(moved).tolist()),
        shrinkable=frozenset(np.flatnonzero(shrinkable).tolist()),
    )


def arc_displacement_norm(x, d, alpha: float, dom: BoxDomain) -> float:
    """Length of ``project_nonlinear(x + alpha*d, x) - x`` from the moved set alone."""
    _, moved, _ = _masks(x, d, alpha, dom)
    d = np.asarray(d, dtype=float)
    return float(alpha * np.sqrt(np.sum(d[moved] ** 2)))
