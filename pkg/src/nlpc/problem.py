"""Box-constrained square systems f(x) = 0 and the least-squares merit function."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .projector import BoxDomain, InfeasiblePointError

__all__ = ["DomainError", "RootProblem", "theta", "grad_theta"]


class DomainError(InfeasiblePointError):
    """A residual or Jacobian was requested outside the problem domain."""


@dataclass(frozen=True)
class RootProblem:
    """Residual map, its Jacobian, and the box the roots must lie in.

    The callables receive a 1-D float array and must not mutate it.
    Evaluation outside `domain` raises :class:`DomainError`.
    """

    residual: Callable[[np.ndarray], np.ndarray]
    jacobian: Callable[[np.ndarray], np.ndarray]
    domain: BoxDomain
    name: str = ""

    @property
    def dimension(self) -> int:
        return self.domain.dimension

    def _check(self, x):
        x = np.asarray(x, dtype=float)
        if not self.domain.contains(x):
            raise DomainError(f"evaluation point outside the domain of {self.name or 'problem'}")
        return x

    def f(self, x) -> np.ndarray:
        x = self._check(x)
        return np.asarray(self.residual(x), dtype=float).reshape(self.dimension)

    def jac(self, x) -> np.ndarray:
        x = self._check(x)
        return np.asarray(self.jacobian(x), dtype=float).reshape(self.dimension, self.dimension)

    def residual_norm(self, x) -> float:
        return float(np.linalg.norm(self.f(x)))


def theta(p: RootProblem, x) -> float:
    """Half the squared Euclidean norm of the residual."""
    fx = p.f(x)
    return 0.5 * float(fx @ fx)


def grad_theta(p: RootProblem, x) -> np.ndarray:
    return p.jac(x).T @ p.f(x)
