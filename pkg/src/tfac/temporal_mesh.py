"""Graded temporal meshes and offset time levels."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ParameterDomainError

#: Constant appearing in the complementary-kernel bounds and the step condition.
PI_A = 11.0 / 4.0


def default_nu(alpha: float) -> float:
    """Offset giving the fractional Crank-Nicolson variant."""
    return alpha / 2.0


def default_gamma(alpha: float) -> float:
    return 2.0 / alpha + 0.1


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class GradedTimeMesh:
    """Partition ``t_n = (n/N)**gamma * T`` of ``[0, T]`` with offset ``nu``.

    ``steps[j-1]`` is the step ``t_j - t_{j-1}`` and ``ratios[j-2]`` is
    ``steps[j-1] / steps[j-2]`` (defined for ``j >= 2``).
    """

    T: float
    N: int
    gamma: float
    nu: float
    nodes: np.ndarray
    steps: np.ndarray
    ratios: np.ndarray

    @property
    def max_step(self) -> float:
        return float(self.steps.max())

    @property
    def offset_levels(self) -> np.ndarray:
        """Array of ``t_{n-nu}`` for ``n = 1..N``."""
        return self.nu * self.nodes[:-1] + (1.0 - self.nu) * self.nodes[1:]

    def offset_level(self, n: int) -> float:
        return offset_level(self, n)

    def with_nu(self, nu: float) -> GradedTimeMesh:
        return build_graded_mesh(self.T, self.N, self.gamma, nu)


def build_graded_mesh(T: float, N: int, gamma: float, nu: float = 0.0) -> GradedTimeMesh:
    if not (T > 0 and math.isfinite(T)):
        raise ParameterDomainError(f"T must be positive, got {T}")
    if int(N) != N or N < 1:
        raise ParameterDomainError(f"N must be a positive integer, got {N}")
    if not gamma >= 1:
        raise ParameterDomainError(f"gamma must be >= 1, got {gamma}")
    if not 0 <= nu < 0.5:
        raise ParameterDomainError(f"nu must lie in [0, 1/2), got {nu}")
    N = int(N)

    # closed formula, not accumulated steps
    nodes = T * (np.arange(N + 1) / N) ** gamma
    nodes[-1] = T
    steps = np.diff(nodes)
    ratios = steps[1:] / steps[:-1]
    return GradedTimeMesh(
        T=float(T),
        N=N,
        gamma=float(gamma),
        nu=float(nu),
        nodes=_readonly(nodes),
        steps=_readonly(steps),
        ratios=_readonly(ratios),
    )


def offset_level(mesh: GradedTimeMesh, n: int) -> float:
    """Return ``nu * t_{n-1} + (1 - nu) * t_n``."""
    if not 1 <= n <= mesh.N:
        raise IndexError(f"offset level index {n} outside 1..{mesh.N}")
    return mesh.nu * float(mesh.nodes[n - 1]) + (1.0 - mesh.nu) * float(mesh.nodes[n])


@dataclass(frozen=True)
class StepRestriction:
    dt_star: float
    max_step: float
    satisfied: bool


def dt_star(alpha: float, L: float, delta: float) -> float:
    """Largest admissible step ``(delta * PI_A * L * Gamma(2 - alpha))**(-1/alpha)``."""
    if not 0 < alpha < 1:
        raise ParameterDomainError(f"alpha must lie in (0, 1), got {alpha}")
    if not L >= 0:
        raise ParameterDomainError(f"L must be nonnegative, got {L}")
    if not delta > 1:
        raise ParameterDomainError(f"delta must exceed 1, got {delta}")
    if L == 0:
        return math.inf
    # log form avoids overflow for small alpha
    log_val = -(math.log(delta * PI_A * L) + math.lgamma(2.0 - alpha)) / alpha
    return math.exp(log_val) if log_val < 709.0 else math.inf


def step_restriction(mesh: GradedTimeMesh, alpha: float, L: float, delta: float = 2.0) -> StepRestriction:
    ds = dt_star(alpha, L, delta)
    return StepRestriction(dt_star=ds, max_step=mesh.max_step, satisfied=mesh.max_step <= ds)
