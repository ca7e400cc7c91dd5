"""Discrete fractional Gronwall bound and randomized verification.

The hypothesis on a nonnegative sequence ``v`` reads, for ``1 <= n <= N``,

    D^alpha (v^2)^{n-nu} <= sum_{i<=n} lam[n,i] (v^i)^2 + v^{n-nu} xi^n + (eta^n)^2 + (zeta^n)^2

where ``D^alpha`` is the discrete Caputo operator applied to the squares and
``v^{n-nu} = nu v^{n-1} + (1 - nu) v^n``. Instances are built by solving this at
equality, which is a quadratic in ``v^n``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ParameterDomainError
from .kernels import KernelTables, build_kernel_tables
from .mittag_leffler import mittag_leffler
from .temporal_mesh import PI_A, GradedTimeMesh, default_nu, dt_star

__all__ = [
    "GronwallHypothesisWarning",
    "GronwallInstance",
    "GronwallReport",
    "gronwall_bound",
    "lambda_cap",
    "make_instance",
    "mittag_leffler",
    "verify_gronwall",
]


class GronwallHypothesisWarning(UserWarning):
    """The step-size condition fails, so the bound is computed but certifies nothing."""


@dataclass(frozen=True, eq=False)
class GronwallInstance:
    """Sequences are stored 0-based: ``xi[n-1]`` is ``xi^n``; ``lam[n-1, i]`` is ``lam^n_i``."""

    alpha: float
    mesh: GradedTimeMesh
    tables: KernelTables
    v: np.ndarray  # v^0..v^N
    xi: np.ndarray
    eta: np.ndarray
    zeta: np.ndarray
    lam: np.ndarray  # (N, N + 1), row n-1 holds lam^n_0..lam^n_n
    Lambda: float
    delta: float

    def __post_init__(self):
        N = self.mesh.N
        if self.v.shape != (N + 1,) or any(a.shape != (N,) for a in (self.xi, self.eta, self.zeta)):
            raise ParameterDomainError("sequence lengths do not match the mesh")
        if self.lam.shape != (N, N + 1):
            raise ParameterDomainError("lambda must have shape (N, N + 1)")
        for name in ("v", "xi", "eta", "zeta", "lam"):
            if np.any(getattr(self, name) < 0):
                raise ParameterDomainError(f"{name} must be nonnegative")
        if np.any(np.triu(self.lam, 2)[:, 1:] != 0):
            raise ParameterDomainError("lambda^n_i must vanish for i > n")
        if np.any(self.lam.sum(axis=1) > self.Lambda * (1 + 1e-14)):
            raise ParameterDomainError("row sums of lambda exceed Lambda")
        if not self.delta > 1:
            raise ParameterDomainError(f"delta must exceed 1, got {self.delta}")

    @property
    def N(self) -> int:
        return self.mesh.N

    @property
    def lam_diag_max(self) -> float:
        return float(np.max(self.lam[np.arange(self.N), np.arange(1, self.N + 1)]))

    @property
    def step_condition_met(self) -> bool:
        steps_ok = bool(np.all(np.diff(self.mesh.steps) >= -1e-12 * self.mesh.max_step))
        return steps_ok and self.mesh.max_step <= dt_star(self.alpha, self.lam_diag_max, self.delta)

    def hypothesis_residuals(self) -> np.ndarray:
        """Right side minus left side of the hypothesis at each ``n``; nonnegative when it holds."""
        w = self.v**2
        dw = np.diff(w)
        lhs = np.tril(self.tables.K) @ dw
        nu = self.mesh.nu
        v_off = nu * self.v[:-1] + (1 - nu) * self.v[1:]
        rhs = self.lam @ w + v_off * self.xi + self.eta**2 + self.zeta**2
        return rhs - lhs


def lambda_cap(mesh: GradedTimeMesh, alpha: float, delta: float) -> float:
    """Largest ``max_n lam^n_n`` the step condition tolerates on ``mesh``."""
    return mesh.max_step ** (-alpha) / (delta * PI_A * math.gamma(2 - alpha))


def gronwall_bound(instance: GronwallInstance, n: int) -> float:
    """Right side of the Gronwall conclusion at level ``n``."""
    if not 1 <= n <= instance.N:
        raise IndexError(f"level {n} outside 1..{instance.N}")
    if not instance.step_condition_met:
        warnings.warn("step-size condition unmet; bound is not certified", GronwallHypothesisWarning, stacklevel=2)
    a = instance.alpha
    P = instance.tables.P[:n, :n]
    tn_a = float(instance.mesh.nodes[n]) ** a
    c = instance.delta / (instance.delta - 1)
    forcing = (
        instance.v[0]
        + float(np.max(P @ instance.xi[:n]))
        + math.sqrt(2 * PI_A * tn_a) * float(np.max(instance.eta[:n]))
        + math.sqrt(float(np.max(P @ instance.zeta[:n] ** 2)))
    )
    return c * mittag_leffler(a, c * PI_A * instance.Lambda * tn_a) * forcing


def make_instance(
    mesh: GradedTimeMesh,
    alpha: float,
    rng: np.random.Generator,
    delta: float = 2.0,
    Lambda: Optional[float] = None,
    zero_lambda: bool = False,
) -> GronwallInstance:
    """Random nonnegative data and the ``v`` that meets the hypothesis with equality."""
    N = mesh.N
    tables = build_kernel_tables(mesh, alpha)
    K = tables.K
    if Lambda is None:
        # keep E_alpha(C pi_A Lambda T^alpha) well inside the double range
        c = delta / (delta - 1)
        top = min(5.0, 200.0**alpha / (c * PI_A * mesh.T**alpha))
        Lambda = float(rng.uniform(0.02 * top, top))
    Lambda = float(Lambda)
    cap = lambda_cap(mesh, alpha, delta)

    lam = np.zeros((N, N + 1))
    if not zero_lambda:
        for n in range(1, N + 1):
            row = rng.dirichlet(np.ones(n + 1)) * Lambda * rng.uniform(0.0, 1.0)
            row[n] = min(row[n], cap * (1 - 1e-9))  # stay clear of the boundary roundoff
            lam[n - 1, : n + 1] = row
    xi = rng.uniform(0, 1, N) * rng.uniform(0, 1)
    eta = rng.uniform(0, 1, N) * rng.uniform(0, 1)
    zeta = rng.uniform(0, 1, N) * rng.uniform(0, 1)

    nu = mesh.nu
    v = np.zeros(N + 1)
    v[0] = rng.uniform(0, 1)
    w = np.zeros(N + 1)
    w[0] = v[0] ** 2
    for n in range(1, N + 1):
        Knn = K[n - 1, n - 1]
        hist = float(K[n - 1, : n - 1] @ np.diff(w[:n]))
        A = Knn - lam[n - 1, n]
        B = (1 - nu) * xi[n - 1]
        C = (
            Knn * w[n - 1]
            - hist
            + float(lam[n - 1, :n] @ w[:n])
            + nu * v[n - 1] * xi[n - 1]
            + eta[n - 1] ** 2
            + zeta[n - 1] ** 2
        )
        # C >= 0 by monotonicity of K; clip roundoff only
        C = max(C, 0.0)
        if A <= 0:
            raise ParameterDomainError(f"lam^{n}_{n} = {lam[n - 1, n]} is not below K[n,n] = {Knn}")
        v[n] = (B + math.sqrt(B * B + 4 * A * C)) / (2 * A)
        w[n] = v[n] ** 2
    return GronwallInstance(alpha, mesh, tables, v, xi, eta, zeta, lam, Lambda, delta)


@dataclass(frozen=True)
class GronwallReport:
    seed: int
    alpha: float
    gamma: float
    N: int
    holds: bool
    min_slack: float
    step_condition_met: bool


def verify_gronwall(seed: int, alpha: float, mesh: GradedTimeMesh, delta: float = 2.0, tol: float = 1e-10) -> GronwallReport:
    """Check ``v^n <= bound(n)`` for every ``n`` on one random instance."""
    if mesh.nu == 0.0:
        mesh = mesh.with_nu(default_nu(alpha))
    inst = make_instance(mesh, alpha, np.random.default_rng(seed), delta=delta)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", GronwallHypothesisWarning)
        bounds = np.array([gronwall_bound(inst, n) for n in range(1, mesh.N + 1)])
    slack = float(np.min(bounds - inst.v[1:]))
    met = inst.step_condition_met
    return GronwallReport(seed, alpha, mesh.gamma, mesh.N, met and slack >= -tol, slack, met)
