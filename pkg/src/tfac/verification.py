"""Manufactured solutions, weighted error norms, rate tables and truncation checks.

Every manufactured solution has the separable form ``u(x, t) = g(x) (1 + t**alpha)``
with ``g(x1, x2) = c p(x1) p(x2)``. The Caputo derivative of ``1 + t**alpha`` is
the constant ``Gamma(1 + alpha)``, so sources are available in closed form.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import ParameterDomainError, SolverError
from .fem.mesh import mesh_for_spacing
from .fem.quadrature import triangle_rule
from .fem.spaces import DiscreteField, MixedSpace
from .kernels import build_kernel_tables, discrete_caputo_all
from .solver import ProblemSpec, run
from .temporal_mesh import GradedTimeMesh, build_graded_mesh, default_gamma, default_nu


@dataclass(frozen=True)
class Profile1D:
    """One-dimensional factor ``p`` with first and second derivatives.

    ``kink`` marks profiles built from ``|s|``; they are smooth only away from ``s = 0``.
    """

    p: Callable
    dp: Callable
    d2p: Callable
    kink: bool = False


def _sin_profile() -> Profile1D:
    return Profile1D(
        p=lambda s: np.sin(s) * (1 - s),
        dp=lambda s: np.cos(s) * (1 - s) - np.sin(s),
        d2p=lambda s: -np.sin(s) * (1 - s) - 2 * np.cos(s),
    )


def _square_abs_profile() -> Profile1D:
    return Profile1D(
        p=lambda s: s * s * (1 - np.abs(s)),
        dp=lambda s: 2 * s - 3 * s * np.abs(s),
        d2p=lambda s: 2 - 6 * np.abs(s),
        kink=True,
    )


def _power_abs_profile(q: float = 2.5) -> Profile1D:
    # |s|**q (1 - |s|); the real power of a negative base is read through |s|
    def p(s):
        a = np.abs(s)
        return a**q * (1 - a)

    def dp(s):
        a = np.abs(s)
        return np.sign(s) * (q * a ** (q - 1) - (q + 1) * a**q)

    def d2p(s):
        a = np.abs(s)
        return q * (q - 1) * a ** (q - 2) - (q + 1) * q * a ** (q - 1)

    return Profile1D(p, dp, d2p, kink=True)


def _linear_abs_profile() -> Profile1D:
    return Profile1D(
        p=lambda s: s * (1 - np.abs(s)),
        dp=lambda s: 1 - 2 * np.abs(s),
        d2p=lambda s: -2 * np.sign(s),
        kink=True,
    )


@dataclass(frozen=True)
class ManufacturedCase:
    name: str
    domain: tuple[float, float, float, float]
    T: float
    kappa: float
    profile: Profile1D
    scale: float = 1.0
    regularity: str = ""

    def __post_init__(self):
        x0, x1, y0, y1 = self.domain
        s = np.linspace(0.0, 1.0, 17)
        edges = [
            (x0 + s * (x1 - x0), np.full_like(s, y0)),
            (x0 + s * (x1 - x0), np.full_like(s, y1)),
            (np.full_like(s, x0), y0 + s * (y1 - y0)),
            (np.full_like(s, x1), y0 + s * (y1 - y0)),
        ]
        if any(np.max(np.abs(self.g(x, y))) > 1e-12 for x, y in edges):
            raise ParameterDomainError(f"case {self.name}: profile does not vanish on the boundary")

    def g(self, x, y):
        p = self.profile.p
        return self.scale * p(x) * p(y)

    def grad_g(self, x, y):
        pr = self.profile
        return self.scale * pr.dp(x) * pr.p(y), self.scale * pr.p(x) * pr.dp(y)

    def laplacian_g(self, x, y):
        pr = self.profile
        return self.scale * (pr.d2p(x) * pr.p(y) + pr.p(x) * pr.d2p(y))

    def exact_u(self, t: float, alpha: float) -> Callable:
        f = 1.0 + t**alpha
        return lambda x, y: self.g(x, y) * f

    def exact_sigma(self, t: float, alpha: float) -> Callable:
        f = 1.0 + t**alpha

        def sigma(x, y):
            gx, gy = self.grad_g(x, y)
            return gx * f, gy * f

        return sigma


CASES = {
    "6.1": ManufacturedCase(
        "6.1", (0.0, 1.0, 0.0, 1.0), T=1.0, kappa=1.0, profile=_sin_profile(), scale=0.5, regularity="smooth"
    ),
    "6.2": ManufacturedCase(
        "6.2", (-1.0, 1.0, -1.0, 1.0), T=0.5, kappa=0.5, profile=_square_abs_profile(), regularity="H3"
    ),
    "6.3": ManufacturedCase(
        "6.3", (-1.0, 1.0, -1.0, 1.0), T=0.5, kappa=0.5, profile=_power_abs_profile(), regularity="H3.5"
    ),
    "6.4": ManufacturedCase(
        "6.4", (-1.0, 1.0, -1.0, 1.0), T=0.5, kappa=0.5, profile=_linear_abs_profile(), regularity="below H3"
    ),
}


def get_case(name: str) -> ManufacturedCase:
    key = name.removeprefix("ex").removeprefix("Ex").strip()
    if key not in CASES:
        raise ParameterDomainError(f"unknown example {name!r}; available: {', '.join(sorted(CASES))}")
    return CASES[key]


def manufactured_source(case: ManufacturedCase, alpha: float, x, y, t: float, kappa_in_flux_term: bool = True):
    """``D_t^alpha u - c Laplace(u) - u + u**3`` for the case's exact ``u``; ``c = kappa**2`` by default."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if case.profile.kink and (np.any(x == 0.0) or np.any(y == 0.0)):
        raise ParameterDomainError("source requested on a kink line of the profile")
    c = case.kappa**2 if kappa_in_flux_term else 1.0
    g = case.g(x, y)
    f = 1.0 + t**alpha
    u = g * f
    return math.gamma(1.0 + alpha) * g - c * case.laplacian_g(x, y) * f - u + u**3


def problem_for(case: ManufacturedCase, alpha: float, nu: Optional[float] = None, kappa_in_flux_term: bool = True) -> ProblemSpec:
    def source(x, y, t):
        return manufactured_source(case, alpha, x, y, t, kappa_in_flux_term)

    return ProblemSpec(
        kappa=case.kappa,
        alpha=alpha,
        nu=nu,
        u0=case.g,
        source=source,
        kappa_in_flux_term=kappa_in_flux_term,
    )


def _scalar_error(space: MixedSpace, item, exact) -> float:
    if isinstance(item, DiscreteField):
        return space.scalar_l2_error(item.coefficients, exact)
    _, wq = triangle_rule()
    q = space.quadrature_points
    diff = item(q[..., 0], q[..., 1]) - exact(q[..., 0], q[..., 1])
    return float(np.sqrt(np.sum((diff**2 @ wq) * space.areas)))


def _flux_error(space: MixedSpace, item, exact) -> float:
    if isinstance(item, DiscreteField):
        return space.flux_l2_error(item.coefficients, exact)
    _, wq = triangle_rule()
    q = space.quadrature_points
    ax, ay = item(q[..., 0], q[..., 1])
    ex, ey = exact(q[..., 0], q[..., 1])
    sq = (ax - ex) ** 2 + (ay - ey) ** 2
    return float(np.sqrt(np.sum((sq @ wq) * space.areas)))


def weighted_errors(u_traj: Sequence, sigma_traj: Sequence, case: ManufacturedCase, tmesh: GradedTimeMesh, space: MixedSpace, alpha: float) -> tuple[float, float]:
    """``max_n t_n**(alpha/2) ||u_h^n - u(t_n)||`` and the same for the flux, over ``n = 1..N``.

    Trajectory entries may be discrete fields or plain callables.
    """
    Eu = Es = 0.0
    for n in range(1, tmesh.N + 1):
        t = float(tmesh.nodes[n])
        wgt = t ** (alpha / 2)
        Eu = max(Eu, wgt * _scalar_error(space, u_traj[n], case.exact_u(t, alpha)))
        Es = max(Es, wgt * _flux_error(space, sigma_traj[n], case.exact_sigma(t, alpha)))
    return Eu, Es


# -- convergence studies -------------------------------------------------------


@dataclass
class StudyRow:
    alpha: float
    gamma: float
    N: int
    h: float
    max_step: float
    dt_star: float = math.nan
    E_u: float = math.nan
    E_sigma: float = math.nan
    R_u_h: Optional[float] = None
    R_u_dt: Optional[float] = None
    R_sigma_h: Optional[float] = None
    R_sigma_dt: Optional[float] = None
    step_ok: Optional[bool] = None
    error: str = ""


COLUMNS = [
    "alpha", "gamma", "N", "h", "dt_star", "max_step",
    "E_u", "R_u_h", "R_u_dt", "E_sigma", "R_sigma_h", "R_sigma_dt", "step_ok", "error",
]

_MD_HEADERS = {
    "dt_star": "Δt*", "max_step": "Δt", "E_u": "E_u", "R_u_h": "R_u,h", "R_u_dt": "R_u,Δt",
    "E_sigma": "E_σ", "R_sigma_h": "R_σ,h", "R_sigma_dt": "R_σ,Δt",
}


def _rate(e1: float, e2: float, x1: float, x2: float) -> Optional[float]:
    if not (e1 > 0 and e2 > 0 and math.isfinite(e1) and math.isfinite(e2)):
        return None
    return math.log(e1 / e2) / math.log(x1 / x2)


@dataclass
class ConvergenceReport:
    case: str
    rows: list[StudyRow] = field(default_factory=list)

    def fill_rates(self) -> None:
        """Rates between consecutive rows; a failed row leaves its neighbours' rates absent."""
        for prev, cur in zip(self.rows, self.rows[1:]):
            cur.R_u_h = _rate(prev.E_u, cur.E_u, prev.h, cur.h)
            cur.R_u_dt = _rate(prev.E_u, cur.E_u, prev.max_step, cur.max_step)
            cur.R_sigma_h = _rate(prev.E_sigma, cur.E_sigma, prev.h, cur.h)
            cur.R_sigma_dt = _rate(prev.E_sigma, cur.E_sigma, prev.max_step, cur.max_step)

    @property
    def final(self) -> StudyRow:
        return self.rows[-1]

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["case"] + COLUMNS)
        for r in self.rows:
            vals = []
            for c in COLUMNS:
                v = getattr(r, c)
                vals.append("" if v is None else (repr(v) if isinstance(v, float) else str(v)))
            wr.writerow([self.case] + vals)
        text = buf.getvalue()
        if path is not None:
            _write_lf(path, text)
        return text

    def to_markdown(self, path=None) -> str:
        """Rows are the quantities and columns the refinement levels, four significant digits."""
        def fmt(v):
            if v is None or (isinstance(v, float) and math.isnan(v)):
                return "-"
            return f"{v:.4g}" if isinstance(v, float) else str(v)

        title = f"Example {self.case}, alpha = {self.rows[0].alpha:g}, gamma = {self.rows[0].gamma:.4g}" if self.rows else ""
        keys = ("dt_star", "max_step", "E_u", "R_u_h", "R_u_dt", "E_sigma", "R_sigma_h", "R_sigma_dt")
        table = [["N"] + [str(r.N) for r in self.rows]]
        table += [[_MD_HEADERS[key]] + [fmt(getattr(r, key)) for r in self.rows] for key in keys]
        widths = [max(len(row[i]) for row in table) for i in range(len(table[0]))]

        def line(cells):
            return "| " + " | ".join(c.ljust(w) for c, w in zip(cells, widths)) + " |"

        lines = [title, "", line(table[0]), "|" + "|".join("-" * (w + 2) for w in widths) + "|"]
        lines += [line(row) for row in table[1:]]
        failed = [r for r in self.rows if r.error]
        for r in failed:
            lines.append(f"\nN = {r.N} failed: {r.error}")
        text = "\n".join(lines) + "\n"
        if path is not None:
            _write_lf(path, text)
        return text


def _write_lf(path, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def spatial_mesh_for(case: ManufacturedCase, N: int, coupling: str = "h=1/(2N)", nx: Optional[int] = None):
    """Mesh for level ``N``: cell width ``1/(2N)`` under the default coupling, or a fixed ``nx``."""
    if coupling == "fixed":
        if nx is None:
            raise ParameterDomainError("fixed coupling needs nx")
        x0, x1, y0, y1 = case.domain
        return mesh_for_spacing(case.domain, (x1 - x0) / nx), (x1 - x0) / nx
    if coupling != "h=1/(2N)":
        raise ParameterDomainError(f"unknown coupling rule {coupling!r}")
    h = 1.0 / (2 * N)
    return mesh_for_spacing(case.domain, h), h


def convergence_study(
    case: ManufacturedCase,
    alpha: float,
    N_list: Sequence[int],
    coupling: str = "h=1/(2N)",
    k: int = 1,
    gamma: Optional[float] = None,
    nu: Optional[float] = None,
    delta: float = 2.0,
    nx: Optional[int] = None,
    kappa_in_flux_term: bool = True,
    progress: Optional[Callable[[str], None]] = None,
) -> ConvergenceReport:
    N_list = list(N_list)
    if any(b <= a for a, b in zip(N_list, N_list[1:])):
        raise ParameterDomainError(f"N list must be increasing, got {N_list}")
    gamma = default_gamma(alpha) if gamma is None else gamma
    nu = default_nu(alpha) if nu is None else nu
    problem = problem_for(case, alpha, nu, kappa_in_flux_term)
    report = ConvergenceReport(case.name)
    for N in N_list:
        tmesh = build_graded_mesh(case.T, N, gamma, nu)
        mesh, h = spatial_mesh_for(case, N, coupling, nx)
        row = StudyRow(alpha=alpha, gamma=gamma, N=N, h=h, max_step=tmesh.max_step)
        try:
            space = MixedSpace(mesh, k)
            result = run(problem, tmesh, space, delta=delta)
            row.E_u, row.E_sigma = weighted_errors(result.u, result.sigma, case, tmesh, space, alpha)
            row.dt_star = result.dt_star
            row.step_ok = result.step_ok
        except (SolverError, FloatingPointError, np.linalg.LinAlgError) as exc:
            row.error = str(exc)
        report.rows.append(row)
        if progress is not None:
            progress(f"N={N} E_u={row.E_u:.4e} E_sigma={row.E_sigma:.4e}{' ' + row.error if row.error else ''}")
    report.fill_rates()
    return report


# -- truncation and linearization checks ----------------------------------------


@dataclass
class UpsilonReport:
    alpha: float
    gamma: float
    N_list: list[int]
    max_abs: list[float]
    weighted: list[float]
    expected_order: float

    @staticmethod
    def _orders(vals, N_list):
        return [_rate(a, b, 1.0 / m, 1.0 / n) for a, b, m, n in zip(vals, vals[1:], N_list, N_list[1:])]

    @property
    def orders(self) -> list[Optional[float]]:
        """Orders of ``max_n sum_j P[n,j] |Upsilon^j|``, the quantity the truncation bound controls."""
        return self._orders(self.weighted, self.N_list)

    @property
    def pointwise_orders(self) -> list[Optional[float]]:
        return self._orders(self.max_abs, self.N_list)

    @property
    def observed_order(self) -> Optional[float]:
        return self.orders[-1] if self.orders else None


def measure_upsilon(
    alpha: float,
    gamma: float,
    N_list: Sequence[int],
    T: float = 1.0,
    nu: Optional[float] = None,
    phi: Optional[Callable] = None,
    caputo: Optional[Callable] = None,
) -> UpsilonReport:
    """Truncation ``Upsilon^{n-nu}`` of the discrete Caputo operator at the offset levels.

    Defaults to ``phi(t) = t**alpha`` with exact Caputo derivative ``Gamma(1 + alpha)``.
    """
    nu = default_nu(alpha) if nu is None else nu
    if phi is None:
        phi = lambda t: t**alpha  # noqa: E731
        caputo = lambda t: np.full_like(t, math.gamma(1 + alpha))  # noqa: E731
    elif caputo is None:
        raise ParameterDomainError("a custom phi needs its exact Caputo derivative")
    max_abs, weighted = [], []
    for N in N_list:
        tm = build_graded_mesh(T, N, gamma, nu)
        tables = build_kernel_tables(tm, alpha)
        ups = discrete_caputo_all(tables, phi(tm.nodes)) - caputo(tm.offset_levels)
        max_abs.append(float(np.max(np.abs(ups))))
        weighted.append(float(np.max(tables.P @ np.abs(ups))))
    return UpsilonReport(alpha, gamma, list(N_list), max_abs, weighted, min(gamma * alpha, 2.0))


def newton_remainder(a, b):
    """``a**3 - b**3 - 3 b**2 (a - b)`` in factored form ``(a - b)**2 (a + 2 b)``."""
    return (a - b) ** 2 * (a + 2 * b)


@dataclass
class NewtonRemainderReport:
    alpha: float
    gamma: float
    N_list: list[int]
    norms: list[np.ndarray]  # per N, ||E^{n-nu}|| for n = 1..N

    @property
    def maxima(self) -> list[float]:
        return [float(v.max()) for v in self.norms]

    @property
    def orders(self) -> list[Optional[float]]:
        m = self.maxima
        return [_rate(a, b, 1.0 / p, 1.0 / q) for a, b, p, q in zip(m, m[1:], self.N_list, self.N_list[1:])]

    @property
    def decay_exponent(self) -> Optional[float]:
        """Observed order of ``max_n ||E^{n-nu}||`` in ``N`` at the finest pair."""
        o = self.orders
        return o[-1] if o else None

    def step_index_exponent(self) -> float:
        """Least-squares slope of ``-log ||E^{n-nu}||`` against ``log n`` on the finest mesh."""
        v = self.norms[-1]
        n = np.arange(1, len(v) + 1)
        mask = v > 0
        if mask.sum() < 2:
            return math.nan
        return float(-np.polyfit(np.log(n[mask]), np.log(v[mask]), 1)[0])


def measure_newton_remainder(
    case: ManufacturedCase, alpha: float, gamma: Optional[float], N_list: Sequence[int], nu: Optional[float] = None, nx: int = 32
) -> NewtonRemainderReport:
    """Linearization remainder evaluated on the exact solution.

    With ``u = g (1 + t**alpha)`` the remainder factors as ``g**3`` times a time
    factor, so its L2 norm is ``||g**3||`` times that factor.
    """
    gamma = default_gamma(alpha) if gamma is None else gamma
    nu = default_nu(alpha) if nu is None else nu
    x0, x1, _, _ = case.domain
    space = MixedSpace(mesh_for_spacing(case.domain, (x1 - x0) / nx), 0)
    _, wq = triangle_rule()
    q = space.quadrature_points
    g3 = float(np.sqrt(np.sum((case.g(q[..., 0], q[..., 1]) ** 6 @ wq) * space.areas)))
    norms = []
    for N in N_list:
        tm = build_graded_mesh(case.T, N, gamma, nu)
        f = 1.0 + tm.nodes**alpha
        f_off = 1.0 + tm.offset_levels**alpha
        norms.append(g3 * np.abs(newton_remainder(f_off, f[:-1])))
    return NewtonRemainderReport(alpha, gamma, list(N_list), norms)


__all__ = [
    "CASES",
    "ConvergenceReport",
    "ManufacturedCase",
    "NewtonRemainderReport",
    "StudyRow",
    "UpsilonReport",
    "convergence_study",
    "get_case",
    "manufactured_source",
    "measure_newton_remainder",
    "measure_upsilon",
    "newton_remainder",
    "problem_for",
    "spatial_mesh_for",
    "weighted_errors",
]
