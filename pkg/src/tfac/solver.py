"""Fully discrete mixed scheme: offset-level Alikhanov stepping with a linearized cubic.

Unknowns per step are ``(sigma^n, u^n)``. Writing ``phi^{n-nu} = nu phi^{n-1} + (1-nu) phi^n``
the step solves

    (sigma^{n-nu}, w) + (u^{n-nu}, div w) = 0
    sum_j K[n,j] (u^j - u^{j-1}, v) - c (div sigma^{n-nu}, v)
        = (u^{n-nu}, v) - ((u^{n-1})^3, v) - 3(1-nu)((u^{n-1})^2 (u^n - u^{n-1}), v) + (f, v)

with ``c = kappa**2`` (or ``c = 1`` when ``kappa_in_flux_term`` is off).

Linear algebra: the operator is rescaled to the symmetric form
``[[M, B^T], [B, -D]]`` and the cell-local unknowns (cell moments of the flux
and the scalar) are condensed out element by element. What remains is an SPD
system on edge moments, factorized with a sparse LU.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ParameterDomainError, SolverError
from .fem.quadrature import triangle_rule
from .fem.spaces import DiscreteField, MixedSpace
from .kernels import KernelTables, build_kernel_tables
from .temporal_mesh import GradedTimeMesh, default_nu, dt_star

RESIDUAL_TOL = 1e-10
_REFINE_TRIGGER = 1e-12
_REFINE_STEPS = 2

ScalarFn = Callable[[np.ndarray, np.ndarray], np.ndarray]
SourceFn = Callable[[np.ndarray, np.ndarray, float], np.ndarray]


@dataclass(frozen=True)
class ProblemSpec:
    kappa: float
    alpha: float
    u0: ScalarFn
    nu: Optional[float] = None
    source: Optional[SourceFn] = None
    nonlinear: bool = True
    kappa_in_flux_term: bool = True

    def __post_init__(self):
        if not 0 < self.kappa <= 1:
            raise ParameterDomainError(f"kappa must lie in (0, 1], got {self.kappa}")
        if not 0 < self.alpha < 1:
            raise ParameterDomainError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.nu is None:
            object.__setattr__(self, "nu", default_nu(self.alpha))
        if not 0 <= self.nu < 0.5:
            raise ParameterDomainError(f"nu must lie in [0, 1/2), got {self.nu}")

    @property
    def flux_coefficient(self) -> float:
        return self.kappa**2 if self.kappa_in_flux_term else 1.0


@dataclass
class SolverState:
    n: int
    u: list  # DiscreteField per level
    sigma: list
    max_norms: list = field(default_factory=list)
    residuals: list = field(default_factory=list)

    @property
    def current_sigma(self) -> DiscreteField:
        return self.sigma[-1]


@dataclass
class StepSystem:
    """Linear system of one step in unscaled form ``matrix @ [sigma; u] = rhs``.

    ``reaction`` holds the cell-local scalar blocks ``(nt, d, d)`` of the
    ``u``-``u`` operator.
    """

    n: int
    space: MixedSpace
    nu: float
    c: float
    reaction: np.ndarray
    rhs_flux: np.ndarray
    rhs_scalar: np.ndarray

    @property
    def rhs(self) -> np.ndarray:
        return np.concatenate([self.rhs_flux, self.rhs_scalar])

    def reaction_matrix(self) -> sp.csr_matrix:
        sd = self.space.scalar_dofs
        d = sd.shape[1]
        r = np.repeat(sd, d, axis=1).ravel()
        c = np.tile(sd, (1, d)).ravel()
        n = self.space.n_scalar
        return sp.csr_matrix((self.reaction.ravel(), (r, c)), shape=(n, n))

    @property
    def matrix(self) -> sp.csr_matrix:
        F = self.space.forms
        w = 1.0 - self.nu
        return sp.bmat(
            [[w * F.M_sigma, w * F.B.T], [-self.c * w * F.B, self.reaction_matrix()]], format="csr"
        )

    def apply(self, sigma: np.ndarray, u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        F = self.space.forms
        w = 1.0 - self.nu
        top = w * (F.M_sigma @ sigma + F.B.T @ u)
        bot = -self.c * w * (F.B @ sigma) + np.einsum("tab,tb->ta", self.reaction, u[self.space.scalar_dofs]).ravel()
        return top, bot

    def relative_residual(self, sigma: np.ndarray, u: np.ndarray) -> float:
        top, bot = self.apply(sigma, u)
        num = math.hypot(np.linalg.norm(top - self.rhs_flux), np.linalg.norm(bot - self.rhs_scalar))
        den = math.hypot(np.linalg.norm(self.rhs_flux), np.linalg.norm(self.rhs_scalar))
        return num / den if den > 0 else num


class _Condenser:
    """Element-local blocks of the symmetric operator, split into edge and cell parts."""

    def __init__(self, space: MixedSpace):
        self.space = space
        fd = space.flux_dofs
        self.n_edge_local = 3 if space.k == 0 else 6
        ne_loc = self.n_edge_local
        edge_dofs = fd[:, :ne_loc]
        self.edge_dofs = edge_dofs
        self.n_edge = space.mesh.n_edges * (1 if space.k == 0 else 2)

        Ms, Bl, _ = space.local_forms
        self.Ms = Ms
        self.Bl = Bl
        rows = np.repeat(edge_dofs, ne_loc, axis=1).ravel()
        cols = np.tile(edge_dofs, (1, ne_loc)).ravel()
        self._rows, self._cols = rows, cols
        self._lu = None
        self._lu_matches = False

    def local_blocks(self, D: np.ndarray):
        """Return ``L_EE, L_EI, L_II`` with cell unknowns ordered (flux cell moments, scalar)."""
        ne_loc = self.n_edge_local
        Ms, Bl = self.Ms, self.Bl
        nt, sdim, dim = Bl.shape
        ni = dim - ne_loc + sdim
        L_EE = Ms[:, :ne_loc, :ne_loc]
        L_EI = np.concatenate([Ms[:, :ne_loc, ne_loc:], Bl[:, :, :ne_loc].transpose(0, 2, 1)], axis=2)
        L_II = np.zeros((nt, ni, ni))
        nfi = dim - ne_loc
        L_II[:, :nfi, :nfi] = Ms[:, ne_loc:, ne_loc:]
        L_II[:, :nfi, nfi:] = Bl[:, :, ne_loc:].transpose(0, 2, 1)
        L_II[:, nfi:, :nfi] = Bl[:, :, ne_loc:]
        L_II[:, nfi:, nfi:] = -D
        return L_EE, L_EI, L_II

    def prepare(self, D: np.ndarray, step: int) -> None:
        """Condense the operator with reaction blocks ``D``; the edge system is solved lazily."""
        L_EE, L_EI, L_II = self.local_blocks(D)
        try:
            self._inv_II = np.linalg.inv(L_II)
        except np.linalg.LinAlgError as exc:
            raise SolverError(f"singular cell block: {exc}", step=step) from exc
        self._L_EI = L_EI
        self._Z = self._inv_II @ L_EI.transpose(0, 2, 1)
        S_loc = L_EE - L_EI @ self._Z
        self._S = sp.csc_matrix((S_loc.ravel(), (self._rows, self._cols)), shape=(self.n_edge, self.n_edge))
        self._step = step
        self._lu_matches = False

    def solve(self, r_flux: np.ndarray, r_scalar: np.ndarray):
        """Solve ``[[M, B^T], [B, -D]] [s; u] = [r_flux; r_scalar]`` for the prepared ``D``."""
        space = self.space
        ne_loc = self.n_edge_local
        fd = space.flux_dofs
        nfi = fd.shape[1] - ne_loc
        cell_flux_dofs = fd[:, ne_loc:]
        r_I = np.concatenate([r_flux[cell_flux_dofs], r_scalar[space.scalar_dofs]], axis=1)
        y = np.einsum("tij,tj->ti", self._inv_II, r_I)
        g_loc = -np.einsum("tei,ti->te", self._L_EI, y)
        g = r_flux[: self.n_edge] + np.bincount(self.edge_dofs.ravel(), g_loc.ravel(), minlength=self.n_edge)
        x_E = self._edge_solve(self._S, g, self._step)
        x_I = y - np.einsum("tif,tf->ti", self._Z, x_E[self.edge_dofs])
        sigma = np.empty(space.n_flux)
        sigma[: self.n_edge] = x_E
        if nfi:
            sigma[cell_flux_dofs] = x_I[:, :nfi]
        u = np.empty(space.n_scalar)
        u[space.scalar_dofs] = x_I[:, nfi:]
        return sigma, u

    def _edge_solve(self, S: sp.csc_matrix, g: np.ndarray, step: int) -> np.ndarray:
        if self._lu is not None and self._lu_matches:
            return self._lu.solve(g)
        # successive edge operators differ only through the reaction term, so a
        # factorization from an earlier step preconditions CG well
        if self._lu is not None:
            x, iters = _pcg(S, g, self._lu.solve, rtol=_CG_RTOL, maxiter=_CG_MAXITER)
            if x is not None and iters <= _CG_REFRESH:
                return x
        try:
            self._lu = spla.splu(S, permc_spec="MMD_AT_PLUS_A")
        except RuntimeError as exc:
            raise SolverError(f"factorization failed: {exc}", step=step) from exc
        self._lu_matches = True
        return self._lu.solve(g)


_CG_RTOL = 1e-14
_CG_MAXITER = 25
_CG_REFRESH = 10


def _pcg(A, b, precond, rtol: float, maxiter: int):
    """Preconditioned CG; returns ``(x, iterations)`` or ``(None, maxiter)`` without convergence."""
    x = precond(b)
    r = b - A @ x
    bnorm = np.linalg.norm(b)
    if bnorm == 0:
        return np.zeros_like(b), 0
    z = precond(r)
    p = z.copy()
    rz = r @ z
    for it in range(1, maxiter + 1):
        if np.linalg.norm(r) <= rtol * bnorm:
            return x, it - 1
        Ap = A @ p
        step = rz / (p @ Ap)
        x += step * p
        r -= step * Ap
        z = precond(r)
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    if np.linalg.norm(r) <= rtol * bnorm:
        return x, maxiter
    return None, maxiter


def _condenser(space: MixedSpace) -> _Condenser:
    cond = getattr(space, "_condenser", None)
    if cond is None:
        cond = _Condenser(space)
        space._condenser = cond
    return cond


def _mass_solve(M: sp.csr_matrix, rhs: np.ndarray) -> np.ndarray:
    # diagonal scaling makes the flux mass matrix uniformly well conditioned
    diag = M.diagonal()
    x, info = spla.cg(M, rhs, rtol=1e-15, atol=0.0, maxiter=2000, M=sp.diags(1.0 / diag))
    if info != 0 or np.linalg.norm(M @ x - rhs) > 1e-12 * np.linalg.norm(rhs):
        try:
            x = spla.splu(M.tocsc(), permc_spec="MMD_AT_PLUS_A").solve(rhs)
        except RuntimeError as exc:  # pragma: no cover - mass matrices are SPD
            raise SolverError(f"flux mass solve failed: {exc}", step=0) from exc
    return x


def initialize(problem: ProblemSpec, tmesh: GradedTimeMesh, space: MixedSpace) -> SolverState:
    """``u^0`` is the L2 projection of ``u0``; ``sigma^0`` solves ``M sigma = -B^T u^0``."""
    u0 = space.l2_project(problem.u0)
    F = space.forms
    rhs = -(F.B.T @ u0)
    sigma0 = _mass_solve(F.M_sigma, rhs) if np.any(rhs) else np.zeros(space.n_flux)
    state = SolverState(
        n=0,
        u=[DiscreteField(space, "scalar", u0)],
        sigma=[DiscreteField(space, "flux", sigma0)],
    )
    state.max_norms.append(_max_norm(space, u0))
    state.residuals.append(0.0)
    return state


def _max_norm(space: MixedSpace, u: np.ndarray) -> float:
    vals = space.scalar_at_quadrature(u)
    m = float(np.max(np.abs(vals))) if vals.size else 0.0
    return m


def _history_sum(tables: KernelTables, state: SolverState, n: int) -> np.ndarray:
    """``sum_{j<n} K[n,j] (u^j - u^{j-1})`` as a coefficient vector."""
    out = np.zeros_like(state.u[0].coefficients)
    K = tables.K
    for j in range(1, n):
        out += K[n - 1, j - 1] * (state.u[j].coefficients - state.u[j - 1].coefficients)
    return out


def assemble_step(state: SolverState, problem: ProblemSpec, tables: KernelTables, space: MixedSpace, n: int) -> StepSystem:
    if not 1 <= n <= tables.N:
        raise ParameterDomainError(f"step index {n} outside 1..{tables.N}")
    if len(state.u) < n or len(state.sigma) < n:
        raise SolverError(f"history incomplete: need levels 0..{n - 1}", step=n)
    nu = problem.nu
    w = 1.0 - nu
    c = problem.flux_coefficient
    F = space.forms
    bary, wq = triangle_rule()
    phi = space.scalar_basis(bary, 1)[0]
    areas = space.areas

    u_prev = state.u[n - 1].coefficients
    s_prev = state.sigma[n - 1].coefficients
    Knn = tables.K[n - 1, n - 1]

    Mloc = space.local_scalar_mass
    reaction = (Knn - w) * areas[:, None, None] * Mloc[None]
    Mu_prev = F.M_u @ u_prev
    rhs_s = Knn * Mu_prev - F.M_u @ _history_sum(tables, state, n) + c * nu * (F.B @ s_prev) + nu * Mu_prev

    if problem.nonlinear:
        uq = space.scalar_at_quadrature(u_prev)
        weights = wq[None, :] * areas[:, None]
        Nloc = 3.0 * w * np.einsum("tq,qa,qb->tab", weights * uq**2, phi, phi)
        reaction = reaction + Nloc
        rhs_s = rhs_s - space.scalar_load(uq**3)
        rhs_s = rhs_s + np.einsum("tab,tb->ta", Nloc, u_prev[space.scalar_dofs]).ravel()

    if problem.source is not None:
        t_off = tables.mesh.offset_level(n)
        q = space.quadrature_points
        rhs_s = rhs_s + space.scalar_load(problem.source(q[..., 0], q[..., 1], t_off))

    rhs_f = -nu * (F.M_sigma @ s_prev + F.B.T @ u_prev)
    return StepSystem(n=n, space=space, nu=nu, c=c, reaction=reaction, rhs_flux=rhs_f, rhs_scalar=rhs_s)


def solve_step(system: StepSystem, check: bool = True) -> tuple[DiscreteField, DiscreteField, float]:
    space = system.space
    w = 1.0 - system.nu
    if not (np.any(system.rhs_flux) or np.any(system.rhs_scalar)):
        zs, zu = np.zeros(space.n_flux), np.zeros(space.n_scalar)
        return DiscreteField(space, "flux", zs), DiscreteField(space, "scalar", zu), 0.0
    scale = system.c * w
    if scale <= 0:
        raise SolverError("flux coupling must be positive", step=system.n)
    cond = _condenser(space)
    cond.prepare(system.reaction / scale, system.n)
    sigma, u = cond.solve(system.rhs_flux / w, -system.rhs_scalar / scale)
    # the flux row cancels heavily (its rhs vanishes in exact arithmetic); refinement
    # on the unscaled system recovers the lost digits
    for _ in range(_REFINE_STEPS):
        if system.relative_residual(sigma, u) <= _REFINE_TRIGGER:
            break
        top, bot = system.apply(sigma, u)
        ds, du = cond.solve((system.rhs_flux - top) / w, -(system.rhs_scalar - bot) / scale)
        sigma += ds
        u += du
    res = system.relative_residual(sigma, u)
    if check and not res <= RESIDUAL_TOL:
        raise SolverError(f"relative residual {res:.3e} exceeds {RESIDUAL_TOL:g}", step=system.n)
    return DiscreteField(space, "flux", sigma), DiscreteField(space, "scalar", u), res


@dataclass
class RunResult:
    state: SolverState
    tmesh: GradedTimeMesh
    tables: KernelTables
    max_norm: float
    L_star: float
    dt_star: float
    step_ok: bool

    @property
    def u(self) -> list:
        return self.state.u

    @property
    def sigma(self) -> list:
        return self.state.sigma


def run(
    problem: ProblemSpec,
    tmesh: GradedTimeMesh,
    space: MixedSpace,
    delta: float = 2.0,
    snapshot_dir=None,
    snapshot_steps=(),
) -> RunResult:
    """Advance from ``t_0`` to ``t_N``; aborts on non-finite fields, flags a violated step bound."""
    if abs(tmesh.nu - problem.nu) > 1e-15:
        tmesh = tmesh.with_nu(problem.nu)
    tables = build_kernel_tables(tmesh, problem.alpha)
    state = initialize(problem, tmesh, space)
    snapshots = set(snapshot_steps)
    if snapshot_dir is not None and 0 in snapshots:
        write_snapshot(snapshot_dir, state, 0)
    for n in range(1, tmesh.N + 1):
        system = assemble_step(state, problem, tables, space, n)
        sigma, u, res = solve_step(system)
        if not (np.all(np.isfinite(u.coefficients)) and np.all(np.isfinite(sigma.coefficients))):
            raise SolverError("non-finite field", step=n)
        state.u.append(u)
        state.sigma.append(sigma)
        state.n = n
        state.residuals.append(res)
        state.max_norms.append(_max_norm(space, u.coefficients))
        if snapshot_dir is not None and n in snapshots:
            write_snapshot(snapshot_dir, state, n)
    m = max(state.max_norms)
    L = 6.0 + 27.0 * m**4
    ds = dt_star(problem.alpha, L, delta)
    return RunResult(state, tmesh, tables, m, L, ds, tmesh.max_step <= ds)


def write_snapshot(directory, state: SolverState, n: int) -> tuple[Path, Path]:
    """Two CSVs for level ``n``: element means of ``u`` and edge flux moments of ``sigma``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    u = state.u[n]
    space = u.space
    per_elem = u.coefficients[space.scalar_dofs].mean(axis=1)  # vertex-value mean = cell mean for P1
    up = directory / f"u_step{n:05d}.csv"
    with up.open("w", encoding="utf-8", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["element", "mean_u"])
        for t, v in enumerate(per_elem):
            wr.writerow([t, repr(float(v))])
    sp_ = directory / f"sigma_step{n:05d}.csv"
    s = state.sigma[n].coefficients
    ne = space.mesh.n_edges
    with sp_.open("w", encoding="utf-8", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        if space.k == 0:
            wr.writerow(["edge", "flux"])
            for e in range(ne):
                wr.writerow([e, repr(float(s[e]))])
        else:
            wr.writerow(["edge", "moment_a", "moment_b"])
            for e in range(ne):
                wr.writerow([e, repr(float(s[2 * e])), repr(float(s[2 * e + 1]))])
    return up, sp_
