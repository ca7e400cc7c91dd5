"""Raviart-Thomas flux spaces paired with discontinuous scalar spaces.

Flux degrees of freedom (order ``k``):

* ``k = 0``: the normal flux ``int_e w.n_e`` on each edge, index ``e``.
* ``k = 1``: the edge moments ``int_e w.n_e lam_a`` and ``int_e w.n_e lam_b`` at
  indices ``2e`` and ``2e + 1``, where ``a < b`` are the edge endpoints and
  ``lam`` the linear nodal functions on the edge. Then the cell averages of
  ``w_x`` and ``w_y`` at ``2 n_edges + 2t`` and ``2 n_edges + 2t + 1``.

``n_e`` is the edge tangent ``(b - a) / |b - a|`` rotated clockwise. Scalar
unknowns are cell constants (``k = 0``) or the three vertex values of a linear
function per cell (``k = 1``) at ``3t .. 3t + 2``.

Element bases are obtained by inverting the dof matrix of a monomial spanning
set written in scaled coordinates ``(x - centroid) / s`` with ``s**2 = 2|T|``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Callable

import numpy as np
import scipy.sparse as sp

from ..errors import ParameterDomainError
from .mesh import TriangleMesh
from .quadrature import segment_rule, triangle_rule

_CHUNK = 16384


def _prototype(k: int, xi: np.ndarray, eta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Monomial spanning set of RT_k: values ``(..., dim, 2)`` and scaled divergence ``(..., dim)``."""
    z = np.zeros_like(xi)
    o = np.ones_like(xi)
    if k == 0:
        vals = [(o, z), (z, o), (xi, eta)]
        divs = [z, z, 2 * o]
    else:
        vals = [
            (o, z), (xi, z), (eta, z),
            (z, o), (z, xi), (z, eta),
            (xi * xi, xi * eta), (xi * eta, eta * eta),
        ]
        divs = [z, o, z, z, z, o, 3 * xi, 3 * eta]
    v = np.stack([np.stack(p, axis=-1) for p in vals], axis=-2)
    d = np.stack(divs, axis=-1)
    return v, d


@dataclass
class DiscreteField:
    """Coefficient vector tagged with the space and the role (``"flux"`` or ``"scalar"``)."""

    space: "MixedSpace"
    role: str
    coefficients: np.ndarray

    def __post_init__(self):
        n = self.space.n_flux if self.role == "flux" else self.space.n_scalar
        if self.role not in ("flux", "scalar"):
            raise ValueError(f"unknown role {self.role!r}")
        if self.coefficients.shape != (n,):
            raise ValueError(f"{self.role} field needs {n} coefficients, got {self.coefficients.shape}")

    def values_at_quadrature(self) -> np.ndarray:
        if self.role == "flux":
            return self.space.flux_at_quadrature(self.coefficients)
        return self.space.scalar_at_quadrature(self.coefficients)


@dataclass(frozen=True)
class Forms:
    """Global matrices: flux mass ``M_sigma``, scalar mass ``M_u`` and ``B[a, i] = (div w_i, v_a)``."""

    M_sigma: sp.csr_matrix
    M_u: sp.csr_matrix
    B: sp.csr_matrix


class MixedSpace:
    def __init__(self, mesh: TriangleMesh, k: int):
        if k not in (0, 1):
            raise ParameterDomainError(f"only k = 0 and k = 1 are implemented, got {k}")
        self.mesh = mesh
        self.k = k
        nt, ne = mesh.n_triangles, mesh.n_edges
        self.flux_local_dim = 3 if k == 0 else 8
        self.scalar_local_dim = 1 if k == 0 else 3
        self.n_flux = ne if k == 0 else 2 * ne + 2 * nt
        self.n_scalar = nt * self.scalar_local_dim

        verts = mesh.vertices[mesh.triangles]  # (nt, 3, 2)
        self._verts = verts
        self.areas = mesh.areas
        self.centroids = verts.mean(axis=1)
        self.scales = np.sqrt(2.0 * self.areas)
        self.flux_dofs = self._flux_dof_map()
        self.scalar_dofs = np.arange(self.n_scalar).reshape(nt, self.scalar_local_dim)
        self.coeffs = self._basis_coefficients()

    # -- construction -----------------------------------------------------

    def _flux_dof_map(self) -> np.ndarray:
        te = self.mesh.tri_edges
        if self.k == 0:
            return te.copy()
        nt, ne = self.mesh.n_triangles, self.mesh.n_edges
        t = np.arange(nt)
        cols = []
        for loc in range(3):
            cols += [2 * te[:, loc], 2 * te[:, loc] + 1]
        cols += [2 * ne + 2 * t, 2 * ne + 2 * t + 1]
        return np.column_stack(cols)

    def _scaled(self, pts: np.ndarray, elems=slice(None)) -> tuple[np.ndarray, np.ndarray]:
        c = self.centroids[elems]
        s = self.scales[elems]
        rel = (pts - c[:, None, :]) / s[:, None, None]
        return rel[..., 0], rel[..., 1]

    def _edge_functionals(self, k_edge_pts: int):
        """Per element and local edge: quadrature points, weights times normal, endpoint weights."""
        mesh = self.mesh
        s, w = segment_rule(k_edge_pts)
        ge = mesh.tri_edges  # (nt, 3)
        a = mesh.edges[ge, 0]
        b = mesh.edges[ge, 1]
        pa = mesh.vertices[a]
        pb = mesh.vertices[b]  # (nt, 3, 2)
        d = pb - pa
        length = np.hypot(d[..., 0], d[..., 1])
        normal = np.stack([d[..., 1], -d[..., 0]], axis=-1) / length[..., None]
        pts = pa[:, :, None, :] + s[None, None, :, None] * d[:, :, None, :]  # (nt, 3, nq, 2)
        return pts, w, length, normal, s

    def _basis_coefficients(self) -> np.ndarray:
        nt = self.mesh.n_triangles
        dim = self.flux_local_dim
        pts, w, length, normal, s = self._edge_functionals(4)
        xi, eta = self._scaled(pts.reshape(nt, -1, 2))
        vals, _ = _prototype(self.k, xi, eta)  # (nt, 3*nq, dim, 2)
        vals = vals.reshape(nt, 3, len(s), dim, 2)
        flux_n = np.einsum("tlqmc,tlc->tlqm", vals, normal)  # (nt, 3, nq, dim)
        V = np.empty((nt, dim, dim))
        if self.k == 0:
            V[:, 0:3, :] = np.einsum("tlqm,q,tl->tlm", flux_n, w, length)
        else:
            lam_a = (1.0 - s) * w
            lam_b = s * w
            V[:, 0:6:2, :] = np.einsum("tlqm,q,tl->tlm", flux_n, lam_a, length)
            V[:, 1:6:2, :] = np.einsum("tlqm,q,tl->tlm", flux_n, lam_b, length)
            bary, wq = triangle_rule()
            qpts = np.einsum("qk,tkc->tqc", bary, self._verts)
            xi, eta = self._scaled(qpts)
            vq, _ = _prototype(1, xi, eta)  # (nt, nq, dim, 2)
            V[:, 6, :] = np.einsum("tqm,q->tm", vq[..., 0], wq)
            V[:, 7, :] = np.einsum("tqm,q->tm", vq[..., 1], wq)
        # columns of C are basis functions in the prototype expansion
        return np.linalg.inv(V).transpose(0, 2, 1)  # (nt, i_basis, m_proto)

    # -- evaluation -------------------------------------------------------

    @cached_property
    def quadrature_points(self) -> np.ndarray:
        bary, _ = triangle_rule()
        return np.einsum("qk,tkc->tqc", bary, self._verts)

    def flux_basis(self, pts: np.ndarray, elems=slice(None)) -> tuple[np.ndarray, np.ndarray]:
        """Basis values ``(ne, np, dim, 2)`` and divergences ``(ne, np, dim)`` at physical points."""
        xi, eta = self._scaled(pts, elems)
        v, d = _prototype(self.k, xi, eta)
        C = self.coeffs[elems]
        vals = np.einsum("tim,tqmc->tqic", C, v)
        divs = np.einsum("tim,tqm->tqi", C, d) / self.scales[elems][:, None, None]
        return vals, divs

    def scalar_basis(self, bary: np.ndarray, nelem: int) -> np.ndarray:
        """Scalar basis values at barycentric points, shape ``(nelem, np, ldim)``."""
        if self.k == 0:
            return np.ones((nelem, len(bary), 1))
        return np.broadcast_to(bary, (nelem,) + bary.shape)

    def _chunks(self):
        nt = self.mesh.n_triangles
        for start in range(0, nt, _CHUNK):
            yield slice(start, min(nt, start + _CHUNK))

    @cached_property
    def _proto_at_quadrature(self) -> np.ndarray:
        xi, eta = self._scaled(self.quadrature_points)
        return _prototype(self.k, xi, eta)[0]

    def flux_at_quadrature(self, coeffs: np.ndarray) -> np.ndarray:
        # expand in the monomial set first; far cheaper than forming every basis value
        a = np.einsum("tim,ti->tm", self.coeffs, coeffs[self.flux_dofs])
        return np.einsum("tm,tqmc->tqc", a, self._proto_at_quadrature)

    def scalar_at_quadrature(self, coeffs: np.ndarray) -> np.ndarray:
        bary, _ = triangle_rule()
        if self.k == 0:
            return np.repeat(coeffs[:, None], len(bary), axis=1)
        return coeffs[self.scalar_dofs] @ bary.T

    # -- assembly ---------------------------------------------------------

    @cached_property
    def local_forms(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Element blocks ``(flux mass, divergence, scalar mass)`` in local dof order."""
        bary, wq = triangle_rule()
        nt = self.mesh.n_triangles
        dim, sdim = self.flux_local_dim, self.scalar_local_dim
        Ms = np.empty((nt, dim, dim))
        Bl = np.empty((nt, sdim, dim))
        for sl in self._chunks():
            vals, divs = self.flux_basis(self.quadrature_points[sl], sl)
            ww = wq[None, :] * self.areas[sl][:, None]
            Ms[sl] = np.einsum("tq,tqic,tqjc->tij", ww, vals, vals)
            phi = self.scalar_basis(bary, sl.stop - sl.start)
            Bl[sl] = np.einsum("tq,tqa,tqi->tai", ww, phi, divs)
        Mu = self.areas[:, None, None] * self.local_scalar_mass[None]
        return Ms, Bl, Mu

    def assemble_forms(self) -> Forms:
        fd, sd = self.flux_dofs, self.scalar_dofs
        Ms, Bl, Mu_loc = self.local_forms

        def glue(local, rows, cols, shape):
            r = np.broadcast_to(rows[:, :, None], local.shape).ravel()
            c = np.broadcast_to(cols[:, None, :], local.shape).ravel()
            return sp.csr_matrix((local.ravel(), (r, c)), shape=shape)

        M_sigma = glue(Ms, fd, fd, (self.n_flux, self.n_flux))
        M_u = glue(Mu_loc, sd, sd, (self.n_scalar, self.n_scalar))
        B = glue(Bl, sd, fd, (self.n_scalar, self.n_flux))
        return Forms(M_sigma=M_sigma, M_u=M_u, B=B)

    @cached_property
    def forms(self) -> Forms:
        return self.assemble_forms()

    @cached_property
    def local_scalar_mass(self) -> np.ndarray:
        bary, wq = triangle_rule()
        phi = self.scalar_basis(bary, 1)[0]
        return np.einsum("q,qa,qb->ab", wq, phi, phi)

    # -- projections and errors ------------------------------------------

    def scalar_load(self, values_q: np.ndarray) -> np.ndarray:
        """Vector ``(f, v_a)`` from values of ``f`` at quadrature points ``(nt, nq)``."""
        bary, wq = triangle_rule()
        phi = self.scalar_basis(bary, 1)[0]
        return ((values_q * wq) @ phi * self.areas[:, None]).ravel()

    def l2_project(self, f: Callable) -> np.ndarray:
        """Scalar L2 projection of ``f(x, y)``; element-local because the space is discontinuous."""
        q = self.quadrature_points
        rhs = self.scalar_load(f(q[..., 0], q[..., 1])).reshape(-1, self.scalar_local_dim)
        sol = np.linalg.solve(self.local_scalar_mass, (rhs / self.areas[:, None]).T).T
        return sol.ravel()

    def fortin_interpolate(self, w: Callable, edge_points: int = 6) -> np.ndarray:
        """Canonical interpolant: apply every flux degree of freedom to ``w(x, y) -> (wx, wy)``."""
        mesh = self.mesh
        s, sw = segment_rule(edge_points)
        pa = mesh.vertices[mesh.edges[:, 0]]
        d = mesh.vertices[mesh.edges[:, 1]] - pa
        normal_scaled = np.column_stack([d[:, 1], -d[:, 0]])  # |e| * n_e
        pts = pa[:, None, :] + s[None, :, None] * d[:, None, :]
        wx, wy = w(pts[..., 0], pts[..., 1])
        flux = wx * normal_scaled[:, 0, None] + wy * normal_scaled[:, 1, None]
        out = np.empty(self.n_flux)
        ne = mesh.n_edges
        if self.k == 0:
            out[:] = flux @ sw
            return out
        out[0 : 2 * ne : 2] = flux @ ((1.0 - s) * sw)
        out[1 : 2 * ne : 2] = flux @ (s * sw)
        _, wq = triangle_rule()
        q = self.quadrature_points
        qx, qy = w(q[..., 0], q[..., 1])
        out[2 * ne :: 2] = qx @ wq
        out[2 * ne + 1 :: 2] = qy @ wq
        return out

    def scalar_l2_error(self, coeffs: np.ndarray, exact: Callable) -> float:
        _, wq = triangle_rule()
        q = self.quadrature_points
        diff = self.scalar_at_quadrature(coeffs) - exact(q[..., 0], q[..., 1])
        return float(np.sqrt(np.sum((diff**2 @ wq) * self.areas)))

    def flux_l2_error(self, coeffs: np.ndarray, exact: Callable) -> float:
        _, wq = triangle_rule()
        q = self.quadrature_points
        ex, ey = exact(q[..., 0], q[..., 1])
        vals = self.flux_at_quadrature(coeffs)
        sq = (vals[..., 0] - ex) ** 2 + (vals[..., 1] - ey) ** 2
        return float(np.sqrt(np.sum((sq @ wq) * self.areas)))

    def scalar_max_abs(self, coeffs: np.ndarray) -> float:
        """Maximum of ``|u_h|``; for piecewise linears the vertex values suffice."""
        return float(np.max(np.abs(coeffs))) if coeffs.size else 0.0
