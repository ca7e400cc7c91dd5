"""Structured triangulations of axis-aligned rectangles."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import ParameterDomainError


@dataclass(frozen=True, eq=False)
class TriangleMesh:
    """Conforming triangulation.

    ``tri_edges[t, k]`` is the global edge opposite local vertex ``k`` of
    triangle ``t``. Edges are stored with ascending vertex indices, which fixes
    their global orientation.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    edges: np.ndarray
    tri_edges: np.ndarray
    domain: tuple[float, float, float, float]
    nx: int
    ny: int

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def areas(self) -> np.ndarray:
        v = self.vertices[self.triangles]
        d1 = v[:, 1] - v[:, 0]
        d2 = v[:, 2] - v[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    @property
    def edge_lengths(self) -> np.ndarray:
        d = self.vertices[self.edges[:, 1]] - self.vertices[self.edges[:, 0]]
        return np.hypot(d[:, 0], d[:, 1])

    @property
    def h(self) -> float:
        """Maximum element diameter (longest edge)."""
        return float(self.edge_lengths.max())

    @property
    def boundary_edges(self) -> np.ndarray:
        counts = np.bincount(self.tri_edges.ravel(), minlength=self.n_edges)
        return np.flatnonzero(counts == 1)


def _check_kink_line(lo: float, hi: float, n: int, axis: str) -> None:
    if lo < 0 < hi:
        pos = -lo * n / (hi - lo)
        if abs(pos - round(pos)) > 1e-9:
            raise ParameterDomainError(
                f"{axis}=0 must be a mesh line on [{lo}, {hi}]; n{axis}={n} does not place one there"
                " (use an even count on symmetric domains)"
            )


def build_structured_mesh(domain=(0.0, 1.0, 0.0, 1.0), nx: int = 1, ny: int | None = None) -> TriangleMesh:
    """Split an ``nx x ny`` grid of cells on ``domain = (x0, x1, y0, y1)``.

    Each cell is cut by the diagonal from its lower-left to upper-right corner.
    """
    ny = nx if ny is None else ny
    x0, x1, y0, y1 = map(float, domain)
    if not (x1 > x0 and y1 > y0):
        raise ParameterDomainError(f"degenerate domain {domain}")
    if int(nx) != nx or int(ny) != ny or nx < 1 or ny < 1:
        raise ParameterDomainError(f"subdivision counts must be positive integers, got {nx}, {ny}")
    nx, ny = int(nx), int(ny)
    _check_kink_line(x0, x1, nx, "x")
    _check_kink_line(y0, y1, ny, "y")

    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    X, Y = np.meshgrid(xs, ys)
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    i, j = np.meshgrid(np.arange(nx), np.arange(ny))
    i, j = i.ravel(), j.ravel()
    v00 = j * (nx + 1) + i
    v10 = v00 + 1
    v01 = v00 + nx + 1
    v11 = v01 + 1
    lower = np.column_stack([v00, v10, v11])
    upper = np.column_stack([v00, v11, v01])
    triangles = np.empty((2 * len(v00), 3), dtype=np.int64)
    triangles[0::2] = lower
    triangles[1::2] = upper

    local = np.stack(
        [triangles[:, [1, 2]], triangles[:, [2, 0]], triangles[:, [0, 1]]], axis=1
    )  # (nt, 3, 2)
    local = np.sort(local, axis=2)
    edges, inverse = np.unique(local.reshape(-1, 2), axis=0, return_inverse=True)
    tri_edges = inverse.reshape(-1, 3)

    for arr in (vertices, triangles, edges, tri_edges):
        arr.setflags(write=False)
    return TriangleMesh(vertices, triangles, edges, tri_edges, (x0, x1, y0, y1), nx, ny)


def mesh_for_spacing(domain, spacing: float) -> TriangleMesh:
    """Structured mesh whose cells have side at most ``spacing`` in each direction."""
    x0, x1, y0, y1 = domain
    nx = max(1, math.ceil((x1 - x0) / spacing - 1e-9))
    ny = max(1, math.ceil((y1 - y0) / spacing - 1e-9))
    # keep the axes as mesh lines on straddling domains
    if x0 < 0 < x1 and nx % 2:
        nx += 1
    if y0 < 0 < y1 and ny % 2:
        ny += 1
    return build_structured_mesh(domain, nx, ny)


def write_mesh(mesh: TriangleMesh, path) -> None:
    """Plain-text listing: a vertex section then a triangle section, 0-based."""
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"vertices {mesh.n_vertices}\n")
        for k, (x, y) in enumerate(mesh.vertices.tolist()):
            fh.write(f"{k} {x!r} {y!r}\n")
        fh.write(f"triangles {mesh.n_triangles}\n")
        for k, (a, b, c) in enumerate(mesh.triangles.tolist()):
            fh.write(f"{k} {a} {b} {c}\n")
