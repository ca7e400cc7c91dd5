"""Quadrature rules on the reference triangle and on segments."""

from __future__ import annotations

from functools import lru_cache

import numpy as np

# Dunavant's 12-point rule, exact for polynomials of degree <= 6.
_D6_GROUPS = [
    (0.116786275726379, (0.501426509658179, 0.249286745170910, 0.249286745170910)),
    (0.050844906370207, (0.873821971016996, 0.063089014491502, 0.063089014491502)),
    (0.082851075618374, (0.053145049844817, 0.310352451033784, 0.636502499121399)),
]


def _orbit(bary):
    a, b, c = bary
    pts = {(a, b, c), (b, c, a), (c, a, b), (a, c, b), (c, b, a), (b, a, c)}
    return sorted(pts)


@lru_cache(maxsize=None)
def triangle_rule() -> tuple[np.ndarray, np.ndarray]:
    """Return ``(barycentric (nq, 3), weights (nq,))`` with weights summing to 1.

    Multiply the weights by the element area to integrate.
    """
    pts, wts = [], []
    for w, bary in _D6_GROUPS:
        orbit = _orbit(bary)
        pts.extend(orbit)
        wts.extend([w] * len(orbit))
    bary = np.array(pts)
    weights = np.array(wts)
    bary /= bary.sum(axis=1, keepdims=True)
    weights /= weights.sum()
    bary.setflags(write=False)
    weights.setflags(write=False)
    return bary, weights


@lru_cache(maxsize=None)
def segment_rule(npts: int = 4) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes on ``[0, 1]`` and weights summing to 1."""
    x, w = np.polynomial.legendre.leggauss(npts)
    s = 0.5 * (x + 1.0)
    w = 0.5 * w
    s.setflags(write=False)
    w.setflags(write=False)
    return s, w
