"""One-parameter Mittag-Leffler function on the nonnegative real axis."""

from __future__ import annotations

import math

import numpy as np

from .errors import ParameterDomainError

_MAX_TERMS = 200_000


def _ml_scalar(alpha: float, z: float) -> float:
    if z == 0.0:
        return 1.0
    if z ** (1.0 / alpha) > 700.0:
        # asymptotically E_a(z) ~ exp(z**(1/a)) / a
        raise OverflowError(f"E_{alpha}({z}) exceeds the double range")
    log_z = math.log(z)
    terms = []
    total = 0.0
    prev = -math.inf
    for k in range(_MAX_TERMS):
        log_term = k * log_z - math.lgamma(k * alpha + 1.0)
        term = math.exp(log_term)
        terms.append(term)
        total += term
        # all terms positive; stop once past the peak and negligible
        if log_term < prev and term < 1e-17 * total:
            break
        prev = log_term
    else:  # pragma: no cover - unreachable for z in the supported range
        raise OverflowError(f"series for E_{alpha}({z}) did not converge")
    return math.fsum(terms)


def mittag_leffler(alpha: float, z):
    """Evaluate ``E_alpha(z) = sum_k z**k / Gamma(k*alpha + 1)`` for ``z >= 0``.

    Accepts a scalar or an array for ``z``. Every series term is positive, so
    plain summation carries no cancellation.
    """
    if not 0 < alpha <= 1:
        raise ParameterDomainError(f"alpha must lie in (0, 1], got {alpha}")
    z_arr = np.asarray(z, dtype=float)
    if np.any(z_arr < 0) or np.any(np.isnan(z_arr)):
        raise ParameterDomainError("mittag_leffler supports only z >= 0")
    if z_arr.ndim == 0:
        return _ml_scalar(alpha, float(z_arr))
    out = np.empty_like(z_arr)
    for idx, zi in np.ndenumerate(z_arr):
        out[idx] = _ml_scalar(alpha, float(zi))
    return out
