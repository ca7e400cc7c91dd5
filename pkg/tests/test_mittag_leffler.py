import math

import numpy as np
import pytest
from scipy.special import erfc

from tfac.errors import ParameterDomainError
from tfac.mittag_leffler import mittag_leffler


def test_zero_argument():
    for a in (0.1, 0.5, 1.0):
        assert mittag_leffler(a, 0.0) == 1.0


def test_exponential_case():
    assert mittag_leffler(1.0, 1.0) == pytest.approx(math.e, rel=1e-14)
    assert mittag_leffler(1.0, 12.5) == pytest.approx(math.exp(12.5), rel=1e-13)


def test_half_order_closed_form():
    assert mittag_leffler(0.5, 1.0) == pytest.approx(math.e * erfc(-1.0), rel=1e-13)
    assert mittag_leffler(0.5, 1.0) == pytest.approx(5.00898, abs=5e-6)
    for z in (0.3, 2.0, 6.0):
        assert mittag_leffler(0.5, z) == pytest.approx(math.exp(z * z) * erfc(-z), rel=1e-12)


def test_against_mpmath_series():
    mpmath = pytest.importorskip("mpmath")
    mpmath.mp.dps = 50
    for a, z in [(0.3, 2.5), (0.7, 10.0), (0.9, 0.01)]:
        ref = mpmath.nsum(lambda k: mpmath.mpf(z) ** k / mpmath.gamma(a * k + 1), [0, mpmath.inf])
        assert mittag_leffler(a, z) == pytest.approx(float(ref), rel=1e-12)


def test_array_input():
    z = np.array([[0.0, 1.0], [2.0, 3.0]])
    out = mittag_leffler(1.0, z)
    np.testing.assert_allclose(out, np.exp(z), rtol=1e-13)


def test_errors():
    with pytest.raises(ParameterDomainError):
        mittag_leffler(0.5, -1.0)
    with pytest.raises(ParameterDomainError):
        mittag_leffler(0.0, 1.0)
    with pytest.raises(OverflowError):
        mittag_leffler(0.3, 50.0)
