"""Special functions used by the randomness tests.

Thin wrappers over scipy's Cephes-derived implementations; the test suite
checks them against mpmath at 1e-10.
"""

from __future__ import annotations

from scipy import special as _sp


def erfc(x: float) -> float:
    """Complementary error function."""
    return float(_sp.erfc(x))


def igamc(a: float, x: float) -> float:
    """Regularized upper incomplete gamma function ``Q(a, x)``."""
    if a <= 0:
        raise ValueError("igamc requires a > 0")
    if x <= 0:
        return 1.0
    return float(_sp.gammaincc(a, x))


def normal_cdf(x):
    """Standard normal CDF; accepts scalars or arrays."""
    return _sp.ndtr(x)
