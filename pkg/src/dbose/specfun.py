"""Scalar special functions used by every kernel and drift in the package.

Everything here is a thin, carefully branched layer over ``scipy.special``:
the Macdonald functions K0/K1 (plain and exponentially scaled), the ratio
x*K1(x)/K0(x) that drives the conditioned diffusions, the planar heat
kernel, and log-Gamma.  All functions accept floats or numpy arrays and are
pure, so they are safe to call from any number of workers.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import special as _sp

EULER_GAMMA = float(np.euler_gamma)

# exp(-x) underflows to subnormal zero near x = 745.13; past this point the
# unscaled K0/K1 cannot be represented in float64.
_EXP_UNDERFLOW_X = 745.0

# Below this point the scaled evaluation x*k1e(x)/k0e(x) is replaced by the
# leading asymptotics 1/(log(2/x) - gamma); the two agree to <1e-14 there.
_KHAT_SMALL_X = 1e-8


class UnderflowToZeroWarning(UserWarning):
    """Result underflowed to exact zero; the true value is positive."""


@dataclass(frozen=True)
class SpecFunResult:
    """A special-function value bundled with an absolute error estimate."""

    value: float
    est_abs_error: float


def _require_positive(x, name: str):
    arr = np.asarray(x, dtype=float)
    if np.any(arr <= 0.0) or np.any(~np.isfinite(arr)):
        raise ValueError(f"{name} must be positive and finite, got {x!r}")
    return arr


def bessel_k0(x):
    """Macdonald function K0(x) for x > 0.

    Relative error is ~1e-15 across [1e-10, 700].  For x beyond the
    exponential range the value underflows to 0.0 and an
    ``UnderflowToZeroWarning`` is emitted (the true value is positive).
    """
    arr = _require_positive(x, "x")
    out = _sp.k0(arr)
    if np.any((out == 0.0) & (arr >= _EXP_UNDERFLOW_X)):
        warnings.warn("K0 underflowed to zero for large argument",
                      UnderflowToZeroWarning, stacklevel=2)
    return out if isinstance(x, np.ndarray) else float(out)


def bessel_k1(x):
    """Macdonald function K1(x) for x > 0; same accuracy contract as K0."""
    arr = _require_positive(x, "x")
    out = _sp.k1(arr)
    if np.any((out == 0.0) & (arr >= _EXP_UNDERFLOW_X)):
        warnings.warn("K1 underflowed to zero for large argument",
                      UnderflowToZeroWarning, stacklevel=2)
    return out if isinstance(x, np.ndarray) else float(out)


def bessel_k0_scaled(x):
    """exp(x) * K0(x); finite for all x > 0, no exponential range limit."""
    arr = _require_positive(x, "x")
    out = _sp.k0e(arr)
    return out if isinstance(x, np.ndarray) else float(out)


def bessel_k1_scaled(x):
    """exp(x) * K1(x)."""
    arr = _require_positive(x, "x")
    out = _sp.k1e(arr)
    return out if isinstance(x, np.ndarray) else float(out)


def khat_ratio(x):
    """The drift ratio x*K1(x)/K0(x), total on x >= 0.

    The exponential factors cancel, so the scaled pair k1e/k0e evaluates the
    ratio without under/overflow for any x.  At x = 0 the limit value 0 is
    returned (x*K1 -> 1 while K0 -> infinity); for 0 < x <= 1e-8 the leading
    small-x form 1/(log(2/x) - gamma) is used.  Continuous and strictly
    increasing; bounded by ~1.1*(1 + x).
    """
    arr = np.asarray(x, dtype=float)
    if np.any(arr < 0.0) or np.any(np.isnan(arr)):
        raise ValueError(f"x must be >= 0, got {x!r}")
    out = np.zeros_like(arr)
    tiny = (arr > 0.0) & (arr <= _KHAT_SMALL_X)
    if np.any(tiny):
        xt = arr[tiny]
        out[tiny] = 1.0 / (np.log(2.0 / xt) - EULER_GAMMA)
    main = arr > _KHAT_SMALL_X
    if np.any(main):
        xm = arr[main]
        out[main] = xm * _sp.k1e(xm) / _sp.k0e(xm)
    return out if isinstance(x, np.ndarray) else float(out)


def heat_kernel_2d(t, z):
    """Planar Gaussian transition density (2*pi*t)^(-1) exp(-|z|^2 / (2t)).

    ``z`` may be complex (a point of the plane) or a nonnegative modulus;
    arrays broadcast.  Integrates to 1 over the plane for every t > 0.
    """
    tarr = _require_positive(t, "t")
    zarr = np.asarray(z)
    r2 = (zarr.real ** 2 + zarr.imag ** 2) if np.iscomplexobj(zarr) else np.square(zarr.astype(float))
    out = np.exp(-r2 / (2.0 * tarr)) / (2.0 * np.pi * tarr)
    scalar = np.isscalar(z) and np.isscalar(t)
    return float(out) if scalar else out


def log_gamma(u):
    """log Gamma(u) for u > 0, relative error <= 1e-13."""
    arr = _require_positive(u, "u")
    out = _sp.gammaln(arr)
    return out if isinstance(u, np.ndarray) else float(out)


def _result(value: float, rel_bound: float) -> SpecFunResult:
    return SpecFunResult(value=value, est_abs_error=abs(value) * rel_bound + 5e-324)


def bessel_k0_result(x: float) -> SpecFunResult:
    return _result(bessel_k0(x), 4e-16)


def bessel_k1_result(x: float) -> SpecFunResult:
    return _result(bessel_k1(x), 4e-16)


def khat_ratio_result(x: float) -> SpecFunResult:
    # the small-x branch truncates an O(x^2 log x / log^2) correction
    rel = 1e-15 if x > _KHAT_SMALL_X else 1e-14
    return _result(khat_ratio(x), rel)


def log_gamma_result(u: float) -> SpecFunResult:
    return _result(log_gamma(u), 1e-14)
