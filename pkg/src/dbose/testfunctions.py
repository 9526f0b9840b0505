"""Compactly supported C^2 test functions with closed-form derivatives.

The generator and forward-equation checks need twice-differentiable test
functions whose gradient and Laplacian are known analytically (stacking
finite differences on top of Monte Carlo noise would drown the residuals).
The family: products of planar Gaussians and low-degree polynomials, cut off
radially by a C^2 quintic smoothstep that is identically 1 inside radius
CUTOFF_R - 1 and 0 outside CUTOFF_R.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

CUTOFF_R = 6.0


def _smoothstep(x):
    """Quintic smoothstep: C^2, S(0)=0, S(1)=1, S'=S''=0 at both ends."""
    x = np.clip(x, 0.0, 1.0)
    return x ** 3 * (10.0 + x * (-15.0 + 6.0 * x))


def _smoothstep_d1(x):
    x = np.asarray(x, dtype=float)
    inside = (x > 0.0) & (x < 1.0)
    return np.where(inside, 30.0 * x ** 2 * (1.0 - x) ** 2, 0.0)


def _smoothstep_d2(x):
    x = np.asarray(x, dtype=float)
    inside = (x > 0.0) & (x < 1.0)
    return np.where(inside, 60.0 * x * (1.0 - x) * (1.0 - 2.0 * x), 0.0)


def _cutoff(r):
    """1 on [0, R-1], C^2-decreasing to 0 on [R-1, R]."""
    return 1.0 - _smoothstep(np.asarray(r, dtype=float) - (CUTOFF_R - 1.0))


def _cutoff_d1(r):
    return -_smoothstep_d1(np.asarray(r, dtype=float) - (CUTOFF_R - 1.0))


def _cutoff_d2(r):
    return -_smoothstep_d2(np.asarray(r, dtype=float) - (CUTOFF_R - 1.0))


@dataclass(frozen=True)
class TestFunction:
    """A C^2 function of the plane with analytic gradient and Laplacian.

    ``value`` accepts complex scalars or arrays; ``grad`` returns the
    gradient as a complex number gx + i*gy; ``lap`` the Laplacian.
    """

    name: str
    value: Callable
    grad: Callable
    lap: Callable
    radial: bool = False

    def __call__(self, z):
        return self.value(z)


def constant(c: float = 1.0) -> TestFunction:
    """A constant; gradient and Laplacian vanish identically."""
    return TestFunction(
        name=f"const[{c:g}]",
        value=lambda z: np.full_like(np.asarray(z, dtype=complex).real, c),
        grad=lambda z: np.zeros_like(np.asarray(z, dtype=complex)),
        lap=lambda z: np.zeros_like(np.asarray(z, dtype=complex).real),
        radial=True,
    )


def _with_cutoff(name, base_v, base_g, base_l, radial):
    """Multiply a smooth base function by the radial C^2 cutoff."""

    def value(z):
        z = np.asarray(z, dtype=complex)
        r = np.abs(z)
        return base_v(z) * _cutoff(r)

    def grad(z):
        z = np.asarray(z, dtype=complex)
        r = np.abs(z)
        chi = _cutoff(r)
        dchi = _cutoff_d1(r)
        rhat = np.where(r > 0.0, z / np.where(r > 0.0, r, 1.0), 0.0 + 0.0j)
        return base_g(z) * chi + base_v(z) * dchi * rhat

    def lap(z):
        z = np.asarray(z, dtype=complex)
        r = np.abs(z)
        chi = _cutoff(r)
        dchi = _cutoff_d1(r)
        d2chi = _cutoff_d2(r)
        g = base_g(z)
        rhat = np.where(r > 0.0, z / np.where(r > 0.0, r, 1.0), 0.0 + 0.0j)
        grad_dot_rhat = g.real * rhat.real + g.imag * rhat.imag
        # cutoff region excludes the origin, so chi'(r)/r is regular
        lap_chi = d2chi + np.where(r > 0.0, dchi / np.where(r > 0.0, r, 1.0), 0.0)
        return base_l(z) * chi + 2.0 * grad_dot_rhat * dchi + base_v(z) * lap_chi

    return TestFunction(name=name, value=value, grad=grad, lap=lap, radial=radial)


def gaussian_bump(center: complex = 0.0, width: float = 1.0,
                  amplitude: float = 1.0) -> TestFunction:
    """amplitude * exp(-|z - center|^2 / width), radially cut off at CUTOFF_R."""
    c = complex(center)
    w = float(width)

    def base_v(z):
        d = z - c
        return amplitude * np.exp(-(d.real ** 2 + d.imag ** 2) / w)

    def base_g(z):
        d = z - c
        return base_v(z) * (-2.0 / w) * d

    def base_l(z):
        d = z - c
        r2 = d.real ** 2 + d.imag ** 2
        return base_v(z) * (4.0 * r2 / w ** 2 - 4.0 / w)

    return _with_cutoff(f"gauss[c={c:g},w={w:g}]", base_v, base_g, base_l,
                        radial=(c == 0.0))


def poly_gaussian(coeffs: dict[tuple[int, int], float], width: float = 1.0,
                  center: complex = 0.0) -> TestFunction:
    """(sum c_ij x^i y^j) * exp(-|z-center|^2/width), cut off radially.

    Monomial degrees up to 2 in each variable are supported; derivatives
    are assembled term by term.
    """
    c = complex(center)
    w = float(width)
    items = sorted(coeffs.items())

    def poly(z):
        x, y = z.real, z.imag
        return sum(cf * x ** i * y ** j for (i, j), cf in items)

    def poly_dx(z):
        x, y = z.real, z.imag
        return sum(cf * i * x ** (i - 1) * y ** j for (i, j), cf in items if i)

    def poly_dy(z):
        x, y = z.real, z.imag
        return sum(cf * j * x ** i * y ** (j - 1) for (i, j), cf in items if j)

    def poly_lap(z):
        x, y = z.real, z.imag
        out = 0.0
        for (i, j), cf in items:
            if i >= 2:
                out = out + cf * i * (i - 1) * x ** (i - 2) * y ** j
            if j >= 2:
                out = out + cf * j * (j - 1) * x ** i * y ** (j - 2)
        return out

    def gauss(z):
        d = z - c
        return np.exp(-(d.real ** 2 + d.imag ** 2) / w)

    def base_v(z):
        return poly(z) * gauss(z)

    def base_g(z):
        d = z - c
        gv = gauss(z)
        gx = (poly_dx(z) - poly(z) * 2.0 * d.real / w) * gv
        gy = (poly_dy(z) - poly(z) * 2.0 * d.imag / w) * gv
        return gx + 1j * gy

    def base_l(z):
        d = z - c
        gv = gauss(z)
        p, px, py = poly(z), poly_dx(z), poly_dy(z)
        r2 = d.real ** 2 + d.imag ** 2
        lap_g = (4.0 * r2 / w ** 2 - 4.0 / w)
        return gv * (poly_lap(z)
                     - (4.0 / w) * (px * d.real + py * d.imag)
                     + p * lap_g)

    return _with_cutoff(f"polygauss[{len(items)} terms,w={w:g}]",
                        base_v, base_g, base_l, radial=False)


def annulus_bump(r_in: float = 1.0, r_out: float = 2.0,
                 amplitude: float = 1.0) -> TestFunction:
    """Smooth radial bump supported in the annulus r_in <= |z| <= r_out.

    Built from the quintic smoothstep in the radial variable, so it is C^2
    and vanishes with two derivatives at both annulus boundaries.  Used
    where a weight must stay away from the origin.
    """
    mid = 0.5 * (r_in + r_out)
    hw = 0.5 * (r_out - r_in)

    def shape(r):
        # rises 1 on [r_in, mid], falls on [mid, r_out]
        up = _smoothstep((np.asarray(r, dtype=float) - r_in) / hw)
        down = _smoothstep((r_out - np.asarray(r, dtype=float)) / hw)
        return amplitude * np.minimum(up, down)

    def shape_d1(r):
        r = np.asarray(r, dtype=float)
        up = (r - r_in) / hw
        down = (r_out - r) / hw
        rising = up < down
        out = np.where(rising, _smoothstep_d1(up) / hw,
                       -_smoothstep_d1(down) / hw)
        return amplitude * out

    def shape_d2(r):
        r = np.asarray(r, dtype=float)
        up = (r - r_in) / hw
        down = (r_out - r) / hw
        rising = up < down
        out = np.where(rising, _smoothstep_d2(up) / hw ** 2,
                       _smoothstep_d2(down) / hw ** 2)
        return amplitude * out

    def value(z):
        z = np.asarray(z, dtype=complex)
        return shape(np.abs(z))

    def grad(z):
        z = np.asarray(z, dtype=complex)
        r = np.abs(z)
        rhat = np.where(r > 0.0, z / np.where(r > 0.0, r, 1.0), 0.0 + 0.0j)
        return shape_d1(r) * rhat

    def lap(z):
        z = np.asarray(z, dtype=complex)
        r = np.abs(z)
        safe = np.where(r > 0.0, r, 1.0)
        return shape_d2(r) + np.where(r > 0.0, shape_d1(r) / safe, 0.0)

    return TestFunction(name=f"annulus[{r_in:g},{r_out:g}]",
                        value=value, grad=grad, lap=lap, radial=True)


DEFAULT_FAMILY = (
    gaussian_bump(),
    gaussian_bump(center=1.0 + 0.5j, width=0.8),
    poly_gaussian({(0, 0): 1.0, (1, 0): 0.5, (0, 2): 0.25}, width=1.5),
    annulus_bump(),
)
