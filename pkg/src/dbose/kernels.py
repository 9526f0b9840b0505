"""Quadrature evaluators for the closed-form laws of the conditioned motion.

Implements the singular entrance density s_beta and its weighted variant,
the attracted-pair semigroup kernel, the conditioned transition density with
all four zero/nonzero argument cases, the invariant-law density, the
zero-hitting-time law, the joint position/local-time law, local-time mean
profiles, and the generator applied to smooth test functions.

All evaluators are pure and reentrant; the heavy ones vectorize over the
spatial argument so that verification workloads (Chapman-Kolmogorov,
marginals) can batch thousands of evaluation points per call.

Conventions: points of the plane are complex numbers; ``_heat(c, r)`` is the
planar Gaussian density exp(-r^2/(2c)) / (2 pi c) at modulus r.  Endpoint
singularities are integrated in transformed variables: v = -1/log(tau) where
the entrance density blows up like 1/(tau log^2 tau), and logarithmic meshes
where heat factors concentrate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.chebyshev import Chebyshev
from scipy import special as _sp

from .quadrature import (DEFAULT_QUAD, QuadConfig, QuadratureConvergenceError,
                         geometric_edges, graded_edges, panel_rule, refine,
                         uniform_edges)
from .specfun import khat_ratio

__all__ = [
    "KernelParams", "QuadConfig", "QuadratureConvergenceError",
    "s_beta", "s_beta_weighted", "ring_kernel", "semigroup_kernel",
    "pdown_density", "transition_density", "radial_marginal_pdf",
    "mu0_density", "mu0_radial_pdf", "hitting_time_density",
    "hitting_time_cdf", "survival_probability", "hitting_time_laplace",
    "joint_law_eval", "local_time_mean_profile", "generator_apply",
]

_FOUR_PI = 4.0 * math.pi

# Gaussian factors exp(-r^2/(2c)) are treated as zero once the exponent
# passes ~90 (1e-39 relative); used to pick integration cutoffs.
_GAUSS_CUT = 90.0

# arguments with modulus below this are routed to the exact zero-argument
# branch, where the nonzero-branch integrand degenerates (0/0 against
# K0 -> infinity)
_ZERO_ROUTE = 1e-9


@dataclass(frozen=True)
class KernelParams:
    """Rate parameter of the conditioning plus the quadrature policy."""

    beta: float
    quad: QuadConfig = field(default_factory=QuadConfig)

    def __post_init__(self):
        if not (self.beta > 0.0 and math.isfinite(self.beta)):
            raise ValueError("beta must be positive and finite")


def _heat(c, r):
    return np.exp(-np.square(r) / (2.0 * c)) / (2.0 * math.pi * c)


def _modulus(z) -> float:
    return abs(complex(z))


# ---------------------------------------------------------------------------
# the singular entrance density s^beta and its g-weighted variant
# ---------------------------------------------------------------------------

def _phi_integral(L: np.ndarray, depth: int, g=None) -> np.ndarray:
    """integral_0^inf g(u) exp(u*L - logGamma(u)) du, vectorized over L.

    This is tau * s^beta(tau) / (4 pi) at L = log(beta*tau); keeping tau out
    of the prefactor lets callers work at L as small as -1e5 without
    overflowing the 1/tau factor.
    """
    L = np.atleast_1d(np.asarray(L, dtype=float))
    Lmax = float(L.max())
    Lmin = float(L.min())

    ustar = math.exp(min(Lmax, 700.0)) + 0.5
    log_peak = ustar * Lmax - float(_sp.gammaln(ustar))
    if log_peak > 700.0:
        raise ValueError("entrance density argument too large for float64")

    U = max(12.0, 2.0 * ustar)
    while U * Lmax - float(_sp.gammaln(U)) > log_peak - 55.0:
        U *= 1.5
        if U > 1e7:
            raise QuadratureConvergenceError("entrance density tail cutoff did not close")

    # geometric refinement toward 0 resolves the e^{u L} scale for very
    # negative L; the linear part covers the Stirling peak for large L
    n = 8 * (1 << depth)
    u_small = min(1e-3, 0.3 / (1.0 + abs(Lmin)))
    edges = np.concatenate([
        [0.0],
        geometric_edges(u_small, 1.0, n),
        uniform_edges(1.0, U, n)[1:],
    ])
    nodes, weights = panel_rule(edges, order=16)

    expo = nodes[:, None] * L[None, :] - _sp.gammaln(nodes)[:, None]
    vals = np.exp(expo)
    if g is not None:
        vals = vals * np.asarray(g(nodes), dtype=float)[:, None]
    return weights @ vals


def _sbeta_times_tau(beta: float, L: np.ndarray, depth: int, g=None) -> np.ndarray:
    """tau * (weighted) s^beta(tau) expressed through L = log(beta) - 1/v.

    Finite for arbitrarily negative L, which the v-substituted convolution
    meshes produce when tau underflows float64.
    """
    return _FOUR_PI * _phi_integral(L, depth, g=g)


def s_beta(beta: float, tau, quad: QuadConfig | None = None):
    """Entrance density 4*pi*int_0^inf beta^u tau^(u-1)/Gamma(u) du.

    Vectorized over tau > 0.  Blows up like 1/(tau log^2 tau) at 0 and grows
    exponentially at infinity; raises when the value would overflow float64.
    """
    cfg = quad or DEFAULT_QUAD
    tau_arr = np.atleast_1d(np.asarray(tau, dtype=float))
    if np.any(tau_arr <= 0.0):
        raise ValueError("tau must be positive")
    if beta <= 0.0:
        raise ValueError("beta must be positive")
    L = np.log(beta) + np.log(tau_arr)
    val = refine(lambda d: _phi_integral(L, d), cfg, "s_beta")
    out = _FOUR_PI / tau_arr * val
    return out if np.ndim(tau) else float(out[0])


def s_beta_weighted(beta: float, tau, g, quad: QuadConfig | None = None):
    """g-weighted variant 4*pi*int g(u) beta^u tau^(u-1)/Gamma(u) du.

    ``g`` must accept a numpy array of u-values (the local-time variable).
    Reduces to ``s_beta`` for g identically 1.
    """
    cfg = quad or DEFAULT_QUAD
    tau_arr = np.atleast_1d(np.asarray(tau, dtype=float))
    if np.any(tau_arr <= 0.0):
        raise ValueError("tau must be positive")
    L = np.log(beta) + np.log(tau_arr)
    val = refine(lambda d: _phi_integral(L, d, g=g), cfg, "s_beta_weighted")
    out = _FOUR_PI / tau_arr * val
    return out if np.ndim(tau) else float(out[0])


def _sbeta_chebyshev(beta: float, lo: float, hi: float, quad: QuadConfig):
    """Chebyshev surrogate of s^beta on the smooth range [lo, hi], lo > 0."""
    return Chebyshev.interpolate(lambda x: s_beta(beta, x, quad), 64,
                                 domain=[lo, hi])


# ---------------------------------------------------------------------------
# convolutions of s^beta against heat-type kernels
# ---------------------------------------------------------------------------

def _vsub_panels(tau0: float, depth: int, order: int = 12):
    """Nodes/weights in v = -1/log tau covering tau in (0, tau0], tau0 < 1.

    Returns (v, weights, L_of_tau) where L = log(tau) = -1/v is exact even
    when tau itself underflows.
    """
    v_hi = -1.0 / math.log(tau0)
    n_v = 10 * (1 << depth)
    v, w = panel_rule(uniform_edges(0.0, v_hi, n_v), order=order)
    return v, w, -1.0 / v


def _log_mesh_panels(lo: float, hi: float, depth: int, per_unit: float = 1.2,
                     base: int = 12, order: int = 12):
    """Panels on [log lo, log hi] with density tied to the log-range."""
    y_lo, y_hi = math.log(lo), math.log(hi)
    n = max(base, int(math.ceil((y_hi - y_lo) / per_unit))) * (1 << depth)
    y, w = panel_rule(uniform_edges(y_lo, y_hi, n), order=order)
    return np.exp(y), w


def _sbeta_conv(beta: float, t: float, kernel, u_scales: np.ndarray,
                quad: QuadConfig) -> np.ndarray:
    """integral_0^t s^beta(tau) * kernel(t - tau) dtau.

    ``kernel(u_nodes)`` maps remaining times (n_u,) to shape (n_u, n_out)
    and must vanish like exp(-scale/(2u)) as u -> 0 with per-output
    concentration scales ``u_scales`` (n_out,).  The tau = 0 blow-up of the
    entrance density is integrated in v = -1/log tau; the kernel
    concentration at tau = t on a logarithmic mesh in u = t - tau.
    """
    n_out = len(u_scales)
    half = 0.5 * t
    tau0 = min(half, 0.25)
    cheb = _sbeta_chebyshev(beta, half, t, quad)

    u_lo = max(float(np.min(u_scales)) / (2.0 * _GAUSS_CUT), half * 1e-280)
    right_empty = u_lo >= half * (1.0 - 1e-12)
    log_beta = math.log(beta)

    def evaluate(depth: int) -> np.ndarray:
        total = np.zeros(n_out)

        # tau in (0, tau0]: bounded integrand in v; s^beta * tau stays finite
        v, vw, logtau = _vsub_panels(tau0, depth)
        stau = _sbeta_times_tau(beta, log_beta + logtau, max(depth - 1, 1))
        tau = np.exp(logtau)
        total += (vw / np.square(v) * stau) @ kernel(t - tau)

        # tau in [tau0, t/2]: smooth
        if tau0 < half:
            n_m = 8 * (1 << depth)
            m, mw = panel_rule(uniform_edges(tau0, half, n_m), order=12)
            total += (mw * s_beta(beta, m, quad)) @ kernel(t - m)

        # u = t - tau in [u_lo, t/2]: log mesh resolves every kernel scale
        if not right_empty:
            u, yw = _log_mesh_panels(u_lo, half, depth)
            total += (yw * u * cheb(t - u)) @ kernel(u)
        return total

    return refine(evaluate, quad, "s_beta convolution")


def _heat_kernel_of_u(rate: float, r: np.ndarray):
    def kernel(u: np.ndarray) -> np.ndarray:
        return _heat(rate * u[:, None], r[None, :])
    return kernel


def _pair_heat_product(rate: float, u: np.ndarray, r0: float, r1: np.ndarray,
                       depth: int) -> np.ndarray:
    """H(u) = integral_0^u heat(rate*s, r0) heat(rate*(u-s), r1) ds.

    Radial in both endpoints; returns shape (n_u, n_r1).  Each half of the
    range is integrated on a logarithmic mesh in the distance to its
    concentration endpoint.  Large r1 batches are chunked to bound the
    (n_u, n_mesh, n_r1) temporaries.
    """
    u = np.asarray(u, dtype=float)
    r1_full = np.asarray(r1, dtype=float)
    n_mesh_est = 170 * (1 << depth)
    chunk = max(8, int(4e6 // max(u.size * n_mesh_est, 1)))
    if r1_full.size > chunk:
        parts = [_pair_heat_product(rate, u, r0, r1_full[i:i + chunk], depth)
                 for i in range(0, r1_full.size, chunk)]
        return np.concatenate(parts, axis=1)
    r1 = r1_full
    out = np.zeros((u.size, r1.size))
    u_max = float(np.max(u))

    def frac_mesh(scale: float):
        # mesh in w/u over (0, 1/2], w the distance to a concentration
        # endpoint whose heat factor lives at the given squared scale
        frac_lo = max(scale / (2.0 * _GAUSS_CUT * rate) / u_max, 1e-280)
        if frac_lo >= 0.5:
            return None, None
        return _log_mesh_panels(frac_lo, 0.5, depth, base=14)

    # s near 0: the r0 factor concentrates
    frac, yw = frac_mesh(r0 * r0)
    if frac is not None:
        w = u[:, None] * frac[None, :]                  # (n_u, n_y)
        near = _heat(rate * w, r0)
        far = _heat(rate * (u[:, None, None] - w[:, :, None]),
                    r1[None, None, :])
        out += np.einsum("uy,uyr->ur", near * w * yw[None, :], far)

    # u - s near 0: the r1 factors concentrate
    frac, yw = frac_mesh(float(np.min(r1)) ** 2)
    if frac is not None:
        w = u[:, None] * frac[None, :]
        far = _heat(rate * (u[:, None] - w), r0)
        near = _heat(rate * w[:, :, None], r1[None, None, :])
        out += np.einsum("uy,uyr->ur", far * w * yw[None, :], near)
    return out


def _pair_kernel_of_u(rate: float, r0: float, r1: np.ndarray, quad: QuadConfig):
    def kernel(u: np.ndarray) -> np.ndarray:
        return refine(lambda d: _pair_heat_product(rate, u, r0, r1, d),
                      quad, "heat pair product")
    return kernel


def ring_kernel(beta: float, t: float, z, quad: QuadConfig | None = None):
    """integral_0^t s^beta(tau) * heat(2(t-tau), z) dtau.

    Vectorized over z (complex values or moduli).  Diverges logarithmically
    at z = 0; a zero modulus raises.
    """
    cfg = quad or DEFAULT_QUAD
    if t <= 0.0:
        raise ValueError("t must be positive")
    r = np.atleast_1d(np.abs(np.asarray(z)))
    if np.any(r == 0.0):
        raise ValueError("the ring kernel diverges at the origin")
    out = _sbeta_conv(beta, t, _heat_kernel_of_u(2.0, r), r * r / 2.0, cfg)
    return out if np.ndim(z) else float(out[0])


def _sbeta_heat_conv(beta: float, t: float, r: np.ndarray, rate: float,
                     quad: QuadConfig) -> np.ndarray:
    return _sbeta_conv(beta, t, _heat_kernel_of_u(rate, r), r * r / rate, quad)


def _sbeta_pair_conv(beta: float, t: float, r0: float, r1: np.ndarray,
                     rate: float, quad: QuadConfig) -> np.ndarray:
    scales = np.square(r0 + r1) / rate
    return _sbeta_conv(beta, t, _pair_kernel_of_u(rate, r0, r1, quad), scales,
                       quad)


def semigroup_kernel(beta: float, t: float, z0, z1,
                     quad: QuadConfig | None = None) -> float:
    """The pair-interaction semigroup kernel.

    Free heat part plus the double convolution of free kernels against the
    entrance density; symmetric in (z0, z1).  The kernel diverges when
    either argument is the exact contact point: returns inf there.
    """
    cfg = quad or DEFAULT_QUAD
    if t <= 0.0:
        raise ValueError("t must be positive")
    r0, r1 = _modulus(z0), _modulus(z1)
    if min(r0, r1) < 1e-12:
        return math.inf
    direct = float(_heat(2.0 * t, abs(complex(z0) - complex(z1))))
    conv = float(_sbeta_pair_conv(beta, t, r0, np.array([r1]), 2.0, cfg)[0])
    return direct + conv


# ---------------------------------------------------------------------------
# conditioned transition density (four argument cases) and derived laws
# ---------------------------------------------------------------------------

def pdown_density(beta: float, t: float, z0, z1,
                  quad: QuadConfig | None = None):
    """Transition density of the conditioned motion w.r.t. its invariant law.

    Evaluates the four-case closed form (either argument at or away from the
    origin), routing moduli below 1e-9 to the exact zero branch; continuous
    across the case boundaries, symmetric in (z0, z1), strictly positive.
    Vectorized over z1 for fixed z0.
    """
    cfg = quad or DEFAULT_QUAD
    if t <= 0.0:
        raise ValueError("t must be positive")
    a = math.sqrt(2.0 * beta)
    ebt = math.exp(-beta * t)
    r0 = _modulus(z0)
    z1_arr = np.atleast_1d(np.asarray(z1, dtype=complex))
    r1 = np.abs(z1_arr)
    out = np.empty(z1_arr.shape, dtype=float)

    zero1 = r1 < _ZERO_ROUTE
    if r0 < _ZERO_ROUTE:
        if np.any(zero1):
            out[zero1] = ebt * s_beta(beta, t, cfg) / (_FOUR_PI * beta)
        if np.any(~zero1):
            rr = r1[~zero1]
            conv = _sbeta_heat_conv(beta, t, rr, 1.0, cfg)
            out[~zero1] = ebt * conv / (4.0 * beta * _sp.k0(a * rr))
    else:
        k00 = _sp.k0(a * r0)
        if np.any(zero1):
            conv = _sbeta_heat_conv(beta, t, np.array([r0]), 1.0, cfg)[0]
            out[zero1] = ebt * conv / (4.0 * beta * k00)
        if np.any(~zero1):
            zz = z1_arr[~zero1]
            rr = r1[~zero1]
            k01 = _sp.k0(a * rr)
            direct = _heat(t, np.abs(complex(z0) - zz))
            pair = _pair_conv_radial_cached(beta, t, r0, rr, cfg)
            out[~zero1] = (math.pi / (2.0 * beta)) * ebt * (
                direct + 0.5 * pair) / (k00 * k01)
    return out if np.ndim(z1) else float(out[0])


def _pair_conv_radial_cached(beta: float, t: float, r0: float, rr: np.ndarray,
                             quad: QuadConfig) -> np.ndarray:
    # the pair convolution is radial in z1: evaluate unique radii only
    uniq, inverse = np.unique(np.round(rr, 15), return_inverse=True)
    vals = _sbeta_pair_conv(beta, t, r0, uniq, 1.0, quad)
    return vals[inverse].reshape(rr.shape)


def transition_density(beta: float, t: float, z0, z1,
                       quad: QuadConfig | None = None):
    """Density of the motion at time t w.r.t. planar Lebesgue measure.

    pdown_density times the invariant-law density; diverges (integrably) as
    z1 -> 0, where +inf is returned.
    """
    a = math.sqrt(2.0 * beta)
    r1 = np.abs(np.atleast_1d(np.asarray(z1, dtype=complex)))
    p = np.atleast_1d(pdown_density(beta, t, z0, z1, quad))
    with np.errstate(invalid="ignore"):
        out = np.where(r1 == 0.0, np.inf,
                       p * (2.0 * beta / math.pi)
                       * np.square(_sp.k0(np.maximum(a * r1, 1e-300))))
    return out if np.ndim(z1) else float(out[0])


def radial_marginal_pdf(beta: float, t: float, z0, r,
                        quad: QuadConfig | None = None):
    """Probability density of |Z_t| on (0, inf), started from z0.

    The angular average of the free part is the Gaussian ring kernel
    (scaled Bessel i0e); the entrance part is already radial.
    """
    cfg = quad or DEFAULT_QUAD
    a = math.sqrt(2.0 * beta)
    ebt = math.exp(-beta * t)
    r_arr = np.atleast_1d(np.asarray(r, dtype=float))
    if np.any(r_arr <= 0.0):
        raise ValueError("r must be positive")
    r0 = _modulus(z0)
    k0r = _sp.k0(a * r_arr)
    if r0 < _ZERO_ROUTE:
        conv = _sbeta_heat_conv(beta, t, r_arr, 1.0, cfg)
        out = ebt * r_arr * conv * k0r
    else:
        ring = (np.exp(-np.square(r_arr - r0) / (2.0 * t)) / t
                * _sp.i0e(r_arr * r0 / t))
        pair = _pair_conv_radial_cached(beta, t, r0, r_arr, cfg)
        out = ebt * r_arr * (ring + math.pi * pair) * k0r / _sp.k0(a * r0)
    return out if np.ndim(r) else float(out[0])


def mu0_density(beta: float, z):
    """Density of the invariant probability law against planar Lebesgue.

    Returns +inf at z = 0 (integrable singularity sentinel).
    """
    a = math.sqrt(2.0 * beta)
    r = np.abs(np.asarray(z))
    with np.errstate(divide="ignore"):
        out = np.where(r == 0.0, np.inf,
                       (2.0 * beta / math.pi)
                       * np.square(_sp.k0(np.maximum(a * r, 1e-300))))
    return out if np.ndim(z) else float(out)


def mu0_radial_pdf(beta: float, r):
    """Radial density 4*beta*r*K0(sqrt(2 beta) r)^2 of the invariant law."""
    a = math.sqrt(2.0 * beta)
    r_arr = np.asarray(r, dtype=float)
    out = 4.0 * beta * r_arr * np.square(_sp.k0(np.maximum(a * r_arr, 1e-300)))
    return out if np.ndim(r) else float(out)


def hitting_time_density(beta: float, z0, s):
    """Density of the first zero-hitting time started from z0 != 0."""
    r0 = _modulus(z0)
    if r0 == 0.0:
        raise ValueError("the hitting-time law needs a nonzero start")
    s_arr = np.asarray(s, dtype=float)
    if np.any(s_arr <= 0.0):
        raise ValueError("s must be positive")
    a = math.sqrt(2.0 * beta)
    out = np.exp(-beta * s_arr - r0 * r0 / (2.0 * s_arr)) / (
        2.0 * _sp.k0(a * r0) * s_arr)
    return out if np.ndim(s) else float(out)


def survival_probability(beta: float, z0, t: float,
                         quad: QuadConfig | None = None) -> float:
    """P(no zero hit before t) = integral_t^inf of the hitting density."""
    cfg = quad or DEFAULT_QUAD
    r0 = _modulus(z0)
    if r0 == 0.0:
        return 0.0
    s_hi = t + (_GAUSS_CUT + 20.0) / beta

    def evaluate(depth: int) -> float:
        s, w = _log_mesh_panels(t, s_hi, depth)
        return float(np.sum(w * s * hitting_time_density(beta, z0, s)))

    return float(refine(evaluate, cfg, "survival probability"))


def hitting_time_cdf(beta: float, z0, t, quad: QuadConfig | None = None):
    """P(first zero hit <= t); vectorized over t."""
    t_arr = np.atleast_1d(np.asarray(t, dtype=float))
    out = np.array([1.0 - survival_probability(beta, z0, float(ti), quad)
                    for ti in t_arr])
    return out if np.ndim(t) else float(out[0])


def hitting_time_laplace(beta: float, z0, q: float) -> float:
    """E[exp(-q * T0)]: the closed ratio of K0 values."""
    r0 = _modulus(z0)
    if r0 == 0.0:
        raise ValueError("needs a nonzero start")
    return float(_sp.k0(math.sqrt(2.0 * (beta + q)) * r0)
                 / _sp.k0(math.sqrt(2.0 * beta) * r0))


# ---------------------------------------------------------------------------
# joint position / local-time laws
# ---------------------------------------------------------------------------

def _insert_breakpoints(edges: np.ndarray, breakpoints) -> np.ndarray:
    """Panel edges with user discontinuity radii inserted.

    Discontinuous observables (indicators) converge only when the jump sits
    on a panel boundary; observables may advertise jumps via a
    ``breakpoints`` attribute.
    """
    pts = [b for b in breakpoints if edges[0] < b < edges[-1]]
    if not pts:
        return edges
    return np.unique(np.concatenate([edges, np.asarray(pts, dtype=float)]))


def _radial_fk_from_origin(beta: float, f, sigma: np.ndarray,
                           quad: QuadConfig, breakpoints=()) -> np.ndarray:
    """Weighted heat transform int heat(sigma, z) f(|z|) K0(a|z|) dz from 0.

    Polar form int_0^inf (r/sigma) e^{-r^2/(2 sigma)} f(r) K0(a r) dr,
    vectorized over sigma.  A shared geometric mesh resolves every Gaussian
    scale in the sigma batch at once and the K0 log-singularity at r = 0.
    """
    a = math.sqrt(2.0 * beta)
    sig = np.atleast_1d(np.asarray(sigma, dtype=float))
    rmin = math.sqrt(float(sig.min())) * 1e-3
    rmax = math.sqrt(2.0 * _GAUSS_CUT * float(sig.max()))
    decades = math.log10(rmax / rmin)

    def evaluate(depth: int) -> np.ndarray:
        n = int(math.ceil(2.5 * decades + 6)) * (1 << depth)
        edges = np.concatenate([[0.0], geometric_edges(rmin, rmax, n)])
        edges = _insert_breakpoints(edges, breakpoints)
        r, w = panel_rule(edges, order=12)
        col = w * np.asarray(f(r), dtype=float) * _sp.k0(np.maximum(a * r, 1e-300))
        rows = (r[None, :] / sig[:, None]) * np.exp(
            -np.square(r)[None, :] / (2.0 * sig[:, None]))
        return rows @ col

    return refine(evaluate, quad, "radial transform from origin")


def _radial_fk_from_point(beta: float, f, r0: float, t: float,
                          quad: QuadConfig, breakpoints=()) -> float:
    """Same weighted heat transform started at modulus r0 > 0."""
    a = math.sqrt(2.0 * beta)

    def evaluate(depth: int) -> float:
        n = 10 * (1 << depth)
        rmax = r0 + math.sqrt(2.0 * _GAUSS_CUT * t)
        edges = _insert_breakpoints(
            graded_edges(0.0, rmax, n, quad.grading_exponent, "left"),
            breakpoints)
        r, w = panel_rule(edges, order=12)
        ring = (np.exp(-np.square(r - r0) / (2.0 * t)) / t
                * _sp.i0e(r * r0 / t))
        vals = r * ring * np.asarray(f(r), dtype=float) * _sp.k0(
            np.maximum(a * r, 1e-300))
        return float(w @ vals)

    return float(refine(evaluate, quad, "radial transform from point"))


def joint_law_eval(beta: float, t: float, z0, f, g,
                   quad: QuadConfig | None = None) -> float:
    """E[f(Z_t) g(L_t)] for radial f and bounded g on the local-time axis.

    ``f`` maps arrays of moduli to values, ``g`` maps arrays of local-time
    values to values (both vectorized).  Uses the two-branch closed form
    (start at or away from the origin) with the g-weighted entrance density
    inside; the start-away branch convolves the origin branch against the
    zero-hitting law.
    """
    cfg = quad or DEFAULT_QUAD
    if t <= 0.0:
        raise ValueError("t must be positive")
    a = math.sqrt(2.0 * beta)
    r0 = _modulus(z0)
    breaks = tuple(getattr(f, "breakpoints", ()))

    # surrogate of the origin-started transform, interpolated in log(sigma)
    y_lo, y_hi = math.log(t) - 30.0, math.log(t)
    surrogate = Chebyshev.interpolate(
        lambda y: _radial_fk_from_origin(beta, f, np.exp(np.atleast_1d(y)),
                                         cfg, breaks),
        110, domain=[y_lo, y_hi])

    def pfb0(sigma: np.ndarray) -> np.ndarray:
        return surrogate(np.log(np.maximum(sigma, t * math.exp(-30.0))))

    log_beta = math.log(beta)

    def origin_branch(horizon: float) -> float:
        """E_0[f(Z_h) g(L_h)] for horizon h."""
        half = 0.5 * horizon
        tau0 = min(half, 0.25)

        def evaluate(depth: int) -> float:
            total = 0.0
            v, vw, logtau = _vsub_panels(tau0, depth)
            stau = _sbeta_times_tau(beta, log_beta + logtau,
                                    max(depth - 1, 1), g=g)
            tau = np.exp(logtau)
            total += float(np.sum(vw / np.square(v) * stau
                                  * pfb0(horizon - tau)))
            if tau0 < half:
                m, mw = panel_rule(uniform_edges(tau0, half, 8 * (1 << depth)),
                                   order=12)
                total += float(np.sum(mw * s_beta_weighted(beta, m, g, cfg)
                                      * pfb0(horizon - m)))
            # sigma = horizon - tau near 0 on a log mesh (log kink of pfb0)
            n_y = 12 * (1 << depth)
            yk, yw = panel_rule(
                uniform_edges(math.log(horizon) - 28.0, math.log(half), n_y),
                order=12)
            sig = np.exp(yk)
            sw = s_beta_weighted(beta, horizon - sig, g, cfg)
            total += float(np.sum(yw * sig * sw * pfb0(sig)))
            return total

        val = refine(evaluate, cfg, "joint law (origin branch)")
        return math.exp(-beta * horizon) / (2.0 * math.pi) * float(val)

    if r0 < _ZERO_ROUTE:
        return origin_branch(t)

    k00 = _sp.k0(a * r0)
    g0 = float(np.asarray(g(np.array([0.0])), dtype=float)[0])
    term1 = (math.exp(-beta * t)
             * _radial_fk_from_point(beta, f, r0, t, cfg, breaks) / k00 * g0)

    # strong-Markov part: hit at time s, then the origin branch on [0, t-s];
    # the inner value is interpolated on a log scale in the remaining time
    h_lo = t * 1e-8
    cheb_inner = Chebyshev.interpolate(
        lambda y: np.array([origin_branch(float(math.exp(yy)))
                            * math.exp(beta * math.exp(yy))
                            for yy in np.atleast_1d(y)]),
        64, domain=[math.log(h_lo), math.log(t)])

    def inner(hrem: np.ndarray) -> np.ndarray:
        return cheb_inner(np.log(np.maximum(hrem, h_lo)))

    def evaluate(depth: int) -> float:
        s_lo = max(r0 * r0 / (2.0 * _GAUSS_CUT), t * 1e-290)
        if s_lo >= t * (1.0 - 1e-12):
            return 0.0
        s, yw = _log_mesh_panels(s_lo, t, depth)
        p2s = _heat(2.0 * s, math.sqrt(2.0) * r0)
        return float(np.sum(yw * s * p2s * 2.0 * math.pi * inner(t - s)))

    term2 = (math.exp(-beta * t) / k00
             * float(refine(evaluate, cfg, "joint law (hit branch)")))
    return term1 + term2


def local_time_mean_profile(beta: float, t: float, z0, h,
                            quad: QuadConfig | None = None) -> float:
    """E[int_0^t h(tau) dL_tau]: mean local-time charge of the profile h.

    ``h`` must accept arrays of times in [0, t]; for a nonzero start it
    should be smooth (the hit-time convolution is resolved by Chebyshev
    interpolation in the hit time).
    """
    cfg = quad or DEFAULT_QUAD
    if t <= 0.0:
        raise ValueError("t must be positive")
    r0 = _modulus(z0)
    log_beta = math.log(beta)

    def origin_value(horizon: float, shift: float) -> float:
        """int_0^horizon e^{-beta tau} s(tau) h(shift + tau) dtau / 4pi."""
        if horizon <= 0.0:
            return 0.0
        tau0 = min(0.5 * horizon, 0.25)

        def evaluate(depth: int) -> float:
            total = 0.0
            v, vw, logtau = _vsub_panels(tau0, depth)
            stau = _sbeta_times_tau(beta, log_beta + logtau, max(depth - 1, 1))
            tau = np.exp(logtau)
            total += float(np.sum(vw / np.square(v) * stau
                                  * np.exp(-beta * tau) * h(shift + tau)))
            if tau0 < horizon:
                m, mw = panel_rule(uniform_edges(tau0, horizon, 8 * (1 << depth)),
                                   order=12)
                sb = s_beta(beta, m, cfg)
                total += float(np.sum(mw * np.exp(-beta * m) * sb
                                      * h(shift + m)))
            return total

        return float(refine(evaluate, cfg, "local time profile")) / _FOUR_PI

    if r0 < _ZERO_ROUTE:
        return origin_value(t, 0.0)

    a = math.sqrt(2.0 * beta)
    k00 = _sp.k0(a * r0)
    cheb_inner = Chebyshev.interpolate(
        lambda s: np.array([origin_value(t - float(ss), float(ss))
                            for ss in np.atleast_1d(s)]),
        96, domain=[0.0, t])

    def evaluate(depth: int) -> float:
        s_lo = max(r0 * r0 / (2.0 * _GAUSS_CUT), t * 1e-290)
        if s_lo >= t * (1.0 - 1e-12):
            return 0.0
        s, yw = _log_mesh_panels(s_lo, t, depth)
        p2s = _heat(2.0 * s, math.sqrt(2.0) * r0)
        return float(np.sum(yw * s * p2s * np.exp(-beta * s) * 2.0 * math.pi
                            * np.maximum(cheb_inner(s), 0.0)))

    return float(refine(evaluate, cfg, "local time profile (hit branch)")) / k00


# ---------------------------------------------------------------------------
# generator on the built-in C^2 test family
# ---------------------------------------------------------------------------

def generator_apply(beta: float, f, z) -> float:
    """Apply (Laplacian/2 - singular drift . gradient) to a test function.

    ``f`` must expose value/grad/lap with analytic derivatives (see
    ``testfunctions``); z must be nonzero.  The drift covector is
    khat_ratio(sqrt(2 beta)|z|) * z / |z|^2.
    """
    zc = complex(z)
    r = abs(zc)
    if r == 0.0:
        raise ValueError("generator undefined at the origin")
    a = math.sqrt(2.0 * beta)
    drift = khat_ratio(a * r) * zc / (r * r)
    grad = f.grad(zc)
    inner = drift.real * grad.real + drift.imag * grad.imag
    return 0.5 * f.lap(zc) - inner
