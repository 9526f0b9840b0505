"""Path-level simulation of the conditioned pair and the N-particle ensemble.

The radial-squared coordinate is integrated with a full-truncation Euler
scheme (drift and diffusion read max(X, 0) while the state is stored
unclamped); the angle advances by a time-changed Brownian increment between
zero hits and is re-randomized uniformly at each flagged hit.  The
N-particle ensemble is assembled from the relative track and the centre
track through the rotation by 1/sqrt(2); free particles are exact Brownian
paths.

Noise increments of every driving Brownian motion are retained on the Path
so that reconstruction, covariation, and skew-product decomposition tests
can replay them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import rng
from .specfun import khat_ratio

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class ModelParams:
    """Conditioning rate, particle count, and the distinguished pair.

    ``edge`` is the ordered pair (high, low) with 1 <= low < high <= N,
    naming the two particles whose relative coordinate is conditioned.
    """

    beta: float
    n_particles: int = 2
    edge: tuple[int, int] = (2, 1)

    def __post_init__(self):
        if not (self.beta > 0.0 and math.isfinite(self.beta)):
            raise ValueError("beta must be positive and finite")
        if self.n_particles < 2:
            raise ValueError("need at least two particles")
        hi, lo = self.edge
        if not (1 <= lo < hi <= self.n_particles):
            raise ValueError(f"edge {self.edge} not of the form (high, low) "
                             f"with 1 <= low < high <= {self.n_particles}")


@dataclass(frozen=True)
class SimConfig:
    """Time grid, path count, seed, and the zero-hit threshold.

    zero_threshold (radial-squared units) defaults to dt/100; drift_factor
    scales the singular drift and exists for mutation testing of the
    verification harness (1.0 is the model).
    """

    t_end: float
    dt: float
    seed: int = 0
    n_paths: int = 1
    zero_threshold: float | None = None
    drift_factor: float = 1.0

    def __post_init__(self):
        if not (0.0 < self.dt <= self.t_end):
            raise ValueError("need 0 < dt <= t_end")
        if self.n_paths < 1:
            raise ValueError("n_paths must be >= 1")
        if self.zero_threshold is not None and self.zero_threshold < 0.0:
            raise ValueError("zero_threshold must be >= 0")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_end / self.dt))

    @property
    def threshold(self) -> float:
        return self.dt * 1e-2 if self.zero_threshold is None else self.zero_threshold


@dataclass
class Path:
    """One realized trajectory on the uniform grid.

    positions has one column per particle (None for radial-only runs);
    noise maps channel names to per-step increment arrays; zero_hits lists
    grid indices where the radial-squared track was at or below the
    threshold.  rel_track and com_track store the primary data from which
    particle positions are derived, so the assembly identities hold by
    construction.
    """

    times: np.ndarray
    positions: np.ndarray | None
    radial_sq: np.ndarray | None
    theta: np.ndarray | None
    noise: dict[str, np.ndarray]
    zero_hits: np.ndarray
    params: ModelParams
    config: SimConfig
    path_index: int = 0
    rel_track: np.ndarray | None = None
    com_track: np.ndarray | None = None


# ---------------------------------------------------------------------------
# vectorized block kernels (one row per path)
# ---------------------------------------------------------------------------

def evolve_radial_sq(beta: float, x0, dB: np.ndarray, dW_theta: np.ndarray,
                     dt: float, drift_factor: float = 1.0) -> np.ndarray:
    """Squared-radius scheme with the free planar part taken exactly.

    One step reads max(X, 0) and maps it to
    (sqrt(X) + dB)^2 + dW_theta^2 - 2*khat*dt: the quadratic part is the
    exact squared modulus of a free planar step (both driving components
    enter), so the reflecting boundary is handled without any truncation
    stickiness; only the bounded attraction drift is Euler.  The state is
    recorded unclamped (the drift term can push it slightly negative).

    x0 broadcasts over paths; dB and dW_theta are (n_paths, n_steps).
    Returns the state track (n_paths, n_steps + 1).
    """
    n_paths, n_steps = dB.shape
    a = math.sqrt(2.0 * beta)
    X = np.empty((n_paths, n_steps + 1))
    X[:, 0] = x0
    x = X[:, 0].copy()
    for m in range(n_steps):
        rho = np.sqrt(np.maximum(x, 0.0))
        kh = drift_factor * khat_ratio(a * rho)
        x = (np.square(rho + dB[:, m]) + np.square(dW_theta[:, m])
             - 2.0 * kh * dt)
        X[:, m + 1] = x
    return X


def evolve_angles(X: np.ndarray, dB: np.ndarray, dW_theta: np.ndarray,
                  restarts: np.ndarray, theta0, dt: float, threshold: float):
    """Angular track coupled to the radial-squared track X.

    Between zero hits the angle advances by the exact free-motion turn
    atan2(dW_theta, sqrt(X) + dB) (which reduces to the time-changed
    Gaussian increment dW_theta/sqrt(X) away from the origin); at each
    flagged hit (X <= threshold) the angle is re-drawn as 2*pi*restarts.
    Returns (theta, hits) with hits the (n_paths, n_steps + 1) flag array.
    """
    n_paths, n_steps = dW_theta.shape
    hits = X <= threshold
    theta = np.empty((n_paths, n_steps + 1))
    theta[:, 0] = np.where(hits[:, 0], TWO_PI * restarts[:, 0], theta0)
    for m in range(n_steps):
        rho = np.sqrt(np.maximum(X[:, m], 0.0))
        stepped = theta[:, m] + np.arctan2(dW_theta[:, m], rho + dB[:, m])
        theta[:, m + 1] = np.where(hits[:, m + 1],
                                   TWO_PI * restarts[:, m + 1], stepped)
    return theta, hits


def cartesian_noise(theta: np.ndarray, dB: np.ndarray,
                    dW_theta: np.ndarray) -> np.ndarray:
    """Driving planar Brownian increments of the relative motion.

    Rotates the (radial, angular) pair by the current angle:
    e^{i theta_m} (dB_m + i dW_theta_m).  A rotation of an isotropic
    Gaussian pair by an adapted angle, so itself a planar Brownian motion.
    """
    return np.exp(1j * theta[:, :-1]) * (dB + 1j * dW_theta)


# ---------------------------------------------------------------------------
# Path-producing front ends
# ---------------------------------------------------------------------------

def simulate_radial_sq(params: ModelParams, cfg: SimConfig, x0: float = 1.0,
                       path_index: int = 0) -> Path:
    """One path of the radial-squared diffusion (radial data only).

    The squared radius of a planar motion is driven by both planar noise
    components, so the tangential increments are consumed here too.
    """
    if x0 < 0.0:
        raise ValueError("x0 must be >= 0")
    M = cfg.n_steps
    dB = rng.normal_block(cfg.seed, path_index, 1, rng.CH_RADIAL, M,
                          math.sqrt(cfg.dt))
    dW = rng.normal_block(cfg.seed, path_index, 1, rng.CH_ANGULAR, M,
                          math.sqrt(cfg.dt))
    X = evolve_radial_sq(params.beta, x0, dB, dW, cfg.dt, cfg.drift_factor)
    if not np.all(np.isfinite(X)):
        raise FloatingPointError(f"non-finite radial state (seed={cfg.seed}, "
                                 f"path={path_index})")
    hits = np.where(X[0] <= cfg.threshold)[0]
    return Path(times=np.arange(M + 1) * cfg.dt, positions=None,
                radial_sq=X[0], theta=None,
                noise={"radial": dB[0], "angular": dW[0]},
                zero_hits=hits, params=params, config=cfg,
                path_index=path_index)


def simulate_relative_motion(params: ModelParams, cfg: SimConfig,
                             z0: complex = 0.0, path_index: int = 0) -> Path:
    """One path of the conditioned planar relative motion."""
    M = cfg.n_steps
    z0 = complex(z0)
    dB = rng.normal_block(cfg.seed, path_index, 1, rng.CH_RADIAL, M,
                          math.sqrt(cfg.dt))
    dW = rng.normal_block(cfg.seed, path_index, 1, rng.CH_ANGULAR, M,
                          math.sqrt(cfg.dt))
    restarts = rng.uniform_block(cfg.seed, path_index, 1, rng.CH_RESTART, M + 1)
    X = evolve_radial_sq(params.beta, abs(z0) ** 2, dB, dW, cfg.dt,
                         cfg.drift_factor)
    if not np.all(np.isfinite(X)):
        raise FloatingPointError(f"non-finite radial state (seed={cfg.seed}, "
                                 f"path={path_index})")
    theta, hitflags = evolve_angles(X, dB, dW, restarts, np.angle(z0), cfg.dt,
                                    cfg.threshold)
    pos = np.sqrt(np.maximum(X, 0.0)) * np.exp(1j * theta)
    cart = cartesian_noise(theta, dB, dW)
    return Path(times=np.arange(M + 1) * cfg.dt, positions=pos.T,
                radial_sq=X[0], theta=theta[0],
                noise={"radial": dB[0], "angular": dW[0],
                       "restart": restarts[0], "cartesian": cart[0]},
                zero_hits=np.where(hitflags[0])[0], params=params, config=cfg,
                path_index=path_index, rel_track=pos[0])


def assemble_one_delta(params: ModelParams, cfg: SimConfig, z0,
                       path_index: int = 0) -> Path:
    """The N-particle path: conditioned pair plus free Brownian particles.

    z0 is the array of N initial positions.  The relative track starts at
    (z0[high] - z0[low]) / sqrt(2); the centre track is an independent
    planar Brownian motion started at (z0[high] + z0[low]) / sqrt(2); every
    other particle is an exact Brownian path.
    """
    z0 = np.asarray(z0, dtype=complex)
    N = params.n_particles
    if z0.shape != (N,):
        raise ValueError(f"z0 must have shape ({N},), got {z0.shape}")
    hi, lo = params.edge
    rel0 = (z0[hi - 1] - z0[lo - 1]) / math.sqrt(2.0)
    com0 = (z0[hi - 1] + z0[lo - 1]) / math.sqrt(2.0)

    rel_path = simulate_relative_motion(params, cfg, rel0, path_index)
    M = cfg.n_steps
    dW_com = rng.complex_normal_block(cfg.seed, path_index, 1, rng.CH_COM, M,
                                      math.sqrt(cfg.dt))[0]
    com = com0 + np.concatenate([[0.0 + 0.0j], np.cumsum(dW_com)])

    positions = np.empty((M + 1, N), dtype=complex)
    rel = rel_path.rel_track
    positions[:, hi - 1] = (com + rel) / math.sqrt(2.0)
    positions[:, lo - 1] = (com - rel) / math.sqrt(2.0)
    noise = dict(rel_path.noise)
    noise["com"] = dW_com
    for k in range(1, N + 1):
        if k in (hi, lo):
            continue
        dW_k = rng.complex_normal_block(cfg.seed, path_index, 1,
                                        rng.free_channel(k), M,
                                        math.sqrt(cfg.dt))[0]
        positions[:, k - 1] = z0[k - 1] + np.concatenate(
            [[0.0 + 0.0j], np.cumsum(dW_k)])
        noise[f"free_{k}"] = dW_k

    return Path(times=rel_path.times, positions=positions,
                radial_sq=rel_path.radial_sq, theta=rel_path.theta,
                noise=noise, zero_hits=rel_path.zero_hits, params=params,
                config=cfg, path_index=path_index, rel_track=rel,
                com_track=com)


# ---------------------------------------------------------------------------
# derived tracks and pathwise functionals
# ---------------------------------------------------------------------------

def drift_cartesian(beta: float, z):
    """The singular drift vector of the relative motion at z != 0.

    Equals -khat_ratio(sqrt(2 beta)|z|) * z / |z|^2: anti-parallel to z with
    magnitude approaching sqrt(2 beta) far from the origin.
    """
    z_arr = np.asarray(z, dtype=complex)
    r = np.abs(z_arr)
    if np.any(r == 0.0):
        raise ValueError("drift undefined at the origin")
    a = math.sqrt(2.0 * beta)
    out = -khat_ratio(a * r) * z_arr / (r * r)
    return out if np.ndim(z) else complex(out)


def _check_pair(pair, n: int):
    hi, lo = pair
    if not (1 <= hi <= n and 1 <= lo <= n and hi != lo):
        raise ValueError(f"invalid particle pair {pair} for N={n}")


def relative_coords(path: Path, j_edge) -> np.ndarray:
    """Relative track (Z_high - Z_low)/sqrt(2) for an ordered pair.

    For the distinguished pair this is the stored track itself (exact);
    swapping the pair negates the track.
    """
    hi, lo = j_edge
    _check_pair(j_edge, path.params.n_particles)
    if (hi, lo) == path.params.edge:
        return path.rel_track.copy()
    if (lo, hi) == path.params.edge:
        return -path.rel_track
    if path.positions is None:
        raise ValueError("path carries no particle positions")
    return (path.positions[:, hi - 1] - path.positions[:, lo - 1]) / math.sqrt(2.0)


def edge_sigma_dot(j_edge, k_edge) -> int:
    """Dot product of the signed incidence vectors of two ordered pairs."""
    out = 0
    for sj, pj in ((1, j_edge[0]), (-1, j_edge[1])):
        for sk, pk in ((1, k_edge[0]), (-1, k_edge[1])):
            if pj == pk:
                out += sj * sk
    return out


def particle_noise(path: Path) -> np.ndarray:
    """Per-step planar Brownian increments of every particle, (M, N).

    The pair increments are rebuilt from the centre channel and the
    reconstructed Cartesian noise of the relative motion.
    """
    if path.positions is None or "cartesian" not in path.noise:
        raise ValueError("path does not retain the needed noise channels")
    M = len(path.times) - 1
    N = path.params.n_particles
    hi, lo = path.params.edge
    out = np.empty((M, N), dtype=complex)
    d_rel = path.noise["cartesian"]
    d_com = path.noise["com"]
    out[:, hi - 1] = (d_com + d_rel) / math.sqrt(2.0)
    out[:, lo - 1] = (d_com - d_rel) / math.sqrt(2.0)
    for k in range(1, N + 1):
        if k not in (hi, lo):
            out[:, k - 1] = path.noise[f"free_{k}"]
    return out


def realized_covariation(path: Path, j_edge, k_edge) -> tuple[float, float]:
    """Realized noise and radial-projection covariations of two pairs.

    Returns (UU, BB): UU sums products of the real noise components of the
    two relative motions; BB sums products of their radial projections
    (steps with a vanishing modulus are skipped).
    """
    _check_pair(j_edge, path.params.n_particles)
    _check_pair(k_edge, path.params.n_particles)
    dW = particle_noise(path)

    def edge_noise(edge):
        hi, lo = edge
        return (dW[:, hi - 1] - dW[:, lo - 1]) / math.sqrt(2.0)

    dWj, dWk = edge_noise(j_edge), edge_noise(k_edge)
    uu = float(np.sum(dWj.real * dWk.real))

    zj = relative_coords(path, j_edge)[:-1]
    zk = relative_coords(path, k_edge)[:-1]
    rj, rk = np.abs(zj), np.abs(zk)
    ok = (rj > 0.0) & (rk > 0.0)
    dBj = (zj.real * dWj.real + zj.imag * dWj.imag)[ok] / rj[ok]
    dBk = (zk.real * dWk.real + zk.imag * dWk.imag)[ok] / rk[ok]
    bb = float(np.sum(dBj * dBk))
    return uu, bb


def angle_cosine_integral(path: Path, j_edge, k_edge) -> float:
    """Time integral of cos(arg Z_j - arg Z_k) along the grid (left sums)."""
    zj = relative_coords(path, j_edge)[:-1]
    zk = relative_coords(path, k_edge)[:-1]
    ok = (np.abs(zj) > 0.0) & (np.abs(zk) > 0.0)
    dt = path.config.dt
    return float(np.sum(np.cos(np.angle(zj[ok]) - np.angle(zk[ok]))) * dt)


def ito_residual_radial_sq(path: Path, j_edge) -> float:
    """Discrete residual of the squared-modulus evolution of one pair.

    Terminal |Z_j|^2 minus initial value, accumulated drift
    2 - sigma_j.sigma_i * Re(Z_j/Z_i) * khat, and the martingale sum
    2(X dU + Y dV); normalized by the horizon.
    """
    _check_pair(j_edge, path.params.n_particles)
    params, cfg = path.params, path.config
    a = math.sqrt(2.0 * params.beta)
    sd = edge_sigma_dot(j_edge, params.edge)
    dW = particle_noise(path)
    hi, lo = j_edge
    dWj = (dW[:, hi - 1] - dW[:, lo - 1]) / math.sqrt(2.0)

    zj = relative_coords(path, j_edge)
    zi = relative_coords(path, params.edge)
    zj_l, zi_l = zj[:-1], zi[:-1]
    ri = np.abs(zi_l)
    ok = ri > 0.0
    cross = np.zeros(len(ri))
    cross[ok] = (np.real(zj_l[ok] / zi_l[ok])
                 * khat_ratio(a * ri[ok]))
    drift_sum = float(np.sum((2.0 - sd * cross) * cfg.dt))
    mart_sum = 2.0 * float(np.sum(zj_l.real * dWj.real + zj_l.imag * dWj.imag))
    resid = (abs(zj[-1]) ** 2 - abs(zj[0]) ** 2) - drift_sum - mart_sum
    return resid / cfg.t_end


# ---------------------------------------------------------------------------
# skew-product assembly and decomposition
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SkewProductConfig:
    """Index parameters of the radial/angular pair and the initial angle."""

    alpha_rho: float = 0.0
    alpha_theta: float = 0.0
    theta0: float = 0.0

    def __post_init__(self):
        for name in ("alpha_rho", "alpha_theta"):
            v = getattr(self, name)
            if not (0.0 <= v < 0.5):
                raise ValueError(f"{name} must lie in [0, 1/2)")


def skew_assemble_step(cfg: SkewProductConfig, rho: float, theta: float,
                       dW_rho: float, dW_theta: float, dA_rho: float,
                       dt: float) -> complex:
    """One explicit Euler increment of the planar skew-product dynamics.

    Combines the index-difference drift, the finite-variation radial term
    rotated to the current direction, and the direction-modulated noise
    e^{i theta}(dW_rho + i sqrt(1-2 alpha_theta) dW_theta).
    """
    if rho <= 0.0:
        raise ValueError("rho must be positive")
    z = rho * complex(math.cos(theta), math.sin(theta))
    zbar = z.conjugate()
    drift = ((1.0 - 2.0 * cfg.alpha_rho) - (1.0 - 2.0 * cfg.alpha_theta)) / (
        2.0 * zbar) * dt
    fv = (rho / zbar) * dA_rho
    noise = (complex(math.cos(theta), math.sin(theta))
             * complex(dW_rho, math.sqrt(1.0 - 2.0 * cfg.alpha_theta) * dW_theta))
    return drift + fv + noise


def decompose_skew(path: Path) -> tuple[np.ndarray, np.ndarray]:
    """Recover the radial and angular driving Brownian motions of a path.

    Projects the retained Cartesian noise onto the radial and tangential
    directions at each left grid point; flagged zero-hit steps contribute
    zero increments.  Returns cumulative tracks of length M + 1.
    """
    if "cartesian" not in path.noise:
        raise ValueError("path does not retain Cartesian noise increments")
    z = path.rel_track if path.rel_track is not None else path.positions[:, 0]
    dW = path.noise["cartesian"]
    M = len(dW)
    zl = z[:-1]
    r = np.abs(zl)
    skip = np.zeros(M, dtype=bool)
    skip[path.zero_hits[path.zero_hits < M]] = True
    ok = (~skip) & (r > 0.0)
    d_rho = np.zeros(M)
    d_theta = np.zeros(M)
    d_rho[ok] = (zl.real[ok] * dW.real[ok] + zl.imag[ok] * dW.imag[ok]) / r[ok]
    d_theta[ok] = (-zl.imag[ok] * dW.real[ok] + zl.real[ok] * dW.imag[ok]) / r[ok]
    w_rho = np.concatenate([[0.0], np.cumsum(d_rho)])
    w_theta = np.concatenate([[0.0], np.cumsum(d_theta)])
    return w_rho, w_theta


def reassemble_from_skew(path: Path) -> tuple[np.ndarray, int]:
    """Rebuild the relative path from its decomposed driving noises.

    Sums skew-product Euler increments with the conditioned radial
    finite-variation term, feeding the noises recovered by decompose_skew;
    step coefficients are read off the reference path (a replay, so scheme
    differences accumulate additively instead of compounding).  Stops at
    the first flagged zero hit, where the decomposition is not defined.
    Returns (track, n_valid_steps); the rebuilt positions agree with the
    original to O(sqrt(dt * T)).
    """
    beta = path.params.beta
    dt = path.config.dt
    a = math.sqrt(2.0 * beta)
    w_rho, w_theta = decompose_skew(path)
    d_rho = np.diff(w_rho)
    d_theta = np.diff(w_theta)
    z = path.rel_track if path.rel_track is not None else path.positions[:, 0]
    first_hit = int(path.zero_hits[0]) if len(path.zero_hits) else len(z) - 1
    cfg = SkewProductConfig(theta0=float(np.angle(z[0])))
    out = np.empty(first_hit + 1, dtype=complex)
    out[0] = z[0]
    cur = complex(z[0])
    for m in range(first_hit):
        rho = abs(z[m])
        theta = math.atan2(z[m].imag, z[m].real)
        dA = -khat_ratio(a * rho) / rho * dt
        cur = cur + skew_assemble_step(cfg, rho, theta, d_rho[m], d_theta[m],
                                       dA, dt)
        out[m + 1] = cur
    return out, first_hit


# ---------------------------------------------------------------------------
# comparison run against the free squared-modulus diffusion
# ---------------------------------------------------------------------------

def comparison_domination_run(params: ModelParams, cfg: SimConfig,
                              x0: float = 1.0) -> tuple[int, np.ndarray]:
    """Couple the conditioned and free radial-squared schemes on shared noise.

    Both paths read the same Brownian increments; the free path drops the
    attraction term (drift exactly 2 dt).  Returns (n_violations, gap)
    where a violation is any grid point with X > X_free and gap is the
    terminal X_free - X across paths.
    """
    M = cfg.n_steps
    violations = 0
    gaps = np.empty(cfg.n_paths)
    block = 4096
    a = math.sqrt(2.0 * params.beta)
    for first in range(0, cfg.n_paths, block):
        n = min(block, cfg.n_paths - first)
        dB = rng.normal_block(cfg.seed, first, n, rng.CH_RADIAL, M,
                              math.sqrt(cfg.dt))
        dW = rng.normal_block(cfg.seed, first, n, rng.CH_ANGULAR, M,
                              math.sqrt(cfg.dt))
        x = np.full(n, float(x0))
        xf = np.full(n, float(x0))
        for m in range(M):
            rho = np.sqrt(np.maximum(x, 0.0))
            rho_f = np.sqrt(np.maximum(xf, 0.0))
            quad_part = np.square(dW[:, m])
            x = (np.square(rho + dB[:, m]) + quad_part
                 - 2.0 * cfg.drift_factor * khat_ratio(a * rho) * cfg.dt)
            xf = np.square(rho_f + dB[:, m]) + quad_part
            violations += int(np.count_nonzero(x > xf))
        gaps[first:first + n] = xf - x
    return violations, gaps
