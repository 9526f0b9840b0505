"""Panel-based Gauss-Legendre quadrature with doubling refinement.

The kernel evaluators need three things that a generic adaptive routine does
not give cheaply: vectorization over whole batches of evaluation points,
explicit substitutions for endpoint singularities, and a hard failure mode
when a tolerance cannot be met within a subdivision budget.  This module
provides the shared machinery: cached Gauss-Legendre rules, panel
constructors (uniform, power-graded, geometric), and ``refine`` which doubles
the panel count until successive values agree to the configured tolerance.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np


class QuadratureConvergenceError(RuntimeError):
    """Raised when doubling refinement hits max_depth without converging."""


@dataclass(frozen=True)
class QuadConfig:
    """Tolerances and mesh policy for the kernel evaluators.

    rel_tol/abs_tol bound the accepted change between successive panel
    doublings; max_depth bounds the number of doublings; grading_exponent is
    the power used for meshes graded into integrable endpoint singularities.
    """

    rel_tol: float = 1e-9
    abs_tol: float = 1e-13
    max_depth: int = 7
    grading_exponent: float = 3.0

    def __post_init__(self):
        if not (0.0 < self.rel_tol < 1.0 and 0.0 < self.abs_tol < 1.0):
            raise ValueError("rel_tol and abs_tol must lie in (0, 1)")
        if self.max_depth < 4:
            raise ValueError("max_depth must be >= 4")
        if self.grading_exponent < 1.0:
            raise ValueError("grading_exponent must be >= 1")


DEFAULT_QUAD = QuadConfig()


@lru_cache(maxsize=32)
def _gl_rule(order: int):
    x, w = np.polynomial.legendre.leggauss(order)
    return x, w


def panel_rule(edges: np.ndarray, order: int = 12):
    """Nodes and weights of composite Gauss-Legendre over given panel edges.

    ``edges`` is a 1-d increasing array of m+1 panel boundaries; returns
    (nodes, weights) each of length m*order.
    """
    x, w = _gl_rule(order)
    a = edges[:-1]
    h = np.diff(edges)
    nodes = (a[:, None] + 0.5 * h[:, None] * (x[None, :] + 1.0)).ravel()
    weights = (0.5 * h[:, None] * w[None, :]).ravel()
    return nodes, weights


def uniform_edges(a: float, b: float, n: int) -> np.ndarray:
    return np.linspace(a, b, n + 1)


def graded_edges(a: float, b: float, n: int, gamma: float, side: str = "left") -> np.ndarray:
    """Power-graded panel edges clustering toward one endpoint."""
    u = np.linspace(0.0, 1.0, n + 1) ** gamma
    if side == "left":
        return a + (b - a) * u
    if side == "right":
        return b - (b - a) * u[::-1]
    raise ValueError("side must be 'left' or 'right'")


def geometric_edges(a: float, b: float, n: int) -> np.ndarray:
    """Geometrically spaced edges on (a, b), a > 0."""
    if a <= 0:
        raise ValueError("geometric_edges needs a > 0")
    return np.geomspace(a, b, n + 1)


def refine(evaluate, cfg: QuadConfig, what: str = "integral"):
    """Call ``evaluate(depth)`` for depth = 0, 1, ... until stable.

    ``evaluate`` must return a float or ndarray computed with 2**depth times
    the base panel density.  Convergence means elementwise
    |v_d - v_{d-1}| <= abs_tol + rel_tol*|v_d|.  Raises
    QuadratureConvergenceError past cfg.max_depth.
    """
    prev = None
    for depth in range(cfg.max_depth + 1):
        val = evaluate(depth)
        if prev is not None:
            err = np.abs(np.asarray(val) - np.asarray(prev))
            tol = cfg.abs_tol + cfg.rel_tol * np.abs(np.asarray(val))
            if np.all(err <= tol):
                return val
        prev = val
    raise QuadratureConvergenceError(
        f"{what}: no convergence to rel_tol={cfg.rel_tol:g}/abs_tol={cfg.abs_tol:g} "
        f"within {cfg.max_depth} doublings")
