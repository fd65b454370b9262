"""Oscillation-aware quadrature building blocks for integrals of the form

    int_0^{k_max} A(k) e^{-i k^2 t} dk

evaluated at fixed t.  Two complementary panel families are used:

* a bottom region [0, k_gl] of Gauss-Legendre panels whose edges are
  equally spaced in E = k^2, so the phase advance per panel is capped at a
  fixed fraction of pi up to a declared t_max (panel count grows linearly
  with t_max: this is the quadrature budget);

* a Filon region [k_gl, k_max] parametrized by E = k^2, where the phase is
  exactly linear.  Per panel the smooth amplitude B(E) = A(sqrt(E))/(2 sqrt E)
  is expanded in Legendre polynomials and the oscillatory moments

      int_{-1}^{1} P_n(x) e^{-i beta x} dx = 2 (-i)^n j_n(beta)

  are evaluated with spherical Bessel functions, exactly for every t.
  Panel widths are therefore set by amplitude smoothness alone, never by t.
"""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np
from scipy.special import spherical_jn

from .errors import QuadratureBudgetError

__all__ = [
    "gauss_nodes",
    "legendre_matrix",
    "legendre_projection",
    "filon_moments",
    "gl_bottom_edges",
    "seed_filon_edges",
]


@lru_cache(maxsize=32)
def gauss_nodes(n: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(n)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


@lru_cache(maxsize=32)
def legendre_matrix(n_deg: int, n_nodes: int) -> np.ndarray:
    """P[n, i] = P_n(x_i) at the n_nodes Gauss-Legendre abscissae."""
    x, _w = gauss_nodes(n_nodes)
    P = np.empty((n_deg, n_nodes))
    P[0] = 1.0
    if n_deg > 1:
        P[1] = x
    for n in range(1, n_deg - 1):
        P[n + 1] = ((2 * n + 1) * x * P[n] - n * P[n - 1]) / (n + 1)
    P.setflags(write=False)
    return P


@lru_cache(maxsize=32)
def legendre_projection(n_nodes: int) -> np.ndarray:
    """proj[n, i] mapping node values to Legendre coefficients a_n,
    exact for polynomials representable at this node count."""
    _x, w = gauss_nodes(n_nodes)
    P = legendre_matrix(n_nodes, n_nodes)
    ns = np.arange(n_nodes)
    proj = (ns[:, None] + 0.5) * (P * w[None, :])
    proj.setflags(write=False)
    return proj


def filon_moments(n_deg: int, betas: np.ndarray) -> np.ndarray:
    """M[n, p] = int_{-1}^1 P_n(x) e^{-i beta_p x} dx = 2 (-i)^n j_n(beta_p)."""
    betas = np.atleast_1d(np.asarray(betas, dtype=float))
    ns = np.arange(n_deg)
    jn = spherical_jn(ns[:, None], betas[None, :])
    return 2.0 * (-1j) ** ns[:, None] * jn


def gl_bottom_edges(e_top: float, t_max: float, phase_cap: float,
                    budget: int) -> np.ndarray:
    """Equal-E panel edges on [0, e_top]: phase advance per panel is
    e_top * t_max / N <= phase_cap.  Raises QuadratureBudgetError when more
    than ``budget`` panels would be required."""
    if e_top <= 0:
        return np.array([0.0])
    n = max(1, math.ceil(e_top * t_max / phase_cap))
    if n > budget:
        t_ok = budget * phase_cap / e_top
        raise QuadratureBudgetError(
            f"t_max={t_max:g} needs {n} oscillation panels below k={math.sqrt(e_top):g} "
            f"(budget {budget}); largest supported t_max is {t_ok:g}",
            max_reliable_t=t_ok)
    return np.linspace(0.0, e_top, n + 1)


def seed_filon_edges(e_lo: float, e_max: float, w_k: float) -> np.ndarray:
    """Initial Filon panel edges in E: geometric ramp away from the GL
    seam, crossing over to uniform-in-k panels of width w_k."""
    if e_max <= e_lo:
        return np.array([e_lo])
    edges = [e_lo]
    e = e_lo
    while e < e_max:
        nxt = min(4.0 * e, (math.sqrt(e) + w_k) ** 2)
        if nxt <= e * (1 + 1e-12):
            nxt = e * 1.5
        e = min(nxt, e_max)
        edges.append(e)
    return np.array(edges)
