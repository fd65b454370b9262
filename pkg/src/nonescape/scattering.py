"""Regular and Jost solutions of the radial equation for finite-range
potentials.

The regular solution u_k solves

    -u'' + V(r) u = k^2 u,     u(0) = 0, u'(0) = 1,

integrated exactly: within each constant-potential piece the propagation is
the closed-form trig/hyperbolic transfer map, and each delta shell imposes
the exact derivative jump u'(a+) - u'(a-) = lambda * u(a).  Beyond
``range_a`` the potential vanishes, so

    f(k) = e^{i k a} (u'(a) - i k u(a))

is the Jost function (f = 1 for the free potential).  Its value at k = 0
diagnoses zero-energy resonances, its zeros on the positive imaginary axis
are bound states, and its zeros in the lower half plane are resonance
poles.  The completeness-normalized continuum eigenfunction is

    psi_k(r) = k u_k(r) / |f(k)|,   (2/pi) int psi_k psi_k' dr = delta(k-k').
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import brentq

from .errors import DegenerateStateError, DomainError, NotBracketedError
from .model import (
    InitialState,
    Potential,
    Profile,
    RadialGrid,
    SumProfile,
    gauss_panels,
    profile_norm,
    state_from_profile,
)

__all__ = [
    "RadialSolution",
    "solve_radial",
    "jost_function",
    "JostData",
    "regular_solution",
    "jost_at_zero",
    "find_zero_energy_coupling",
    "BoundState",
    "find_bound_states",
    "project_out_bound_states",
    "ResonancePole",
    "PoleSearchResult",
    "find_resonance_poles",
]

_EVAL_CHUNK = 2_000_000  # max complex entries materialized per eval block


def _cos_sinc(z2: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """cos(z) and sin(z)/z as even functions of z given z^2 (complex-safe)."""
    z2 = np.asarray(z2, dtype=complex)
    z = np.sqrt(z2)
    small = np.abs(z) < 1e-5
    c = np.cos(z)
    denom = np.where(small, 1.0, z)
    s = np.where(small, 1.0 - z2 / 6.0 + z2 * z2 / 120.0, np.sin(z) / denom)
    return c, s


@dataclass(frozen=True)
class RadialSolution:
    """Regular solution marched through the potential, vectorized over k.

    Stores (u, u') at every potential breakpoint (values after the shell
    jump at that radius).  ``eval`` reconstructs u at arbitrary r by exact
    in-piece propagation, so the solution is available everywhere, not just
    on a grid.
    """

    potential: Potential
    k: np.ndarray                 # complex, shape (nk,)
    edges: np.ndarray             # breakpoints incl. 0 and range_a
    piece_v: np.ndarray           # constant V per piece, len(edges) - 1
    u_edges: np.ndarray           # (n_edges, nk)
    up_edges: np.ndarray          # (n_edges, nk)

    @property
    def range_a(self) -> float:
        return float(self.edges[-1])

    def exterior_state(self) -> tuple[np.ndarray, np.ndarray]:
        return self.u_edges[-1], self.up_edges[-1]

    def jost(self) -> np.ndarray:
        u, up = self.exterior_state()
        r_e = self.range_a
        return np.exp(1j * self.k * r_e) * (up - 1j * self.k * u)

    def _piece_index(self, r: np.ndarray) -> np.ndarray:
        idx = np.searchsorted(self.edges, r, side="right") - 1
        return np.clip(idx, 0, len(self.edges) - 1)

    def eval(self, r: np.ndarray, out: np.ndarray | None = None) -> np.ndarray:
        """u(r) for every k; result has shape (nk, nr)."""
        r = np.asarray(r, dtype=float)
        nk, nr = self.k.size, r.size
        if out is None:
            out = np.empty((nk, nr), dtype=complex)
        k2 = self.k * self.k
        idx = self._piece_index(r)
        n_pieces = len(self.edges) - 1
        for i in range(n_pieces + 1):
            mask = idx == i
            if not mask.any():
                continue
            v = self.piece_v[i] if i < n_pieces else 0.0
            d = r[mask] - self.edges[min(i, n_pieces)]
            u0 = self.u_edges[min(i, n_pieces)]
            up0 = self.up_edges[min(i, n_pieces)]
            k2mv = k2 - v
            # chunk over k to bound transient memory
            cols = int(mask.sum())
            step = max(1, _EVAL_CHUNK // max(cols, 1))
            for lo in range(0, nk, step):
                hi = min(lo + step, nk)
                z2 = k2mv[lo:hi, None] * (d * d)[None, :]
                c, s = _cos_sinc(z2)
                out[lo:hi, mask] = (c * u0[lo:hi, None]
                                    + (d[None, :] * s) * up0[lo:hi, None])
        return out

    def eval_weighted(self, r: np.ndarray, weighted_values: np.ndarray) -> np.ndarray:
        """sum_j u(k, r_j) * weighted_values[j], chunked; shape (nk,)."""
        r = np.asarray(r, dtype=float)
        nk = self.k.size
        acc = np.zeros(nk, dtype=complex)
        k2 = self.k * self.k
        idx = self._piece_index(r)
        n_pieces = len(self.edges) - 1
        for i in range(n_pieces + 1):
            mask = idx == i
            if not mask.any():
                continue
            v = self.piece_v[i] if i < n_pieces else 0.0
            d = r[mask] - self.edges[min(i, n_pieces)]
            g = weighted_values[mask]
            u0 = self.u_edges[min(i, n_pieces)]
            up0 = self.up_edges[min(i, n_pieces)]
            k2mv = k2 - v
            cols = int(mask.sum())
            step = max(1, _EVAL_CHUNK // max(cols, 1))
            for lo in range(0, nk, step):
                hi = min(lo + step, nk)
                z2 = k2mv[lo:hi, None] * (d * d)[None, :]
                c, s = _cos_sinc(z2)
                acc[lo:hi] += (c * u0[lo:hi, None]) @ g \
                    + ((d[None, :] * s) * up0[lo:hi, None]) @ g
        return acc


def solve_radial(potential: Potential, k: np.ndarray | complex) -> RadialSolution:
    """March the regular solution through all pieces and shells of the
    potential for an array of (possibly complex) momenta."""
    k = np.atleast_1d(np.asarray(k, dtype=complex))
    k2 = k * k
    edges = potential.breakpoints()
    n_pieces = len(edges) - 1
    piece_v = np.zeros(n_pieces)
    for i in range(n_pieces):
        mid = 0.5 * (edges[i] + edges[i + 1])
        piece_v[i] = float(potential.v_of(np.array([mid]))[0])
    shell_lam = np.zeros(len(edges))
    for (r_s, lam) in potential.shells:
        j = int(np.argmin(np.abs(edges - r_s)))
        shell_lam[j] += lam

    u = np.zeros_like(k2)
    up = np.ones_like(k2)
    u_edges = [u]
    up_edges = [up]
    for i in range(n_pieces):
        d = edges[i + 1] - edges[i]
        k2mv = k2 - piece_v[i]
        c, s = _cos_sinc(k2mv * d * d)
        u_new = c * u + d * s * up
        up_new = -k2mv * d * s * u + c * up
        up_new = up_new + shell_lam[i + 1] * u_new
        u, up = u_new, up_new
        u_edges.append(u)
        up_edges.append(up)
    return RadialSolution(potential=potential, k=k, edges=edges, piece_v=piece_v,
                          u_edges=np.array(u_edges), up_edges=np.array(up_edges))


def jost_function(potential: Potential, k: np.ndarray | complex) -> np.ndarray:
    """Jost function f(k) for an array of real or complex momenta."""
    return solve_radial(potential, k).jost()


# ---------------------------------------------------------------------------
# Scattering data at real momentum
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class JostData:
    """Scattering data at one real momentum k > 0.

    f0 is the Jost function (f0 = 1 for the free potential), phase_shift
    the s-wave phase delta(k) = -arg f(k), and regular_solution holds the
    completeness-normalized psi_k = k u_k / |f(k)| on ``grid``.
    s_matrix = f(-k)/f(k) lies on the unit circle for real potentials.
    """

    k: float
    f0: complex
    phase_shift: float
    regular_solution: np.ndarray
    grid: RadialGrid
    s_matrix: complex


def regular_solution(potential: Potential, k: float, grid: RadialGrid) -> JostData:
    """Scattering solution at real k > 0 with Jost data extracted at range_a."""
    if not k > 0:
        raise DomainError(f"k (={k}) must be positive; use jost_at_zero for k = 0")
    sol = solve_radial(potential, np.array([k, -k], dtype=complex))
    f_plus, f_minus = sol.jost()
    psi = (k * sol.eval(grid.r)[0] / abs(f_plus)).real
    return JostData(k=float(k), f0=complex(f_plus),
                    phase_shift=float(-np.angle(f_plus)),
                    regular_solution=psi, grid=grid,
                    s_matrix=complex(f_minus / f_plus))


def jost_at_zero(potential: Potential) -> float:
    """f(0): slope u'(r) of the zero-energy regular solution beyond range_a.

    f(0) = 0 signals a zero-energy resonance; for a single delta shell
    f(0) = 1 + lambda * a.
    """
    sol = solve_radial(potential, np.array([0.0], dtype=complex))
    _u, up = sol.exterior_state()
    return float(up[0].real)


def find_zero_energy_coupling(family: Callable[[float], Potential],
                              bracket: tuple[float, float]) -> float:
    """Coupling lambda* with f(0) = 0, refined inside a sign-changing bracket."""
    lo, hi = float(bracket[0]), float(bracket[1])
    g = lambda lam: jost_at_zero(family(lam))
    g_lo, g_hi = g(lo), g(hi)
    if g_lo == 0.0:
        return lo
    if g_hi == 0.0:
        return hi
    if g_lo * g_hi > 0:
        raise NotBracketedError(
            f"jost_at_zero has the same sign at both ends of [{lo}, {hi}] "
            f"({g_lo:.3e}, {g_hi:.3e})")
    lam = brentq(g, lo, hi, xtol=1e-14, rtol=8.9e-16)
    # Newton polish keeps |f(0)| at the 1e-12 level even for flat families
    for _ in range(3):
        val = g(lam)
        if abs(val) < 1e-13:
            break
        h = 1e-7 * max(1.0, abs(lam))
        der = (g(lam + h) - g(lam - h)) / (2 * h)
        if der == 0:
            break
        lam -= val / der
    if abs(g(lam)) >= 1e-12:
        raise NotBracketedError(
            f"root refinement stalled at lambda={lam} with |f(0)|={abs(g(lam)):.3e}")
    return float(lam)


# ---------------------------------------------------------------------------
# Bound states
# ---------------------------------------------------------------------------

class PiecewiseProfile(Profile):
    """Bound-state wave function as an analytic radial profile: exact
    transfer solution inside range_a, pure e^{-kappa r} tail outside,
    normalized to unit L2 norm including the analytic tail."""

    def __init__(self, potential: Potential, kappa: float):
        self.potential = potential
        self.kappa = float(kappa)
        self._sol = solve_radial(potential, np.array([1j * kappa]))
        u_e, up_e = self._sol.exterior_state()
        self._u_e = float(u_e[0].real)
        r_e = potential.range_a
        # interior norm by Gauss panels split at the potential breakpoints
        rq, wq = gauss_panels(list(potential.breakpoints()), 24,
                              max_width=max(r_e / 4, 0.25))
        interior = float((wq * self._sol.eval(rq)[0].real ** 2).sum())
        tail = self._u_e ** 2 / (2.0 * self.kappa)
        self._norm = math.sqrt(interior + tail)
        self._r_cut = r_e + 20.0 / self.kappa

    @property
    def support_R(self) -> float:
        return self._r_cut

    def breakpoints(self) -> tuple[float, ...]:
        return tuple(self.potential.breakpoints()) + (self._r_cut,)

    def __call__(self, r: np.ndarray) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        r_e = self.potential.range_a
        out = np.empty_like(r)
        inside = r <= r_e
        if inside.any():
            out[inside] = self._sol.eval(r[inside])[0].real
        outside = ~inside
        if outside.any():
            out[outside] = self._u_e * np.exp(-self.kappa * (r[outside] - r_e))
        return out / self._norm

    def k_bound(self, tail_mass_tol: float) -> float:
        jump = 0.0
        for (r_s, lam) in self.potential.shells:
            jump = max(jump, abs(lam) * abs(float(self(np.array([r_s]))[0])))
        k3 = (jump * jump / (3.0 * math.pi * max(tail_mass_tol, 1e-300))) ** (1.0 / 3.0)
        return max(10.0 * self.kappa, 10.0 / self.potential.range_a, k3)

    def exterior_overlap_closed_form(self, sol: RadialSolution) -> np.ndarray:
        """int_{range_a}^inf u_k(r) u_b(r) dr in closed form, for every k of
        ``sol``: outside both are free, so the integral is elementary."""
        u_e, up_e = sol.exterior_state()
        k2 = sol.k * sol.k
        return (self._u_e / self._norm) * (self.kappa * u_e + up_e) / (k2 + self.kappa ** 2)


@dataclass(frozen=True)
class BoundState:
    """Bound state at energy -kappa^2 with unit-norm wave function."""

    kappa: float
    energy: float
    wavefunction: np.ndarray
    grid: RadialGrid
    profile: PiecewiseProfile


def find_bound_states(potential: Potential, kappa_max: float | None = None,
                      grid: RadialGrid | None = None) -> list[BoundState]:
    """All Jost zeros on the positive imaginary axis with kappa <= kappa_max.

    Scans h(kappa) = u'(a) + kappa u(a)  (equal to e^{+kappa a} f(i kappa),
    same zeros, no underflowing prefactor) on a geometric kappa grid and
    refines each sign change by Brent iteration.
    """
    if kappa_max is None:
        kappa_max = 50.0 / potential.range_a
    if not kappa_max > 0:
        raise DomainError(f"kappa_max (={kappa_max}) must be positive")
    if grid is None:
        grid = RadialGrid(max(4.0 * potential.range_a, 8.0), 4001)

    def h(kappa: float) -> float:
        sol = solve_radial(potential, np.array([1j * kappa]))
        u, up = sol.exterior_state()
        return float((up[0] + kappa * u[0]).real)

    kappas = np.geomspace(1e-6 / potential.range_a, kappa_max, 400)
    vals = np.empty_like(kappas)
    sol = solve_radial(potential, 1j * kappas)
    u_e, up_e = sol.exterior_state()
    vals = (up_e + kappas * u_e).real

    states: list[BoundState] = []
    for i in range(len(kappas) - 1):
        a, b = vals[i], vals[i + 1]
        if a == 0.0 or a * b >= 0:
            continue
        kappa_b = brentq(h, kappas[i], kappas[i + 1], xtol=1e-15, rtol=8.9e-16)
        f_val = abs(jost_function(potential, np.array([1j * kappa_b]))[0])
        if not f_val < 1e-12:
            raise FloatingPointError(
                f"bound-state refinement left |f(i kappa)| = {f_val:.3e}")
        prof = PiecewiseProfile(potential, kappa_b)
        states.append(BoundState(kappa=float(kappa_b), energy=-float(kappa_b) ** 2,
                                 wavefunction=prof(grid.r), grid=grid, profile=prof))
    states.sort(key=lambda s: s.energy)
    return states


def _overlap_quadrature(profiles: Sequence[Profile]) -> tuple[np.ndarray, np.ndarray]:
    breaks = sorted({0.0, *(b for p in profiles for b in p.breakpoints()),
                     *(p.support_R for p in profiles)})
    return gauss_panels(breaks, 16, max_width=1.0)


def project_out_bound_states(state: InitialState,
                             bound: Sequence[BoundState]) -> InitialState:
    """Remove every bound-state component and renormalize.

    Raises DegenerateStateError when the projection annihilates the state.
    """
    if not bound:
        return state
    rq, wq = _overlap_quadrature([state.profile] + [b.profile for b in bound])
    psi = state.profile(rq)
    terms: list[tuple[complex, Profile]] = [(1.0 + 0.0j, state.profile)]
    residual = psi.astype(complex)
    for b in bound:
        ub = b.profile(rq)
        beta = complex((wq * ub * residual).sum())
        residual = residual - beta * ub
        terms.append((-beta, b.profile))
    res_norm = math.sqrt(abs(float(np.real((wq * np.abs(residual) ** 2).sum()))))
    if res_norm < 1e-8:
        raise DegenerateStateError(
            f"projection annihilated the state (residual norm {res_norm:.3e})")
    combined = SumProfile(tuple((c / res_norm, p) for (c, p) in terms))
    # enlarge the grid when the exponential bound-state tails extend past it
    grid = state.grid
    if combined.support_R > grid.r_max:
        spacing = max(grid.spacing, combined.support_R / 20000)
        n = int(math.ceil(combined.support_R * 1.02 / spacing)) + 1
        grid = RadialGrid(combined.support_R * 1.02, n)
    return state_from_profile(combined, grid, state.label + "+projected",
                              renormalize=True)


# ---------------------------------------------------------------------------
# Resonance poles: argument-principle count + Newton refinement
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ResonancePole:
    """Zero of the analytically continued Jost function, Im k < 0."""

    k_pole: complex
    order: int
    f_abs: float


@dataclass(frozen=True)
class PoleSearchResult:
    poles: tuple[ResonancePole, ...]
    total_count: int
    converged: bool
    message: str

    def __iter__(self):
        return iter(self.poles)

    def __len__(self):
        return len(self.poles)


def _winding_number(potential: Potential, box: tuple[float, float, float, float],
                    n_init: int = 48, max_rounds: int = 14) -> int:
    """Number of Jost zeros inside the rectangle via the argument principle."""
    re_lo, re_hi, im_lo, im_hi = box
    corners = [complex(re_lo, im_lo), complex(re_hi, im_lo),
               complex(re_hi, im_hi), complex(re_lo, im_hi),
               complex(re_lo, im_lo)]
    pts: list[complex] = []
    for a, b in zip(corners[:-1], corners[1:]):
        ts = np.linspace(0, 1, n_init, endpoint=False)
        pts.extend(a + (b - a) * ts)
    pts.append(corners[0])
    z = np.array(pts)
    fv = jost_function(potential, z)
    for _ in range(max_rounds):
        args = np.angle(fv)
        d = np.diff(args)
        d = (d + math.pi) % (2 * math.pi) - math.pi
        bad = np.abs(d) > 0.8
        if not bad.any():
            break
        mids = 0.5 * (z[:-1][bad] + z[1:][bad])
        f_mid = jost_function(potential, mids)
        z_new: list[complex] = []
        f_new: list[complex] = []
        j = 0
        for i in range(len(z) - 1):
            z_new.append(z[i])
            f_new.append(fv[i])
            if bad[i]:
                z_new.append(mids[j])
                f_new.append(f_mid[j])
                j += 1
        z_new.append(z[-1])
        f_new.append(fv[-1])
        z = np.array(z_new)
        fv = np.array(f_new)
    args = np.angle(fv)
    d = np.diff(args)
    d = (d + math.pi) % (2 * math.pi) - math.pi
    w = d.sum() / (2 * math.pi)
    return int(round(w))


def _newton_zero(potential: Potential, k0: complex, tol: float = 1e-11,
                 max_iter: int = 80) -> complex | None:
    k = k0
    for _ in range(max_iter):
        h = 1e-7 * max(1.0, abs(k))
        trio = jost_function(potential, np.array([k, k + h, k - h]))
        f, fp, fm = trio
        if abs(f) < tol:
            return k
        der = (fp - fm) / (2 * h)
        if der == 0 or not np.isfinite(der):
            return None
        step = f / der
        if abs(step) > 5.0:
            return None
        k = k - step
    return k if abs(jost_function(potential, np.array([k]))[0]) < tol else None


def find_resonance_poles(potential: Potential,
                         search_box: tuple[float, float, float, float],
                         n_max: int = 8) -> PoleSearchResult:
    """Locate up to n_max Jost zeros in a lower-half-plane rectangle.

    search_box = (re_lo, re_hi, im_lo, im_hi).  The rectangle boundary is
    walked for an argument-principle zero count; boxes are subdivided until
    they isolate single zeros, which seed damped Newton iterations.
    """
    re_lo, re_hi, im_lo, im_hi = map(float, search_box)
    if not (re_lo < re_hi and im_lo < im_hi):
        raise DomainError("search box must have positive extent")
    if im_hi > 0:
        raise DomainError("search box must lie in the lower half plane (Im k < 0)")

    total = _winding_number(potential, (re_lo, re_hi, im_lo, im_hi))
    if total <= 0:
        return PoleSearchResult((), 0, True, "no zeros in box")

    found: list[tuple[complex, float]] = []
    boxes: list[tuple[tuple[float, float, float, float], int, int]] = [
        ((re_lo, re_hi, im_lo, im_hi), total, 0)]
    while boxes:
        box, count, depth = boxes.pop()
        if count <= 0:
            continue
        b_re_lo, b_re_hi, b_im_lo, b_im_hi = box
        center = complex(0.5 * (b_re_lo + b_re_hi), 0.5 * (b_im_lo + b_im_hi))
        if count == 1 or depth >= 12:
            root = _newton_zero(potential, center)
            if root is not None and (re_lo - 1e-6 <= root.real <= re_hi + 1e-6
                                     and im_lo - 1e-6 <= root.imag <= min(im_hi, 0.0) + 1e-6):
                found.append((root, abs(jost_function(potential, np.array([root]))[0])))
                if count == 1:
                    continue
            if depth >= 12:
                continue
        rm = 0.5 * (b_re_lo + b_re_hi)
        im = 0.5 * (b_im_lo + b_im_hi)
        for sub in ((b_re_lo, rm, b_im_lo, im), (rm, b_re_hi, b_im_lo, im),
                    (b_re_lo, rm, im, b_im_hi), (rm, b_re_hi, im, b_im_hi)):
            c = _winding_number(potential, sub)
            if c > 0:
                boxes.append((sub, c, depth + 1))

    # deduplicate: poles within 1e-8 merge, keeping the better refinement
    found.sort(key=lambda p: (p[0].real, p[0].imag))
    unique: list[tuple[complex, float]] = []
    for (k, fa) in found:
        for j, (k0, fa0) in enumerate(unique):
            if abs(k - k0) < 1e-8:
                if fa < fa0:
                    unique[j] = (k, fa)
                break
        else:
            unique.append((k, fa))
    unique = [p for p in unique if p[0].imag < 0]
    unique.sort(key=lambda p: p[0].real)
    poles = tuple(ResonancePole(k_pole=k, order=1, f_abs=fa)
                  for (k, fa) in unique[:n_max])
    converged = len(unique) >= min(total, n_max)
    msg = "ok" if converged else (
        f"argument principle counts {total} zeros but Newton converged on "
        f"{len(unique)}")
    return PoleSearchResult(poles, total, converged, msg)
