"""Finite-range radial potentials, uniform grids, and initial wave packets.

Conventions (used everywhere in this package): units with hbar = 2m = 1,
so the reduced s-wave radial equation on the half line r in [0, inf) is

    -u''(r) + V(r) u(r) = k^2 u(r),        u(0) = 0,

energies are E = k^2 and time evolution multiplies each continuum mode by
exp(-i k^2 t).  Potentials are piecewise constant plus delta shells
lambda * delta(r - a) and vanish identically beyond ``range_a``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

from .errors import DomainError

__all__ = [
    "RadialGrid",
    "Potential",
    "build_delta_shell",
    "free_potential",
    "SineBox",
    "GaussianBump",
    "InitialState",
    "build_initial_state",
    "state_from_profile",
    "Profile",
    "SineBoxProfile",
    "GaussianBumpProfile",
    "SumProfile",
    "gauss_panels",
    "profile_norm",
]


# ---------------------------------------------------------------------------
# Quadrature helpers shared by model-level constructions
# ---------------------------------------------------------------------------

def gauss_panels(breaks: Sequence[float], nodes_per_panel: int = 16,
                 max_width: float | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Composite Gauss-Legendre nodes/weights over consecutive intervals.

    ``breaks`` is an increasing sequence of interval endpoints; intervals are
    optionally subdivided so no panel exceeds ``max_width``.
    """
    x, w = np.polynomial.legendre.leggauss(nodes_per_panel)
    xs, ws = [], []
    for lo, hi in zip(breaks[:-1], breaks[1:]):
        if hi <= lo:
            continue
        n_sub = 1 if max_width is None else max(1, math.ceil((hi - lo) / max_width))
        edges = np.linspace(lo, hi, n_sub + 1)
        for a, b in zip(edges[:-1], edges[1:]):
            half = 0.5 * (b - a)
            xs.append(0.5 * (a + b) + half * x)
            ws.append(half * w)
    return np.concatenate(xs), np.concatenate(ws)


@dataclass(frozen=True)
class RadialGrid:
    """Uniform radial grid on [0, r_max] with n_points samples."""

    r_max: float
    n_points: int

    def __post_init__(self):
        if self.r_max <= 0:
            raise DomainError(f"r_max (={self.r_max}) must be positive")
        if self.n_points < 2:
            raise DomainError(f"n_points (={self.n_points}) must be >= 2")

    @property
    def spacing(self) -> float:
        return self.r_max / (self.n_points - 1)

    @property
    def r(self) -> np.ndarray:
        return np.linspace(0.0, self.r_max, self.n_points)

    def integration_weights(self) -> np.ndarray:
        """Composite Simpson weights (falls back to trapezoid on the last
        interval when the point count is even)."""
        n = self.n_points
        h = self.spacing
        w = np.zeros(n)
        m = n if n % 2 == 1 else n - 1
        w[0:m:2] += h / 3.0
        w[1:m:2] += 4.0 * h / 3.0
        w[2:m:2] += h / 3.0
        w[m - 1] += 0.0  # endpoint already set by the pattern above
        if n % 2 == 0:
            w[-2] += h / 2.0
            w[-1] += h / 2.0
        return w

    def integrate(self, values: np.ndarray) -> complex | float:
        return (self.integration_weights() * values).sum()


# ---------------------------------------------------------------------------
# Potentials
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Potential:
    """Finite-range radial potential: piecewise-constant segments plus
    delta shells, V(r) = 0 identically for r > range_a.

    segments : tuple of (r_lo, r_hi, V)
        Contiguous, non-overlapping intervals with constant value V.
    shells : tuple of (r_s, lam)
        Delta shells lambda * delta(r - r_s); lam has units 1/length.
    range_a : float
        Support radius; every segment and shell lies within it.
    """

    segments: tuple[tuple[float, float, float], ...] = ()
    shells: tuple[tuple[float, float], ...] = ()
    range_a: float = 1.0

    def __post_init__(self):
        if not self.range_a > 0:
            raise DomainError(f"range_a (={self.range_a}) must be positive")
        last_hi = None
        for (lo, hi, _v) in self.segments:
            if not (0.0 <= lo < hi <= self.range_a):
                raise DomainError(
                    f"segment ({lo}, {hi}) must satisfy 0 <= r_lo < r_hi <= range_a")
            if last_hi is not None and lo < last_hi - 1e-15:
                raise DomainError("segments must be ordered and non-overlapping")
            last_hi = hi
        for (r_s, _lam) in self.shells:
            if not (0.0 < r_s <= self.range_a):
                raise DomainError(
                    f"shell radius (={r_s}) must satisfy 0 < r_s <= range_a")

    def v_of(self, r: np.ndarray) -> np.ndarray:
        """Regular (non-distributional) part of V; exactly 0 beyond range_a."""
        r = np.asarray(r, dtype=float)
        out = np.zeros_like(r)
        for (lo, hi, v) in self.segments:
            out[(r >= lo) & (r < hi)] = v
        out[r > self.range_a] = 0.0
        return out

    def breakpoints(self) -> np.ndarray:
        """Sorted radii at which the potential changes character,
        including 0 and range_a."""
        pts = {0.0, self.range_a}
        for (lo, hi, _v) in self.segments:
            pts.add(lo)
            pts.add(hi)
        for (r_s, _lam) in self.shells:
            pts.add(r_s)
        return np.array(sorted(pts))

    @property
    def is_free(self) -> bool:
        return not self.shells and all(v == 0.0 for (_l, _h, v) in self.segments)

    def describe(self) -> str:
        if self.is_free:
            return "free"
        parts = [f"shell(r={r_s:g},lambda={lam:g})" for (r_s, lam) in self.shells]
        parts += [f"segment([{lo:g},{hi:g}],V={v:g})" for (lo, hi, v) in self.segments]
        return "+".join(parts)


def build_delta_shell(lam: float, a: float) -> Potential:
    """Single delta shell lambda * delta(r - a); range_a = a."""
    if not a > 0:
        raise DomainError(f"shell radius a (={a}) must be positive")
    if lam == 0.0:
        return Potential(segments=(), shells=(), range_a=a)
    return Potential(segments=(), shells=((a, lam),), range_a=a)


def free_potential(range_a: float = 1.0) -> Potential:
    return Potential(segments=(), shells=(), range_a=range_a)


# ---------------------------------------------------------------------------
# Radial profiles: analytic descriptions of wave packets.
#
# A profile evaluates Psi(r) on arrays, knows its support radius, its
# internal breakpoints (kinks), and a momentum cutoff k_bound(tol) beyond
# which its spectral mass is below tol.  Initial states keep their profile
# so downstream quadratures can sample them at arbitrary points instead of
# interpolating grid samples.
# ---------------------------------------------------------------------------

class Profile:
    support_R: float

    def __call__(self, r: np.ndarray) -> np.ndarray:  # pragma: no cover
        raise NotImplementedError

    def breakpoints(self) -> tuple[float, ...]:
        return ()

    def k_bound(self, tail_mass_tol: float) -> float:  # pragma: no cover
        raise NotImplementedError


def profile_norm(profile: Profile, nodes_per_panel: int = 32) -> float:
    """L2 norm of a profile via composite Gauss quadrature on its support."""
    breaks = sorted({0.0, profile.support_R, *profile.breakpoints()})
    rq, wq = gauss_panels(breaks, nodes_per_panel, max_width=profile.support_R / 8)
    vals = profile(rq)
    return float(np.sqrt(np.real((wq * np.abs(vals) ** 2).sum())))


@dataclass(frozen=True)
class SineBoxProfile(Profile):
    """sqrt(2/R) sin(n pi r / R) on [0, R]: eigenmode of the closed box."""

    n: int
    R: float
    amplitude: float = 1.0

    @property
    def support_R(self) -> float:
        return self.R

    def __call__(self, r: np.ndarray) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        out = self.amplitude * math.sqrt(2.0 / self.R) * np.sin(self.n * math.pi * r / self.R)
        return np.where(r <= self.R, out, 0.0)

    def breakpoints(self) -> tuple[float, ...]:
        return (self.R,)

    def k_bound(self, tail_mass_tol: float) -> float:
        # |c(k)| ~ |Psi'(R)| / k^2 tail from the derivative kink at R
        jump = math.sqrt(2.0 / self.R) * self.n * math.pi / self.R * abs(self.amplitude)
        k3 = jump * jump / (3.0 * math.pi * max(tail_mass_tol, 1e-300))
        return max(10.0 / self.R, k3 ** (1.0 / 3.0))


@dataclass(frozen=True)
class GaussianBumpProfile(Profile):
    """Antisymmetrized Gaussian exp(-(r -+ r0)^2 / 2 sigma^2), truncated at R.

    The image term at -r0 enforces Psi(0) = 0 exactly; normalization is
    fixed at construction by Gauss quadrature of |Psi|^2.
    """

    r0: float
    sigma: float
    R: float
    amplitude: float = field(default=0.0)  # resolved in __post_init__

    def __post_init__(self):
        if self.amplitude == 0.0:
            raw = GaussianBumpProfile(self.r0, self.sigma, self.R, amplitude=1.0)
            nrm = profile_norm(raw)
            if nrm < 1e-12:
                raise DomainError("gaussian bump has no support inside [0, R]")
            object.__setattr__(self, "amplitude", 1.0 / nrm)

    @property
    def support_R(self) -> float:
        return self.R

    def __call__(self, r: np.ndarray) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        s2 = 2.0 * self.sigma ** 2
        out = self.amplitude * (np.exp(-((r - self.r0) ** 2) / s2)
                                - np.exp(-((r + self.r0) ** 2) / s2))
        return np.where(r <= self.R, out, 0.0)

    def breakpoints(self) -> tuple[float, ...]:
        return (self.R,)

    def k_bound(self, tail_mass_tol: float) -> float:
        # Gaussian spectral content falls like exp(-sigma^2 k^2); the hard
        # truncation at R adds a |Psi(R)|/k tail.
        k_gauss = (math.sqrt(2.0 * math.log(1.0 / tail_mass_tol)) + 2.0) / self.sigma
        edge = abs(float(self(np.array([self.R - 1e-15]))[0]))
        k_edge = (2.0 / math.pi) * edge * edge / max(tail_mass_tol, 1e-300)
        return max(10.0 / self.R, k_gauss, min(k_edge, 1e4))


@dataclass(frozen=True)
class SumProfile(Profile):
    """Weighted sum of profiles (used for engineered and projected states)."""

    terms: tuple[tuple[complex, Profile], ...]

    @property
    def support_R(self) -> float:
        return max(p.support_R for (_c, p) in self.terms)

    def __call__(self, r: np.ndarray) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        out = np.zeros(r.shape, dtype=complex)
        for (c, p) in self.terms:
            out = out + c * p(r)
        if np.abs(out.imag).max(initial=0.0) == 0.0:
            return out.real
        return out

    def breakpoints(self) -> tuple[float, ...]:
        pts: set[float] = set()
        for (_c, p) in self.terms:
            pts.update(p.breakpoints())
        return tuple(sorted(pts))

    def k_bound(self, tail_mass_tol: float) -> float:
        per = tail_mass_tol / max(len(self.terms), 1)
        return max(p.k_bound(per / max(abs(c) ** 2, 1e-30)) for (c, p) in self.terms)


# ---------------------------------------------------------------------------
# Initial states
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SineBox:
    """Family tag: n-th eigenmode of the box [0, R]."""
    n: int
    R: float


@dataclass(frozen=True)
class GaussianBump:
    """Family tag: normalized antisymmetrized Gaussian bump inside [0, R]."""
    r0: float
    sigma: float
    R: float


Family = Union[SineBox, GaussianBump]


@dataclass(frozen=True)
class InitialState:
    """Normalized s-wave packet, compactly supported in [0, support_R].

    samples : Psi(r, 0) evaluated on ``grid``
    profile : analytic form used by high-accuracy quadratures
    label   : human-readable provenance string
    """

    profile: Profile
    grid: RadialGrid
    samples: np.ndarray
    support_R: float
    label: str

    def norm_on_grid(self) -> float:
        return float(np.sqrt(np.real(self.grid.integrate(np.abs(self.samples) ** 2))))


def _profile_for(family: Family) -> Profile:
    if isinstance(family, SineBox):
        if family.n < 1:
            raise DomainError(f"mode index n (={family.n}) must be >= 1")
        if family.R <= 0:
            raise DomainError(f"box size R (={family.R}) must be positive")
        return SineBoxProfile(family.n, family.R)
    if isinstance(family, GaussianBump):
        if family.sigma <= 0:
            raise DomainError(f"sigma (={family.sigma}) must be positive")
        if family.R <= 0:
            raise DomainError(f"R (={family.R}) must be positive")
        return GaussianBumpProfile(family.r0, family.sigma, family.R)
    raise DomainError(f"unknown initial-state family: {family!r}")


def state_from_profile(profile: Profile, grid: RadialGrid, label: str,
                       renormalize: bool = True) -> InitialState:
    """Wrap an analytic profile as a normalized InitialState on ``grid``."""
    if profile.support_R > grid.r_max + 1e-12:
        raise DomainError(
            f"support_R (={profile.support_R}) exceeds grid r_max (={grid.r_max})")
    nrm = profile_norm(profile)
    if nrm < 1e-12:
        raise DomainError("initial state has zero norm")
    if renormalize and abs(nrm - 1.0) > 1e-13:
        if isinstance(profile, SumProfile):
            profile = SumProfile(tuple((c / nrm, p) for (c, p) in profile.terms))
        else:
            profile = SumProfile(((1.0 / nrm, profile),))
    samples = profile(grid.r)
    return InitialState(profile=profile, grid=grid, samples=samples,
                        support_R=profile.support_R, label=label)


def build_initial_state(family: Family, grid: RadialGrid) -> InitialState:
    """Construct a normalized initial state of the given family on ``grid``."""
    profile = _profile_for(family)
    if isinstance(family, SineBox):
        label = f"sine_box(n={family.n},R={family.R:g})"
    else:
        label = f"gaussian_bump(r0={family.r0:g},sigma={family.sigma:g},R={family.R:g})"
    return state_from_profile(profile, grid, label)
