"""Equilibrium density profiles and the hydrostatic base state.

The equilibrium of the slab is a horizontal-mean density rho(y2) on (0, h)
with min rho > 0 (no vacuum), together with the hydrostatic pressure
P(y2) solving dP/dy2 + rho*g = 0.  A profile is *RT-unstable capable* when
rho' > 0 somewhere, i.e. density increases with height in some layer.

Profiles are stored sampled on a fine uniform 1D grid (tabulated
experimental profiles stay first-class); evaluation off the grid uses a
cubic spline.  The nonlinear gravity term of the Lagrangian formulation,

    G(y) = g * (rho(y2 + eta2(y)) - rho(y2)),

is evaluated here as well, along with its quadratic remainder
Gcal = G - g*rho'(y2)*eta2 (identically zero for affine profiles).
"""

from __future__ import annotations

import numpy as np
from dataclasses import dataclass, field
from scipy.interpolate import CubicSpline


class ProfileError(ValueError):
    """Invalid equilibrium profile (nonpositive density, bad grid, ...)."""


class FlowMapEscapeError(RuntimeError):
    """Too many flow-map points left the slab during gravity evaluation."""


@dataclass(frozen=True)
class DensityProfile:
    """Equilibrium density rho(y2) sampled on a uniform grid over [0, h].

    samples, d1, d2 hold rho, rho', rho'' at the nodes ``y``.  ``kind`` tags
    the construction (affine | tanh-layer | tabulated); ``unresolved`` is set
    when the construction could not resolve rho'' on the requested grid.
    """

    h: float
    y: np.ndarray
    samples: np.ndarray
    d1: np.ndarray
    d2: np.ndarray
    kind: str
    unresolved: bool = False
    _spline: CubicSpline = field(repr=False, compare=False, default=None)

    def __post_init__(self):
        if self.samples.min() <= 0.0:
            raise ProfileError("density must be strictly positive on [0, h]")
        if len(self.y) < 16:
            raise ProfileError("profile grid needs at least 16 points")
        object.__setattr__(self, "_spline", CubicSpline(self.y, self.samples))

    @property
    def n(self) -> int:
        return len(self.y)

    @property
    def min_density(self) -> float:
        return float(self.samples.min())

    def rho(self, y2):
        """rho evaluated at arbitrary heights (cubic interpolation)."""
        return self._spline(y2)

    def drho(self, y2):
        """rho' evaluated at arbitrary heights."""
        return self._spline(y2, 1)

    def save(self, path) -> None:
        """Write the two-column (y2, rho) plain-text table."""
        with open(path, "w") as f:
            f.write(f"# density profile kind={self.kind} h={self.h!r} n={self.n}\n")
            f.write("# columns: y2 rho\n")
            for yv, rv in zip(self.y, self.samples):
                f.write(f"{yv:.17g} {rv:.17g}\n")


def _derivatives(y: np.ndarray, samples: np.ndarray):
    # spline derivatives: exact for polynomials up to cubic, O(n^-2) or
    # better for smooth data; keeps tabulated profiles on equal footing
    sp = CubicSpline(y, samples)
    return sp(y, 1), sp(y, 2)


def load_profile(path) -> DensityProfile:
    """Read a two-column (y2, rho) table with '#' comment lines."""
    data = np.loadtxt(path, comments="#")
    if data.ndim != 2 or data.shape[1] != 2:
        raise ProfileError(f"{path}: expected two columns (y2, rho)")
    y, samples = data[:, 0], data[:, 1]
    if y[0] != 0.0 or np.any(np.diff(y) <= 0):
        raise ProfileError(f"{path}: first column must increase from 0")
    d1, d2 = _derivatives(y, samples)
    return DensityProfile(h=float(y[-1]), y=y, samples=samples, d1=d1, d2=d2,
                          kind="tabulated")


def build_affine_profile(rho_bottom: float, rho_top: float, h: float = 1.0,
                         n: int = 2049) -> DensityProfile:
    """rho(y2) = rho_bottom + (rho_top - rho_bottom) * y2/h."""
    if rho_bottom <= 0 or rho_top <= 0:
        raise ProfileError("affine profile endpoints must be positive")
    if n < 16:
        raise ProfileError("n >= 16 required")
    y = np.linspace(0.0, h, n)
    slope = (rho_top - rho_bottom) / h
    samples = rho_bottom + slope * y
    d1 = np.full(n, slope)
    d2 = np.zeros(n)
    return DensityProfile(h=h, y=y, samples=samples, d1=d1, d2=d2, kind="affine")


def build_tanh_profile(rho_bottom: float, rho_top: float, center: float,
                       width: float, h: float = 1.0, n: int = 2049) -> DensityProfile:
    """Smooth two-layer blend rho = mid + jump/2 * tanh((y2-center)/width).

    A layer too thin for the grid (rho'' varying faster than the node
    spacing can represent) sets the ``unresolved`` flag instead of failing.
    """
    if rho_bottom <= 0 or rho_top <= 0:
        raise ProfileError("tanh profile endpoints must be positive")
    if width <= 0:
        raise ProfileError("width must be positive")
    if not 0 < center < h:
        raise ProfileError("center must lie inside (0, h)")
    y = np.linspace(0.0, h, n)
    mid = 0.5 * (rho_bottom + rho_top)
    jump = 0.5 * (rho_top - rho_bottom)
    s = np.tanh((y - center) / width)
    samples = mid + jump * s
    d1 = jump * (1.0 - s**2) / width
    d2 = -2.0 * jump * s * (1.0 - s**2) / width**2
    # resolution guard: need a few nodes across the layer to resolve rho''
    dy = h / (n - 1)
    unresolved = width < 4.0 * dy
    return DensityProfile(h=h, y=y, samples=samples, d1=d1, d2=d2,
                          kind="tanh-layer", unresolved=unresolved)


def check_rt_condition(p: DensityProfile) -> bool:
    """True iff rho' > 0 somewhere, i.e. heavier fluid sits above lighter."""
    return bool(p.d1.max() > 0.0)


@dataclass(frozen=True)
class EquilibriumState:
    """Density profile plus the hydrostatic pressure (zero-mean gauge)."""

    profile: DensityProfile
    pressure: np.ndarray
    g: float


def hydrostatic_pressure(p: DensityProfile, g: float) -> EquilibriumState:
    """P(y2) = P(0) - g * int_0^y2 rho, with the mean of P gauged to zero."""
    if g < 0:
        raise ValueError("g must be nonnegative")
    sp = p._spline.antiderivative()
    pressure = -g * sp(p.y)
    pressure -= np.trapezoid(pressure, p.y) / p.h
    return EquilibriumState(profile=p, pressure=pressure, g=g)


def eval_gravity_term(p: DensityProfile, g: float, eta2: np.ndarray,
                      y2: np.ndarray, max_clamp_frac: float = 0.05):
    """Gravity source G = g*(rho(eta2+y2) - rho(y2)) and its remainder.

    eta2 holds the vertical displacement at points whose unperturbed heights
    are ``y2`` (broadcast against eta2's last axis).  Arguments leaving
    [0, h] are clamped and counted; a clamp fraction above
    ``max_clamp_frac`` means the flow map has left the slab.

    Returns (G, Gcal, n_clamped) with Gcal = G - g*rho'(y2)*eta2.
    """
    arg = eta2 + y2
    lo, hi = arg < 0.0, arg > p.h
    n_clamped = int(np.count_nonzero(lo) + np.count_nonzero(hi))
    if n_clamped > max_clamp_frac * arg.size:
        raise FlowMapEscapeError(
            f"{n_clamped}/{arg.size} flow-map points left the slab [0, {p.h}]")
    if n_clamped:
        arg = np.clip(arg, 0.0, p.h)
    base = p.rho(np.broadcast_to(y2, arg.shape) if arg.ndim > np.ndim(y2) else y2)
    G = g * (p.rho(arg) - base)
    Gcal = G - g * p.drho(y2) * eta2
    return G, Gcal, n_clamped
