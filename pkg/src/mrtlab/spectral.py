"""Spectral backbone for the 2πL-periodic × (0, h) slab.

Horizontal direction: real Fourier modes exp(i n y1 / L), |n| <= N1/2,
on an equispaced grid.  Vertical direction: sine or cosine Galerkin bases
on the midpoint grid y2 = (i + 1/2) h / N2,

    Dirichlet parity  ->  sin(j π y2 / h),  j = 1..N2   (vanishes at walls)
    Neumann parity    ->  cos(j π y2 / h),  j = 0..N2-1 (zero wall slope)

so the slip-wall behavior (f = 0, resp. df/dy2 = 0 at y2 in {0, h}) is
exact by construction, and every constant-coefficient operator is diagonal
per (n, j) mode.  Vertical differentiation flips the parity.

Spectral arrays have shape (N1//2 + 1, N2) complex (rfft bins x vertical
slots); physical arrays are (N1, N2) real.  Products of fields are formed
pointwise in physical space and 2/3-truncated against aliasing.

The two elliptic solvers live here as well: the per-mode exact Stokes
solver with Navier slip walls, and the variable-coefficient pressure
projection (fixed-point around a per-mode exact constant-geometry solve).
"""

from __future__ import annotations

import numpy as np
from dataclasses import dataclass, replace
from scipy import fft as sfft
from scipy.integrate import simpson

DIRICHLET = "D"
NEUMANN = "N"
PHYSICAL = "phys"
SPECTRAL = "spec"


class ParityError(ValueError):
    """Operation applied to a field with the wrong wall parity or space."""


class ProjectionError(RuntimeError):
    """div_A projection failed to reach the residual tolerance."""


@dataclass(frozen=True)
class SlabGrid:
    """Collocation grid for the slab 2πL x (0, h)."""

    L: float
    h: float
    N1: int
    N2: int

    def __post_init__(self):
        if self.N1 % 2 or self.N1 < 4:
            raise ValueError("N1 must be even and >= 4")
        if self.N2 < 4:
            raise ValueError("N2 must be >= 4")

    @property
    def y1(self) -> np.ndarray:
        return 2.0 * np.pi * self.L * np.arange(self.N1) / self.N1

    @property
    def y2(self) -> np.ndarray:
        return (np.arange(self.N2) + 0.5) * self.h / self.N2

    @property
    def kx(self) -> np.ndarray:
        """Horizontal wavenumbers n/L for the rfft bins n = 0..N1/2."""
        return np.arange(self.N1 // 2 + 1) / self.L

    def bj(self, parity: str) -> np.ndarray:
        """Vertical wavenumbers jπ/h for the given parity's slots."""
        j = np.arange(1, self.N2 + 1) if parity == DIRICHLET else np.arange(self.N2)
        return j * np.pi / self.h

    @property
    def cell_area(self) -> float:
        return 2.0 * np.pi * self.L * self.h

    def horizontal_weights(self) -> np.ndarray:
        """∫ dy1 weights for |rfft coefficient|^2 sums."""
        w = np.full(self.N1 // 2 + 1, 2.0)
        w[0] = 1.0
        w[-1] = 0.5
        return 2.0 * np.pi * self.L * w

    def vertical_weights(self, parity: str) -> np.ndarray:
        """∫ dy2 weights for squared basis coefficients."""
        w = np.full(self.N2, self.h / 2.0)
        if parity == NEUMANN:
            w[0] = self.h
        return w

    def laplace_symbol(self, parity: str) -> np.ndarray:
        """k² + b² multiplier array (−Δ in the doubly-spectral basis)."""
        return self.kx[:, None] ** 2 + self.bj(parity)[None, :] ** 2

    def dealias_mask(self) -> np.ndarray:
        keep_n = np.arange(self.N1 // 2 + 1) <= self.N1 // 3
        keep_j = np.arange(self.N2) < (2 * self.N2) // 3
        return keep_n[:, None] & keep_j[None, :]


@dataclass(frozen=True)
class Field:
    """Scalar field on a SlabGrid with a wall parity tag.

    Fields are immutable by convention: `values` must not be mutated after
    construction (conversions between spaces are cached on the instance)."""

    grid: SlabGrid
    values: np.ndarray
    parity: str
    space: str

    def __post_init__(self):
        expected = ((self.grid.N1, self.grid.N2) if self.space == PHYSICAL
                    else (self.grid.N1 // 2 + 1, self.grid.N2))
        if self.values.shape != expected:
            raise ParityError(
                f"{self.space} field values must have shape {expected}, "
                f"got {self.values.shape}")
        object.__setattr__(self, "_twin", None)


@dataclass(frozen=True)
class VectorField:
    """Velocity-like pair: c1 has Neumann parity, c2 Dirichlet parity."""

    c1: Field
    c2: Field

    def __post_init__(self):
        if self.c1.parity != NEUMANN or self.c2.parity != DIRICHLET:
            raise ParityError("vector fields need (Neumann, Dirichlet) components")


# ---------------------------------------------------------------------------
# transforms

def _vert_analyze(x: np.ndarray, parity: str) -> np.ndarray:
    n2 = x.shape[1]
    if parity == DIRICHLET:
        out = sfft.dst(x, type=2, axis=1)
        out /= n2
        out[:, -1] *= 0.5
    else:
        out = sfft.dct(x, type=2, axis=1)
        out /= n2
        out[:, 0] *= 0.5
    return out

def _vert_synthesize(c: np.ndarray, parity: str) -> np.ndarray:
    c = c.copy()
    if parity == DIRICHLET:
        c[:, :-1] *= 0.5
        return sfft.dst(c, type=3, axis=1)
    c[:, 1:] *= 0.5
    return sfft.dct(c, type=3, axis=1)


def to_spectral(f: Field) -> Field:
    if f.space == SPECTRAL:
        return f
    if f._twin is not None:
        return f._twin
    c = np.fft.rfft(f.values, axis=0) / f.grid.N1
    c = _vert_analyze(c, f.parity)
    out = replace(f, values=c, space=SPECTRAL)
    object.__setattr__(out, "_twin", f)
    object.__setattr__(f, "_twin", out)
    return out


def to_physical(f: Field) -> Field:
    if f.space == PHYSICAL:
        return f
    if f._twin is not None:
        return f._twin
    v = _vert_synthesize(f.values, f.parity)
    v = np.fft.irfft(v * f.grid.N1, n=f.grid.N1, axis=0)
    out = replace(f, values=v, space=PHYSICAL)
    object.__setattr__(out, "_twin", f)
    object.__setattr__(f, "_twin", out)
    return out


def transform(f: Field, direction: str) -> Field:
    """direction = 'forward' (to spectral) or 'inverse' (to physical)."""
    if direction == "forward":
        if f.space != PHYSICAL:
            raise ParityError("forward transform expects a physical-space field")
        return to_spectral(f)
    if direction == "inverse":
        if f.space != SPECTRAL:
            raise ParityError("inverse transform expects a spectral-space field")
        return to_physical(f)
    raise ValueError(f"unknown transform direction {direction!r}")


def spec(f: Field) -> np.ndarray:
    return to_spectral(f).values

def phys(f: Field) -> np.ndarray:
    return to_physical(f).values


def field_from_physical(grid: SlabGrid, values: np.ndarray, parity: str) -> Field:
    return Field(grid, np.asarray(values, float), parity, PHYSICAL)

def field_from_spectral(grid: SlabGrid, coeffs: np.ndarray, parity: str) -> Field:
    return Field(grid, np.asarray(coeffs, complex), parity, SPECTRAL)

def zero_field(grid: SlabGrid, parity: str) -> Field:
    return field_from_spectral(grid, np.zeros((grid.N1 // 2 + 1, grid.N2), complex), parity)

def zero_vector(grid: SlabGrid) -> VectorField:
    return VectorField(zero_field(grid, NEUMANN), zero_field(grid, DIRICHLET))


# ---------------------------------------------------------------------------
# differentiation

def ddy1(f: Field) -> Field:
    """Horizontal derivative; parity is unchanged."""
    c = spec(f).copy()
    c *= 1j * f.grid.kx[:, None]
    if f.grid.N1 % 2 == 0:
        c[-1, :] = 0.0  # unpaired horizontal Nyquist mode has no sine partner
    return field_from_spectral(f.grid, c, f.parity)


def ddy2(f: Field) -> Field:
    """Vertical derivative; flips Dirichlet <-> Neumann parity."""
    c = spec(f)
    g = f.grid
    out = np.zeros_like(c)
    if f.parity == DIRICHLET:
        # sin(jπy/h) -> (jπ/h) cos(jπy/h); the j = N2 image is invisible on
        # the midpoint grid (its cosine vanishes at every node)
        out[:, 1:] = g.bj(DIRICHLET)[:-1] * c[:, :-1]
        return field_from_spectral(g, out, NEUMANN)
    out[:, :-1] = -g.bj(NEUMANN)[1:] * c[:, 1:]
    return field_from_spectral(g, out, DIRICHLET)


def laplacian(f: Field) -> Field:
    c = spec(f) * (-f.grid.laplace_symbol(f.parity))
    return field_from_spectral(f.grid, c, f.parity)


def dealias(f: Field) -> Field:
    c = spec(f) * f.grid.dealias_mask()
    return field_from_spectral(f.grid, c, f.parity)


def refine(f: Field, factor: int = 2) -> Field:
    """Exact re-expansion of a field on a grid refined by an integer factor
    (zero-padding in spectral space); used for dealiased quadratures."""
    g = f.grid
    g2 = SlabGrid(L=g.L, h=g.h, N1=factor * g.N1, N2=factor * g.N2)
    c = spec(f)
    c2 = np.zeros((g2.N1 // 2 + 1, g2.N2), complex)
    c2[: c.shape[0], : c.shape[1]] = c
    # the coarse horizontal Nyquist bin counts once; as an interior mode of
    # the fine grid it would count twice
    c2[c.shape[0] - 1, :] *= 0.5
    return field_from_spectral(g2, c2, f.parity)


_PRODUCT_PARITY = {
    (NEUMANN, NEUMANN): NEUMANN,
    (DIRICHLET, DIRICHLET): NEUMANN,
    (NEUMANN, DIRICHLET): DIRICHLET,
    (DIRICHLET, NEUMANN): DIRICHLET,
}

def multiply(a: Field, b: Field) -> Field:
    """Dealiased pointwise product; the result parity follows the wall
    symmetry algebra (odd*odd = even etc.)."""
    vals = phys(a) * phys(b)
    out = field_from_physical(a.grid, vals, _PRODUCT_PARITY[(a.parity, b.parity)])
    return dealias(to_spectral(out))


# ---------------------------------------------------------------------------
# integrals, norms, means

def l2_sq(f: Field) -> float:
    """∫ f² dy over one periodic cell, evaluated spectrally (Parseval)."""
    c = spec(f)
    wh = f.grid.horizontal_weights()
    wv = f.grid.vertical_weights(f.parity)
    return float(np.sum(wh[:, None] * wv[None, :] * np.abs(c) ** 2))


def l2_norm(f: Field) -> float:
    return np.sqrt(max(l2_sq(f), 0.0))


def inner(a: Field, b: Field) -> float:
    """∫ a b dy for two fields of equal parity."""
    if a.parity != b.parity:
        raise ParityError("inner product needs matching parities")
    ca, cb = spec(a), spec(b)
    wh = a.grid.horizontal_weights()
    wv = a.grid.vertical_weights(a.parity)
    return float(np.sum(wh[:, None] * wv[None, :] * np.real(ca * np.conj(cb))))


def vec_l2_sq(v: VectorField) -> float:
    return l2_sq(v.c1) + l2_sq(v.c2)


def integral(f: Field) -> float:
    """∫ f dy over one periodic cell (only the (0, j=0) slot contributes for
    Neumann parity; Dirichlet sine modes integrate via their odd moments)."""
    c = spec(f)
    g = f.grid
    if f.parity == NEUMANN:
        return float(c[0, 0].real * g.cell_area)
    # ∫ sin(jπy/h) dy2 = h(1-(-1)^j)/(jπ)
    j = np.arange(1, g.N2 + 1)
    moments = g.h * (1.0 - (-1.0) ** j) / (j * np.pi)
    return float(2.0 * np.pi * g.L * np.dot(c[0, :].real, moments))


def mean(f: Field) -> float:
    return integral(f) / f.grid.cell_area


def weighted_mean_coeff(f: Field, rho_at_nodes: np.ndarray) -> float:
    """(rho f)_Ω / (rho)_Ω for a Neumann-parity field; used to remove the
    weighted horizontal mean from u1, eta1."""
    c = spec(f)
    g = f.grid
    # moments ∫ rho cos(jπy/h) dy2 on the collocation grid (midpoint rule,
    # exact for resolved products)
    cosb = np.cos(np.outer(g.y2, np.arange(g.N2)) * np.pi / g.h)
    mom = (g.h / g.N2) * (rho_at_nodes @ cosb)
    return float((c[0, :].real @ mom) / mom[0])


# ---------------------------------------------------------------------------
# arbitrary-point evaluation (flow-map inversion, wall checks)

def eval_at_points(f: Field, y1p: np.ndarray, y2p: np.ndarray) -> np.ndarray:
    """Evaluate a field at scattered points by direct basis summation."""
    c = spec(f)
    g = f.grid
    y1p = np.asarray(y1p, float).ravel()
    y2p = np.asarray(y2p, float).ravel()
    n = np.arange(g.N1 // 2 + 1)
    wn = np.ones(g.N1 // 2 + 1)
    wn[1:] = 2.0
    if g.N1 % 2 == 0:
        wn[-1] = 1.0
    E = np.exp(1j * np.outer(y1p, n / g.L)) * wn  # (P, Nn)
    if f.parity == DIRICHLET:
        B = np.sin(np.outer(y2p, g.bj(DIRICHLET)))  # (P, N2)
    else:
        B = np.cos(np.outer(y2p, g.bj(NEUMANN)))
    vert = np.einsum("nj,pj->pn", c, B)
    return np.real(np.einsum("pn,pn->p", E, vert))


def wall_values(f: Field):
    """Field values along the two walls y2 = 0, h (exactly zero for
    Dirichlet parity by construction)."""
    g = f.grid
    out = []
    for y2w in (0.0, g.h):
        out.append(eval_at_points(f, g.y1, np.full(g.N1, y2w)))
    return out


def wall_normal_derivative(f: Field):
    return wall_values(ddy2(f))


# ---------------------------------------------------------------------------
# vertical basis matrices (dense per-mode solvers build on these)

def basis_matrices(grid: SlabGrid, parity: str):
    """(synthesis, analysis) matrices between vertical slots and nodes.

    synthesis: (N2 nodes) x (N2 slots), analysis = synthesis^{-1} realised
    by the discrete transform normalization (analysis @ synthesis = I).
    """
    y2 = grid.y2
    b = grid.bj(parity)
    if parity == DIRICHLET:
        Sy = np.sin(np.outer(y2, b))
        An = Sy.T * (2.0 / grid.N2)
        An[-1, :] *= 0.5
    else:
        Sy = np.cos(np.outer(y2, b))
        An = Sy.T * (2.0 / grid.N2)
        An[0, :] *= 0.5
    return Sy, An


def mult_matrix(grid: SlabGrid, parity: str, coef_at_nodes: np.ndarray) -> np.ndarray:
    """Dense slot-space representation of pointwise multiplication by a
    y2-dependent coefficient (collocation product, including its aliasing)."""
    Sy, An = basis_matrices(grid, parity)
    return An @ (coef_at_nodes[:, None] * Sy)


# ---------------------------------------------------------------------------
# A-geometry operators (A = (I + ∇η)^{-T} supplied as physical 2x2 entries)

def grad_A(q: Field, A: tuple = None) -> VectorField:
    """(A_{1k} ∂_k q, A_{2k} ∂_k q) for Neumann-parity q.

    The identity part ∇q stays exact spectral; only the Ã = A − I products
    (the genuine flow-map nonlinearity) are formed pointwise and dealiased.
    A = None means the identity geometry.
    """
    d1 = ddy1(q)
    d2 = ddy2(q)
    if A is None:
        return VectorField(d1, d2)
    A11, A12, A21, A22 = A
    p1, p2 = phys(d1), phys(d2)
    g = q.grid
    e1 = dealias(to_spectral(field_from_physical(
        g, (A11 - 1.0) * p1 + A12 * p2, NEUMANN)))
    e2 = dealias(to_spectral(field_from_physical(
        g, A21 * p1 + (A22 - 1.0) * p2, DIRICHLET)))
    return VectorField(field_from_spectral(g, spec(d1) + spec(e1), NEUMANN),
                       field_from_spectral(g, spec(d2) + spec(e2), DIRICHLET))


def div_A(v: VectorField, A: tuple = None) -> Field:
    """A_{lk} ∂_k v_l (Neumann parity); exact divergence plus dealiased
    Ã-contraction."""
    g = v.c1.grid
    d11 = ddy1(v.c1)
    d22 = ddy2(v.c2)
    exact = spec(d11) + spec(d22)
    if A is None:
        return field_from_spectral(g, exact, NEUMANN)
    A11, A12, A21, A22 = A
    d21 = phys(ddy2(v.c1))
    d12 = phys(ddy1(v.c2))
    vals = ((A11 - 1.0) * phys(d11) + A12 * d21
            + A21 * d12 + (A22 - 1.0) * phys(d22))
    corr = dealias(to_spectral(field_from_physical(g, vals, NEUMANN)))
    return field_from_spectral(g, exact + spec(corr), NEUMANN)


def identity_A(grid: SlabGrid) -> tuple:
    one = np.ones((grid.N1, grid.N2))
    zero = np.zeros((grid.N1, grid.N2))
    return (one, zero, zero, one)


# ---------------------------------------------------------------------------
# constant-coefficient solves

def helmholtz_solve(alpha: float, beta: float, rhs: Field, parity: str = None) -> Field:
    """(α − βΔ) x = rhs, exact per-mode division."""
    if alpha <= 0 or beta < 0:
        raise ValueError("need alpha > 0 and beta >= 0")
    parity = parity or rhs.parity
    if parity != rhs.parity:
        raise ParityError("parity mismatch in helmholtz_solve")
    c = spec(rhs) / (alpha + beta * rhs.grid.laplace_symbol(parity))
    return field_from_spectral(rhs.grid, c, parity)


def solve_stokes_navier(f: VectorField, div_target: Field, mu: float,
                        rho_at_nodes: np.ndarray = None):
    """∇P − μΔv = f, div v = div_target, slip walls, mean(P) = 0.

    The problem decouples per (n, j) mode into closed-form 3x3 systems.
    The rigid n = j = 0 mode of v1 (untouched by the momentum balance) is
    gauged by (rho v1)_Ω = 0 when a density is supplied, else (v1)_Ω = 0.
    """
    if mu <= 0:
        raise ValueError("mu must be positive")
    if div_target.parity != NEUMANN:
        raise ParityError("div target must have Neumann parity")
    g = f.c1.grid
    f1 = spec(f.c1)            # cos slots j = 0..N2-1
    f2 = spec(f.c2)            # sin slots j = 1..N2
    d = spec(div_target)
    k = g.kx[:, None]
    N2 = g.N2

    # align vertical indices on the cosine slot grid j = 0..N2-1:
    # sine slot s holds j = s+1, so pad/shift where the bases meet.
    b = g.bj(NEUMANN)[None, :]              # j π / h at cosine slots
    f2j = np.zeros_like(f1)
    f2j[:, 1:] = f2[:, :-1]                 # f2 at cosine-aligned j >= 1
    D2 = k**2 + b**2

    # j >= 1, all n:  P = (μ D² d − i k f1 − b f2) / D²
    with np.errstate(divide="ignore", invalid="ignore"):
        P = (mu * D2 * d - 1j * k * f1 - b * f2j) / np.where(D2 > 0, D2, 1.0)
        v1 = (f1 - 1j * k * P) / np.where(D2 > 0, mu * D2, 1.0)
        v2j = (f2j + b * P) / np.where(D2 > 0, mu * D2, 1.0)

    # j = 0 column, n >= 1: no v2 mode; v1 from the divergence, P from mom-1
    kk = g.kx[1:]
    v1[1:, 0] = d[1:, 0] / (1j * kk)
    P[1:, 0] = (f1[1:, 0] - mu * kk**2 * v1[1:, 0]) / (1j * kk)

    # n = 0, j = 0: momentum balance requires the mean horizontal force to
    # vanish; P gauge and the weighted-mean condition fix the free constants
    P[0, 0] = 0.0
    v2 = np.zeros_like(f2)
    v2[:, :-1] = v2j[:, 1:]
    v2[:, -1] = 0.0

    v1f = field_from_spectral(g, v1, NEUMANN)
    if rho_at_nodes is None:
        v1c = v1.copy()
        v1c[0, 0] = 0.0
        v1f = field_from_spectral(g, v1c, NEUMANN)
        shift = mean(v1f)
    else:
        v1c = v1.copy()
        v1c[0, 0] = 0.0
        v1f = field_from_spectral(g, v1c, NEUMANN)
        shift = weighted_mean_coeff(v1f, rho_at_nodes)
    v1c[0, 0] = -shift
    v = VectorField(field_from_spectral(g, v1c, NEUMANN),
                    field_from_spectral(g, v2, DIRICHLET))
    return v, field_from_spectral(g, P, NEUMANN)


# ---------------------------------------------------------------------------
# variable-coefficient pressure solve / divergence projection

class PressureSolver:
    """Solves div_A(χ ∇_A q) = div_A w − s for zero-mean Neumann q.

    χ = 1/rho(y2).  Preconditioner: exact dense per-horizontal-mode
    factorization of the A = I operator div(χ∇·), built once; the A ≠ I
    remainder is handled by fixed-point iteration (contraction ~ ||A − I||).
    """

    def __init__(self, grid: SlabGrid, rho_at_nodes: np.ndarray,
                 tol: float = 1e-10, maxit: int = 50):
        self.grid = grid
        self.rho = np.asarray(rho_at_nodes, float)
        self.chi = 1.0 / self.rho
        self.tol = tol
        self.maxit = maxit
        self._build()

    def _build(self):
        g = self.grid
        N2 = g.N2
        Rc = mult_matrix(g, NEUMANN, self.chi)
        Rs = mult_matrix(g, DIRICHLET, self.chi)
        # T2 = ∂2 ∘ χ ∘ ∂2 on cosine slots: cos_j -> -b_j sin_j -> χ· -> +b sin->cos
        down = np.zeros((N2, N2))
        bs = g.bj(DIRICHLET)
        for s in range(N2 - 1):
            down[s, s + 1] = -bs[s]
        up = np.zeros((N2, N2))
        bc = g.bj(NEUMANN)
        for j in range(1, N2):
            up[j, j - 1] = bc[j]
        T2 = up @ Rs @ down
        kx = g.kx
        ops = np.empty((len(kx), N2, N2))
        for i, k in enumerate(kx):
            Ln = -(k * k) * Rc + T2
            if i == 0:
                Ln[0, :] = 0.0
                Ln[0, 0] = 1.0
            ops[i] = np.linalg.inv(Ln)
        self._inv = ops

    def _precond(self, r: np.ndarray) -> np.ndarray:
        r = r.copy()
        r[0, 0] = 0.0
        return apply_batched(self._inv, r)

    def solve(self, w: VectorField, A: tuple, source: Field = None,
              q0: Field = None):
        """Return (q, u_proj, iterations, residual_l2) with
        u_proj = w − χ∇_A q and div_A u_proj = source (weakly, to tol)."""
        g = self.grid
        q = spec(q0).copy() if q0 is not None else np.zeros(
            (g.N1 // 2 + 1, g.N2), complex)
        s = spec(source) if source is not None else None
        res_prev = np.inf
        for it in range(self.maxit + 1):
            if not q.any():
                up = w
            else:
                qf = field_from_spectral(g, q, NEUMANN)
                gq = grad_A(qf, A)
                # χ(y2) products stay un-dealiased: the preconditioner encodes
                # the same collocation multiplication, so A = I solves in one
                # sweep
                u1 = field_from_physical(
                    g, phys(w.c1) - self.chi * phys(gq.c1), NEUMANN)
                u2 = field_from_physical(
                    g, phys(w.c2) - self.chi * phys(gq.c2), DIRICHLET)
                up = VectorField(to_spectral(u1), to_spectral(u2))
            r = spec(div_A(up, A)).copy()
            if s is not None:
                r -= s
            r[0, 0] = 0.0  # gauge slot: solvability defect stays out of the loop
            res = np.sqrt(max(float(np.sum(
                g.horizontal_weights()[:, None]
                * g.vertical_weights(NEUMANN)[None, :] * np.abs(r) ** 2)), 0.0))
            if res < self.tol:
                return field_from_spectral(g, q, NEUMANN), up, it, res
            if it == self.maxit or not np.isfinite(res) or res > 4.0 * res_prev:
                raise ProjectionError(
                    f"pressure solve stalled: residual {res:.3e} after {it} iterations")
            res_prev = min(res_prev, res)
            q = q + self._precond(r)

    def project(self, u: VectorField, A: tuple, q0: Field = None):
        """Remove the div_A part of u: returns (u_proj, q, iters, residual)."""
        q, uproj, it, res = self.solve(u, A, source=None, q0=q0)
        return uproj, q, it, res


def project_div_free(u: VectorField, A: tuple, rho_at_nodes: np.ndarray,
                     tol: float = 1e-10, maxit: int = 50,
                     max_A_dev: float = 0.25):
    """One-shot Helmholtz-type projection u -> u − ρ̄⁻¹∇_A q (see
    PressureSolver for the scheme).  Rejects geometries too far from the
    identity, where the fixed point is not a contraction."""
    dev = max(np.abs(A[0] - 1.0).max(), np.abs(A[1]).max(),
              np.abs(A[2]).max(), np.abs(A[3] - 1.0).max())
    if dev > max_A_dev:
        raise ProjectionError(f"flow map too distorted: ||A − I||∞ = {dev:.3f}")
    ps = PressureSolver(u.c1.grid, rho_at_nodes, tol=tol, maxit=maxit)
    uproj, q, it, res = ps.project(u, A)
    return uproj, q


def apply_batched(ops: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """ops: real (Nn, M, M); rhs: complex (Nn, M).  Returns ops @ rhs per
    horizontal mode via two real batched matmuls (BLAS path)."""
    stacked = np.stack([rhs.real, rhs.imag], axis=-1)  # (Nn, M, 2)
    out = np.matmul(ops, stacked)
    return out[..., 0] + 1j * out[..., 1]


def cos_moments(values_at_fine: np.ndarray, y_fine: np.ndarray, h: float,
                nmodes: int) -> np.ndarray:
    """∫ f(y2) cos(jπy2/h) dy2 for j = 0..nmodes-1 by Simpson quadrature."""
    j = np.arange(nmodes)
    basis = np.cos(np.outer(y_fine, j) * np.pi / h)
    return simpson(values_at_fine[:, None] * basis, x=y_fine, axis=0)
