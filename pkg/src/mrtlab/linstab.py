"""Linear stability of the magnetized RT equilibrium.

Per horizontal wavenumber k = n/L the divergence-free constraint eliminates
the horizontal velocity, w1 = −w2'/k, and the linearized problem reduces to
quadratic forms in the vertical profile φ = w2(y2):

    potential energy   E(w) = g ∫ ρ' φ² − λ m² ∫ (k²φ² + φ'²)
    kinetic weight     ∫ ρ (φ² + φ'²/k²)
    viscous weight     ∫ (k²φ² + 2φ'² + φ''²/k²)   ( = ||∇w||₀² )

in the sine basis sin(jπ y2/h), whose natural boundary conditions
(φ = φ'' = 0 at the walls) are exactly the slip-wall conditions.  The
critical field strength is

    m_C² = sup over k of the largest eigenvalue μ of
           g ρ' φ = μ λ (−φ'' + k² φ),   φ(0) = φ(h) = 0,

and the growth rate Λ of an unstable mode is the unique fixed point
Λ² = α(Λ) of α(s) = sup E(v) − sμ||∇v||₀² over ||√ρ v||₀ = 1 (α is
nonincreasing in s, so plain bisection is safe).

Everything is assembled from three Galerkin matrices (ρ, ρ' in the sine
basis, ρ in the cosine basis).  A dense two-component quadratic-pencil
eigensolver over the same truncation is kept as an independent solution
route for cross-checking the variational path.
"""

from __future__ import annotations

import numpy as np
from dataclasses import dataclass
from numpy.polynomial.legendre import leggauss
from scipy import linalg as sla

from .profiles import DensityProfile, check_rt_condition
from . import spectral as sp


@dataclass(frozen=True)
class LinearMode:
    """One unstable eigenmode of the linearized slab problem.

    Coefficient arrays live in the vertical Galerkin bases: w2_hat over
    sin(jπy2/h) (j = 1..M), w1_hat and beta_hat over cos(jπy2/h)
    (j = 1..M, the j = 0 slots vanish).  Horizontal phase convention:
    w2, beta ∝ cos(k y1), w1 ∝ sin(k y1).
    """

    n: int
    k: float
    Lambda: float
    m: float
    w2_hat: np.ndarray
    w1_hat: np.ndarray
    beta_hat: np.ndarray
    beta0: float
    h: float
    L: float

    def w2_values(self, y2):
        j = np.arange(1, len(self.w2_hat) + 1)
        return np.sin(np.outer(y2, j) * np.pi / self.h) @ self.w2_hat

    def w1_values(self, y2):
        j = np.arange(1, len(self.w1_hat) + 1)
        return np.cos(np.outer(y2, j) * np.pi / self.h) @ self.w1_hat

    def beta_values(self, y2):
        j = np.arange(1, len(self.beta_hat) + 1)
        return self.beta0 + np.cos(np.outer(y2, j) * np.pi / self.h) @ self.beta_hat


@dataclass(frozen=True)
class CriticalField:
    """Threshold field strength with the maximizing mode."""

    mc: float
    argmax_n: int
    argmax_k: float
    profile_hat: np.ndarray  # sine coefficients of the maximizer
    stable_for_all_m: bool
    bound_paper: float       # (h/π) sqrt(g max ρ'⁺ / λ)


@dataclass(frozen=True)
class DispersionCurve:
    m: float
    entries: tuple  # ((n, k, Lambda-or-None), ...) sorted by k


class StabilityOperator:
    """Galerkin matrices for one (profile, physics) choice, reused across k."""

    def __init__(self, profile: DensityProfile, g: float, lam: float,
                 mu: float, L: float, N2: int, nq: int = None):
        if lam <= 0 or L <= 0 or mu < 0:
            raise ValueError("need lambda > 0, L > 0, mu >= 0")
        self.profile = profile
        self.g, self.lam, self.mu, self.L = g, lam, mu, L
        self.h = profile.h
        self.M = int(N2)
        nq = nq or max(2 * self.M + 64, 256)
        x, w = leggauss(nq)
        yq = 0.5 * self.h * (x + 1.0)
        wq = 0.5 * self.h * w
        j = np.arange(1, self.M + 1)
        S = np.sin(np.outer(yq, j) * np.pi / self.h)        # (nq, M)
        C = np.cos(np.outer(yq, j) * np.pi / self.h)        # (nq, M), j >= 1
        rho = profile.rho(yq)
        drho = profile.drho(yq)
        self.Rs = S.T @ (wq[:, None] * rho[:, None] * S)    # ∫ρ sin sin
        self.Rc = C.T @ (wq[:, None] * rho[:, None] * C)    # ∫ρ cos cos (j>=1)
        self.Rc0 = (wq * rho) @ C                           # ∫ρ cos_j, j >= 1
        self.Rd = S.T @ (wq[:, None] * drho[:, None] * S)   # ∫ρ' sin sin
        self.b = j * np.pi / self.h
        self.max_drho_plus = max(float(profile.d1.max()), 0.0)

    # -- critical field strength ------------------------------------------

    def mu_max(self, k: float, with_vector: bool = False):
        """Largest eigenvalue of gρ'φ = μ λ(−φ'' + k²φ) in the sine basis."""
        D = self.lam * (self.h / 2.0) * (self.b**2 + k**2)
        vals, vecs = sla.eigh(self.Rd, np.diag(D))
        mu = self.g * vals[-1]
        if with_vector:
            return mu, vecs[:, -1]
        return mu

    def critical_field(self, n_max: int = 32) -> CriticalField:
        bound = (self.h / np.pi) * np.sqrt(self.g * self.max_drho_plus / self.lam)
        if not check_rt_condition(self.profile):
            return CriticalField(0.0, 0, 0.0, np.zeros(self.M), True, bound)
        best = (-np.inf, 0, None)
        decreasing = 0
        prev = None
        for n in range(1, n_max + 1):
            k = n / self.L
            mu, vec = self.mu_max(k, with_vector=True)
            if mu > best[0]:
                best = (mu, n, vec)
            if prev is not None:
                decreasing = decreasing + 1 if mu < prev else 0
            prev = mu
            if decreasing >= 3:
                break
        mu_sup, n_star, vec = best
        mc = np.sqrt(max(mu_sup, 0.0))
        if mu_sup <= 0.0:
            return CriticalField(0.0, 0, 0.0, np.zeros(self.M), True, bound)
        norm = np.sqrt(vec @ ((self.h / 2.0) * vec))
        return CriticalField(float(mc), n_star, n_star / self.L, vec / norm,
                             False, bound)

    # -- modified variational method --------------------------------------

    def _forms(self, k: float, m: float):
        h2 = self.h / 2.0
        Mden = self.Rs + (np.outer(self.b, self.b) * self.Rc) / k**2
        N0 = self.g * self.Rd - self.lam * m**2 * h2 * np.diag(k**2 + self.b**2)
        V = h2 * (k**2 + self.b**2) ** 2 / k**2  # ||∇w||² multiplier
        return N0, V, Mden

    def alpha(self, s: float, k: float, m: float, with_vector: bool = False):
        """sup of (E(v) − sμ||∇v||²)/||√ρ v||² over the k-mode subspace."""
        if s < 0:
            raise ValueError("s must be nonnegative")
        N0, V, Mden = self._forms(k, m)
        N = N0 - s * self.mu * np.diag(V)
        vals, vecs = sla.eigh(N, Mden)
        if with_vector:
            return float(vals[-1]), vecs[:, -1]
        return float(vals[-1])

    def growth_rate(self, k: float, m: float, tol: float = 1e-10,
                    with_vector: bool = False):
        """Unique Λ > 0 with Λ² = α(Λ), or None when the mode is stable."""
        a0 = self.alpha(0.0, k, m)
        if a0 <= 0.0:
            return (None, None) if with_vector else None
        lo, hi = 0.0, np.sqrt(a0)
        flo = a0
        # α nonincreasing => f(s) = α(s) − s² is strictly decreasing
        while hi - lo > tol * max(hi, 1.0):
            mid = 0.5 * (lo + hi)
            f = self.alpha(mid, k, m) - mid * mid
            if f > 0.0:
                lo, flo = mid, f
            else:
                hi = mid
        lam_star = 0.5 * (lo + hi)
        if with_vector:
            _, vec = self.alpha(lam_star, k, m, with_vector=True)
            return lam_star, vec
        return lam_star

    # -- eigenmode assembly -------------------------------------------------

    def build_mode(self, n: int, m: float, Lambda: float,
                   phi_hat: np.ndarray) -> LinearMode:
        k = n / self.L
        w1 = -self.b * phi_hat / k
        # normalize ||√ρ w||₀ = 1 over the periodic cell
        nrm2 = np.pi * self.L * (phi_hat @ self.Rs @ phi_hat + w1 @ self.Rc @ w1)
        scale = 1.0 / np.sqrt(nrm2)
        phi, w1 = phi_hat * scale, w1 * scale
        # pressure from the vertical momentum balance:
        # Λ ∂2β = −Λ²ρw2 + Λμ(∂2²−k²)w2 − λm²k²w2 + gρ'w2
        rhs = (-Lambda**2 * (2.0 / self.h) * (self.Rs @ phi)
               - Lambda * self.mu * (self.b**2 + k**2) * phi
               - self.lam * m**2 * k**2 * phi
               + self.g * (2.0 / self.h) * (self.Rd @ phi)) / Lambda
        beta = -rhs / self.b
        # the y2-mean of β balances the horizontal-mean part of the first
        # momentum equation (the gauge only fixes the full 2D mean)
        beta0 = Lambda * float(self.Rc0 @ w1) / (self.h * k)
        return LinearMode(n=n, k=k, Lambda=float(Lambda), m=m, w2_hat=phi,
                          w1_hat=w1, beta_hat=beta, beta0=beta0,
                          h=self.h, L=self.L)

    def fastest_mode(self, m: float, n_max: int = 16):
        best = None
        for n in range(1, n_max + 1):
            k = n / self.L
            got = self.growth_rate(k, m, with_vector=True)
            lam_n, vec = got
            if lam_n is None:
                continue
            if best is None or lam_n > best[0]:
                best = (lam_n, n, vec)
        if best is None:
            return None
        lam_star, n_star, vec = best
        return self.build_mode(n_star, m, lam_star, vec)

    def dispersion(self, m: float, n_max: int = 16) -> DispersionCurve:
        entries = []
        for n in range(1, n_max + 1):
            k = n / self.L
            entries.append((n, k, self.growth_rate(k, m)))
        return DispersionCurve(m=m, entries=tuple(entries))

    # -- independent dense route -------------------------------------------

    def pencil_growth_rate(self, k: float, m: float):
        """Largest real eigenvalue of the two-component quadratic pencil

            Λ²ρ w + Λ∇β − Λμ∆w = λm²∂1²w + gρ'w2 e2,  div w = 0,

        over the same truncation, by companion linearization and a dense
        generalized eigensolve (β and w1 retained as unknowns)."""
        M = self.M
        h2 = self.h / 2.0
        visc = self.mu * h2 * np.diag(k**2 + self.b**2)
        tension = self.lam * m**2 * k**2 * h2 * np.eye(M)
        Z = np.zeros((M, M))
        B2 = np.block([[self.Rs, Z, Z], [Z, self.Rc, Z], [Z, Z, Z]])
        B1 = np.block([[visc, Z, -h2 * np.diag(self.b)],
                       [Z, visc, -h2 * k * np.eye(M)],
                       [Z, Z, Z]])
        B0 = np.block([[tension - self.g * self.Rd, Z, Z],
                       [Z, tension, Z],
                       [np.diag(self.b), k * np.eye(M), Z]])
        n3 = 3 * M
        A = np.block([[-B1, -B0], [np.eye(n3), np.zeros((n3, n3))]])
        B = np.block([[B2, np.zeros((n3, n3))],
                      [np.zeros((n3, n3)), np.eye(n3)]])
        vals = sla.eig(A, B, right=False)
        vals = vals[np.isfinite(vals)]
        real = vals[np.abs(vals.imag) < 1e-8 * np.maximum(np.abs(vals.real), 1.0)].real
        real = real[real > 1e-10]
        return float(real.max()) if len(real) else None


# ---------------------------------------------------------------------------
# functional API

def compute_mc(p: DensityProfile, g: float, lam: float, L: float, N2: int,
               n_max: int = 32) -> CriticalField:
    op = StabilityOperator(p, g, lam, 0.0, L, N2)
    return op.critical_field(n_max=n_max)


def alpha_of_s(s: float, k: float, m: float, p: DensityProfile, g: float,
               lam: float, mu: float, N2: int) -> float:
    # α is a per-mode quantity: only k enters, not the box length
    return StabilityOperator(p, g, lam, mu, 1.0, N2).alpha(s, k, m)


def growth_rate(k: float, m: float, p: DensityProfile, g: float, lam: float,
                mu: float, N2: int):
    return StabilityOperator(p, g, lam, mu, 1.0, N2).growth_rate(k, m)


def fastest_mode(m: float, p: DensityProfile, g: float, lam: float, mu: float,
                 L: float, n_max: int, N2: int):
    return StabilityOperator(p, g, lam, mu, L, N2).fastest_mode(m, n_max=n_max)


def dispersion_curve(m: float, p: DensityProfile, g: float, lam: float,
                     mu: float, L: float, n_max: int, N2: int) -> DispersionCurve:
    return StabilityOperator(p, g, lam, mu, L, N2).dispersion(m, n_max=n_max)


def potential_energy(w: sp.VectorField, m: float, p: DensityProfile,
                     g: float, lam: float) -> float:
    """E(w) = g ∫ ρ' w2² dy − λ ||m ∂1 w||₀² for a field on the 2D grid.

    The buoyancy integral is taken on a doubled grid so the w2² product is
    quadrature-exact for band-limited fields."""
    w2r = sp.refine(w.c2)
    grid2 = w2r.grid
    drho = p.drho(grid2.y2)
    v2 = sp.phys(w2r)
    quad = (2 * np.pi * grid2.L / grid2.N1) * (grid2.h / grid2.N2)
    buoy = g * quad * float(np.sum(drho[None, :] * v2 * v2))
    tension = lam * m**2 * (sp.l2_sq(sp.ddy1(w.c1)) + sp.l2_sq(sp.ddy1(w.c2)))
    return buoy - tension


def potential_energy_mode(phi_hat: np.ndarray, k: float, m: float,
                          p: DensityProfile, g: float, lam: float,
                          L: float) -> float:
    """E for a single k-mode given the sine coefficients of w2 (the
    horizontal measure πL of cos²(k y1) included)."""
    op = StabilityOperator(p, g, lam, 0.0, L, len(phi_hat))
    h2 = op.h / 2.0
    buoy = g * (phi_hat @ op.Rd @ phi_hat)
    tension = lam * m**2 * h2 * float(
        np.sum((k**2 + op.b**2) * phi_hat**2))
    return np.pi * L * (buoy - tension)
