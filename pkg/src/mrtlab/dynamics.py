"""Nonlinear time integration of the Lagrangian slab problem.

Unknowns are the flow-map displacement η(y, t), the velocity u(y, t) and
the pressure q(y, t) on the periodic slab, evolving by

    η_t = u,
    ρ̄ u_t + ∇_A q − μ Δ_A u = λ m² ∂1² η + G_η e2,
    div_A u = 0,
    (η2, ∂2η1, u2, ∂2u1) = 0 at the walls,

with A = (I + ∇η)^{-T}, J = det(I + ∇η) and G_η = g(ρ̄(y2+η2) − ρ̄(y2)).
The magnetic field never appears as an unknown: B = m ∂1(y + η) exactly.

Time scheme: second-order IMEX predictor-corrector.  The stiff pair
(μΔu, λm²∂1²η) is advanced implicitly — substituting η_t = u couples them
into one solve per velocity component whose operator is

    ρ̄ + (dt/2) μ (k² + b²) + (dt²/4) λ m² k²,

dense per horizontal mode in the vertical because of ρ̄(y2) (factorized
once per dt and reused).  The geometric corrections μ(Δ_A − Δ)u, the
gravity source and the pressure gradient are explicit at the predicted
midpoint; incompressibility is restored by a div_A projection after each
stage.  Equilibrium (η = u = 0) is a fixed point of the discrete update
to machine precision.

For diagnostics, (u_t, q) are reconstructed from the momentum equation
plus the differentiated constraint div_A u_t = (A(∇u)ᵀA) : ∇u, so energy
reports do not depend on the time step.
"""

from __future__ import annotations

import hashlib
import time as _time
import numpy as np
from dataclasses import dataclass

from . import spectral as sp
from .linstab import LinearMode
from .profiles import DensityProfile, eval_gravity_term


class FlowMapDegeneracyError(RuntimeError):
    """det(I + ∇η) left the admissible range [1/2, 3/2]."""


class TimeStepFloorError(RuntimeError):
    """Adaptive halving pushed dt below the configured floor."""


class SeedError(ValueError):
    """Initial data request cannot be satisfied (e.g. stable mode)."""


@dataclass(frozen=True)
class FlowState:
    """Lagrangian unknowns at one instant (spectral representation)."""

    t: float
    eta: sp.VectorField
    u: sp.VectorField
    q: sp.Field

    @property
    def grid(self) -> sp.SlabGrid:
        return self.eta.c1.grid

    def magnetic_field(self, m: float):
        """B = m ∂1(y + η) = m (1 + ∂1η1, ∂1η2)."""
        b1 = m * (1.0 + sp.phys(sp.ddy1(self.eta.c1)))
        b2 = m * sp.phys(sp.ddy1(self.eta.c2))
        return b1, b2


@dataclass
class SimConfig:
    """Physics constants, grid, and run controls for one simulation."""

    profile: DensityProfile
    grid: sp.SlabGrid
    mu: float
    g: float
    lam: float
    m: float
    dt: float
    t_end: float
    # seeding (used by run() when no state is supplied)
    seed_mode: LinearMode = None
    delta: float = 0.0
    phase: float = 0.0
    eta_delta: float = None
    seed_path: str = None
    # numerics
    dt_min: float = None
    cfl: float = 0.4
    proj_tol: float = 1e-10
    proj_maxit: int = 50
    j_min: float = 0.5
    j_max: float = 1.5
    clamp_frac: float = 0.05
    cadence: float = 0.1

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.dt_min is None:
            self.dt_min = self.dt / 1024.0


@dataclass
class RunResult:
    termination: str
    t_final: float
    wall_time: float
    counters: dict
    state: FlowState


# ---------------------------------------------------------------------------
# flow-map geometry

def build_A(eta: sp.VectorField, j_min: float = 0.5, j_max: float = 1.5):
    """A = J⁻¹ [[1+∂2η2, −∂1η2], [−∂2η1, 1+∂1η1]] and J = det(I+∇η).

    Returns (A, J) as physical arrays; raises when J leaves [j_min, j_max]
    (the flow map is no longer a diffeomorphism of the slab)."""
    d1e1 = sp.phys(sp.ddy1(eta.c1))
    d2e1 = sp.phys(sp.ddy2(eta.c1))
    d1e2 = sp.phys(sp.ddy1(eta.c2))
    d2e2 = sp.phys(sp.ddy2(eta.c2))
    J = (1.0 + d1e1) * (1.0 + d2e2) - d1e2 * d2e1
    if J.min() < j_min or J.max() > j_max:
        raise FlowMapDegeneracyError(
            f"J range [{J.min():.4f}, {J.max():.4f}] outside "
            f"[{j_min}, {j_max}]")
    A = ((1.0 + d2e2) / J, -d1e2 / J, -d2e1 / J, (1.0 + d1e1) / J)
    return A, J


def lap_A(f: sp.Field, A: tuple) -> sp.Field:
    """Δ_A f = div_A(∇_A f) for a scalar of either parity.

    Identity parts are exact spectral; Ã = A − I products are dealiased."""
    g = f.grid
    d1, d2 = sp.ddy1(f), sp.ddy2(f)
    p1, p2 = sp.phys(d1), sp.phys(d2)
    A11, A12, A21, A22 = A
    c1 = sp.dealias(sp.to_spectral(sp.field_from_physical(
        g, (A11 - 1.0) * p1 + A12 * p2, d1.parity)))
    c2 = sp.dealias(sp.to_spectral(sp.field_from_physical(
        g, A21 * p1 + (A22 - 1.0) * p2, d2.parity)))
    G1 = sp.field_from_spectral(g, sp.spec(d1) + sp.spec(c1), d1.parity)
    G2 = sp.field_from_spectral(g, sp.spec(d2) + sp.spec(c2), d2.parity)
    e1, e2 = sp.ddy1(G1), sp.ddy2(G2)
    q1, q2 = sp.phys(sp.ddy1(G2)), sp.phys(sp.ddy2(G1))
    corr = sp.dealias(sp.to_spectral(sp.field_from_physical(
        g, (A11 - 1.0) * sp.phys(e1) + A12 * q2
        + A21 * q1 + (A22 - 1.0) * sp.phys(e2), f.parity)))
    return sp.field_from_spectral(
        g, sp.spec(e1) + sp.spec(e2) + sp.spec(corr), f.parity)


# ---------------------------------------------------------------------------
# stepping machinery

class Stepper:
    """Precomputed operators for one SimConfig; owns the per-step update."""

    def __init__(self, cfg: SimConfig):
        self.cfg = cfg
        g = cfg.grid
        self.rho = cfg.profile.rho(g.y2)
        self.chi = 1.0 / self.rho
        self.pressure = sp.PressureSolver(g, self.rho, tol=cfg.proj_tol,
                                          maxit=cfg.proj_maxit)
        self._mom = _rho_moments(g, self.rho)  # ∫ρ cos_j dy2
        self._implicit_cache = {}
        self.counters = {"steps": 0, "clamped_points": 0, "proj_iters_max": 0,
                         "max_J_drift": 0.0, "max_div_residual": 0.0,
                         "min_dt": cfg.dt, "cfl_halvings": 0}

    # -- implicit operator ---------------------------------------------------

    def _implicit_inverses(self, dt: float):
        ops = self._implicit_cache.get(dt)
        if ops is not None:
            return ops
        cfg, g = self.cfg, self.cfg.grid
        a_mu = 0.5 * dt * cfg.mu
        a_ten = 0.25 * dt * dt * cfg.lam * cfg.m**2
        kx = g.kx
        out = {}
        for parity in (sp.NEUMANN, sp.DIRICHLET):
            R = sp.mult_matrix(g, parity, self.rho)
            b2 = g.bj(parity) ** 2
            inv = np.empty((len(kx), g.N2, g.N2))
            for i, k in enumerate(kx):
                M = R + np.diag(a_mu * (k * k + b2) + a_ten * k * k)
                inv[i] = np.linalg.inv(M)
            out[parity] = inv
        self._implicit_cache[dt] = out
        return out

    def _implicit_solve(self, rhs1: np.ndarray, rhs2: np.ndarray, dt: float):
        ops = self._implicit_inverses(dt)
        u1 = sp.apply_batched(ops[sp.NEUMANN], rhs1)
        u2 = sp.apply_batched(ops[sp.DIRICHLET], rhs2)
        g = self.cfg.grid
        return sp.VectorField(sp.field_from_spectral(g, u1, sp.NEUMANN),
                              sp.field_from_spectral(g, u2, sp.DIRICHLET))

    # -- explicit force ------------------------------------------------------

    def explicit_force(self, eta: sp.VectorField, u: sp.VectorField,
                       q: sp.Field, A: tuple):
        """μ(Δ_A − Δ)u + G_η e2 − ∇_A q, spectral components (f1, f2)."""
        cfg, g = self.cfg, self.cfg.grid
        f1 = cfg.mu * (sp.spec(lap_A(u.c1, A)) - sp.spec(sp.laplacian(u.c1)))
        f2 = cfg.mu * (sp.spec(lap_A(u.c2, A)) - sp.spec(sp.laplacian(u.c2)))
        Gv, _, nclamp = eval_gravity_term(
            cfg.profile, cfg.g, sp.phys(eta.c2), g.y2,
            max_clamp_frac=cfg.clamp_frac)
        self.counters["clamped_points"] += nclamp
        Gf = sp.dealias(sp.to_spectral(sp.field_from_physical(g, Gv, sp.DIRICHLET)))
        gq = sp.grad_A(q, A)
        return f1 - sp.spec(gq.c1), f2 + sp.spec(Gf) - sp.spec(gq.c2)

    # -- constraints ---------------------------------------------------------

    def _fix_means(self, v: sp.VectorField) -> sp.VectorField:
        """Remove the weighted horizontal mean (ρ̄ v1)_Ω (Remark-2.4 gauge)."""
        c = sp.spec(v.c1).copy()
        c[0, 0] -= (c[0, :].real @ self._mom) / self._mom[0]
        return sp.VectorField(
            sp.field_from_spectral(self.cfg.grid, c, sp.NEUMANN), v.c2)

    def _project(self, u: sp.VectorField, A: tuple, q0: sp.Field = None):
        q, uproj, it, res = self.pressure.solve(u, A, q0=q0)
        self.counters["proj_iters_max"] = max(self.counters["proj_iters_max"], it)
        self.counters["max_div_residual"] = max(
            self.counters["max_div_residual"], res)
        return self._fix_means(uproj), q

    # -- time step -----------------------------------------------------------

    def _cfl_dt(self, u: sp.VectorField) -> float:
        g = self.cfg.grid
        umax = max(np.abs(sp.phys(u.c1)).max(), np.abs(sp.phys(u.c2)).max())
        if umax == 0.0:
            return np.inf
        dy = min(2 * np.pi * g.L / g.N1, g.h / g.N2)
        return self.cfg.cfl * dy / umax

    def step(self, state: FlowState) -> FlowState:
        cfg, g = self.cfg, self.cfg.grid
        dt = cfg.dt
        dt_adv = self._cfl_dt(state.u)
        while dt > dt_adv:
            dt *= 0.5
            self.counters["cfl_halvings"] += 1
            if dt < cfg.dt_min:
                raise TimeStepFloorError(
                    f"CFL requires dt < {dt_adv:.3e} < floor {cfg.dt_min:.3e}")
        self.counters["min_dt"] = min(self.counters["min_dt"], dt)
        rho = self.rho[None, :]
        dth = 0.5 * dt
        tenk2 = cfg.lam * cfg.m**2 * g.kx[:, None] ** 2

        def rho_mult(f: sp.Field) -> np.ndarray:
            return sp.spec(sp.to_spectral(sp.field_from_physical(
                g, rho * sp.phys(f), f.parity)))

        eta_n, u_n, q_n = state.eta, state.u, state.q
        A_n, _ = build_A(eta_n, cfg.j_min, cfg.j_max)
        ru1, ru2 = rho_mult(u_n.c1), rho_mult(u_n.c2)

        # predictor: backward Euler over dt/2 with explicit terms frozen at t_n
        fx1, fx2 = self.explicit_force(eta_n, u_n, q_n, A_n)
        r1 = ru1 + dth * (-tenk2 * sp.spec(eta_n.c1) + fx1)
        r2 = ru2 + dth * (-tenk2 * sp.spec(eta_n.c2) + fx2)
        u_h = self._implicit_solve(r1, r2, dt)
        eta_h = _axpy(eta_n, dth, u_h)
        A_h, _ = build_A(eta_h, cfg.j_min, cfg.j_max)
        u_h, dphi = self._project(u_h, A_h, q0=None)
        q_h = sp.field_from_spectral(
            g, sp.spec(q_n) + sp.spec(dphi) / dth, sp.NEUMANN)
        eta_h = _axpy(eta_n, dth, u_h)
        # A_h is kept from the pre-projection geometry: the difference is
        # O(dt ||δφ||), below the corrector's order

        # corrector: trapezoidal implicit terms, explicit terms at midpoint
        fx1, fx2 = self.explicit_force(eta_h, u_h, q_h, A_h)
        Dsym_N = g.laplace_symbol(sp.NEUMANN)
        Dsym_D = g.laplace_symbol(sp.DIRICHLET)
        r1 = (ru1 + dt * (-0.5 * cfg.mu * Dsym_N * sp.spec(u_n.c1)
                          - tenk2 * sp.spec(eta_n.c1)
                          - 0.25 * dt * tenk2 * sp.spec(u_n.c1) + fx1))
        r2 = (ru2 + dt * (-0.5 * cfg.mu * Dsym_D * sp.spec(u_n.c2)
                          - tenk2 * sp.spec(eta_n.c2)
                          - 0.25 * dt * tenk2 * sp.spec(u_n.c2) + fx2))
        u_s = self._implicit_solve(r1, r2, dt)
        eta_next = _axpy_mid(eta_n, dt, u_n, u_s)
        A_next, J = build_A(eta_next, cfg.j_min, cfg.j_max)
        u_next, dphi = self._project(u_s, A_next, q0=None)
        q_next = sp.field_from_spectral(
            g, sp.spec(q_h) + sp.spec(dphi) / dt, sp.NEUMANN)
        eta_next = _axpy_mid(eta_n, dt, u_n, u_next)
        eta_next = sp.VectorField(
            _strip_weighted_mean(eta_next.c1, self._mom), eta_next.c2)
        self.counters["max_J_drift"] = max(self.counters["max_J_drift"],
                                           float(np.abs(J - 1.0).max()))
        self.counters["steps"] += 1
        return FlowState(t=state.t + dt, eta=eta_next, u=u_next, q=q_next)

    # -- diagnostics ----------------------------------------------------------

    def momentum_force(self, state: FlowState, A: tuple):
        """Full right-hand side μΔ_A u + λm²∂1²η + G_η e2 (spectral)."""
        cfg, g = self.cfg, self.cfg.grid
        tenk2 = cfg.lam * cfg.m**2 * g.kx[:, None] ** 2
        f1 = cfg.mu * sp.spec(lap_A(state.u.c1, A)) - tenk2 * sp.spec(state.eta.c1)
        f2 = cfg.mu * sp.spec(lap_A(state.u.c2, A)) - tenk2 * sp.spec(state.eta.c2)
        Gv, _, _ = eval_gravity_term(cfg.profile, cfg.g, sp.phys(state.eta.c2),
                                     g.y2, max_clamp_frac=1.0)
        Gf = sp.dealias(sp.to_spectral(sp.field_from_physical(g, Gv, sp.DIRICHLET)))
        return f1, f2 + sp.spec(Gf)

    def reconstruct_ut_q(self, state: FlowState):
        """(u_t, q) from the momentum equation and the time-differentiated
        incompressibility constraint div_A u_t = (A(∇u)ᵀA) : ∇u."""
        cfg, g = self.cfg, self.cfg.grid
        A, _ = build_A(state.eta, cfg.j_min, cfg.j_max)
        f1, f2 = self.momentum_force(state, A)
        w = sp.VectorField(
            sp.to_spectral(sp.field_from_physical(
                g, self.chi[None, :] * sp.phys(
                    sp.field_from_spectral(g, f1, sp.NEUMANN)), sp.NEUMANN)),
            sp.to_spectral(sp.field_from_physical(
                g, self.chi[None, :] * sp.phys(
                    sp.field_from_spectral(g, f2, sp.DIRICHLET)), sp.DIRICHLET)))
        s = self._div_ut_source(state, A)
        q, ut, _, _ = self.pressure.solve(w, A, source=s)
        return ut, q

    def _div_ut_source(self, state: FlowState, A: tuple) -> sp.Field:
        g = self.cfg.grid
        du = {}
        du[(1, 1)] = sp.phys(sp.ddy1(state.u.c1))
        du[(1, 2)] = sp.phys(sp.ddy2(state.u.c1))
        du[(2, 1)] = sp.phys(sp.ddy1(state.u.c2))
        du[(2, 2)] = sp.phys(sp.ddy2(state.u.c2))
        Am = np.array([[A[0], A[1]], [A[2], A[3]]])
        # M_{lk} = A_{la} ∂_a u_b A_{bk};  source = M_{lk} ∂_k u_l
        s = np.zeros((g.N1, g.N2))
        for l in range(2):
            for k in range(2):
                Mlk = sum(Am[l, a] * du[(b + 1, a + 1)] * Am[b, k]
                          for a in range(2) for b in range(2))
                s += Mlk * du[(l + 1, k + 1)]
        return sp.dealias(sp.to_spectral(sp.field_from_physical(g, s, sp.NEUMANN)))


def _axpy(eta: sp.VectorField, a: float, u: sp.VectorField) -> sp.VectorField:
    g = eta.c1.grid
    return sp.VectorField(
        sp.field_from_spectral(g, sp.spec(eta.c1) + a * sp.spec(u.c1), sp.NEUMANN),
        sp.field_from_spectral(g, sp.spec(eta.c2) + a * sp.spec(u.c2), sp.DIRICHLET))


def _axpy_mid(eta, dt, ua, ub):
    g = eta.c1.grid
    return sp.VectorField(
        sp.field_from_spectral(g, sp.spec(eta.c1) + 0.5 * dt * (
            sp.spec(ua.c1) + sp.spec(ub.c1)), sp.NEUMANN),
        sp.field_from_spectral(g, sp.spec(eta.c2) + 0.5 * dt * (
            sp.spec(ua.c2) + sp.spec(ub.c2)), sp.DIRICHLET))


def _rho_moments(grid: sp.SlabGrid, rho: np.ndarray) -> np.ndarray:
    cosb = np.cos(np.outer(grid.y2, np.arange(grid.N2)) * np.pi / grid.h)
    return (grid.h / grid.N2) * (rho @ cosb)


def _strip_weighted_mean(f: sp.Field, mom: np.ndarray) -> sp.Field:
    """Shift the rigid mode so (ρ̄ f)_Ω = 0; mom holds ∫ρ̄ cos_j dy2."""
    c = sp.spec(f).copy()
    c[0, 0] -= (c[0, :].real @ mom) / mom[0]
    return sp.field_from_spectral(f.grid, c, sp.NEUMANN)


# ---------------------------------------------------------------------------
# seeding

def seed_initial_data(mode: LinearMode, delta: float, grid: sp.SlabGrid,
                      profile: DensityProfile, phase: float = 0.0,
                      proj_tol: float = 1e-12,
                      eta_delta: float = None) -> FlowState:
    """Initial data (η0, u0) = (η_δ w, δ w) from a linear eigenmode,
    corrected onto the nonlinear constraint set by the div_{A0} projection
    (the correction is O(δ²)) and stripped of weighted horizontal means.

    η_δ defaults to δ/Λ (the linear growing-solution pairing used to start
    instability runs).  Stable-regime relaxation experiments pass
    eta_delta=0.0 to start from a pure velocity impulse against the
    unperturbed flow map."""
    if mode is None or not np.isfinite(mode.Lambda) or mode.Lambda <= 0:
        raise SeedError("seeding requires an unstable linear mode")
    if delta <= 0:
        raise SeedError("delta must be positive")
    if eta_delta is None:
        eta_delta = delta / mode.Lambda
    if len(mode.w2_hat) > grid.N2:
        raise SeedError("mode resolution exceeds the grid")
    if mode.n > grid.N1 // 3:
        raise SeedError("mode wavenumber beyond the dealiased band")
    M = len(mode.w2_hat)
    Mc = min(M, grid.N2 - 1)  # cos slots stop at j = N2-1
    if M > Mc and np.abs(mode.w1_hat[Mc:]).max() > 1e-6 * np.abs(mode.w1_hat).max():
        raise SeedError("mode has significant content beyond the grid's "
                        "cosine band; lower the mode resolution")
    shape = (grid.N1 // 2 + 1, grid.N2)
    ph = np.exp(1j * phase)

    w2 = np.zeros(shape, complex)
    w2[mode.n, :M] = 0.5 * ph * mode.w2_hat         # a(y2) cos(k y1 + phase)
    w1c = np.zeros(shape, complex)
    w1c[mode.n, 1:Mc + 1] = -0.5j * ph * mode.w1_hat[:Mc]  # sin(k y1 + phase)
    bc = np.zeros(shape, complex)
    bc[mode.n, 1:Mc + 1] = 0.5 * ph * mode.beta_hat[:Mc]
    bc[mode.n, 0] = 0.5 * ph * mode.beta0

    def vf(c1, c2):
        return sp.VectorField(sp.field_from_spectral(grid, c1, sp.NEUMANN),
                              sp.field_from_spectral(grid, c2, sp.DIRICHLET))

    w = vf(w1c, w2)
    eta0 = vf(eta_delta * w1c, eta_delta * w2)
    u0 = vf(delta * w1c, delta * w2)
    q0 = sp.field_from_spectral(grid, delta * bc, sp.NEUMANN)

    rho = profile.rho(grid.y2)
    mom = _rho_moments(grid, rho)
    A0, _ = build_A(eta0)
    tol = max(min(proj_tol, 1e-3 * delta * delta), 1e-15)
    ps = sp.PressureSolver(grid, rho, tol=tol, maxit=80)
    u0p, _, _, _ = ps.project(u0, A0)
    u0p = sp.VectorField(_strip_weighted_mean(u0p.c1, mom), u0p.c2)
    eta0 = sp.VectorField(_strip_weighted_mean(eta0.c1, mom), eta0.c2)
    return FlowState(t=0.0, eta=eta0, u=u0p, q=q0)


# ---------------------------------------------------------------------------
# run loop

def run(cfg: SimConfig, reporters=(), state: FlowState = None) -> RunResult:
    """Advance to t_end (or abort), invoking each reporter at the cadence.

    Reporters are callables reporter(state, stepper, aux) invoked at t = 0,
    at every cadence crossing, and at the final accepted state."""
    if state is None:
        if cfg.seed_path:
            state, _ = load_state(cfg.seed_path, cfg.grid)
        else:
            state = seed_initial_data(cfg.seed_mode, cfg.delta, cfg.grid,
                                      cfg.profile, phase=cfg.phase,
                                      eta_delta=cfg.eta_delta)
    stepper = Stepper(cfg)
    t0 = _time.perf_counter()
    termination = "completed"

    def emit(st):
        aux = dict(stepper.counters)
        for rep in reporters:
            rep(st, stepper, aux)

    emit(state)
    next_report = state.t + cfg.cadence
    try:
        while state.t < cfg.t_end - 1e-12:
            state = stepper.step(state)
            if state.t >= min(next_report, cfg.t_end) - 1e-12:
                emit(state)
                while next_report <= state.t + 1e-12:
                    next_report += cfg.cadence
    except (FlowMapDegeneracyError, sp.ProjectionError,
            TimeStepFloorError) as exc:
        termination = f"aborted: {type(exc).__name__}: {exc}"
    wall = _time.perf_counter() - t0
    return RunResult(termination=termination, t_final=state.t, wall_time=wall,
                     counters=dict(stepper.counters), state=state)


# ---------------------------------------------------------------------------
# Eulerian reconstruction

@dataclass(frozen=True)
class EulerianFields:
    """Perturbation fields composed with the inverse flow map, on the
    collocation grid re-read as Eulerian coordinates."""

    grid: sp.SlabGrid
    rho_pert: np.ndarray
    v1: np.ndarray
    v2: np.ndarray
    N1c: np.ndarray
    N2c: np.ndarray
    beta: np.ndarray
    newton_iters: int


def to_eulerian(state: FlowState, profile: DensityProfile, m: float,
                tol: float = 1e-12, maxit: int = 40) -> EulerianFields:
    """Invert x = ζ(y) = y + η(y) pointwise by Newton iteration and compose
    (ϱ, v, N, β) = (ρ̄(ζ⁻¹₂) − ρ̄(x₂), u∘ζ⁻¹, m∂1η∘ζ⁻¹, q∘ζ⁻¹)."""
    g = state.grid
    X1, X2 = np.meshgrid(g.y1, g.y2, indexing="ij")
    x1, x2 = X1.ravel(), X2.ravel()
    y1, y2 = x1.copy(), x2.copy()
    period = 2 * np.pi * g.L
    it_used = maxit
    for it in range(maxit):
        e1 = sp.eval_at_points(state.eta.c1, y1, y2)
        e2 = sp.eval_at_points(state.eta.c2, y1, y2)
        r1 = _wrap(y1 + e1 - x1, period)
        r2 = y2 + e2 - x2
        err = max(np.abs(r1).max(), np.abs(r2).max())
        if err < tol * max(g.h, period):
            it_used = it
            break
        j11 = 1.0 + sp.eval_at_points(sp.ddy1(state.eta.c1), y1, y2)
        j12 = sp.eval_at_points(sp.ddy2(state.eta.c1), y1, y2)
        j21 = sp.eval_at_points(sp.ddy1(state.eta.c2), y1, y2)
        j22 = 1.0 + sp.eval_at_points(sp.ddy2(state.eta.c2), y1, y2)
        det = j11 * j22 - j12 * j21
        y1 = y1 - (j22 * r1 - j12 * r2) / det
        y2 = np.clip(y2 - (-j21 * r1 + j11 * r2) / det, 0.0, g.h)
    else:
        bad = np.argsort(-(np.abs(r1) + np.abs(r2)))[:5]
        raise RuntimeError(
            f"flow-map inversion stalled at {err:.2e}; worst points "
            f"{[(x1[i], x2[i]) for i in bad]}")
    shape = (g.N1, g.N2)
    rho_pert = (profile.rho(y2) - profile.rho(x2)).reshape(shape)
    v1 = sp.eval_at_points(state.u.c1, y1, y2).reshape(shape)
    v2 = sp.eval_at_points(state.u.c2, y1, y2).reshape(shape)
    N1c = m * sp.eval_at_points(sp.ddy1(state.eta.c1), y1, y2).reshape(shape)
    N2c = m * sp.eval_at_points(sp.ddy1(state.eta.c2), y1, y2).reshape(shape)
    beta = sp.eval_at_points(state.q, y1, y2).reshape(shape)
    return EulerianFields(grid=g, rho_pert=rho_pert, v1=v1, v2=v2,
                          N1c=N1c, N2c=N2c, beta=beta, newton_iters=it_used)


def _wrap(x, period):
    return (x + 0.5 * period) % period - 0.5 * period


# ---------------------------------------------------------------------------
# snapshots

_FIELD_FILES = ("eta1", "eta2", "u1", "u2", "q")
_PARITIES = {"eta1": sp.NEUMANN, "eta2": sp.DIRICHLET,
             "u1": sp.NEUMANN, "u2": sp.DIRICHLET, "q": sp.NEUMANN}


def save_field(f: sp.Field, path) -> None:
    """One '#' header line (key=value), then little-endian float64 payload,
    row-major over (y1 index, vertical index)."""
    v = sp.phys(f)
    g = f.grid
    header = (f"# N1={g.N1} N2={g.N2} parity={f.parity} space=physical "
              f"L={g.L!r} h={g.h!r}\n")
    with open(path, "wb") as fh:
        fh.write(header.encode())
        fh.write(np.ascontiguousarray(v, dtype="<f8").tobytes())


def load_field(path, grid: sp.SlabGrid = None) -> sp.Field:
    with open(path, "rb") as fh:
        header = fh.readline().decode().strip()
        raw = fh.read()
    meta = dict(tok.split("=", 1) for tok in header.lstrip("# ").split())
    N1, N2 = int(meta["N1"]), int(meta["N2"])
    if grid is None:
        grid = sp.SlabGrid(L=float(meta["L"]), h=float(meta["h"]), N1=N1, N2=N2)
    if (grid.N1, grid.N2) != (N1, N2):
        raise ValueError(f"{path}: snapshot grid {N1}x{N2} does not match "
                         f"{grid.N1}x{grid.N2}")
    vals = np.frombuffer(raw, dtype="<f8").reshape(N1, N2)
    return sp.field_from_physical(grid, vals.copy(), meta["parity"])


def save_state(state: FlowState, dirpath, extra: dict = None) -> None:
    import os
    os.makedirs(dirpath, exist_ok=True)
    fields = {"eta1": state.eta.c1, "eta2": state.eta.c2,
              "u1": state.u.c1, "u2": state.u.c2, "q": state.q}
    hasher = hashlib.sha256()
    for name in _FIELD_FILES:
        path = os.path.join(dirpath, f"{name}.fld")
        save_field(fields[name], path)
        with open(path, "rb") as fh:
            hasher.update(fh.read())
    lines = [f"t={state.t!r}", f"fields_sha256={hasher.hexdigest()}"]
    for k, v in (extra or {}).items():
        lines.append(f"{k}={v}")
    with open(os.path.join(dirpath, "manifest"), "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_state(dirpath, grid: sp.SlabGrid = None):
    import os
    manifest = {}
    with open(os.path.join(dirpath, "manifest")) as fh:
        for line in fh:
            if "=" in line:
                k, v = line.strip().split("=", 1)
                manifest[k] = v
    fields = {}
    for name in _FIELD_FILES:
        f = load_field(os.path.join(dirpath, f"{name}.fld"), grid)
        grid = f.grid
        if f.parity != _PARITIES[name]:
            raise ValueError(f"{name}: parity {f.parity} unexpected")
        fields[name] = sp.to_spectral(f)
    state = FlowState(
        t=float(manifest["t"]),
        eta=sp.VectorField(fields["eta1"], fields["eta2"]),
        u=sp.VectorField(fields["u1"], fields["u2"]),
        q=fields["q"])
    return state, manifest
