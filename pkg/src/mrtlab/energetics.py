"""Energy functionals, decay diagnostics and escape-time detection.

All norms are evaluated spectrally (Parseval with per-mode multipliers), so
they are exact for resolved modes.  Conventions:

    ||f||_i            full H^i norm, sum over all derivatives of order <= i
    ||f||_{l,i}        ||∂1^l f||_i
    ||f||_{l_,i}       sqrt(sum_{n<=l} ||f||_{n,i}²)   ("underlined" l)
    <t>                (1 + t²)^(1/2)

Core functionals on a flow state (u_t and q reconstructed from the momentum
equation, so reports are independent of the time step):

    E_total = ||η||₃² + ||u||₂² + ||u_t||₀² + ||q||₁²
    D_total = ||∂1η1||₂² + ||η2||₃² + ||u||₃² + ||u_t||₁² + ||q||₂²

    frakE = <t>  (||∂2³η2||₀² + ||∂2²η||_{1,0}²)
          + <t>² (||∂2²η2||₀² + ||∂2∂1η||_{1_,0}²)
          + <t>³ (||(η2,∂2η2)||₀² + ||∂1η||_{2_,0}² + ||u||₂² + ||q||₁² + ||u_t||₀²)

    frakD = <t>  (||∂2η||_{2,0}² + ||u||₃²)
          + <t>² (||(η2,∂2η2)||₀² + ||∂1η||_{2_,0}² + ||u||_{1_,2}² + ||q||_{1_,1}²)
          + <t>³ (||∂1u||_{1_,1}² + ||u_t||₁²)

The instability diagnostics are L¹ norms of (η_i, u_i, their gradients, and
the density rearrangement) on the physical grid.
"""

from __future__ import annotations

import numpy as np
from dataclasses import dataclass

from . import spectral as sp
from .linstab import potential_energy
from .profiles import DensityProfile


def t_weight(t: float) -> float:
    """Japanese bracket <t> = sqrt(1 + t²)."""
    return float(np.sqrt(1.0 + t * t))


# ---------------------------------------------------------------------------
# anisotropic Sobolev norms

def _mult_H(grid: sp.SlabGrid, parity: str, l: int, i: int) -> np.ndarray:
    """Spectral multiplier for ||∂1^l · ||_{H^i}²."""
    k2 = grid.kx[:, None] ** 2
    b2 = grid.bj(parity)[None, :] ** 2
    acc = np.zeros((grid.N1 // 2 + 1, grid.N2))
    for a1 in range(i + 1):
        for a2 in range(i + 1 - a1):
            acc += k2**a1 * b2**a2
    return k2**l * acc


def seminorm_sq(f: sp.Field, l: int = 0, i: int = 0) -> float:
    """||∂1^l f||_i² by Parseval."""
    if l < 0 or i < 0:
        raise ValueError("derivative orders must be nonnegative")
    c = sp.spec(f)
    g = f.grid
    w = g.horizontal_weights()[:, None] * g.vertical_weights(f.parity)[None, :]
    return float(np.sum(w * _mult_H(g, f.parity, l, i) * np.abs(c) ** 2))


def sobolev_norm(f, l: int = 0, i: int = 0) -> float:
    """||∂1^l f||_i for a Field or VectorField."""
    if isinstance(f, sp.VectorField):
        return np.sqrt(seminorm_sq(f.c1, l, i) + seminorm_sq(f.c2, l, i))
    return np.sqrt(seminorm_sq(f, l, i))


def under_sq(f, l: int, i: int) -> float:
    """||f||_{l_,i}² = sum_{n<=l} ||∂1^n f||_i²."""
    if isinstance(f, sp.VectorField):
        return sum(under_sq(c, l, i) for c in (f.c1, f.c2))
    return sum(seminorm_sq(f, n, i) for n in range(l + 1))


def _vec_sq(v: sp.VectorField, l: int = 0, i: int = 0) -> float:
    return seminorm_sq(v.c1, l, i) + seminorm_sq(v.c2, l, i)


# ---------------------------------------------------------------------------
# reports

@dataclass(frozen=True)
class EnergyReport:
    """All functionals of one flow state at time t."""

    t: float
    E_pot: float
    E_total: float
    D_total: float
    frakE: float
    frakD: float
    norms: dict
    J_drift: float
    div_residual: float
    escape: dict = None

    def __getitem__(self, key: str) -> float:
        if key in ("t", "E_pot", "E_total", "D_total", "frakE", "frakD",
                   "J_drift", "div_residual"):
            return getattr(self, key)
        if self.escape and key in self.escape:
            return self.escape[key]
        return self.norms[key]


def state_norms(state, ut: sp.VectorField, q: sp.Field) -> dict:
    """The norm table feeding every functional (values, not squares)."""
    eta, u = state.eta, state.u
    eta2 = eta.c2
    d2eta2 = sp.ddy2(eta2)
    d22eta2 = sp.ddy2(d2eta2)
    n = {}
    n["eta_H3"] = np.sqrt(_vec_sq(eta, 0, 3))
    n["eta_L2"] = np.sqrt(_vec_sq(eta))
    n["eta1_L2"] = np.sqrt(seminorm_sq(eta.c1))
    n["u_H2"] = np.sqrt(_vec_sq(u, 0, 2))
    n["u_H3"] = np.sqrt(_vec_sq(u, 0, 3))
    n["u_L2"] = np.sqrt(_vec_sq(u))
    n["ut_L2"] = np.sqrt(_vec_sq(ut))
    n["ut_H1"] = np.sqrt(_vec_sq(ut, 0, 1))
    n["q_H1"] = np.sqrt(seminorm_sq(q, 0, 1))
    n["q_H2"] = np.sqrt(seminorm_sq(q, 0, 2))
    n["d1eta1_H2"] = np.sqrt(seminorm_sq(eta.c1, 1, 2))
    n["eta2_H3"] = np.sqrt(seminorm_sq(eta2, 0, 3))
    n["eta2_L2"] = np.sqrt(seminorm_sq(eta2))
    n["d2eta2_L2"] = np.sqrt(seminorm_sq(d2eta2))
    n["d22eta2_L2"] = np.sqrt(seminorm_sq(d22eta2))
    n["d23eta2_L2"] = np.sqrt(seminorm_sq(sp.ddy2(d22eta2)))
    # ||∂2²η||_{1,0} and ||∂2∂1η||_{1_,0} act on both components
    d22 = [sp.ddy2(sp.ddy2(c)) for c in (eta.c1, eta.c2)]
    n["d22eta_1_0"] = np.sqrt(sum(seminorm_sq(c, 1, 0) for c in d22))
    d2c = [sp.ddy2(c) for c in (eta.c1, eta.c2)]
    n["d2d1eta_u1_0"] = np.sqrt(sum(
        seminorm_sq(c, l, 0) for c in d2c for l in (1, 2)))
    n["d1eta_u2_0"] = np.sqrt(sum(
        _vec_sq(eta, l, 0) for l in (1, 2, 3)))
    n["d2eta_2_0"] = np.sqrt(sum(seminorm_sq(c, 2, 0) for c in d2c))
    n["u_u1_2"] = np.sqrt(_vec_sq(u, 0, 2) + _vec_sq(u, 1, 2))
    n["q_u1_1"] = np.sqrt(seminorm_sq(q, 0, 1) + seminorm_sq(q, 1, 1))
    n["d1u_u1_1"] = np.sqrt(_vec_sq(u, 1, 1) + _vec_sq(u, 2, 1))
    return n


def assemble_functionals(norms: dict, t: float):
    """(E_total, D_total, frakE, frakD) from the norm table."""
    sq = lambda key: norms[key] ** 2
    E = sq("eta_H3") + sq("u_H2") + sq("ut_L2") + sq("q_H1")
    D = (sq("d1eta1_H2") + sq("eta2_H3") + sq("u_H3") + sq("ut_H1")
         + sq("q_H2"))
    w = t_weight(t)
    fE = (w * (sq("d23eta2_L2") + sq("d22eta_1_0"))
          + w**2 * (sq("d22eta2_L2") + sq("d2d1eta_u1_0"))
          + w**3 * (sq("eta2_L2") + sq("d2eta2_L2") + sq("d1eta_u2_0")
                    + sq("u_H2") + sq("q_H1") + sq("ut_L2")))
    fD = (w * (sq("d2eta_2_0") + sq("u_H3"))
          + w**2 * (sq("eta2_L2") + sq("d2eta2_L2") + sq("d1eta_u2_0")
                    + sq("u_u1_2") + sq("q_u1_1"))
          + w**3 * (sq("d1u_u1_1") + sq("ut_H1")))
    return E, D, fE, fD


def total_energy_and_dissipation(state, stepper):
    """(E_total, D_total) with u_t, q reconstructed from the momentum
    equation; the norm table is exposed on the returned report."""
    rep = make_report(state, stepper)
    return rep.E_total, rep.D_total


def weighted_functionals(state, t: float, stepper):
    rep = make_report(state, stepper, t_override=t)
    return rep.frakE, rep.frakD


def escape_quantities(state, profile: DensityProfile) -> dict:
    """L¹ norms of the instability observables on the physical grid."""
    g = state.grid
    quad = (2 * np.pi * g.L / g.N1) * (g.h / g.N2)
    out = {}
    for name, f in (("eta1", state.eta.c1), ("eta2", state.eta.c2),
                    ("u1", state.u.c1), ("u2", state.u.c2)):
        out[f"{name}_L1"] = quad * float(np.abs(sp.phys(f)).sum())
        out[f"d1{name}_L1"] = quad * float(np.abs(sp.phys(sp.ddy1(f))).sum())
        out[f"d2{name}_L1"] = quad * float(np.abs(sp.phys(sp.ddy2(f))).sum())
    arg = sp.phys(state.eta.c2) + g.y2[None, :]
    rho_move = profile.rho(np.clip(arg, 0.0, profile.h))
    out["rho_L1"] = quad * float(np.abs(profile.rho(g.y2)[None, :]
                                        - rho_move).sum())
    return out


def make_report(state, stepper, with_escape: bool = False,
                t_override: float = None) -> EnergyReport:
    from .dynamics import build_A  # local import keeps layering one-way
    ut, q = stepper.reconstruct_ut_q(state)
    norms = state_norms(state, ut, q)
    t = state.t if t_override is None else t_override
    E, D, fE, fD = assemble_functionals(norms, t)
    cfg = stepper.cfg
    epot = potential_energy(state.eta, cfg.m, cfg.profile, cfg.g, cfg.lam)
    A, J = build_A(state.eta, cfg.j_min, cfg.j_max)
    jd = float(np.abs(J - 1.0).max())
    divres = sp.l2_norm(sp.div_A(state.u, A))
    esc = escape_quantities(state, cfg.profile) if with_escape else None
    return EnergyReport(t=t, E_pot=epot, E_total=E, D_total=D, frakE=fE,
                        frakD=fD, norms=norms, J_drift=jd,
                        div_residual=divres, escape=esc)


class EnergyReporter:
    """Collects EnergyReports (and optionally η1 spectra) during a run."""

    def __init__(self, with_escape: bool = False, collect_eta1: bool = False):
        self.with_escape = with_escape
        self.collect_eta1 = collect_eta1
        self.reports: list[EnergyReport] = []
        self.eta1_series: list = []

    def __call__(self, state, stepper, aux):
        self.reports.append(make_report(state, stepper,
                                        with_escape=self.with_escape))
        if self.collect_eta1:
            self.eta1_series.append((state.t, sp.spec(state.eta.c1).copy()))


# ---------------------------------------------------------------------------
# verdicts and fits

@dataclass(frozen=True)
class EnergyVerdict:
    passed: bool
    ratio: float
    c_stab: float
    first_violation: float = None


def monitor_energy_inequality(reports, c_stab: float = 10.0,
                              n_windows: int = 4) -> EnergyVerdict:
    """Check sup_t [E(t) + ∫₀ᵗ D dτ] <= c_stab * E(0) with a nonincreasing
    envelope of E across windows (trapezoid rule for the integral)."""
    if len(reports) < 10:
        raise ValueError("need at least 10 reports to judge stability")
    t = np.array([r.t for r in reports])
    E = np.array([r.E_total for r in reports])
    D = np.array([r.D_total for r in reports])
    cumD = np.concatenate(([0.0], np.cumsum(
        0.5 * (D[1:] + D[:-1]) * np.diff(t))))
    total = E + cumD
    denom = E[0] if E[0] > 0 else 1.0
    ratio = float(total.max() / denom)
    passed = ratio <= c_stab
    first_violation = None
    if not passed:
        first_violation = float(t[np.argmax(total > c_stab * denom)])
    # envelope: window maxima of E must not grow
    edges = np.linspace(0, len(reports), n_windows + 1, dtype=int)
    maxima = [E[a:b].max() for a, b in zip(edges[:-1], edges[1:]) if b > a]
    for prev, nxt in zip(maxima[:-1], maxima[1:]):
        if nxt > 1.05 * prev:
            passed = False
            if first_violation is None:
                first_violation = float(t[min(len(t) - 1, int(edges[1]))])
    return EnergyVerdict(passed=passed, ratio=ratio, c_stab=c_stab,
                         first_violation=first_violation)


@dataclass(frozen=True)
class DecayFit:
    quantity: str
    model: str          # "exponential" (e^{Λt}) or "power" (<t>^{-p})
    window: tuple
    value: float        # Λ for exponential, p for power
    residual: float


def fit_rate(reports, quantity: str, window: tuple,
             model: str = "exponential") -> DecayFit:
    """Least-squares fit of log(quantity) against t or log<t>."""
    t0, t1 = window
    if not t0 < t1:
        raise ValueError("window must be nondegenerate")
    ts, vs = [], []
    for r in reports:
        if t0 - 1e-12 <= r.t <= t1 + 1e-12:
            ts.append(r.t)
            vs.append(r[quantity])
    if len(ts) < 3:
        raise ValueError("window contains fewer than 3 reports")
    ts, vs = np.array(ts), np.array(vs)
    if np.any(vs <= 0):
        raise ValueError(f"{quantity} must be positive on the fit window")
    y = np.log(vs)
    if model == "exponential":
        x = ts
        sign = 1.0
    elif model == "power":
        x = np.log(np.sqrt(1.0 + ts**2))
        sign = -1.0
    else:
        raise ValueError(f"unknown model {model!r}")
    A = np.vstack([x, np.ones_like(x)]).T
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = float(np.sqrt(np.mean((A @ coef - y) ** 2)))
    return DecayFit(quantity=quantity, model=model, window=(t0, t1),
                    value=float(sign * coef[0]), residual=resid)


def detect_escape_time(reports, epsilon: float, quantities) -> float:
    """First time every listed quantity exceeds ε (the instability theorem
    asserts simultaneous largeness); None when some quantity never does.
    Crossing instants are refined by log-linear interpolation."""
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    series = {qn: np.array([r[qn] for r in reports]) for qn in quantities}
    t = np.array([r.t for r in reports])
    idx = None
    for i in range(len(reports)):
        if all(series[qn][i] > epsilon for qn in quantities):
            idx = i
            break
    if idx is None:
        return None
    if idx == 0:
        return float(t[0])
    t_cross = t[0]
    for qn in quantities:
        v = series[qn]
        j = idx
        while j > 0 and v[j - 1] > epsilon:
            j -= 1
        if j == 0:
            continue
        lo, hi = v[j - 1], v[j]
        if lo <= 0 or hi <= 0:
            tc = t[j]
        else:
            frac = (np.log(epsilon) - np.log(lo)) / (np.log(hi) - np.log(lo))
            tc = t[j - 1] + frac * (t[j] - t[j - 1])
        t_cross = max(t_cross, float(tc))
    return t_cross


@dataclass(frozen=True)
class DriftEstimate:
    profile_hat: np.ndarray     # n = 0 cosine coefficients of η1^∞(y2)
    norm: float                 # ||η1^∞||₀
    y1_dependence: float        # norm of the n != 0 content of the estimate
    window_residuals: tuple     # late-window sup ||η1(t) − η1^∞||₀


def drift_limit(eta1_series, grid: sp.SlabGrid) -> DriftEstimate:
    """Estimate the horizontal-drift limit η1^∞(y2) from late-time snapshots
    of η1 (spectral) and report its convergence diagnostics."""
    if len(eta1_series) < 8:
        raise ValueError("need at least 8 η1 snapshots")
    t = np.array([s[0] for s in eta1_series])
    if t[-1] - t[0] <= 0:
        raise ValueError("snapshots must span a positive time interval")
    n = len(eta1_series)
    tail = [c for _, c in eta1_series[3 * n // 4:]]
    est = np.mean(np.stack(tail), axis=0)
    estf = sp.field_from_spectral(grid, est, sp.NEUMANN)
    away = est.copy()
    away[0, :] = 0.0
    y1dep = sp.l2_norm(sp.field_from_spectral(grid, away, sp.NEUMANN))
    resids = []
    for a, b in ((n // 2, 3 * n // 4), (3 * n // 4, n)):
        worst = 0.0
        for _, c in eta1_series[a:b]:
            diff = sp.field_from_spectral(grid, c - est, sp.NEUMANN)
            worst = max(worst, sp.l2_norm(diff))
        resids.append(worst)
    return DriftEstimate(profile_hat=est[0, :].real.copy(),
                         norm=sp.l2_norm(estf),
                         y1_dependence=y1dep,
                         window_residuals=tuple(resids))
