"""Acceptance suite at the desk configuration.

Desk setup: affine density 2 + y2, g = 9.8, λ = 1, μ = 0.1, L = h = 1,
N1 = 64, N2 = 128.  The nonlinear runs are shared through session fixtures;
the whole module takes tens of minutes on one core.  Each criterion prints
one PASS/FAIL line (visible with -s, and summarized at session end).
"""

import numpy as np
import pytest

from mrtlab import dynamics as dyn
from mrtlab import energetics as en
from mrtlab import spectral as sp
from mrtlab.linstab import StabilityOperator, compute_mc
from mrtlab.profiles import build_affine_profile, build_tanh_profile

G, LAM, MU, L, H = 9.8, 1.0, 0.1, 1.0, 1.0
N1, N2 = 64, 128
PROF = build_affine_profile(2.0, 3.0, H, 2049)
GRID = sp.SlabGrid(L=L, h=H, N1=N1, N2=N2)

_RESULTS = []


def _record(num, name, ok, detail):
    line = f"criterion {num} [{name}]: {'PASS' if ok else 'FAIL'} ({detail})"
    _RESULTS.append(line)
    print(line)
    assert ok, line


@pytest.fixture(scope="session", autouse=True)
def _summary():
    yield
    print("\n==== acceptance summary ====")
    for line in _RESULTS:
        print(line)


@pytest.fixture(scope="session")
def op_desk():
    return StabilityOperator(PROF, G, LAM, MU, L, N2)


@pytest.fixture(scope="session")
def mc_desk(op_desk):
    return op_desk.critical_field().mc


@pytest.fixture(scope="session")
def mode_m0(op_desk):
    return op_desk.fastest_mode(0.0, n_max=8)


def _cfg(**kw):
    base = dict(profile=PROF, grid=GRID, mu=MU, g=G, lam=LAM, m=0.0,
                dt=5e-3, t_end=1.0, cadence=0.25)
    base.update(kw)
    return dyn.SimConfig(**base)


def _run(cfg, **reporter_kw):
    rep = en.EnergyReporter(**reporter_kw)
    res = dyn.run(cfg, reporters=[rep])
    assert res.termination == "completed", res.termination
    return res, rep


@pytest.fixture(scope="session")
def stable_odd(mc_desk, mode_m0):
    # relaxation experiment: velocity impulse along the fastest RT shape,
    # odd-symmetric phase (the cos/sin seeding is odd in y1)
    cfg = _cfg(m=1.5 * mc_desk, seed_mode=mode_m0, delta=1e-3,
               eta_delta=0.0, phase=0.0, t_end=50.0)
    return _run(cfg, collect_eta1=True)


@pytest.fixture(scope="session")
def stable_generic(mc_desk, mode_m0):
    cfg = _cfg(m=1.5 * mc_desk, seed_mode=mode_m0, delta=1e-3,
               eta_delta=0.0, phase=0.7, t_end=50.0)
    return _run(cfg, collect_eta1=True)


@pytest.fixture(scope="session")
def lambda_09(op_desk, mc_desk):
    return op_desk.growth_rate(1.0 / L, 0.9 * mc_desk)


@pytest.fixture(scope="session")
def growth_run(op_desk, mc_desk, lambda_09):
    lam, vec = op_desk.growth_rate(1.0 / L, 0.9 * mc_desk, with_vector=True)
    mode = op_desk.build_mode(1, 0.9 * mc_desk, lam, vec)
    cfg = _cfg(m=0.9 * mc_desk, seed_mode=mode, delta=1e-4,
               t_end=4.0 / lambda_09)
    return _run(cfg)


@pytest.fixture(scope="session")
def decay_run(op_desk, mc_desk, lambda_09):
    lam, vec = op_desk.growth_rate(1.0 / L, 0.0, with_vector=True)
    mode1 = op_desk.build_mode(1, 0.0, lam, vec)
    cfg = _cfg(m=1.1 * mc_desk, seed_mode=mode1, delta=1e-4,
               t_end=4.0 / lambda_09)
    return _run(cfg)


@pytest.fixture(scope="session")
def linear_mode_05(op_desk, mc_desk):
    return op_desk.fastest_mode(0.5 * mc_desk, n_max=8)


@pytest.fixture(scope="session")
def linear_run(mc_desk, linear_mode_05):
    lam = linear_mode_05.Lambda
    cfg = _cfg(m=0.5 * mc_desk, seed_mode=linear_mode_05, delta=1e-6,
               dt=2e-3, t_end=1.6 / lam, cadence=0.05 / lam)
    return _run(cfg)


@pytest.fixture(scope="session")
def escape_runs(mode_m0):
    lam = mode_m0.Lambda
    # threshold from the δ = 1e-4 run's initial observables
    names = [f"{p}{c}_L1" for c in ("eta1", "eta2", "u1", "u2")
             for p in ("", "d1", "d2")] + ["rho_L1"]
    seed0 = dyn.seed_initial_data(mode_m0, 1e-4, GRID, PROF)
    q0 = en.escape_quantities(seed0, PROF)
    eps = 10.0 * max(q0[k] for k in names)
    t_end = np.log(4.0 * eps / min(q0[k] for k in names)) / lam + 1.0
    out = {}
    for delta in (1e-4, 5e-5, 2.5e-5):
        cfg = _cfg(m=0.0, seed_mode=mode_m0, delta=delta, dt=2e-3,
                   t_end=t_end, cadence=0.05)
        out[delta] = _run(cfg, with_escape=True)
    return out, eps, names, lam


# ---------------------------------------------------------------------------

def test_criterion_1_critical_field_strength():
    res = compute_mc(PROF, G, LAM, L, 256)
    analytic = np.sqrt(G / (np.pi**2 / H**2 + 1.0 / L**2))
    bound = (H / np.pi) * np.sqrt(G * 1.0 / LAM)
    rel = abs(res.mc - analytic) / analytic
    ok = rel < 1e-6 and res.mc <= bound + 1e-12
    _record(1, "critical field strength", ok,
            f"mc={res.mc:.6f} analytic={analytic:.6f} rel={rel:.2e} "
            f"bound={bound:.6f}")


def test_criterion_2_oracle_equivalence():
    rng = np.random.default_rng(2024)
    analytic_mc = np.sqrt(G / (np.pi**2 + 1.0))
    worst = 0.0
    checked = 0
    for trial in range(10):
        M = 16 if trial % 2 == 0 else 32
        k = rng.integers(1, 4) / L
        m = rng.uniform(0.0, 0.85) * analytic_mc
        if rng.random() < 0.5:
            prof = PROF
        else:
            prof = build_tanh_profile(1.0, 1.0 + rng.uniform(0.5, 2.0),
                                      rng.uniform(0.3, 0.7),
                                      rng.uniform(0.1, 0.3), H, 2049)
        op = StabilityOperator(prof, G, LAM, MU, L, M)
        lam_var = op.growth_rate(k, m, tol=1e-13)
        lam_pen = op.pencil_growth_rate(k, m)
        if lam_var is None:
            assert lam_pen is None
            continue
        worst = max(worst, abs(lam_pen - lam_var) / lam_var)
        checked += 1
    ok = worst < 1e-8 and checked >= 5
    _record(2, "oracle equivalence", ok,
            f"{checked} unstable triples, worst rel diff {worst:.2e}")


def test_criterion_3_linear_nonlinear_consistency(linear_run, linear_mode_05):
    _, rep = linear_run
    lam = linear_mode_05.Lambda
    fit = en.fit_rate(rep.reports, "u_L2", (0.1 / lam, 1.5 / lam),
                      model="exponential")
    rel = abs(fit.value - lam) / lam
    ok = rel < 0.05
    _record(3, "linear-nonlinear consistency", ok,
            f"fitted {fit.value:.6f} vs linstab {lam:.6f} rel={rel:.2e}")


def test_criterion_4_threshold_behavior(growth_run, decay_run):
    _, rep_g = growth_run
    u0 = rep_g.reports[0].norms["u_L2"]
    u_end = rep_g.reports[-1].norms["u_L2"]
    grew = u_end >= 5.0 * u0
    _, rep_d = decay_run
    E0 = rep_d.reports[0].E_total
    E_end = rep_d.reports[-1].E_total
    verdict = en.monitor_energy_inequality(rep_d.reports)
    decayed = E_end < E0 and verdict.passed
    ok = grew and decayed
    _record(4, "threshold behavior", ok,
            f"growth x{u_end / u0:.1f} (need >= 5); decay E {E0:.3e} -> "
            f"{E_end:.3e}, verdict ratio {verdict.ratio:.2f} "
            f"{'PASS' if verdict.passed else 'FAIL'}")


def test_criterion_5_decay_envelope(stable_odd):
    _, rep = stable_odd
    r0 = rep.reports[0]
    S0 = r0.norms["u_H2"]**2 + r0.norms["q_H1"]**2 + r0.norms["ut_L2"]**2
    worstS = max((1 + r.t**2)**1.5 * (r.norms["u_H2"]**2 + r.norms["q_H1"]**2
                                      + r.norms["ut_L2"]**2)
                 for r in rep.reports) / S0
    worstE = max(r.frakE for r in rep.reports) / r0.frakE
    ok = worstS <= 10.0 and worstE <= 10.0
    _record(5, "decay envelope", ok,
            f"max <t>^3(u,q,ut)/t0 = {worstS:.2f}, max frakE/t0 = "
            f"{worstE:.2f} (both need <= 10)")


def test_criterion_6_escape_time_scaling(escape_runs):
    runs, eps, names, lam = escape_runs
    Ts = []
    for delta in (1e-4, 5e-5, 2.5e-5):
        _, rep = runs[delta]
        T = en.detect_escape_time(rep.reports, eps, names)
        assert T is not None, f"no escape at delta={delta}"
        Ts.append(T)
    gaps = np.diff(Ts)
    target = np.log(2.0) / lam
    rels = np.abs(gaps - target) / target
    ok = bool((rels < 0.10).all())
    _record(6, "escape-time scaling", ok,
            f"T = {[f'{T:.3f}' for T in Ts]}, gaps {gaps.round(4)} vs "
            f"ln2/Lambda = {target:.4f}, rel {rels.round(3)}")


def test_criterion_7_structural_invariants(stable_odd, stable_generic,
                                           growth_run, decay_run, linear_run,
                                           escape_runs):
    # equilibrium fixed point at desk resolution
    cfg = _cfg(t_end=0.0)
    stepper = dyn.Stepper(cfg)
    state = dyn.FlowState(t=0.0, eta=sp.zero_vector(GRID),
                          u=sp.zero_vector(GRID),
                          q=sp.zero_field(GRID, sp.NEUMANN))
    for _ in range(10):
        state = stepper.step(state)
    equil = (sp.vec_l2_sq(state.eta) == 0.0 and sp.vec_l2_sq(state.u) == 0.0)

    rho = PROF.rho(GRID.y2)
    rho_mean = np.mean(rho)
    runs = [stable_odd, stable_generic, growth_run, decay_run, linear_run]
    runs += list(escape_runs[0].values())
    worst_mean = worst_div = worst_J = worst_wall = 0.0
    for res, rep in runs:
        st = res.state
        worst_mean = max(
            worst_mean,
            abs(sp.weighted_mean_coeff(st.u.c1, rho)) * rho_mean,
            abs(sp.weighted_mean_coeff(st.eta.c1, rho)) * rho_mean)
        worst_div = max(worst_div, res.counters["max_div_residual"])
        worst_J = max(worst_J, res.counters["max_J_drift"])
        for f in (st.u.c2, st.eta.c2):
            lo, hi = sp.wall_values(f)
            worst_wall = max(worst_wall, np.abs(lo).max(), np.abs(hi).max())
        for f in (st.u.c1, st.eta.c1):
            lo, hi = sp.wall_normal_derivative(f)
            worst_wall = max(worst_wall, np.abs(lo).max(), np.abs(hi).max())
    ok = (equil and worst_mean < 1e-10 and worst_div < 1e-9
          and worst_J < 1e-3 and worst_wall < 1e-10)
    _record(7, "structural invariants", ok,
            f"equilibrium exact: {equil}; weighted means {worst_mean:.1e}; "
            f"div residual {worst_div:.1e}; |J-1| {worst_J:.1e}; "
            f"walls {worst_wall:.1e}")


def test_criterion_8_numerical_convergence(op_desk, mc_desk, linear_mode_05):
    # dt halving at m = 0.5 m_C
    finals = {}
    for dt in (4e-3, 2e-3, 1e-3):
        cfg = _cfg(m=0.5 * mc_desk, seed_mode=linear_mode_05, delta=1e-4,
                   dt=dt, t_end=2.0, cadence=1.0)
        res, _ = _run(cfg)
        finals[dt] = np.sqrt(sp.vec_l2_sq(res.state.u))
    e1 = abs(finals[4e-3] - finals[2e-3])
    e2 = abs(finals[2e-3] - finals[1e-3])
    ratio = e1 / e2
    dt_ok = 3.2 <= ratio <= 4.8
    # N2 doubling
    op2 = StabilityOperator(PROF, G, LAM, MU, L, 2 * N2)
    dmc = abs(op_desk.critical_field().mc - op2.critical_field().mc) / mc_desk
    l1 = op_desk.growth_rate(1.0 / L, 0.5 * mc_desk)
    l2 = op2.growth_rate(1.0 / L, 0.5 * mc_desk)
    dl = abs(l1 - l2) / l1
    res_ok = dmc < 1e-6 and dl < 1e-6
    ok = dt_ok and res_ok
    _record(8, "numerical convergence", ok,
            f"Richardson ratio {ratio:.2f} (need [3.2, 4.8]); N2-doubling "
            f"d(mc)={dmc:.1e}, d(Lambda)={dl:.1e} (need < 1e-6)")


def test_criterion_9_drift_limit(stable_odd, stable_generic):
    _, rep_odd = stable_odd
    est_odd = en.drift_limit(rep_odd.eta1_series, GRID)
    odd_ok = est_odd.norm < 1e-4 * 1e-3  # 1e-4 * delta
    _, rep_gen = stable_generic
    est_gen = en.drift_limit(rep_gen.eta1_series, GRID)
    gen_ok = est_gen.y1_dependence < 1e-8
    shrink_ok = (est_gen.window_residuals[1]
                 <= est_gen.window_residuals[0] + 1e-14)
    ok = odd_ok and gen_ok and shrink_ok
    _record(9, "drift limit", ok,
            f"odd |eta1_inf| = {est_odd.norm:.2e} (need < 1e-7); generic "
            f"y1-dependence {est_gen.y1_dependence:.2e} (need < 1e-8); "
            f"late residuals {est_gen.window_residuals}")
