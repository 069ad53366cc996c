import numpy as np
import pytest

from mrtlab import spectral as sp
from mrtlab.linstab import (
    StabilityOperator,
    compute_mc,
    dispersion_curve,
    fastest_mode,
    growth_rate,
    potential_energy,
    potential_energy_mode,
)
from mrtlab.profiles import build_affine_profile, build_tanh_profile

G, LAM, MU, L, H = 9.8, 1.0, 0.1, 1.0, 1.0

AFFINE = build_affine_profile(2.0, 3.0, H, 2049)


def analytic_mc():
    return np.sqrt(G / (np.pi**2 / H**2 + 1.0 / L**2))


# ------------------------------------------------------------------- m_C

def test_mc_affine_matches_analytic_sturm_liouville():
    res = compute_mc(AFFINE, G, LAM, L, 128)
    assert res.mc == pytest.approx(analytic_mc(), rel=1e-10)
    assert res.argmax_n == 1
    # eigenfunction is the lowest sine mode
    phi = np.abs(res.profile_hat / np.abs(res.profile_hat).max())
    assert phi[0] == pytest.approx(1.0)
    assert np.abs(phi[1:]).max() < 1e-10


def test_mc_respects_paper_bound():
    for prof in (AFFINE,
                 build_tanh_profile(1.0, 2.0, 0.5, 0.15, H, 2049),
                 build_tanh_profile(1.0, 3.0, 0.3, 0.1, H, 2049)):
        res = compute_mc(prof, G, LAM, L, 96)
        assert res.mc <= res.bound_paper + 1e-12
        assert res.bound_paper == pytest.approx(
            (H / np.pi) * np.sqrt(G * max(prof.d1.max(), 0.0) / LAM))


def test_mc_zero_when_rt_fails():
    res = compute_mc(build_affine_profile(3.0, 2.0, H, 257), G, LAM, L, 64)
    assert res.mc == 0.0
    assert res.stable_for_all_m


def test_mc_scaling_covariance():
    # m_C² ∝ g/λ
    base = compute_mc(AFFINE, G, LAM, L, 64).mc
    for c in (0.5, 2.0, 7.0):
        scaled = compute_mc(AFFINE, c * G, c * LAM, L, 64).mc
        assert scaled == pytest.approx(base, rel=1e-12)
        gonly = compute_mc(AFFINE, c * G, LAM, L, 64).mc
        assert gonly**2 == pytest.approx(c * base**2, rel=1e-12)


def test_mc_grid_refinement_invariance():
    prof = build_tanh_profile(1.0, 2.0, 0.5, 0.15, H, 4097)
    a = compute_mc(prof, G, LAM, L, 128).mc
    b = compute_mc(prof, G, LAM, L, 256).mc
    assert abs(a - b) < 1e-8 * a


# -------------------------------------------------------- potential energy

def test_potential_energy_single_mode_quadrature():
    grid = sp.SlabGrid(L=L, h=H, N1=16, N2=32)
    vals2 = np.broadcast_to(np.sin(np.pi * grid.y2 / H), (16, 32)).copy()
    w = sp.VectorField(sp.zero_field(grid, sp.NEUMANN),
                       sp.field_from_physical(grid, vals2, sp.DIRICHLET))
    E = potential_energy(w, 0.0, AFFINE, G, LAM)
    assert E == pytest.approx(G * (H / 2.0) * 2 * np.pi * L, rel=1e-12)


def test_potential_energy_sign_for_stable_profile():
    grid = sp.SlabGrid(L=L, h=H, N1=16, N2=32)
    prof = build_affine_profile(3.0, 2.0, H, 257)
    rng = np.random.default_rng(3)
    for seed in range(3):
        c2 = np.exp(-0.5 * (np.arange(16 // 2 + 1)[:, None]
                            + np.arange(32)[None, :]))
        c2 = c2 * rng.standard_normal(c2.shape)
        w2 = sp.field_from_spectral(grid, c2.astype(complex), sp.DIRICHLET)
        w = sp.VectorField(sp.zero_field(grid, sp.NEUMANN), w2)
        assert potential_energy(w, 0.5, prof, G, LAM) <= 0.0


def test_potential_energy_matches_brute_force_quadrature():
    grid = sp.SlabGrid(L=L, h=H, N1=16, N2=24)
    rng = np.random.default_rng(9)
    c = rng.standard_normal((9, 24)) * np.exp(
        -0.6 * (np.arange(9)[:, None] + np.arange(24)[None, :]))
    w1 = sp.field_from_spectral(grid, c.astype(complex), sp.NEUMANN)
    w2 = sp.field_from_spectral(grid, (0.7 * c).astype(complex), sp.DIRICHLET)
    w = sp.VectorField(w1, w2)
    m = 0.4
    E = potential_energy(w, m, AFFINE, G, LAM)
    # brute force on a doubled, shifted fine grid via direct evaluation
    N1f, N2f = 64, 96
    y1f = 2 * np.pi * L * np.arange(N1f) / N1f
    y2f = (np.arange(N2f) + 0.5) * H / N2f
    Y1, Y2 = np.meshgrid(y1f, y2f, indexing="ij")
    v2 = sp.eval_at_points(w2, Y1.ravel(), Y2.ravel()).reshape(N1f, N2f)
    d1w1 = sp.eval_at_points(sp.ddy1(w1), Y1.ravel(), Y2.ravel()).reshape(N1f, N2f)
    d1w2 = sp.eval_at_points(sp.ddy1(w2), Y1.ravel(), Y2.ravel()).reshape(N1f, N2f)
    quad = (2 * np.pi * L / N1f) * (H / N2f)
    oracle = (G * quad * np.sum(AFFINE.drho(y2f)[None, :] * v2 * v2)
              - LAM * m**2 * quad * np.sum(d1w1**2 + d1w2**2))
    assert E == pytest.approx(oracle, rel=1e-8)


def test_potential_energy_mode_consistent_with_threshold():
    res = compute_mc(AFFINE, G, LAM, L, 96)
    phi = res.profile_hat
    # exactly at m = m_C the maximizing mode has E = 0
    E = potential_energy_mode(phi, res.argmax_k, res.mc, AFFINE, G, LAM, L)
    scale = abs(potential_energy_mode(phi, res.argmax_k, 0.0, AFFINE, G, LAM, L))
    assert abs(E) < 1e-9 * scale


# ------------------------------------------------------------------ alpha(s)

def test_alpha_at_zero_matches_mc_eigenproblem():
    op = StabilityOperator(AFFINE, G, LAM, MU, L, 96)
    k = 1.0 / L
    # m = m_C at the optimal k: E <= 0 with equality for the maximizer
    mc = op.critical_field().mc
    a = op.alpha(0.0, k, mc)
    assert abs(a) < 1e-8
    assert op.alpha(0.0, k, 1.001 * mc) < 0.0
    assert op.alpha(0.0, k, 0.999 * mc) > 0.0


def test_alpha_nonincreasing_in_s():
    op = StabilityOperator(AFFINE, G, LAM, MU, L, 64)
    rng = np.random.default_rng(4)
    for _ in range(4):
        k = rng.integers(1, 4) / L
        m = rng.uniform(0.0, 0.8) * analytic_mc()
        s_vals = np.sort(rng.uniform(0.0, 2.0, 5))
        a_vals = [op.alpha(s, k, m) for s in s_vals]
        assert np.all(np.diff(a_vals) <= 1e-11)


# --------------------------------------------------------------- growth rate

def test_growth_rate_stable_above_threshold():
    op = StabilityOperator(AFFINE, G, LAM, MU, L, 96)
    mc = op.critical_field().mc
    assert op.growth_rate(1.0 / L, 1.0001 * mc) is None
    assert op.growth_rate(1.0 / L, 2.0 * mc) is None


def test_growth_rate_fixed_point_property():
    op = StabilityOperator(AFFINE, G, LAM, MU, L, 96)
    lam_star = op.growth_rate(1.0 / L, 0.0)
    assert lam_star is not None and lam_star > 0
    assert op.alpha(lam_star, 1.0 / L, 0.0) == pytest.approx(
        lam_star**2, rel=1e-8)


def test_growth_rate_decreases_with_viscosity():
    prev = np.inf
    for mu in (0.05, 0.1, 0.2, 0.4):
        op = StabilityOperator(AFFINE, G, LAM, mu, L, 64)
        lam_star = op.growth_rate(1.0 / L, 0.3 * analytic_mc())
        assert lam_star is not None
        assert lam_star < prev
        prev = lam_star


def test_growth_rate_verification_inequality():
    # E(v) <= Λ²||√ρ v||² + Λ μ ||∇v||² with equality for the eigenfunction
    op = StabilityOperator(AFFINE, G, LAM, MU, L, 96)
    k = 1.0 / L
    lam_star, vec = op.growth_rate(k, 0.2, with_vector=True)
    N0, V, Mden = op._forms(k, 0.2)
    E = vec @ N0 @ vec
    bound = lam_star**2 * (vec @ Mden @ vec) + lam_star * MU * (vec @ (V * vec))
    assert E == pytest.approx(bound, rel=1e-8)
    rng = np.random.default_rng(11)
    for _ in range(5):
        v = rng.standard_normal(len(vec))
        E = v @ N0 @ v
        b = lam_star**2 * (v @ Mden @ v) + lam_star * MU * (v @ (V * v))
        assert E <= b + 1e-10 * abs(b)


# ------------------------------------------------------------- pencil oracle

def test_pencil_oracle_agrees_with_variational_path():
    rng = np.random.default_rng(42)
    mc = analytic_mc()
    for M in (16, 32):
        for _ in range(5):
            k = rng.integers(1, 4) / L
            m = rng.uniform(0.0, 0.85) * mc
            prof = AFFINE if rng.random() < 0.5 else build_tanh_profile(
                1.0, 1.0 + rng.uniform(0.5, 2.0), rng.uniform(0.3, 0.7),
                rng.uniform(0.1, 0.3), H, 2049)
            op = StabilityOperator(prof, G, LAM, MU, L, M)
            lam_var = op.growth_rate(k, m, tol=1e-13)
            lam_pen = op.pencil_growth_rate(k, m)
            if lam_var is None:
                assert lam_pen is None
            else:
                assert lam_pen == pytest.approx(lam_var, rel=1e-8)


# ------------------------------------------------------------- mode assembly

def test_fastest_mode_near_threshold():
    op = StabilityOperator(AFFINE, G, LAM, MU, L, 96)
    mc = op.critical_field().mc
    mode = op.fastest_mode(0.98 * mc, n_max=6)
    assert mode is not None
    assert mode.n == 1
    assert 0 < mode.Lambda < 0.1


def test_fastest_mode_stable_marker():
    op = StabilityOperator(AFFINE, G, LAM, MU, L, 64)
    mc = op.critical_field().mc
    assert op.fastest_mode(1.05 * mc, n_max=6) is None


def test_fastest_mode_grid_convergence():
    lam1 = fastest_mode(0.0, AFFINE, G, LAM, MU, L, 6, 64).Lambda
    lam2 = fastest_mode(0.0, AFFINE, G, LAM, MU, L, 6, 128).Lambda
    assert lam1 == pytest.approx(lam2, rel=1e-8)


def test_mode_normalization_and_boundary_conditions():
    mode = fastest_mode(0.3, AFFINE, G, LAM, MU, L, 4, 96)
    y2 = np.linspace(0, H, 501)
    w2 = mode.w2_values(y2)
    assert abs(w2[0]) < 1e-12 and abs(w2[-1]) < 1e-12
    # w1' = -w2''/k vanishes at the walls (natural slip condition)
    dy = y2[1] - y2[0]
    w1 = mode.w1_values(y2)
    d2w1 = np.gradient(w1, dy, edge_order=2)
    assert abs(d2w1[0]) < 1e-4 * np.abs(d2w1).max()
    # per-mode incompressibility k w1 + w2' = 0
    dw2 = np.gradient(w2, dy, edge_order=2)
    assert np.abs(mode.k * w1 + dw2).max() < 5e-3 * np.abs(dw2).max()
    # normalization ||√ρ w||₀ = 1
    quadv = np.pi * L * np.trapezoid(
        AFFINE.rho(y2) * (w1**2 + w2**2), y2)
    assert quadv == pytest.approx(1.0, rel=1e-6)


def test_mode_satisfies_linearized_bvp_residual():
    # discrete residual of Λ²ρw + Λ∇β − Λμ∆w − λm²∂1²w − gρ'w2 e2: the
    # pointwise residual is formed on a 16x refined vertical grid (so the
    # ρ-products are fully resolved) and measured on the solver's own modes
    m = 0.3
    M = 64
    mode = fastest_mode(m, AFFINE, G, LAM, MU, L, 4, M)
    grid = sp.SlabGrid(L=L, h=H, N1=16, N2=16 * M)
    y1 = grid.y1
    cosk = np.cos(mode.k * y1)[:, None]
    sink = np.sin(mode.k * y1)[:, None]
    w2v = mode.w2_values(grid.y2)[None, :] * cosk
    w1v = mode.w1_values(grid.y2)[None, :] * sink
    bev = mode.beta_values(grid.y2)[None, :] * cosk
    w1 = sp.field_from_physical(grid, w1v, sp.NEUMANN)
    w2 = sp.field_from_physical(grid, w2v, sp.DIRICHLET)
    be = sp.field_from_physical(grid, bev, sp.NEUMANN)
    rho = AFFINE.rho(grid.y2)[None, :]
    drho = AFFINE.drho(grid.y2)[None, :]
    lam_s = mode.Lambda
    r1 = (lam_s**2 * rho * sp.phys(w1) + lam_s * sp.phys(sp.ddy1(be))
          - lam_s * MU * sp.phys(sp.laplacian(w1))
          - LAM * m**2 * sp.phys(sp.ddy1(sp.ddy1(w1))))
    r2 = (lam_s**2 * rho * sp.phys(w2) + lam_s * sp.phys(sp.ddy2(be))
          - lam_s * MU * sp.phys(sp.laplacian(w2))
          - LAM * m**2 * sp.phys(sp.ddy1(sp.ddy1(w2)))
          - G * drho * sp.phys(w2))
    c1 = sp.spec(sp.field_from_physical(grid, r1, sp.NEUMANN))[:, : M + 1]
    c2 = sp.spec(sp.field_from_physical(grid, r2, sp.DIRICHLET))[:, :M]
    wh = grid.horizontal_weights()[:, None]
    resid = np.sqrt(float(
        np.sum(wh * (H / 2) * np.abs(c1) ** 2)
        + np.sum(wh * (H / 2) * np.abs(c2) ** 2)))
    wnorm = np.sqrt(sp.l2_sq(w1) + sp.l2_sq(w2))
    assert resid / wnorm < 1e-6


# ------------------------------------------------------------- dispersion

def test_dispersion_all_stable_above_mc():
    mc = analytic_mc()
    curve = dispersion_curve(1.2 * mc, AFFINE, G, LAM, MU, L, 6, 64)
    assert all(lam is None for _, _, lam in curve.entries)


def test_dispersion_magnetic_tension_reduces_growth():
    mc = analytic_mc()
    c0 = dispersion_curve(0.0, AFFINE, G, LAM, MU, L, 8, 64)
    ch = dispersion_curve(0.5 * mc, AFFINE, G, LAM, MU, L, 8, 64)
    compared = 0
    for (n0, k0, l0), (nh, kh, lh) in zip(c0.entries, ch.entries):
        if l0 is not None and lh is not None:
            assert l0 >= lh - 1e-12
            compared += 1
    assert compared >= 1


def test_dispersion_resolution_invariance():
    a = dispersion_curve(0.2, AFFINE, G, LAM, MU, L, 4, 64)
    b = dispersion_curve(0.2, AFFINE, G, LAM, MU, L, 4, 128)
    for (n1, k1, l1), (n2, k2, l2) in zip(a.entries, b.entries):
        if l1 is None:
            assert l2 is None
        else:
            assert l1 == pytest.approx(l2, rel=1e-6)
