"""Below threshold, halving the seed delays escape by exactly ln2/Λ.

Nonlinear instability quantified: runs at m = 0 seeded with δ, δ/2, δ/4
of the fastest mode.  The escape time — when every L¹ observable of the
theorem (displacements, velocities, their gradients, and the density
rearrangement) exceeds a fixed ε — shifts by ln2/Λ per halving, the
signature of exponential growth out of the nonlinear regime.
"""

import numpy as np

from mrtlab import SimConfig, SlabGrid, StabilityOperator, run
from mrtlab.dynamics import seed_initial_data
from mrtlab.energetics import (EnergyReporter, detect_escape_time,
                               escape_quantities)
from mrtlab.profiles import build_affine_profile

G, LAMBDA, MU, L, H = 9.8, 1.0, 0.1, 1.0, 1.0

prof = build_affine_profile(2.0, 3.0, H, 2049)
grid = SlabGrid(L=L, h=H, N1=32, N2=64)
op = StabilityOperator(prof, G, LAMBDA, MU, L, N2=64)
mode = op.fastest_mode(0.0, n_max=8)
lam = mode.Lambda
print(f"m = 0, fastest mode n = {mode.n}, Lambda = {lam:.5f}")

names = [f"{p}{c}_L1" for c in ("eta1", "eta2", "u1", "u2")
         for p in ("", "d1", "d2")] + ["rho_L1"]
q0 = escape_quantities(seed_initial_data(mode, 1e-4, grid, prof), prof)
eps = 10.0 * max(q0[k] for k in names)
t_end = np.log(4.0 * eps / min(q0[k] for k in names)) / lam + 1.0
print(f"escape threshold eps = {eps:.3e}, running to t = {t_end:.1f}")

times = []
for delta in (1e-4, 5e-5, 2.5e-5):
    cfg = SimConfig(profile=prof, grid=grid, mu=MU, g=G, lam=LAMBDA, m=0.0,
                    dt=4e-3, t_end=t_end, seed_mode=mode, delta=delta,
                    cadence=0.05)
    reporter = EnergyReporter(with_escape=True)
    run(cfg, reporters=[reporter])
    T = detect_escape_time(reporter.reports, eps, names)
    times.append(T)
    print(f"  delta = {delta:.2e}  ->  T_escape = {T:.4f}")

gaps = np.diff(times)
print(f"\nconsecutive gaps: {gaps.round(4)}")
print(f"ln2/Lambda      : {np.log(2) / lam:.4f}")
print(f"relative error  : {np.abs(gaps - np.log(2) / lam) / (np.log(2) / lam)}")
