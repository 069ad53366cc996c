"""How strong must the horizontal field be to hold the heavy fluid up?

Computes the critical field strength m_C for the desk profile (density
2 + y2 under gravity 9.8), compares it with the analytic Sturm-Liouville
value and the closed-form upper bound (h/π)·sqrt(g·max ρ'⁺/λ), and shows
how m_C responds to the density contrast.
"""

import numpy as np

from mrtlab import compute_mc
from mrtlab.profiles import build_affine_profile, build_tanh_profile

G, LAMBDA, L, H = 9.8, 1.0, 1.0, 1.0

prof = build_affine_profile(2.0, 3.0, H, 2049)
res = compute_mc(prof, G, LAMBDA, L, N2=256)
analytic = np.sqrt(G / (np.pi**2 / H**2 + 1.0 / L**2))

print("affine profile rho = 2 + y2")
print(f"  m_C          = {res.mc:.8f}   (maximizing mode n = {res.argmax_n})")
print(f"  analytic     = {analytic:.8f}")
print(f"  paper bound  = {res.bound_paper:.8f}   (m_C must stay below)")
print()

print("density contrast sweep (tanh layer, center 0.5, width 0.15):")
print("  rho_top/rho_bottom    m_C       bound")
for top in (1.2, 1.5, 2.0, 3.0, 5.0):
    p = build_tanh_profile(1.0, top, 0.5, 0.15, H, 2049)
    r = compute_mc(p, G, LAMBDA, L, N2=192)
    print(f"  {top:>6.1f}            {r.mc:8.5f}   {r.bound_paper:8.5f}")

print()
print("a profile with heavy fluid below is stable for every field:")
stab = compute_mc(build_affine_profile(3.0, 2.0, H, 513), G, LAMBDA, L, 128)
print(f"  m_C = {stab.mc}, stable_for_all_m = {stab.stable_for_all_m}")
