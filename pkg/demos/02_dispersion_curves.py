"""Growth rate versus wavenumber as the field strength rises.

Tabulates Λ(k) for several field strengths between 0 and m_C.  Magnetic
tension scales like (m k)², so high wavenumbers stabilize first and the
unstable band shrinks toward k = 1/L until it closes at m = m_C.

Writes dispersion_curves.png when matplotlib is available.
"""


from mrtlab import StabilityOperator
from mrtlab.profiles import build_affine_profile

G, LAMBDA, MU, L, H = 9.8, 1.0, 0.1, 1.0, 1.0

prof = build_affine_profile(2.0, 3.0, H, 2049)
op = StabilityOperator(prof, G, LAMBDA, MU, L, N2=128)
mc = op.critical_field().mc
fractions = (0.0, 0.4, 0.7, 0.9, 1.05)
n_max = 10

curves = {}
for frac in fractions:
    curves[frac] = op.dispersion(frac * mc, n_max=n_max)

header = "  n  k    " + "".join(f"  m={frac:4.2f}*mC" for frac in fractions)
print(f"m_C = {mc:.5f}")
print(header)
for i in range(n_max):
    n, k, _ = curves[fractions[0]].entries[i]
    cells = []
    for frac in fractions:
        lam = curves[frac].entries[i][2]
        cells.append("   stable " if lam is None else f"  {lam:8.5f}")
    print(f"{n:3d} {k:4.1f}" + "".join(cells))

try:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
except ImportError:
    raise SystemExit(0)

fig, ax = plt.subplots(figsize=(6, 4))
for frac in fractions:
    ks = [k for _, k, lam in curves[frac].entries if lam is not None]
    ls = [lam for _, _, lam in curves[frac].entries if lam is not None]
    ax.plot(ks, ls, "o-", label=f"m = {frac:.2f} m_C")
ax.set_xlabel("wavenumber k")
ax.set_ylabel("growth rate")
ax.legend()
ax.set_title("magnetic tension closes the unstable band")
fig.tight_layout()
fig.savefig("dispersion_curves.png", dpi=150)
print("\nwrote dispersion_curves.png")
