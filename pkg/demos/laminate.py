"""Two-phase laminate: closed forms, the twist corrector and all three regimes.

    python3 demos/laminate.py
"""
import numpy as np

from platehom import (
    build_grid, compute_effective, effective_quadratic, prestrain_from_corrector, sample_prestrain,
)
from platehom.material import two_phase_laminate
from platehom.oracle import (
    LaminateSpec, laminate_corrector_profile, laminate_exact_qeff, laminate_zero_qeff,
)

np.set_printoptions(precision=6, suppress=True)

spec = LaminateSpec(theta=0.5, mu1=1.0, mu2=2.0)
grid = build_grid(8, 2, 8, two_phase_laminate(spec.theta, spec.mu1, spec.mu2))
print(f"harmonic mean {spec.harmonic:.6f}, arithmetic mean {spec.arithmetic:.6f}")

# The infinite regime relaxes bending and twist to the harmonic mean, the
# zero regime only bending; the cylindrical curvature G2 is never relaxed.
for label, regime, exact in (("infinity", "inf", laminate_exact_qeff(spec)),
                             ("zero", 0.0, laminate_zero_qeff(spec))):
    Q, _ = effective_quadratic(grid, regime)
    print(f"\nQhat ({label}):\n{Q}\nmax deviation from closed form {np.abs(Q - exact).max():.2e}")

for gamma in (0.5, 4.0, 64.0):
    Q, _ = effective_quadratic(grid, gamma)
    print(f"gamma = {gamma:5g}: diag Qhat = {np.diag(Q)}")

# Twist corrector: d3 phi_2 is a zero-mean triangle wave in y1.  The
# corrector-induced prestrain carries half of it in the 2-3 slot.
B = prestrain_from_corrector(grid)
S = sample_prestrain(grid, B).values[:, 0, 0, 1, 2]
y1 = grid.points[0][:, 0, 0]
prof = laminate_corrector_profile(spec)(y1)
print("\ny1       solver 2*B23   closed-form profile")
for y, a, b in list(zip(y1, 2 * S, prof))[::2]:
    print(f"{y:+.3f}   {a:+.6f}      {b:+.6f}")
print(f"largest |profile| at the quadrature points {np.abs(prof).max():.4f} (peak sqrt(2)/12 = {np.sqrt(2) / 12:.4f})")

# The corrector-induced prestrain has no effective curvature in the limit,
# but does for every finite gamma.
for regime in ("inf", 1.0, 16.0, 256.0):
    e = compute_effective(grid, regime, B)
    print(f"regime {regime!s:>5}: Beff = {e.BeffCoeffs}, Ires = {e.Ires:.3e}")
