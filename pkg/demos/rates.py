"""Convergence in gamma: fitted log-log slopes for the laminate and the wood bilayer.

    python3 demos/rates.py

The same sweeps run from the command line with
``python3 -m platehom sweep --config configs/laminate_sweep.json``.
"""
import numpy as np

from platehom import build_grid, compute_effective, prestrain_from_corrector
from platehom.effective import b_error, q_error, rate_fit, saturation_filter
from platehom.material import build_material_field, build_prestrain_field


def sweep(grid, prestrain, ks, infinity="slices"):
    ref = compute_effective(grid, "inf", prestrain, infinity=infinity)
    pq, pb = [], []
    print(f"{'gamma':>7} {'err_q':>11} {'err_b':>11}")
    for k in ks:
        e = compute_effective(grid, 2.0 ** k, prestrain)
        pq.append((2.0 ** k, q_error(e.Qhat, ref.Qhat)))
        pb.append((2.0 ** k, b_error(e.BeffCoeffs, ref.BeffCoeffs)))
        print(f"{2.0 ** k:7g} {pq[-1][1]:11.3e} {pb[-1][1]:11.3e}")
    fq, fb = rate_fit(saturation_filter(pq)), rate_fit(saturation_filter(pb))
    print(f"slopes: err_q {fq.slope:.3f} (r2 {fq.r_squared:.4f}), err_b {fb.slope:.3f} (r2 {fb.r_squared:.4f})\n")


# Orthotropic laminate, exact slice-wise limit as reference: gamma^-2 and gamma^-1.
print("laminate, corrector-induced prestrain")
g = build_grid(8, 2, 8, build_material_field("laminate"))
sweep(g, prestrain_from_corrector(g), range(0, 11))

# Non-orthotropic wood.  The reference is the gamma -> inf limit of the same
# trilinear discretization, so that discretization error does not masquerade
# as a rate floor.
print("wood bilayer, swelling of the bottom layer")
mat, B1 = build_material_field("wood-narrow"), build_prestrain_field("hydrostatic-bottom")
g = build_grid(16, 2, 16, mat, B1)
sweep(g, B1, range(0, 10), infinity="finite-limit")

print("wood bilayer, its own limit corrector as prestrain")
g = build_grid(16, 2, 16, mat)
sweep(g, prestrain_from_corrector(g), range(0, 10), infinity="finite-limit")
