"""Effective bending stiffness, prestrain and residual energy of heterogeneous plates."""
from .material import (
    CANONICAL_BASIS, Box, InvalidMaterialError, MaterialField, PrestrainField, StiffnessTensor,
    SymBasis, apply_quadratic, beech_stiffness, build_material_field, build_prestrain_field,
    homogeneous, hydrostatic_bottom, is_orthotropic, isotropic_law, layered_prestrain,
    rotate_stiffness, rotation_about_e3, spectral_bounds, two_phase_laminate, voigt_convert,
    voigt_to_matrix, wood_layered, zero_prestrain,
)
from .cell import CellGrid, StrainField, build_grid, integrate_energy, sample_prestrain, scaled_strain
from .corrector import (
    Corrector, CorrectorProblem, GammaRegime, SolverError, corrector_strain, dump_corrector,
    load_corrector, prestrain_from_corrector, project_onto_Hgamma, solve_corrector, solve_finite,
    solve_infinity, solve_zero,
)
from .effective import (
    EffectiveQuantities, RateFit, b_error, bending_energy, compute_effective, effective_prestrain,
    effective_quadratic, q_eff, q_error, q_ext, rate_fit, residual_energy, saturation_filter,
)

__all__ = [name for name in dir() if not name.startswith("_")]
