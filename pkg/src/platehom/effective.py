"""Effective stiffness, prestrain and residual energy from cell correctors."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .cell import CellGrid, StrainField, sample_prestrain
from .corrector import (
    Corrector, CorrectorProblem, GammaRegime, RelaxationResult, bending_loads,
    project_onto_Hgamma, _as_load, _bind,
)
from .material import CANONICAL_BASIS, MaterialField, PrestrainField, SymBasis


@dataclass
class EffectiveQuantities:
    regime: GammaRegime
    Qhat: np.ndarray
    Bhat: np.ndarray
    BeffCoeffs: np.ndarray
    Ires: float
    basis: SymBasis = CANONICAL_BASIS
    reports: list = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)

    def q_eff(self, G) -> float:
        return q_eff(self.Qhat, G, self.basis)

    @property
    def Beff(self) -> np.ndarray:
        return self.basis.matrix(self.BeffCoeffs)

    def to_dict(self) -> dict:
        return {
            "regime": self.regime.kind,
            "gamma": self.regime.gamma,
            "qhat": self.Qhat.tolist(),
            "bhat": self.Bhat.tolist(),
            "beff": self.BeffCoeffs.tolist(),
            "ires": float(self.Ires),
            "basis": [G.tolist() for G in self.basis.matrices],
            "reports": self.reports,
            "diagnostics": self.diagnostics,
        }


def q_eff(Qhat: np.ndarray, G, basis: SymBasis = CANONICAL_BASIS) -> float:
    """Quadratic form G -> Ghat^T Qhat Ghat with Ghat the basis coefficients of G."""
    c = basis.coefficients(G)
    return float(c @ Qhat @ c)


def _relaxed_bending(problem: CorrectorProblem, basis: SymBasis) -> list[RelaxationResult]:
    return problem.relax(bending_loads(problem.grid, basis))


def _qhat(grid: CellGrid, relaxed: Sequence[RelaxationResult]) -> tuple[np.ndarray, float]:
    """Energy Gram matrix of E_i; also the gap to the one-sided representation."""
    E = [r.total for r in relaxed]
    Q = np.array([[grid.inner(a, b) for b in E] for a in E])
    one_sided = np.array([[grid.inner(a.total, b.load) for b in relaxed] for a in relaxed])
    gap = float(np.max(np.abs(Q - one_sided)))
    return 0.5 * (Q + Q.T), gap


def effective_quadratic(grid: CellGrid, regime, basis: SymBasis = CANONICAL_BASIS, *,
                        field: MaterialField | None = None, problem: CorrectorProblem | None = None,
                        **options) -> tuple[np.ndarray, list[Corrector]]:
    """Qhat_ik = integral of L E_i : E_k with E_i = iota(x3 G_i) + chi_i."""
    grid = _bind(grid, field)
    problem = problem or CorrectorProblem(grid, regime, **options)
    relaxed = _relaxed_bending(problem, basis)
    Q, _ = _qhat(grid, relaxed)
    return Q, [r.corrector for r in relaxed]


def _prestrain_load(grid: CellGrid, B) -> np.ndarray:
    if isinstance(B, PrestrainField):
        B = sample_prestrain(grid, B)
    return _as_load(grid, B)


def effective_prestrain(grid: CellGrid, B, regime, Qhat: np.ndarray,
                        correctors: Sequence[Corrector], basis: SymBasis = CANONICAL_BASIS, *,
                        field: MaterialField | None = None) -> np.ndarray:
    """Coefficients Qhat^-1 Bhat with Bhat_i = integral of L E_i : sym B."""
    grid = _bind(grid, field)
    Bhat = prestrain_moments(grid, B, correctors, basis)
    return np.linalg.solve(Qhat, Bhat)


def prestrain_moments(grid: CellGrid, B, correctors: Sequence[Corrector],
                      basis: SymBasis = CANONICAL_BASIS) -> np.ndarray:
    from .corrector import corrector_strain
    load = _prestrain_load(grid, B)
    E = [StrainField.bending(grid, G).engineering() + corrector_strain(c, grid).engineering()
         for G, c in zip(basis.matrices, correctors)]
    return np.array([grid.inner(e, load) for e in E])


def residual_energy(grid: CellGrid, B, regime, *, field: MaterialField | None = None,
                    **options) -> float:
    grid = _bind(grid, field)
    return project_onto_Hgamma(grid, _prestrain_load(grid, B), regime, **options).residual_sq


def q_ext(grid: CellGrid, H, regime, *, field: MaterialField | None = None,
          problem: CorrectorProblem | None = None, **options) -> float:
    """Minimum over the relaxation space of the energy of H + chi."""
    grid = _bind(grid, field)
    load = _prestrain_load(grid, H)
    problem = problem or CorrectorProblem(grid, regime, **options)
    return problem.relax_one(load).energy


def compute_effective(grid: CellGrid, regime, prestrain=None, basis: SymBasis = CANONICAL_BASIS, *,
                      field: MaterialField | None = None, problem: CorrectorProblem | None = None,
                      **options) -> EffectiveQuantities:
    """All effective quantities from one factorization of the relaxation space."""
    grid = _bind(grid, field)
    problem = problem or CorrectorProblem(grid, regime, **options)
    relaxed = _relaxed_bending(problem, basis)
    Q, gap = _qhat(grid, relaxed)
    reports = [r.corrector.report for r in relaxed]
    diagnostics = {"representation_gap": gap}
    if prestrain is None or (isinstance(prestrain, PrestrainField) and prestrain.is_zero()):
        Bhat = np.zeros(3)
        Ires = 0.0
    else:
        load = _prestrain_load(grid, prestrain)
        Bhat = np.array([grid.inner(r.total, load) for r in relaxed])
        proj = project_onto_Hgamma(grid, load, problem.regime, basis=basis, problem=problem)
        Ires = max(proj.residual_sq, 0.0)
        reports.append(proj.report)
        diagnostics["projection_gstar"] = basis.coefficients(proj.Gstar).tolist()
    Beff = np.linalg.solve(Q, Bhat)
    return EffectiveQuantities(problem.regime, Q, Bhat, Beff, float(Ires), basis, reports, diagnostics)


def bending_energy(Qhat, Beff, Ires, curvature_samples, basis: SymBasis = CANONICAL_BASIS) -> float:
    """Sum of w [Q_eff(II - B_eff) + I_res] over macroscopic samples.

    ``Qhat``, ``Beff`` (coefficient vectors) and ``Ires`` are either single
    values shared by all samples or one entry per sample.
    """
    samples = list(curvature_samples)
    n = len(samples)
    Qhat = np.asarray(Qhat, dtype=float)
    Beff = np.asarray(Beff, dtype=float)
    Ires = np.asarray(Ires, dtype=float)
    Qs = np.broadcast_to(Qhat, (n, 3, 3)) if Qhat.shape == (3, 3) else Qhat
    Bs = np.broadcast_to(Beff, (n, 3)) if Beff.shape == (3,) else Beff
    Is = np.broadcast_to(Ires, (n,)) if Ires.ndim == 0 else Ires
    if Qs.shape != (n, 3, 3) or Bs.shape != (n, 3) or Is.shape != (n,):
        raise ValueError("per-sample data does not match the number of curvature samples")
    total = 0.0
    for (w, II), Q, b, ires in zip(samples, Qs, Bs, Is):
        if w < 0:
            raise ValueError("sample weights must be nonnegative")
        II = np.asarray(II, dtype=float)
        if II.shape != (2, 2):
            raise ValueError("curvatures must be 2x2")
        c = basis.coefficients(0.5 * (II + II.T)) - b
        total += w * (float(c @ Q @ c) + float(ires))
    return total


# ------------------------------------------------------------------ rate fits

@dataclass
class RateFit:
    slope: float
    intercept: float
    r_squared: float
    points: list

    def to_dict(self) -> dict:
        return {"slope": self.slope, "intercept": self.intercept, "r_squared": self.r_squared,
                "points": [list(p) for p in self.points]}


def rate_fit(points: Sequence[tuple[float, float]]) -> RateFit:
    """Least-squares line through (log gamma, log error)."""
    pts = [(float(g), float(e)) for g, e in points]
    if len(pts) < 3:
        raise ValueError("rate fit needs at least 3 points")
    for i, (g, e) in enumerate(pts):
        if not e > 0:
            raise ValueError(f"error at index {i} is not positive ({e})")
        if not g > 0:
            raise ValueError(f"gamma at index {i} is not positive ({g})")
    gam = np.array([p[0] for p in pts])
    if np.any(np.diff(gam) <= 0):
        raise ValueError("gammas must be strictly increasing")
    x = np.log(gam)
    y = np.log([p[1] for p in pts])
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss = np.sum((y - y.mean()) ** 2)
    r2 = 1.0 - np.sum(resid ** 2) / ss if ss > 0 else 1.0
    return RateFit(float(slope), float(intercept), float(r2), pts)


def saturation_filter(points: Sequence[tuple[float, float]], floor: float = 0.0,
                      solver_tol: float = 1e-12) -> list[tuple[float, float]]:
    """Drop points within 10x of the solver tolerance or of a discretization floor."""
    cut = 10.0 * max(floor, solver_tol)
    return [(g, e) for g, e in points if e > cut]


def q_error(Qa: np.ndarray, Qb: np.ndarray) -> float:
    """Entrywise max over the six independent entries."""
    iu = np.triu_indices(3)
    return float(np.max(np.abs(np.asarray(Qa)[iu] - np.asarray(Qb)[iu])))


def b_error(ba: np.ndarray, bb: np.ndarray) -> float:
    return float(np.linalg.norm(np.asarray(ba) - np.asarray(bb)))
