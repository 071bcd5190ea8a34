import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from platehom.cell import StrainField, build_grid, sample_prestrain
from platehom.corrector import (
    CorrectorProblem, GammaRegime, SolverError, bending_loads, corrector_strain,
    default_fourier_cutoff, dump_corrector, load_corrector, prestrain_from_corrector,
    project_onto_Hgamma, solve_corrector, solve_finite, solve_infinity, solve_zero,
)
from platehom.effective import compute_effective, q_ext
from platehom.instances import random_field, random_laminate, random_layered_prestrain
from platehom.material import (
    CANONICAL_BASIS, homogeneous, isotropic_law, two_phase_laminate,
)
from platehom.oracle import LaminateSpec, laminate_corrector_profile, laminate_corrector_slope
from conftest import frobenius_sq

G1, G2, G3 = CANONICAL_BASIS.matrices
REGIMES = [GammaRegime.zero(), GammaRegime.finite(0.5), GammaRegime.finite(8.0), GammaRegime.infinity()]
IDS = ["zero", "finite0.5", "finite8", "infinity"]


@pytest.fixture(scope="module")
def lam_grid():
    return build_grid(8, 2, 4, two_phase_laminate(0.5, 1.0, 2.0))


def bending(grid, G):
    return StrainField.bending(grid, G)


# ------------------------------------------------------------------ regime

def test_gamma_regime_parsing():
    assert GammaRegime.from_value(0) == GammaRegime.zero()
    assert GammaRegime.from_value(math.inf) == GammaRegime.infinity()
    assert GammaRegime.from_value("inf") == GammaRegime.infinity()
    assert GammaRegime.from_value("2.5") == GammaRegime.finite(2.5)
    for bad in (-1.0, math.nan):
        with pytest.raises(ValueError):
            GammaRegime.finite(bad)
    with pytest.raises(ValueError):
        GammaRegime("infinity", 3.0)


# ------------------------------------------------------- homogeneous cases

@pytest.mark.parametrize("regime", REGIMES, ids=IDS)
def test_homogeneous_bending_needs_no_corrector(regime):
    g = build_grid(3, 3, 3, homogeneous(isotropic_law(1.0, 0.0)))
    G = np.array([[0.7, -0.2], [-0.2, 1.1]])
    c = solve_corrector(g, bending(g, G), regime)
    assert np.abs(c.M).max() < 1e-13
    assert np.abs(c.phi).max() < 1e-13
    for extra in (c.d, c.zeta, c.g):
        if extra is not None:
            assert np.abs(extra).max() < 1e-13


@pytest.mark.parametrize("regime", REGIMES, ids=IDS)
def test_zero_data_zero_corrector(regime, lam_grid):
    c = solve_corrector(lam_grid, StrainField.zeros(lam_grid), regime)
    assert np.abs(c.M).max() == 0.0 and np.abs(c.phi).max() == 0.0


def test_infinity_lambda_one_transverse_contraction():
    g = build_grid(2, 2, 3, homogeneous(isotropic_law(1.0, 1.0)))
    c = solve_infinity(g, bending(g, G1))
    x3 = g.gauss[2][0]
    np.testing.assert_allclose(c.d[:, 2], -x3 / 3.0, atol=1e-13)
    np.testing.assert_allclose(c.d[:, :2], 0.0, atol=1e-13)
    assert np.abs(c.phi).max() < 1e-13


def test_zero_lambda_one_pointwise_condensation():
    g = build_grid(3, 3, 3, homogeneous(isotropic_law(1.0, 1.0)))
    G = np.array([[0.5, 0.3], [0.3, 1.5]])
    c = solve_zero(g, bending(g, G))
    x3 = g.points[2]
    np.testing.assert_allclose(c.g[..., 2], -x3 * np.trace(G) / 3.0, atol=1e-13)
    np.testing.assert_allclose(c.g[..., :2], 0.0, atol=1e-13)
    assert np.abs(c.phi).max() < 1e-13 and np.abs(c.zeta).max() < 1e-13


# ---------------------------------------------------------- laminate cases

def test_laminate_infinity_corrector_closed_form(lam_grid):
    spec = LaminateSpec()
    c = solve_infinity(lam_grid, bending(lam_grid, G3))
    assert np.abs(c.d).max() < 1e-12
    assert np.abs(c.phi[..., [0, 2]]).max() < 1e-12
    chi = corrector_strain(c, lam_grid).values
    y1, _, x3 = lam_grid.points
    expected_half_slope = 0.5 * laminate_corrector_slope(spec, 1.0)(y1) * x3
    np.testing.assert_allclose(chi[..., 0, 1], expected_half_slope, atol=1e-12)
    total12 = x3 / math.sqrt(2) + chi[..., 0, 1]
    flux = 2 * spec.mu(y1) * total12
    np.testing.assert_allclose(flux, math.sqrt(2) * x3 * spec.harmonic, atol=1e-12)


def test_laminate_corrector_strain_offdiagonal_only(lam_grid):
    c = solve_infinity(lam_grid, bending(lam_grid, G3))
    chi = corrector_strain(c, lam_grid).values
    mask = np.ones((3, 3), bool)
    mask[0, 1] = mask[1, 0] = False
    assert np.abs(chi[..., mask]).max() < 1e-12


def test_laminate_finite_large_gamma_approaches_limit(lam_grid):
    c_inf = corrector_strain(solve_infinity(lam_grid, bending(lam_grid, G3)), lam_grid).values
    devs = []
    for gam in (4.0, 64.0, 1024.0):
        c = corrector_strain(solve_finite(lam_grid, bending(lam_grid, G3), gam), lam_grid).values
        devs.append(np.abs(c[..., 0, 1] - c_inf[..., 0, 1]).max())
    assert devs[0] > devs[1] > devs[2] and devs[2] < 1e-3


def test_zero_matches_small_gamma_twist():
    g = build_grid(16, 2, 2, two_phase_laminate())
    H = bending(g, G3)
    assert abs(q_ext(g, H, 0.0) - q_ext(g, H, 1e-3)) <= 1e-4


def test_from_corrector_prestrain_only_23_slot(lam_grid):
    B = prestrain_from_corrector(lam_grid)
    S = sample_prestrain(lam_grid, B).values
    mask = np.ones((3, 3), bool)
    mask[1, 2] = mask[2, 1] = False
    assert np.abs(S[..., mask]).max() < 1e-12
    prof = laminate_corrector_profile(LaminateSpec())(lam_grid.points[0])
    np.testing.assert_allclose(S[..., 1, 2], 0.5 * prof, atol=1e-12)
    assert np.abs(S[..., 1, 2]).max() > 0.05


# ------------------------------------------------------------- invariants

def _random_case(seed, regime):
    rng = np.random.default_rng(seed)
    f = random_field(rng)
    B = random_layered_prestrain(rng)
    g = build_grid(3, 3, 3, f, B)
    return g, sample_prestrain(g, B), CorrectorProblem(g, regime)


@pytest.mark.parametrize("regime", REGIMES, ids=IDS)
def test_corrector_mean_zero(regime):
    g, H, prob = _random_case(3, regime)
    c = prob.relax_one(H.engineering()).corrector
    if regime.kind == "finite":
        from platehom.cell import interpolate_nodal
        vals = interpolate_nodal(g, c.phi).reshape(-1, 3)
        np.testing.assert_allclose(g.weights @ vals, 0.0, atol=1e-12)
    elif regime.kind == "infinity":
        (V1, _), (V2, _), _ = g.operators
        w12 = np.outer(g.gauss[0][1], g.gauss[1][1]).ravel()
        import scipy.sparse as sp
        V = sp.kron(V1, V2)
        for s in range(c.phi.shape[2]):
            np.testing.assert_allclose(w12 @ (V @ c.phi[:, :, s].reshape(-1, 3)), 0.0, atol=1e-12)
    else:
        import scipy.sparse as sp
        (V1, _), (V2, _), _ = g.operators
        w12 = np.outer(g.gauss[0][1], g.gauss[1][1]).ravel()
        np.testing.assert_allclose(w12 @ (sp.kron(V1, V2) @ c.phi.reshape(-1, 2)), 0.0, atol=1e-12)
        assert c.report["schur_rank_deficiency"] == 0


@pytest.mark.parametrize("regime", REGIMES, ids=IDS)
def test_euler_lagrange_residual(regime):
    g, H, prob = _random_case(4, regime)
    r = prob.relax_one(H.engineering())
    res = prob.euler_lagrange_residual(r.total)
    scale = np.abs(prob.euler_lagrange_residual(H.engineering())).max()
    assert np.abs(res).max() <= 1e-10 * scale
    assert r.corrector.report["residual"] < 1e-10


@pytest.mark.parametrize("regime", REGIMES, ids=IDS)
def test_galerkin_orthogonality_random_directions(regime):
    g, H, prob = _random_case(5, regime)
    r = prob.relax_one(H.engineering())
    sp_ = prob.space
    rng = np.random.default_rng(0)
    nloc = sp_.n_local
    tot = sp_.represent(r.total)
    for _ in range(50):
        v = sp_.strain(rng.normal(size=nloc))
        val = sp_.metric(v, tot)
        scale = math.sqrt(abs(sp_.metric(v, v)) * abs(sp_.metric(tot, tot)))
        assert abs(val) <= 10 * prob.tol * max(scale, 1.0)


@pytest.mark.parametrize("regime", REGIMES, ids=IDS)
def test_minimality_against_perturbations(regime):
    g, H, prob = _random_case(6, regime)
    r = prob.relax_one(H.engineering())
    sp_ = prob.space
    rng = np.random.default_rng(1)
    tot = sp_.represent(r.total)
    e0 = sp_.metric(tot, tot)
    for _ in range(20):
        v = sp_.strain(rng.normal(size=sp_.n_local)) * 1e-2
        assert sp_.metric(tot + v, tot + v) >= e0 - 1e-12 * e0


@pytest.mark.parametrize("regime", REGIMES, ids=IDS)
def test_linearity(regime):
    g, H, prob = _random_case(7, regime)
    H2 = bending(g, np.array([[0.3, 1.0], [1.0, -0.4]])).engineering()
    H1 = H.engineering()
    a, b = 1.7, -0.6
    r1, r2, r12 = prob.relax([H1, H2, a * H1 + b * H2])
    np.testing.assert_allclose(r12.chi, a * r1.chi + b * r2.chi, atol=1e-10 * np.abs(r12.chi).max())
    np.testing.assert_allclose(r12.corrector.M, a * r1.corrector.M + b * r2.corrector.M, atol=1e-10)


@pytest.mark.parametrize("regime", REGIMES, ids=IDS)
def test_a_priori_bound(regime):
    g, H, prob = _random_case(8, regime)
    alpha, beta = g.field.bounds()
    r = prob.relax_one(H.engineering())
    lhs = np.sum(r.corrector.M ** 2) + frobenius_sq(g, r.chi)
    C = 2.0 * (1.0 + math.sqrt(beta / alpha)) ** 2
    assert lhs <= C * frobenius_sq(g, H.engineering())


@given(st.integers(0, 10_000))
def test_orthotropic_infinity_energy_below_finite(seed):
    rng = np.random.default_rng(seed)
    f = random_laminate(rng)
    g = build_grid(4, 2, 3, f)
    G = rng.normal(size=(2, 2))
    H = bending(g, 0.5 * (G + G.T))
    e_inf = q_ext(g, H, math.inf)
    for gam in (0.5, 3.0):
        assert e_inf <= q_ext(g, H, gam) + 1e-12


# --------------------------------------------------------------- solvers

@pytest.mark.parametrize("regime", [GammaRegime.finite(2.0), GammaRegime.infinity()], ids=["finite", "inf"])
def test_pcg_matches_direct(regime, lam_grid):
    loads = bending_loads(lam_grid)
    d = CorrectorProblem(lam_grid, regime).relax(loads)
    p = CorrectorProblem(lam_grid, regime, solver="pcg", tol=1e-13).relax(loads)
    for a, b in zip(d, p):
        assert a.energy == pytest.approx(b.energy, rel=1e-10)
        assert b.corrector.report["method"] == "pcg" and b.corrector.report["iterations"] > 0


def test_pcg_nonconvergence_raises(lam_grid):
    prob = CorrectorProblem(lam_grid, 2.0, solver="pcg", maxiter=2)
    with pytest.raises(SolverError) as exc:
        prob.relax(bending_loads(lam_grid))
    assert "residual" in exc.value.report


def test_finite_limit_space_close_to_slices():
    g = build_grid(8, 2, 8, two_phase_laminate())
    a = CorrectorProblem(g, "inf").relax(bending_loads(g))
    b = CorrectorProblem(g, "inf", infinity="finite-limit").relax(bending_loads(g))
    for x, y in zip(a, b):
        assert x.energy == pytest.approx(y.energy, rel=1e-10)


def test_default_fourier_cutoff():
    g = build_grid(40, 5, 2, two_phase_laminate())
    assert default_fourier_cutoff(g) == (16, 4)


# ------------------------------------------------------------- projection

@pytest.mark.parametrize("regime", REGIMES, ids=IDS)
def test_projection_of_bending_field(regime, lam_grid):
    G0 = np.array([[0.4, -0.7], [-0.7, 1.2]])
    p = project_onto_Hgamma(lam_grid, bending(lam_grid, G0), regime)
    np.testing.assert_allclose(p.Gstar, G0, atol=1e-10)
    assert abs(p.residual_sq) < 1e-20
    z = project_onto_Hgamma(lam_grid, StrainField.zeros(lam_grid), regime)
    assert np.abs(z.Gstar).max() == 0.0 and z.residual_sq == 0.0


def test_projection_residual_matches_energy_identity(lam_grid):
    B = prestrain_from_corrector(lam_grid)
    p = project_onto_Hgamma(lam_grid, B, "inf")
    e = compute_effective(lam_grid, "inf", B)
    gap = q_ext(lam_grid, B, "inf") - e.q_eff(e.Beff)
    assert p.residual_sq == pytest.approx(gap, rel=1e-10)
    assert p.residual_sq > 1e-4


# ---------------------------------------------------------------- dump

@pytest.mark.parametrize("regime", REGIMES, ids=IDS)
def test_dump_round_trip(tmp_path, regime, lam_grid):
    c = solve_corrector(lam_grid, bending(lam_grid, G3), regime)
    path = tmp_path / "c.bin"
    dump_corrector(c, lam_grid, path)
    c2, header = load_corrector(path)
    assert header["regime"] == regime.kind and c2.regime == regime
    np.testing.assert_array_equal(c2.phi, c.phi)
    np.testing.assert_array_equal(c2.M, c.M)
    np.testing.assert_array_equal(header["nodes"]["y1"], lam_grid.y1)
    np.testing.assert_allclose(corrector_strain(c2, lam_grid).values, corrector_strain(c, lam_grid).values)
    with open(path, "rb") as fh:
        assert fh.read(8) == b"PHCORR01"


def test_load_rejects_foreign_file(tmp_path):
    p = tmp_path / "x.bin"
    p.write_bytes(b"NOTADUMP" + bytes(16))
    with pytest.raises(ValueError):
        load_corrector(p)
