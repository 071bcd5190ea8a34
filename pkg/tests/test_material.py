import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from platehom.material import (
    BEECH_COMPLIANCE, CANONICAL_BASIS, Box, InvalidMaterialError, MaterialField, StiffnessTensor,
    SymBasis, apply_quadratic, beech_stiffness, build_material_field, build_prestrain_field,
    homogeneous, hydrostatic_bottom, is_orthotropic, isotropic_law, layered_prestrain,
    rotate_stiffness, rotation_about_e3, spectral_bounds, two_phase_laminate, voigt_convert,
    voigt_to_matrix, wood_frames, wood_layered,
)
from platehom.instances import random_law
from conftest import dense_contraction

finite = st.floats(-10, 10, allow_nan=False)
mat3 = arrays(np.float64, (3, 3), elements=finite)


def sym(A):
    return 0.5 * (A + A.T)


def random_rotation(rng):
    Q, R = np.linalg.qr(rng.normal(size=(3, 3)))
    Q = Q * np.sign(np.diag(R))
    if np.linalg.det(Q) < 0:
        Q[:, 0] *= -1
    return Q


# ---------------------------------------------------------------- quadratic

def test_isotropic_identity_energy():
    assert apply_quadratic(isotropic_law(1, 0), np.eye(3)) == pytest.approx(6.0, abs=1e-14)


def test_skew_matrix_has_no_energy():
    G = np.zeros((3, 3))
    G[0, 1], G[1, 0] = 1.0, -1.0
    assert apply_quadratic(isotropic_law(1, 0), G) == pytest.approx(0.0, abs=1e-15)


def test_beech_e33_matches_dense_contraction():
    L = beech_stiffness()
    E = np.zeros((3, 3))
    E[2, 2] = 1.0
    assert apply_quadratic(L, E) == pytest.approx(dense_contraction(L, E), rel=1e-12)
    assert apply_quadratic(L, E) == pytest.approx(L.voigt[2, 2], rel=1e-12)


def test_quadratic_matches_dense_contraction_random(rng):
    for _ in range(5):
        L = random_law(rng)
        G = sym(rng.normal(size=(3, 3)))
        assert apply_quadratic(L, G) == pytest.approx(dense_contraction(L, G), rel=1e-12)


@given(mat3)
def test_quadratic_depends_on_symmetric_part(G):
    L = beech_stiffness()
    a, b = apply_quadratic(L, G), apply_quadratic(L, sym(G))
    assert a == pytest.approx(b, rel=1e-12, abs=1e-9)


def test_quadratic_symmetric_part_hundred_random(rng):
    L = random_law(rng)
    for _ in range(100):
        G = rng.normal(size=(3, 3))
        assert apply_quadratic(L, G) == pytest.approx(apply_quadratic(L, sym(G)), rel=1e-12)


# -------------------------------------------------------------------- voigt

def test_voigt_identity():
    np.testing.assert_array_equal(voigt_convert(np.eye(3)), [1, 1, 1, 0, 0, 0])


def test_voigt_stores_entry_not_engineering_shear():
    G = np.zeros((3, 3))
    G[1, 2] = G[2, 1] = 0.5
    np.testing.assert_array_equal(voigt_convert(G), [0, 0, 0, 0.5, 0, 0])


@given(mat3)
def test_voigt_round_trip(A):
    G = sym(A)
    np.testing.assert_array_equal(voigt_to_matrix(voigt_convert(G)), G)


def test_voigt_rejects_nonsymmetric():
    with pytest.raises(ValueError):
        voigt_convert(np.arange(9.0).reshape(3, 3))


def test_voigt_tensor_action_matches_matrix_action(rng):
    L = random_law(rng)
    G = sym(rng.normal(size=(3, 3)))
    direct = np.einsum("ijkl,kl->ij", L.tensor(), G)
    np.testing.assert_allclose(L.stress(G), direct, rtol=1e-12, atol=1e-12)


def test_stiffness_rejects_asymmetric_voigt():
    C = np.eye(6)
    C[0, 1] = 0.3
    with pytest.raises(InvalidMaterialError):
        StiffnessTensor(C)


# ---------------------------------------------------------------- isotropic

def test_isotropic_examples():
    E11 = np.diag([1.0, 0, 0])
    assert apply_quadratic(isotropic_law(1, 0), E11) == pytest.approx(2.0)
    assert spectral_bounds(isotropic_law(1, 0)) == pytest.approx((2.0, 2.0))
    assert apply_quadratic(isotropic_law(2, 1), np.eye(3)) == pytest.approx(21.0)


@pytest.mark.parametrize("mu,lam", [(0.0, 0.0), (-1.0, 0.0), (1.0, -0.1)])
def test_isotropic_rejects_bad_moduli(mu, lam):
    with pytest.raises(InvalidMaterialError):
        isotropic_law(mu, lam)


def test_isotropic_closed_form(rng):
    mu, lam = 1.7, 0.4
    L = isotropic_law(mu, lam)
    for _ in range(10):
        G = rng.normal(size=(3, 3))
        S = sym(G)
        assert apply_quadratic(L, G) == pytest.approx(2 * mu * np.sum(S * S) + lam * np.trace(S) ** 2)


# -------------------------------------------------------------------- beech

def test_beech_inverts_compliance():
    np.testing.assert_allclose(BEECH_COMPLIANCE @ beech_stiffness().voigt, np.eye(6), atol=1e-10)


def test_beech_compliance_entry():
    assert BEECH_COMPLIANCE[0, 0] == pytest.approx(5.92e-4, rel=1e-12)


def test_beech_positive_definite():
    alpha, beta = spectral_bounds(beech_stiffness())
    assert 0 < alpha <= beta


def test_beech_canonical_frame_couples_normal_slots():
    # C13 != 0 couples iota(G1) with e3 x e3, so the in-plane/transverse split fails
    L = beech_stiffness()
    assert abs(L.voigt[0, 2]) > 1.0
    assert not is_orthotropic(L)


# ---------------------------------------------------------------- rotations

def test_rotate_identity_and_isotropic(rng):
    L = beech_stiffness()
    assert rotate_stiffness(L, np.eye(3)).allclose(L)
    iso = isotropic_law(1.0, 0.0)
    assert rotate_stiffness(iso, random_rotation(rng)).allclose(iso)


def test_rotated_beech_two_sided_evaluation(rng):
    L = beech_stiffness()
    bottom, top = wood_frames()
    for U in (bottom, top):
        Lr = rotate_stiffness(L, U)
        for _ in range(20):
            G = sym(rng.normal(size=(3, 3)))
            assert Lr.quadratic(G) == pytest.approx(L.quadratic(U.T @ G @ U), rel=1e-10)


def test_rotate_then_back(rng):
    L = random_law(rng)
    U = random_rotation(rng)
    back = rotate_stiffness(rotate_stiffness(L, U), U.T)
    np.testing.assert_allclose(back.voigt, L.voigt, rtol=0, atol=1e-12 * np.abs(L.voigt).max())


def test_rotate_rejects_non_rotation():
    with pytest.raises(ValueError):
        rotate_stiffness(beech_stiffness(), np.diag([1.0, 1.0, -1.0]))
    with pytest.raises(ValueError):
        rotate_stiffness(beech_stiffness(), 2 * np.eye(3))


# ------------------------------------------------------------- orthotropic

def test_orthotropic_examples():
    assert is_orthotropic(isotropic_law(1.3, 0.0))
    # lambda tr(F) d3 couples iota(F) with sym(e3 x e3)
    assert not is_orthotropic(isotropic_law(1.0, 1.0))
    _, top = wood_frames()
    assert not is_orthotropic(rotate_stiffness(beech_stiffness(), top))


def test_orthotropic_lambda_coupling_by_contraction():
    L = isotropic_law(1.0, 1.0)
    F = np.zeros((3, 3))
    F[0, 0] = 1.0
    d = np.zeros((3, 3))
    d[2, 2] = 1.0
    assert np.einsum("ijkl,kl,ij->", L.tensor(), F, d) == pytest.approx(1.0)


@given(st.floats(1e-3, 1e3))
def test_orthotropic_scale_invariant(s):
    rng = np.random.default_rng(1)
    for L in (random_law(rng, orthotropic=True), random_law(rng)):
        assert is_orthotropic(L) == is_orthotropic(L.scaled(s))


# ----------------------------------------------------------------- bounds

def test_spectral_bounds_iso_lambda_one():
    assert spectral_bounds(isotropic_law(1, 1)) == pytest.approx((2.0, 5.0))


def test_spectral_bounds_sandwich(rng):
    for L in (beech_stiffness(), random_law(rng), isotropic_law(1, 1)):
        a, b = spectral_bounds(L)
        for _ in range(1000):
            G = rng.normal(size=(3, 3))
            n = np.sum(sym(G) ** 2)
            q = apply_quadratic(L, G)
            assert a * n * (1 - 1e-12) <= q <= b * n * (1 + 1e-12)


def test_spectral_bounds_rejects_indefinite():
    C = np.eye(6)
    C[0, 0] = -1.0
    with pytest.raises(InvalidMaterialError):
        spectral_bounds(StiffnessTensor(C))


# ----------------------------------------------------------------- basis

def test_canonical_basis_orthonormal():
    M = CANONICAL_BASIS.matrices
    gram = np.array([[np.sum(a * b) for b in M] for a in M])
    np.testing.assert_allclose(gram, np.eye(3), atol=1e-15)
    np.testing.assert_allclose(M[2], np.array([[0, 1], [1, 0]]) / math.sqrt(2))


def test_basis_rejects_non_orthonormal():
    with pytest.raises(ValueError):
        SymBasis(np.eye(2), np.diag([1.0, 0.0]), np.diag([0.0, 1.0]))


@given(st.floats(-4, 4))
def test_rotated_basis_coefficients_round_trip(angle):
    B = SymBasis.rotated(angle)
    G = np.array([[0.3, -1.2], [-1.2, 2.0]])
    np.testing.assert_allclose(B.matrix(B.coefficients(G)), G, atol=1e-12)


# ---------------------------------------------------------------- fields

def test_laminate_queries():
    f = two_phase_laminate(0.5, 1.0, 2.0)
    assert f.tensor_at(0.0).allclose(isotropic_law(1.0, 0.0))
    assert f.tensor_at(0.4).allclose(isotropic_law(2.0, 0.0))


@given(st.floats(-0.5, 0.5), st.floats(-0.5, 0.5), st.floats(-0.5, 0.5))
def test_laminate_periodic(y1, y2, x3):
    f = two_phase_laminate(0.5, 1.0, 2.0)
    assert f.tensor_at(y1, y2, x3) is f.tensor_at(y1 + 1.0, y2 - 1.0, x3)


def test_wood_queries():
    w = wood_layered()
    assert w.tensor_at(0.4, 0.0, 0.1).allclose(isotropic_law(1.0, 0.0))
    bottom, top = wood_frames()
    assert w.tensor_at(0.1, 0.0, -0.2).allclose(rotate_stiffness(beech_stiffness(), bottom))
    assert w.tensor_at(-0.1, 0.3, 0.2).allclose(rotate_stiffness(beech_stiffness(), top))


def test_wood_narrow_stripe():
    w = build_material_field("wood-narrow")
    assert w.tensor_at(0.2, 0.0, 0.1).allclose(rotate_stiffness(beech_stiffness(), wood_frames()[1]))
    assert w.tensor_at(-0.1, 0.0, 0.1).allclose(isotropic_law(1.0, 0.0))
    assert w.tensor_at(0.3, 0.0, 0.1).allclose(isotropic_law(1.0, 0.0))


def test_single_region_is_homogeneous(rng):
    L = random_law(rng)
    f = homogeneous(L)
    for p in rng.uniform(-0.5, 0.5, size=(10, 3)):
        assert f.tensor_at(*p) is L


def test_field_rejects_gap_and_overlap():
    a, b = isotropic_law(1.0), isotropic_law(2.0)
    with pytest.raises(InvalidMaterialError):
        MaterialField(((Box(y1=(-0.5, 0.0)), a),))
    with pytest.raises(InvalidMaterialError):
        MaterialField(((Box(), a), (Box(y1=(0.0, 0.2)), b)))


def test_build_material_from_regions():
    spec = {"regions": [
        {"box": {"x3": [-0.5, 0.0]}, "law": {"type": "isotropic", "mu": 1.0}},
        {"box": {"x3": [0.0, 0.5]}, "law": {"type": "beech", "frame": wood_frames()[0].tolist()}},
    ]}
    f = build_material_field(spec)
    assert f.tensor_at(0, 0, -0.3).allclose(isotropic_law(1.0))
    assert f.tensor_at(0, 0, 0.3).allclose(rotate_stiffness(beech_stiffness(), wood_frames()[0]))
    with pytest.raises(InvalidMaterialError):
        build_material_field({"preset": "granite"})


# ------------------------------------------------------------- prestrain

def test_hydrostatic_bottom_values():
    B = build_prestrain_field("hydrostatic-bottom")
    np.testing.assert_array_equal(B.value_at(0.0, 0.0, -0.2), np.eye(3))
    np.testing.assert_array_equal(B.value_at(0.0, 0.0, 0.2), np.zeros((3, 3)))


def test_zero_prestrain_spec():
    assert build_prestrain_field({"type": "zero"}).is_zero()
    assert build_prestrain_field(None).is_zero()


def test_prestrain_rejects_nonsymmetric_block():
    with pytest.raises(InvalidMaterialError):
        layered_prestrain([((-0.5, 0.5), np.arange(9.0).reshape(3, 3))])


def test_layered_prestrain_lookup():
    B = build_prestrain_field({"type": "layered", "layers": [
        {"x3": [-0.5, 0.1], "B": np.eye(3).tolist()},
        {"x3": [0.1, 0.5], "B": (2 * np.eye(3)).tolist()}]})
    assert B.value_at(0, 0, 0.0)[0, 0] == 1.0
    assert B.value_at(0, 0, 0.3)[0, 0] == 2.0
    assert 0.1 in B.breakpoints(2)
