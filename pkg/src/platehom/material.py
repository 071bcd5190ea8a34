"""Elastic laws, Voigt algebra and piecewise material/prestrain fields on the cell.

Voigt slots are ordered (11, 22, 33, 23, 13, 12).  ``StiffnessTensor.voigt``
stores the engineering-convention matrix ``C`` (stress = C @ engineering
strain), so the energy density of a matrix G is ``(W v)^T C (W v)`` with
``v`` the raw entries of sym G and ``W = diag(1, 1, 1, 2, 2, 2)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

VOIGT_PAIRS = ((0, 0), (1, 1), (2, 2), (1, 2), (0, 2), (0, 1))
STRAIN_WEIGHTS = np.array([1.0, 1.0, 1.0, 2.0, 2.0, 2.0])
IN_PLANE_SLOTS = (0, 1, 5)
TRANSVERSE_SLOTS = (2, 3, 4)

SYM_TOL = 1e-12


class InvalidMaterialError(ValueError):
    """Raised for non-admissible laws or inconsistent field definitions."""


# ---------------------------------------------------------------- Voigt helpers

def _check_symmetric(G: np.ndarray, tol: float = SYM_TOL) -> None:
    scale = max(1.0, float(np.max(np.abs(G))))
    if np.max(np.abs(G - np.swapaxes(G, -1, -2))) > tol * scale:
        raise ValueError("matrix is not symmetric")


def voigt_convert(G) -> np.ndarray:
    """Raw Voigt vector of a symmetric 3x3 matrix (entries, no factor 2)."""
    G = np.asarray(G, dtype=float)
    if G.shape[-2:] != (3, 3):
        raise ValueError("expected (..., 3, 3) input")
    _check_symmetric(G)
    return np.stack([G[..., i, j] for i, j in VOIGT_PAIRS], axis=-1)


def voigt_to_matrix(v) -> np.ndarray:
    """Inverse of :func:`voigt_convert`."""
    v = np.asarray(v, dtype=float)
    if v.shape[-1] != 6:
        raise ValueError("expected (..., 6) input")
    G = np.zeros(v.shape[:-1] + (3, 3))
    for a, (i, j) in enumerate(VOIGT_PAIRS):
        G[..., i, j] = v[..., a]
        G[..., j, i] = v[..., a]
    return G


def engineering_strain(G) -> np.ndarray:
    """Engineering Voigt vector of sym G (shear slots carry 2 G_ij)."""
    G = np.asarray(G, dtype=float)
    S = 0.5 * (G + np.swapaxes(G, -1, -2))
    return np.stack([S[..., i, j] for i, j in VOIGT_PAIRS], axis=-1) * STRAIN_WEIGHTS


def engineering_to_matrix(e) -> np.ndarray:
    return voigt_to_matrix(np.asarray(e, dtype=float) / STRAIN_WEIGHTS)


def iota(F) -> np.ndarray:
    """Embed a 2x2 matrix into the upper-left block of a 3x3 matrix."""
    F = np.asarray(F, dtype=float)
    out = np.zeros(F.shape[:-2] + (3, 3))
    out[..., :2, :2] = F
    return out


# ------------------------------------------------------------------- the law

@dataclass(frozen=True, eq=False)
class StiffnessTensor:
    """Fourth-order elasticity tensor stored as a symmetric 6x6 Voigt matrix."""

    voigt: np.ndarray

    def __post_init__(self):
        C = np.array(self.voigt, dtype=float)
        if C.shape != (6, 6) or not np.all(np.isfinite(C)):
            raise InvalidMaterialError("Voigt matrix must be a finite 6x6 array")
        scale = np.max(np.abs(C))
        if scale == 0.0:
            raise InvalidMaterialError("zero stiffness is not admissible")
        if np.max(np.abs(C - C.T)) > SYM_TOL * scale:
            raise InvalidMaterialError("Voigt matrix is not symmetric")
        C = 0.5 * (C + C.T)
        C.setflags(write=False)
        object.__setattr__(self, "voigt", C)

    def quadratic(self, G) -> float:
        return apply_quadratic(self, G)

    def stress(self, G) -> np.ndarray:
        """The matrix LG (symmetric)."""
        return voigt_to_matrix(self.voigt @ engineering_strain(G))

    def tensor(self) -> np.ndarray:
        """Full (3,3,3,3) array with minor and major symmetries."""
        L = np.empty((3, 3, 3, 3))
        for a, (i, j) in enumerate(VOIGT_PAIRS):
            for b, (k, l) in enumerate(VOIGT_PAIRS):
                c = self.voigt[a, b]
                L[i, j, k, l] = L[j, i, k, l] = L[i, j, l, k] = L[j, i, l, k] = c
        return L

    @classmethod
    def from_tensor(cls, L) -> "StiffnessTensor":
        L = np.asarray(L, dtype=float)
        C = np.array([[L[i, j, k, l] for (k, l) in VOIGT_PAIRS] for (i, j) in VOIGT_PAIRS])
        return cls(C)

    def mandel(self) -> np.ndarray:
        """Matrix of Q in an orthonormal basis of symmetric matrices."""
        s = np.sqrt(STRAIN_WEIGHTS)
        return s[:, None] * self.voigt * s[None, :]

    def scaled(self, factor: float) -> "StiffnessTensor":
        return StiffnessTensor(factor * self.voigt)

    def allclose(self, other: "StiffnessTensor", rtol: float = 1e-12) -> bool:
        scale = max(np.max(np.abs(self.voigt)), np.max(np.abs(other.voigt)))
        return bool(np.max(np.abs(self.voigt - other.voigt)) <= rtol * scale)

    def __repr__(self):
        return f"StiffnessTensor(diag={np.round(np.diag(self.voigt), 6).tolist()})"


def apply_quadratic(L: StiffnessTensor, G) -> float:
    """Energy density Q(G) = LG : G."""
    e = engineering_strain(G)
    return float(e @ L.voigt @ e)


def isotropic_law(mu: float, lam: float = 0.0) -> StiffnessTensor:
    """Q(G) = 2 mu |sym G|^2 + lam (tr G)^2."""
    if not mu > 0:
        raise InvalidMaterialError(f"shear modulus must be positive, got {mu}")
    if lam < 0:
        raise InvalidMaterialError(f"Lame parameter must be nonnegative, got {lam}")
    C = np.zeros((6, 6))
    C[:3, :3] = lam
    C[[0, 1, 2], [0, 1, 2]] += 2.0 * mu
    C[[3, 4, 5], [3, 4, 5]] = mu
    return StiffnessTensor(C)


# Engineering compliance of beech at 14.7 % moisture, frame (R, T, L), 1/MPa.
BEECH_COMPLIANCE = 1e-3 * np.array([
    [0.592, -0.514, -0.0196, 0.0, 0.0, 0.0],
    [-0.514, 1.85, -0.0157, 0.0, 0.0, 0.0],
    [-0.0196, -0.0157, 0.0770, 0.0, 0.0, 0.0],
    [0.0, 0.0, 0.0, 1.19, 0.0, 0.0],
    [0.0, 0.0, 0.0, 0.0, 0.795, 0.0],
    [0.0, 0.0, 0.0, 0.0, 0.0, 2.25],
])


def beech_stiffness() -> StiffnessTensor:
    """Stiffness of beech (MPa) in its material frame (R, T, L)."""
    S = BEECH_COMPLIANCE
    if np.linalg.cond(S) > 1e12:
        raise InvalidMaterialError("beech compliance is numerically singular")
    C = np.linalg.inv(S)
    return StiffnessTensor(0.5 * (C + C.T))


def _check_rotation(U: np.ndarray) -> None:
    if U.shape != (3, 3):
        raise ValueError("rotation must be 3x3")
    if np.max(np.abs(U.T @ U - np.eye(3))) > 1e-12 or abs(np.linalg.det(U) - 1.0) > 1e-12:
        raise ValueError("matrix is not a rotation")


def rotate_stiffness(L: StiffnessTensor, U) -> StiffnessTensor:
    """Law of the rotated material: Q_rot(G) = Q(U^T G U)."""
    U = np.asarray(U, dtype=float)
    _check_rotation(U)
    T = np.einsum("ia,jb,kc,ld,abcd->ijkl", U, U, U, U, L.tensor(), optimize=True)
    return StiffnessTensor.from_tensor(T)


def rotation_about_e3(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def spectral_bounds(L: StiffnessTensor) -> tuple[float, float]:
    """Sharp (alpha, beta) with alpha |sym G|^2 <= Q(G) <= beta |sym G|^2."""
    ev = np.linalg.eigvalsh(L.mandel())
    alpha, beta = float(ev[0]), float(ev[-1])
    if alpha <= 0:
        raise InvalidMaterialError(f"law is not positive definite (alpha={alpha:.3e})")
    return alpha, beta


def _in_plane_basis() -> list[np.ndarray]:
    s = 1.0 / np.sqrt(2.0)
    return [iota(np.diag([1.0, 0.0])), iota(np.diag([0.0, 1.0])),
            iota(np.array([[0.0, s], [s, 0.0]]))]


def _transverse_basis() -> list[np.ndarray]:
    out = []
    for j in range(3):
        D = np.zeros((3, 3))
        D[j, 2] = 1.0
        out.append(0.5 * (D + D.T))
    return out


def is_orthotropic(L: StiffnessTensor, tol: float = 1e-10) -> bool:
    """True iff L iota(F) : sym(d x e3) = 0 for all F and d."""
    T = L.tensor()
    scale = np.max(np.abs(L.voigt))
    worst = max(abs(np.einsum("ijkl,kl,ij->", T, F, D))
                for F in _in_plane_basis() for D in _transverse_basis())
    return bool(worst <= tol * scale)


# --------------------------------------------------------------------- bases

@dataclass(frozen=True, eq=False)
class SymBasis:
    """Frobenius-orthonormal basis of symmetric 2x2 matrices."""

    G1: np.ndarray
    G2: np.ndarray
    G3: np.ndarray

    def __post_init__(self):
        mats = []
        for G in (self.G1, self.G2, self.G3):
            G = np.array(G, dtype=float)
            if G.shape != (2, 2) or abs(G[0, 1] - G[1, 0]) > SYM_TOL * max(1.0, np.abs(G).max()):
                raise ValueError("basis elements must be symmetric 2x2 matrices")
            G.setflags(write=False)
            mats.append(G)
        gram = np.array([[np.sum(a * b) for b in mats] for a in mats])
        if np.max(np.abs(gram - np.eye(3))) > 1e-12:
            raise ValueError("basis is not orthonormal")
        for name, G in zip(("G1", "G2", "G3"), mats):
            object.__setattr__(self, name, G)

    @property
    def matrices(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return (self.G1, self.G2, self.G3)

    def coefficients(self, G) -> np.ndarray:
        G = np.asarray(G, dtype=float)
        return np.array([np.sum(G * Gi) for Gi in self.matrices])

    def matrix(self, coeffs) -> np.ndarray:
        c = np.asarray(coeffs, dtype=float)
        return c[0] * self.G1 + c[1] * self.G2 + c[2] * self.G3

    @classmethod
    def canonical(cls) -> "SymBasis":
        s = 1.0 / np.sqrt(2.0)
        return cls(np.diag([1.0, 0.0]), np.diag([0.0, 1.0]), np.array([[0.0, s], [s, 0.0]]))

    @classmethod
    def rotated(cls, angle: float) -> "SymBasis":
        """Canonical basis conjugated by an in-plane rotation."""
        R = rotation_about_e3(angle)[:2, :2]
        return cls(*(R @ G @ R.T for G in cls.canonical().matrices))


CANONICAL_BASIS = SymBasis.canonical()


# ------------------------------------------------------------------- regions

def _wrap(y):
    """Map to the representative interval [-1/2, 1/2)."""
    return np.mod(np.asarray(y, dtype=float) + 0.5, 1.0) - 0.5


@dataclass(frozen=True)
class Box:
    """Axis-aligned box; y-intervals are read modulo 1, x3 in [-1/2, 1/2]."""

    y1: tuple[float, float] = (-0.5, 0.5)
    y2: tuple[float, float] = (-0.5, 0.5)
    x3: tuple[float, float] = (-0.5, 0.5)

    def __post_init__(self):
        for name in ("y1", "y2", "x3"):
            a, b = (float(t) for t in getattr(self, name))
            if not b > a:
                raise InvalidMaterialError(f"empty interval {name}=({a}, {b})")
            object.__setattr__(self, name, (a, b))
        a, b = self.x3
        if a < -0.5 - 1e-14 or b > 0.5 + 1e-14:
            raise InvalidMaterialError("x3 interval must lie within [-1/2, 1/2]")

    @staticmethod
    def _inside_periodic(y, interval):
        a, b = interval
        if b - a >= 1.0:
            return np.ones(np.shape(y), dtype=bool)
        return np.mod(np.asarray(y, dtype=float) - a, 1.0) < (b - a)

    def contains(self, y1, y2, x3):
        a, b = self.x3
        x3 = np.asarray(x3, dtype=float)
        in3 = (x3 >= a) & ((x3 < b) | ((b >= 0.5) & (x3 <= b)))
        return self._inside_periodic(y1, self.y1) & self._inside_periodic(y2, self.y2) & in3

    def breakpoints(self, axis: int) -> list[float]:
        a, b = (self.y1, self.y2, self.x3)[axis]
        if axis < 2:
            if b - a >= 1.0:
                return []
            return [float(_wrap(a)), float(_wrap(b))]
        return [t for t in (a, b) if -0.5 < t < 0.5]


def _merge_breakpoints(values: Iterable[float], tol: float = 1e-12) -> np.ndarray:
    vals = np.sort(np.asarray(list(values), dtype=float))
    out: list[float] = []
    for v in vals:
        if not out or v - out[-1] > tol:
            out.append(float(v))
    return np.array(out)


class _Piecewise:
    """Shared machinery of box-partitioned fields."""

    regions: tuple

    def breakpoints(self, axis: int) -> np.ndarray:
        pts = []
        for box, _ in self.regions:
            pts.extend(box.breakpoints(axis))
        return _merge_breakpoints(pts)

    def _sub_box_centres(self):
        axes = []
        for axis in range(3):
            bp = self.breakpoints(axis)
            if axis < 2:
                lo = -0.5
                edges = np.concatenate(([lo], bp[bp > lo], [0.5]))
            else:
                edges = np.concatenate(([-0.5], bp, [0.5]))
            edges = _merge_breakpoints(edges)
            axes.append(0.5 * (edges[:-1] + edges[1:]))
        return np.meshgrid(*axes, indexing="ij")

    def locate(self, y1, y2, x3) -> np.ndarray:
        """Index of the first region containing each point (-1 if none)."""
        y1, y2, x3 = np.broadcast_arrays(*(np.asarray(t, dtype=float) for t in (y1, y2, x3)))
        idx = np.full(y1.shape, -1, dtype=int)
        for r in range(len(self.regions) - 1, -1, -1):
            idx[self.regions[r][0].contains(y1, y2, x3)] = r
        return idx

    def _validate_partition(self, same) -> None:
        c1, c2, c3 = self._sub_box_centres()
        hits = np.zeros(c1.shape, dtype=int)
        first = np.full(c1.shape, -1, dtype=int)
        for r, (box, value) in enumerate(self.regions):
            inside = box.contains(c1, c2, c3)
            clash = inside & (first >= 0)
            for i in np.unique(first[clash]):
                if not same(self.regions[i][1], value):
                    raise InvalidMaterialError(f"regions {i} and {r} overlap with different values")
            first[inside & (first < 0)] = r
            hits += inside
        if np.any(hits == 0):
            k = np.argwhere(hits == 0)[0]
            p = (c1[tuple(k)], c2[tuple(k)], c3[tuple(k)])
            raise InvalidMaterialError(f"regions do not cover the cell, gap near {p}")


# ------------------------------------------------------------ material field

@dataclass(frozen=True, eq=False)
class MaterialField(_Piecewise):
    """Piecewise-constant elastic law on the cell, one tensor per box."""

    regions: tuple[tuple[Box, StiffnessTensor], ...]
    name: str = "custom"

    def __post_init__(self):
        regions = tuple((b, t) for b, t in self.regions)
        if not regions:
            raise InvalidMaterialError("material field needs at least one region")
        for _, t in regions:
            if not isinstance(t, StiffnessTensor):
                raise InvalidMaterialError("region values must be StiffnessTensor instances")
            spectral_bounds(t)
        object.__setattr__(self, "regions", regions)
        self._validate_partition(lambda a, b: a.allclose(b))

    def tensor_at(self, y1: float, y2: float = 0.0, x3: float = 0.0) -> StiffnessTensor:
        r = int(self.locate(y1, y2, x3))
        if r < 0:
            raise InvalidMaterialError("point outside every region")
        return self.regions[r][1]

    @property
    def tensors(self) -> list[StiffnessTensor]:
        return [t for _, t in self.regions]

    def bounds(self) -> tuple[float, float]:
        """Global (alpha, beta) over all regions."""
        b = np.array([spectral_bounds(t) for t in self.tensors])
        return float(b[:, 0].min()), float(b[:, 1].max())

    def is_orthotropic(self, tol: float = 1e-10) -> bool:
        return all(is_orthotropic(t, tol) for t in self.tensors)


def homogeneous(L: StiffnessTensor, name: str = "homogeneous") -> MaterialField:
    return MaterialField(((Box(), L),), name=name)


def two_phase_laminate(theta: float = 0.5, mu1: float = 1.0, mu2: float = 2.0) -> MaterialField:
    """mu1 on |y1| < theta/2, mu2 elsewhere, both with lambda = 0."""
    if not 0.0 < theta < 1.0:
        raise InvalidMaterialError("theta must lie in (0, 1)")
    inner = Box(y1=(-theta / 2, theta / 2))
    outer = Box(y1=(theta / 2, 1.0 - theta / 2))
    return MaterialField(((inner, isotropic_law(mu1, 0.0)), (outer, isotropic_law(mu2, 0.0))),
                         name="laminate")


def wood_frames() -> tuple[np.ndarray, np.ndarray]:
    """Material frames (columns e_R, e_T, e_L) of the bottom and top wood layers."""
    e1, e2, e3 = np.eye(3)
    R = rotation_about_e3(np.pi / 4)
    bottom = np.column_stack([e2, e3, e1])
    top = np.column_stack([R @ e2, e3, R @ e1])
    return bottom, top


def wood_layered(stripe: tuple[float, float] = (-0.25, 0.25)) -> MaterialField:
    """Beech bilayer on the y1 stripe, isotropic matrix (mu=1, lambda=0) elsewhere.

    The default stripe is |y1| <= 1/4 (half the cell).  ``WOOD_NARROW_STRIPE``
    gives the quarter-width variant.
    """
    a, b = (float(v) for v in stripe)
    if not 0.0 < b - a < 1.0:
        raise InvalidMaterialError("wood stripe must have width in (0, 1)")
    beech = beech_stiffness()
    bottom, top = wood_frames()
    iso = isotropic_law(1.0, 0.0)
    return MaterialField((
        (Box(y1=(b, a + 1.0)), iso),
        (Box(y1=(a, b), x3=(-0.5, 0.0)), rotate_stiffness(beech, bottom)),
        (Box(y1=(a, b), x3=(0.0, 0.5)), rotate_stiffness(beech, top)),
    ), name="wood" if (a, b) == (-0.25, 0.25) else "wood-narrow")


WOOD_NARROW_STRIPE = (0.0, 0.25)


def _law_from_spec(spec: Mapping) -> StiffnessTensor:
    kind = spec.get("type", "isotropic")
    if kind == "isotropic":
        L = isotropic_law(float(spec["mu"]), float(spec.get("lambda", 0.0)))
    elif kind == "voigt":
        L = StiffnessTensor(np.asarray(spec["matrix"], dtype=float))
    elif kind == "beech":
        L = beech_stiffness()
    else:
        raise InvalidMaterialError(f"unknown law type {kind!r}")
    if "frame" in spec:
        L = rotate_stiffness(L, np.asarray(spec["frame"], dtype=float))
    return L


def _box_from_spec(spec: Mapping | None) -> Box:
    spec = spec or {}
    return Box(**{k: tuple(spec[k]) for k in ("y1", "y2", "x3") if k in spec})


def build_material_field(spec) -> MaterialField:
    """Material field from a preset name or a declarative region list.

    Accepted forms: ``"laminate"``, ``"wood"``, ``"wood-narrow"``, ``"iso"``, a mapping with
    ``preset`` (plus preset parameters), or a mapping with ``regions``, each
    region being ``{"box": {...}, "law": {...}}``.
    """
    if isinstance(spec, MaterialField):
        return spec
    if isinstance(spec, str):
        spec = {"preset": spec}
    if not isinstance(spec, Mapping):
        raise InvalidMaterialError("material spec must be a name or a mapping")
    preset = spec.get("preset")
    if preset == "laminate":
        return two_phase_laminate(float(spec.get("theta", 0.5)), float(spec.get("mu1", 1.0)),
                                  float(spec.get("mu2", 2.0)))
    if preset == "wood":
        return wood_layered(tuple(spec.get("stripe", (-0.25, 0.25))))
    if preset == "wood-narrow":
        return wood_layered(WOOD_NARROW_STRIPE)
    if preset == "iso":
        return homogeneous(isotropic_law(float(spec.get("mu", 1.0)), float(spec.get("lambda", 0.0))),
                           name="iso")
    if preset is not None:
        raise InvalidMaterialError(f"unknown material preset {preset!r}")
    if "regions" not in spec:
        raise InvalidMaterialError("material spec needs 'preset' or 'regions'")
    regions = tuple((_box_from_spec(r.get("box")), _law_from_spec(r["law"])) for r in spec["regions"])
    return MaterialField(regions, name=str(spec.get("name", "custom")))


# ------------------------------------------------------------ prestrain field

@dataclass(frozen=True, eq=False)
class PrestrainField(_Piecewise):
    """Symmetric prestrain, either piecewise constant on boxes or sampled.

    A sampled field stores values at the quadrature points of one grid
    (``samples`` of shape (P1, P2, P3, 3, 3)) together with that grid's nodes.
    """

    regions: tuple[tuple[Box, np.ndarray], ...] = ()
    samples: np.ndarray | None = None
    sample_nodes: tuple[np.ndarray, np.ndarray, np.ndarray] | None = None
    name: str = "custom"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.samples is not None:
            S = np.array(self.samples, dtype=float)
            if S.ndim != 5 or S.shape[-2:] != (3, 3) or self.sample_nodes is None:
                raise ValueError("sampled prestrain needs (P1,P2,P3,3,3) values and their grid nodes")
            _check_symmetric(S, 1e-12)
            S.setflags(write=False)
            object.__setattr__(self, "samples", S)
            object.__setattr__(self, "regions", ())
            return
        regions = []
        for box, B in self.regions:
            B = np.array(B, dtype=float)
            if B.shape != (3, 3):
                raise InvalidMaterialError("prestrain blocks must be 3x3")
            try:
                _check_symmetric(B)
            except ValueError:
                raise InvalidMaterialError("prestrain blocks must be symmetric") from None
            B = 0.5 * (B + B.T)
            B.setflags(write=False)
            regions.append((box, B))
        if not regions:
            regions = [(Box(), np.zeros((3, 3)))]
        object.__setattr__(self, "regions", tuple(regions))
        self._validate_partition(lambda a, b: np.allclose(a, b, rtol=0, atol=1e-14))

    @property
    def is_sampled(self) -> bool:
        return self.samples is not None

    def breakpoints(self, axis: int) -> np.ndarray:
        if self.is_sampled:
            return np.array([])
        return super().breakpoints(axis)

    def value_at(self, y1: float, y2: float = 0.0, x3: float = 0.0) -> np.ndarray:
        if self.is_sampled:
            raise ValueError("point queries are not available for sampled prestrain")
        r = int(self.locate(y1, y2, x3))
        if r < 0:
            raise InvalidMaterialError("point outside every region")
        return self.regions[r][1].copy()

    def is_zero(self) -> bool:
        if self.is_sampled:
            return not np.any(self.samples)
        return all(not np.any(B) for _, B in self.regions)


def zero_prestrain() -> PrestrainField:
    return PrestrainField(((Box(), np.zeros((3, 3))),), name="zero")


def hydrostatic_bottom() -> PrestrainField:
    """B = Id in the bottom half (x3 < 0) and 0 above."""
    return PrestrainField(((Box(x3=(-0.5, 0.0)), np.eye(3)), (Box(x3=(0.0, 0.5)), np.zeros((3, 3)))),
                          name="hydrostatic-bottom")


def layered_prestrain(layers: Sequence[tuple[tuple[float, float], np.ndarray]]) -> PrestrainField:
    """Piecewise-constant-in-x3 prestrain from (x3 interval, symmetric matrix) pairs."""
    return PrestrainField(tuple((Box(x3=tuple(iv)), np.asarray(B, dtype=float)) for iv, B in layers),
                          name="layered")


def build_prestrain_field(spec, grid=None) -> PrestrainField:
    """Prestrain from a declarative spec.

    ``{"type": "zero"}``, ``{"type": "hydrostatic-bottom"}``,
    ``{"type": "layered", "layers": [{"x3": [a, b], "B": 3x3}, ...]}``,
    ``{"type": "regions", "regions": [{"box": {...}, "B": 3x3}, ...]}`` or
    ``{"type": "from-corrector", "material": <material spec>}``.  The last
    form solves the infinite-regime corrector of the third basis load on
    ``grid`` (for the grid's own material unless ``material`` is given) and
    needs that grid.
    """
    if isinstance(spec, PrestrainField):
        return spec
    if spec is None:
        return zero_prestrain()
    if isinstance(spec, str):
        spec = {"type": spec}
    kind = spec.get("type")
    if kind == "zero":
        return zero_prestrain()
    if kind == "hydrostatic-bottom":
        return hydrostatic_bottom()
    if kind == "layered":
        return layered_prestrain([(tuple(l["x3"]), np.asarray(l["B"], dtype=float)) for l in spec["layers"]])
    if kind == "regions":
        return PrestrainField(tuple((_box_from_spec(r.get("box")), np.asarray(r["B"], dtype=float))
                                    for r in spec["regions"]), name="regions")
    if kind == "from-corrector":
        if grid is None:
            raise ValueError("from-corrector prestrain needs a grid")
        from .corrector import prestrain_from_corrector
        source = build_material_field(spec["material"]) if "material" in spec else None
        return prestrain_from_corrector(grid, source, basis_index=int(spec.get("basis_index", 2)))
    raise InvalidMaterialError(f"unknown prestrain type {kind!r}")
