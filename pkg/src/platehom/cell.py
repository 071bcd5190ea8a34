"""Tensor-product discretization of the cell (-1/2, 1/2) x T^2.

The grid is periodic in (y1, y2), free in x3 and aligned with every material
and prestrain discontinuity.  Quadrature is the tensor product of 2-point Gauss
rules per element; all point arrays are ordered (p1, p2, p3) in C order.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .material import (
    IN_PLANE_SLOTS, TRANSVERSE_SLOTS, MaterialField, PrestrainField,
    engineering_strain, engineering_to_matrix,
)

GAUSS_LOCAL = np.array([0.5 - 0.5 / np.sqrt(3.0), 0.5 + 0.5 / np.sqrt(3.0)])


def _axis_nodes(n: int, breakpoints: np.ndarray) -> np.ndarray:
    """Uniform nodes on [-1/2, 1/2] merged with breakpoints (no slivers)."""
    h = 1.0 / n
    uniform = -0.5 + h * np.arange(n + 1)
    bp = np.sort([b for b in breakpoints if -0.5 + 1e-12 < b < 0.5 - 1e-12])
    if bp.size:
        bp = bp[np.concatenate(([True], np.diff(bp) > 1e-12))]
    keep = [x for x in uniform[1:-1] if bp.size == 0 or np.min(np.abs(bp - x)) > 0.25 * h]
    nodes = np.sort(np.concatenate(([-0.5, 0.5], keep, bp)))
    return nodes


def _gauss_1d(nodes: np.ndarray):
    h = np.diff(nodes)
    elem = np.repeat(np.arange(h.size), 2)
    local = np.tile(GAUSS_LOCAL, h.size)
    points = nodes[elem] + h[elem] * local
    weights = 0.5 * h[elem]
    return points, weights, elem, local


def _axis_operators(nodes: np.ndarray, periodic: bool):
    """Sparse value and derivative matrices (points x nodal dofs) of 1D Q1."""
    _, _, elem, local = _gauss_1d(nodes)
    h = np.diff(nodes)
    ne = h.size
    ndof = ne if periodic else ne + 1
    rows = np.repeat(np.arange(elem.size), 2)
    left = elem
    right = (elem + 1) % ndof if periodic else elem + 1
    cols = np.column_stack([left, right]).ravel()
    val = np.column_stack([1.0 - local, local]).ravel()
    der = np.column_stack([-1.0 / h[elem], 1.0 / h[elem]]).ravel()
    shape = (elem.size, ndof)
    V = sp.csr_matrix((val, (rows, cols)), shape=shape)
    D = sp.csr_matrix((der, (rows, cols)), shape=shape)
    return V, D


def _apply_axis(A: sp.spmatrix, arr: np.ndarray, axis: int) -> np.ndarray:
    moved = np.moveaxis(arr, axis, 0)
    out = A @ moved.reshape(moved.shape[0], -1)
    return np.moveaxis(out.reshape((A.shape[0],) + moved.shape[1:]), 0, axis)


@dataclass(frozen=True, eq=False)
class CellGrid:
    """Aligned tensor grid on the cell with an element -> region map."""

    y1: np.ndarray
    y2: np.ndarray
    x3: np.ndarray
    field: MaterialField
    region: np.ndarray

    @property
    def n1(self) -> int:
        return self.y1.size - 1

    @property
    def n2(self) -> int:
        return self.y2.size - 1

    @property
    def n3(self) -> int:
        return self.x3.size - 1

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.n1, self.n2, self.n3)

    @property
    def nodal_shape(self) -> tuple[int, int, int]:
        """Shape of a y-periodic nodal scalar field (boundary y-nodes aliased)."""
        return (self.n1, self.n2, self.n3 + 1)

    @property
    def quad_shape(self) -> tuple[int, int, int]:
        return (2 * self.n1, 2 * self.n2, 2 * self.n3)

    @property
    def n_quad(self) -> int:
        return int(np.prod(self.quad_shape))

    def periodic_dof_map(self, axis: int) -> np.ndarray:
        """Representative index of every geometric node along a y-axis."""
        n = (self.n1, self.n2)[axis]
        m = np.arange(n + 1)
        m[-1] = 0
        return m

    @cached_property
    def gauss(self):
        """Per-axis (points, weights, element index, local coordinate)."""
        return tuple(_gauss_1d(nodes) for nodes in (self.y1, self.y2, self.x3))

    @cached_property
    def operators(self):
        """Per-axis sparse (value, derivative) matrices."""
        return (_axis_operators(self.y1, True), _axis_operators(self.y2, True),
                _axis_operators(self.x3, False))

    @cached_property
    def points(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        q1, q2, q3 = (g[0] for g in self.gauss)
        return tuple(np.meshgrid(q1, q2, q3, indexing="ij"))

    @cached_property
    def weights(self) -> np.ndarray:
        """Flat quadrature weights, summing to 1."""
        w1, w2, w3 = (g[1] for g in self.gauss)
        return (w1[:, None, None] * w2[None, :, None] * w3[None, None, :]).ravel()

    @cached_property
    def quad_region(self) -> np.ndarray:
        """Flat region index of every quadrature point."""
        e1, e2, e3 = (g[2] for g in self.gauss)
        return self.region[e1[:, None, None], e2[None, :, None], e3[None, None, :]].ravel()

    @cached_property
    def region_masks(self) -> list[np.ndarray]:
        return [np.flatnonzero(self.quad_region == r) for r in range(len(self.field.regions))]

    @cached_property
    def region_voigt(self) -> np.ndarray:
        return np.array([t.voigt for t in self.field.tensors])

    @cached_property
    def reduced_laws(self):
        """Per-region plane-stress reduction: (Cbar on in-plane slots, T) with e_o = T e_p."""
        ip, tr = list(IN_PLANE_SLOTS), list(TRANSVERSE_SLOTS)
        out = []
        for C in self.region_voigt:
            Coo = C[np.ix_(tr, tr)]
            Cop = C[np.ix_(tr, ip)]
            T = -np.linalg.solve(Coo, Cop)
            Cbar = C[np.ix_(ip, ip)] + C[np.ix_(ip, tr)] @ T
            Cbar = 0.5 * (Cbar + Cbar.T)
            if np.linalg.eigvalsh(Cbar)[0] <= 0:
                raise AssertionError("reduced law is not positive definite")
            out.append((Cbar, T))
        return out

    # -------------------------------------------------------------- actions

    def stress(self, e: np.ndarray) -> np.ndarray:
        """C e at every point for flat engineering strains e of shape (Nq, 6)."""
        out = np.empty_like(e)
        for C, idx in zip(self.region_voigt, self.region_masks):
            out[idx] = e[idx] @ C
        return out

    def reduced_stress(self, e: np.ndarray) -> np.ndarray:
        """Cbar e for flat in-plane engineering strains of shape (Nq, 3)."""
        out = np.empty_like(e)
        for (Cbar, _), idx in zip(self.reduced_laws, self.region_masks):
            out[idx] = e[idx] @ Cbar
        return out

    def inner(self, e1: np.ndarray, e2: np.ndarray) -> float:
        """Energy inner product of two flat engineering strain arrays."""
        return float(np.sum(self.weights[:, None] * self.stress(e1) * e2))

    def energy(self, e: np.ndarray) -> float:
        return self.inner(e, e)

    def with_field(self, field: MaterialField) -> "CellGrid":
        """Same nodes, different material; the grid must already be aligned."""
        for axis, nodes in enumerate((self.y1, self.y2, self.x3)):
            for b in field.breakpoints(axis):
                if -0.5 < b < 0.5 and np.min(np.abs(nodes - b)) > 1e-12:
                    raise ValueError(f"grid is not aligned with breakpoint {b} on axis {axis}")
        return CellGrid(self.y1, self.y2, self.x3, field, _region_map(self.y1, self.y2, self.x3, field))

    def same_nodes(self, other: "CellGrid") -> bool:
        return all(a.shape == b.shape and np.allclose(a, b, rtol=0, atol=1e-14)
                   for a, b in zip((self.y1, self.y2, self.x3), (other.y1, other.y2, other.x3)))


def _region_map(y1, y2, x3, field: MaterialField) -> np.ndarray:
    c1, c2, c3 = (0.5 * (t[:-1] + t[1:]) for t in (y1, y2, x3))
    C1, C2, C3 = np.meshgrid(c1, c2, c3, indexing="ij")
    region = field.locate(C1, C2, C3)
    if np.any(region < 0):
        raise ValueError("material field does not cover every element")
    region.setflags(write=False)
    return region


def build_grid(n1: int, n2: int, n3: int, field: MaterialField,
               prestrain: PrestrainField | None = None) -> CellGrid:
    """Aligned grid with roughly n_a uniform elements per axis plus breakpoints."""
    for n in (n1, n2, n3):
        if int(n) != n or n < 2:
            raise ValueError("element counts must be integers >= 2")
    nodes = []
    for axis, n in enumerate((n1, n2, n3)):
        bp = list(field.breakpoints(axis))
        if prestrain is not None:
            bp += list(prestrain.breakpoints(axis))
        nodes.append(_axis_nodes(int(n), np.asarray(bp)))
    y1, y2, x3 = nodes
    for a in nodes:
        a.setflags(write=False)
    return CellGrid(y1, y2, x3, field, _region_map(y1, y2, x3, field))


# ------------------------------------------------------------- strain field

@dataclass(frozen=True, eq=False)
class StrainField:
    """Symmetric 3x3 matrices at the quadrature points of a grid."""

    grid: CellGrid
    values: np.ndarray

    def __post_init__(self):
        V = np.asarray(self.values, dtype=float)
        if V.shape != self.grid.quad_shape + (3, 3):
            raise ValueError(f"strain values must have shape {self.grid.quad_shape + (3, 3)}")
        scale = max(1.0, float(np.max(np.abs(V))) if V.size else 1.0)
        if np.max(np.abs(V - np.swapaxes(V, -1, -2)), initial=0.0) > 1e-12 * scale:
            raise ValueError("strain field is not symmetric")
        object.__setattr__(self, "values", V)

    @classmethod
    def from_engineering(cls, grid: CellGrid, e: np.ndarray) -> "StrainField":
        return cls(grid, engineering_to_matrix(np.asarray(e).reshape(grid.quad_shape + (6,))))

    @classmethod
    def constant(cls, grid: CellGrid, G) -> "StrainField":
        G = np.asarray(G, dtype=float)
        return cls(grid, np.broadcast_to(G, grid.quad_shape + (3, 3)).copy())

    @classmethod
    def zeros(cls, grid: CellGrid) -> "StrainField":
        return cls(grid, np.zeros(grid.quad_shape + (3, 3)))

    @classmethod
    def from_function(cls, grid: CellGrid, fn) -> "StrainField":
        """Sample fn(y1, y2, x3) -> (..., 3, 3) at the quadrature points."""
        y1, y2, x3 = grid.points
        return cls(grid, np.asarray(fn(y1, y2, x3), dtype=float))

    @classmethod
    def bending(cls, grid: CellGrid, G) -> "StrainField":
        """The field iota(x3 G) for a 2x2 matrix G."""
        x3 = grid.points[2]
        V = np.zeros(grid.quad_shape + (3, 3))
        V[..., :2, :2] = x3[..., None, None] * np.asarray(G, dtype=float)
        return cls(grid, V)

    def engineering(self) -> np.ndarray:
        """Flat (Nq, 6) engineering Voigt array."""
        return engineering_strain(self.values).reshape(-1, 6)

    def _check(self, other: "StrainField") -> None:
        if other.grid is not self.grid and not self.grid.same_nodes(other.grid):
            raise ValueError("strain fields live on different grids")

    def __add__(self, other: "StrainField") -> "StrainField":
        self._check(other)
        return StrainField(self.grid, self.values + other.values)

    def __sub__(self, other: "StrainField") -> "StrainField":
        self._check(other)
        return StrainField(self.grid, self.values - other.values)

    def __mul__(self, s: float) -> "StrainField":
        return StrainField(self.grid, float(s) * self.values)

    __rmul__ = __mul__

    def __neg__(self) -> "StrainField":
        return StrainField(self.grid, -self.values)

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.values)))


def scaled_strain(grid: CellGrid, phi: np.ndarray, gamma: float) -> StrainField:
    """sym(d1 phi | d2 phi | (1/gamma) d3 phi) at the quadrature points.

    ``phi`` is a y-periodic nodal field of shape (n1, n2, n3 + 1, 3).
    """
    if not gamma > 0:
        raise ValueError("scaled strain needs gamma > 0; use the regime solvers otherwise")
    phi = np.asarray(phi, dtype=float)
    if phi.shape != grid.nodal_shape + (3,):
        raise ValueError(f"nodal field must have shape {grid.nodal_shape + (3,)}")
    (V1, D1), (V2, D2), (V3, D3) = grid.operators
    grad = np.empty(grid.quad_shape + (3, 3))
    ops = ((D1, V2, V3), (V1, D2, V3), (V1, V2, D3))
    for j, (A1, A2, A3) in enumerate(ops):
        t = _apply_axis(A1, phi, 0)
        t = _apply_axis(A2, t, 1)
        grad[..., :, j] = _apply_axis(A3, t, 2)
    grad[..., :, 2] /= gamma
    return StrainField(grid, 0.5 * (grad + np.swapaxes(grad, -1, -2)))


def interpolate_nodal(grid: CellGrid, phi: np.ndarray) -> np.ndarray:
    """Values of a nodal field (n1, n2, n3+1, ...) at the quadrature points."""
    (V1, _), (V2, _), (V3, _) = grid.operators
    t = _apply_axis(V1, np.asarray(phi, dtype=float), 0)
    t = _apply_axis(V2, t, 1)
    return _apply_axis(V3, t, 2)


def integrate_energy(grid: CellGrid, H: StrainField, field: MaterialField | None = None) -> float:
    """Quadrature value of the integral of Q(x3, y, H) over the cell."""
    if field is not None and field is not grid.field:
        grid = grid.with_field(field)
    if H.grid is not grid and not H.grid.same_nodes(grid):
        raise ValueError("strain field does not live on this grid")
    return grid.energy(H.engineering())


def inner_product(grid: CellGrid, H1: StrainField, H2: StrainField) -> float:
    return grid.inner(H1.engineering(), H2.engineering())


def sample_prestrain(grid: CellGrid, B: PrestrainField) -> StrainField:
    """Prestrain values at the quadrature points of an aligned grid."""
    if B.is_sampled:
        nodes = B.sample_nodes
        if not all(a.shape == b.shape and np.allclose(a, b, rtol=0, atol=1e-14)
                   for a, b in zip(nodes, (grid.y1, grid.y2, grid.x3))):
            raise ValueError("sampled prestrain belongs to a different grid")
        return StrainField(grid, B.samples)
    for axis, nodes in enumerate((grid.y1, grid.y2, grid.x3)):
        for b in B.breakpoints(axis):
            if -0.5 < b < 0.5 and np.min(np.abs(nodes - b)) > 1e-12:
                raise ValueError(f"grid is not aligned with prestrain breakpoint {b}")
    c1, c2, c3 = (0.5 * (t[:-1] + t[1:]) for t in (grid.y1, grid.y2, grid.x3))
    idx = B.locate(*np.meshgrid(c1, c2, c3, indexing="ij"))
    if np.any(idx < 0):
        raise ValueError("prestrain does not cover every element")
    mats = np.array([Bm for _, Bm in B.regions])
    e1, e2, e3 = (g[2] for g in grid.gauss)
    return StrainField(grid, mats[idx[e1[:, None, None], e2[None, :, None], e3[None, None, :]]])
