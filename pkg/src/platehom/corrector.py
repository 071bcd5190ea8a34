"""Cell corrector problems for gamma = 0, 0 < gamma < inf and gamma = inf.

Each regime is a discrete relaxation space given by a sparse strain operator
on local unknowns (nodal fields, slice vectors, Fourier coefficients) plus a
few global strain modes (the constant in-plane matrices M, and optionally the
bending fields iota(x3 G)).  A load H is relaxed by solving the local problem
for H and for each mode with one factorization, then condensing the modes
through a small dense Schur system.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .cell import CellGrid, StrainField, _apply_axis, sample_prestrain
from .material import (
    CANONICAL_BASIS, IN_PLANE_SLOTS, TRANSVERSE_SLOTS, MaterialField, PrestrainField,
    engineering_strain, iota,
)

DEFAULT_TOL = 1e-12
DEFAULT_MAXITER = 100_000
MAX_FOURIER_MODES = 16


class SolverError(RuntimeError):
    """Linear solver failure; ``report`` carries the diagnostics."""

    def __init__(self, message: str, report: dict | None = None):
        super().__init__(message)
        self.report = report or {}


# -------------------------------------------------------------------- regime

@dataclass(frozen=True)
class GammaRegime:
    kind: str
    gamma: float | None = None

    def __post_init__(self):
        if self.kind not in ("zero", "finite", "infinity"):
            raise ValueError(f"unknown regime {self.kind!r}")
        if self.kind == "finite":
            g = float(self.gamma) if self.gamma is not None else float("nan")
            if not (0.0 < g < math.inf):
                raise ValueError("finite regime needs 0 < gamma < inf")
            object.__setattr__(self, "gamma", g)
        elif self.gamma is not None:
            raise ValueError(f"regime {self.kind} takes no gamma")

    @classmethod
    def zero(cls) -> "GammaRegime":
        return cls("zero")

    @classmethod
    def finite(cls, gamma: float) -> "GammaRegime":
        return cls("finite", gamma)

    @classmethod
    def infinity(cls) -> "GammaRegime":
        return cls("infinity")

    @classmethod
    def from_value(cls, value) -> "GammaRegime":
        """Accepts a GammaRegime, a number (0 and inf map to the limit regimes) or a name."""
        if isinstance(value, GammaRegime):
            return value
        if isinstance(value, str):
            key = value.strip().lower()
            if key in ("0", "zero"):
                return cls.zero()
            if key in ("inf", "infinity", "+inf"):
                return cls.infinity()
            value = float(key)
        value = float(value)
        if value == 0.0:
            return cls.zero()
        if math.isinf(value) and value > 0:
            return cls.infinity()
        return cls.finite(value)

    @property
    def value(self) -> float:
        return {"zero": 0.0, "infinity": math.inf}.get(self.kind, self.gamma)

    @property
    def label(self) -> str:
        return {"zero": "0", "infinity": "inf"}.get(self.kind, repr(self.gamma))


# ------------------------------------------------------------------ helpers

def _kron3(A, B, C):
    return sp.kron(sp.kron(A, B, format="csr"), C, format="csr")


def _weighted_block_matrix(grid: CellGrid, laws: np.ndarray, region: np.ndarray, w: np.ndarray):
    """Sparse slot-major matrix with diagonal blocks w * C_ab(point)."""
    k = laws.shape[1]
    rows = []
    for a in range(k):
        row = []
        for b in range(k):
            vals = laws[region, a, b] * w
            row.append(sp.diags(vals, format="csr") if np.any(vals) else None)
        rows.append(row)
    return sp.bmat(rows, format="csr")


def fourier_modes(n1: int, n2: int) -> np.ndarray:
    """Real trigonometric modes (k1, k2, kind) with |k_a| <= N_a, constant excluded."""
    out = []
    for k1 in range(0, n1 + 1):
        for k2 in range(-n2, n2 + 1):
            if k1 > 0 or k2 > 0:
                out.append((k1, k2, 0))
                out.append((k1, k2, 1))
    return np.array(out, dtype=int).reshape(-1, 3)


def default_fourier_cutoff(grid: CellGrid) -> tuple[int, int]:
    """Modes per axis: at most 16 and strictly below the element count (no aliasing)."""
    return (min(MAX_FOURIER_MODES, grid.n1 - 1), min(MAX_FOURIER_MODES, grid.n2 - 1))


def _chunks(m: int, size: int = 32):
    """Column slices that bound the dense temporaries of the zeta blocks."""
    return [slice(i, min(i + size, m)) for i in range(0, m, size)]


def _fourier_hessian(modes: np.ndarray, y1: np.ndarray, y2: np.ndarray) -> np.ndarray:
    """Engineering in-plane Hessians (zeta_11, zeta_22, 2 zeta_12) of the scaled modes.

    Returns shape (3, Ny, m).  Mode functions are cos/sin(2 pi k.y) / (4 pi^2 |k|^2).
    """
    m = len(modes)
    out = np.empty((3, len(y1), m))
    for sl in _chunks(m):
        k1 = modes[sl, 0].astype(float)
        k2 = modes[sl, 1].astype(float)
        kk = k1 ** 2 + k2 ** 2
        arg = 2.0 * np.pi * (np.outer(y1, k1) + np.outer(y2, k2))
        f = np.where(modes[sl, 2] == 0, np.cos(arg), np.sin(arg))
        out[0, :, sl] = -(k1 * k1 / kk) * f
        out[1, :, sl] = -(k2 * k2 / kk) * f
        out[2, :, sl] = -2.0 * (k1 * k2 / kk) * f
    return out


def fourier_values(modes: np.ndarray, coeffs: np.ndarray, y1, y2) -> np.ndarray:
    """Point values of zeta = sum c_m f_m."""
    k1 = modes[:, 0].astype(float)
    k2 = modes[:, 1].astype(float)
    kk = 4.0 * np.pi ** 2 * (k1 ** 2 + k2 ** 2)
    y1 = np.asarray(y1, dtype=float)
    arg = 2.0 * np.pi * (np.multiply.outer(y1, k1) + np.multiply.outer(np.asarray(y2, float), k2))
    f = np.where(modes[:, 2] == 0, np.cos(arg), np.sin(arg)) / kk
    return f @ coeffs


# ----------------------------------------------------------- local solvers

class _DirectSolver:
    """Sparse LU on the system with one DOF per kernel vector pinned."""

    method = "direct"

    def __init__(self, K: sp.csr_matrix, pinned: np.ndarray):
        n = K.shape[0]
        self.free = np.setdiff1d(np.arange(n), pinned)
        Kf = K[self.free][:, self.free].tocsc()
        try:
            self.lu = spla.splu(Kf, permc_spec="COLAMD")
        except RuntimeError as exc:
            raise SolverError(f"sparse factorization failed: {exc}") from exc
        self.n = n

    def solve(self, R: np.ndarray):
        U = np.zeros_like(R)
        U[self.free] = self.lu.solve(np.ascontiguousarray(R[self.free]))
        return U, np.zeros(R.shape[1], dtype=int)


class _DeflatedPCG:
    """Block-Jacobi PCG with the kernel projected out of the Krylov space."""

    method = "pcg"

    def __init__(self, K: sp.csr_matrix, kernel: sp.csr_matrix, blocks: np.ndarray,
                 tol: float, maxiter: int):
        self.K = K
        self.Z = kernel.tocsc()
        self.ZtZ = (self.Z.T @ self.Z).diagonal()
        self.tol, self.maxiter = tol, maxiter
        self.blocks = blocks
        nb = blocks.shape[0]
        Kb = np.empty((nb, 3, 3))
        for a in range(3):
            for b in range(3):
                Kb[:, a, b] = np.asarray(K[blocks[:, a], blocks[:, b]]).ravel()
        self.Kb_inv = np.linalg.inv(Kb)

    def _project(self, x):
        return x - self.Z @ ((self.Z.T @ x) / self.ZtZ)

    def _precondition(self, r):
        z = np.zeros_like(r)
        z[self.blocks] = np.einsum("nab,nb->na", self.Kb_inv, r[self.blocks])
        return self._project(z)

    def solve(self, R: np.ndarray):
        U = np.zeros_like(R)
        its = np.zeros(R.shape[1], dtype=int)
        for j in range(R.shape[1]):
            b = self._project(R[:, j])
            bn = np.linalg.norm(b)
            if bn == 0.0:
                continue
            x = np.zeros_like(b)
            r = b.copy()
            z = self._precondition(r)
            p = z.copy()
            rz = r @ z
            for it in range(1, self.maxiter + 1):
                Kp = self.K @ p
                alpha = rz / (p @ Kp)
                x += alpha * p
                r -= alpha * Kp
                if np.linalg.norm(r) <= self.tol * bn:
                    break
                z = self._precondition(r)
                rz_new = r @ z
                p = z + (rz_new / rz) * p
                rz = rz_new
            else:
                raise SolverError("PCG did not converge",
                                  {"iterations": it, "residual": float(np.linalg.norm(r) / bn)})
            U[:, j] = self._project(x)
            its[j] = it
        return U, its


# ----------------------------------------------------------- discrete spaces

class _SparseSpace:
    """Common code of the finite and infinite regimes (full 6-slot strains)."""

    slots = 6

    def __init__(self, grid: CellGrid):
        self.grid = grid
        self._solver = None

    def represent(self, e: np.ndarray) -> np.ndarray:
        return e

    @property
    def n_local(self) -> int:
        return self.B.shape[1]

    def metric(self, a: np.ndarray, b: np.ndarray) -> float:
        return self.grid.inner(a, b)

    def rhs(self, fields: Sequence[np.ndarray]) -> np.ndarray:
        w = self.grid.weights[:, None]
        cols = [(w * self.grid.stress(f)).T.ravel() for f in fields]
        return self.B.T @ np.column_stack(cols)

    def rhs_scale(self, fields: Sequence[np.ndarray]) -> np.ndarray:
        """Inf-norm of the right-hand sides assembled without cancellation."""
        w = self.grid.weights[:, None]
        absB = abs(self.B)
        return np.array([np.abs(absB.T @ np.abs(w * self.grid.stress(f)).T.ravel()).max()
                         for f in fields])

    def strain(self, u: np.ndarray) -> np.ndarray:
        return (self.B @ u).reshape(6, -1).T

    def full_strain(self, repr_total: np.ndarray, load: np.ndarray) -> np.ndarray:
        return repr_total

    @property
    def K(self) -> sp.csr_matrix:
        if getattr(self, "_K", None) is None:
            laws = self.grid.region_voigt
            Dw = _weighted_block_matrix(self.grid, laws, self.grid.quad_region, self.grid.weights)
            K = (self.B.T @ (Dw @ self.B)).tocsr()
            self._K = (0.5 * (K + K.T)).tocsr()
        return self._K

    def solver(self, method: str, tol: float, maxiter: int):
        if self._solver is None:
            if method == "direct":
                self._solver = _DirectSolver(self.K, self.pinned())
            elif method == "pcg":
                self._solver = _DeflatedPCG(self.K, self.kernel(), self.node_blocks(), tol, maxiter)
            else:
                raise ValueError(f"unknown solver {method!r}")
        return self._solver


class _FiniteSpace(_SparseSpace):
    kind = "finite"

    def __init__(self, grid: CellGrid, gamma: float):
        super().__init__(grid)
        self.gamma = gamma
        (V1, D1), (V2, D2), (V3, D3) = grid.operators
        A1 = _kron3(D1, V2, V3)
        A2 = _kron3(V1, D2, V3)
        A3 = _kron3(V1, V2, D3) / gamma
        self.V = _kron3(V1, V2, V3)
        self.nn = self.V.shape[1]
        self.B = sp.bmat([[A1, None, None], [None, A2, None], [None, None, A3],
                          [None, A3, A2], [A3, None, A1], [A2, A1, None]], format="csr")

    def pinned(self):
        return np.arange(3) * self.nn

    def kernel(self):
        rows = np.arange(3 * self.nn)
        return sp.csr_matrix((np.ones(rows.size), (rows, rows // self.nn)), shape=(rows.size, 3))

    def node_blocks(self):
        return np.arange(self.nn)[:, None] + self.nn * np.arange(3)[None, :]

    def normalize(self, u: np.ndarray) -> np.ndarray:
        omega = self.V.T @ self.grid.weights
        u = u.copy()
        for c in range(3):
            blk = u[c * self.nn:(c + 1) * self.nn]
            blk -= (omega @ blk) / omega.sum()
        return u

    def unpack(self, u: np.ndarray) -> dict:
        phi = u.reshape((3,) + self.grid.nodal_shape)
        return {"phi": np.moveaxis(phi, 0, -1).copy()}

    def pack(self, c: "Corrector") -> np.ndarray:
        return np.moveaxis(c.phi, -1, 0).ravel()


class _InfinitySpace(_SparseSpace):
    kind = "infinity"

    def __init__(self, grid: CellGrid):
        super().__init__(grid)
        (V1, D1), (V2, D2), _ = grid.operators
        P1, P2, P3 = grid.quad_shape
        I3 = sp.identity(P3, format="csr")
        A1 = _kron3(D1, V2, I3)
        A2 = _kron3(V1, D2, I3)
        self.V = _kron3(V1, V2, I3)
        Dd = _kron3(sp.csr_matrix(np.ones((P1, 1))), sp.csr_matrix(np.ones((P2, 1))), I3)
        self.nn = self.V.shape[1]
        self.ns = P3
        self.B = sp.bmat([
            [A1, None, None, None, None, None],
            [None, A2, None, None, None, None],
            [None, None, None, None, None, Dd],
            [None, None, A2, None, Dd, None],
            [None, None, A1, Dd, None, None],
            [A2, A1, None, None, None, None]], format="csr")

    def pinned(self):
        s = np.arange(self.ns)
        return np.concatenate([c * self.nn + s for c in range(3)])

    def kernel(self):
        rows = np.arange(3 * self.nn)
        comp, node = np.divmod(rows, self.nn)
        cols = comp * self.ns + node % self.ns
        return sp.csr_matrix((np.ones(rows.size), (rows, cols)),
                             shape=(3 * self.nn + 3 * self.ns, 3 * self.ns))

    def node_blocks(self):
        phi = np.arange(self.nn)[:, None] + self.nn * np.arange(3)[None, :]
        d = 3 * self.nn + np.arange(self.ns)[:, None] + self.ns * np.arange(3)[None, :]
        return np.vstack([phi, d])

    def normalize(self, u: np.ndarray) -> np.ndarray:
        omega = (self.V.T @ self.grid.weights).reshape(-1, self.ns)
        u = u.copy()
        for c in range(3):
            blk = u[c * self.nn:(c + 1) * self.nn].reshape(-1, self.ns)
            blk -= (omega * blk).sum(axis=0) / omega.sum(axis=0)
            u[c * self.nn:(c + 1) * self.nn] = blk.ravel()
        return u

    def unpack(self, u: np.ndarray) -> dict:
        n1, n2, _ = self.grid.shape
        phi = u[:3 * self.nn].reshape(3, n1, n2, self.ns)
        d = u[3 * self.nn:].reshape(3, self.ns).T
        return {"phi": np.moveaxis(phi, 0, -1).copy(), "d": d.copy()}

    def pack(self, c: "Corrector") -> np.ndarray:
        return np.concatenate([np.moveaxis(c.phi, -1, 0).ravel(), c.d.T.ravel()])


class _FiniteLimitSpace(_SparseSpace):
    """Limit gamma -> inf of the finite-gamma Q1 space on the same grid.

    Strains sym(grad' phi | psi') with phi trilinear and psi piecewise linear
    in x3; used as a reference free of the slice/element mismatch.
    """

    kind = "infinity"

    def __init__(self, grid: CellGrid):
        super().__init__(grid)
        (V1, D1), (V2, D2), (V3, D3) = grid.operators
        P1, P2, _ = grid.quad_shape
        A1 = _kron3(D1, V2, V3)
        A2 = _kron3(V1, D2, V3)
        self.V = _kron3(V1, V2, V3)
        ones = sp.csr_matrix(np.ones((P1 * P2, 1)))
        Dd = sp.kron(ones, D3, format="csr")
        self.nn = self.V.shape[1]
        self.nz = grid.n3 + 1
        self.B = sp.bmat([
            [A1, None, None, None, None, None],
            [None, A2, None, None, None, None],
            [None, None, None, None, None, Dd],
            [None, None, A2, None, Dd, None],
            [None, None, A1, Dd, None, None],
            [A2, A1, None, None, None, None]], format="csr")

    def pinned(self):
        z = np.arange(self.nz)
        phi = np.concatenate([c * self.nn + z for c in range(3)])
        return np.concatenate([phi, 3 * self.nn + self.nz * np.arange(3)])

    def kernel(self):
        rows = np.arange(3 * self.nn)
        comp, node = np.divmod(rows, self.nn)
        cols = comp * self.nz + node % self.nz
        n = 3 * self.nn + 3 * self.nz
        r2 = 3 * self.nn + np.arange(3 * self.nz)
        c2 = 3 * self.nz + (r2 - 3 * self.nn) // self.nz
        return sp.csr_matrix((np.ones(rows.size + r2.size), (np.concatenate([rows, r2]),
                                                            np.concatenate([cols, c2]))),
                             shape=(n, 3 * self.nz + 3))

    def node_blocks(self):
        phi = np.arange(self.nn)[:, None] + self.nn * np.arange(3)[None, :]
        d = 3 * self.nn + np.arange(self.nz)[:, None] + self.nz * np.arange(3)[None, :]
        return np.vstack([phi, d])

    def normalize(self, u: np.ndarray) -> np.ndarray:
        omega = (self.V.T @ self.grid.weights).reshape(-1, self.nz)
        u = u.copy()
        for c in range(3):
            blk = u[c * self.nn:(c + 1) * self.nn].reshape(-1, self.nz)
            blk -= (omega * blk).sum(axis=0) / omega.sum(axis=0)
            u[c * self.nn:(c + 1) * self.nn] = blk.ravel()
            psi = u[3 * self.nn + c * self.nz:3 * self.nn + (c + 1) * self.nz]
            psi -= psi.mean()
        return u

    def unpack(self, u: np.ndarray) -> dict:
        phi = u[:3 * self.nn].reshape((3,) + self.grid.nodal_shape)
        psi = u[3 * self.nn:].reshape(3, self.nz)
        d = (np.diff(psi, axis=1) / np.diff(self.grid.x3)).T
        return {"phi": np.moveaxis(phi, 0, -1).copy(), "d": d.copy(), "psi": psi.T.copy()}

    def pack(self, c: "Corrector") -> np.ndarray:
        return np.concatenate([np.moveaxis(c.phi, -1, 0).ravel(), c.psi.T.ravel()])


class _ZeroSpace:
    """Plane-stress condensed problem in (phi', zeta) on the torus."""

    kind = "zero"
    slots = 3

    def __init__(self, grid: CellGrid, n_modes: tuple[int, int] | None = None):
        self.grid = grid
        (V1, D1), (V2, D2), _ = grid.operators
        self.V = sp.kron(V1, V2, format="csr")
        A1 = sp.kron(D1, V2, format="csr")
        A2 = sp.kron(V1, D2, format="csr")
        self.nn = self.V.shape[1]
        self.Bphi = sp.bmat([[A1, None], [None, A2], [A2, A1]], format="csr")
        n_modes = default_fourier_cutoff(grid) if n_modes is None else tuple(int(n) for n in n_modes)
        self.n_modes = n_modes
        self.modes = fourier_modes(*n_modes)
        P1, P2, P3 = grid.quad_shape
        self.ny, self.ns = P1 * P2, P3
        q1, q2, q3 = (g[0] for g in grid.gauss)
        Y1, Y2 = np.meshgrid(q1, q2, indexing="ij")
        w1, w2, w3 = (g[1] for g in grid.gauss)
        self.wy = np.outer(w1, w2).ravel()
        self.x3 = q3
        Hs = _fourier_hessian(self.modes, Y1.ravel(), Y2.ravel())
        Hs -= np.einsum("y,ayk->ak", self.wy, Hs)[:, None, :] / self.wy.sum()
        self.Bzeta = Hs
        self._solver = None

    @property
    def n_local(self) -> int:
        return 2 * self.nn + len(self.modes)

    # slot-major helpers
    def represent(self, e: np.ndarray) -> np.ndarray:
        return e[:, list(IN_PLANE_SLOTS)]

    def metric(self, a: np.ndarray, b: np.ndarray) -> float:
        return float(np.sum(self.grid.weights[:, None] * self.grid.reduced_stress(a) * b))

    def _moments(self, f: np.ndarray):
        s = (self.grid.weights[:, None] * self.grid.reduced_stress(f)).reshape(self.ny, self.ns, 3)
        return s.sum(axis=1), np.einsum("s,ysa->ya", self.x3, s)

    def rhs(self, fields: Sequence[np.ndarray]) -> np.ndarray:
        cols = []
        for f in fields:
            m0, m1 = self._moments(f)
            r_phi = self.Bphi.T @ m0.T.ravel()
            r_zeta = np.einsum("ayk,ya->k", self.Bzeta, m1)
            cols.append(np.concatenate([r_phi, r_zeta]))
        return np.column_stack(cols)

    def rhs_scale(self, fields: Sequence[np.ndarray]) -> np.ndarray:
        absB = abs(self.Bphi)
        out = []
        for f in fields:
            s = np.abs(self.grid.weights[:, None] * self.grid.reduced_stress(f)).reshape(self.ny, self.ns, 3)
            m0, m1 = s.sum(axis=1), np.einsum("s,ysa->ya", np.abs(self.x3), s)
            z = max((np.einsum("ayk,ya->k", np.abs(self.Bzeta[:, :, sl]), m1).max(initial=0.0)
                     for sl in _chunks(self.Bzeta.shape[2])), default=0.0)
            out.append(max(np.abs(absB.T @ m0.T.ravel()).max(initial=0.0), z))
        return np.array(out)

    def strain(self, u: np.ndarray) -> np.ndarray:
        nphi = 2 * self.nn
        a = (self.Bphi @ u[:nphi]).reshape(3, self.ny).T
        b = np.einsum("ayk,k->ya", self.Bzeta, u[nphi:])
        return (a[:, None, :] + self.x3[None, :, None] * b[:, None, :]).reshape(-1, 3)

    def full_strain(self, repr_total: np.ndarray, load: np.ndarray) -> np.ndarray:
        out = np.empty((repr_total.shape[0], 6))
        out[:, list(IN_PLANE_SLOTS)] = repr_total
        for (_, T), idx in zip(self.grid.reduced_laws, self.grid.region_masks):
            out[np.ix_(idx, list(TRANSVERSE_SLOTS))] = repr_total[idx] @ T.T
        return out

    def _moment_tensors(self):
        M = np.zeros((3, self.ny, 3, 3))
        w = self.grid.weights.reshape(self.ny, self.ns)
        reg = self.grid.quad_region.reshape(self.ny, self.ns)
        laws = np.array([Cb for Cb, _ in self.grid.reduced_laws])
        for k in range(3):
            M[k] = np.einsum("ys,s,ysab->yab", w, self.x3 ** k, laws[reg])
        return M

    def pinned(self):
        return np.array([0, self.nn])

    def solver(self, method: str, tol: float, maxiter: int):
        if self._solver is None:
            self._solver = _ZeroSchurSolver(self)
        return self._solver

    def normalize(self, u: np.ndarray) -> np.ndarray:
        omega = self.V.T @ self.wy
        u = u.copy()
        for c in range(2):
            blk = u[c * self.nn:(c + 1) * self.nn]
            blk -= (omega @ blk) / omega.sum()
        return u

    def unpack(self, u: np.ndarray) -> dict:
        n1, n2, _ = self.grid.shape
        phi = u[:2 * self.nn].reshape(2, n1, n2)
        return {"phi": np.moveaxis(phi, 0, -1).copy(), "zeta": u[2 * self.nn:].copy()}

    def pack(self, c: "Corrector") -> np.ndarray:
        return np.concatenate([np.moveaxis(c.phi, -1, 0).ravel(), c.zeta])


def _pointwise_apply(M: np.ndarray, B: np.ndarray) -> np.ndarray:
    """out[a, y, k] = sum_b M[y, a, b] B[b, y, k]."""
    out = np.zeros_like(B)
    for a in range(3):
        for b in range(3):
            out[a] += M[:, a, b, None] * B[b]
    return out


class _ZeroSchurSolver:
    """Sparse LU on phi', dense eigen-solve of the zeta Schur complement."""

    method = "direct"

    def __init__(self, space: _ZeroSpace):
        M0, M1, M2 = space._moment_tensors()
        Bphi, Bz = space.Bphi, space.Bzeta
        ny = space.ny
        D0 = sp.bmat([[sp.diags(M0[:, a, b]) for b in range(3)] for a in range(3)], format="csr")
        Kpp = (Bphi.T @ (D0 @ Bphi)).tocsr()
        Kpp = 0.5 * (Kpp + Kpp.T)
        m = Bz.shape[2]
        Kpz = np.zeros((Bphi.shape[1], m))
        Kzz = np.zeros((m, m))
        Bflat = Bz.reshape(3 * ny, m)
        for sl in _chunks(m):
            Bc = np.ascontiguousarray(Bz[:, :, sl])
            Kpz[:, sl] = Bphi.T @ _pointwise_apply(M1, Bc).reshape(3 * ny, -1)
            # lower blocks only; the upper ones follow by symmetry
            Kzz[:sl.stop, sl] = Bflat[:, :sl.stop].T @ _pointwise_apply(M2, Bc).reshape(3 * ny, -1)
        Kzz = np.triu(Kzz) + np.triu(Kzz, 1).T
        self.nphi = Kpp.shape[0]
        self.free = np.setdiff1d(np.arange(self.nphi), space.pinned())
        self.lu = spla.splu(Kpp[self.free][:, self.free].tocsc(), permc_spec="COLAMD")
        X = np.zeros((self.nphi, Kzz.shape[0]))
        if Kzz.shape[0]:
            X[self.free] = self.lu.solve(np.ascontiguousarray(Kpz[self.free]))
        S = Kzz - Kpz.T @ X
        S = 0.5 * (S + S.T)
        ev, Q = np.linalg.eigh(S) if S.size else (np.zeros(0), np.zeros((0, 0)))
        keep = ev > 1e-13 * max(ev.max(initial=0.0), 1e-300)
        self.S_inv = (Q[:, keep] / ev[keep]) @ Q[:, keep].T
        self.rank_deficiency = int(np.sum(~keep))
        self.X, self.Kpz = X, Kpz
        Kfull = sp.bmat([[Kpp, sp.csr_matrix(Kpz)], [sp.csr_matrix(Kpz.T), sp.csr_matrix(Kzz)]],
                        format="csr")
        self.K = Kfull

    def solve(self, R: np.ndarray):
        rp, rz = R[:self.nphi], R[self.nphi:]
        yp = np.zeros_like(rp)
        yp[self.free] = self.lu.solve(np.ascontiguousarray(rp[self.free]))
        uz = self.S_inv @ (rz - self.Kpz.T @ yp)
        up = yp - self.X @ uz
        return np.vstack([up, uz]), np.zeros(R.shape[1], dtype=int)


# ----------------------------------------------------------------- corrector

@dataclass(frozen=True, eq=False)
class Corrector:
    """Minimizer data of one corrector problem."""

    regime: GammaRegime
    M: np.ndarray
    phi: np.ndarray
    d: np.ndarray | None = None
    zeta: np.ndarray | None = None
    zeta_modes: np.ndarray | None = None
    g: np.ndarray | None = None
    report: dict = field(default_factory=dict)
    extra: np.ndarray | None = None
    psi: np.ndarray | None = None


@dataclass
class RelaxationResult:
    """Relaxed load: total strain (load + corrector) and its corrector data."""

    corrector: Corrector
    total: np.ndarray          # flat (Nq, 6) engineering strain of load + chi
    load: np.ndarray
    energy: float

    @property
    def chi(self) -> np.ndarray:
        return self.total - self.load


class CorrectorProblem:
    """Factorized relaxation space for one grid and regime.

    ``solver`` is ``"direct"`` (sparse LU, default) or ``"pcg"`` (block-Jacobi
    conjugate gradients with kernel deflation; finite and infinite regimes).
    ``infinity`` selects the infinite-regime space: ``"slices"`` (exact
    slice-wise problems, default) or ``"finite-limit"`` (the gamma -> inf limit
    of the trilinear finite-gamma space on the same grid).
    """

    def __init__(self, grid: CellGrid, regime, *, solver: str = "direct", tol: float = DEFAULT_TOL,
                 maxiter: int = DEFAULT_MAXITER, n_modes: tuple[int, int] | None = None,
                 infinity: str = "slices"):
        self.grid = grid
        self.regime = GammaRegime.from_value(regime)
        self.method, self.tol, self.maxiter = solver, tol, maxiter
        if self.regime.kind == "finite":
            self.space = _FiniteSpace(grid, self.regime.gamma)
        elif self.regime.kind == "infinity":
            if infinity == "slices":
                self.space = _InfinitySpace(grid)
            elif infinity == "finite-limit":
                self.space = _FiniteLimitSpace(grid)
            else:
                raise ValueError(f"unknown infinite-regime space {infinity!r}")
        else:
            if solver == "pcg":
                raise ValueError("the zero regime uses the direct Schur solver only")
            self.space = _ZeroSpace(grid, n_modes)

    def _M_modes(self) -> list[np.ndarray]:
        n = self.grid.n_quad
        return [np.tile(engineering_strain(iota(G)), (n, 1)) for G in CANONICAL_BASIS.matrices]

    def relax(self, loads: Sequence[np.ndarray], extra_modes: Sequence[np.ndarray] = ()):
        """Relax flat engineering loads (Nq, 6); extra modes join M as global unknowns."""
        t0 = time.perf_counter()
        sp_ = self.space
        loads = [np.asarray(f, dtype=float).reshape(-1, 6) for f in loads]
        modes = self._M_modes() + [np.asarray(f, dtype=float).reshape(-1, 6) for f in extra_modes]
        X = [sp_.represent(f) for f in loads + modes]
        R = sp_.rhs(X)
        solver = sp_.solver(self.method, self.tol, self.maxiter)
        U, its = solver.solve(-R)
        S = [x + sp_.strain(U[:, j]) for j, x in enumerate(X)]
        nl, nm = len(loads), len(modes)
        Sm = S[nl:]
        A = np.array([[sp_.metric(a, b) for b in Sm] for a in Sm])
        A = 0.5 * (A + A.T)
        Kmat = solver.K if isinstance(solver, _ZeroSchurSolver) else sp_.K
        # relative to the cancellation-free right-hand side, so loads that are
        # (nearly) orthogonal to the space do not report roundoff as failure
        denom = np.maximum(np.abs(R).max(axis=0), sp_.rhs_scale(X))
        res = np.abs(Kmat @ U + R).max(axis=0) / np.where(denom > 0, denom, 1.0)
        out = []
        for j in range(nl):
            b = np.array([sp_.metric(m, S[j]) for m in Sm])
            c = -np.linalg.solve(A, b)
            u = U[:, j] + U[:, nl:] @ c
            total = S[j] + sum(ci * s for ci, s in zip(c, Sm))
            el = np.array([sp_.metric(m, total) for m in Sm])
            u = sp_.normalize(u)
            parts = sp_.unpack(u)
            full = sp_.full_strain(total, loads[j])
            report = {
                "method": solver.method,
                "iterations": int(its[j] + its[nl:].sum()),
                "residual": float(max(res[j], res[nl:].max(initial=0.0))),
                "mode_residual": float(np.max(np.abs(el), initial=0.0)),
                "seconds": time.perf_counter() - t0,
            }
            if self.regime.kind == "zero":
                report["fourier_modes"] = list(sp_.n_modes)
                report["schur_rank_deficiency"] = solver.rank_deficiency
                chi_o = full[:, list(TRANSVERSE_SLOTS)] - loads[j][:, list(TRANSVERSE_SLOTS)]
                parts["g"] = chi_o[:, ::-1].reshape(self.grid.quad_shape + (3,))
                parts["zeta_modes"] = sp_.modes
            corr = Corrector(regime=self.regime, M=CANONICAL_BASIS.matrix(c[:3]), report=report,
                             extra=c[3:].copy(), **parts)
            out.append(RelaxationResult(corr, full, loads[j], self.grid.energy(full)))
        return out

    def relax_one(self, load: np.ndarray, extra_modes: Sequence[np.ndarray] = ()) -> RelaxationResult:
        return self.relax([load], extra_modes)[0]

    def local_strain(self, c: Corrector) -> np.ndarray:
        """Flat strain of the local part of a corrector (no M, no g)."""
        return self.space.strain(self.space.pack(c))

    def euler_lagrange_residual(self, total: np.ndarray) -> np.ndarray:
        """Assembled residual of the total strain against all local basis functions."""
        r = self.space.rhs([self.space.represent(total)])[:, 0]
        modes = [self.space.metric(self.space.represent(m), self.space.represent(total))
                 for m in self._M_modes()]
        return np.concatenate([r, modes])


# ------------------------------------------------------------------ public API

def _as_load(grid: CellGrid, data) -> np.ndarray:
    if isinstance(data, StrainField):
        if data.grid is not grid and not data.grid.same_nodes(grid):
            raise ValueError("data does not live on this grid")
        return data.engineering()
    return np.asarray(data, dtype=float).reshape(-1, 6)


def _bind(grid: CellGrid, field: MaterialField | None) -> CellGrid:
    if field is None or field is grid.field:
        return grid
    return grid.with_field(field)


def solve_corrector(grid: CellGrid, data, regime, *, field: MaterialField | None = None,
                    **options) -> Corrector:
    grid = _bind(grid, field)
    return CorrectorProblem(grid, regime, **options).relax_one(_as_load(grid, data)).corrector


def solve_finite(grid: CellGrid, data, gamma: float, *, field=None, **options) -> Corrector:
    return solve_corrector(grid, data, GammaRegime.finite(gamma), field=field, **options)


def solve_infinity(grid: CellGrid, data, *, field=None, **options) -> Corrector:
    return solve_corrector(grid, data, GammaRegime.infinity(), field=field, **options)


def solve_zero(grid: CellGrid, data, *, field=None, **options) -> Corrector:
    return solve_corrector(grid, data, GammaRegime.zero(), field=field, **options)


def corrector_strain(c: Corrector, grid: CellGrid, n_modes: tuple[int, int] | None = None) -> StrainField:
    """The relaxation field chi = iota(M) + local strain (+ g part at gamma = 0)."""
    if c.regime.kind == "zero":
        space = _ZeroSpace(grid, n_modes if n_modes is not None else _modes_cutoff(c.zeta_modes))
        if c.phi.shape != grid.shape[:2] + (2,):
            raise ValueError("corrector does not match grid")
        ip = space.strain(space.pack(c))
        e = np.zeros((grid.n_quad, 6))
        e[:, list(IN_PLANE_SLOTS)] = ip
        e[:, list(TRANSVERSE_SLOTS)] = c.g.reshape(-1, 3)[:, ::-1]
    else:
        if c.regime.kind == "finite":
            space = _FiniteSpace(grid, c.regime.gamma)
        elif c.psi is not None:
            space = _FiniteLimitSpace(grid)
        else:
            space = _InfinitySpace(grid)
        e = space.strain(space.pack(c))
    return StrainField.from_engineering(grid, e + engineering_strain(iota(c.M)))


def _modes_cutoff(modes: np.ndarray) -> tuple[int, int]:
    if modes is None or modes.size == 0:
        return (0, 0)
    return (int(np.abs(modes[:, 0]).max()), int(np.abs(modes[:, 1]).max()))


def bending_loads(grid: CellGrid, basis=CANONICAL_BASIS) -> list[np.ndarray]:
    return [StrainField.bending(grid, G).engineering() for G in basis.matrices]


@dataclass
class Projection:
    Gstar: np.ndarray
    proj: StrainField
    residual_sq: float
    coefficients: np.ndarray
    report: dict


def project_onto_Hgamma(grid: CellGrid, symB, regime, *, field=None, basis=CANONICAL_BASIS,
                        problem: CorrectorProblem | None = None, **options) -> Projection:
    """Orthogonal projection of sym B onto {iota(x3 G) + chi}."""
    grid = _bind(grid, field)
    if isinstance(symB, PrestrainField):
        symB = sample_prestrain(grid, symB)
    load = _as_load(grid, symB)
    problem = problem or CorrectorProblem(grid, regime, **options)
    res = problem.relax_one(load, extra_modes=bending_loads(grid, basis))
    # res.total = B + chi' + sum c_i iota(x3 G_i): the residual of the projection
    coeffs = -res.corrector.extra
    residual = res.total
    proj = StrainField.from_engineering(grid, load - residual)
    return Projection(basis.matrix(coeffs), proj, grid.energy(residual), coeffs,
                      res.corrector.report)


# ------------------------------------------------------ prestrain from corrector

def prestrain_from_corrector(grid: CellGrid, source: MaterialField | None = None,
                             basis_index: int = 2, **options) -> PrestrainField:
    """sym of the matrix whose third column is d3 phi of the infinite-regime corrector.

    The corrector solves the load iota(x3 G_k) for the material ``source`` on the
    nodes of ``grid``; its slice-wise nodal field is differentiated in x3
    element by element (exact: the slice solution is affine within a layer).
    """
    g = _bind(grid, source)
    load = StrainField.bending(g, CANONICAL_BASIS.matrices[basis_index]).engineering()
    c = CorrectorProblem(g, GammaRegime.infinity(), **options).relax_one(load).corrector
    return prestrain_from_infinity_corrector(grid, c, basis_index)


def prestrain_from_infinity_corrector(grid: CellGrid, c: Corrector,
                                      basis_index: int = 2) -> PrestrainField:
    if c.regime.kind != "infinity" or c.psi is not None:
        raise ValueError("needs a slice-wise infinite-regime corrector")
    x3q = grid.gauss[2][0]
    phi = c.phi  # (n1, n2, P3, 3)
    lo, hi = phi[:, :, 0::2], phi[:, :, 1::2]
    slope = (hi - lo) / (x3q[1::2] - x3q[0::2])[None, None, :, None]
    slope = np.repeat(slope, 2, axis=2)
    (V1, _), (V2, _), _ = grid.operators
    vals = _apply_axis(V2, _apply_axis(V1, slope, 0), 1)
    A = np.zeros(grid.quad_shape + (3, 3))
    A[..., :, 2] = vals
    S = 0.5 * (A + np.swapaxes(A, -1, -2))
    return PrestrainField(samples=S, sample_nodes=(grid.y1.copy(), grid.y2.copy(), grid.x3.copy()),
                          name="from-corrector", meta={"basis_index": basis_index})


# ---------------------------------------------------------------- binary dump

_MAGIC = b"PHCORR01"


def dump_corrector(c: Corrector, grid: CellGrid, path) -> None:
    """Flat little-endian float64 arrays preceded by a JSON header."""
    import json
    arrays = {"M": c.M, "phi": c.phi}
    for name in ("d", "zeta", "g"):
        if getattr(c, name) is not None:
            arrays[name] = getattr(c, name)
    if c.zeta_modes is not None:
        arrays["zeta_modes"] = c.zeta_modes.astype(float)
    header = {"regime": c.regime.kind, "gamma": c.regime.gamma,
              "nodes": {"y1": grid.y1.tolist(), "y2": grid.y2.tolist(), "x3": grid.x3.tolist()},
              "arrays": [], "report": {k: v for k, v in c.report.items()
                                       if isinstance(v, (int, float, str, list))}}
    offset = 0
    for name, a in arrays.items():
        a = np.ascontiguousarray(a, dtype="<f8")
        header["arrays"].append({"name": name, "shape": list(a.shape), "offset": offset})
        offset += a.nbytes
    blob = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(np.uint64(len(blob)).astype("<u8").tobytes())
        fh.write(blob)
        for a in arrays.values():
            fh.write(np.ascontiguousarray(a, dtype="<f8").tobytes())


def load_corrector(path) -> tuple[Corrector, dict]:
    import json
    with open(path, "rb") as fh:
        if fh.read(8) != _MAGIC:
            raise ValueError("not a corrector dump")
        n = int(np.frombuffer(fh.read(8), dtype="<u8")[0])
        header = json.loads(fh.read(n).decode())
        data = fh.read()
    arrays = {}
    for spec in header["arrays"]:
        count = int(np.prod(spec["shape"]))
        arrays[spec["name"]] = np.frombuffer(data, dtype="<f8", count=count,
                                             offset=spec["offset"]).reshape(spec["shape"]).copy()
    if "zeta_modes" in arrays:
        arrays["zeta_modes"] = arrays["zeta_modes"].astype(int)
    regime = GammaRegime(header["regime"], header["gamma"])
    return Corrector(regime=regime, report=header.get("report", {}), **arrays), header
