"""Closed-form laminate solutions and a dense brute-force relaxation minimizer.

The brute-force path shares no assembly code with the corrector module: it
builds its own shape functions and quadrature, evaluates the full fourth-order
tensor at every point, keeps every unknown (including the transverse vector g
at gamma = 0) and enforces zero means with Lagrange multipliers in one dense
symmetric indefinite system.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

MAX_DOF = 4000
_GAUSS = np.array([0.5 - 0.5 / math.sqrt(3.0), 0.5 + 0.5 / math.sqrt(3.0)])


class OracleLimitError(ValueError):
    """The dense system would exceed the DOF cap."""


# ------------------------------------------------------------- closed forms

@dataclass(frozen=True)
class LaminateSpec:
    """mu1 on |y1| < theta/2, mu2 elsewhere, lambda = 0."""

    theta: float = 0.5
    mu1: float = 1.0
    mu2: float = 2.0

    def __post_init__(self):
        if not 0.0 < self.theta < 1.0:
            raise ValueError("theta must lie in (0, 1)")
        if not (self.mu1 > 0 and self.mu2 > 0):
            raise ValueError("moduli must be positive")

    @property
    def harmonic(self) -> float:
        return 1.0 / (self.theta / self.mu1 + (1.0 - self.theta) / self.mu2)

    @property
    def arithmetic(self) -> float:
        return self.theta * self.mu1 + (1.0 - self.theta) * self.mu2

    def mu(self, y1):
        y = (np.asarray(y1, dtype=float) + 0.5) % 1.0 - 0.5
        return np.where(np.abs(y) < self.theta / 2, self.mu1, self.mu2)


def laminate_exact_qeff(spec: LaminateSpec) -> np.ndarray:
    """Infinite-regime Qhat in the canonical basis: diag(h/6, a/6, h/6)."""
    h, a = spec.harmonic, spec.arithmetic
    return np.diag([h / 6.0, a / 6.0, h / 6.0])


def laminate_zero_qeff(spec: LaminateSpec) -> np.ndarray:
    """Zero-regime Qhat, diag(h/6, a/6, a/6).

    The y1-dependent Hessian d11 zeta relaxes the G1 curvature to the harmonic
    mean; a periodic zeta has no y1-dependent mixed derivative, so the twist
    keeps the arithmetic mean.
    """
    h, a = spec.harmonic, spec.arithmetic
    return np.diag([h / 6.0, a / 6.0, a / 6.0])


def laminate_corrector_slope(spec: LaminateSpec, x3: float):
    """y1 -> d_{y1} w of the twist corrector, sqrt(2) x3 (h / mu(y1) - 1)."""
    h = spec.harmonic
    x3 = float(x3)

    def slope(y1):
        return math.sqrt(2.0) * x3 * (h / spec.mu(y1) - 1.0)

    return slope


def laminate_corrector_profile(spec: LaminateSpec):
    """y1 -> d3 phi_2 of the twist corrector: the zero-mean periodic primitive of
    sqrt(2) (h / mu - 1), a triangle wave."""
    h = spec.harmonic
    s1 = math.sqrt(2.0) * (h / spec.mu1 - 1.0)
    s2 = math.sqrt(2.0) * (h / spec.mu2 - 1.0)
    t = spec.theta

    def profile(y1):
        # odd in y1 and continuous across the cell boundary, hence zero mean
        y = (np.asarray(y1, dtype=float) + 0.5) % 1.0 - 0.5
        inner = s1 * y
        right = s1 * t / 2 + s2 * (y - t / 2)
        left = -s1 * t / 2 + s2 * (y + t / 2)
        return np.where(np.abs(y) <= t / 2, inner, np.where(y > 0, right, left))

    return profile


def laminate_profile_amplitude(spec: LaminateSpec) -> float:
    """Half the peak-to-peak range of the d3 phi_2 profile: |s1| theta / 2."""
    return abs(math.sqrt(2.0) * (spec.harmonic / spec.mu1 - 1.0)) * spec.theta / 2.0


# --------------------------------------------------------- dense brute force

def _periodic_hat(nodes: np.ndarray):
    """Per Gauss point: (point, weight, (left, right) dofs, values, derivatives)."""
    h = np.diff(nodes)
    n = h.size
    pts, wts, dofs, val, der = [], [], [], [], []
    for e in range(n):
        for t in _GAUSS:
            pts.append(nodes[e] + t * h[e])
            wts.append(0.5 * h[e])
            dofs.append((e, (e + 1) % n))
            val.append((1.0 - t, t))
            der.append((-1.0 / h[e], 1.0 / h[e]))
    return np.array(pts), np.array(wts), np.array(dofs), np.array(val), np.array(der), n


def _open_hat(nodes: np.ndarray):
    p, w, d, v, g, n = _periodic_hat(nodes)
    d = np.array([(e, e + 1) for e in range(n) for _ in range(2)])
    return p, w, d, v, g, n + 1


def _dense_axis(ax):
    """Dense (points x dofs) value and derivative matrices."""
    p, w, d, v, g, ndof = ax
    V = np.zeros((p.size, ndof))
    D = np.zeros((p.size, ndof))
    for i in range(p.size):
        for k in range(2):
            V[i, d[i, k]] += v[i, k]
            D[i, d[i, k]] += g[i, k]
    return V, D


def _sym_unit(i: int, j: int) -> np.ndarray:
    E = np.zeros((3, 3))
    E[i, j] += 0.5
    E[j, i] += 0.5
    return E


def _fourier_default(n: int) -> int:
    return min(16, n - 1)


def _trig_modes(N1: int, N2: int):
    ks = [(k1, k2) for k1 in range(N1 + 1) for k2 in range(-N2, N2 + 1) if k1 > 0 or k2 > 0]
    return [(k1, k2, c) for k1, k2 in ks for c in (0, 1)]


def brute_force_qext(field, data, regime, nodes=None, *, n_modes=None,
                     return_solution: bool = False):
    """Minimum of the energy of data + chi over the discrete relaxation space.

    ``data`` is a StrainField (its grid supplies the nodes) or a callable
    (y1, y2, x3) -> 3x3 together with explicit ``nodes = (y1, y2, x3)``.
    ``regime`` is 0, a positive gamma or inf (or a GammaRegime).
    """
    kind, gamma = _regime(regime)
    if nodes is None:
        grid = data.grid
        nodes = (np.asarray(grid.y1), np.asarray(grid.y2), np.asarray(grid.x3))
    y1n, y2n, x3n = (np.asarray(a, dtype=float) for a in nodes)
    ax1, ax2 = _periodic_hat(y1n), _periodic_hat(y2n)
    ax3 = _open_hat(x3n)
    V1, D1 = _dense_axis(ax1)
    V2, D2 = _dense_axis(ax2)
    V3, D3 = _dense_axis(ax3)
    p1, p2, p3 = ax1[0], ax2[0], ax3[0]
    w = np.einsum("a,b,c->abc", ax1[1], ax2[1], ax3[1]).ravel()
    P = (p1.size, p2.size, p3.size)
    nq = w.size
    Y1, Y2, X3 = (g.ravel() for g in np.meshgrid(p1, p2, p3, indexing="ij"))

    if callable(data):
        H = np.array([data(a, b, c) for a, b, c in zip(Y1, Y2, X3)], dtype=float).reshape(nq, 3, 3)
    else:
        H = np.asarray(data.values, dtype=float).reshape(nq, 3, 3)

    cols = []          # each entry: (nq, 3, 3) strain of one unknown
    constraints = []   # each entry: dict unknown-index -> coefficient
    n1, n2, n3 = ax1[5], ax2[5], ax3[5]

    def add(strain):
        cols.append(strain)
        return len(cols) - 1

    def unit(i, j):
        return np.broadcast_to(_sym_unit(i, j), (nq, 3, 3))

    # global in-plane matrices M (three symmetric directions)
    for i, j in ((0, 0), (1, 1), (0, 1)):
        add(np.array(unit(i, j)))

    if kind == "finite":
        _check_cap(3 * n1 * n2 * n3 + 3 + 3)
        idx = {}
        for comp in range(3):
            for a in range(n1):
                for b in range(n2):
                    for c in range(n3):
                        v = np.einsum("i,j,k->ijk", V1[:, a], V2[:, b], V3[:, c]).ravel()
                        g = [np.einsum("i,j,k->ijk", D1[:, a], V2[:, b], V3[:, c]).ravel(),
                             np.einsum("i,j,k->ijk", V1[:, a], D2[:, b], V3[:, c]).ravel(),
                             np.einsum("i,j,k->ijk", V1[:, a], V2[:, b], D3[:, c]).ravel() / gamma]
                        S = sum(g[j][:, None, None] * _sym_unit(comp, j) for j in range(3))
                        idx[(comp, a, b, c)] = (add(S), v)
            constraints.append({k: float(w @ v) for (cc, *_), (k, v) in idx.items() if cc == comp})
    elif kind == "infinity":
        ns = p3.size
        _check_cap(3 * n1 * n2 * ns + 3 * ns + 3 + 3 * ns)
        for s in range(ns):
            sel = np.zeros(P)
            sel[:, :, s] = 1.0
            sel = sel.ravel()
            for comp in range(3):
                cmap = {}
                for a in range(n1):
                    for b in range(n2):
                        v = np.einsum("i,j->ij", V1[:, a], V2[:, b])
                        g1 = np.einsum("i,j->ij", D1[:, a], V2[:, b])
                        g2 = np.einsum("i,j->ij", V1[:, a], D2[:, b])
                        ext = lambda f: (f[:, :, None] * np.ones(P[2])[None, None, :]).ravel() * sel
                        S = (ext(g1)[:, None, None] * _sym_unit(comp, 0)
                             + ext(g2)[:, None, None] * _sym_unit(comp, 1))
                        k = add(S)
                        cmap[k] = float(w @ (ext(v)))
                constraints.append(cmap)
            for comp in range(3):
                add(sel[:, None, None] * _sym_unit(comp, 2))
    else:
        N = n_modes if n_modes is not None else (_fourier_default(n1), _fourier_default(n2))
        modes = _trig_modes(*N)
        _check_cap(2 * n1 * n2 + len(modes) + 1 + 3 * nq + 3 + 3)
        wy = np.einsum("a,b->ab", ax1[1], ax2[1]).ravel()
        y1g, y2g = (g.ravel() for g in np.meshgrid(p1, p2, indexing="ij"))
        rep = lambda f: np.repeat(f, P[2])
        x3f = X3
        for comp in range(2):
            cmap = {}
            for a in range(n1):
                for b in range(n2):
                    v = np.einsum("i,j->ij", V1[:, a], V2[:, b]).ravel()
                    g1 = np.einsum("i,j->ij", D1[:, a], V2[:, b]).ravel()
                    g2 = np.einsum("i,j->ij", V1[:, a], D2[:, b]).ravel()
                    S = (rep(g1)[:, None, None] * _sym_unit(comp, 0)
                         + rep(g2)[:, None, None] * _sym_unit(comp, 1))
                    cmap[add(S)] = float(wy @ v)
            constraints.append(cmap)
        # constant mode of zeta (no strain) pinned by a multiplier
        k0 = add(np.zeros((nq, 3, 3)))
        constraints.append({k0: 1.0})
        for k1, k2, c in modes:
            kk = k1 * k1 + k2 * k2
            arg = 2 * np.pi * (k1 * y1g + k2 * y2g)
            f = np.cos(arg) if c == 0 else np.sin(arg)
            Hess = -np.einsum("y,ab->yab", f, np.array([[k1 * k1, k1 * k2], [k1 * k2, k2 * k2]]) / kk)
            Hess = Hess - np.einsum("y,yab->ab", wy, Hess) / wy.sum()
            S = np.zeros((nq, 3, 3))
            S[:, :2, :2] = np.repeat(Hess, P[2], axis=0) * x3f[:, None, None]
            add(S)
        for q in range(nq):
            for comp in range(3):
                S = np.zeros((nq, 3, 3))
                S[q] = _sym_unit(comp, 2)
                add(S)

    Lq = np.array([field.tensor_at(a, b, c).tensor() for a, b, c in zip(Y1, Y2, X3)])
    Smat = np.stack(cols, axis=-1).reshape(nq, 9, -1)            # (nq, 9, n)
    L9 = Lq.reshape(nq, 9, 9) * w[:, None, None]
    LS = np.einsum("qij,qjn->qin", L9, Smat)
    K = np.einsum("qim,qin->mn", Smat, LS)
    h9 = H.reshape(nq, 9)
    f = np.einsum("qi,qin->n", h9, LS)
    c0 = float(np.einsum("qi,qij,qj->", h9, L9, h9))
    n = K.shape[0]
    C = np.zeros((len(constraints), n))
    for r, cmap in enumerate(constraints):
        for k, v in cmap.items():
            C[r, k] = v
    KKT = np.block([[0.5 * (K + K.T), C.T], [C, np.zeros((C.shape[0], C.shape[0]))]])
    rhs = np.concatenate([-f, np.zeros(C.shape[0])])
    sol = _solve_symmetric(KKT, rhs)
    u = sol[:n]
    energy = c0 + 2.0 * f @ u + u @ K @ u
    if return_solution:
        chi = np.einsum("qin,n->qi", Smat, u).reshape(P + (3, 3))
        return float(energy), {"chi": chi, "M": u[:3], "dof": n, "multipliers": C.shape[0]}
    return float(energy)


def _solve_symmetric(A: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Direct symmetric-indefinite solve; SVD least squares if the system is singular
    (a rank-deficient trigonometric Hessian family at gamma = 0)."""
    try:
        import warnings
        with warnings.catch_warnings():
            warnings.simplefilter("error", sla.LinAlgWarning)
            return sla.solve(A, b, assume_a="sym")
    except (np.linalg.LinAlgError, sla.LinAlgWarning):
        return sla.lstsq(A, b, cond=1e-13)[0]


def _check_cap(ndof: int) -> None:
    if ndof > MAX_DOF:
        raise OracleLimitError(f"dense oracle needs {ndof} unknowns (cap {MAX_DOF})")


def _regime(regime):
    kind = getattr(regime, "kind", None)
    if kind is not None:
        return kind, getattr(regime, "gamma", None)
    v = float(regime)
    if v == 0.0:
        return "zero", None
    if math.isinf(v) and v > 0:
        return "infinity", None
    if v > 0:
        return "finite", v
    raise ValueError("regime must be 0, a positive gamma or inf")
