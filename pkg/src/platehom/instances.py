"""Random admissible materials and layered prestrains for property checks."""
from __future__ import annotations

import numpy as np

from .material import (
    IN_PLANE_SLOTS, TRANSVERSE_SLOTS, Box, MaterialField, PrestrainField, StiffnessTensor,
    layered_prestrain,
)


def random_spd(rng: np.random.Generator, n: int = 6, shift: float = 1.0) -> np.ndarray:
    A = rng.normal(size=(n, n))
    return A @ A.T / n + shift * np.eye(n)


def random_law(rng: np.random.Generator, orthotropic: bool = False) -> StiffnessTensor:
    """Random positive definite law; ``orthotropic`` decouples in-plane from transverse slots."""
    if not orthotropic:
        return StiffnessTensor(random_spd(rng))
    C = np.zeros((6, 6))
    ip, tr = list(IN_PLANE_SLOTS), list(TRANSVERSE_SLOTS)
    C[np.ix_(ip, ip)] = random_spd(rng, 3)
    C[np.ix_(tr, tr)] = random_spd(rng, 3)
    return StiffnessTensor(C)


def _split(rng: np.random.Generator, lo: float, hi: float) -> float:
    return float(np.round(rng.uniform(lo + 0.2 * (hi - lo), hi - 0.2 * (hi - lo)), 3))


def random_field(rng: np.random.Generator, orthotropic: bool = False,
                 axis: int | None = None) -> MaterialField:
    """Two phases separated along one random axis (a y-stripe or an x3-layer)."""
    axis = int(rng.integers(3)) if axis is None else axis
    name = ("y1", "y2", "x3")[axis]
    if axis < 2:
        a, b = sorted((_split(rng, -0.5, 0.0), _split(rng, 0.0, 0.5)))
        boxes = [Box(**{name: (a, b)}), Box(**{name: (b, a + 1.0)})]
    else:
        c = _split(rng, -0.5, 0.5)
        boxes = [Box(x3=(-0.5, c)), Box(x3=(c, 0.5))]
    return MaterialField(tuple((bx, random_law(rng, orthotropic)) for bx in boxes), name="random")


def random_laminate(rng: np.random.Generator, orthotropic: bool = True) -> MaterialField:
    """Stripes in y1 (a laminate), by default with orthotropic phases."""
    return random_field(rng, orthotropic=orthotropic, axis=0)


def random_symmetric(rng: np.random.Generator) -> np.ndarray:
    A = rng.normal(size=(3, 3))
    return 0.5 * (A + A.T)


def random_layered_prestrain(rng: np.random.Generator, layers: int = 2) -> PrestrainField:
    cuts = np.sort(np.round(rng.uniform(-0.4, 0.4, size=layers - 1), 3))
    edges = np.concatenate([[-0.5], cuts, [0.5]])
    return layered_prestrain([((float(a), float(b)), random_symmetric(rng))
                              for a, b in zip(edges[:-1], edges[1:])])
