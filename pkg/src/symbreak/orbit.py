"""Orbit tangent space: Gram matrix, pseudoinverse and the L2 projector onto span{e_i}."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .fields import GridMismatchError, ScalarField

PINV_CUTOFF = 1e-10


@dataclass(frozen=True, eq=False)
class OrbitBasis:
    e: tuple

    def __post_init__(self):
        e = tuple(self.e)
        if not e:
            raise ValueError("orbit basis is empty")
        if any(f.grid != e[0].grid for f in e):
            raise GridMismatchError("orbit directions on different grids")
        object.__setattr__(self, "e", e)

    @property
    def grid(self):
        return self.e[0].grid

    @property
    def d(self) -> int:
        return len(self.e)

    def stack(self) -> np.ndarray:
        return np.stack([f.values for f in self.e])


@dataclass(frozen=True, eq=False)
class GramData:
    G: np.ndarray
    Gplus: np.ndarray
    rank: int
    cutoff: float = PINV_CUTOFF


def gram(basis: OrbitBasis, cutoff: float = PINV_CUTOFF) -> GramData:
    """Gram matrix and its pseudoinverse from a symmetric eigendecomposition.

    Eigenvalues below ``cutoff * lambda_max`` are dropped; an all-zero basis
    gives rank 0 and a zero pseudoinverse.
    """
    E = basis.stack().reshape(basis.d, -1)
    G = E @ E.T * basis.grid.mu
    G = 0.5 * (G + G.T)
    lam, V = np.linalg.eigh(G)
    top = lam.max() if lam.size else 0.0
    if top <= 0.0:
        return GramData(G, np.zeros_like(G), 0, cutoff)
    keep = lam > cutoff * top
    Gplus = (V[:, keep] / lam[keep]) @ V[:, keep].T
    return GramData(G, 0.5 * (Gplus + Gplus.T), int(keep.sum()), cutoff)


def correlations(r: ScalarField, basis: OrbitBasis) -> np.ndarray:
    if r.grid != basis.grid:
        raise GridMismatchError("residual and orbit basis on different grids")
    E = basis.stack().reshape(basis.d, -1)
    return E @ r.values.ravel() * r.grid.mu


def _tangent_array(values: np.ndarray, E: np.ndarray, Gplus: np.ndarray, mu: float) -> np.ndarray:
    b = E @ values.ravel() * mu
    return (Gplus @ b) @ E


def project(f: ScalarField, basis: OrbitBasis, g: GramData) -> tuple[ScalarField, ScalarField]:
    """Split ``f`` into its orbit-tangent part ``P f`` and normal part ``f - P f``."""
    if f.grid != basis.grid:
        raise GridMismatchError("field and orbit basis on different grids")
    E = basis.stack().reshape(basis.d, -1)
    tan = _tangent_array(f.values, E, g.Gplus, f.grid.mu).reshape(f.grid.shape)
    return ScalarField(f.grid, tan), ScalarField(f.grid, f.values - tan)
