"""Lie generators, flow assembly and the pullback warp of scalar signals.

The warp integrates backward characteristics with RK4 and resamples with a
periodic Catmull-Rom (Keys, a = -1/2) cubic.  The same interpolant is used for
the velocity between nodes.  At grid nodes the cubic's derivative is exactly
the central difference, so the warp linearizes to ``S + t * sum(phi_i e_i)``
with the orbit directions below.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .fields import Grid, MultiField, ScalarField, VectorField, grad

TRANSLATE_X = "TranslateX"
TRANSLATE_Y = "TranslateY"
ROTATE = "Rotate"
DILATE = "Dilate"
SHEAR_X = "ShearX"
CUSTOM = "Custom"

KINDS = (TRANSLATE_X, TRANSLATE_Y, ROTATE, DILATE, SHEAR_X, CUSTOM)
_EXACT = {TRANSLATE_X, TRANSLATE_Y}


@dataclass(frozen=True)
class Generator:
    kind: str
    custom: Optional[VectorField] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown generator kind {self.kind!r}")
        if (self.kind == CUSTOM) != (self.custom is not None):
            raise ValueError("Custom generators need exactly one vector field")

    @property
    def approximate_symmetry(self) -> bool:
        # rotations, dilations and shears are not isometries of the torus
        return self.kind not in _EXACT


@dataclass(frozen=True)
class GeneratorBasis:
    generators: tuple

    def __post_init__(self):
        gens = tuple(Generator(g) if isinstance(g, str) else g for g in self.generators)
        if not gens:
            raise ValueError("a generator basis needs at least one generator")
        grids = {g.custom.grid for g in gens if g.custom is not None}
        if len(grids) > 1:
            raise ValueError("custom generators live on different grids")
        object.__setattr__(self, "generators", gens)

    @classmethod
    def of(cls, *kinds) -> "GeneratorBasis":
        return cls(tuple(kinds))

    @classmethod
    def translations(cls) -> "GeneratorBasis":
        return cls((TRANSLATE_X, TRANSLATE_Y))

    def __len__(self):
        return len(self.generators)

    def __iter__(self):
        return iter(self.generators)

    def fields(self, grid: Grid) -> list[VectorField]:
        return [generator_field(g, grid) for g in self.generators]


@dataclass(frozen=True)
class FlowConfig:
    t: float = 1.0
    substeps: int = 8

    def __post_init__(self):
        if int(self.substeps) != self.substeps or self.substeps < 1:
            raise ValueError("substeps must be a positive integer")
        if not np.isfinite(self.t):
            raise ValueError("flow time must be finite")


def generator_field(g: Generator, grid: Grid) -> VectorField:
    x, y = grid.coords()
    zero = np.zeros(grid.shape)
    one = np.ones(grid.shape)
    if g.kind == TRANSLATE_X:
        return VectorField(grid, one, zero)
    if g.kind == TRANSLATE_Y:
        return VectorField(grid, zero, one)
    if g.kind == ROTATE:
        return VectorField(grid, -(y - 0.5), x - 0.5)
    if g.kind == DILATE:
        return VectorField(grid, x - 0.5, y - 0.5)
    if g.kind == SHEAR_X:
        return VectorField(grid, y - 0.5, zero)
    if g.custom.grid != grid:
        raise ValueError("custom generator is defined on another grid")
    return g.custom


def _basis_arrays(basis: GeneratorBasis, grid: Grid) -> np.ndarray:
    """Generator fields stacked as ``(d, 2, ny, nx)``."""
    return np.stack([np.stack([X.ux, X.uy]) for X in basis.fields(grid)])


def assemble(basis: GeneratorBasis, phi: MultiField) -> VectorField:
    """Pointwise ``A_phi(x) = sum_i phi_i(x) X_i(x)``."""
    if phi.channels != len(basis):
        raise ValueError(f"control field has {phi.channels} channels, basis has {len(basis)}")
    X = _basis_arrays(basis, phi.grid)
    u = np.einsum("dyx,dcyx->cyx", phi.data, X)
    return VectorField(phi.grid, u[0], u[1])


def orbit_direction(S: ScalarField, g: Generator) -> ScalarField:
    """``e = -(X . grad S)``; the pullback warp linearizes to ``S + t e``."""
    X = generator_field(g, S.grid)
    dS = grad(S)
    return ScalarField(S.grid, -(X.ux * dS.ux + X.uy * dS.uy))


def orbit_directions(S: ScalarField, basis: GeneratorBasis) -> list[ScalarField]:
    return [orbit_direction(S, g) for g in basis]


def linearized_residual(S: ScalarField, basis: GeneratorBasis, phi: MultiField) -> ScalarField:
    if phi.grid != S.grid:
        raise ValueError("signal and control field are on different grids")
    es = orbit_directions(S, basis)
    if phi.channels != len(es):
        raise ValueError("channel count does not match basis size")
    return ScalarField(S.grid, np.einsum("dyx,dyx->yx", phi.data, np.stack([e.values for e in es])))


# --- periodic Catmull-Rom sampling (index coordinates) ---

_OFFSETS = np.arange(-1, 3)


def _cr_weights(s):
    """Catmull-Rom tap weights for taps at offsets -1..2 and their derivatives in ``s``."""
    w = np.empty((4,) + s.shape)
    dw = np.empty((4,) + s.shape)
    w[0] = 0.5 * s * (-1.0 + s * (2.0 - s))
    w[1] = 1.0 + s * s * (-2.5 + 1.5 * s)
    w[2] = 0.5 * s * (1.0 + s * (4.0 - 3.0 * s))
    w[3] = 0.5 * s * s * (s - 1.0)
    dw[0] = -0.5 + s * (2.0 - 1.5 * s)
    dw[1] = s * (-5.0 + 4.5 * s)
    dw[2] = 0.5 + s * (4.0 - 4.5 * s)
    dw[3] = s * (1.5 * s - 1.0)
    return w, dw


class _Stencil:
    """Interpolation stencil at points ``(qx, qy)`` given in index units."""

    __slots__ = ("idx", "w", "gx", "gy")

    def __init__(self, qx, qy, nx, ny):
        q = np.stack([qx, qy])
        base = np.floor(q)
        w, dw = _cr_weights(q - base)
        wx, wy, dwx, dwy = w[:, 0], w[:, 1], dw[:, 0], dw[:, 1]
        b = base.astype(np.int64)
        off = _OFFSETS.reshape(4, *([1] * qx.ndim))
        cols = (b[0][None] + off) % nx
        rows = (b[1][None] + off) % ny
        self.idx = rows[:, None] * nx + cols[None, :]  # (4, 4, ...)
        self.w = wy[:, None] * wx[None, :]
        self.gx = wy[:, None] * dwx[None, :]
        self.gy = dwy[:, None] * wx[None, :]

    def gather(self, arr):
        return arr.ravel()[self.idx]

    def value(self, vals):
        return np.sum(self.w * vals, axis=(0, 1))

    def value_and_grad(self, vals):
        return (np.sum(self.w * vals, axis=(0, 1)), np.sum(self.gx * vals, axis=(0, 1)),
                np.sum(self.gy * vals, axis=(0, 1)))

    def scatter(self, upstream, size):
        return np.bincount(self.idx.ravel(), weights=(self.w * upstream[None, None]).ravel(),
                           minlength=size)


def sample_periodic(arr: np.ndarray, qx, qy) -> np.ndarray:
    """Catmull-Rom value of a ``(ny, nx)`` array at index-space points."""
    ny, nx = arr.shape
    st = _Stencil(np.asarray(qx, float), np.asarray(qy, float), nx, ny)
    return st.value(st.gather(arr))


def _velocity(st, Wx, Wy, jac=True):
    if not jac:
        return st.value(st.gather(Wx)), st.value(st.gather(Wy)), None
    vx, gxx, gxy = st.value_and_grad(st.gather(Wx))
    vy, gyx, gyy = st.value_and_grad(st.gather(Wy))
    return vx, vy, (gxx, gxy, gyx, gyy)


def _index_velocity(X: VectorField, t: float):
    g = X.grid
    return t * X.ux / g.hx, t * X.uy / g.hy


def characteristic_feet(X: VectorField, cfg: FlowConfig, keep: bool = False):
    """Feet of the backward characteristics from every node, in index units.

    Integrates ``dq/ds = -W(q)`` over unit time where ``W = t * X`` (index
    units), with ``cfg.substeps`` RK4 steps.  Positions are not wrapped.
    With ``keep=True`` the stage positions are returned for the adjoint.
    """
    g = X.grid
    Wx, Wy = _index_velocity(X, cfg.t)
    qy, qx = np.meshgrid(np.arange(g.ny, dtype=float), np.arange(g.nx, dtype=float), indexing="ij")
    dt = 1.0 / cfg.substeps
    stages = []
    for _ in range(cfg.substeps):
        x0, y0 = qx, qy
        st0 = _Stencil(x0, y0, g.nx, g.ny)
        k1x, k1y, j1 = _velocity(st0, Wx, Wy, keep)
        x1, y1 = x0 - 0.5 * dt * k1x, y0 - 0.5 * dt * k1y
        st1 = _Stencil(x1, y1, g.nx, g.ny)
        k2x, k2y, j2 = _velocity(st1, Wx, Wy, keep)
        x2, y2 = x0 - 0.5 * dt * k2x, y0 - 0.5 * dt * k2y
        st2 = _Stencil(x2, y2, g.nx, g.ny)
        k3x, k3y, j3 = _velocity(st2, Wx, Wy, keep)
        x3, y3 = x0 - dt * k3x, y0 - dt * k3y
        st3 = _Stencil(x3, y3, g.nx, g.ny)
        k4x, k4y, j4 = _velocity(st3, Wx, Wy, keep)
        qx = x0 - dt / 6.0 * (k1x + 2 * k2x + 2 * k3x + k4x)
        qy = y0 - dt / 6.0 * (k1y + 2 * k2y + 2 * k3y + k4y)
        if keep:
            stages.append(((st0, j1), (st1, j2), (st2, j3), (st3, j4)))
    if keep:
        return qx, qy, stages
    return qx, qy


def _is_identity(X: VectorField, t: float) -> bool:
    return t == 0 or (not np.any(X.ux) and not np.any(X.uy))


def warp(S: ScalarField, X: VectorField, cfg: FlowConfig) -> ScalarField:
    """Pullback ``exp(t X) . S``, i.e. ``S`` sampled at the backward feet."""
    if S.grid != X.grid:
        raise ValueError("signal and vector field are on different grids")
    if not (np.all(np.isfinite(X.ux)) and np.all(np.isfinite(X.uy))):
        raise FloatingPointError("non-finite flow field")
    if _is_identity(X, cfg.t):
        return S
    qx, qy = characteristic_feet(X, cfg)
    return ScalarField(S.grid, sample_periodic(S.values, qx, qy))


def warp_vjp(S: ScalarField, X: VectorField, cfg: FlowConfig, upstream: np.ndarray):
    """Reverse-mode derivative of ``sum(upstream * warp(S, X, cfg))``.

    Returns ``(warped, dux, duy, dt)``: the warped signal, the derivative with
    respect to the nodal values of ``X`` (plain Euclidean, per node) and with
    respect to the flow time.
    """
    g = X.grid
    size = g.size
    Wx, Wy = _index_velocity(X, cfg.t)
    qx, qy, stages = characteristic_feet(X, cfg, keep=True)
    stS = _Stencil(qx, qy, g.nx, g.ny)
    val, sgx, sgy = stS.value_and_grad(stS.gather(S.values))
    up = np.asarray(upstream, float).reshape(g.shape)
    bx, by = up * sgx, up * sgy
    Wbx = np.zeros(size)
    Wby = np.zeros(size)
    dt = 1.0 / cfg.substeps

    def through_velocity(stage, kbx, kby):
        # k = -V(q): adjoint into W (scatter) and into q (transpose Jacobian)
        nonlocal Wbx, Wby
        st, (gxx, gxy, gyx, gyy) = stage
        Wbx -= st.scatter(kbx, size)
        Wby -= st.scatter(kby, size)
        return -(gxx * kbx + gyx * kby), -(gxy * kbx + gyy * kby)

    for s0, s1, s2, s3 in reversed(stages):
        b0x, b0y = bx.copy(), by.copy()
        k1bx, k1by = dt / 6 * bx, dt / 6 * by
        k2bx, k2by = dt / 3 * bx, dt / 3 * by
        k3bx, k3by = dt / 3 * bx, dt / 3 * by
        k4bx, k4by = dt / 6 * bx, dt / 6 * by
        y3x, y3y = through_velocity(s3, k4bx, k4by)
        b0x += y3x
        b0y += y3y
        k3bx += dt * y3x
        k3by += dt * y3y
        y2x, y2y = through_velocity(s2, k3bx, k3by)
        b0x += y2x
        b0y += y2y
        k2bx += 0.5 * dt * y2x
        k2by += 0.5 * dt * y2y
        y1x, y1y = through_velocity(s1, k2bx, k2by)
        b0x += y1x
        b0y += y1y
        k1bx += 0.5 * dt * y1x
        k1by += 0.5 * dt * y1y
        y0x, y0y = through_velocity(s0, k1bx, k1by)
        bx, by = b0x + y0x, b0y + y0y

    Wbx = Wbx.reshape(g.shape)
    Wby = Wby.reshape(g.shape)
    dux = Wbx * cfg.t / g.hx
    duy = Wby * cfg.t / g.hy
    dtime = float(np.sum(Wbx * X.ux / g.hx + Wby * X.uy / g.hy))
    return ScalarField(g, val), dux, duy, dtime


def basis_pullback(basis: GeneratorBasis, grid: Grid, dux: np.ndarray, duy: np.ndarray) -> np.ndarray:
    """Chain a derivative w.r.t. ``A_phi`` nodal values to the control channels."""
    X = _basis_arrays(basis, grid)
    return X[:, 0] * dux[None] + X[:, 1] * duy[None]
