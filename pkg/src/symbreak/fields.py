"""Periodic grid fields on the flat unit torus and their discrete L2 calculus.

Arrays are stored as ``(ny, nx)`` (row index = y, column index = x), so the
row-major flattening has length ``nx * ny``.  Node ``(i, j)`` sits at
``(i * hx, j * hy)``.  Every field is immutable once built.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np


class GridMismatchError(ValueError):
    """Raised when two fields live on different grids."""


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=np.float64, copy=True)
    if not np.all(np.isfinite(arr)):
        raise ValueError("field values must be finite")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Grid:
    nx: int
    ny: int

    def __post_init__(self):
        if int(self.nx) != self.nx or int(self.ny) != self.ny:
            raise ValueError("grid sizes must be integers")
        if self.nx < 4 or self.ny < 4:
            raise ValueError(f"grid must be at least 4x4, got {self.nx}x{self.ny}")

    @property
    def hx(self) -> float:
        return 1.0 / self.nx

    @property
    def hy(self) -> float:
        return 1.0 / self.ny

    @property
    def mu(self) -> float:
        """Cell measure; the cells sum to exactly one."""
        return 1.0 / (self.nx * self.ny)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.ny, self.nx)

    @property
    def size(self) -> int:
        return self.nx * self.ny

    def coords(self) -> tuple[np.ndarray, np.ndarray]:
        """Node coordinates ``(x, y)`` as two ``(ny, nx)`` arrays."""
        x = np.arange(self.nx) * self.hx
        y = np.arange(self.ny) * self.hy
        return np.meshgrid(x, y)


def _check(a, b):
    if a.grid != b.grid:
        raise GridMismatchError(f"grids differ: {a.grid} vs {b.grid}")


class _Arith:
    """Pointwise arithmetic shared by the field classes."""

    def _data(self) -> np.ndarray:
        raise NotImplementedError

    def _new(self, data: np.ndarray):
        raise NotImplementedError

    def _binary(self, other, op):
        if isinstance(other, _Arith):
            _check(self, other)
            if type(other) is not type(self):
                raise TypeError(f"cannot combine {type(self).__name__} and {type(other).__name__}")
            return self._new(op(self._data(), other._data()))
        return self._new(op(self._data(), float(other)))

    def __add__(self, other):
        return self._binary(other, np.add)

    def __sub__(self, other):
        return self._binary(other, np.subtract)

    def __mul__(self, other):
        return self._binary(other, np.multiply)

    __rmul__ = __mul__
    __radd__ = __add__

    def __truediv__(self, other):
        return self._new(self._data() / float(other))

    def __neg__(self):
        return self._new(-self._data())


@dataclass(frozen=True, eq=False)
class ScalarField(_Arith):
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        vals = _frozen(self.values)
        if vals.shape != self.grid.shape:
            vals = _frozen(vals.reshape(self.grid.shape))
        object.__setattr__(self, "values", vals)

    def _data(self):
        return self.values

    def _new(self, data):
        return ScalarField(self.grid, data)

    @classmethod
    def constant(cls, grid: Grid, c: float = 0.0) -> "ScalarField":
        return cls(grid, np.full(grid.shape, float(c)))

    @classmethod
    def from_function(cls, grid: Grid, fn) -> "ScalarField":
        x, y = grid.coords()
        return cls(grid, np.broadcast_to(fn(x, y), grid.shape))


@dataclass(frozen=True, eq=False)
class VectorField(_Arith):
    grid: Grid
    ux: np.ndarray
    uy: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "ux", _frozen(np.broadcast_to(self.ux, self.grid.shape)))
        object.__setattr__(self, "uy", _frozen(np.broadcast_to(self.uy, self.grid.shape)))

    def _data(self):
        return np.stack([self.ux, self.uy])

    def _new(self, data):
        return VectorField(self.grid, data[0], data[1])

    @classmethod
    def zeros(cls, grid: Grid) -> "VectorField":
        z = np.zeros(grid.shape)
        return cls(grid, z, z)


@dataclass(frozen=True, eq=False)
class MultiField(_Arith):
    """A d-channel real field; ``data`` has shape ``(d, ny, nx)``."""

    grid: Grid
    data: np.ndarray

    def __post_init__(self):
        arr = _frozen(self.data)
        if arr.ndim == 2:
            arr = _frozen(arr[None])
        if arr.shape[1:] != self.grid.shape:
            arr = _frozen(arr.reshape((-1,) + self.grid.shape))
        if arr.shape[0] < 1:
            raise ValueError("MultiField needs at least one channel")
        object.__setattr__(self, "data", arr)

    def _data(self):
        return self.data

    def _new(self, data):
        return MultiField(self.grid, data)

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    def channel(self, i: int) -> ScalarField:
        return ScalarField(self.grid, self.data[i])

    def sq_magnitude(self) -> np.ndarray:
        """Pointwise channel-sum of squares ``|phi|^2``."""
        return np.sum(self.data**2, axis=0)

    @classmethod
    def zeros(cls, grid: Grid, d: int) -> "MultiField":
        return cls(grid, np.zeros((d,) + grid.shape))

    @classmethod
    def constant(cls, grid: Grid, c) -> "MultiField":
        c = np.asarray(c, dtype=float).reshape(-1, 1, 1)
        return cls(grid, np.broadcast_to(c, (c.shape[0],) + grid.shape))


AnyField = Union[ScalarField, VectorField, MultiField]


def inner_product(f: AnyField, g: AnyField) -> float:
    """Discrete L2 inner product ``sum f*g*mu`` (summed over channels/components)."""
    _check(f, g)
    if type(f) is not type(g):
        raise TypeError("inner product needs two fields of the same kind")
    return float(np.sum(f._data() * g._data()) * f.grid.mu)


def norm(f: AnyField) -> float:
    return float(np.sqrt(max(inner_product(f, f), 0.0)))


def integrate(f: ScalarField) -> float:
    return float(np.sum(f.values) * f.grid.mu)


def shift(f, kx: int, ky: int):
    """Circular shift by whole cells: ``shift(f)(x) = f(x - k)``."""
    roll = lambda a: np.roll(a, (ky, kx), axis=(-2, -1))
    if isinstance(f, ScalarField):
        return ScalarField(f.grid, roll(f.values))
    if isinstance(f, VectorField):
        return VectorField(f.grid, roll(f.ux), roll(f.uy))
    return MultiField(f.grid, roll(f.data))


# --- difference operators on raw arrays (last two axes are y, x) ---

def _dx_central(a: np.ndarray, h: float) -> np.ndarray:
    return (np.roll(a, -1, axis=-1) - np.roll(a, 1, axis=-1)) / (2.0 * h)


def _dy_central(a: np.ndarray, h: float) -> np.ndarray:
    return (np.roll(a, -1, axis=-2) - np.roll(a, 1, axis=-2)) / (2.0 * h)


def _laplacian_array(a: np.ndarray, hx: float, hy: float) -> np.ndarray:
    # nonnegative convention: returns -(d_xx + d_yy) a
    lxx = (np.roll(a, -1, axis=-1) - 2.0 * a + np.roll(a, 1, axis=-1)) / hx**2
    lyy = (np.roll(a, -1, axis=-2) - 2.0 * a + np.roll(a, 1, axis=-2)) / hy**2
    return -(lxx + lyy)


def _forward_sq_sum(a: np.ndarray, hx: float, hy: float) -> float:
    dx = (np.roll(a, -1, axis=-1) - a) / hx
    dy = (np.roll(a, -1, axis=-2) - a) / hy
    return float(np.sum(dx * dx) + np.sum(dy * dy))


def grad(f: ScalarField) -> VectorField:
    """Central-difference gradient with periodic wrap."""
    g = f.grid
    return VectorField(g, _dx_central(f.values, g.hx), _dy_central(f.values, g.hy))


def grad_forward(f: ScalarField) -> VectorField:
    """Forward-difference gradient, the exact adjoint partner of :func:`laplacian`.

    ``inner_product(grad_forward(f), grad_forward(g)) == inner_product(laplacian(f), g)``
    holds to roundoff on the torus.
    """
    g = f.grid
    a = f.values
    return VectorField(g, (np.roll(a, -1, axis=1) - a) / g.hx, (np.roll(a, -1, axis=0) - a) / g.hy)


def laplacian(f: ScalarField) -> ScalarField:
    """5-point periodic Laplacian, sign convention ``-div grad`` (nonnegative)."""
    g = f.grid
    return ScalarField(g, _laplacian_array(f.values, g.hx, g.hy))


def divergence(u: VectorField) -> ScalarField:
    g = u.grid
    return ScalarField(g, _dx_central(u.ux, g.hx) + _dy_central(u.uy, g.hy))


def kinetic(phi: MultiField) -> float:
    """Dirichlet energy ``||grad phi||^2`` summed over channels (forward differences)."""
    g = phi.grid
    return _forward_sq_sum(phi.data, g.hx, g.hy) * g.mu


# --- I/O ---

def _as_channels(f: AnyField) -> np.ndarray:
    if isinstance(f, ScalarField):
        return f.values[None]
    return f._data()


def encode_field(f: AnyField) -> tuple[bytes, str]:
    """Raw little-endian float64 bytes (row-major, channel-major) and the sidecar JSON."""
    data = _as_channels(f)
    meta = {"nx": f.grid.nx, "ny": f.grid.ny, "channels": int(data.shape[0]), "kind": type(f).__name__}
    return data.astype("<f8").tobytes(), json.dumps(meta, sort_keys=True)


def save_field(f: AnyField, path) -> None:
    """Write :func:`encode_field` output to ``path`` and ``path.json``."""
    path = Path(path)
    raw, meta = encode_field(f)
    path.write_bytes(raw)
    path.with_suffix(path.suffix + ".json").write_text(meta)


def load_field(path) -> AnyField:
    path = Path(path)
    meta = json.loads(path.with_suffix(path.suffix + ".json").read_text())
    grid = Grid(int(meta["nx"]), int(meta["ny"]))
    c = int(meta["channels"])
    raw = np.fromfile(path, dtype="<f8")
    if raw.size != c * grid.size:
        raise ValueError(f"{path}: expected {c * grid.size} values, found {raw.size}")
    data = raw.reshape((c,) + grid.shape)
    kind = meta.get("kind")
    if kind == "VectorField" or (kind is None and c == 2):
        return VectorField(grid, data[0], data[1])
    if kind == "ScalarField" or (kind is None and c == 1):
        return ScalarField(grid, data[0])
    return MultiField(grid, data)


def to_csv(f: AnyField, path) -> None:
    """One row per cell: ``i, j, x, y, c0, c1, ...``."""
    data = _as_channels(f)
    g = f.grid
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["i", "j", "x", "y"] + [f"c{k}" for k in range(data.shape[0])])
        for j in range(g.ny):
            for i in range(g.nx):
                w.writerow([i, j, repr(i * g.hx), repr(j * g.hy)] + [repr(float(v)) for v in data[:, j, i]])


def from_csv(path, nx: int, ny: int) -> AnyField:
    grid = Grid(nx, ny)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    c = len(header) - 4
    data = np.zeros((c,) + grid.shape)
    for row in body:
        i, j = int(row[0]), int(row[1])
        data[:, j, i] = [float(v) for v in row[4:]]
    if c == 1:
        return ScalarField(grid, data[0])
    if c == 2:
        return VectorField(grid, data[0], data[1])
    return MultiField(grid, data)
