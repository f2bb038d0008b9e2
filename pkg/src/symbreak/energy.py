"""Gauge energy (data variants a/b), the weakly coupled energy and their gradients.

Gradients are L2 gradients: ``inner_product(grad, dphi)`` is the directional
derivative.  Linearized flow uses the closed-form Euler-Lagrange operator.
Nonlinear flow uses either a reverse-mode pass through the warp (default) or
plain central differences (``method="fd"``).
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .fields import (
    MultiField,
    ScalarField,
    _forward_sq_sum,
    _laplacian_array,
    norm,
)
from .lieflow import (
    FlowConfig,
    GeneratorBasis,
    assemble,
    basis_pullback,
    orbit_directions,
    warp,
    warp_vjp,
)
from .orbit import GramData, OrbitBasis, gram


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class EnergyConfig:
    alpha: float = 0.1
    beta: float = 10.0
    v: float = 0.2
    variant: str = "a"
    flow: str = "linearized"
    t: float = 1.0
    substeps: int = 8

    def __post_init__(self):
        if self.alpha < 0:
            raise ConfigError("alpha must be >= 0")
        if self.beta <= 0 or self.v <= 0:
            raise ConfigError("beta and v must be > 0")
        if self.variant not in ("a", "b"):
            raise ConfigError(f"variant must be 'a' or 'b', got {self.variant!r}")
        if self.flow not in ("linearized", "nonlinear"):
            raise ConfigError(f"flow must be 'linearized' or 'nonlinear', got {self.flow!r}")
        if self.flow == "nonlinear" and not self.t > 0:
            raise ConfigError("nonlinear flow needs t > 0")
        if int(self.substeps) != self.substeps or self.substeps < 1:
            raise ConfigError("substeps must be a positive integer")

    @property
    def flow_config(self) -> FlowConfig:
        return FlowConfig(self.t, self.substeps)


@dataclass(frozen=True, eq=False)
class WeakConfig:
    lam: float
    eta: float
    eps_star: float
    nhat: ScalarField
    a0: float = 0.0

    def __post_init__(self):
        if not self.lam > 0:
            raise ConfigError("lambda must be > 0")
        if self.eta < 0:
            raise ConfigError("eta must be >= 0")
        if abs(norm(self.nhat) - 1.0) > 1e-10:
            raise ConfigError(f"nhat must have unit L2 norm, got {norm(self.nhat)!r}")


def fd_step(phi: np.ndarray) -> float:
    return 1e-4 * (1.0 + float(np.max(np.abs(phi), initial=0.0)))


def _central_fd(fun, x: np.ndarray, h: float) -> np.ndarray:
    out = np.empty(x.size)
    flat = x.ravel().copy()
    for k in range(flat.size):
        old = flat[k]
        flat[k] = old + h
        fp = fun(flat.reshape(x.shape))
        flat[k] = old - h
        fm = fun(flat.reshape(x.shape))
        flat[k] = old
        out[k] = (fp - fm) / (2 * h)
    return out.reshape(x.shape)


class GaugeProblem:
    """A signal, a generator basis and an energy config, with cached orbit data.

    Methods take and return raw ``(d, ny, nx)`` arrays; the module-level
    functions wrap them with field types.
    """

    def __init__(self, S: ScalarField, basis: GeneratorBasis, cfg: EnergyConfig):
        self.S = S
        self.grid = S.grid
        self.basis = basis
        self.cfg = cfg
        self.orbit = OrbitBasis(orbit_directions(S, basis))
        self.E = self.orbit.stack()
        self.gram: GramData = gram(self.orbit)
        self.d = len(basis)
        self._Eflat = self.E.reshape(self.d, -1)

    def _check(self, phi):
        phi = np.asarray(phi, float)
        if phi.shape != (self.d,) + self.grid.shape:
            raise ValueError(f"control field shape {phi.shape} does not match basis/grid")
        return phi

    def field(self, phi) -> MultiField:
        return MultiField(self.grid, phi)

    def project_array(self, r: np.ndarray) -> np.ndarray:
        b = self._Eflat @ r.ravel() * self.grid.mu
        return ((self.gram.Gplus @ b) @ self._Eflat).reshape(self.grid.shape)

    def residual(self, phi) -> np.ndarray:
        phi = self._check(phi)
        if self.cfg.flow == "linearized":
            return np.einsum("dyx,dyx->yx", phi, self.E)
        A = assemble(self.basis, self.field(phi))
        return warp(self.S, A, self.cfg.flow_config).values - self.S.values

    def data_term(self, r: np.ndarray) -> float:
        mu = self.grid.mu
        if self.cfg.variant == "a":
            return float(np.sum(r * r) * mu)
        b = self._Eflat @ r.ravel() * mu
        return float(b @ self.gram.Gplus @ b)

    def regularizer(self, phi) -> float:
        g = self.grid
        well = np.sum(phi * phi, axis=0) - self.cfg.v**2
        return (self.cfg.alpha * _forward_sq_sum(phi, g.hx, g.hy) * g.mu
                + self.cfg.beta * float(np.sum(well * well)) * g.mu)

    def energy(self, phi) -> float:
        phi = self._check(phi)
        return self.data_term(self.residual(phi)) + self.regularizer(phi)

    def regularizer_gradient(self, phi) -> np.ndarray:
        g = self.grid
        well = np.sum(phi * phi, axis=0) - self.cfg.v**2
        return 2 * self.cfg.alpha * _laplacian_array(phi, g.hx, g.hy) + 4 * self.cfg.beta * well[None] * phi

    def data_gradient_wrt_r(self, r) -> np.ndarray:
        """L2 gradient of the data term with respect to the residual."""
        return 2 * r if self.cfg.variant == "a" else 2 * self.project_array(r)

    def gradient(self, phi, method: str = "adjoint") -> np.ndarray:
        phi = self._check(phi)
        if self.cfg.flow == "linearized":
            r = self.residual(phi)
            return self.E * self.data_gradient_wrt_r(r)[None] + self.regularizer_gradient(phi)
        if method == "fd":
            return _central_fd(self.energy, phi, fd_step(phi)) / self.grid.mu
        if method != "adjoint":
            raise ValueError(f"unknown gradient method {method!r}")
        mu = self.grid.mu
        A = assemble(self.basis, self.field(phi))
        r = warp(self.S, A, self.cfg.flow_config).values - self.S.values
        up = self.data_gradient_wrt_r(r) * mu
        _, dux, duy, _ = warp_vjp(self.S, A, self.cfg.flow_config, up)
        data = basis_pullback(self.basis, self.grid, dux, duy) / mu
        return data + self.regularizer_gradient(phi)

    def constraint_residual(self, phi) -> np.ndarray:
        phi = self._check(phi)
        mu = self.grid.mu
        r = self.residual(phi)
        well = np.sum(phi * phi, axis=0) - self.cfg.v**2
        return (self._Eflat @ r.ravel() + 2 * self.cfg.beta * (phi.reshape(self.d, -1) @ well.ravel())) * mu


class WeakProblem:
    """Weakly coupled energy over the scalar gain ``a`` and the control field."""

    def __init__(self, S: ScalarField, basis: GeneratorBasis, cfg: EnergyConfig, wcfg: WeakConfig):
        if wcfg.nhat.grid != S.grid:
            raise ConfigError("nhat is on another grid")
        self.geom = GaugeProblem(S, basis, replace(cfg, variant="b"))
        self.S = S
        self.basis = basis
        self.cfg = cfg
        self.wcfg = wcfg
        self.n = wcfg.nhat.values
        self.last_residual = None  # residual at the latest gradient evaluation

    def flow(self, a: float) -> FlowConfig:
        return FlowConfig(float(a), self.cfg.substeps)

    def coupled_residual(self, a, phi) -> np.ndarray:
        A = assemble(self.basis, MultiField(self.S.grid, phi))
        return warp(self.S, A, self.flow(a)).values - self.S.values

    def coupling(self, r) -> float:
        mu = self.S.grid.mu
        c = float(np.sum(self.n * r) * mu)
        q = float(np.sum(r * r) * mu)
        w = self.wcfg
        return w.lam * (c - w.eps_star) ** 2 + w.eta * (q - c * c)

    def energy(self, a, phi) -> float:
        phi = self.geom._check(phi)
        return self.geom.energy(phi) + self.coupling(self.coupled_residual(a, phi))

    def gradient(self, a, phi, method: str = "adjoint"):
        phi = self.geom._check(phi)
        mu = self.S.grid.mu
        if method == "fd":
            ha = 1e-4 * (1.0 + abs(a))
            da = (self.energy(a + ha, phi) - self.energy(a - ha, phi)) / (2 * ha)
            dphi = _central_fd(lambda p: self.energy(a, p), phi, fd_step(phi)) / mu
            return da, dphi
        w = self.wcfg
        A = assemble(self.basis, MultiField(self.S.grid, phi))
        r = warp(self.S, A, self.flow(a)).values - self.S.values
        self.last_residual = r
        c = float(np.sum(self.n * r) * mu)
        up = (2 * w.lam * (c - w.eps_star) * self.n + w.eta * (2 * r - 2 * c * self.n)) * mu
        _, dux, duy, da = warp_vjp(self.S, A, self.flow(a), up)
        dphi = basis_pullback(self.basis, self.S.grid, dux, duy) / mu
        return da, dphi + self.geom.gradient(phi)


# --- field-level API ---

def residual(S: ScalarField, basis: GeneratorBasis, phi: MultiField, cfg: EnergyConfig) -> ScalarField:
    return ScalarField(S.grid, GaugeProblem(S, basis, cfg).residual(phi.data))


def constraint_scale(S: ScalarField, basis: GeneratorBasis, cfg: EnergyConfig) -> float:
    """Natural size of either constraint term when ``|phi| = v``.

    ``max(v * max_i ||e_i||^2, 2 beta v^3)``; unlike ``||e|| ||r||`` it does not
    vanish at a trivial minimizer.
    """
    E = GaugeProblem(S, basis, cfg).E
    top = float(np.max(np.sum(E * E, axis=(1, 2)) * S.grid.mu))
    return max(cfg.v * top, 2 * cfg.beta * cfg.v**3)


def energy(S: ScalarField, basis: GeneratorBasis, phi: MultiField, cfg: EnergyConfig) -> float:
    return GaugeProblem(S, basis, cfg).energy(phi.data)


def grad_energy(S, basis, phi: MultiField, cfg: EnergyConfig, method: str = "adjoint") -> MultiField:
    return MultiField(S.grid, GaugeProblem(S, basis, cfg).gradient(phi.data, method))


def constraint_residual(S, basis, phi: MultiField, cfg: EnergyConfig) -> np.ndarray:
    """``<e_i, r> + 2 beta <|phi|^2 - v^2, phi_i>`` for each channel."""
    return GaugeProblem(S, basis, cfg).constraint_residual(phi.data)


def weak_energy(S, basis, a: float, phi: MultiField, cfg: EnergyConfig, wcfg: WeakConfig) -> float:
    return WeakProblem(S, basis, cfg, wcfg).energy(a, phi.data)


def grad_weak(S, basis, a: float, phi: MultiField, cfg: EnergyConfig, wcfg: WeakConfig,
              method: str = "adjoint") -> tuple[float, MultiField]:
    da, dphi = WeakProblem(S, basis, cfg, wcfg).gradient(a, phi.data, method)
    return da, MultiField(S.grid, dphi)
