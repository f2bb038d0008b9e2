"""Adaptive-moment descent with step halving, the constant-field probe and the sign test."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .energy import EnergyConfig, GaugeProblem, WeakConfig, WeakProblem
from .fields import Grid, MultiField, ScalarField, norm
from .lieflow import GeneratorBasis

MAX_HALVINGS = 20


class NumericalError(FloatingPointError):
    pass


@dataclass(frozen=True)
class OptConfig:
    step: float = 0.05
    max_iters: int = 500
    grad_tol: float = 1e-6
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-12
    seed: int = 0

    def __post_init__(self):
        if not self.step > 0:
            raise ValueError("step must be > 0")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")


@dataclass
class Trace:
    energies: list = field(default_factory=list)
    grad_norms: list = field(default_factory=list)
    iterations: int = 0
    converged: bool = False
    final_grad_norm: float = float("nan")
    halvings: int = 0

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iter", "energy", "grad_norm"])
            for k, (e, g) in enumerate(zip(self.energies, self.grad_norms)):
                w.writerow([k, repr(float(e)), repr(float(g))])


def seed_field(grid: Grid, d: int, v: float, rng: np.random.Generator) -> MultiField:
    """Uniform noise of amplitude ``0.1 v``; moves descent off the phi = 0 critical point."""
    return MultiField(grid, 0.1 * v * rng.uniform(-1.0, 1.0, size=(d,) + grid.shape))


def adam_descent(fun: Callable, grad: Callable, x0: np.ndarray, ocfg: OptConfig,
                 weights: Optional[np.ndarray] = None, callback: Optional[Callable] = None,
                 precondition: Optional[Callable] = None):
    """Minimize ``fun`` from ``x0``; returns ``(x_best, trace)``.

    Each iteration tries twice the last accepted step (capped at ``ocfg.step``)
    and halves it, up to 20 times, until the energy does not increase.  The moment estimates are fed
    ``precondition(g)`` when given; the stopping test always uses the raw
    gradient, measured in the metric ``weights``.
    """
    pre = (lambda g: g) if precondition is None else precondition
    x = np.array(x0, dtype=float)
    w = np.ones_like(x) if weights is None else weights
    E = fun(x)
    if not np.isfinite(E):
        raise NumericalError(f"non-finite initial energy {E!r}")
    g = grad(x)
    gnorm = float(np.sqrt(np.sum(w * g * g)))
    g0 = gnorm
    trace = Trace(energies=[E], grad_norms=[gnorm])
    m = np.zeros_like(x)
    v = np.zeros_like(x)
    lr = ocfg.step
    if g0 == 0.0:
        trace.converged = True
        trace.final_grad_norm = 0.0
        return x, trace
    for k in range(1, ocfg.max_iters + 1):
        if not np.all(np.isfinite(g)):
            raise NumericalError(f"non-finite gradient at iteration {k}")
        pg = pre(g)
        m = ocfg.beta1 * m + (1 - ocfg.beta1) * pg
        v = ocfg.beta2 * v + (1 - ocfg.beta2) * pg * pg
        direction = (m / (1 - ocfg.beta1**k)) / (np.sqrt(v / (1 - ocfg.beta2**k)) + ocfg.eps)
        accepted = False
        lr = min(ocfg.step, 2.0 * lr)
        for _ in range(MAX_HALVINGS + 1):
            cand = x - lr * direction
            Ec = fun(cand)
            if np.isfinite(Ec) and Ec <= E:
                accepted = True
                break
            lr *= 0.5
            trace.halvings += 1
        trace.iterations = k
        if not accepted:
            # no decrease along the moment direction; restart the moments
            m[:] = 0.0
            v[:] = 0.0
            lr = ocfg.step
            trace.energies.append(E)
            trace.grad_norms.append(gnorm)
            continue
        x, E = cand, Ec
        g = grad(x)
        gnorm = float(np.sqrt(np.sum(w * g * g)))
        trace.energies.append(E)
        trace.grad_norms.append(gnorm)
        if callback is not None:
            callback(k, x)
        if gnorm <= ocfg.grad_tol * g0:
            trace.converged = True
            break
    trace.final_grad_norm = gnorm
    return x, trace


def sobolev_preconditioner(grid: Grid, alpha: float) -> Callable:
    """``g -> (1 + 2 alpha L)^-1 g`` with ``L`` the 5-point Laplacian, applied by FFT.

    Removes the stiffness of the kinetic term so that the slow constant mode
    of the control field is not starved by high-frequency oscillation.
    """
    kx = np.fft.fftfreq(grid.nx)
    ky = np.fft.fftfreq(grid.ny)
    sym = (4 * np.sin(np.pi * kx)[None, :] ** 2 / grid.hx**2
           + 4 * np.sin(np.pi * ky)[:, None] ** 2 / grid.hy**2)
    denom = 1.0 + 2.0 * alpha * sym

    def apply(g):
        return np.real(np.fft.ifft2(np.fft.fft2(g, axes=(-2, -1)) / denom, axes=(-2, -1)))

    return apply


def minimize(S: ScalarField, basis: GeneratorBasis, phi0: MultiField, cfg: EnergyConfig,
             ocfg: OptConfig = OptConfig()) -> tuple[MultiField, Trace]:
    prob = GaugeProblem(S, basis, cfg)
    mu = S.grid.mu
    x, trace = adam_descent(prob.energy, prob.gradient, phi0.data, ocfg,
                            weights=np.full(phi0.data.shape, mu),
                            precondition=sobolev_preconditioner(S.grid, cfg.alpha))
    return MultiField(S.grid, x), trace


@dataclass
class WeakResult:
    a: float
    phi: MultiField
    trace: Trace
    nr: float        # <nhat, r>
    tangent: float   # ||P r||
    rnorm: float     # ||r||
    r: ScalarField


def minimize_weak(S: ScalarField, basis: GeneratorBasis, a0: float, phi0: MultiField,
                  cfg: EnergyConfig, wcfg: WeakConfig, ocfg: OptConfig = OptConfig(),
                  callback: Optional[Callable] = None) -> WeakResult:
    """Joint descent over ``(a, phi)`` on the weakly coupled energy.

    ``callback(k, a, phi, r)`` sees every accepted iterate with its residual.
    """
    prob = WeakProblem(S, basis, cfg, wcfg)
    shape = phi0.data.shape
    mu = S.grid.mu

    def unpack(x):
        return x[0], x[1:].reshape(shape)

    def fun(x):
        a, p = unpack(x)
        return prob.energy(a, p)

    def grad(x):
        a, p = unpack(x)
        da, dp = prob.gradient(a, p)
        return np.concatenate([[da], dp.ravel()])

    weights = np.concatenate([[1.0], np.full(phi0.data.size, mu)])
    smooth = sobolev_preconditioner(S.grid, cfg.alpha)

    def precondition(g):
        return np.concatenate([g[:1], smooth(g[1:].reshape(shape)).ravel()])

    cb = None
    if callback is not None:
        cb = lambda k, x: callback(k, *unpack(x), prob.last_residual)
    x0 = np.concatenate([[float(a0)], phi0.data.ravel()])
    x, trace = adam_descent(fun, grad, x0, ocfg, weights=weights, callback=cb,
                            precondition=precondition)
    a, p = unpack(x)
    r = prob.coupled_residual(a, p)
    r_field = ScalarField(S.grid, r)
    return WeakResult(
        a=float(a),
        phi=MultiField(S.grid, p),
        trace=trace,
        nr=float(np.sum(wcfg.nhat.values * r) * mu),
        tangent=norm(ScalarField(S.grid, prob.geom.project_array(r))),
        rnorm=norm(r_field),
        r=r_field,
    )


@dataclass
class ProbeResult:
    value: float
    hypothesis_failure: Optional[str]  # None, "stabilizer" or "constant_field"
    constants: np.ndarray


def _constant_field_test(E: np.ndarray, mask: Optional[np.ndarray], tol: float = 1e-8) -> bool:
    pts = E.reshape(E.shape[0], -1).T
    if mask is not None:
        pts = pts[np.asarray(mask, bool).ravel()]
    mags = np.linalg.norm(pts, axis=1)
    scale = mags.max() if mags.size else 0.0
    if scale == 0.0:
        return True
    if mags.max() - mags.min() > tol * scale:
        return False
    dirs = pts / mags[:, None]
    return bool(np.max(np.abs(dirs - dirs[0])) <= tol)


def constant_probe(S: ScalarField, basis: GeneratorBasis, cfg: EnergyConfig, samples: int,
                   rng: np.random.Generator, mask: Optional[np.ndarray] = None) -> ProbeResult:
    """Smallest gradient norm over constant fields with ``|c| = v``.

    For a generic signal this floor is positive (no nonzero constant critical
    point).  ``hypothesis_failure`` names the degenerate case when the orbit
    map has a kernel (``"stabilizer"``) or ``e(x)`` has constant direction and
    magnitude on ``mask`` (``"constant_field"``).
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    prob = GaugeProblem(S, basis, cfg)
    d = prob.d
    c = rng.standard_normal((samples, d))
    c = cfg.v * c / np.linalg.norm(c, axis=1, keepdims=True)
    best = np.inf
    for ck in c:
        phi = np.broadcast_to(ck.reshape(d, 1, 1), (d,) + S.grid.shape)
        gk = prob.gradient(np.array(phi))
        best = min(best, float(np.sqrt(np.sum(gk * gk) * S.grid.mu)))
    flag = None
    if prob.gram.rank < d:
        flag = "stabilizer"
    elif _constant_field_test(prob.E, mask):
        flag = "constant_field"
    return ProbeResult(best, flag, c)


def sign_test(S: ScalarField, h: ScalarField, t: float, cost: Callable[[ScalarField], float]):
    """Compare ``cost`` at ``S``, ``S + t h`` and ``S - t h``.

    Returns ``(choice, cost)`` with ``choice`` in ``{0, +1, -1}``; ties go to
    0 (no deformation) and then to +1.
    """
    if not t > 0:
        raise ValueError("t must be > 0")
    c0 = cost(S)
    cp = cost(S + h * t)
    cm = cost(S - h * t)
    best, val = 0, c0
    if cp < val:
        best, val = 1, cp
    if cm < val:
        best, val = -1, cm
    return best, val
