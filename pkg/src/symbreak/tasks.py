"""Synthetic two-valued costs, their subgradients, task normals and the descent pipelines.

Each task has a Lipschitz proxy ``F`` and a two-cell cost ``W = w0`` on
``{F <= 0}`` and ``w1`` elsewhere.  Kinds:

* ``TemplateCorr``: ``F = theta - max_k <shift_k(template), S>`` over all
  cyclic integer shifts, so ``F`` is exactly translation invariant.
* ``NormBand`` and ``SmoothQuadratic``: ``F = theta - ||S||^2``.  The second
  carries the exact gradient Lipschitz constant ``L = 2`` and is the one used
  for certified runs.
* ``Linear``: ``F = theta - <weight, S>``.  Not invariant; used for
  constructed crossing experiments and to check the invariance auditor.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .energy import EnergyConfig, GaugeProblem, WeakConfig
from .fields import MultiField, ScalarField, inner_product, norm, shift
from .lieflow import GeneratorBasis
from .optimize import OptConfig, minimize, minimize_weak, seed_field, sign_test
from .orbit import GramData, OrbitBasis, gram, project

TEMPLATE_CORR = "TemplateCorr"
NORM_BAND = "NormBand"
SMOOTH_QUADRATIC = "SmoothQuadratic"
LINEAR = "Linear"
TASK_KINDS = (TEMPLATE_CORR, NORM_BAND, SMOOTH_QUADRATIC, LINEAR)

NORMAL_CUTOFF = 1e-10
TIE_RTOL = 1e-12
REACH_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class SyntheticTask:
    kind: str
    theta: float
    w0: float = 0.0
    w1: float = 1.0
    template: Optional[ScalarField] = None
    weight: Optional[ScalarField] = None
    L: Optional[float] = None

    def __post_init__(self):
        if self.kind not in TASK_KINDS:
            raise ValueError(f"unknown task kind {self.kind!r}")
        if not self.w0 < self.w1:
            raise ValueError("need w0 < w1")
        if self.kind == TEMPLATE_CORR and self.template is None:
            raise ValueError("TemplateCorr needs a template")
        if self.kind == LINEAR and self.weight is None:
            raise ValueError("Linear needs a weight field")
        if self.L is None:
            object.__setattr__(self, "L", self._default_L())

    def _default_L(self) -> float:
        if self.kind in (SMOOTH_QUADRATIC, NORM_BAND):
            return 2.0
        if self.kind == LINEAR:
            return 0.0
        # concave max of linear maps: the upper quadratic bound holds with L = 0
        return 0.0

    @property
    def exact_L(self) -> bool:
        return self.kind in (SMOOTH_QUADRATIC, LINEAR)

    def grid(self):
        f = self.template if self.template is not None else self.weight
        return None if f is None else f.grid


def _correlations(template: ScalarField, S: ScalarField) -> np.ndarray:
    # c[ky, kx] = <shift(template, kx, ky), S>
    T = np.fft.fft2(template.values)
    return np.real(np.fft.ifft2(np.conj(T) * np.fft.fft2(S.values))) * S.grid.mu


def _best_shift(task: SyntheticTask, S: ScalarField):
    c = _correlations(task.template, S)
    top = float(c.max())
    tol = TIE_RTOL * max(1.0, float(np.abs(c).max()))
    near = np.flatnonzero(c.ravel() >= top - tol)
    k = int(near[0])
    ky, kx = divmod(k, S.grid.nx)
    # exact quadrature at the winner so boundary cases are not decided by FFT roundoff
    return inner_product(shift(task.template, kx, ky), S), kx, ky, near.size > 1


def _check_grid(task: SyntheticTask, S: ScalarField):
    g = task.grid()
    if g is not None and g != S.grid:
        raise ValueError("task and signal are on different grids")


def eval_F(task: SyntheticTask, S: ScalarField) -> float:
    _check_grid(task, S)
    if task.kind == TEMPLATE_CORR:
        return task.theta - _best_shift(task, S)[0]
    if task.kind == LINEAR:
        return task.theta - inner_product(task.weight, S)
    return task.theta - inner_product(S, S)


def eval_W(task: SyntheticTask, S: ScalarField) -> float:
    return task.w0 if eval_F(task, S) <= 0 else task.w1


def clarke_subgradient(task: SyntheticTask, S: ScalarField) -> tuple[ScalarField, bool]:
    """An element of the Clarke subdifferential of ``F`` at ``S`` and a tie flag.

    For ``TemplateCorr`` it is ``-shift_k(template)`` at the best shift, the
    first in row-major order when several shifts attain the maximum.
    """
    _check_grid(task, S)
    if task.kind == TEMPLATE_CORR:
        _, kx, ky, tie = _best_shift(task, S)
        return -shift(task.template, kx, ky), tie
    if task.kind == LINEAR:
        return -task.weight, False
    return S * -2.0, False


@dataclass(frozen=True, eq=False)
class SubgradientResult:
    g: ScalarField
    g_N: ScalarField
    nhat: Optional[ScalarField]
    Delta: float
    dN: float
    eps_minus: Optional[float]

    @property
    def normal_ok(self) -> bool:
        return self.nhat is not None

    @property
    def curvature_ok(self) -> bool:
        return self.eps_minus is not None


def step_targets(gn: float, delta: float, L: float) -> tuple[float, Optional[float]]:
    """``(dN, eps_minus)`` for normal-gradient norm ``gn``, gap ``delta`` and curvature ``L``.

    ``eps_minus`` is the smaller root of ``delta - gn*eps + L*eps^2/2 = 0``
    (``None`` when ``gn^2 < 2 L delta``), written in a cancellation-free form.
    """
    if gn <= 0:
        return math.inf, None
    dN = delta / gn
    disc = gn * gn - 2.0 * L * delta
    if disc < 0:
        return dN, None
    return dN, 2.0 * delta / (gn + math.sqrt(disc))


def task_normal(g: ScalarField, basis: OrbitBasis, gd: GramData, delta: float = 0.0,
                L: float = 0.0) -> SubgradientResult:
    """Split ``g`` against the orbit, normalize the normal part, and size the step."""
    if not np.all(np.isfinite(g.values)):
        raise ValueError("subgradient is not finite")
    _, gN = project(g, basis, gd)
    gn = norm(gN)
    nhat = None
    if gn > NORMAL_CUTOFF * norm(g) and gn > 0:
        nhat = gN * (-1.0 / gn)
        dN, eps = step_targets(gn, delta, L)
    else:
        dN, eps = math.inf, None
    return SubgradientResult(g, gN, nhat, float(delta), dN, eps)


def subgradient_for(task: SyntheticTask, S: ScalarField, basis: GeneratorBasis,
                    cfg: EnergyConfig = EnergyConfig()) -> SubgradientResult:
    prob = GaugeProblem(S, basis, cfg)
    g, _ = clarke_subgradient(task, S)
    return task_normal(g, prob.orbit, prob.gram, eval_F(task, S), task.L)


LADDER = (1.0, 0.5, 0.25, 0.125, 0.0625)


@dataclass
class PureOutcome:
    crossed: bool
    t: float
    sign: int
    W_before: float
    W_after: float
    dW: float
    leakage: float
    h: ScalarField = field(repr=False)
    rungs: list = field(default_factory=list)

    def record(self) -> dict:
        return {"crossed": self.crossed, "t": self.t, "sign": self.sign, "dW": self.dW,
                "W_before": self.W_before, "W_after": self.W_after, "leakage": self.leakage}


def deformation_direction(S: ScalarField, basis: GeneratorBasis, cfg: EnergyConfig,
                          ocfg: OptConfig, phi0: Optional[MultiField] = None):
    """Minimize the variant-b energy and return the unit residual ``h`` with the trace."""
    cfg = replace(cfg, variant="b")
    if phi0 is None:
        phi0 = seed_field(S.grid, len(basis), cfg.v, np.random.default_rng(ocfg.seed))
    phi, trace = minimize(S, basis, phi0, cfg, ocfg)
    prob = GaugeProblem(S, basis, cfg)
    r = ScalarField(S.grid, prob.residual(phi.data))
    rn = norm(r)
    h = r / rn if rn > 0 else r
    tan, _ = project(h, prob.orbit, prob.gram)
    return h, norm(tan), trace


def ladder_sign_test(S: ScalarField, h: ScalarField, t_max: float, cost) -> tuple[float, int, float, list]:
    """Sign test on each rung of ``t_max * LADDER``; the lowest cost wins, ties go to the shorter step."""
    rungs = []
    best_t, best_sign, best_cost = 0.0, 0, cost(S)
    for frac in reversed(LADDER):
        t = t_max * frac
        sgn, val = sign_test(S, h, t, cost)
        rungs.append((t, sgn, val))
        if val < best_cost:
            best_t, best_sign, best_cost = t, sgn, val
    return best_t, best_sign, best_cost, rungs


def pure_descent(S: ScalarField, task: SyntheticTask, basis: GeneratorBasis, cfg: EnergyConfig,
                 ocfg: OptConfig, t_max: float, phi0: Optional[MultiField] = None,
                 h: Optional[ScalarField] = None) -> PureOutcome:
    """Deform ``S`` along the energy-minimizing residual and keep the sign/step with the lowest cost.

    ``h`` may be passed to reuse a direction computed earlier for the same signal.
    """
    if not t_max > 0:
        raise ValueError("t_max must be > 0")
    if h is None:
        h, leak, _ = deformation_direction(S, basis, cfg, ocfg, phi0)
    else:
        prob = GaugeProblem(S, basis, replace(cfg, variant="b"))
        tan, _ = project(h, prob.orbit, prob.gram)
        leak = norm(tan) / norm(h) if norm(h) > 0 else 0.0
    cost = lambda s: eval_W(task, s)
    W0 = cost(S)
    t, sgn, W1, rungs = ladder_sign_test(S, h, t_max, cost)
    return PureOutcome(W1 < W0, t, sgn, W0, W1, W1 - W0, leak, h, rungs)


@dataclass
class WeakOutcome:
    crossed: bool
    reason: Optional[str]
    F_before: float
    F_after: float
    eps_star: float
    nr: float
    penalty_residual: float   # |<nhat, r> - eps_star|
    tangent: float            # ||P r||
    rnorm: float
    a: float
    descent_slack: float      # max over iterates of F(S+r) - F(S) - <g,r> - L/2 ||r||^2
    iterations: int
    reachable: bool

    def record(self) -> dict:
        return {"crossed": self.crossed, "reason": self.reason, "F_before": self.F_before,
                "F_after": self.F_after, "eps_star": self.eps_star, "nr": self.nr,
                "penalty_residual": self.penalty_residual, "tangent": self.tangent,
                "rnorm": self.rnorm, "a": self.a, "descent_slack": self.descent_slack,
                "iterations": self.iterations, "reachable": self.reachable}


def weak_descent(S: ScalarField, task: SyntheticTask, basis: GeneratorBasis, cfg: EnergyConfig,
                 lam: float, eta: float, ocfg: OptConfig, a0: float = 0.0,
                 phi0: Optional[MultiField] = None) -> WeakOutcome:
    """Steer the residual toward ``eps_star * nhat`` with the weakly coupled energy.

    The task normal is computed once from ``S``.  ``eps_star`` is the
    curvature-safe step when it exists, else the normal distance ``dN``.
    """
    sub = subgradient_for(task, S, basis, cfg)
    F0 = sub.Delta
    if not sub.normal_ok:
        return WeakOutcome(False, "normal part of the subgradient vanishes", F0, F0, 0.0, 0.0, 0.0,
                           0.0, 0.0, a0, 0.0, 0, False)
    eps_star = sub.eps_minus if sub.curvature_ok else sub.dN
    if F0 <= 0:
        eps_star = 0.0
    wcfg = WeakConfig(lam, eta, eps_star, sub.nhat, a0)
    if phi0 is None:
        phi0 = seed_field(S.grid, len(basis), cfg.v, np.random.default_rng(ocfg.seed))
    g = sub.g.values
    mu = S.grid.mu
    slack = [-math.inf]

    def audit(k, a, p, r):
        Sr = ScalarField(S.grid, S.values + r)
        bound = F0 + float(np.sum(g * r) * mu) + 0.5 * task.L * float(np.sum(r * r) * mu)
        slack[0] = max(slack[0], eval_F(task, Sr) - bound)

    res = minimize_weak(S, basis, a0, phi0, cfg, wcfg, ocfg, callback=audit)
    audit(None, res.a, res.phi.data, res.r.values)
    F1 = eval_F(task, S + res.r)
    # reachability: the linearized deformation must see the task normal
    lin = GaugeProblem(S, basis, replace(cfg, flow="linearized")).residual(res.phi.data)
    reach = abs(float(np.sum(sub.nhat.values * lin) * mu)) > REACH_TOL * max(res.rnorm, 1e-300)
    return WeakOutcome(F1 <= 0, None, F0, F1, eps_star, res.nr, abs(res.nr - eps_star), res.tangent,
                       res.rnorm, res.a, slack[0], res.trace.iterations, reach)


def invariance_audit(task: SyntheticTask, S: ScalarField, k_samples: int,
                     rng: np.random.Generator) -> tuple[float, bool]:
    """Largest ``|F(shift_k S) - F(S)|`` over random integer shifts and whether ``W`` ever changed."""
    if k_samples < 1:
        raise ValueError("k_samples must be >= 1")
    F0 = eval_F(task, S)
    W0 = eval_W(task, S)
    worst, changed = 0.0, False
    for _ in range(k_samples):
        kx = int(rng.integers(S.grid.nx))
        ky = int(rng.integers(S.grid.ny))
        Sk = shift(S, kx, ky)
        worst = max(worst, abs(eval_F(task, Sk) - F0))
        changed = changed or eval_W(task, Sk) != W0
    return worst, changed
