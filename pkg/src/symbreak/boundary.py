"""Finite-dimensional crossing statistics.

A step of length at most ``t_max`` along a direction drawn uniformly from a
search space crosses a linearized decision boundary at distance ``dist`` when
the direction's normal component clears ``tau = dist / (t_max * rho)``.  This
module gives the exact probability of that event (a spherical cap), the
projection law of a random subspace, and Monte Carlo cross-checks.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

TINY = 1e-300
KS_C01 = 1.6276  # asymptotic Kolmogorov critical constant at level 0.01


class DomainError(ValueError):
    pass


@dataclass(frozen=True)
class CapQuery:
    m: int
    tau: float

    def __post_init__(self):
        if int(self.m) != self.m or self.m < 2:
            raise DomainError(f"m must be an integer >= 2, got {self.m!r}")
        if math.isnan(self.tau) or self.tau < 0:
            raise DomainError(f"tau must be >= 0, got {self.tau!r}")


@dataclass(frozen=True)
class CrossingSetup:
    dist: float
    t_max: float
    rho: float

    def __post_init__(self):
        if not self.t_max > 0:
            raise DomainError("t_max must be > 0")
        if self.dist < 0 or self.rho < 0:
            raise DomainError("dist and rho must be >= 0")


def _betacf(a: float, b: float, x: np.ndarray, tol: float, max_iter: int) -> np.ndarray:
    # modified Lentz evaluation of the incomplete-beta continued fraction
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = np.ones_like(x)
    d = 1.0 - qab * x / qap
    d = np.where(np.abs(d) < TINY, TINY, d)
    d = 1.0 / d
    h = d.copy()
    for k in range(1, max_iter + 1):
        k2 = 2 * k
        aa = k * (b - k) * x / ((qam + k2) * (a + k2))
        d = 1.0 + aa * d
        d = np.where(np.abs(d) < TINY, TINY, d)
        c = 1.0 + aa / c
        c = np.where(np.abs(c) < TINY, TINY, c)
        d = 1.0 / d
        h *= d * c
        aa = -(a + k) * (qab + k) * x / ((a + k2) * (qap + k2))
        d = 1.0 + aa * d
        d = np.where(np.abs(d) < TINY, TINY, d)
        c = 1.0 + aa / c
        c = np.where(np.abs(c) < TINY, TINY, c)
        d = 1.0 / d
        step = d * c
        h *= step
        if np.all(np.abs(step - 1.0) < tol):
            return h
    raise ArithmeticError(f"continued fraction did not converge for a={a}, b={b}")


def reg_inc_beta(x, a: float, b: float, tol: float = 1e-12, max_iter: int = 20000):
    """Regularized incomplete beta ``I_x(a, b)``; ``x`` may be an array."""
    if not (a > 0 and b > 0):
        raise DomainError(f"need a > 0 and b > 0, got a={a!r}, b={b!r}")
    xa = np.asarray(x, dtype=float)
    if np.any(np.isnan(xa)) or np.any(xa < 0) or np.any(xa > 1):
        raise DomainError("x must lie in [0, 1]")
    flat = xa.ravel()
    out = np.empty_like(flat)
    out[flat == 0.0] = 0.0
    out[flat == 1.0] = 1.0
    inner = (flat > 0.0) & (flat < 1.0)
    lbeta = math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
    direct = inner & (flat < (a + 1.0) / (a + b + 2.0))
    mirror = inner & ~direct
    if direct.any():
        xs = flat[direct]
        front = np.exp(lbeta + a * np.log(xs) + b * np.log1p(-xs))
        out[direct] = front * _betacf(a, b, xs, tol, max_iter) / a
    if mirror.any():
        xs = flat[mirror]
        front = np.exp(lbeta + a * np.log(xs) + b * np.log1p(-xs))
        out[mirror] = 1.0 - front * _betacf(b, a, 1.0 - xs, tol, max_iter) / b
    out = np.clip(out, 0.0, 1.0)
    if xa.ndim == 0:
        return float(out[0])
    return out.reshape(xa.shape)


def _cap(m: int, tau) -> np.ndarray:
    tau = np.asarray(tau, dtype=float)
    out = np.zeros(tau.shape)
    out[tau <= 0] = 1.0
    mid = (tau > 0) & (tau < 1)
    if mid.any():
        out[mid] = reg_inc_beta(1.0 - tau[mid] ** 2, (m - 1) / 2.0, 0.5)
    return out


def cap_probability(q: CapQuery) -> float:
    """Probability that a uniform unit vector in R^m has ``|<u, n>| >= tau``."""
    return float(_cap(q.m, np.array([q.tau]))[0])


def effective_tau(setup: CrossingSetup) -> float:
    """``dist / (t_max * rho)``; a search space with no normal component gives ``inf``."""
    if setup.dist == 0:
        return 0.0
    if setup.rho == 0:
        return math.inf
    return setup.dist / (setup.t_max * setup.rho)


def cos_threshold(m: int, m0: int) -> float:
    """Alignment ``cos(theta)`` above which a restricted slice of dimension m0 beats the full space.

    Equal to ``c(m0) / c(m)`` with ``c(k) = Gamma(k/2) / (sqrt(pi) Gamma((k-1)/2))``,
    the density at zero of one coordinate of a uniform unit vector in R^k.
    """
    if not 2 <= m0 <= m:
        raise DomainError(f"need 2 <= m0 <= m, got m={m}, m0={m0}")
    if m0 == m:
        return 1.0
    return math.exp(math.lgamma(m0 / 2) + math.lgamma((m - 1) / 2)
                    - math.lgamma(m / 2) - math.lgamma((m0 - 1) / 2))


def sample_sphere(m: int, rng: np.random.Generator, size: Optional[int] = None) -> np.ndarray:
    """Uniform unit vector(s) in R^m; ``size`` rows when given."""
    shape = (m,) if size is None else (size, m)
    z = rng.standard_normal(shape)
    return z / np.linalg.norm(z, axis=-1, keepdims=True)


def sample_subspace(m: int, m0: int, rng: np.random.Generator, size: Optional[int] = None) -> np.ndarray:
    """Orthonormal ``m x m0`` frame(s) of a uniformly random m0-dimensional subspace."""
    if not 1 <= m0 <= m:
        raise DomainError(f"need 1 <= m0 <= m, got m={m}, m0={m0}")
    shape = (m, m0) if size is None else (size, m, m0)
    Q, R = np.linalg.qr(rng.standard_normal(shape))
    signs = np.sign(np.diagonal(R, axis1=-2, axis2=-1))
    signs = np.where(signs == 0, 1.0, signs)
    return Q * signs[..., None, :]


def projection_sq(m: int, m0: int, N: int, rng: np.random.Generator,
                  n: Optional[np.ndarray] = None, chunk: int = 5000) -> np.ndarray:
    """``||P n||^2`` for ``N`` independent random m0-dimensional subspaces.

    Full frames are drawn; when ``m0 > m/2`` the frame of the orthogonal
    complement (itself uniform) is drawn instead and ``1 - ||P' n||^2`` returned.
    """
    if n is None:
        n = np.zeros(m)
        n[0] = 1.0
    k = min(m0, m - m0)
    if k == 0:
        return np.full(N, float(np.dot(n, n)) if m0 == m else 0.0)
    out = np.empty(N)
    for lo in range(0, N, chunk):
        hi = min(N, lo + chunk)
        Q = sample_subspace(m, k, rng, size=hi - lo)
        proj = np.einsum("kij,i->kj", Q, n)
        out[lo:hi] = np.sum(proj * proj, axis=1)
    return out if k == m0 else 1.0 - out


def projection_moments(m: int, m0: int) -> tuple[float, float]:
    """Mean and variance of the Beta(m0/2, (m-m0)/2) projection law."""
    return m0 / m, 2.0 * m0 * (m - m0) / (m * m * (m + 2))


def mc_cap(n: np.ndarray, setup: CrossingSetup, m: int, N: int, rng: np.random.Generator,
           chunk: int = 50000) -> tuple[float, float]:
    """Empirical crossing rate ``(p_hat, binomial standard error)`` from ``N`` uniform directions."""
    if N < 1000:
        raise DomainError("N must be >= 1000")
    n = np.asarray(n, dtype=float)
    if n.shape != (m,) or abs(np.linalg.norm(n) - 1.0) > 1e-12:
        raise DomainError("n must be a unit vector in R^m")
    tau = effective_tau(setup)
    hits = 0
    for lo in range(0, N, chunk):
        u = sample_sphere(m, rng, size=min(chunk, N - lo))
        hits += int(np.count_nonzero(np.abs(u @ n) >= tau))
    p = hits / N
    return p, math.sqrt(p * (1 - p) / N)


@dataclass(frozen=True)
class SliceReport:
    m: int
    m0: int
    cos_theta: float
    tau_U: float
    p_slice: float
    p_random: float
    p_random_se: float
    holds: bool
    near_boundary: bool


def slice_vs_random(m: int, m0: int, cos_theta: float, tau_U: float, trials: int,
                    rng: np.random.Generator, band: float = 0.02) -> SliceReport:
    """Crossing probability of a fixed m0-slice at alignment ``cos_theta`` vs a random m0-subspace.

    The random side averages the cap probability over ``B = ||P n||^2`` drawn
    from its Beta law.  ``near_boundary`` marks comparisons inside the
    relative ``band``; those are reported, not decided.
    """
    if tau_U > 0.1:
        raise DomainError("slice comparison is defined for tau_U <= 0.1")
    if not 2 <= m0 <= m:
        raise DomainError(f"need 2 <= m0 <= m, got m={m}, m0={m0}")
    if cos_theta < 0 or cos_theta > 1:
        raise DomainError("cos_theta must lie in [0, 1]")
    p_slice = 0.0 if cos_theta == 0 else float(_cap(m0, np.array([tau_U / cos_theta]))[0])
    if m0 == m:
        B = np.ones(trials)
    else:
        B = rng.beta(m0 / 2, (m - m0) / 2, size=trials)
    with np.errstate(divide="ignore"):
        probs = _cap(m0, np.where(B > 0, tau_U / np.sqrt(B), np.inf))
    mean = float(probs.mean())
    se = float(probs.std(ddof=1) / math.sqrt(trials)) if trials > 1 else 0.0
    near = abs(p_slice - mean) <= band * max(mean, TINY)
    return SliceReport(m, m0, cos_theta, tau_U, p_slice, mean, se, p_slice >= mean, near)


def ks_beta(samples: np.ndarray, a: float, b: float) -> tuple[float, float]:
    """Kolmogorov-Smirnov distance to Beta(a, b) and the level-0.01 critical value."""
    x = np.sort(np.asarray(samples, dtype=float))
    N = x.size
    F = reg_inc_beta(x, a, b)
    i = np.arange(1, N + 1)
    D = max(float(np.max(i / N - F)), float(np.max(F - (i - 1) / N)))
    return D, KS_C01 / math.sqrt(N)


def small_projection_rate(m: int, m0: int, eps: float, N: int, rng: np.random.Generator) -> float:
    """Fraction of random m0-subspaces with ``||P n||^2 <= m0/m - eps``."""
    B = rng.beta(m0 / 2, (m - m0) / 2, size=N)
    return float(np.mean(B <= m0 / m - eps))
