import numpy as np
import pytest

from symbreak.energy import (
    ConfigError,
    EnergyConfig,
    GaugeProblem,
    WeakConfig,
    constraint_residual,
    energy,
    grad_energy,
    grad_weak,
    residual,
    weak_energy,
)
from symbreak.fields import Grid, MultiField, ScalarField, norm
from symbreak.lieflow import GeneratorBasis, orbit_direction
from symbreak.orbit import OrbitBasis, gram, project

from conftest import smooth

T2 = GeneratorBasis.translations()


def direct_energy(S, phi, cfg):
    """Loop-level re-implementation for the translation basis with linearized flow."""
    ny, nx = S.values.shape
    hx, hy, mu = 1.0 / nx, 1.0 / ny, 1.0 / (nx * ny)
    s = S.values
    e = np.zeros((2, ny, nx))
    for j in range(ny):
        for i in range(nx):
            e[0, j, i] = -(s[j, (i + 1) % nx] - s[j, i - 1]) / (2 * hx)
            e[1, j, i] = -(s[(j + 1) % ny, i] - s[j - 1, i]) / (2 * hy)
    r = phi[0] * e[0] + phi[1] * e[1]
    if cfg.variant == "a":
        data = np.sum(r * r) * mu
    else:
        A = np.stack([e[0].ravel(), e[1].ravel()], axis=1)
        c, *_ = np.linalg.lstsq(A, r.ravel(), rcond=None)
        pr = A @ c
        data = np.sum(pr * pr) * mu
    kin = well = 0.0
    for j in range(ny):
        for i in range(nx):
            for c in range(2):
                kin += ((phi[c, j, (i + 1) % nx] - phi[c, j, i]) / hx) ** 2
                kin += ((phi[c, (j + 1) % ny, i] - phi[c, j, i]) / hy) ** 2
            well += (phi[0, j, i] ** 2 + phi[1, j, i] ** 2 - cfg.v**2) ** 2
    return data + cfg.alpha * kin * mu + cfg.beta * well * mu


@pytest.fixture
def instance(rng):
    g = Grid(8, 8)
    return smooth(g, rng, kmax=2), MultiField(g, 0.3 * rng.standard_normal((2, 8, 8)))


def test_config_validation():
    with pytest.raises(ConfigError):
        EnergyConfig(variant="c")
    with pytest.raises(ConfigError):
        EnergyConfig(flow="exact")
    with pytest.raises(ConfigError):
        EnergyConfig(beta=0.0)
    with pytest.raises(ConfigError):
        EnergyConfig(flow="nonlinear", t=0.0)


@pytest.mark.parametrize("flow", ["linearized", "nonlinear"])
def test_zero_control_zero_residual(instance, flow):
    S, _ = instance
    r = residual(S, T2, MultiField.zeros(S.grid, 2), EnergyConfig(flow=flow))
    assert not np.any(r.values)


def test_single_generator_residual_is_orbit_direction(instance):
    S, _ = instance
    basis = GeneratorBasis.of("TranslateX")
    r = residual(S, basis, MultiField.constant(S.grid, [1.0]), EnergyConfig())
    assert np.array_equal(r.values, orbit_direction(S, basis.generators[0]).values)


def test_nonlinear_residual_second_order(rng):
    g = Grid(32, 32)
    S = smooth(g, rng, kmax=2)
    x, y = g.coords()
    phi = np.stack([0.5 + 0.2 * np.cos(2 * np.pi * y), 0.3 * np.sin(2 * np.pi * x)])
    ts = [2.0**-k for k in range(3, 8)]
    errs = []
    for t in ts:
        P = MultiField(g, t * phi)
        rn = residual(S, T2, P, EnergyConfig(flow="nonlinear", substeps=8))
        rl = residual(S, T2, P, EnergyConfig())
        errs.append(norm(rn - rl))
    slope = np.polyfit(np.log(ts), np.log(errs), 1)[0]
    assert abs(slope - 2.0) <= 0.2


def test_energy_at_zero_control(instance):
    S, _ = instance
    cfg = EnergyConfig()
    assert energy(S, T2, MultiField.zeros(S.grid, 2), cfg) == pytest.approx(cfg.beta * cfg.v**4, rel=1e-14)


def test_stabilized_generator_zero_energy():
    g = Grid(16, 16)
    S = ScalarField.from_function(g, lambda x, y: np.sin(2 * np.pi * x))
    cfg = EnergyConfig(variant="b")
    assert energy(S, GeneratorBasis.of("TranslateY"), MultiField.constant(g, [cfg.v]), cfg) == 0.0


@pytest.mark.parametrize("variant", ["a", "b"])
def test_energy_direct_summation(instance, variant):
    S, phi = instance
    cfg = EnergyConfig(variant=variant)
    assert energy(S, T2, phi, cfg) == pytest.approx(direct_energy(S, phi.data, cfg), rel=1e-12, abs=1e-12)


@pytest.mark.parametrize("variant", ["a", "b"])
def test_zero_is_critical(instance, variant):
    S, _ = instance
    g = grad_energy(S, T2, MultiField.zeros(S.grid, 2), EnergyConfig(variant=variant))
    assert not np.any(g.data)


@pytest.mark.parametrize("variant", ["a", "b"])
@pytest.mark.parametrize("flow", ["linearized", "nonlinear"])
def test_directional_derivative(instance, rng, variant, flow):
    S, phi = instance
    cfg = EnergyConfig(variant=variant, flow=flow)
    prob = GaugeProblem(S, T2, cfg)
    g = prob.gradient(phi.data)
    h = 1e-5
    for _ in range(20):
        d = rng.standard_normal(phi.data.shape)
        f = lambda s: prob.energy(phi.data + s * h * d)
        fd = (8 * (f(1) - f(-1)) - (f(2) - f(-2))) / (12 * h)
        E = prob.energy(phi.data)
        assert abs(np.sum(g * d) * S.grid.mu - fd) <= 1e-6 * (1 + abs(E))


def test_adjoint_matches_fd_gradient(rng):
    g = Grid(6, 6)
    S = smooth(g, rng, kmax=1)
    prob = GaugeProblem(S, T2, EnergyConfig(flow="nonlinear", substeps=2))
    phi = 0.2 * rng.standard_normal((2, 6, 6))
    fd = prob.gradient(phi, method="fd")
    assert np.max(np.abs(prob.gradient(phi) - fd)) <= 1e-5 * np.abs(fd).max()


def test_variants_agree_on_orbit(instance):
    S, _ = instance
    phi = MultiField.constant(S.grid, [0.13, -0.07])
    ga = grad_energy(S, T2, phi, EnergyConfig(variant="a")).data
    gb = grad_energy(S, T2, phi, EnergyConfig(variant="b")).data
    assert np.allclose(ga, gb, atol=1e-10)


def test_constraint_residual_zero_control(instance):
    S, _ = instance
    assert not np.any(constraint_residual(S, T2, MultiField.zeros(S.grid, 2), EnergyConfig()))


def test_constraint_is_half_constant_variation(instance):
    S, phi = instance
    cfg = EnergyConfig()
    g = grad_energy(S, T2, phi, cfg).data
    half = 0.5 * np.sum(g, axis=(1, 2)) * S.grid.mu
    assert np.allclose(constraint_residual(S, T2, phi, cfg), half, atol=1e-10)


def weak_setup(S, eps=0.05, lam=1e3, eta=10.0):
    e = orbit_direction(S, GeneratorBasis.of("TranslateX").generators[0])
    return WeakConfig(lam, eta, eps, e / norm(e))


def test_weak_energy_at_zero_gain(instance):
    S, phi = instance
    cfg = EnergyConfig()
    w = weak_setup(S)
    base = energy(S, T2, phi, EnergyConfig(variant="b"))
    assert weak_energy(S, T2, 0.0, phi, cfg, w) == pytest.approx(base + w.lam * w.eps_star**2, rel=1e-12)


def test_weak_penalties_vanish_on_target(instance):
    S, _ = instance
    w = weak_setup(S)
    from symbreak.energy import WeakProblem
    prob = WeakProblem(S, T2, EnergyConfig(), w)
    assert prob.coupling(w.eps_star * w.nhat.values) == pytest.approx(0.0, abs=1e-15)


def test_weak_energy_direct_summation(instance):
    S, phi = instance
    cfg = EnergyConfig()
    w = weak_setup(S)
    from symbreak.energy import WeakProblem
    r = WeakProblem(S, T2, cfg, w).coupled_residual(0.6, phi.data)
    mu = S.grid.mu
    c = sum(float(w.nhat.values.ravel()[k] * r.ravel()[k]) for k in range(r.size)) * mu
    q = sum(float(v * v) for v in r.ravel()) * mu
    expected = (direct_energy(S, phi.data, EnergyConfig(variant="b"))
                + w.lam * (c - w.eps_star) ** 2 + w.eta * (q - c * c))
    assert weak_energy(S, T2, 0.6, phi, cfg, w) == pytest.approx(expected, rel=1e-12)


def test_weak_gain_gradient_sign():
    g = Grid(16, 16)
    S = ScalarField.from_function(g, lambda x, y: np.sin(2 * np.pi * x))
    basis = GeneratorBasis.of("TranslateX")
    w = weak_setup(S)
    da, _ = grad_weak(S, basis, 0.0, MultiField.constant(g, [1.0]), EnergyConfig(), w)
    assert da < 0


def test_weak_gain_gradient_zero_at_rest(instance):
    S, phi = instance
    da, _ = grad_weak(S, T2, 0.0, phi, EnergyConfig(), weak_setup(S, eps=0.0))
    assert da == 0.0


def test_weak_gradient_vs_fd(rng):
    g = Grid(6, 6)
    S = smooth(g, rng, kmax=1)
    w = weak_setup(S, lam=50.0)
    phi = MultiField(g, 0.2 * rng.standard_normal((2, 6, 6)))
    cfg = EnergyConfig(substeps=2)
    da, dphi = grad_weak(S, T2, 0.7, phi, cfg, w)
    fa, fphi = grad_weak(S, T2, 0.7, phi, cfg, w, method="fd")
    assert da == pytest.approx(fa, rel=1e-5)
    assert np.allclose(dphi.data, fphi.data, rtol=1e-5, atol=1e-5 * np.abs(fphi.data).max())


def test_weak_config_rejects_non_unit_normal(instance):
    S, _ = instance
    with pytest.raises(ConfigError):
        WeakConfig(1.0, 1.0, 0.1, S)
    with pytest.raises(ConfigError):
        WeakConfig(0.0, 1.0, 0.1, S / norm(S))
