import numpy as np
import pytest

from symbreak.energy import EnergyConfig, GaugeProblem, WeakConfig, energy
from symbreak.fields import Grid, MultiField, ScalarField, norm
from symbreak.lieflow import GeneratorBasis, orbit_direction
from symbreak.optimize import (
    OptConfig,
    adam_descent,
    constant_probe,
    minimize,
    minimize_weak,
    seed_field,
    sign_test,
    sobolev_preconditioner,
)
from symbreak.tasks import LINEAR, TEMPLATE_CORR, SyntheticTask, eval_W
from symbreak.validation import sample_signal, sawtooth

from conftest import smooth

T2 = GeneratorBasis.translations()


def test_quadratic_bowl_converges():
    target = np.array([1.0, -2.0, 0.5])
    fun = lambda x: float(np.sum((x - target) ** 2))
    x, tr = adam_descent(fun, lambda x: 2 * (x - target), np.zeros(3), OptConfig(step=0.1, max_iters=2000))
    assert tr.converged and np.allclose(x, target, atol=1e-5)


def test_energy_trace_monotone(rng):
    target = rng.standard_normal(5)
    fun = lambda x: float(np.sum(np.cosh(x - target)))
    _, tr = adam_descent(fun, lambda x: np.sinh(x - target), np.zeros(5), OptConfig(max_iters=200))
    assert all(b <= a for a, b in zip(tr.energies, tr.energies[1:]))


def test_preconditioner_inverts_symbol():
    g = Grid(16, 16)
    pre = sobolev_preconditioner(g, 0.1)
    f = ScalarField.from_function(g, lambda x, y: np.sin(2 * np.pi * x))
    lam = 4 * np.sin(np.pi * g.hx) ** 2 / g.hx**2
    assert np.allclose(pre(f.values), f.values / (1 + 0.2 * lam), atol=1e-12)
    assert np.allclose(pre(np.ones(g.shape)), 1.0)


def test_double_well_without_kinetic_term(rng):
    g = Grid(16, 16)
    cfg = EnergyConfig(alpha=0.0)
    phi0 = seed_field(g, 2, cfg.v, rng)
    phi, _ = minimize(ScalarField.constant(g, 1.0), T2, phi0, cfg, OptConfig())
    assert np.max(np.abs(np.sqrt(phi.sq_magnitude()) - cfg.v)) <= 1e-3


def test_zero_control_is_a_fixed_point(rng):
    g = Grid(16, 16)
    phi, tr = minimize(smooth(g, rng), T2, MultiField.zeros(g, 2), EnergyConfig())
    assert tr.converged and tr.iterations == 0 and not np.any(phi.data)


def test_minimize_never_increases_energy():
    g = Grid(8, 8)
    cfg = EnergyConfig()
    for seed in range(50):
        rng = np.random.default_rng(seed)
        S = smooth(g, rng, kmax=2)
        phi0 = MultiField(g, 0.3 * rng.standard_normal((2, 8, 8)))
        phi, _ = minimize(S, T2, phi0, cfg, OptConfig(max_iters=40))
        assert energy(S, T2, phi, cfg) <= energy(S, T2, phi0, cfg)


def _weak_config(S, eps, lam):
    e = orbit_direction(S, T2.generators[0])
    return WeakConfig(lam, 10.0, eps, e / norm(e))


def test_weak_rest_state():
    g = Grid(12, 12)
    S = sample_signal(g)
    res = minimize_weak(S, T2, 0.0, MultiField.zeros(g, 2), EnergyConfig(substeps=2), _weak_config(S, 0.0, 1e3))
    assert res.a == 0.0 and res.trace.iterations == 0


def _weak_residual(lam, iters=500):
    g = Grid(16, 16)
    S = sample_signal(g)
    S = S / norm(S)
    cfg = EnergyConfig(substeps=4)
    phi0 = seed_field(g, 2, cfg.v, np.random.default_rng(0))
    res = minimize_weak(S, T2, 0.0, phi0, cfg, _weak_config(S, 0.05, lam), OptConfig(max_iters=iters))
    return abs(res.nr - 0.05)


def test_weak_target_reached():
    assert _weak_residual(1e4) <= 0.005


@pytest.fixture(scope="module")
def quadrupling():
    return [_weak_residual(lam) for lam in (1e2, 4e2, 1.6e3)]


def test_weak_residual_shrinks_with_lambda(quadrupling):
    assert quadrupling[0] > quadrupling[1] > quadrupling[2]


@pytest.mark.xfail(strict=True, reason=(
    "the inverse-square-root rate is an upper bound; at a stationary point the normal "
    "mismatch is -G'/(2 lambda), so the measured ratios (0.53, 0.25) drift toward 1/4"))
def test_weak_residual_halves_when_lambda_quadruples(quadrupling):
    ratios = [b / a for a, b in zip(quadrupling, quadrupling[1:])]
    assert all(0.35 <= q <= 0.65 for q in ratios), (quadrupling, ratios)


def test_probe_generic_signal():
    g = Grid(32, 32)
    cfg = EnergyConfig()
    res = constant_probe(sample_signal(g), T2, cfg, 64, np.random.default_rng(0))
    assert res.value >= 1e-4 * cfg.beta * cfg.v**3 and res.hypothesis_failure is None


def test_probe_constant_signal():
    g = Grid(16, 16)
    res = constant_probe(ScalarField.constant(g, 2.0), T2, EnergyConfig(), 16, np.random.default_rng(0))
    assert res.hypothesis_failure == "stabilizer" and res.value <= 1e-12


def test_probe_masked_sawtooth():
    g = Grid(16, 16)
    S, mask = sawtooth(g)
    res = constant_probe(S, GeneratorBasis.of("TranslateX"), EnergyConfig(), 16, np.random.default_rng(0), mask=mask)
    assert res.hypothesis_failure == "constant_field"


def test_probe_rejects_zero_samples():
    with pytest.raises(ValueError):
        constant_probe(sample_signal(Grid(8, 8)), T2, EnergyConfig(), 0, np.random.default_rng(0))


def test_sign_test_identity_optimal(rng):
    g = Grid(8, 8)
    S = smooth(g, rng)
    h = ScalarField(g, rng.standard_normal(g.shape))
    assert sign_test(S, h, 0.1, lambda s: norm(s - S)) == (0, 0.0)


def test_sign_test_halfspace():
    g = Grid(8, 8)
    S = ScalarField.constant(g, 0.0)
    h = ScalarField.constant(g, 1.0)
    task = SyntheticTask(LINEAR, theta=0.5, w0=0.0, w1=1.0, weight=h)
    choice, cost = sign_test(S, h, 1.0, lambda s: eval_W(task, s))
    assert choice == 1 and eval_W(task, S) - cost == task.w1 - task.w0


def test_sign_test_along_orbit_direction(rng):
    g = Grid(16, 16)
    S = smooth(g, rng)
    task = SyntheticTask(TEMPLATE_CORR, theta=0.3, template=smooth(g, rng))
    e1 = orbit_direction(S, T2.generators[0])
    cost = lambda s: eval_W(task, s)
    assert cost(S) == cost(S + e1 * 1e-3) == cost(S - e1 * 1e-3)
    assert sign_test(S, e1, 1e-3, cost)[0] == 0


def test_sign_test_rejects_nonpositive_step(rng):
    g = Grid(4, 4)
    with pytest.raises(ValueError):
        sign_test(ScalarField.constant(g), ScalarField.constant(g), 0.0, lambda s: 0.0)
