import numpy as np
import pytest

from symbreak.fields import (
    Grid,
    GridMismatchError,
    MultiField,
    ScalarField,
    VectorField,
    from_csv,
    grad,
    grad_forward,
    inner_product,
    integrate,
    kinetic,
    laplacian,
    load_field,
    norm,
    save_field,
    shift,
    to_csv,
)


def sin2pix(grid):
    return ScalarField.from_function(grid, lambda x, y: np.sin(2 * np.pi * x))


@pytest.mark.parametrize("n", [(4, 4), (7, 5), (32, 32)])
def test_unit_measure(n):
    g = Grid(*n)
    one = ScalarField.constant(g, 1.0)
    assert inner_product(one, one) == pytest.approx(1.0, abs=1e-15)


def test_zero_inner_product(rng):
    g = Grid(16, 16)
    assert inner_product(ScalarField.constant(g), ScalarField(g, rng.standard_normal(g.shape))) == 0.0


def test_sin_squared_quadrature():
    f = sin2pix(Grid(64, 64))
    assert abs(inner_product(f, f) - 0.5) <= 1e-12


def test_grid_mismatch():
    with pytest.raises(GridMismatchError):
        inner_product(ScalarField.constant(Grid(8, 8)), ScalarField.constant(Grid(8, 9)))


def test_grad_of_constant():
    u = grad(ScalarField.constant(Grid(16, 8), 3.0))
    assert not np.any(u.ux) and not np.any(u.uy)


def test_grad_of_sawtooth_interior():
    g = Grid(32, 32)
    u = grad(ScalarField.from_function(g, lambda x, y: x))
    assert np.allclose(u.ux[:, 1:-1], 1.0, atol=1e-12)
    assert np.allclose(u.uy, 0.0)


def test_grad_taylor_bound():
    g = Grid(128, 128)
    x, _ = g.coords()
    err = np.max(np.abs(grad(sin2pix(g)).ux - 2 * np.pi * np.cos(2 * np.pi * x)))
    assert err <= (2 * np.pi) ** 3 * g.hx**2 / 6


def test_laplacian_of_constant():
    assert not np.any(laplacian(ScalarField.constant(Grid(8, 8), 2.0)).values)


def test_laplacian_eigenvalue():
    g = Grid(64, 64)
    f = sin2pix(g)
    lam = 4 * np.sin(np.pi * g.hx) ** 2 / g.hx**2
    assert np.allclose(laplacian(f).values, lam * f.values, atol=1e-9)
    # and the continuum value within second-order stencil error
    assert abs(lam - (2 * np.pi) ** 2) <= (2 * np.pi) ** 4 * g.hx**2 / 12 + 1e-12


def test_summation_by_parts(rng):
    g = Grid(24, 17)
    f = ScalarField(g, rng.standard_normal(g.shape))
    h = ScalarField(g, rng.standard_normal(g.shape))
    lhs = inner_product(laplacian(f), h)
    rhs = inner_product(grad_forward(f), grad_forward(h))
    assert abs(lhs - rhs) <= 1e-10 * max(1.0, abs(lhs))


def test_kinetic_matches_forward_gradient(rng):
    g = Grid(12, 10)
    phi = MultiField(g, rng.standard_normal((3,) + g.shape))
    direct = sum(norm(grad_forward(phi.channel(i))) ** 2 for i in range(3))
    assert kinetic(phi) == pytest.approx(direct, rel=1e-12)


def test_shift_and_integrate(rng):
    g = Grid(9, 6)
    f = ScalarField(g, rng.standard_normal(g.shape))
    s = shift(f, 2, -1)
    assert s.values[0, 2] == f.values[1, 0]
    assert integrate(s) == pytest.approx(integrate(f), abs=1e-14)


def test_arithmetic_returns_new_fields(rng):
    g = Grid(5, 5)
    f = ScalarField(g, rng.standard_normal(g.shape))
    before = f.values.copy()
    out = f * 2.0 + f
    assert np.allclose(out.values, 3 * before)
    assert np.array_equal(f.values, before)


@pytest.mark.parametrize("make", [
    lambda g, r: ScalarField(g, r.standard_normal(g.shape)),
    lambda g, r: VectorField(g, r.standard_normal(g.shape), r.standard_normal(g.shape)),
    lambda g, r: MultiField(g, r.standard_normal((3,) + g.shape)),
])
def test_binary_roundtrip(tmp_path, rng, make):
    f = make(Grid(7, 5), rng)
    save_field(f, tmp_path / "f.bin")
    back = load_field(tmp_path / "f.bin")
    assert type(back) is type(f)
    assert np.array_equal(back._data(), f._data())


def test_csv_roundtrip(tmp_path, rng):
    g = Grid(6, 4)
    f = VectorField(g, rng.standard_normal(g.shape), rng.standard_normal(g.shape))
    to_csv(f, tmp_path / "f.csv")
    back = from_csv(tmp_path / "f.csv", 6, 4)
    assert np.array_equal(back._data(), f._data())
