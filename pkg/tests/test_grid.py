import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from axmhd import BoundaryFunction, Grid, ScalarField
from axmhd.grid import (
    boundary_dr,
    boundary_norm,
    boundary_trace,
    d_r,
    d_r_n,
    d_z,
    derivative,
    weighted_norm,
)


def test_grid_geometry():
    g = Grid(8, 16, R0=2.0, L=4.0)
    assert g.dr == pytest.approx(0.25) and g.dz == pytest.approx(0.25)
    assert g.r[0] == pytest.approx(0.125) and g.r[-1] == pytest.approx(2.0 - 0.125)
    assert g.z[0] == 0.0 and g.shape == (8, 16)
    # weights integrate r dr dz (times 2 pi) exactly for constants
    assert np.sum(g.weights) == pytest.approx(2 * np.pi * 0.5 * 4.0 * 4.0)


@pytest.mark.parametrize("bad", [dict(Nr=2, Nz=8), dict(Nr=8, Nz=4), dict(Nr=8, Nz=8, R0=-1.0)])
def test_grid_rejects_bad_shapes(bad):
    with pytest.raises(ValueError):
        Grid(**bad)


def test_field_shape_and_parity_checked(grid32):
    with pytest.raises(ValueError):
        ScalarField(grid32, np.zeros((3, 3)))
    with pytest.raises(ValueError):
        ScalarField(grid32, np.zeros(grid32.shape), "weird")


def test_parity_algebra(grid32):
    r = grid32.rfield()
    e = grid32.field(lambda rr, zz: np.cos(rr) + 0 * zz, "even")
    assert (r * r).parity == "even"
    assert (r * e).parity == "odd"
    assert (e + e).parity == "even"
    assert d_r(e).parity == "odd" and d_r(r).parity == "even"


def _errs(fn, exact, sizes=(32, 64, 128)):
    out = []
    for n in sizes:
        g = Grid(n, n)
        rr, zz = g.mesh()
        out.append(np.max(np.abs(fn(g).values - exact(rr, zz))))
    return np.array(out)


def test_d_z_fourth_order():
    e = _errs(lambda g: d_z(g.field(lambda r, z: np.sin(3 * z) * (1 + r**2), "even")),
              lambda r, z: 3 * np.cos(3 * z) * (1 + r**2))
    assert np.all(np.log2(e[:-1] / e[1:]) > 3.8)


@pytest.mark.parametrize("parity,f,df", [
    ("even", lambda r, z: np.cos(r) * np.sin(z), lambda r, z: -np.sin(r) * np.sin(z)),
    ("odd", lambda r, z: np.sin(2 * r) * np.cos(z), lambda r, z: 2 * np.cos(2 * r) * np.cos(z)),
])
def test_d_r_second_order_with_parity(parity, f, df):
    e = _errs(lambda g: d_r(g.field(f, parity)), df)
    assert np.all(np.log2(e[:-1] / e[1:]) > 1.9)


def test_composed_radial_derivatives_stay_bounded_at_wall():
    # d_r then four more radial derivatives: no h^-2 growth near r = R0
    peaks = []
    for n in (32, 64, 128):
        g = Grid(n, n)
        f = d_r(g.field(lambda r, z: np.cos(r) * np.cos(z), "even"))
        peaks.append(np.max(np.abs(d_r_n(f, 4).values[-3:])))
    assert peaks[-1] < 2.0 * peaks[0] + 1.0


@pytest.mark.parametrize("n", [2, 3, 4])
def test_d_r_n_matches_sympy(n):
    r, z = sp.symbols("r z")
    expr = sp.cos(r) * sp.sin(z) if n % 2 == 0 else sp.sin(r) * sp.sin(z)
    parity = "even" if n % 2 == 0 else "odd"
    exact = sp.lambdify((r, z), sp.diff(expr, r, n), "numpy")
    f = sp.lambdify((r, z), expr, "numpy")
    e = _errs(lambda g: d_r_n(g.field(f, parity), n), exact)
    assert e[-1] < 2e-3 and e[-1] < e[0]


def test_zslope_derivative(grid32):
    Z = grid32.zfield()
    dz = d_z(Z)
    assert np.allclose(dz.values, 1.0, atol=1e-12)
    assert np.allclose(d_r(Z).values, 0.0, atol=1e-12)
    assert np.allclose(derivative(Z, 1, 1).values, 0.0, atol=1e-12)


def test_weighted_norm_matches_sympy_integral():
    r, z = sp.symbols("r z", positive=True)
    expr = sp.cos(r) * sp.sin(z)
    total = 0
    for b in range(3):
        for a in range(3 - b):
            total += sp.integrate(sp.integrate(sp.diff(expr, r, a, z, b) ** 2 * r, (r, 0, 1)), (z, 0, 2 * sp.pi))
    exact = float(sp.sqrt(2 * sp.pi * total))
    g = Grid(128, 128)
    f = g.field(sp.lambdify((r, z), expr, "numpy"), "even")
    assert weighted_norm(f, 2) == pytest.approx(exact, rel=2e-3)


def test_boundary_trace_and_derivative(grid64):
    g = grid64
    f = g.field(lambda r, z: r**2 * np.cos(z), "even")
    assert np.allclose(boundary_trace(f).values, np.cos(g.z), atol=1e-12)
    assert np.allclose(boundary_dr(f).values, 2 * np.cos(g.z), atol=1e-10)


def test_boundary_norm_of_sine(grid64):
    g = grid64
    s = BoundaryFunction(g, np.sin(g.z))
    # |sin|_0^2 = 2 pi R0 * pi
    assert boundary_norm(s, 0) == pytest.approx(np.sqrt(2 * np.pi**2), rel=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 6), st.floats(-3, 3), st.floats(0, 2 * np.pi))
def test_d_z_exact_on_trig_up_to_stencil_symbol(k, amp, phase):
    g = Grid(8, 64)
    h = g.dz
    f = BoundaryFunction(g, amp * np.sin(k * g.z + phase))
    symbol = (8 * np.sin(k * h) - np.sin(2 * k * h)) / (6 * h)
    assert np.allclose(d_z(f).values, amp * symbol * np.cos(k * g.z + phase), atol=1e-11)


@settings(max_examples=25, deadline=None)
@given(st.floats(-5, 5), st.floats(-5, 5))
def test_derivatives_are_linear(a, b):
    g = Grid(16, 16)
    f = g.field(lambda r, z: np.cos(r) * np.sin(z), "even")
    h = g.field(lambda r, z: r**2 * np.cos(2 * z), "even")
    lhs = d_r(f * a + h * b).values
    assert np.allclose(lhs, a * d_r(f).values + b * d_r(h).values, atol=1e-10)
