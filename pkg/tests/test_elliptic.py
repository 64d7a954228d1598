import numpy as np
import pytest
import sympy as sp
from scipy.special import i0

from axmhd import BoundaryFunction, Grid, ScalarField
from axmhd.elliptic import (
    PreconditionError,
    SolverFailure,
    apply_pressure_operator,
    cyl_matrix,
    pcg,
    solve_cyl_harmonic,
    solve_flat_laplace,
    solve_pressure,
)

r, z = sp.symbols("r z", positive=True)


def _order(errs):
    errs = np.asarray(errs)
    return np.log2(errs[:-1] / errs[1:])


def test_flat_laplace_sinh_profile():
    errs = []
    for n in (32, 64, 128):
        g = Grid(n, n)
        u = solve_flat_laplace(BoundaryFunction(g, np.sin(2 * g.z)), g)
        rr, zz = g.mesh()
        errs.append(np.max(np.abs(u.values - np.sinh(2 * rr) / np.sinh(2.0) * np.sin(2 * zz))))
    assert min(_order(errs)) > 1.9


def test_cyl_harmonic_bessel_profile():
    errs = []
    for n in (32, 64, 128):
        g = Grid(n, n)
        u = solve_cyl_harmonic(BoundaryFunction(g, np.cos(3 * g.z)), g)
        rr, zz = g.mesh()
        errs.append(np.max(np.abs(u.values - i0(3 * rr) / i0(3.0) * np.cos(3 * zz))))
    assert min(_order(errs)) > 1.9


def test_cyl_harmonic_constant_data_gives_constant(grid32):
    u = solve_cyl_harmonic(np.full(grid32.Nz, 2.5), grid32)
    assert np.allclose(u.values, 2.5, atol=1e-9)


def test_cyl_matrix_symmetric_positive(grid32):
    a, _ = cyl_matrix(grid32)
    assert abs(a - a.T).max() < 1e-13
    x = np.random.default_rng(0).normal(size=a.shape[0])
    assert x @ (a @ x) > 0


def _sympy_problem(q, e11, e12, e22):
    """Source ``G1 = (1/r) d_i(r E_ij d_j q)`` derived symbolically."""
    flux_r = r * (e11 * sp.diff(q, r) + e12 * sp.diff(q, z))
    flux_z = r * (e12 * sp.diff(q, r) + e22 * sp.diff(q, z))
    G = sp.simplify((sp.diff(flux_r, r) + sp.diff(flux_z, z)) / r)
    return [sp.lambdify((r, z), e, "numpy") for e in (q, G, e11, e12, e22)]


@pytest.mark.parametrize("coeffs", [
    (1 + r**2 / 4, r * sp.sin(z) / 10, 1 + sp.cos(z) / 5),
    (2 + sp.cos(z) / 3, r**2 * sp.cos(z) / 8, 1 + r**2 / 3),
])
def test_pressure_manufactured_sympy(coeffs):
    q = sp.cos(r) * (1 + sp.sin(z) / 2) + r**2 * sp.cos(2 * z)
    fq, fG, f11, f12, f22 = _sympy_problem(q, *coeffs)
    errs, resid = [], []
    for n in (32, 64, 128):
        g = Grid(n, n)
        rr, zz = g.mesh()
        one = np.ones(g.shape)
        E = np.stack([np.stack([f11(rr, zz) * one, f12(rr, zz) * one], -1),
                      np.stack([f12(rr, zz) * one, f22(rr, zz) * one], -1)], -2)
        res = solve_pressure(g.rfield(), E, ScalarField(g, fG(rr, zz) * one, "even"), None, None, None,
                             fq(1.0, g.z) * np.ones(g.Nz))
        errs.append(np.max(np.abs(res.q.values - fq(rr, zz))))
        resid.append(res.residual)
    assert min(_order(errs)) > 1.9
    assert max(resid) <= 1e-10


def test_pressure_same_stencil_roundtrip(grid64, rng):
    g = grid64
    rr, zz = g.mesh()
    E = np.zeros(g.shape + (2, 2))
    E[..., 0, 0] = 1 + 0.2 * np.sin(zz)
    E[..., 1, 1] = 1.5
    E[..., 0, 1] = E[..., 1, 0] = 0.1 * rr * np.cos(zz)
    q = ScalarField(g, np.cos(rr) * np.sin(2 * zz) + rr**2, "even")
    data = np.sin(2 * g.z) * np.cos(1.0) + 1.0
    G1 = apply_pressure_operator(g.rfield(), E, q, data)
    out = solve_pressure(g.rfield(), E, G1, None, None, None, data)
    assert np.max(np.abs(out.q.values - q.values)) < 1e-8


def test_weak_advective_source_matches_strong_form():
    # b0 = (0, 0, 1): Rk b0.grad G2 = r d_z G2, G2 = sin z
    errs = []
    for n in (32, 64):
        g = Grid(n, n)
        rr, zz = g.mesh()
        E = np.broadcast_to(np.eye(2), g.shape + (2, 2)).copy()
        b0r = g.zeros("odd")
        b0z = ScalarField(g, np.ones(g.shape), "even")
        G2 = ScalarField(g, np.sin(zz), "even")
        weak = solve_pressure(g.rfield(), E, g.zeros(), G2, b0r, b0z, np.zeros(g.Nz)).q
        strong = solve_pressure(g.rfield(), E, ScalarField(g, np.cos(zz), "even"), None, None, None, np.zeros(g.Nz)).q
        errs.append(np.max(np.abs(weak.values - strong.values)))
    assert errs[1] < errs[0] / 3.5


def test_rejects_indefinite_coefficients(grid32):
    E = np.broadcast_to(np.diag([1.0, -1.0]), grid32.shape + (2, 2)).copy()
    with pytest.raises(PreconditionError):
        solve_pressure(grid32.rfield(), E, grid32.zeros(), None, None, None, np.zeros(grid32.Nz))
    E = np.broadcast_to(np.array([[1.0, 0.2], [0.0, 1.0]]), grid32.shape + (2, 2)).copy()
    with pytest.raises(PreconditionError):
        solve_pressure(grid32.rfield(), E, grid32.zeros(), None, None, None, np.zeros(grid32.Nz))


def test_pcg_raises_solver_failure(grid32):
    a, _ = cyl_matrix(grid32)
    b = np.random.default_rng(0).normal(size=a.shape[0])
    with pytest.raises(SolverFailure):
        pcg(a, b, "jacobi", tol=1e-14, maxiter=2)
