"""Boundary-value solvers on the reference cylinder.

Three problems, all with Dirichlet data on ``r = R0`` imposed through a
linear ghost cell and solved by preconditioned conjugate gradients:

* ``solve_flat_laplace``  -(d_r^2 + d_z^2) u = 0, odd reflection at the axis;
* ``solve_cyl_harmonic``  (1/r) d_r(r d_r u) + d_z^2 u = 0, zero axis flux;
* ``solve_pressure``      (1/Rk) d_i(Rk E_ij d_j q) = G1 + b0 . grad G2.

The cylindrical and pressure operators share one finite-volume assembly
(``_kernels.pressure_triplets``), so the pressure operator with ``E = I`` and
``Rk = r`` is the cylindrical operator node for node.
"""

from __future__ import annotations

import functools
import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import _kernels
from .grid import BoundaryFunction, Grid, ScalarField, boundary_trace, d_z

log = logging.getLogger(__name__)

KRYLOV_TOL = 1e-10


class SolverFailure(RuntimeError):
    def __init__(self, msg: str, residual: float, iterations: int):
        super().__init__(f"{msg} (relative residual {residual:.3e} after {iterations} iterations)")
        self.residual = residual
        self.iterations = iterations


class PreconditionError(ValueError):
    pass


@dataclass
class SolveInfo:
    iterations: int
    residual: float  # relative, ||b - A x|| / ||b||


# ---------------------------------------------------------------------------
# matrices
# ---------------------------------------------------------------------------


@functools.lru_cache(maxsize=16)
def flat_matrix(grid: Grid) -> sp.csr_matrix:
    """Symmetric positive 5-point matrix of -(d_r^2 + d_z^2), homogeneous Dirichlet."""
    nr, nz = grid.shape
    ir, iz = 1.0 / grid.dr**2, 1.0 / grid.dz**2
    main_r = np.full(nr, 2.0 * ir)
    main_r[0] = 3.0 * ir  # odd ghost u_{-1} = -u_0
    main_r[-1] = 3.0 * ir  # Dirichlet ghost u_N = 2g - u_{N-1}
    tr = sp.diags([main_r, -ir * np.ones(nr - 1), -ir * np.ones(nr - 1)], [0, -1, 1])
    ez = np.ones(nz)
    tz = sp.diags([2.0 * iz * ez, -iz * ez[:-1], -iz * ez[:-1]], [0, -1, 1]).tolil()
    tz[0, nz - 1] = -iz
    tz[nz - 1, 0] = -iz
    a = sp.kron(tr, sp.identity(nz)) + sp.kron(sp.identity(nr), tz.tocsr())
    return a.tocsr()


def _faces_from_cells(grid: Grid, krr, kzz, krz):
    """Face/corner coefficient arrays for ``pressure_triplets``.

    Axis face carries zero flux (the weight Rk vanishes there); the face at
    ``R0`` takes the extrapolated trace.
    """
    nr, nz = grid.shape
    krr_face = np.zeros((nr + 1, nz))
    krr_face[1:nr] = 0.5 * (krr[:-1] + krr[1:])
    krr_face[nr] = boundary_trace(ScalarField(grid, krr, "none")).values
    kzz_face = 0.5 * (kzz + np.roll(kzz, -1, axis=1))
    krz_corner = np.zeros((nr + 1, nz))
    if krz is not None:
        s = krz + np.roll(krz, -1, axis=1)
        krz_corner[1:nr] = 0.25 * (s[:-1] + s[1:])
    return krr_face, kzz_face, krz_corner


def variable_matrix(grid: Grid, krr, kzz, krz=None) -> tuple[sp.csr_matrix, np.ndarray]:
    """Matrix of -div(K grad .) times cell area, and the Dirichlet face weights."""
    krr_face, kzz_face, krz_corner = _faces_from_cells(grid, krr, kzz, krz)
    rows, cols, vals = _kernels.pressure_triplets(krr_face, kzz_face, krz_corner, grid.dr, grid.dz)
    n = grid.Nr * grid.Nz
    a = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    a.sum_duplicates()
    # boundary row picks up 2 krr(R0) (dz/dr) g
    bweight = 2.0 * krr_face[grid.Nr] * grid.dz / grid.dr
    return a, bweight


def dirichlet_load(grid: Grid, bweight: np.ndarray, krz, g: np.ndarray) -> np.ndarray:
    """Last-row load from the Dirichlet face: ``bweight g`` plus the known
    cross flux ``krz d_z g dz`` through the face at ``R0``."""
    load = bweight * g
    if krz is not None:
        kb = boundary_trace(ScalarField(grid, krz, "none")).values
        load = load + kb * d_z(BoundaryFunction(grid, g)).values * grid.dz
    return load


@functools.lru_cache(maxsize=16)
def cyl_matrix(grid: Grid) -> tuple[sp.csr_matrix, np.ndarray]:
    rr, _ = grid.mesh()
    krr = rr.copy()
    kzz = rr.copy()
    a, bw = variable_matrix(grid, krr, kzz)
    # the trace of r is R0 up to rounding; pin it
    bw = np.full(grid.Nz, 2.0 * grid.R0 * grid.dz / grid.dr)
    return a, bw


@functools.lru_cache(maxsize=16)
def _flat_lu(grid: Grid):
    return spla.splu(flat_matrix(grid).tocsc())


@functools.lru_cache(maxsize=16)
def _cyl_lu(grid: Grid):
    return spla.splu(cyl_matrix(grid)[0].tocsc())


# ---------------------------------------------------------------------------
# Krylov driver
# ---------------------------------------------------------------------------


def pcg(a: sp.csr_matrix, b: np.ndarray, precond=None, tol: float = KRYLOV_TOL,
        maxiter: int | None = None) -> tuple[np.ndarray, SolveInfo]:
    """Preconditioned CG to relative residual ``tol``; raises on the iteration cap."""
    n = b.size
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        return np.zeros(n), SolveInfo(0, 0.0)
    if maxiter is None:
        maxiter = 10 * n
    if precond == "jacobi" or precond is None:
        d = a.diagonal()
        m = spla.LinearOperator((n, n), matvec=lambda x: x / d)
    elif hasattr(precond, "solve"):
        m = spla.LinearOperator((n, n), matvec=precond.solve)
    else:
        m = precond
    count = [0]

    def cb(_xk):
        count[0] += 1

    x, info = spla.cg(a, b, rtol=tol, atol=0.0, maxiter=maxiter, M=m, callback=cb)
    res = float(np.linalg.norm(b - a @ x)) / bnorm
    if res > tol:
        # one restart from the current iterate removes drift in the recurrence
        x2, info = spla.cg(a, b, x0=x, rtol=tol, atol=0.0, maxiter=maxiter, M=m, callback=cb)
        res = float(np.linalg.norm(b - a @ x2)) / bnorm
        x = x2
    if res > tol:
        raise SolverFailure("conjugate gradients did not converge", res, count[0])
    return x, SolveInfo(count[0], res)


# ---------------------------------------------------------------------------
# public solvers
# ---------------------------------------------------------------------------


def _data(dirichlet) -> np.ndarray:
    if isinstance(dirichlet, BoundaryFunction):
        if dirichlet.zslope != 0.0:
            raise ValueError("Dirichlet data must be periodic in z")
        return dirichlet.values
    return np.asarray(dirichlet, dtype=float)


def solve_flat_laplace(dirichlet, grid: Grid, precond: str = "lu",
                       tol: float = KRYLOV_TOL, info: list | None = None) -> ScalarField:
    """Flat harmonic extension of ``dirichlet``, odd through the axis."""
    g = _data(dirichlet)
    nr, nz = grid.shape
    b = np.zeros(grid.shape)
    b[-1] = 2.0 * g / grid.dr**2
    pc = _flat_lu(grid) if precond == "lu" else "jacobi"
    x, si = pcg(flat_matrix(grid), b.ravel(), pc, tol)
    if info is not None:
        info.append(si)
    return ScalarField(grid, x.reshape(nr, nz), "odd")


def solve_cyl_harmonic(dirichlet, grid: Grid, precond: str = "lu",
                       tol: float = KRYLOV_TOL, info: list | None = None) -> ScalarField:
    """Axisymmetric harmonic extension of ``dirichlet``, regular at the axis."""
    g = _data(dirichlet)
    a, bw = cyl_matrix(grid)
    b = np.zeros(grid.shape)
    b[-1] = bw * g
    pc = _cyl_lu(grid) if precond == "lu" else "jacobi"
    x, si = pcg(a, b.ravel(), pc, tol)
    if info is not None:
        info.append(si)
    return ScalarField(grid, x.reshape(grid.shape), "even")


def check_coefficients(E: np.ndarray) -> None:
    """Raise unless the 2x2 field ``E[..., i, j]`` is symmetric positive everywhere."""
    err = np.max(np.abs(E[..., 0, 1] - E[..., 1, 0]))
    scale = max(1.0, float(np.max(np.abs(E))))
    if err > 1e-12 * scale:
        raise PreconditionError(f"coefficient matrix not symmetric (max asym {err:.2e})")
    det = E[..., 0, 0] * E[..., 1, 1] - E[..., 0, 1] ** 2
    if np.any(E[..., 0, 0] <= 0.0) or np.any(det <= 0.0):
        raise PreconditionError("coefficient matrix not positive definite")


def weak_advective_source(grid: Grid, Rk: np.ndarray, b0r: np.ndarray, b0z: np.ndarray,
                          G2: np.ndarray) -> np.ndarray:
    """Cell integrals of ``Rk (b0 . grad G2)`` in flux form.

    Uses ``Rk b0 . grad G2 = div(Rk b0 G2) - G2 div(Rk b0)`` with face fluxes
    ``U = <Rk b0 . n>``, which gives ``sum_faces U (G2_nb - G2) / 2``.  The
    axis face (Rk = 0) and the face on Gamma (b0^r = 0) carry no flux, so no
    derivative of G2 is taken across them.
    """
    nr, nz = grid.shape
    ur = np.zeros((nr + 1, nz))
    ur[1:nr] = 0.5 * ((Rk * b0r)[:-1] + (Rk * b0r)[1:])
    uz = 0.5 * (Rk * b0z + np.roll(Rk * b0z, -1, axis=1))
    out = np.zeros(grid.shape)
    # r-faces (area dz)
    dg = G2[1:] - G2[:-1]
    out[:-1] += 0.5 * ur[1:nr] * dg * grid.dz
    out[1:] += 0.5 * ur[1:nr] * dg * grid.dz
    # z-faces (area dr)
    dgz = np.roll(G2, -1, axis=1) - G2
    out += 0.5 * uz * dgz * grid.dr
    out += 0.5 * np.roll(uz * dgz, 1, axis=1) * grid.dr
    return out


@dataclass
class PressureResult:
    q: ScalarField
    qhat: ScalarField
    hhat: ScalarField
    iterations: int
    residual: float


def solve_pressure(Rk: ScalarField, E: np.ndarray, G1: ScalarField, G2: ScalarField | None,
                   b0r: ScalarField | None, b0z: ScalarField | None, dirichlet,
                   precond: str = "lu", tol: float = KRYLOV_TOL) -> PressureResult:
    """Solve the pressure problem by the split ``q = qhat + hhat``.

    ``E`` has shape ``(Nr, Nz, 2, 2)``.  ``hhat`` is the cylindrical harmonic
    extension of the Dirichlet data and ``qhat`` the homogeneous-Dirichlet
    remainder.
    """
    grid = Rk.grid
    check_coefficients(E)
    g = _data(dirichlet)
    R = Rk.values
    krz = R * E[..., 0, 1]
    a, bw = variable_matrix(grid, R * E[..., 0, 0], R * E[..., 1, 1], krz)
    hhat = solve_cyl_harmonic(g, grid, tol=tol)
    area = grid.dr * grid.dz
    rhs = -(R * G1.values) * area
    if G2 is not None:
        rhs = rhs - weak_advective_source(grid, R, b0r.values, b0z.values, G2.values)
    # operator applied to hhat with the Dirichlet face load moved across
    ah = (a @ hhat.values.ravel()).reshape(grid.shape)
    ah[-1] -= dirichlet_load(grid, bw, krz, g)
    b = (rhs - ah).ravel()
    pc = _cyl_lu(grid) if precond == "lu" else "jacobi"
    x, si = pcg(a, b, pc, tol)
    qhat = ScalarField(grid, x.reshape(grid.shape), "even")
    return PressureResult(qhat + hhat, qhat, hhat, si.iterations, si.residual)


def apply_pressure_operator(Rk: ScalarField, E: np.ndarray, q: ScalarField, dirichlet) -> ScalarField:
    """Discrete ``(1/Rk) d_i(Rk E_ij d_j q)`` with Dirichlet ghost from ``dirichlet``.

    Returned per unit area, i.e. the same normalisation as ``G1``.
    """
    grid = Rk.grid
    g = _data(dirichlet)
    R = Rk.values
    krz = R * E[..., 0, 1]
    a, bw = variable_matrix(grid, R * E[..., 0, 0], R * E[..., 1, 1], krz)
    aq = (a @ q.values.ravel()).reshape(grid.shape)
    aq[-1] -= dirichlet_load(grid, bw, krz, g)
    return ScalarField(grid, -aq / (grid.dr * grid.dz) / R, "even")
