"""Flow-map geometry: deformation, cofactor, Jacobian, and the smoothed map.

``zeta = (R, Z)`` is the Lagrangian position of the particle that started at
``(r, z)``; ``Theta = theta + ThetaHat``.  Index conventions follow the
matrix ``F_ij = d zeta_i / d a_j`` with ``a = (r, z)``, so ``F11 = d_r R``,
``F12 = d_z R``, ``F21 = d_r Z``, ``F22 = d_z Z``, and ``A = F^{-T}``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .elliptic import solve_flat_laplace
from .grid import (
    BoundaryFunction,
    Grid,
    ScalarField,
    boundary_trace,
    d_r,
    d_z,
    d_z2c,
)
from .mollifier import MollifierKernel, mollify

DEGENERATE_J = 0.5
WINDOW = 1.0 / 8.0


class DegenerateMapError(RuntimeError):
    pass


@dataclass
class FlowMap:
    R: ScalarField
    Z: ScalarField
    ThetaHat: ScalarField

    @classmethod
    def identity(cls, grid: Grid) -> "FlowMap":
        return cls(grid.rfield(), grid.zfield(), grid.zeros("even"))

    @property
    def grid(self) -> Grid:
        return self.R.grid

    def zeta(self) -> tuple[ScalarField, ScalarField]:
        return (self.R, self.Z)


@dataclass
class MagneticState:
    """Seed field ``b0`` (fixed for all time)."""

    b0r: ScalarField
    b0th: ScalarField
    b0z: ScalarField

    @classmethod
    def zero(cls, grid: Grid) -> "MagneticState":
        return cls(grid.zeros("odd"), grid.zeros("odd"), grid.zeros("even"))

    def D(self, f: ScalarField) -> ScalarField:
        """``b0^r d_r f + b0^z d_z f`` (the theta-derivative term vanishes)."""
        return self.b0r * d_r(f) + self.b0z * d_z(f)


# ---------------------------------------------------------------------------
# 2x2 helpers on ScalarField entries
# ---------------------------------------------------------------------------

Mat = list  # [[f11, f12], [f21, f22]]


def _cofactor_inverse_T(F: Mat) -> tuple[Mat, ScalarField]:
    J = F[0][0] * F[1][1] - F[0][1] * F[1][0]
    A = [[F[1][1] / J, -F[1][0] / J], [-F[0][1] / J, F[0][0] / J]]
    return A, J


def _stack(M: Mat) -> np.ndarray:
    return np.stack(
        [np.stack([M[0][0].values, M[0][1].values], -1), np.stack([M[1][0].values, M[1][1].values], -1)],
        -2,
    )


def map_gradient(R: ScalarField, Z: ScalarField) -> Mat:
    return [[d_r(R), d_z(R)], [d_r(Z), d_z(Z)]]


@dataclass
class BoundaryGeometry:
    """Traces of F on Gamma and the cofactor algebra formed from them."""

    F: Mat  # BoundaryFunction entries
    A: Mat
    J: BoundaryFunction


def boundary_geometry(F: Mat) -> BoundaryGeometry:
    Fb = [[boundary_trace(F[i][j]) for j in range(2)] for i in range(2)]
    J = Fb[0][0] * Fb[1][1] - Fb[0][1] * Fb[1][0]
    A = [[Fb[1][1] / J, -Fb[1][0] / J], [-Fb[0][1] / J, Fb[0][0] / J]]
    return BoundaryGeometry(Fb, A, J)


@dataclass
class GeomCache:
    F: Mat
    A: Mat
    J: ScalarField
    # smoothed counterparts built from zeta^kappa = zeta + phi^kappa
    Fk: Mat | None = None
    Ak: Mat | None = None
    Jk: ScalarField | None = None
    Rk: ScalarField | None = None
    zeta_k: FlowMap | None = None
    phi: tuple[ScalarField, ScalarField] | None = None
    bk: BoundaryGeometry | None = None

    def F_array(self, smoothed: bool = False) -> np.ndarray:
        return _stack(self.Fk if smoothed else self.F)

    def A_array(self, smoothed: bool = False) -> np.ndarray:
        return _stack(self.Ak if smoothed else self.A)

    def E_array(self) -> np.ndarray:
        """``E_ij = Jk Ak_li Ak_lj`` at every node."""
        A = self.A_array(True)
        return self.Jk.values[..., None, None] * np.einsum("...li,...lj->...ij", A, A)


def deformation(fmap: FlowMap) -> GeomCache:
    """F, A = F^{-T} and J = det F of the flow map."""
    F = map_gradient(fmap.R, fmap.Z)
    A, J = _cofactor_inverse_T(F)
    jmin = float(np.min(np.abs(J.values)))
    if jmin < DEGENERATE_J:
        raise DegenerateMapError(f"|J| = {jmin:.3f} below {DEGENERATE_J}")
    return GeomCache(F=F, A=A, J=J)


def smoothing_correction(R_b: BoundaryFunction, Z_b: BoundaryFunction, kernel: MollifierKernel,
                         grid: Grid) -> tuple[ScalarField, ScalarField]:
    """Flat harmonic ``phi`` with ``phi = Lambda^2 zeta - zeta`` on Gamma, zero on the axis."""
    out = []
    for tr in (R_b, Z_b):
        data = mollify(tr, kernel, times=2) - tr
        out.append(solve_flat_laplace(BoundaryFunction(grid, data.periodic_part), grid))
    return out[0], out[1]


def smooth_map(fmap: FlowMap, kernel: MollifierKernel) -> tuple[FlowMap, tuple[ScalarField, ScalarField]]:
    """``zeta^kappa = zeta + phi^kappa``; Theta is carried over unchanged."""
    phi = smoothing_correction(boundary_trace(fmap.R), boundary_trace(fmap.Z), kernel, fmap.grid)
    zk = FlowMap(fmap.R + phi[0], fmap.Z + phi[1], fmap.ThetaHat)
    return zk, phi


def build_geometry(fmap: FlowMap, kernel: MollifierKernel | None, check: bool = True) -> GeomCache:
    """Full cache: geometry of zeta and of its smoothed version."""
    geom = deformation(fmap) if check else _unchecked(fmap)
    if kernel is None:
        phi = (fmap.grid.zeros("odd"), fmap.grid.zeros("odd"))
        zk = fmap
    else:
        zk, phi = smooth_map(fmap, kernel)
    # derivatives taken term by term so each piece keeps its own axis parity
    dphi = map_gradient(phi[0], phi[1])
    Fk = [[geom.F[i][j] + dphi[i][j] for j in range(2)] for i in range(2)]
    Ak, Jk = _cofactor_inverse_T(Fk)
    if check:
        jmin = float(np.min(np.abs(Jk.values)))
        if jmin < DEGENERATE_J:
            raise DegenerateMapError(f"|J^kappa| = {jmin:.3f} below {DEGENERATE_J}")
    geom.Fk, geom.Ak, geom.Jk = Fk, Ak, Jk
    geom.Rk = (fmap.R + phi[0]).with_parity("odd")
    geom.zeta_k = zk
    geom.phi = phi
    geom.bk = boundary_geometry(Fk)
    return geom


def _unchecked(fmap: FlowMap) -> GeomCache:
    F = map_gradient(fmap.R, fmap.Z)
    A, J = _cofactor_inverse_T(F)
    return GeomCache(F=F, A=A, J=J)


def window_margins(geom: GeomCache) -> tuple[float, float]:
    """``max|Jk - 1|`` and ``max|Ak_ij - delta_ij|``."""
    dj = float(np.max(np.abs(geom.Jk.values - 1.0)))
    A = geom.A_array(True)
    da = float(np.max(np.abs(A - np.eye(2))))
    return dj, da


def window_ok(geom: GeomCache) -> bool:
    dj, da = window_margins(geom)
    return dj <= WINDOW and da <= WINDOW


def ftA_residual(geom: GeomCache, smoothed: bool = False) -> float:
    """``max |F^T A - I|`` over the grid."""
    F = geom.F_array(smoothed)
    A = geom.A_array(smoothed)
    return float(np.max(np.abs(np.einsum("...ki,...kj->...ij", F, A) - np.eye(2))))


def det_residual(geom: GeomCache) -> float:
    F = geom.F_array()
    det = F[..., 0, 0] * F[..., 1, 1] - F[..., 0, 1] * F[..., 1, 0]
    return float(np.max(np.abs(det - geom.J.values)))


def reconstruct_b(mag: MagneticState, fmap: FlowMap) -> tuple[ScalarField, ScalarField, ScalarField]:
    """Frozen-in field ``(b0.grad R, R b0.grad Theta, b0.grad Z)``."""
    grid = fmap.grid
    r = grid.rfield()
    bR = mag.D(fmap.R).with_parity("odd")
    bZ = mag.D(fmap.Z).with_parity("even")
    bTh = (fmap.R * mag.D(fmap.ThetaHat) + fmap.R * mag.b0th / r).with_parity("odd")
    return bR, bTh, bZ


def b0_grad_theta(mag: MagneticState, fmap: FlowMap) -> ScalarField:
    """``b0 . grad Theta = D Theta_hat + b0^theta / r``."""
    return (mag.D(fmap.ThetaHat) + mag.b0th / fmap.grid.rfield()).with_parity("even")


def piola_residual(geom: GeomCache, smoothed: bool = False) -> tuple[ScalarField, ScalarField]:
    """Row divergences ``d_r(J A_i1) + d_z(J A_i2)`` for ``i = 1, 2``.

    The outer divergence is the second-order conservative one (centred in
    both directions) used by the pressure operator.  With the fourth-order
    inner ``d_z`` the residual measures the O(dz^2) mismatch between the
    two discretisations; it vanishes identically for affine maps.
    """
    F = geom.Fk if smoothed else geom.F
    A = geom.Ak if smoothed else geom.A
    J = geom.Jk if smoothed else geom.J
    out = []
    for i in range(2):
        c1 = (J * A[i][0]).with_parity(F[1 - i][1].parity)
        c2 = (J * A[i][1]).with_parity(F[1 - i][0].parity)
        out.append(d_r(c1) + d_z2c(c2))
    return out[0], out[1]


def boundary_transfer_residual(geom: GeomCache, X: tuple) -> BoundaryFunction:
    """``X_R - (X.Ak_.2) d_z Rk - d_r Rk (X.Ak_.1)`` on Gamma."""
    b = geom.bk
    X1, X2 = X
    grid = geom.J.grid
    X1 = X1 if isinstance(X1, BoundaryFunction) else BoundaryFunction(grid, np.broadcast_to(X1, (grid.Nz,)))
    X2 = X2 if isinstance(X2, BoundaryFunction) else BoundaryFunction(grid, np.broadcast_to(X2, (grid.Nz,)))
    xa2 = X1 * b.A[0][1] + X2 * b.A[1][1]
    xa1 = X1 * b.A[0][0] + X2 * b.A[1][0]
    return X1 - xa2 * b.F[0][1] - b.F[0][0] * xa1
