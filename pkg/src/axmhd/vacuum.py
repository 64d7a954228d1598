"""Vacuum amplitude ``C(t)`` and the interface pressure it imposes.

The vacuum field is ``B^theta = C(t)/r`` with ``C(t) = C(0) exp(int_0^t A)``.
``ln C`` is the integrated variable so positivity and the exponential form
are kept exactly.  A zero amplitude stays zero.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .grid import BoundaryFunction, ScalarField, boundary_trace, d_z
from .kinematics import DegenerateMapError, FlowMap

RK4_WEIGHTS = np.array([1.0, 2.0, 2.0, 1.0]) / 6.0


class VacuumDegeneracyError(RuntimeError):
    pass


@dataclass(frozen=True)
class VacuumState:
    C: float
    RS: float
    A_coeff: float = 0.0

    @property
    def lnC(self) -> float:
        return float(np.log(self.C)) if self.C > 0.0 else -np.inf


def check_confinement(fmap: FlowMap, RS: float) -> None:
    rmax = float(np.max(boundary_trace(fmap.R).values))
    if not RS > rmax:
        raise VacuumDegeneracyError(f"R_S = {RS} does not exceed max R on Gamma = {rmax}")


def compute_A(fmap: FlowMap, vr_b: BoundaryFunction, vz_b: BoundaryFunction, RS: float) -> float:
    """Growth rate of ``ln C`` from boundary traces (periodic trapezoid rule)."""
    Rb = boundary_trace(fmap.R)
    Zb = boundary_trace(fmap.Z)
    dzR = d_z(Rb).values
    dzZ = d_z(Zb).values
    dz = fmap.grid.dz
    if np.any(Rb.values <= 0.0):
        raise DegenerateMapError("non-positive R on Gamma")
    num = float(np.sum(vr_b.values * dzZ - vz_b.values * dzR) * dz)
    den = float(np.sum((np.log(RS) - np.log(Rb.values)) * dzZ) * dz)
    if abs(den) < 1e-8 * fmap.grid.L:
        raise VacuumDegeneracyError(f"A(t) denominator {den:.3e} too small")
    return num / den


def advance_C(vac: VacuumState, A_samples, dt: float) -> VacuumState:
    """One RK4 step of ``d(ln C)/dt = A`` from the four stage samples."""
    a = np.asarray(A_samples, dtype=float)
    if a.shape != (4,):
        raise ValueError("expected four stage samples")
    if vac.C == 0.0:
        return replace(vac, A_coeff=float(a[-1]))
    dln = dt * float(RK4_WEIGHTS @ a)
    return replace(vac, C=float(vac.C * np.exp(dln)), A_coeff=float(a[-1]))


def pressure_boundary_data(vac: VacuumState, Rk_b: BoundaryFunction) -> BoundaryFunction:
    """``q = C^2 / (2 Rk^2)`` on Gamma."""
    if np.any(Rk_b.values <= 0.0):
        raise DegenerateMapError("non-positive R^kappa on Gamma")
    return BoundaryFunction(Rk_b.grid, 0.5 * vac.C**2 / Rk_b.values**2)


def vacuum_pressure_field(C: float, Rk: ScalarField) -> ScalarField:
    """``C^2 / (2 Rk^2)`` extended into the interior."""
    return ScalarField(Rk.grid, 0.5 * C**2 / Rk.values**2, "even")
