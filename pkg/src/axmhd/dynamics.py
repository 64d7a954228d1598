"""Right-hand side of the smoothed Lagrangian system and its RK4 stepper.

Prognostic variables are the flow map ``(R, Z, ThetaHat)``, the velocity
``(v^r, v^theta, v^z)`` and ``ln C``.  Each stage rebuilds the geometry,
the boundary correction ``psi`` and the pressure from scratch.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .elliptic import PressureResult, solve_flat_laplace, solve_pressure
from .grid import BoundaryFunction, Grid, ScalarField, boundary_trace, d_r, d_z
from .kinematics import (
    DegenerateMapError,
    FlowMap,
    GeomCache,
    MagneticState,
    b0_grad_theta,
    build_geometry,
    map_gradient,
    smoothing_correction,
    window_margins,
    WINDOW,
)
from .mollifier import MollifierKernel, mollify
from .vacuum import VacuumDegeneracyError, VacuumState, advance_C, check_confinement, compute_A, pressure_boundary_data

RK4_C = (0.0, 0.5, 0.5, 1.0)
RK4_B = (1.0 / 6.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 6.0)


class WindowStop(RuntimeError):
    """The a priori window was left; carries a short tag for the report."""

    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


@dataclass
class SimState:
    map: FlowMap
    vr: ScalarField
    vth: ScalarField
    vz: ScalarField
    vac: VacuumState
    t: float
    mag: MagneticState

    @property
    def grid(self) -> Grid:
        return self.map.grid

    @classmethod
    def rest(cls, grid: Grid, C0: float = 0.0, RS: float = 2.0) -> "SimState":
        return cls(FlowMap.identity(grid), grid.zeros("odd"), grid.zeros("odd"), grid.zeros("even"),
                   VacuumState(C0, RS * grid.R0), 0.0, MagneticState.zero(grid))


@dataclass(frozen=True)
class StepConfig:
    dt: float
    kappa: float
    cfl: float = 0.5
    krylov_tol: float = 1e-10
    window_check_every: int = 1

    def __post_init__(self):
        if not self.dt > 0.0 or not self.kappa > 0.0:
            raise ValueError("dt and kappa must be positive")
        if not 0.0 < self.cfl <= 0.5:
            raise ValueError("cfl must lie in (0, 0.5]")
        if self.window_check_every < 1:
            raise ValueError("window_check_every must be >= 1")


def cfl_limit(state: SimState, cfl: float) -> float:
    g = state.grid
    bR, bTh, bZ = _frozen_b(state)
    speed = max(1.0, *(float(np.max(np.abs(f.values))) for f in (state.vr, state.vth, state.vz, bR, bTh, bZ)))
    return cfl * min(g.dr, g.dz) / speed


def _frozen_b(state: SimState):
    from .kinematics import reconstruct_b

    return reconstruct_b(state.mag, state.map)


# ---------------------------------------------------------------------------
# Lagrangian vector calculus on the smoothed geometry
# ---------------------------------------------------------------------------


def grad_A(A, f: ScalarField) -> tuple[ScalarField, ScalarField]:
    """``(grad_A f)_i = A_ij d_j f``."""
    fr, fz = d_r(f), d_z(f)
    return A[0][0] * fr + A[0][1] * fz, A[1][0] * fr + A[1][1] * fz


def div_A(A, R: ScalarField, g1: ScalarField, g2: ScalarField) -> ScalarField:
    """``A_ij d_j g_i + g_1 / R`` (uses ``d^A_R R = 1``)."""
    out = A[0][0] * d_r(g1) + A[0][1] * d_z(g1) + A[1][0] * d_r(g2) + A[1][1] * d_z(g2)
    return out + g1 / R


def jdiv(geom: GeomCache, g1: ScalarField, g2: ScalarField) -> ScalarField:
    return geom.Jk * div_A(geom.Ak, geom.Rk, g1, g2)


# ---------------------------------------------------------------------------
# modification term psi
# ---------------------------------------------------------------------------


def double_primitive(f: np.ndarray, dz: float) -> np.ndarray:
    """Periodic second primitive of the zero-mean projection of ``f``."""
    g = f - f.mean()
    p = np.concatenate([[0.0], np.cumsum(0.5 * dz * (g[:-1] + g[1:]))])
    p -= p.mean()
    pp = np.concatenate([[0.0], np.cumsum(0.5 * dz * (p[:-1] + p[1:]))])
    return pp - pp.mean()


def psi_forcing(state: SimState, geom: GeomCache, kernel: MollifierKernel) -> tuple[np.ndarray, np.ndarray]:
    """The boundary functions ``f_i`` before projection and integration."""
    R_b, Z_b = boundary_trace(state.map.R), boundary_trace(state.map.Z)
    zz = [d_z(d_z(R_b)), d_z(d_z(Z_b))]
    zz_k = [d_z(d_z(mollify(R_b, kernel, 2))), d_z(d_z(mollify(Z_b, kernel, 2)))]
    a2 = [geom.bk.A[0][1], geom.bk.A[1][1]]
    s1 = zz[0] * a2[0] + zz[1] * a2[1]
    s2 = zz_k[0] * a2[0] + zz_k[1] * a2[1]
    out = []
    for v in (state.vr, state.vz):
        vb = boundary_trace(v)
        f = s1 * d_z(mollify(vb, kernel, 2)) - s2 * d_z(vb)
        out.append(f.values)
    return out[0], out[1]


def psi_boundary_data(state: SimState, geom: GeomCache, kernel: MollifierKernel) -> tuple[BoundaryFunction, BoundaryFunction]:
    g = state.grid
    f1, f2 = psi_forcing(state, geom, kernel)
    return (BoundaryFunction(g, double_primitive(f1, g.dz)), BoundaryFunction(g, double_primitive(f2, g.dz)))


def psi_field(state: SimState, geom: GeomCache, kernel: MollifierKernel,
              data: tuple[BoundaryFunction, BoundaryFunction] | None = None) -> tuple[ScalarField, ScalarField]:
    g = state.grid
    if data is None:
        data = psi_boundary_data(state, geom, kernel)
    out = []
    for d in data:
        if not np.any(d.values):
            out.append(g.zeros("odd"))
        else:
            out.append(solve_flat_laplace(d, g))
    return out[0], out[1]


# ---------------------------------------------------------------------------
# pressure sources
# ---------------------------------------------------------------------------


def swirl_forcing(state: SimState) -> ScalarField:
    """``(v^theta)^2 / R - R (b0 . grad Theta)^2``."""
    R = state.map.R
    bt = b0_grad_theta(state.mag, state.map)
    return (state.vth * state.vth / R - R * bt * bt).with_parity("odd")


def assemble_pressure_sources(state: SimState, geom: GeomCache, kernel: MollifierKernel | None,
                              psi: tuple[ScalarField, ScalarField] | None = None):
    """``(G1, G2)`` with ``(1/R) d_i(R E_ij d_j q) = G1 + b0 . grad G2``."""
    g = state.grid
    mag = state.mag
    if psi is None:
        psi = (g.zeros("odd"), g.zeros("odd")) if kernel is None else psi_field(state, geom, kernel)
    bR = mag.D(state.map.R).with_parity("odd")
    bZ = mag.D(state.map.Z).with_parity("even")
    G2 = jdiv(geom, bR, bZ).with_parity("even")
    # [J Div_A, D](b0 . grad zeta)
    adv = jdiv(geom, mag.D(bR).with_parity("odd"), mag.D(bZ).with_parity("even")) - mag.D(G2)
    # J Div_A of the swirl/hoop forcing (radial component only)
    fR = swirl_forcing(state)
    force = geom.Jk * (geom.Ak[0][0] * d_r(fR) + geom.Ak[0][1] * d_z(fR) + fR / geom.Rk)
    # J (d_t Div_A) nu from d_t zeta^kappa
    W = time_derivative_smoothed(state, geom, kernel, psi)
    tcomm = _time_commutator(state, geom, W)
    G1 = (tcomm + force + adv).with_parity("even")
    return G1, G2


def time_derivative_smoothed(state: SimState, geom: GeomCache, kernel: MollifierKernel | None,
                             psi: tuple[ScalarField, ScalarField]) -> tuple[ScalarField, ScalarField]:
    """``d_t zeta^kappa``: the smoothing pipeline applied to ``V = nu + psi``."""
    VR = (state.vr + psi[0]).with_parity("odd")
    VZ = state.vz + psi[1]
    if kernel is None:
        return VR, VZ
    g = state.grid
    if not (np.any(VR.values) or np.any(VZ.values)):
        return VR, VZ
    c = smoothing_correction(boundary_trace(VR), boundary_trace(VZ), kernel, g)
    return (VR + c[0]).with_parity("odd"), VZ + c[1]


def _time_commutator(state: SimState, geom: GeomCache, W) -> ScalarField:
    """``J (d_t Div_A) nu`` with ``d_t A = -A (d_t F)^T A`` and ``d_t R = W_R``."""
    g = state.grid
    if not (np.any(W[0].values) or np.any(W[1].values)):
        return g.zeros("even")
    A = geom.Ak
    dW = map_gradient(W[0], W[1])  # dW[l][k] = d_k W_l
    nu = (state.vr, state.vz)
    dnu = map_gradient(nu[0], nu[1])  # dnu[i][j] = d_j nu_i
    tot = g.zeros("even")
    for i in range(2):
        for j in range(2):
            dA = g.zeros("even")
            for k in range(2):
                for l in range(2):
                    dA = dA - A[i][k] * dW[l][k] * A[l][j]
            tot = tot + dA * dnu[i][j]
    tot = tot - nu[0] * W[0] / (geom.Rk * geom.Rk)
    return geom.Jk * tot


# ---------------------------------------------------------------------------
# right-hand side
# ---------------------------------------------------------------------------


@dataclass
class Tendency:
    dR: ScalarField
    dZ: ScalarField
    dTh: ScalarField
    dvr: ScalarField
    dvth: ScalarField
    dvz: ScalarField
    A: float
    q: ScalarField
    pressure: PressureResult
    geom: GeomCache
    V: tuple[ScalarField, ScalarField]


def rhs(state: SimState, kernel: MollifierKernel | None, tol: float = 1e-10,
        geom: GeomCache | None = None, check_window: bool = True) -> Tendency:
    g = state.grid
    mag = state.mag
    if geom is None:
        geom = build_geometry(state.map, kernel)
    if check_window:
        dj, da = window_margins(geom)
        if dj > WINDOW or da > WINDOW:
            raise WindowStop(f"geometry window left: |Jk-1|={dj:.4f}, |Ak-I|={da:.4f}")
    check_confinement(state.map, state.vac.RS)
    psi = psi_field(state, geom, kernel) if kernel is not None else (g.zeros("odd"), g.zeros("odd"))
    G1, G2 = assemble_pressure_sources(state, geom, kernel, psi)
    qb = pressure_boundary_data(state.vac, boundary_trace(geom.Rk))
    pr = solve_pressure(geom.Rk, geom.E_array(), G1, G2, mag.b0r, mag.b0z, qb, tol=tol)
    q = pr.q
    gq = grad_A(geom.Ak, q)
    R = state.map.R
    bR = mag.D(R).with_parity("odd")
    bZ = mag.D(state.map.Z).with_parity("even")
    bt = b0_grad_theta(mag, state.map)
    fR = swirl_forcing(state)
    dvr = (-gq[0] + mag.D(bR) + fR).with_parity("odd")
    dvz = (-gq[1] + mag.D(bZ)).with_parity("even")
    bth = (R * bt).with_parity("odd")
    dvth = (mag.D(bth) - state.vth * state.vr / R + bR * bt).with_parity("odd")
    dTh = (state.vth / R).with_parity("even")
    VR = (state.vr + psi[0]).with_parity("odd")
    VZ = (state.vz + psi[1]).with_parity("even")
    A = compute_A(state.map, boundary_trace(state.vr), boundary_trace(state.vz), state.vac.RS)
    return Tendency(VR, VZ, dTh, dvr, dvth, dvz, A, q, pr, geom, (VR, VZ))


# ---------------------------------------------------------------------------
# time stepping
# ---------------------------------------------------------------------------

_FIELDS = ("R", "Z", "ThetaHat", "vr", "vth", "vz")
_PARITY = {"R": "odd", "Z": "even", "ThetaHat": "even", "vr": "odd", "vth": "odd", "vz": "even"}


def _get(state: SimState, name: str) -> ScalarField:
    if name in ("R", "Z", "ThetaHat"):
        return getattr(state.map, name)
    return getattr(state, name)


def _tend(k: Tendency, name: str) -> np.ndarray:
    return {"R": k.dR, "Z": k.dZ, "ThetaHat": k.dTh, "vr": k.dvr, "vth": k.dvth, "vz": k.dvz}[name].values


def _combine(state: SimState, incs: dict[str, np.ndarray], lnC_inc: float, dt_t: float) -> SimState:
    g = state.grid
    new = {}
    for name in _FIELDS:
        f = _get(state, name)
        new[name] = ScalarField(g, f.values + incs[name], _PARITY[name], f.zslope)
    C = state.vac.C * np.exp(lnC_inc) if state.vac.C != 0.0 else 0.0
    return SimState(FlowMap(new["R"], new["Z"], new["ThetaHat"]), new["vr"], new["vth"], new["vz"],
                    replace(state.vac, C=float(C)), state.t + dt_t, state.mag)


@dataclass
class StepInfo:
    k1: Tendency
    A_samples: list[float]


def step(state: SimState, cfg: StepConfig, kernel: MollifierKernel | None,
         check_window: bool = True) -> tuple[SimState, StepInfo]:
    """One classical RK4 step."""
    dt = cfg.dt
    ks: list[Tendency] = []
    cur = state
    for s in range(4):
        k = rhs(cur, kernel, cfg.krylov_tol, check_window=check_window and s == 0)
        ks.append(k)
        if s < 3:
            c = RK4_C[s + 1]
            incs = {n: c * dt * _tend(k, n) for n in _FIELDS}
            cur = _combine(state, incs, c * dt * k.A, c * dt)
    incs = {n: dt * sum(b * _tend(k, n) for b, k in zip(RK4_B, ks)) for n in _FIELDS}
    A_samples = [k.A for k in ks]
    nxt = _combine(state, incs, 0.0, dt)
    nxt.vac = advance_C(state.vac, A_samples, dt)
    return nxt, StepInfo(ks[0], A_samples)


@dataclass
class HistoryEntry:
    """Quantities at a step endpoint used by the transport oracle."""

    t: float
    VR: np.ndarray
    VZ: np.ndarray
    omega: np.ndarray  # v^theta / R
    R: np.ndarray
    A: np.ndarray  # true cofactor, shape (Nr, Nz, 2, 2)


@dataclass
class RunResult:
    status: str  # completed | window_stop | solver_failure
    state: SimState
    steps: int
    reason: str = ""
    history: list[HistoryEntry] = field(default_factory=list)
    last: Tendency | None = None


def _history_entry(state: SimState, k: Tendency) -> HistoryEntry:
    return HistoryEntry(state.t, k.V[0].values.copy(), k.V[1].values.copy(),
                        (state.vth / state.map.R).values.copy(), state.map.R.values.copy(),
                        k.geom.A_array(False).copy())


def run(state: SimState, cfg: StepConfig, kernel: MollifierKernel | None, t_end: float,
        monitor=None, diag_every: int = 1, record_history: bool = False) -> RunResult:
    """Advance to ``t_end`` with a fixed step (the last step is shortened).

    ``monitor(step_index, state, tendency)`` is called every ``diag_every``
    steps and at the end; it may raise :class:`WindowStop`.
    """
    from .elliptic import SolverFailure

    hist: list[HistoryEntry] = []
    n = 0
    last = None
    try:
        while state.t < t_end - 1e-12 * max(1.0, t_end):
            dt = min(cfg.dt, t_end - state.t)
            lim = cfl_limit(state, cfg.cfl)
            if dt > lim * (1.0 + 1e-12):
                dt = lim
            check = n % cfg.window_check_every == 0
            nxt, info = step(state, replace(cfg, dt=dt), kernel, check_window=check)
            last = info.k1
            if record_history:
                hist.append(_history_entry(state, info.k1))
            if monitor is not None and n % diag_every == 0:
                monitor(n, state, info.k1)
            state = nxt
            n += 1
        last = rhs(state, kernel, cfg.krylov_tol)
        if record_history:
            hist.append(_history_entry(state, last))
        if monitor is not None:
            monitor(n, state, last)
    except WindowStop as exc:
        if record_history and (not hist or hist[-1].t < state.t):
            # close the record at the returned state so the oracle ends there too
            try:
                hist.append(_history_entry(state, rhs(state, kernel, cfg.krylov_tol, check_window=False)))
            except (DegenerateMapError, VacuumDegeneracyError, SolverFailure):
                pass
        return RunResult("window_stop", state, n, exc.reason, hist, last)
    except (DegenerateMapError, VacuumDegeneracyError) as exc:
        return RunResult("window_stop", state, n, str(exc), hist, last)
    except SolverFailure as exc:
        return RunResult("solver_failure", state, n, str(exc), hist, last)
    return RunResult("completed", state, n, "", hist, last)
