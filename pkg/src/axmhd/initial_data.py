"""Initial data: divergence-free generators, presets and the hypothesis report."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .diagnostics import mixed_condition_check, rt_profile
from .grid import Grid, ScalarField, boundary_trace, d_r, d_z, weighted_norm
from .kinematics import FlowMap, MagneticState, build_geometry, window_margins, WINDOW
from .mollifier import build_kernel
from .vacuum import VacuumState


class MalformedDataError(ValueError):
    pass


@dataclass
class InitialData:
    v0r: ScalarField
    v0th: ScalarField
    v0z: ScalarField
    b0r: ScalarField
    b0th: ScalarField
    b0z: ScalarField
    C0: float
    RS: float
    lam: float = 0.1
    delta: float = 0.1

    @property
    def grid(self) -> Grid:
        return self.v0r.grid

    def magnetic(self) -> MagneticState:
        return MagneticState(self.b0r, self.b0th, self.b0z)

    def to_state(self):
        from .dynamics import SimState

        return SimState(FlowMap.identity(self.grid), self.v0r.copy(), self.v0th.copy(), self.v0z.copy(),
                        VacuumState(float(self.C0), float(self.RS)), 0.0, self.magnetic())


def from_stream_function(chi: ScalarField, swirl: ScalarField | None = None):
    """``v^r = -(1/r) d_z chi``, ``v^z = (1/r) d_r chi``, ``v^theta = swirl``."""
    if chi.parity != "even":
        raise MalformedDataError("stream function must be even in r")
    g = chi.grid
    r = g.rfield()
    vr = (-d_z(chi) / r).with_parity("odd")
    vz = (d_r(chi) / r).with_parity("even")
    vth = g.zeros("odd") if swirl is None else swirl
    return vr, vth, vz


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------


def axis_value(f: ScalarField) -> np.ndarray:
    """Linear extrapolation of ``f`` to ``r = 0`` from the first two cells."""
    return 1.5 * f.values[0] - 0.5 * f.values[1]


def cyl_divergence(fr: ScalarField, fz: ScalarField) -> ScalarField:
    return d_r(fr) + fr / fr.grid.rfield() + d_z(fz)


@dataclass
class HypothesisReport:
    axis_ok: bool
    divergence_ok: bool
    bcond_ok: bool
    window_ok: bool
    rt_everywhere: bool
    rt_near_gamma: bool
    rt_min: float
    noncol_min: float
    residuals: dict = field(default_factory=dict)
    messages: list[str] = field(default_factory=list)
    summary: dict = field(default_factory=dict)

    @property
    def valid(self) -> bool:
        return self.axis_ok and self.divergence_ok and self.bcond_ok

    @property
    def admissible(self) -> bool:
        return self.valid and self.window_ok and (self.rt_everywhere or self.rt_near_gamma)

    def as_dict(self) -> dict:
        return {
            "valid": self.valid, "admissible": self.admissible,
            "axis_ok": self.axis_ok, "divergence_ok": self.divergence_ok, "bcond_ok": self.bcond_ok,
            "window_ok": self.window_ok, "rt_everywhere": self.rt_everywhere, "rt_near_gamma": self.rt_near_gamma,
            "rt_min": self.rt_min, "noncol_min": self.noncol_min,
            "residuals": self.residuals, "messages": list(self.messages), "summary": self.summary,
        }


def validate(data: InitialData, kappa: float | None = None, div_tol: float | None = None) -> HypothesisReport:
    """Check structural constraints, solve for ``q0`` and classify the stability route."""
    from .dynamics import rhs

    g = data.grid
    for name in ("v0r", "v0th", "v0z", "b0r", "b0th", "b0z"):
        f = getattr(data, name)
        if not isinstance(f, ScalarField) or f.grid != g or not np.all(np.isfinite(f.values)):
            raise MalformedDataError(f"{name} is not a finite field on the common grid")
    h = max(g.dr, g.dz)
    tol = 10.0 * h**2 if div_tol is None else div_tol
    msgs: list[str] = []
    res: dict = {}

    axis_ok = True
    for name in ("v0r", "v0th", "b0r", "b0th"):
        f = getattr(data, name)
        scale = max(1.0, float(np.max(np.abs(f.values))))
        a0 = float(np.max(np.abs(axis_value(f))))
        res[f"axis_{name}"] = a0
        if f.parity != "odd":
            axis_ok = False
            msgs.append(f"{name} must be odd in r (vanish on the axis), got parity {f.parity!r}")
        elif a0 > tol * scale:
            axis_ok = False
            msgs.append(f"{name} does not vanish on the axis (extrapolated {a0:.3e})")

    div_ok = True
    for label, (fr, fz) in {"v": (data.v0r, data.v0z), "b": (data.b0r, data.b0z)}.items():
        d = float(np.max(np.abs(cyl_divergence(fr, fz).values)))
        res[f"div_{label}"] = d
        if d > tol:
            div_ok = False
            msgs.append(f"div {label}0 = {d:.3e} exceeds {tol:.3e}")

    bn = float(np.max(np.abs(boundary_trace(data.b0r).values)))
    res["bcond"] = bn
    bcond_ok = bn <= tol
    if not bcond_ok:
        msgs.append(f"b0^r on Gamma = {bn:.3e} (must vanish)")

    kernel = build_kernel(4.0 * g.dz if kappa is None else kappa, g)
    state = data.to_state()
    geom = build_geometry(state.map, kernel)
    dj, da = window_margins(geom)
    win_ok = dj <= WINDOW and da <= WINDOW
    rt_min = float("nan")
    th21 = th22 = False
    noncol = float(np.min(np.abs(boundary_trace(data.b0z).values)))
    if data.RS <= g.R0:
        msgs.append(f"R_S = {data.RS} must exceed R0 = {g.R0}")
    else:
        k = rhs(state, kernel, geom=geom, check_window=False)
        q0 = k.q
        prof = rt_profile(q0, data.C0, geom.Rk)
        rt_min = float(np.min(prof))
        th21 = rt_min >= data.lam
        mixed = mixed_condition_check(data.magnetic(), q0, data.C0, data.delta, data.lam, geom.Rk)
        th22 = mixed.passed
        res["gamma_nodes"] = len(mixed.gamma_nodes)
        res["gamma_prime_nodes"] = len(mixed.gamma_prime_nodes)
        if not th22 and mixed.worst_node is not None:
            msgs.append(f"RT fails on gamma' at node {mixed.worst_node} (margin {mixed.worst_rt:.3e})")
    summary = {
        "v0_H4_sq": float(sum(weighted_norm(f, 4) ** 2 for f in (data.v0r, data.v0th, data.v0z))),
        "b0_H4_sq": float(sum(weighted_norm(f, 4) ** 2 for f in (data.b0r, data.b0th, data.b0z))),
    }
    return HypothesisReport(axis_ok, div_ok, bcond_ok, win_ok, bool(th21), bool(th22), rt_min, noncol,
                            res, msgs, summary)


# ---------------------------------------------------------------------------
# presets
# ---------------------------------------------------------------------------


def _zeros(g: Grid):
    return g.zeros("odd"), g.zeros("odd"), g.zeros("even")


def _data(g, v, b, C0, RS, lam, delta):
    return InitialData(*v, *b, C0=C0, RS=2.0 * g.R0 if RS is None else RS, lam=lam, delta=delta)


def perturbation(g: Grid, eps: float, k: int = 1):
    """Divergence-free velocity from ``chi = eps r^2 (R0^2 - r^2)^2 sin(k z)``,
    even in r so the flow is smooth across the axis, differentiated in closed form."""
    a = g.R0**2
    kz = k * 2 * np.pi / g.L
    vr = g.field(lambda r, z: -eps * kz * r * (a - r**2) ** 2 * np.cos(kz * z), "odd")
    vz = g.field(lambda r, z: 2 * eps * (a - r**2) * (a - 3 * r**2) * np.sin(kz * z), "even")
    return vr, g.zeros("odd"), vz


def mixed_field(g: Grid, beta: float = 1.0):
    """Poloidal field from the flux ``psi = f(r) sin z`` with ``f(R0) = 0``,
    so ``b0^r = 0`` on Gamma and ``b0^z = sin z`` there, plus ``b0^theta = beta r``."""
    R0 = g.R0
    kz = 2 * np.pi / g.L
    b0r = g.field(lambda r, z: -(r * (r**2 - R0**2) / (2 * R0**2)) * kz * np.cos(kz * z), "odd")
    b0z = g.field(lambda r, z: ((2 * r**2 - R0**2) / R0**2) * np.sin(kz * z), "even")
    return b0r, g.field(lambda r, z: beta * r, "odd"), b0z


def preset(name: str, grid: Grid, C0: float | None = None, RS: float | None = None, lam: float = 0.1,
           delta: float = 0.1, eps: float = 0.02, beta: float = 1.0, mode: int = 1) -> InitialData:
    """Named initial data.

    ``rest``       v = 0, b0 = 0
    ``pinch``      b0 = (0, beta r, 0); RT holds on all of Gamma
    ``axial``      b0 = (0, beta r, 1); non-collinear everywhere
    ``mixed``      poloidal b0 with b0^z = sin z on Gamma; RT needed only near its zeros
    ``perturbed``  ``axial`` plus a small divergence-free velocity of axial ``mode``
    ``bad_divergence`` / ``bad_axis`` / ``bad_rt`` / ``bad_mixed``  constructed violations
    """
    g = grid
    r = g.rfield()
    zero_b = _zeros(g)
    zero_v = _zeros(g)
    one = g.field(lambda rr, zz: 1.0 + 0.0 * rr, "even")
    if name == "rest":
        return _data(g, zero_v, zero_b, 0.0 if C0 is None else C0, RS, lam, delta)
    if name == "pinch":
        b = (g.zeros("odd"), beta * r, g.zeros("even"))
        return _data(g, zero_v, b, 0.5 if C0 is None else C0, RS, lam, delta)
    if name == "axial":
        b = (g.zeros("odd"), beta * r, one)
        return _data(g, zero_v, b, 0.5 if C0 is None else C0, RS, lam, delta)
    if name == "perturbed":
        b = (g.zeros("odd"), beta * r, one)
        return _data(g, perturbation(g, eps, mode), b, 0.5 if C0 is None else C0, RS, lam, delta)
    if name == "mixed":
        return _data(g, zero_v, mixed_field(g, beta), MIXED_C0 if C0 is None else C0, RS, lam, delta)
    if name == "bad_mixed":
        return _data(g, zero_v, mixed_field(g, beta), 1.0 if C0 is None else C0, RS, lam, delta)
    if name == "bad_divergence":
        b = (r, g.zeros("odd"), g.zeros("even"))
        return _data(g, zero_v, b, 0.5 if C0 is None else C0, RS, lam, delta)
    if name == "bad_axis":
        vr = g.field(lambda rr, zz: 0.1 * np.cos(zz) + 0.0 * rr, "even")
        b = (g.zeros("odd"), beta * r, one)
        return _data(g, (vr, zero_v[1], zero_v[2]), b, 0.5 if C0 is None else C0, RS, lam, delta)
    if name == "bad_rt":
        b = (g.zeros("odd"), beta * r, g.zeros("even"))
        return _data(g, zero_v, b, 2.0 if C0 is None else C0, RS, lam, delta)
    raise KeyError(f"unknown preset {name!r}")


MIXED_C0 = 0.5

PRESETS = ("rest", "pinch", "axial", "perturbed", "mixed", "bad_divergence", "bad_axis", "bad_rt",
           "bad_mixed")
