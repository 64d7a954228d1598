import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from axmhd import Grid, ScalarField
from axmhd.dynamics import (
    SimState,
    StepConfig,
    cfl_limit,
    double_primitive,
    rhs,
    run,
    step,
)
from axmhd.elliptic import SolverFailure
from axmhd.initial_data import preset
from axmhd.kinematics import FlowMap
from axmhd.mollifier import build_kernel


@pytest.mark.parametrize("kw", [dict(dt=0.0, kappa=0.1), dict(dt=0.1, kappa=0.0),
                                dict(dt=0.1, kappa=0.1, cfl=0.9), dict(dt=0.1, kappa=0.1, window_check_every=0)])
def test_step_config_validation(kw):
    with pytest.raises(ValueError):
        StepConfig(**kw)


def test_cfl_limit_uses_unit_floor(grid32):
    s = SimState.rest(grid32)
    assert cfl_limit(s, 0.5) == pytest.approx(0.5 * min(grid32.dr, grid32.dz))
    s.vz = ScalarField(grid32, np.full(grid32.shape, 4.0), "even")
    assert cfl_limit(s, 0.5) == pytest.approx(0.125 * min(grid32.dr, grid32.dz))


def test_double_primitive_inverts_second_derivative():
    n = 128
    z = np.arange(n) * 2 * np.pi / n
    f = np.cos(3 * z)
    F = double_primitive(f, z[1])
    assert abs(np.mean(F)) < 1e-12
    assert np.allclose(F, -np.cos(3 * z) / 9, atol=2e-3)


def test_rest_state_invariant_short(grid32):
    k = build_kernel(4 * grid32.dz, grid32)
    s = SimState.rest(grid32, C0=0.5)
    cfg = StepConfig(dt=cfl_limit(s, 0.5), kappa=k.kappa)
    for _ in range(10):
        s, _ = step(s, cfg, k)
    assert max(np.max(np.abs(f.values)) for f in (s.vr, s.vth, s.vz)) < 1e-12
    assert np.max(np.abs(s.map.R.values - grid32.r[:, None])) < 1e-12
    assert abs(s.vac.C - 0.5) < 1e-14


def test_pinch_is_discrete_equilibrium(grid32):
    k = build_kernel(4 * grid32.dz, grid32)
    t = rhs(preset("pinch", grid32).to_state(), k)
    for f in (t.dvr, t.dvz, t.dvth):
        assert np.max(np.abs(f.values)) < 1e-10


def test_swirl_angle_rate(grid32):
    s = SimState.rest(grid32, C0=0.5)
    s.vth = grid32.field(lambda r, z: 0.1 * r * (1 + 0 * z), "odd")
    t = rhs(s, build_kernel(4 * grid32.dz, grid32))
    assert np.allclose(t.dTh.values, 0.1)
    # rigid rotation: centripetal acceleration balanced by pressure gradient up to O(h^2)
    assert np.max(np.abs(t.dvr.values)) < 1e-3


def test_flow_map_velocity_matches_nu_without_smoothing():
    g = Grid(24, 24)
    s = preset("perturbed", g).to_state()
    t = rhs(s, None)
    assert np.array_equal(t.dR.values, s.vr.values) and np.array_equal(t.dZ.values, s.vz.values)


def test_window_stop_reported():
    g = Grid(16, 16)
    s = SimState.rest(g, C0=0.5)
    s.map = FlowMap(g.rfield() * 1.2, g.zfield(), g.zeros("even"))
    k = build_kernel(4 * g.dz, g)
    res = run(s, StepConfig(dt=0.01, kappa=k.kappa), k, 0.05)
    assert res.status == "window_stop" and res.steps == 0 and "window" in res.reason


def test_solver_failure_reported(monkeypatch):
    import axmhd.dynamics as dyn

    def boom(*a, **kw):
        raise SolverFailure("forced", 1.0, 3)

    monkeypatch.setattr(dyn, "solve_pressure", boom)
    g = Grid(16, 16)
    k = build_kernel(4 * g.dz, g)
    res = run(SimState.rest(g, C0=0.5), StepConfig(dt=0.01, kappa=k.kappa), k, 0.05)
    assert res.status == "solver_failure"


def test_run_reaches_t_end_with_short_last_step(grid32):
    k = build_kernel(4 * grid32.dz, grid32)
    s = preset("axial", grid32).to_state()
    seen = []
    res = run(s, StepConfig(dt=0.04, kappa=k.kappa), k, 0.1, monitor=lambda n, st, t: seen.append(st.t))
    assert res.status == "completed" and res.state.t == pytest.approx(0.1)
    assert seen[-1] == pytest.approx(0.1)


def _roll_state(s, m):
    g = s.grid

    def roll(f):
        per = np.roll(f.periodic_part, -m, axis=1)
        return ScalarField(g, per + f.zslope * g.z[None, :], f.parity, f.zslope)

    out = SimState(FlowMap(roll(s.map.R), roll(s.map.Z), roll(s.map.ThetaHat)), roll(s.vr), roll(s.vth),
                   roll(s.vz), s.vac, s.t, type(s.mag)(roll(s.mag.b0r), roll(s.mag.b0th), roll(s.mag.b0z)))
    return out


@settings(max_examples=5, deadline=None)
@given(st.integers(1, 23))
def test_rhs_commutes_with_axial_translation(m):
    g = Grid(16, 24)
    k = build_kernel(4 * g.dz, g)
    s = preset("perturbed", g, eps=0.05).to_state()
    s.map.R = s.map.R + s.vr * 0.1
    t0 = rhs(s, k)
    t1 = rhs(_roll_state(s, m), k)
    for a, b in ((t0.dvr, t1.dvr), (t0.dvz, t1.dvz), (t0.q, t1.q)):
        assert np.allclose(np.roll(a.values, -m, axis=1), b.values, atol=1e-9)
    assert t1.A == pytest.approx(t0.A, abs=1e-12)


def test_time_commutator_matches_finite_difference_in_time(grid32):
    from axmhd.dynamics import _time_commutator, div_A
    from axmhd.kinematics import build_geometry

    g = grid32
    R0 = g.field(lambda r, z: r * (1 + 0.05 * np.cos(z)), "odd")
    Z0 = g.field(lambda r, z: z + 0.03 * r**2 * np.sin(z), "even", zslope=1.0)
    WR = g.field(lambda r, z: 0.2 * r * (1 + np.sin(z)), "odd")
    WZ = g.field(lambda r, z: 0.1 * r**2 * np.cos(2 * z), "even")
    nu = (g.field(lambda r, z: r * np.cos(z), "odd"), g.field(lambda r, z: (1 - r**2) * np.sin(z), "even"))
    th = g.zeros("even")

    def divA(t):
        geom = build_geometry(FlowMap(R0 + t * WR, Z0 + t * WZ, th), None)
        return div_A(geom.A, R0 + t * WR, *nu).values

    s = SimState.rest(g)
    s.map = FlowMap(R0, Z0, th)
    s.vr, s.vz = nu
    geom = build_geometry(s.map, None)
    got = _time_commutator(s, geom, (WR, WZ)).values
    h = 1e-4
    want = geom.J.values * (divA(h) - divA(-h)) / (2 * h)
    assert np.max(np.abs(want)) > 1e-2
    assert np.max(np.abs(got - want)) <= 1e-6 * np.max(np.abs(want))
