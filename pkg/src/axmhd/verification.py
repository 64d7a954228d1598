"""Verification suites driven by ``axmhd verify``.

Each suite returns ``{"suite": name, "passed": bool, "checks": [...]}`` where
every check records its measured value and threshold.
"""

from __future__ import annotations

import numpy as np
from scipy.special import i0

from .diagnostics import lemma_suite
from .elliptic import (
    KRYLOV_TOL,
    apply_pressure_operator,
    solve_cyl_harmonic,
    solve_flat_laplace,
    solve_pressure,
)
from .grid import BoundaryFunction, Grid, ScalarField, boundary_norm, boundary_trace, weighted_norm
from .kinematics import (
    FlowMap,
    boundary_transfer_residual,
    build_geometry,
    det_residual,
    ftA_residual,
    piola_residual,
)
from .mollifier import build_kernel, commutator_ratios, mollify

SUITES = ("identities", "elliptic", "mollifier", "lemmas")


def _check(name, value, threshold, passed, **extra):
    d = {"name": name, "value": float(value) if np.isscalar(value) else value, "threshold": threshold,
         "passed": bool(passed)}
    d.update(extra)
    return d


def _report(suite, checks):
    return {"suite": suite, "passed": all(c["passed"] for c in checks), "checks": checks}


# ---------------------------------------------------------------------------
# identities
# ---------------------------------------------------------------------------


def random_map(grid: Grid, rng: np.random.Generator, amp: float = 0.015) -> FlowMap:
    """Smooth near-identity map with the axis parities of (R, Z)."""
    a = rng.uniform(-amp, amp, size=(2, 3, 2))
    ph = rng.uniform(0.0, 2 * np.pi, size=(2, 3))

    def pert(r, z, c, p):
        out = 0.0
        for m in range(3):
            out = out + (c[m, 0] * r**2 + c[m, 1] * r**4) * np.sin((m + 1) * z + p[m])
        return out

    R = grid.field(lambda r, z: r * (1.0 + pert(r, z, a[0], ph[0])), "odd")
    Z = grid.field(lambda r, z: z + pert(r, z, a[1], ph[1]), "even", zslope=1.0)
    return FlowMap(R, Z, grid.zeros("even"))


def piola_decay(sizes=(32, 64, 128), seed: int = 0):
    errs = []
    for n in sizes:
        g = Grid(n, n)
        fm = random_map(g, np.random.default_rng(seed))
        geom = build_geometry(fm, None)
        p1, p2 = piola_residual(geom)
        errs.append(max(float(np.max(np.abs(p1.values))), float(np.max(np.abs(p2.values)))))
    ratios = [errs[i] / errs[i + 1] for i in range(len(errs) - 1)]
    return errs, ratios


def identities_suite(n_maps: int = 100, n: int = 32, seed: int = 0) -> dict:
    g = Grid(n, n)
    rng = np.random.default_rng(seed)
    kern = build_kernel(4 * g.dz, g)
    worst = {"ftA": 0.0, "ftA_smoothed": 0.0, "det": 0.0, "req": 0.0}
    for _ in range(n_maps):
        fm = random_map(g, rng)
        geom = build_geometry(fm, kern)
        worst["ftA"] = max(worst["ftA"], ftA_residual(geom))
        worst["ftA_smoothed"] = max(worst["ftA_smoothed"], ftA_residual(geom, smoothed=True))
        worst["det"] = max(worst["det"], det_residual(geom))
        X = (BoundaryFunction(g, rng.normal(size=g.Nz)), BoundaryFunction(g, rng.normal(size=g.Nz)))
        worst["req"] = max(worst["req"], float(np.max(np.abs(boundary_transfer_residual(geom, X).values))))
    checks = [_check(f"{k}_residual", v, 1e-12, v <= 1e-12, maps=n_maps) for k, v in worst.items()]
    errs, ratios = piola_decay()
    ok = all(3.5 <= r <= 4.5 for r in ratios[-1:]) and all(r >= 3.0 for r in ratios)
    checks.append(_check("piola_decay_ratio", ratios[-1], [3.5, 4.5], ok, errors=errs, ratios=ratios))
    return _report("identities", checks)


# ---------------------------------------------------------------------------
# elliptic
# ---------------------------------------------------------------------------


def _order(errs):
    return [float(np.log2(errs[i] / errs[i + 1])) for i in range(len(errs) - 1)]


def flat_sinh_errors(sizes, k: int = 1):
    out = []
    for n in sizes:
        g = Grid(n, n)
        data = np.sin(k * g.z)
        u = solve_flat_laplace(BoundaryFunction(g, data), g)
        rr, zz = g.mesh()
        ex = np.sinh(k * rr) / np.sinh(k * g.R0) * np.sin(k * zz)
        out.append(float(np.max(np.abs(u.values - ex))))
    return out


def cyl_bessel_errors(sizes, k: int = 1):
    out = []
    for n in sizes:
        g = Grid(n, n)
        u = solve_cyl_harmonic(BoundaryFunction(g, np.cos(k * g.z)), g)
        rr, zz = g.mesh()
        ex = i0(k * rr) / i0(k * g.R0) * np.cos(k * zz)
        out.append(float(np.max(np.abs(u.values - ex))))
    return out


# manufactured pressure problem: Rk = r, q = cos(r) + r^2 sin z,
# E11 = 1 + r^2/4, E22 = 1 + cos(z)/5, E12 = r sin(z)/10
def manufactured_pressure(r, z):
    q = np.cos(r) + r**2 * np.sin(z)
    qr = -np.sin(r) + 2 * r * np.sin(z)
    qz = r**2 * np.cos(z)
    qrr = -np.cos(r) + 2 * np.sin(z)
    qrz = 2 * r * np.cos(z)
    qzz = -(r**2) * np.sin(z)
    e11, e11r = 1 + r**2 / 4, r / 2
    e22, e22z = 1 + np.cos(z) / 5, -np.sin(z) / 5
    e12, e12r, e12z = r * np.sin(z) / 10, np.sin(z) / 10, r * np.cos(z) / 10
    G1 = (e11 * qr / r + e11r * qr + e11 * qrr
          + e12 * qz / r + e12r * qz + e12 * qrz
          + e12z * qr + e12 * qrz
          + e22z * qz + e22 * qzz)
    E = np.stack([np.stack([e11, e12], -1), np.stack([e12, e22], -1)], -2)
    return q, G1, E


def pressure_errors(sizes):
    out, resid = [], []
    for n in sizes:
        g = Grid(n, n)
        rr, zz = g.mesh()
        q, G1, E = manufactured_pressure(rr, zz)
        data = np.cos(g.R0) + g.R0**2 * np.sin(g.z)
        res = solve_pressure(g.rfield(), E, ScalarField(g, G1, "even"), None, None, None, data)
        out.append(float(np.max(np.abs(res.q.values - q))))
        resid.append(res.residual)
    return out, resid


def pressure_same_stencil(n: int = 64) -> float:
    """Recover a prescribed ``q`` from the operator's own image."""
    g = Grid(n, n)
    rr, zz = g.mesh()
    q, _, E = manufactured_pressure(rr, zz)
    data = np.cos(g.R0) + g.R0**2 * np.sin(g.z)
    qf = ScalarField(g, q, "even")
    G1 = apply_pressure_operator(g.rfield(), E, qf, data)
    res = solve_pressure(g.rfield(), E, G1, None, None, None, data)
    return float(np.max(np.abs(res.q.values - q)) / np.max(np.abs(q)))


def elliptic_suite(sizes=(32, 64, 128)) -> dict:
    checks = []
    for name, errs in (("flat_sinh", flat_sinh_errors(sizes)), ("cyl_bessel", cyl_bessel_errors(sizes))):
        orders = _order(errs)
        checks.append(_check(f"{name}_order", min(orders), 2.0, min(orders) >= 1.9, errors=errs, orders=orders))
    perrs, resid = pressure_errors(sizes)
    porders = _order(perrs)
    checks.append(_check("pressure_order", min(porders), 2.0, min(porders) >= 1.9, errors=perrs, orders=porders))
    checks.append(_check("krylov_residual", max(resid), KRYLOV_TOL, max(resid) <= KRYLOV_TOL))
    ss = pressure_same_stencil()
    checks.append(_check("pressure_same_stencil", ss, 1e-8, ss <= 1e-8))
    return _report("elliptic", checks)


# ---------------------------------------------------------------------------
# mollifier
# ---------------------------------------------------------------------------


def _boundary_corpus(g: Grid, seed: int, n: int = 8):
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        c = rng.normal(size=(4, 2))
        vals = sum(c[m, 0] * np.cos((m + 1) * g.z) + c[m, 1] * np.sin((m + 1) * g.z) for m in range(4))
        out.append(BoundaryFunction(g, vals + rng.normal()))
    return out


def mollifier_suite(n: int = 64, seed: int = 0) -> dict:
    g = Grid(n, n)
    checks = []
    worst_mass = worst_const = worst_mult = 0.0
    worst_contr = 0.0
    for m in (2, 4, 8):
        ker = build_kernel(m * g.dz, g)
        worst_mass = max(worst_mass, abs(float(np.sum(ker.weights) * g.dz) - 1.0))
        const = mollify(BoundaryFunction(g, np.full(g.Nz, 3.7)), ker)
        worst_const = max(worst_const, float(np.max(np.abs(const.values - 3.7))) / 3.7)
        for k in (1, 3, 7):
            s = np.sin(k * g.z)
            direct = mollify(BoundaryFunction(g, s), ker).values
            worst_mult = max(worst_mult, float(np.max(np.abs(direct - ker.multiplier(k) * s))))
        for f in _boundary_corpus(g, seed):
            worst_contr = max(worst_contr, boundary_norm(mollify(f, ker), 0) / boundary_norm(f, 0))
    checks.append(_check("unit_mass", worst_mass, 1e-14, worst_mass <= 1e-14))
    checks.append(_check("constants_preserved", worst_const, 1e-14, worst_const <= 1e-14))
    checks.append(_check("multiplier_quadrature", worst_mult, 1e-12, worst_mult <= 1e-12))
    checks.append(_check("l2_contraction", worst_contr, 1.0, worst_contr <= 1.0 + 1e-14))
    # commutator constants at fixed physical kappa across one refinement
    kappa = 4 * g.dz
    consts = []
    for gg in (g, g.refine()):
        ker = build_kernel(kappa, gg)
        corp = _boundary_corpus(gg, seed)
        c = {"es0": 0.0, "es1": 0.0}
        for i, h in enumerate(corp):
            for j, f in enumerate(corp):
                if i != j:
                    r = commutator_ratios(h, f, ker)
                    c["es0"] = max(c["es0"], r["es0"])
                    c["es1"] = max(c["es1"], r["es1"])
        consts.append(c)
    for key in ("es0", "es1"):
        a, b = consts[0][key], consts[1][key]
        ok = a <= 2.0 and b <= 2.0 and abs(b / a - 1.0) <= 0.2
        checks.append(_check(f"commutator_{key}", b, 2.0, ok, coarse=a, fine=b))
    return _report("mollifier", checks)


# ---------------------------------------------------------------------------
# lemmas
# ---------------------------------------------------------------------------


def lemmas_suite(seed: int = 0, n: int = 64) -> dict:
    rep = lemma_suite(seed, Grid(n, n))
    checks = [
        _check(k, rep.refined[k], "+-20%", rep.passed[k], coarse=rep.constants[k], fine=rep.refined[k])
        for k in rep.constants
    ]
    return _report("lemmas", checks)


def run_suite(name: str) -> dict:
    if name == "all":
        reports = [run_suite(s) for s in SUITES]
        return {"suite": "all", "passed": all(r["passed"] for r in reports), "reports": reports}
    fn = {"identities": identities_suite, "elliptic": elliptic_suite,
          "mollifier": mollifier_suite, "lemmas": lemmas_suite}.get(name)
    if fn is None:
        raise KeyError(f"unknown suite {name!r}; choose from {SUITES + ('all',)}")
    return fn()
