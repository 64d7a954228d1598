"""Monitored quantities: energy, residuals, stability margins, good unknowns.

Also hosts the empirical lemma checks and the independent transport of the
frozen-in field used to cross-check ``reconstruct_b``.
"""

from __future__ import annotations

import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from .grid import (
    BoundaryFunction,
    Grid,
    ScalarField,
    boundary_dr,
    boundary_norm,
    boundary_sup,
    boundary_trace,
    d_r,
    d_z,
    derivative,
    weighted_norm,
)
from .kinematics import (
    GeomCache,
    MagneticState,
    boundary_transfer_residual,
    build_geometry,
    reconstruct_b,
    window_ok,
)
from .mollifier import MollifierKernel, build_kernel, commutator, mollify
from .vacuum import VacuumState

CSV_FIELDS = (
    "t", "energy", "div_nu", "div_b", "curl_nu", "rt_margin",
    "noncol_margin", "boundary_energy", "C", "window_ok",
)


# ---------------------------------------------------------------------------
# energy
# ---------------------------------------------------------------------------


def energy(state, geom: GeomCache | None = None) -> float:
    """Order-4 energy of velocity, flow map and frozen-in field."""
    bR, bTh, bZ = reconstruct_b(state.mag, state.map)
    fields = (state.vr, state.vth, state.vz, state.map.R, state.map.Z, bR, bTh, bZ)
    return float(sum(weighted_norm(f, 4) ** 2 for f in fields))


# ---------------------------------------------------------------------------
# stability margins
# ---------------------------------------------------------------------------


def rt_profile(q: ScalarField, C: float, Rk: ScalarField) -> np.ndarray:
    """``-d_r(q - C^2 / (2 Rk^2))`` at each boundary node."""
    diff = q - ScalarField(q.grid, 0.5 * C**2 / Rk.values**2, "even")
    return -boundary_dr(diff).values


def rt_margin(q: ScalarField, vac: VacuumState | float, geom: GeomCache | ScalarField | None = None) -> float:
    C = vac.C if isinstance(vac, VacuumState) else float(vac)
    if geom is None:
        Rk = q.grid.rfield()
    elif isinstance(geom, ScalarField):
        Rk = geom
    else:
        Rk = geom.Rk
    return float(np.min(rt_profile(q, C, Rk)))


def _b0z_trace(mag) -> np.ndarray:
    if isinstance(mag, MagneticState):
        return boundary_trace(mag.b0z).values
    if isinstance(mag, BoundaryFunction):
        return mag.values
    return np.asarray(mag, dtype=float)


def gamma_set(mag) -> np.ndarray:
    """Boolean mask of boundary nodes where ``b0^z`` vanishes.

    Exact zeros (relative to the trace maximum) plus, for every sign change
    between neighbours, the node of the pair closer to zero.
    """
    b = _b0z_trace(mag)
    scale = float(np.max(np.abs(b)))
    if scale == 0.0:
        return np.ones(b.shape, dtype=bool)
    mask = np.abs(b) <= 1e-12 * scale
    bn = np.roll(b, -1)
    change = b * bn < 0.0
    for j in np.nonzero(change)[0]:
        jn = (j + 1) % b.size
        mask[j if abs(b[j]) <= abs(b[jn]) else jn] = True
    return mask


def gamma_prime(mag, delta: float) -> np.ndarray:
    """``gamma`` together with every node where ``|b0^z| < delta``."""
    b = _b0z_trace(mag)
    if delta > float(np.max(np.abs(b))):
        warnings.warn("delta exceeds max |b0^z|; gamma' is all of Gamma", stacklevel=2)
        return np.ones(b.shape, dtype=bool)
    return gamma_set(b) | (np.abs(b) < delta)


def noncol_margin(mag) -> float:
    return float(np.min(np.abs(_b0z_trace(mag))))


@dataclass
class MixedReport:
    passed: bool
    gamma_nodes: list[int]
    gamma_prime_nodes: list[int]
    worst_node: int | None
    worst_rt: float | None
    min_noncol_outside: float | None


def mixed_condition_check(mag, q: ScalarField, C: float, delta: float, lam: float,
                          Rk: ScalarField | None = None) -> MixedReport:
    """RT sign on ``gamma'`` (``>= lam`` on ``gamma``, ``>= lam/2`` on the rest of
    ``gamma'``) and ``|b0^z| >= delta`` off ``gamma'``."""
    Rk = q.grid.rfield() if Rk is None else Rk
    b = _b0z_trace(mag)
    gam = gamma_set(b)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        gp = gamma_prime(b, delta)
    rt = rt_profile(q, C, Rk)
    need = np.where(gam, lam, 0.5 * lam)
    bad = gp & (rt < need)
    worst = worst_rt = None
    if np.any(gp):
        idx = np.nonzero(gp)[0]
        k = idx[np.argmin(rt[idx] - need[idx])]
        worst, worst_rt = int(k), float(rt[k])
    off = ~gp
    noncol = float(np.min(np.abs(b[off]))) if np.any(off) else None
    ok = not np.any(bad) and (noncol is None or noncol >= delta)
    return MixedReport(bool(ok), np.nonzero(gam)[0].tolist(), np.nonzero(gp)[0].tolist(),
                       worst, worst_rt, noncol)


# ---------------------------------------------------------------------------
# residuals
# ---------------------------------------------------------------------------


def _div(A, R, g1, g2):
    if A is None:
        return d_r(g1) + g1 / R + d_z(g2)
    out = A[0][0] * d_r(g1) + A[0][1] * d_z(g1) + A[1][0] * d_r(g2) + A[1][1] * d_z(g2)
    return out + g1 / R


def _curl(A, g1, g2):
    if A is None:
        return d_z(g1) - d_r(g2)
    return (A[1][0] * d_r(g1) + A[1][1] * d_z(g1)) - (A[0][0] * d_r(g2) + A[0][1] * d_z(g2))


@dataclass
class Residuals:
    div_nu: ScalarField
    div_b: ScalarField
    curl_nu: ScalarField
    curl_b: ScalarField
    norms: dict = field(default_factory=dict)


def residuals(state, geom: GeomCache | None = None, smoothed: bool = True) -> Residuals:
    """Divergence and curl of ``nu`` and of the frozen-in ``b``.

    With ``geom`` the derivatives are Lagrangian (``A`` or ``A^kappa``),
    otherwise the plain cylindrical forms in label coordinates.
    """
    if geom is None:
        A, R = None, state.grid.rfield()
    elif smoothed:
        A, R = geom.Ak, geom.Rk
    else:
        A, R = geom.A, state.map.R
    bR, _, bZ = reconstruct_b(state.mag, state.map)
    out = Residuals(
        _div(A, R, state.vr, state.vz), _div(A, R, bR, bZ),
        _curl(A, state.vr, state.vz), _curl(A, bR, bZ),
    )
    for name in ("div_nu", "div_b", "curl_nu", "curl_b"):
        f = getattr(out, name)
        out.norms[name] = (weighted_norm(f, 0), weighted_norm(f, 3))
    return out


# ---------------------------------------------------------------------------
# good unknowns
# ---------------------------------------------------------------------------


def dz4(f):
    for _ in range(4):
        f = d_z(f)
    return f


def _gradA(A, f):
    fr, fz = d_r(f), d_z(f)
    return A[0][0] * fr + A[0][1] * fz, A[1][0] * fr + A[1][1] * fz


def boundary_energy(state, geom: GeomCache, kernel: MollifierKernel | None) -> float:
    """``|d_z^4 (Lambda zeta_i) A^kappa_i1|_0`` on Gamma."""
    tr = [boundary_trace(state.map.R), boundary_trace(state.map.Z)]
    if kernel is not None:
        tr = [mollify(t, kernel) for t in tr]
    s = dz4(tr[0]) * geom.bk.A[0][0] + dz4(tr[1]) * geom.bk.A[1][0]
    return boundary_norm(s, 0)


@dataclass
class GoodUnknowns:
    V: tuple[ScalarField, ScalarField]
    Q: ScalarField
    boundary_energy: float


def good_unknowns(state, q: ScalarField, geom: GeomCache, kernel: MollifierKernel | None = None) -> GoodUnknowns:
    """``V = d^4 nu - d^4 zeta . grad_A nu`` and ``Q = d^4 q - d^4 zeta . grad_A q``."""
    A = geom.Ak
    z4 = (dz4(state.map.R), dz4(state.map.Z))

    def gu(f):
        gr = _gradA(A, f)
        return dz4(f) - (z4[0] * gr[0] + z4[1] * gr[1])

    V = (gu(state.vr), gu(state.vz))
    return GoodUnknowns(V, gu(q), boundary_energy(state, geom, kernel))


def _sym_comm(k, a, b):
    """``[d^k, a, b] = d^k(ab) - d^k a b - a d^k b`` along ``z``."""
    dk = lambda f: _dzk(f, k)
    return dk(a * b) - dk(a) * b - a * dk(b)


def _dzk(f, k):
    for _ in range(k):
        f = d_z(f)
    return f


def commf_check(geom: GeomCache, q: ScalarField) -> dict:
    """Residual of ``d^4(grad_A q) - grad_A Q - C(q)`` for the smoothed map.

    ``C_i = [d^4, A_ij, d_j q] + d^4 zeta_m d^A_i d^A_m q
            - [d^3, A_il A_mj] d d_l zeta_m d_j q`` with ``d = d_z``.
    """
    A, F = geom.Ak, geom.Fk
    zk = geom.zeta_k
    zeta = (zk.R, zk.Z)
    dq = (d_r(q), d_z(q))
    gq = _gradA(A, q)
    z4 = (dz4(zeta[0]), dz4(zeta[1]))
    Q = dz4(q) - (z4[0] * gq[0] + z4[1] * gq[1])
    gQ = _gradA(A, Q)
    # d F_ml along z, F_ml = d_l zeta_m
    dF = [[d_z(F[m][l]) for l in range(2)] for m in range(2)]
    gg = _gradA(A, gq[0]), _gradA(A, gq[1])  # gg[m][i] = d^A_i d^A_m q
    res, lhs_norm = [], []
    for i in range(2):
        lhs = dz4(gq[i]) - gQ[i]
        c = q.grid.zeros("none")
        for j in range(2):
            c = c + _sym_comm(4, A[i][j], dq[j])
        for m in range(2):
            c = c + z4[m] * gg[m][i]
        for l in range(2):
            for m in range(2):
                for j in range(2):
                    coef = A[i][l] * A[m][j]
                    c = c - (_dzk(coef * dF[m][l], 3) - coef * _dzk(dF[m][l], 3)) * dq[j]
        r = lhs - c
        res.append(weighted_norm(r, 0))
        lhs_norm.append(weighted_norm(dz4(gq[i]), 0))
    return {"residual": res, "scale": lhs_norm}


# ---------------------------------------------------------------------------
# records
# ---------------------------------------------------------------------------


@dataclass
class DiagnosticsRecord:
    t: float
    energy: float
    div_nu: float
    div_b: float
    curl_nu: float
    rt_margin: float
    noncol_margin: float
    boundary_energy: float
    C: float
    window_ok: bool
    req_residual: float = 0.0
    div_b0: float = 0.0

    def row(self) -> dict:
        d = asdict(self)
        return {k: d[k] for k in CSV_FIELDS}


def make_record(state, geom: GeomCache, q: ScalarField, kernel: MollifierKernel | None) -> DiagnosticsRecord:
    res = residuals(state, geom)
    req = boundary_transfer_residual(geom, (boundary_trace(state.vr), boundary_trace(state.vz)))
    rec = DiagnosticsRecord(
        t=float(state.t),
        energy=energy(state, geom),
        div_nu=res.norms["div_nu"][0],
        div_b=res.norms["div_b"][1],
        curl_nu=res.norms["curl_nu"][0],
        rt_margin=rt_margin(q, state.vac, geom),
        noncol_margin=noncol_margin(state.mag),
        boundary_energy=boundary_energy(state, geom, kernel),
        C=float(state.vac.C),
        window_ok=bool(window_ok(geom)),
        req_residual=float(np.max(np.abs(req.values))),
        div_b0=res.norms["div_b"][0],
    )
    return rec


# ---------------------------------------------------------------------------
# independent transport of b
# ---------------------------------------------------------------------------


def _transport_rate(b, e, grid: Grid):
    A = e.A
    def adv(fvals, parity):
        f = ScalarField(grid, fvals, parity)
        fr, fz = d_r(f).values, d_z(f).values
        gr = A[..., 0, 0] * fr + A[..., 0, 1] * fz
        gz = A[..., 1, 0] * fr + A[..., 1, 1] * fz
        return b[0] * gr + b[2] * gz

    rR = adv(e.VR, "odd")
    rZ = adv(e.VZ, "even")
    rT = e.VR * b[1] / e.R + e.R * adv(e.omega, "even")
    return (rR, rT, rZ)


def _entry_at(history, n: int, t: float):
    """Cubic Lagrange interpolation of the endpoint records around step ``n``."""
    from .dynamics import HistoryEntry

    m = len(history)
    lo = min(max(n - 1, 0), max(m - 4, 0))
    pts = history[lo:lo + 4]
    ts = [e.t for e in pts]
    w = []
    for a, ta in enumerate(ts):
        c = 1.0
        for b, tb in enumerate(ts):
            if b != a:
                c *= (t - tb) / (ta - tb)
        w.append(c)

    def mix(name):
        return sum(c * getattr(e, name) for c, e in zip(w, pts))

    return HistoryEntry(t, mix("VR"), mix("VZ"), mix("omega"), mix("R"), mix("A"))


def transport_b(history, mag: MagneticState, b_init=None) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Integrate ``d_t b = b . grad_A V`` (plus the hoop row) by classical RK4
    over the recorded step endpoints; half-step coefficients come from cubic
    interpolation in time of the endpoint records."""
    from .kinematics import FlowMap

    grid = mag.b0r.grid
    if b_init is None:
        b_init = reconstruct_b(mag, FlowMap.identity(grid))
    b = tuple(f.values.copy() if isinstance(f, ScalarField) else np.array(f) for f in b_init)
    for n, (e0, e1) in enumerate(zip(history[:-1], history[1:])):
        dt = e1.t - e0.t
        em = _entry_at(history, n, e0.t + 0.5 * dt) if len(history) > 2 else None
        if em is None:  # two records: Heun
            k0 = _transport_rate(b, e0, grid)
            k1 = _transport_rate(tuple(b[i] + dt * k0[i] for i in range(3)), e1, grid)
            b = tuple(b[i] + 0.5 * dt * (k0[i] + k1[i]) for i in range(3))
            continue
        k1 = _transport_rate(b, e0, grid)
        k2 = _transport_rate(tuple(b[i] + 0.5 * dt * k1[i] for i in range(3)), em, grid)
        k3 = _transport_rate(tuple(b[i] + 0.5 * dt * k2[i] for i in range(3)), em, grid)
        k4 = _transport_rate(tuple(b[i] + dt * k3[i] for i in range(3)), e1, grid)
        b = tuple(b[i] + dt / 6.0 * (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i]) for i in range(3))
    return b


def frozen_in_gap(history, state) -> float:
    """Relative weighted L2 distance between transported and reconstructed b."""
    bt = transport_b(history, state.mag)
    br = reconstruct_b(state.mag, state.map)
    w = state.grid.weights
    num = sum(float(np.sum(w * (a - f.values) ** 2)) for a, f in zip(bt, br))
    den = sum(float(np.sum(w * f.values**2)) for f in br)
    return float(np.sqrt(num / den))


# ---------------------------------------------------------------------------
# lemma suite
# ---------------------------------------------------------------------------


def _corpus(grid: Grid, seed: int, n: int = 6):
    """Smooth fields ``r^p P(r^2) T(z)`` with random low-order P and T."""
    rng = np.random.default_rng(seed)
    out = []
    for k in range(n):
        p = k % 2
        cr = rng.normal(size=3)
        cz = rng.normal(size=5)

        def fn(r, z, cr=cr, cz=cz, p=p):
            poly = cr[0] + cr[1] * r**2 + cr[2] * r**4
            trig = cz[0] + cz[1] * np.cos(z) + cz[2] * np.sin(z) + cz[3] * np.cos(2 * z) + cz[4] * np.sin(2 * z)
            return r**p * poly * trig

        out.append(grid.field(fn, "odd" if p else "even"))
    return out


def _grad_norm(f: ScalarField, order: int) -> float:
    return float(np.hypot(weighted_norm(d_r(f), order), weighted_norm(d_z(f), order)))


def _multi(k):
    return [(a, k - a) for a in range(k + 1)]


def _lemma_constants(grid: Grid, seed: int, kappa: float) -> dict:
    corp = _corpus(grid, seed)
    pairs = [(corp[i], corp[j]) for i in range(len(corp)) for j in range(len(corp)) if i < j]
    c = {"co0": 0.0, "co1": 0.0, "co2": 0.0, "hardy": 0.0, "co123_s0": 0.0, "co123_s1": 0.0,
         "es0": 0.0, "es1": 0.0}
    for g, h in pairs:
        gh = g * h
        for k in range(0, 5):
            m = k // 2 + 2
            lo = min(m, 4)
            rhs0 = weighted_norm(g, k) * weighted_norm(h, lo) + weighted_norm(g, lo) * weighted_norm(h, k)
            for a, b in _multi(k):
                lhs = weighted_norm(derivative(gh, a, b), 0)
                c["co0"] = max(c["co0"], lhs / rhs0)
                if k >= 1:
                    mk = min((k - 1) // 2 + 2, 4)
                    rhs1 = _grad_norm(g, k - 1) * weighted_norm(h, mk) + _grad_norm(g, mk) * weighted_norm(h, k - 1)
                    com = derivative(gh, a, b) - g * derivative(h, a, b)
                    c["co1"] = max(c["co1"], weighted_norm(com, 0) / rhs1)
                if k >= 2:
                    mk = min((k - 2) // 2 + 2, 3)
                    rhs2 = _grad_norm(g, k - 2) * _grad_norm(h, mk) + _grad_norm(g, mk) * _grad_norm(h, k - 2)
                    sym = derivative(gh, a, b) - derivative(g, a, b) * h - g * derivative(h, a, b)
                    c["co2"] = max(c["co2"], weighted_norm(sym, 0) / rhs2)
    r = grid.rfield()
    for f in corp:
        if f.parity != "odd":
            continue
        for s in range(1, 5):
            c["hardy"] = max(c["hardy"], weighted_norm((f / r).with_parity("even"), s - 1) / weighted_norm(f, s))
    kern = build_kernel(kappa, grid)
    tr = [boundary_trace(f) for f in corp]
    for i, gb in enumerate(tr):
        for j, hb in enumerate(tr):
            if i == j:
                continue
            w1 = boundary_sup(gb, 1)
            for s in (0, 1):
                c[f"co123_s{s}"] = max(c[f"co123_s{s}"], boundary_norm(gb * hb, s) / (w1 * boundary_norm(hb, s)))
            c["es0"] = max(c["es0"], boundary_norm(commutator(hb, gb, kern), 0)
                           / (boundary_sup(hb, 0) * boundary_norm(gb, 0)))
            c["es1"] = max(c["es1"], boundary_norm(commutator(hb, d_z(gb), kern), 0)
                           / (boundary_sup(hb, 1) * boundary_norm(gb, 0)))
    return c


# analytic ceilings for the mollifier commutators (unit mass, unit first moment of |rho'|)
_ANALYTIC_BOUND = {"es0": 2.0, "es1": 2.0}


@dataclass
class LemmaReport:
    constants: dict
    refined: dict
    passed: dict
    all_passed: bool


def lemma_suite(corpus_seed: int = 0, grid: Grid | None = None, kappa: float | None = None,
                tolerance: float = 0.2) -> LemmaReport:
    """Empirical constants on a seeded corpus and their change under one refinement."""
    grid = Grid(32, 32) if grid is None else grid
    kappa = 4.0 * grid.dz if kappa is None else kappa
    c1 = _lemma_constants(grid, corpus_seed, kappa)
    c2 = _lemma_constants(grid.refine(), corpus_seed, kappa)
    passed = {}
    for k in c1:
        ok = np.isfinite(c1[k]) and np.isfinite(c2[k]) and c1[k] > 0
        ok = ok and abs(c2[k] / c1[k] - 1.0) <= tolerance
        if k in _ANALYTIC_BOUND:
            ok = ok and max(c1[k], c2[k]) <= _ANALYTIC_BOUND[k]
        passed[k] = bool(ok)
    return LemmaReport(c1, c2, passed, all(passed.values()))
