"""Reference domain ``(0, R0] x T_L`` and its discrete calculus.

The radial grid is cell centered, ``r_i = (i + 1/2) dr``, so no node sits on
the axis.  Axis behaviour is carried by the parity of each field under the
reflection ``r -> -r``; ``d_r`` uses it to fill the ghost cell at ``i = -1``.
The axial direction is periodic with nodes ``z_j = j dz``.

Fields that grow linearly in ``z`` (the axial flow-map component ``Z``) are
stored with a ``zslope``: ``values = periodic part + zslope * z``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from math import factorial
from typing import Callable, Literal

import numpy as np

from . import _kernels

Parity = Literal["even", "odd", "none"]

_AXIS_SIGN = {"even": 1.0, "odd": -1.0, "none": 0.0}

# quadratic extrapolation from cell centres R0 - dr/2, R0 - 3dr/2, R0 - 5dr/2
_TRACE_W = np.array([15.0, -10.0, 3.0]) / 8.0
_TRACE_DR_W = np.array([2.0, -3.0, 1.0])


@dataclass(frozen=True)
class Grid:
    Nr: int
    Nz: int
    R0: float = 1.0
    L: float = 2.0 * np.pi

    def __post_init__(self):
        if self.Nr < 3 or self.Nz < 5:
            raise ValueError(f"grid too small: Nr={self.Nr}, Nz={self.Nz}")
        if self.R0 <= 0 or self.L <= 0:
            raise ValueError("R0 and L must be positive")

    @property
    def dr(self) -> float:
        return self.R0 / self.Nr

    @property
    def dz(self) -> float:
        return self.L / self.Nz

    @property
    def shape(self) -> tuple[int, int]:
        return (self.Nr, self.Nz)

    @property
    def r(self) -> np.ndarray:
        return (np.arange(self.Nr) + 0.5) * self.dr

    @property
    def z(self) -> np.ndarray:
        return np.arange(self.Nz) * self.dz

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.r, self.z, indexing="ij")

    @property
    def weights(self) -> np.ndarray:
        """Quadrature weight 2 pi r_i dr dz at each node."""
        return np.broadcast_to(
            (2.0 * np.pi * self.dr * self.dz) * self.r[:, None], self.shape
        )

    def field(self, fn: Callable, parity: Parity, zslope: float = 0.0) -> "ScalarField":
        """Sample ``fn(r, z)`` on the nodes."""
        rr, zz = self.mesh()
        vals = np.asarray(fn(rr, zz), dtype=float) * np.ones(self.shape)
        return ScalarField(self, vals, parity, zslope)

    def rfield(self) -> "ScalarField":
        """The radius ``r`` as an odd field."""
        return self.field(lambda r, z: r, "odd")

    def zfield(self) -> "ScalarField":
        """The axial coordinate ``z`` (periodic part zero, unit slope)."""
        return self.field(lambda r, z: z, "even", zslope=1.0)

    def zeros(self, parity: Parity = "even") -> "ScalarField":
        return ScalarField(self, np.zeros(self.shape), parity)

    def refine(self, factor: int = 2) -> "Grid":
        return Grid(self.Nr * factor, self.Nz * factor, self.R0, self.L)


def _parity_mul(a: Parity, b: Parity) -> Parity:
    if a == "none" or b == "none":
        return "none"
    return "even" if a == b else "odd"


def _parity_add(a: Parity, b: Parity) -> Parity:
    return a if a == b else "none"


class _Ops:
    """Elementwise arithmetic shared by volume and boundary fields."""

    __array_priority__ = 100.0

    def _wrap(self, values, parity, zslope):  # pragma: no cover - abstract
        raise NotImplementedError

    def _coerce(self, other):
        """Return (values, parity, zslope) of ``other``."""
        if isinstance(other, _Ops):
            return other.values, getattr(other, "parity", "even"), other.zslope
        if np.isscalar(other):
            return float(other), "even", 0.0
        raise TypeError(f"unsupported operand {type(other)!r}")

    def __add__(self, other):
        v, p, s = self._coerce(other)
        par = self.parity
        if not (np.isscalar(v) and v == 0.0):
            par = _parity_add(self.parity, p)
        return self._wrap(self.values + v, par, self.zslope + s)

    __radd__ = __add__

    def __neg__(self):
        return self._wrap(-self.values, self.parity, -self.zslope)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        v, p, s = self._coerce(other)
        if np.isscalar(v):
            return self._wrap(self.values * v, self.parity, self.zslope * v)
        if self.zslope != 0.0 or s != 0.0:
            raise ValueError("product of a z-sloped field is not periodic")
        return self._wrap(self.values * v, _parity_mul(self.parity, p), 0.0)

    __rmul__ = __mul__

    def __truediv__(self, other):
        v, p, s = self._coerce(other)
        if np.isscalar(v):
            return self._wrap(self.values / v, self.parity, self.zslope / v)
        if self.zslope != 0.0 or s != 0.0:
            raise ValueError("quotient of a z-sloped field is not periodic")
        return self._wrap(self.values / v, _parity_mul(self.parity, p), 0.0)

    def __rtruediv__(self, other):
        v, p, s = self._coerce(other)
        if self.zslope != 0.0:
            raise ValueError("quotient of a z-sloped field is not periodic")
        return self._wrap(v / self.values, _parity_mul(self.parity, p), 0.0)

    def __pow__(self, n: int):
        if self.zslope != 0.0:
            raise ValueError("power of a z-sloped field is not periodic")
        par = self.parity if n % 2 else ("even" if self.parity != "none" else "none")
        return self._wrap(self.values**n, par, 0.0)


@dataclass(eq=False)
class ScalarField(_Ops):
    grid: Grid
    values: np.ndarray
    parity: Parity = "even"
    zslope: float = 0.0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.shape:
            raise ValueError(f"shape {self.values.shape} != grid {self.grid.shape}")
        if self.parity not in _AXIS_SIGN:
            raise ValueError(f"unknown parity {self.parity!r}")

    def _wrap(self, values, parity, zslope):
        return ScalarField(self.grid, values, parity, zslope)

    @property
    def periodic_part(self) -> np.ndarray:
        if self.zslope == 0.0:
            return self.values
        return self.values - self.zslope * self.grid.z[None, :]

    def with_parity(self, parity: Parity) -> "ScalarField":
        return ScalarField(self.grid, self.values, parity, self.zslope)

    def copy(self) -> "ScalarField":
        return ScalarField(self.grid, self.values.copy(), self.parity, self.zslope)


@dataclass(eq=False)
class BoundaryFunction(_Ops):
    """Function on Gamma = {r = R0} sampled at the axial nodes."""

    grid: Grid
    values: np.ndarray
    zslope: float = 0.0
    parity: Parity = field(default="even", repr=False)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.grid.Nz,):
            raise ValueError(f"boundary shape {self.values.shape} != ({self.grid.Nz},)")
        self.parity = "even"

    def _wrap(self, values, parity, zslope):
        return BoundaryFunction(self.grid, values, zslope)

    @property
    def periodic_part(self) -> np.ndarray:
        if self.zslope == 0.0:
            return self.values
        return self.values - self.zslope * self.grid.z


# ---------------------------------------------------------------------------
# derivatives
# ---------------------------------------------------------------------------


def d_r(f: ScalarField) -> ScalarField:
    """Second-order radial derivative with a parity ghost cell at the axis."""
    if f.zslope != 0.0:
        # the linear-in-z part has no radial dependence
        vals = _kernels.d_r(np.ascontiguousarray(f.periodic_part), f.grid.dr, _AXIS_SIGN[f.parity])
    else:
        vals = _kernels.d_r(np.ascontiguousarray(f.values), f.grid.dr, _AXIS_SIGN[f.parity])
    par = {"even": "odd", "odd": "even", "none": "none"}[f.parity]
    return ScalarField(f.grid, vals, par)


def _dz_array(a: np.ndarray, dz: float) -> np.ndarray:
    if a.ndim == 1:
        return _kernels.d_z(np.ascontiguousarray(a[None, :]), dz)[0]
    return _kernels.d_z(np.ascontiguousarray(a), dz)


def d_z(f):
    """Fourth-order periodic axial derivative (ScalarField or BoundaryFunction)."""
    vals = _dz_array(f.periodic_part, f.grid.dz) + f.zslope
    if isinstance(f, BoundaryFunction):
        return BoundaryFunction(f.grid, vals)
    return ScalarField(f.grid, vals, f.parity)


def d_z2c(f):
    """Second-order centred periodic axial derivative (3-point)."""
    a = f.periodic_part
    vals = (np.roll(a, -1, axis=-1) - np.roll(a, 1, axis=-1)) / (2.0 * f.grid.dz) + f.zslope
    if isinstance(f, BoundaryFunction):
        return BoundaryFunction(f.grid, vals)
    return ScalarField(f.grid, vals, f.parity)


@lru_cache(maxsize=64)
def _radial_matrix(nr: int, n: int, sign: float) -> np.ndarray:
    """Second-order ``d^n/dr^n`` on unit spacing as an ``(nr, nr)`` matrix.

    Interior rows use the centred stencil; rows near ``r = R0`` shift to a
    one-sided stencil with one extra point.  Near the axis, points with
    negative index are folded back with ``sign`` (``0`` forbids folding and
    shifts the stencil instead).
    """
    half = (n + 1) // 2
    width = 2 * half + 1
    mat = np.zeros((nr, nr))
    for i in range(nr):
        lo = i - half
        if sign == 0.0 and lo < 0:
            pts = np.arange(0, width + 1)
        elif i + half > nr - 1:
            pts = np.arange(nr - width - 1, nr)
        else:
            pts = np.arange(lo, lo + width)
        x = (pts - i).astype(float)
        V = np.vander(x, len(x), increasing=True).T
        rhs = np.zeros(len(x))
        rhs[n] = factorial(n)
        w = np.linalg.solve(V, rhs)
        for p, wk in zip(pts, w):
            if p < 0:
                mat[i, -p - 1] += sign * wk
            else:
                mat[i, p] += wk
    return mat


def d_r_n(f: ScalarField, n: int) -> ScalarField:
    """``d_r^n f`` in one pass (avoids compounding one-sided boundary errors)."""
    if n == 0:
        return f
    if n == 1:
        return d_r(f)
    m = _radial_matrix(f.grid.Nr, n, _AXIS_SIGN[f.parity])
    vals = (m @ f.periodic_part) / f.grid.dr**n
    par = f.parity if f.parity == "none" or n % 2 == 0 else {"even": "odd", "odd": "even"}[f.parity]
    return ScalarField(f.grid, vals, par)


def derivative(f: ScalarField, nr: int, nz: int) -> ScalarField:
    """``d_r^nr d_z^nz f``."""
    out = f
    for _ in range(nz):
        out = d_z(out)
    return d_r_n(out, nr)


# ---------------------------------------------------------------------------
# norms and traces
# ---------------------------------------------------------------------------


def inner(f: ScalarField, g: ScalarField) -> float:
    """Weighted L2 inner product 2 pi sum r f g dr dz."""
    return float(np.sum(f.grid.weights * f.values * g.values))


def weighted_norm(f: ScalarField, order: int = 0) -> float:
    """``||f||_k`` summed over all multi-indices ``|alpha| <= k``."""
    if not 0 <= order <= 4:
        raise ValueError("order must be in 0..4")
    w = f.grid.weights
    total = 0.0
    axial = f
    for b in range(order + 1):
        for a in range(order - b + 1):
            total += float(np.sum(w * d_r_n(axial, a).values ** 2))
        if b < order:
            axial = d_z(axial)
    return float(np.sqrt(total))


def boundary_trace(f: ScalarField) -> BoundaryFunction:
    """Second-order extrapolation of ``f`` to ``r = R0``."""
    v = f.values
    vals = _TRACE_W[0] * v[-1] + _TRACE_W[1] * v[-2] + _TRACE_W[2] * v[-3]
    return BoundaryFunction(f.grid, vals, f.zslope)


def boundary_dr(f: ScalarField) -> BoundaryFunction:
    """One-sided radial derivative of ``f`` at ``r = R0``."""
    v = f.periodic_part
    vals = (_TRACE_DR_W[0] * v[-1] + _TRACE_DR_W[1] * v[-2] + _TRACE_DR_W[2] * v[-3]) / f.grid.dr
    return BoundaryFunction(f.grid, vals)


def boundary_norm(g: BoundaryFunction, order: int = 0) -> float:
    """``|g|_k`` with weight 2 pi R0 dz."""
    grid = g.grid
    w = 2.0 * np.pi * grid.R0 * grid.dz
    total = 0.0
    cur = g
    for b in range(order + 1):
        total += w * float(np.sum(cur.values**2))
        if b < order:
            cur = d_z(cur)
    return float(np.sqrt(total))


def boundary_sup(g: BoundaryFunction, order: int = 0) -> float:
    """``|g|_{W^{k,inf}}``: max over derivatives up to ``order``."""
    out = float(np.max(np.abs(g.values)))
    cur = g
    for _ in range(order):
        cur = d_z(cur)
        out = max(out, float(np.max(np.abs(cur.values))))
    return out
