"""Tangential convolution-by-layers and its commutators.

The kernel is the standard bump ``exp(-1/(1 - s^2))`` dilated to half-width
``kappa`` and sampled on the axial grid.  The samples are renormalised so the
discrete mass ``sum(w) * dz`` is exactly one, which makes constants exact
fixed points.  Convolution acts on ``z`` only and is periodic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .grid import BoundaryFunction, Grid, ScalarField, boundary_norm, boundary_sup, d_z


class InvalidParameterError(ValueError):
    pass


@dataclass(frozen=True)
class MollifierKernel:
    kappa: float
    weights: np.ndarray  # index m + support_halfwidth for offset m
    support_halfwidth: int
    dz: float

    def offsets(self) -> np.ndarray:
        return np.arange(-self.support_halfwidth, self.support_halfwidth + 1) * self.dz

    def multiplier(self, k: float) -> float:
        """Fourier multiplier of the discrete kernel for ``sin(kz)``/``cos(kz)``."""
        return float(np.sum(self.weights * np.cos(k * self.offsets())) * self.dz)

    def first_moment_abs_derivative(self) -> float:
        """Scale-free constant ``int |rho'(u)| |u| du`` of the continuum bump."""
        s = np.linspace(-1.0, 1.0, 40001)[1:-1]
        rho = np.exp(-1.0 / (1.0 - s**2))
        mass = np.trapezoid(rho, s)
        drho = rho * (-2.0 * s / (1.0 - s**2) ** 2) / mass
        return float(np.trapezoid(np.abs(drho) * np.abs(s), s))


def _bump(s: np.ndarray) -> np.ndarray:
    out = np.zeros_like(s)
    inside = np.abs(s) < 1.0
    out[inside] = np.exp(-1.0 / (1.0 - s[inside] ** 2))
    return out


def build_kernel(kappa: float, grid: Grid) -> MollifierKernel:
    if not (kappa > 0.0) or kappa >= grid.L / 2.0:
        raise InvalidParameterError(f"kappa must lie in (0, L/2), got {kappa}")
    dz = grid.dz
    # closed support [-kappa, kappa]; end nodes with |s| = 1 carry zero weight
    m = int(np.floor(kappa / dz + 1e-9))
    s = np.arange(-m, m + 1) * dz / kappa
    w = _bump(s)
    if w.sum() == 0.0:  # pragma: no cover - m >= 0 always keeps s = 0
        w[m] = 1.0
    w = w / (w.sum() * dz)
    w = 0.5 * (w + w[::-1])
    return MollifierKernel(kappa=kappa, weights=w, support_halfwidth=m, dz=dz)


def _conv(a: np.ndarray, kernel: MollifierKernel) -> np.ndarray:
    if kernel.support_halfwidth == 0:
        return a * (kernel.weights[0] * kernel.dz)
    if a.ndim == 1:
        return _kernels.conv_z(np.ascontiguousarray(a[None, :]), kernel.weights, kernel.dz)[0]
    return _kernels.conv_z(np.ascontiguousarray(a), kernel.weights, kernel.dz)


def mollify(f, kernel: MollifierKernel, times: int = 1):
    """``Lambda_kappa`` applied ``times`` times (two passes for Lambda^2)."""
    per = f.periodic_part
    for _ in range(times):
        per = _conv(per, kernel)
    if isinstance(f, BoundaryFunction):
        return BoundaryFunction(f.grid, per + f.zslope * f.grid.z, f.zslope)
    vals = per + f.zslope * f.grid.z[None, :] if f.zslope else per
    return ScalarField(f.grid, vals, f.parity, f.zslope)


def commutator(h: BoundaryFunction, g: BoundaryFunction, kernel: MollifierKernel) -> BoundaryFunction:
    """``[Lambda_kappa, h] g = Lambda(h g) - h Lambda(g)``."""
    return mollify(h * g, kernel) - h * mollify(g, kernel)


def commutator_ratios(h: BoundaryFunction, g: BoundaryFunction, kernel: MollifierKernel) -> dict:
    """Empirical ratios for the two commutator bounds.

    ``es0``: |[L, h] g|_0 / (|h|_inf |g|_0)
    ``es1``: |[L, h] d_z g|_0 / (|h|_{W^{1,inf}} |g|_0)
    """
    g0 = boundary_norm(g, 0)
    c0 = boundary_norm(commutator(h, g, kernel), 0)
    c1 = boundary_norm(commutator(h, d_z(g), kernel), 0)
    return {
        "es0": c0 / (boundary_sup(h, 0) * g0),
        "es1": c1 / (boundary_sup(h, 1) * g0),
    }
