"""Hot stencil kernels.

Every kernel has two implementations: an explicit-loop version that numba
compiles (``*_loop``) and a vectorized numpy version (``*_np``).  The public
names at the bottom pick one according to :mod:`axmhd._accel`.  Arrays are
``(Nr, Nz)`` with ``r`` along axis 0 and periodic ``z`` along axis 1.
"""

import numpy as np

from ._accel import USE_NUMBA, njit

# ---------------------------------------------------------------------------
# radial first derivative, 2nd order
#   axis_sign = +1 / -1 : reflection ghost f(-r0) = axis_sign * f(r0)
#   axis_sign = 0       : one-sided closure at i = 0
# Closures use the central stencil with a quartic-extrapolated ghost, so the
# truncation error stays smooth up to the wall and repeated derivatives do
# not amplify a jump there (needs Nr >= 6, else a plain one-sided formula).
# ---------------------------------------------------------------------------


def d_r_np(f, dr, axis_sign):
    out = np.empty_like(f)
    out[1:-1] = (f[2:] - f[:-2]) / (2.0 * dr)
    wide = f.shape[0] >= 6
    if axis_sign == 0:
        if wide:
            out[0] = (-f[4] + 5.0 * f[3] - 10.0 * f[2] + 11.0 * f[1] - 5.0 * f[0]) / (2.0 * dr)
        else:
            out[0] = (-3.0 * f[0] + 4.0 * f[1] - f[2]) / (2.0 * dr)
    else:
        out[0] = (f[1] - axis_sign * f[0]) / (2.0 * dr)
    if wide:
        out[-1] = (5.0 * f[-1] - 11.0 * f[-2] + 10.0 * f[-3] - 5.0 * f[-4] + f[-5]) / (2.0 * dr)
    else:
        out[-1] = (3.0 * f[-1] - 4.0 * f[-2] + f[-3]) / (2.0 * dr)
    return out


@njit(cache=True)
def d_r_loop(f, dr, axis_sign):
    nr, nz = f.shape
    out = np.empty_like(f)
    c = 1.0 / (2.0 * dr)
    for j in range(nz):
        if axis_sign == 0:
            if nr >= 6:
                out[0, j] = (-f[4, j] + 5.0 * f[3, j] - 10.0 * f[2, j] + 11.0 * f[1, j] - 5.0 * f[0, j]) * c
            else:
                out[0, j] = (-3.0 * f[0, j] + 4.0 * f[1, j] - f[2, j]) * c
        else:
            out[0, j] = (f[1, j] - axis_sign * f[0, j]) * c
        for i in range(1, nr - 1):
            out[i, j] = (f[i + 1, j] - f[i - 1, j]) * c
        if nr >= 6:
            out[nr - 1, j] = (5.0 * f[nr - 1, j] - 11.0 * f[nr - 2, j] + 10.0 * f[nr - 3, j]
                              - 5.0 * f[nr - 4, j] + f[nr - 5, j]) * c
        else:
            out[nr - 1, j] = (3.0 * f[nr - 1, j] - 4.0 * f[nr - 2, j] + f[nr - 3, j]) * c
    return out


# ---------------------------------------------------------------------------
# periodic axial first derivative, 4th order (5-point)
# ---------------------------------------------------------------------------


def d_z_np(f, dz):
    return (
        -np.roll(f, -2, axis=-1)
        + 8.0 * np.roll(f, -1, axis=-1)
        - 8.0 * np.roll(f, 1, axis=-1)
        + np.roll(f, 2, axis=-1)
    ) / (12.0 * dz)


@njit(cache=True)
def d_z_loop(f, dz):
    nr, nz = f.shape
    out = np.empty_like(f)
    c = 1.0 / (12.0 * dz)
    for i in range(nr):
        for j in range(nz):
            jp1 = (j + 1) % nz
            jp2 = (j + 2) % nz
            jm1 = (j - 1) % nz
            jm2 = (j - 2) % nz
            out[i, j] = (-f[i, jp2] + 8.0 * f[i, jp1] - 8.0 * f[i, jm1] + f[i, jm2]) * c
    return out


# ---------------------------------------------------------------------------
# periodic convolution along z with an even kernel of half-width m
#   out[j] = sum_k w[k + m] * f[j - k] * dz
# ---------------------------------------------------------------------------


def conv_z_np(f, w, dz):
    m = (w.size - 1) // 2
    out = np.zeros_like(f)
    for k in range(-m, m + 1):
        out += w[k + m] * np.roll(f, k, axis=-1)
    return out * dz


@njit(cache=True)
def conv_z_loop(f, w, dz):
    nr, nz = f.shape
    m = (w.size - 1) // 2
    out = np.zeros_like(f)
    for i in range(nr):
        for j in range(nz):
            acc = 0.0
            for k in range(-m, m + 1):
                acc += w[k + m] * f[i, (j - k) % nz]
            out[i, j] = acc * dz
    return out


# ---------------------------------------------------------------------------
# variable-coefficient operator  q -> sum_faces (K grad q) . n  (negated)
#
# krr_face : (Nr+1, Nz)  K_rr on r-faces i-1/2, i = 0..Nr (face Nr is r = R0)
# kzz_face : (Nr, Nz)    K_zz on z-faces j+1/2
# krz_corner : (Nr+1, Nz) K_rz on corners (i-1/2, j+1/2); rows 0 and Nr unused
#
# The quadratic form is
#   sum_rfaces krr (dq_r)^2 dr dz + sum_zfaces kzz (dq_z)^2 dr dz
#   + 2 sum_interior_corners krz <dq_r>_c <dq_z>_c dr dz
# with homogeneous Dirichlet ghost q_Nr = -q_{Nr-1} at r = R0.  Returned as
# COO triplets of the symmetric positive matrix of that form.
# ---------------------------------------------------------------------------


@njit(cache=True)
def pressure_triplets_loop(krr_face, kzz_face, krz_corner, dr, dz):
    nr, nz = kzz_face.shape
    cap = nr * nz * 24  # 8 face entries + 16 corner entries per cell
    rows = np.empty(cap, dtype=np.int64)
    cols = np.empty(cap, dtype=np.int64)
    vals = np.empty(cap, dtype=np.float64)
    n = 0
    ar = dz / dr
    az = dr / dz
    for i in range(nr):
        for j in range(nz):
            p = i * nz + j
            # r-faces: interior faces i+1/2 between i and i+1
            if i + 1 < nr:
                k = krr_face[i + 1, j] * ar
                q = (i + 1) * nz + j
                rows[n] = p; cols[n] = p; vals[n] = k; n += 1
                rows[n] = q; cols[n] = q; vals[n] = k; n += 1
                rows[n] = p; cols[n] = q; vals[n] = -k; n += 1
                rows[n] = q; cols[n] = p; vals[n] = -k; n += 1
            else:
                # Dirichlet face at R0: (q_ghost - q)/dr = -2 q/dr
                k = krr_face[nr, j] * ar
                rows[n] = p; cols[n] = p; vals[n] = 2.0 * k; n += 1
            # z-face j+1/2 (periodic)
            jp = (j + 1) % nz
            k = kzz_face[i, j] * az
            q = i * nz + jp
            rows[n] = p; cols[n] = p; vals[n] = k; n += 1
            rows[n] = q; cols[n] = q; vals[n] = k; n += 1
            rows[n] = p; cols[n] = q; vals[n] = -k; n += 1
            rows[n] = q; cols[n] = p; vals[n] = -k; n += 1
    # cross terms on interior corners (i+1/2, j+1/2), i = 0..nr-2
    # <dq_r>_c = (q[i+1,j] + q[i+1,jp] - q[i,j] - q[i,jp]) / (2 dr)
    # <dq_z>_c = (q[i,jp] + q[i+1,jp] - q[i,j] - q[i+1,j]) / (2 dz)
    for i in range(nr - 1):
        for j in range(nz):
            kc = krz_corner[i + 1, j]
            if kc == 0.0:
                continue
            jp = (j + 1) % nz
            a0 = i * nz + j
            a1 = (i + 1) * nz + j
            a2 = i * nz + jp
            a3 = (i + 1) * nz + jp
            # gradient weights (already scaled by 1/2)
            gr0 = -0.5; gr1 = 0.5; gr2 = -0.5; gr3 = 0.5
            gz0 = -0.5; gz1 = -0.5; gz2 = 0.5; gz3 = 0.5
            ids = (a0, a1, a2, a3)
            grs = (gr0, gr1, gr2, gr3)
            gzs = (gz0, gz1, gz2, gz3)
            # 2 krz (gr.q/dr)(gz.q/dz) dr dz  ->  matrix krz (gr gz^T + gz gr^T)
            for s in range(4):
                for t in range(4):
                    rows[n] = ids[s]
                    cols[n] = ids[t]
                    vals[n] = kc * (grs[s] * gzs[t] + gzs[s] * grs[t])
                    n += 1
    return rows[:n], cols[:n], vals[:n]


def pressure_triplets_np(krr_face, kzz_face, krz_corner, dr, dz):
    nr, nz = kzz_face.shape
    ii, jj = np.meshgrid(np.arange(nr), np.arange(nz), indexing="ij")
    p = ii * nz + jj
    ar = dz / dr
    az = dr / dz
    rows, cols, vals = [], [], []

    def add(r, c, v):
        rows.append(r.ravel())
        cols.append(c.ravel())
        vals.append(v.ravel())

    # interior r-faces
    k = krr_face[1:nr] * ar
    pa = p[:-1]
    pb = p[1:]
    add(pa, pa, k)
    add(pb, pb, k)
    add(pa, pb, -k)
    add(pb, pa, -k)
    # Dirichlet face
    add(p[-1], p[-1], 2.0 * krr_face[nr] * ar)
    # z-faces
    k = kzz_face * az
    pq = np.roll(p, -1, axis=1)
    add(p, p, k)
    add(pq, pq, k)
    add(p, pq, -k)
    add(pq, p, -k)
    # corners
    kc = krz_corner[1:nr]
    a0 = p[:-1]
    a1 = p[1:]
    a2 = np.roll(p, -1, axis=1)[:-1]
    a3 = np.roll(p, -1, axis=1)[1:]
    ids = (a0, a1, a2, a3)
    grs = (-0.5, 0.5, -0.5, 0.5)
    gzs = (-0.5, -0.5, 0.5, 0.5)
    for s in range(4):
        for t in range(4):
            add(ids[s], ids[t], kc * (grs[s] * gzs[t] + gzs[s] * grs[t]))
    return np.concatenate(rows), np.concatenate(cols), np.concatenate(vals)


if USE_NUMBA:
    d_r = d_r_loop
    d_z = d_z_loop
    conv_z = conv_z_loop
    pressure_triplets = pressure_triplets_loop
else:
    d_r = d_r_np
    d_z = d_z_np
    conv_z = conv_z_np
    pressure_triplets = pressure_triplets_np
