"""The compiled loops and the numpy fallback must agree."""

import os
import subprocess
import sys

import numpy as np
import pytest

from axmhd import _kernels
from axmhd._accel import USE_NUMBA


@pytest.fixture
def arrays(rng):
    n = 24
    return dict(
        f=rng.normal(size=(n, n + 4)),
        kf=np.abs(rng.normal(size=(n + 1, n + 4))) + 1.0,
        kz=np.abs(rng.normal(size=(n, n + 4))) + 1.0,
        kc=0.1 * rng.normal(size=(n + 1, n + 4)),
    )


@pytest.mark.parametrize("sign", [1.0, -1.0, 0.0])
def test_d_r_equivalent(arrays, sign):
    f = arrays["f"]
    assert np.allclose(_kernels.d_r_loop(f, 0.1, sign), _kernels.d_r_np(f, 0.1, sign), rtol=0, atol=1e-12)


def test_d_r_short_grid_equivalent(rng):
    f = rng.normal(size=(4, 8))
    assert np.allclose(_kernels.d_r_loop(f, 0.1, 0.0), _kernels.d_r_np(f, 0.1, 0.0), atol=1e-12)


def test_d_z_equivalent(arrays):
    f = arrays["f"]
    assert np.allclose(_kernels.d_z_loop(f, 0.1), _kernels.d_z_np(f, 0.1), atol=1e-12)


def test_conv_equivalent(arrays):
    f = arrays["f"]
    w = np.hanning(9)
    assert np.allclose(_kernels.conv_z_loop(f, w, 0.1), _kernels.conv_z_np(f, w, 0.1), atol=1e-12)


def test_pressure_triplets_equivalent(arrays):
    import scipy.sparse as sp

    n, m = arrays["kz"].shape
    mats = []
    for fn in (_kernels.pressure_triplets_loop, _kernels.pressure_triplets_np):
        r, c, v = fn(arrays["kf"], arrays["kz"], arrays["kc"], 0.1, 0.2)
        mats.append(sp.coo_matrix((v, (r, c)), shape=(n * m, n * m)).tocsr())
    assert abs(mats[0] - mats[1]).max() < 1e-12


def test_dispatch_follows_flag():
    assert (_kernels.d_r is _kernels.d_r_loop) == USE_NUMBA


@pytest.mark.skipif(not USE_NUMBA, reason="numba path not active")
def test_full_rhs_identical_across_paths():
    code = (
        "import numpy as np;from axmhd import Grid;from axmhd.dynamics import rhs;"
        "from axmhd.initial_data import preset;from axmhd.mollifier import build_kernel;"
        "g=Grid(24,24);k=build_kernel(4*g.dz,g);t=rhs(preset('perturbed',g,eps=0.05).to_state(),k);"
        "import sys;sys.stdout.buffer.write(np.stack([t.dvr.values,t.dvz.values,t.q.values]).tobytes())"
    )
    outs = []
    for flag in ("0", "1"):
        env = dict(os.environ, AXMHD_DISABLE_NUMBA=flag)
        res = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, check=True)
        outs.append(np.frombuffer(res.stdout, dtype=float))
    assert np.allclose(outs[0], outs[1], rtol=0, atol=1e-11)
