"""Compare the numba kernels with the numpy fallback.

    python3 benchmarks/bench_kernels.py [--sizes 64 128 256] [--repeat 20]

Part 1 times each stencil kernel in-process (compiled loop vs vectorized
numpy).  Part 2 times one full right-hand-side evaluation in two fresh
interpreters, with and without ``AXMHD_DISABLE_NUMBA=1``.
"""

from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys
import timeit

import numpy as np

from axmhd import _kernels
from axmhd._accel import USE_NUMBA


def _best(fn, repeat: int) -> float:
    fn()  # warm-up / compile
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def kernel_table(sizes, repeat):
    rng = np.random.default_rng(0)
    rows = []
    for n in sizes:
        f = rng.normal(size=(n, n))
        w = np.hanning(17)
        kf = np.abs(rng.normal(size=(n + 1, n))) + 1.0
        kz = np.abs(rng.normal(size=(n, n))) + 1.0
        kc = 0.1 * rng.normal(size=(n + 1, n))
        cases = {
            "d_r": (lambda: _kernels.d_r_loop(f, 0.1, -1.0), lambda: _kernels.d_r_np(f, 0.1, -1.0)),
            "d_z": (lambda: _kernels.d_z_loop(f, 0.1), lambda: _kernels.d_z_np(f, 0.1)),
            "conv_z": (lambda: _kernels.conv_z_loop(f, w, 0.1), lambda: _kernels.conv_z_np(f, w, 0.1)),
            "pressure_triplets": (lambda: _kernels.pressure_triplets_loop(kf, kz, kc, 0.1, 0.1),
                                  lambda: _kernels.pressure_triplets_np(kf, kz, kc, 0.1, 0.1)),
        }
        for name, (loop, vec) in cases.items():
            t_loop, t_np = _best(loop, repeat), _best(vec, repeat)
            rows.append({"kernel": name, "n": n, "numba_s": t_loop, "numpy_s": t_np, "speedup": t_np / t_loop})
    return rows


_RHS_SNIPPET = """
import json, timeit
from axmhd import Grid
from axmhd._accel import USE_NUMBA
from axmhd.dynamics import rhs
from axmhd.initial_data import preset
from axmhd.mollifier import build_kernel
g = Grid({n}, {n})
k = build_kernel(4 * g.dz, g)
s = preset("perturbed", g).to_state()
rhs(s, k)
t = min(timeit.repeat(lambda: rhs(s, k), number=1, repeat={repeat}))
print(json.dumps({{"numba": USE_NUMBA, "seconds": t}}))
"""


def rhs_table(sizes, repeat):
    rows = []
    for n in sizes:
        out = {}
        for disable in ("0", "1"):
            env = dict(os.environ, AXMHD_DISABLE_NUMBA=disable)
            res = subprocess.run([sys.executable, "-c", _RHS_SNIPPET.format(n=n, repeat=repeat)],
                                 env=env, capture_output=True, text=True, check=True)
            d = json.loads(res.stdout.strip().splitlines()[-1])
            out["numba_s" if d["numba"] else "numpy_s"] = d["seconds"]
        out.update(n=n, speedup=out["numpy_s"] / out["numba_s"])
        rows.append(out)
    return rows


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--sizes", type=int, nargs="+", default=[64, 128, 256])
    p.add_argument("--repeat", type=int, default=20)
    p.add_argument("--rhs-repeat", type=int, default=3)
    p.add_argument("--json", action="store_true", help="emit JSON instead of a table")
    args = p.parse_args(argv)
    if not USE_NUMBA:
        print("numba disabled in this interpreter; loop kernels run as plain python", file=sys.stderr)
    kt = kernel_table(args.sizes, args.repeat)
    rt = rhs_table([s for s in args.sizes if s <= 128], args.rhs_repeat)
    if args.json:
        print(json.dumps({"kernels": kt, "rhs": rt}, indent=2))
        return
    print(f"{'kernel':<18}{'n':>5}{'numba [ms]':>12}{'numpy [ms]':>12}{'speedup':>9}")
    for r in kt:
        print(f"{r['kernel']:<18}{r['n']:>5}{1e3 * r['numba_s']:>12.3f}{1e3 * r['numpy_s']:>12.3f}{r['speedup']:>9.2f}")
    print(f"\n{'full rhs':<18}{'n':>5}{'numba [ms]':>12}{'numpy [ms]':>12}{'speedup':>9}")
    for r in rt:
        print(f"{'':<18}{r['n']:>5}{1e3 * r['numba_s']:>12.1f}{1e3 * r['numpy_s']:>12.1f}{r['speedup']:>9.2f}")


if __name__ == "__main__":
    main()
