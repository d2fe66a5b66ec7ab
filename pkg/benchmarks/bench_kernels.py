"""Compare the compiled and numpy secular-determinant kernels.

    python3 benchmarks/bench_kernels.py [--rows 200000] [--repeat 3]

Also times a full spectrum scan with each backend (the backend is chosen at
import, so the scan runs in a subprocess with NODAL_SURPLUS_PURE_PYTHON set).
"""

import argparse
import os
import subprocess
import sys
import time

import numpy as np

from nodal_surplus import _kernels_py
from nodal_surplus.builtins import builtin
from nodal_surplus.secular import bond_scattering_matrix

try:
    from nodal_surplus import _ckernels
except ImportError:
    _ckernels = None

SCAN = (
    "import time;from nodal_surplus.builtins import builtin;"
    "from nodal_surplus.spectrum import SpectralScanConfig, scan_spectrum;"
    "from nodal_surplus import kernels;t=time.perf_counter();"
    "scan_spectrum(builtin('{g}'), SpectralScanConfig(N={n}));"
    "print(kernels.BACKEND, time.perf_counter()-t)"
)


def best(fn, repeat):
    ts = []
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        ts.append(time.perf_counter() - t)
    return min(ts), out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--rows", type=int, default=200_000)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--scan-N", type=int, default=5000)
    args = ap.parse_args()
    rng = np.random.default_rng(0)

    print(f"{'graph':10s} {'2E':>3s} {'python [s]':>11s} {'cython [s]':>11s} {'speedup':>8s} {'max diff':>9s}")
    for name in ("figure8", "dumbbell", "chain1221", "chain321"):
        S = np.ascontiguousarray(bond_scattering_matrix(builtin(name)))
        ph = np.ascontiguousarray(rng.uniform(0, 2 * np.pi, (args.rows, S.shape[0])))
        tp, fp = best(lambda: _kernels_py.secular_det(S, ph), args.repeat)
        if _ckernels is None:
            print(f"{name:10s} {S.shape[0]:3d} {tp:11.4f} {'n/a':>11s}")
            continue
        tc, fc = best(lambda: _ckernels.secular_det(S, ph), args.repeat)
        diff = np.max(np.abs(fp - fc))
        print(f"{name:10s} {S.shape[0]:3d} {tp:11.4f} {tc:11.4f} {tp / tc:8.2f} {diff:9.1e}")

    print(f"\nfull scan, N={args.scan_N}")
    for name in ("dumbbell", "chain321"):
        for pure in ("0", "1"):
            env = dict(os.environ, NODAL_SURPLUS_PURE_PYTHON=pure)
            out = subprocess.run([sys.executable, "-c", SCAN.format(g=name, n=args.scan_N)],
                                 env=env, capture_output=True, text=True, check=True).stdout.split()
            print(f"{name:10s} {out[0]:7s} {float(out[1]):8.2f} s")


if __name__ == "__main__":
    main()
