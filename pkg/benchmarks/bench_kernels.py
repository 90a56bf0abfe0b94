"""Time the compiled model kernels against their numpy versions.

Usage::

    python3 benchmarks/bench_kernels.py [--repeat 200] [--json out.json]

Each kernel is called once before timing so numba compilation is excluded.
Both variants are also checked to agree to 1e-12 on the benchmark inputs.
"""

from __future__ import annotations

import argparse
import json
import sys
import timeit

import numpy as np

from trfunnel import _kernels as K
from trfunnel._accel import HAVE_NUMBA


def cases(rng):
    for n, m in ((4, 15), (6, 28), (10, 66)):
        U = rng.uniform(-1, 1, size=(m, n))
        u = U[0].copy()
        for code, label in ((K.LINEAR, "linear"), (K.QUADRATIC, "quadratic"), (K.SIMPLE_QUADRATIC, "simple_quadratic")):
            yield f"poly_features/{label}/n={n}", (K.poly_features_numpy, K.poly_features_numba), (U, code)
            yield f"poly_jacobian/{label}/n={n}", (K.poly_jacobian_numpy, K.poly_jacobian_numba), (u, code)
        yield f"se_kernel/n={n},m={m}", (K.se_kernel_numpy, K.se_kernel_numba), (U, U)
        yield f"se_kernel_grad/n={n},m={m}", (K.se_kernel_grad_numpy, K.se_kernel_grad_numba), (u, U)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=200)
    ap.add_argument("--json", help="write results to this file")
    args = ap.parse_args(argv)
    if not HAVE_NUMBA:
        print("numba is not installed; nothing to compare", file=sys.stderr)
        return 1
    rng = np.random.default_rng(0)
    rows = []
    print(f"{'kernel':42s} {'numpy [us]':>11s} {'numba [us]':>11s} {'speedup':>8s}")
    for name, (f_np, f_nb), inputs in cases(rng):
        a, b = f_np(*inputs), f_nb(*inputs)
        if not np.allclose(a, b, rtol=1e-12, atol=1e-12):
            raise AssertionError(f"{name}: numpy and numba results differ")
        t_np = min(timeit.repeat(lambda: f_np(*inputs), number=args.repeat, repeat=3)) / args.repeat
        t_nb = min(timeit.repeat(lambda: f_nb(*inputs), number=args.repeat, repeat=3)) / args.repeat
        rows.append({"kernel": name, "numpy_s": t_np, "numba_s": t_nb, "speedup": t_np / t_nb})
        print(f"{name:42s} {t_np * 1e6:11.2f} {t_nb * 1e6:11.2f} {t_np / t_nb:8.2f}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rows, fh, indent=2)
    return 0


if __name__ == "__main__":
    sys.exit(main())
