"""Compiled vs pure-Python propagation kernels.

Times one generator application and one RK4 step for each preset and prints
a table (optionally a CSV).  Run from the repository root::

    python benchmarks/bench_kernels.py --repeat 5 --csv bench_kernels.csv
"""
from __future__ import annotations

import argparse
import csv
import sys
import timeit

import numpy as np

from lindblad_krylov import models
from lindblad_krylov.kernels import BACKENDS, make_kernel
from lindblad_krylov.operators import random_density_matrix

CASES = [
    ("dimer-fig3", None),
    ("floquet-fig8", None),
    ("trimer-fig5", 5),
    ("tc-dimer-fig6", 15),
]


def best_of(fn, repeat, number):
    return min(timeit.repeat(fn, repeat=repeat, number=number)) / number


def bench(repeat: int, quick: bool):
    rows = []
    for name, size in CASES:
        model = models.preset(name, size)
        rho = np.asarray(random_density_matrix(model.dim, 0))
        number = max(1, int(2e5 / model.dim ** 2)) if not quick else 1
        for backend in BACKENDS:
            k = make_kernel(model, backend)
            t_rhs = best_of(lambda: k.rhs(rho, 0.3), repeat, number)
            t_step = best_of(lambda: k.rk4(rho, 0.0, 1e-4, 1), repeat, number)
            rows.append({"model": name, "dim": model.dim, "backend": backend,
                         "rhs_ms": 1e3 * t_rhs, "rk4_step_ms": 1e3 * t_step})
    return rows


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=3)
    p.add_argument("--quick", action="store_true", help="one call per timing")
    p.add_argument("--csv")
    args = p.parse_args(argv)
    if "compiled" not in BACKENDS:
        print("compiled extension not available; timing the fallback only", file=sys.stderr)
    rows = bench(args.repeat, args.quick)
    ref = {(r["model"]): r["rk4_step_ms"] for r in rows if r["backend"] == "python"}
    print(f"{'model':>14} {'dim':>4} {'backend':>9} {'rhs ms':>9} {'rk4 ms':>9} {'speed-up':>8}")
    for r in rows:
        print(f"{r['model']:>14} {r['dim']:>4} {r['backend']:>9} {r['rhs_ms']:9.3f} "
              f"{r['rk4_step_ms']:9.3f} {ref[r['model']] / r['rk4_step_ms']:8.1f}")
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(rows[0]))
            w.writeheader()
            w.writerows(rows)


if __name__ == "__main__":
    main()
