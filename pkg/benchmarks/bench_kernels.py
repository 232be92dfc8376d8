"""Time the compiled and numpy render kernels on the desk scene.

    python benchmarks/bench_kernels.py [--size 64] [--gaussians 12 48 192] [--repeat 5]

Prints one row per (kernel, pass, scene size) with the best-of-repeat time
and the speedup of the compiled kernel over numpy.
"""

import argparse
import timeit

import numpy as np

from spectrack import backend
from spectrack.grid import make_coordinate_field
from spectrack.harness.scenes import desk_scene
from spectrack.splat import render, render_backward


def bench(size, gaussians, repeat):
    field = make_coordinate_field(size, size)
    rng = np.random.default_rng(0)
    adj_i, adj_o = rng.normal(size=(size, size)), rng.normal(size=(size, size))
    rows = []
    for n in gaussians:
        scene = desk_scene(n)
        for name, k in sorted(backend.available().items()):
            fwd = min(timeit.repeat(lambda: render(scene, field, kernels=k), number=10, repeat=repeat)) / 10
            bwd = min(timeit.repeat(lambda: render_backward(scene, field, adj_i, adj_o, kernels=k),
                                    number=10, repeat=repeat)) / 10
            rows.append((name, n, fwd, bwd))
    return rows


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--gaussians", type=int, nargs="+", default=[12, 48, 192])
    p.add_argument("--repeat", type=int, default=5)
    args = p.parse_args(argv)
    rows = bench(args.size, args.gaussians, args.repeat)
    base = {(n, "fwd"): f for name, n, f, _ in rows if name == "numpy"}
    base.update({(n, "bwd"): b for name, n, _, b in rows if name == "numpy"})
    print(f"{'kernel':8s} {'gaussians':>9s} {'forward ms':>11s} {'backward ms':>12s} {'speedup f/b':>12s}")
    for name, n, f, b in rows:
        speed = f"{base[(n, 'fwd')] / f:5.1f}/{base[(n, 'bwd')] / b:.1f}"
        print(f"{name:8s} {n:9d} {f * 1e3:11.3f} {b * 1e3:12.3f} {speed:>12s}")


if __name__ == "__main__":
    main()
