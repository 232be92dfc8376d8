"""Command-line entry point: ``spectrack <subcommand> [--config PATH] [--seed N] [--out DIR] [--threads N]``."""

from __future__ import annotations

import os

# one BLAS thread keeps reductions in a fixed order; must precede the numpy import
for _var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(_var, "1")

import argparse  # noqa: E402
import math  # noqa: E402
import sys  # noqa: E402
from pathlib import Path  # noqa: E402

from .. import backend  # noqa: E402
from .config import EXPERIMENTS, ConfigError, config_to_text, make_config  # noqa: E402
from . import experiments as ex  # noqa: E402
from .gradcheck import grad_check  # noqa: E402


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="spectrack", description="Spectral-moment tracking experiments.")
    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("--config", type=Path, default=None, help="key = value config file")
    shared.add_argument("--seed", type=int, default=None, help="overrides shift_seed")
    shared.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    shared.add_argument("--threads", type=int, default=1, help="worker processes for sweeps")
    sub = p.add_subparsers(dest="command", required=True)
    for name in EXPERIMENTS:
        sub.add_parser(name, parents=[shared])
    return p


def _fail(msg: str) -> int:
    print(f"FAIL: {msg}", file=sys.stderr)
    return 1


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    if args.threads < 1:
        return _fail("--threads must be >= 1")
    try:
        cfg = make_config(args.command, path=args.config, seed=args.seed)
    except (ConfigError, OSError) as exc:
        return _fail(f"config: {exc}")
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    (out / "config_resolved.txt").write_text(config_to_text(cfg))
    print(f"backend: {backend.NAME}")

    cmd = args.command
    if cmd == "demo1d":
        summary = ex.demo_1d(cfg, out)
        for name, s in summary.items():
            print(f"{name}: final theta {s['final_theta']:.6g}, |error| {s['final_error']:.3g}")
        products = summary["annealed"]["max_phase_product"]
        if not products < math.pi:
            return _fail(f"phase-wrap product {products:.6g} reached pi in the annealed run")
    elif cmd == "demo2d":
        summary = ex.demo_2d(cfg, out)
        for m in ("pixel", "spectral"):
            s = summary[m]
            print(f"{m}: translation error {s['final_translation_error_px']:.4g} px, "
                  f"rotation error {s['final_rotation_error_deg']:.4g} deg")
    elif cmd == "landscape":
        ex.run_landscapes(cfg, out)
        print(f"wrote landscapes to {out}")
    elif cmd == "sweep":
        rows = ex.sweep_shift(cfg, out=out, threads=args.threads)
        for r in rows:
            print(f"radius {r['radius']:.3g} {r['method']}: error {r['final_param_error']:.4g}, "
                  f"PSNR {r['final_psnr']:.4g} dB")
    elif cmd == "gradcheck":
        report = grad_check(cfg, out=out / "gradcheck.csv")
        for k, e in report.errors.items():
            print(f"{k}: max relative error {e:.3e} (tolerance {report.tolerances[k]:.0e})")
        if not report.ok:
            return _fail("gradcheck component(s) out of tolerance: " + ", ".join(report.failures))
    elif cmd == "schedule-plot":
        ex.schedule_plot(cfg, out)
        print(f"wrote schedule to {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
