"""End-to-end acceptance checks, one test per criterion.

Each test records a single PASS/FAIL line (shown in the terminal summary)
before asserting, so a failing criterion still reports what it measured.
"""

import math
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from spectrack.anneal import AnnealConfig, band_weight, state_at
from spectrack.grid import Image, make_coordinate_field
from spectrack.harness.cli import main
from spectrack.harness.config import make_config
from spectrack.harness.experiments import (demo_1d, demo_2d, geometric_decay_run, local_minima, pulse_landscapes,
                                           sweep_shift)
from spectrack.harness.gradcheck import grad_check
from spectrack.objective import spectral_image_loss
from spectrack.spectral import (LINEAR, LOG, FrequencyGrid, build_frequency_grid, circular_shift_theorem_check,
                                closed_form_shift_loss, compute_moments, max_active_omega_norm,
                                spatial_l2_via_spectrum)


def report(n, ok, detail):
    line = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES[n] = line
    print(line)
    assert ok, line


@pytest.fixture(scope="module")
def demo1d(tmp_path_factory):
    cfg = make_config("demo1d")
    return cfg, demo_1d(cfg, tmp_path_factory.mktemp("demo1d"))


def test_01_vanishing_gradient(demo1d):
    _, s = demo1d
    r = s["spatial_l2"]
    ok = r["initial_grad_norm"] < 1e-10 and r["final_error"] > 5.5 and r["runtime_s"] < 5.0
    report(1, ok, f"spatial L2: |grad| at theta0 {r['initial_grad_norm']:.3g}, final |error| "
                  f"{r['final_error']:.4g}, {r['runtime_s']:.2f} s")


def test_02_static_high_frequency_trap(demo1d):
    cfg, s = demo1d
    r = s["static_high"]
    th, v = pulse_landscapes(cfg)["static_high"]
    mins = th[local_minima(v)]
    false_mins = mins[(mins > 0.05) & (mins <= cfg.theta0)]
    stationary = r["final_grad_norm"] < 1e-8 * max(1.0, r["initial_grad_norm"])
    ok = r["final_error"] > 0.3 and stationary and len(false_mins) >= 3
    report(2, ok, f"static k={cfg.static_index}: final |error| {r['final_error']:.4g}, final |grad| "
                  f"{r['final_grad_norm']:.2g}, {len(false_mins)} false minima in (0, {cfg.theta0:g}]")


def test_03_annealed_recovery(demo1d):
    _, s = demo1d
    r = s["annealed"]
    ok = r["final_error"] < 1e-2 and r["max_phase_product"] < math.pi and r["runtime_s"] < 10.0
    report(3, ok, f"annealed: final |error| {r['final_error']:.3g}, max phase product "
                  f"{r['max_phase_product']:.4f} < pi, {r['runtime_s']:.2f} s")


def test_04_demo_2d(tmp_path):
    cfg = make_config("demo2d")
    start = time.perf_counter()
    s = demo_2d(cfg, tmp_path)
    elapsed = time.perf_counter() - start
    sp, px = s["spectral"], s["pixel"]
    ok = (s["initial_overlap_pixels"] == 0 and sp["final_translation_error_px"] < 2.0
          and sp["final_rotation_error_deg"] < 2.0
          and px["final_translation_error_px"] > 0.5 * px["initial_translation_error_px"] and elapsed < 60.0)
    report(4, ok, f"2D: overlap {s['initial_overlap_pixels']} px; spectral {sp['final_translation_error_px']:.3g} px"
                  f" / {sp['final_rotation_error_deg']:.3g} deg; pixel {px['final_translation_error_px']:.3g} of "
                  f"{px['initial_translation_error_px']:.3g} px; {elapsed:.1f} s")


def test_05_closed_form_landscape():
    rng = np.random.default_rng(5)
    worst = 0.0
    for _ in range(60):
        w, h = (int(x) for x in rng.integers(4, 17, 2))
        field = make_coordinate_field(w, h)
        base = rng.uniform(0, 1, (h, w))
        sx, sy = int(rng.integers(-w, w + 1)), int(rng.integers(-h, h + 1))
        gt = np.roll(base, (sy, sx), axis=(0, 1))
        grid = FrequencyGrid.from_indices([(int(rng.integers(0, w)), int(rng.integers(0, h)))], math.pi)
        mag = abs(compute_moments(gt, grid, field).values[0])
        d = [2.0 * sx / w, 2.0 * sy / h]
        # the squared metric sums |dM|^2, which is twice the compact form
        loss = spectral_image_loss(Image(base), Image(gt), grid, field, [1.0], 0.0, "squared").value
        worst = max(worst, abs(0.5 * loss - closed_form_shift_loss(mag, grid.omega[0], d)))
    report(5, worst < 1e-10, f"closed form: max |0.5 |dM|^2 - |M|^2(1 - cos)| = {worst:.2g} over 60 triples")


def test_06_shift_theorem():
    rng = np.random.default_rng(6)
    worst = max(circular_shift_theorem_check(rng.uniform(0, 1, (8, 8)), rng.integers(-8, 9, 2)) for _ in range(25))
    report(6, worst < 1e-10, f"shift theorem: max deviation {worst:.2g} over 25 random 8x8 cases")


def test_07_parseval():
    rng = np.random.default_rng(7)
    sizes = [(64, 64), (1, 1), (1, 64)] + [tuple(int(x) for x in rng.integers(1, 65, 2)) for _ in range(19)]
    worst = 0.0
    for w, h in sizes:
        a, b = rng.normal(size=(h, w)), rng.normal(size=(h, w))
        direct = float(np.sum((a - b) ** 2))
        worst = max(worst, abs(spatial_l2_via_spectrum(a, b) - direct) / direct)
    report(7, worst < 1e-8, f"Parseval: max relative error {worst:.2g} over {len(sizes)} pairs up to 64x64")


def test_08_gradient_batteries():
    cfg = make_config("gradcheck")
    rep = grad_check(cfg)
    detail = ", ".join(f"{k} {e:.1e}/{rep.tolerances[k]:.0e}" for k, e in rep.errors.items())
    ok = rep.ok and cfg.gradcheck_instances >= 100 and all(t <= 1e-4 for t in rep.tolerances.values())
    report(8, ok, f"gradients ({cfg.gradcheck_instances} instances each): {detail}")


def test_09_geometric_decay():
    cfg = make_config("demo1d")
    run = geometric_decay_run(cfg)
    ratios, errors, gamma = run["ratios"][:20], run["errors"][:21], run["gamma"]
    t = np.arange(len(errors))
    slope, icept = np.polyfit(t, np.log(errors), 1)
    resid = np.log(errors) - (slope * t + icept)
    r2 = 1.0 - np.sum(resid ** 2) / np.sum((np.log(errors) - np.log(errors).mean()) ** 2)
    spread = float(ratios.max() - ratios.min())
    dev = float(np.max(np.abs(ratios - gamma)))
    ok = spread < 1e-3 and dev < 1e-3 and r2 > 0.999
    report(9, ok, f"GD decay: gamma {gamma:.6f}, ratio spread {spread:.2g}, |ratio - gamma| {dev:.2g}, R^2 {r2:.6f}")


def test_10_schedule():
    exact = (band_weight(3.0, 3) == 0.0 and band_weight(4.0, 3) == 1.0
             and band_weight(3.5, 3) == (1.0 - math.cos(math.pi * 0.5)) / 2.0
             and abs(band_weight(3.5, 3) - 0.5) < 1e-15)
    k = 6
    cfg = AnnealConfig(k, 1000, 0.25)
    lin = build_frequency_grid(k, banding_mode=LINEAR)
    log = build_frequency_grid(k, banding_mode=LOG)
    s = lin.phase_scale * math.sqrt(2.0)
    growth = True
    for t in range(0, 1001, 10):
        st = state_at(cfg, t)
        top = math.ceil(st.alpha) - 1   # highest band with positive weight
        growth &= max_active_omega_norm(lin, st.band_weights) == pytest.approx(s * (top + 1), rel=1e-12)
        growth &= max_active_omega_norm(log, st.band_weights) == pytest.approx(s * 2 ** top, rel=1e-12)
        growth &= max_active_omega_norm(lin, st.band_weights) <= s * (st.alpha + 1.0)
    full = np.ones(k)
    growth &= max_active_omega_norm(lin, full) < max_active_omega_norm(log, full)
    report(10, exact and growth, f"schedule: boundary weights exact {exact}; linear ~ ceil(alpha), "
                                 f"log ~ 2^(ceil(alpha)-1) for K={k}: {growth}")


def test_11_shift_sweep(tmp_path):
    parts, ok = [], True
    for seed in (0, 1, 2):
        cfg = make_config("sweep", seed=seed)
        start = time.perf_counter()
        rows = sweep_shift(cfg, out=tmp_path / f"seed{seed}")
        elapsed = time.perf_counter() - start
        pix = sorted((r for r in rows if r["method"] == "pixel"), key=lambda r: r["radius"])
        pe = [r["final_param_error"] for r in pix]
        monotone = all(b >= a for a, b in zip(pe, pe[1:]))
        far = [r for r in rows if r["method"] == "ours" and r["initial_overlap"] == 0 and r["radius"] > 0]
        bounded = bool(far) and all(r["final_param_error"] < 0.05 * r["radius"] for r in far)
        aligned = all(r["final_psnr"] >= 40.0 for r in rows if r["radius"] == 0.0)
        worst = max((r["final_param_error"] / r["radius"] for r in far), default=float("nan"))
        ok &= monotone and bounded and aligned and elapsed < 600.0
        parts.append(f"seed {seed}: pixel {'/'.join(f'{e:.2f}' for e in pe)}, ours/r <= {worst:.1g} "
                     f"on {len(far)} zero-overlap radii, {elapsed:.0f} s")
    report(11, ok, "sweep " + "; ".join(parts))


def _tree_bytes(root):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_12_determinism(tmp_path):
    small = tmp_path / "small.cfg"
    small.write_text("iterations = 300\nadd_pixel_loss = 210\narap_start_iter = 0\nframe_steps = 0, 150, 299\n"
                     "radii = 0, 0.4, 0.8\ngradcheck_instances = 5\nlandscape_samples = 101\n")
    # the 1D anneal needs its full schedule to pass its own phase-wrap check
    runs = {"demo1d": None, "demo2d": small, "landscape": small, "sweep": small, "gradcheck": small,
            "schedule-plot": small}
    diffs = []
    codes = []
    for cmd, cfgp in runs.items():
        trees = []
        for threads in (1, 2):
            out = tmp_path / f"{cmd}_{threads}"
            args = [cmd, "--seed", "3", "--out", str(out), "--threads", str(threads)]
            codes.append(main(args + (["--config", str(cfgp)] if cfgp else [])))
            trees.append(_tree_bytes(out))
        if trees[0] != trees[1] or not trees[0]:
            diffs.append(cmd)
    ok = not diffs and not any(codes)
    report(12, ok, f"determinism: {len(runs)} experiments rerun at 1 and 2 threads; differing outputs "
                   f"{diffs or 'none'}; exit codes {sorted(set(codes))}")
