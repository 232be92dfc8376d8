import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import BACKENDS, random_scene

BACKENDS_NAMES = [name for name, _ in BACKENDS]
from spectrack.grid import make_coordinate_field
from spectrack.splat import (Gaussian2D, InvalidPrimitiveError, Scene, eval_kernel, load_scene,
                             render, render_backward, render_with_density, save_scene)


def brute_render(scene, field, cutoff):
    """Independent per-pixel, per-primitive loop with an explicit 2x2 inverse."""
    h, w = field.height, field.width
    ch = scene.channels
    inten = np.zeros((h, w, ch))
    dens = np.zeros((h, w))
    for j in range(h):
        for i in range(w):
            px, py = field.coords[j, i]
            for n in range(len(scene)):
                (a, b), (_, c) = scene.covariances[n]
                det = a * c - b * b
                dx, dy = px - scene.means[n, 0], py - scene.means[n, 1]
                q = (c * dx * dx - 2 * b * dx * dy + a * dy * dy) / det
                if cutoff is not None and q > cutoff * cutoff:
                    continue
                g = math.exp(-0.5 * q)
                inten[j, i] += scene.amplitudes[n] * scene.opacities[n] * g
                dens[j, i] += scene.opacities[n] * g
    if ch == 1:
        inten = inten[..., 0]
    return inten, 1.0 - np.exp(-dens)


def test_kernel_at_mean_is_one():
    g = Gaussian2D([0.2, -0.1], [[0.04, 0.01], [0.01, 0.09]])
    assert eval_kernel(g, [0.2, -0.1]) == 1.0


def test_kernel_truncated_beyond_cutoff():
    g = Gaussian2D([0.0, 0.0], np.eye(2) * 0.01)
    assert eval_kernel(g, [0.5, 0.0]) == 0.0          # Mahalanobis distance 5
    assert eval_kernel(g, [0.5, 0.0], cutoff=None) == pytest.approx(math.exp(-12.5))
    assert eval_kernel(g, [0.39, 0.0]) > 0.0


def test_kernel_matches_explicit_inverse():
    rng = np.random.default_rng(5)
    for _ in range(20):
        a, c = rng.uniform(0.01, 0.2, 2)
        b = rng.uniform(-0.9, 0.9) * math.sqrt(a * c)
        mu, p = rng.uniform(-1, 1, 2), rng.uniform(-1, 1, 2)
        det = a * c - b * b
        d = p - mu
        q = (c * d[0] ** 2 - 2 * b * d[0] * d[1] + a * d[1] ** 2) / det
        assert eval_kernel(Gaussian2D(mu, [[a, b], [b, c]]), p, None) == pytest.approx(math.exp(-q / 2), rel=1e-12)


@pytest.mark.parametrize("cov", [[[1.0, 2.0], [2.0, 1.0]], [[-1.0, 0.0], [0.0, -1.0]],
                                 [[1.0, 0.1], [0.0, 1.0]], [[0.0, 0.0], [0.0, 0.0]]])
def test_invalid_covariance_rejected(cov):
    with pytest.raises(InvalidPrimitiveError):
        Gaussian2D([0, 0], cov)


def test_invalid_opacity_rejected():
    with pytest.raises(InvalidPrimitiveError):
        Gaussian2D([0, 0], np.eye(2), opacity=0.0)
    with pytest.raises(InvalidPrimitiveError):
        Scene([[0, 0]], [np.eye(2)], [1.0], [1.5])


def test_empty_scene_renders_zero(kernels):
    img = render(Scene.empty(), make_coordinate_field(5, 4), kernels=kernels)
    assert not img.intensity.any() and not img.opacity.any()
    assert img.intensity.shape == (4, 5)


def test_single_gaussian_at_pixel_center(kernels):
    field = make_coordinate_field(5, 5)   # center pixel sits at the origin
    scene = Scene([[0.0, 0.0]], [np.eye(2) * 0.02], [1.0], [1.0])
    img = render(scene, field, kernels=kernels)
    assert img.intensity[2, 2] == 1.0
    assert img.opacity[2, 2] == pytest.approx(1.0 - math.exp(-1.0), rel=1e-15)


@pytest.mark.parametrize("cutoff", [4.0, None, 1.5])
@pytest.mark.parametrize("channels", [1, 3])
def test_render_matches_brute_force(kernels, cutoff, channels):
    rng = np.random.default_rng(11)
    scene = random_scene(rng, 2, channels)
    scene = scene.replace(means=np.array([[-0.1, 0.05], [0.15, -0.05]]))   # overlapping pair
    field = make_coordinate_field(16, 16)
    img = render(scene, field, cutoff, kernels=kernels)
    inten, op = brute_render(scene, field, cutoff)
    np.testing.assert_allclose(img.intensity, inten, rtol=1e-12, atol=1e-14)
    np.testing.assert_allclose(img.opacity, op, rtol=1e-12, atol=1e-14)


def test_backends_agree(rng):
    from conftest import BACKENDS
    if len(BACKENDS) < 2:
        pytest.skip("compiled kernels not built")
    scene = random_scene(rng, 6, 3)
    field = make_coordinate_field(17, 13)
    a_i, a_o = rng.normal(size=(13, 17, 3)), rng.normal(size=(13, 17))
    outs = []
    for _, k in BACKENDS:
        img = render(scene, field, kernels=k)
        g = render_backward(scene, field, a_i, a_o, kernels=k)
        outs.append((img, g))
    (i0, g0), (i1, g1) = outs
    np.testing.assert_allclose(i0.intensity, i1.intensity, rtol=1e-13, atol=1e-15)
    for name in ("mean", "amplitude", "opacity", "covariance"):
        np.testing.assert_allclose(getattr(g0, name), getattr(g1, name), rtol=1e-11, atol=1e-13)


def test_zero_adjoint_gives_zero_gradient(kernels, rng):
    scene = random_scene(rng, 3)
    field = make_coordinate_field(8, 8)
    g = render_backward(scene, field, np.zeros((8, 8)), np.zeros((8, 8)), kernels=kernels)
    for arr in (g.mean, g.amplitude, g.opacity, g.covariance):
        assert not np.any(arr)


def test_delta_adjoint_at_mean_has_zero_mean_gradient(kernels):
    field = make_coordinate_field(7, 7)
    scene = Scene([[0.0, 0.0]], [[[0.05, 0.01], [0.01, 0.03]]], [0.7], [0.8])
    adj = np.zeros((7, 7))
    adj[3, 3] = 1.0
    g = render_backward(scene, field, adj, None, kernels=kernels)
    assert np.all(g.mean == 0.0)
    assert g.amplitude[0, 0] == pytest.approx(0.8)


def _fd_check(scene, field, a_i, a_o, kernels, h=1e-5):
    from spectrack.harness.gradcheck import _scene_from_vector, _scene_vector, central_difference, relative_error

    def f(v):
        img = render(_scene_from_vector(scene, v), field, None, kernels=kernels)
        return float(np.sum(a_i * img.intensity) + np.sum(a_o * img.opacity))

    g = render_backward(scene, field, a_i, a_o, None, kernels=kernels)
    c = g.covariance
    analytic = np.concatenate([g.mean.ravel(), g.amplitude.ravel(), g.opacity,
                               np.column_stack([c[:, 0, 0], 2 * c[:, 0, 1], c[:, 1, 1]]).ravel()])
    return relative_error(analytic, central_difference(f, _scene_vector(scene), h))


def test_render_backward_finite_differences(kernels):
    rng = np.random.default_rng(21)
    worst = 0.0
    for trial in range(100):
        ch = 3 if trial % 4 == 0 else 1
        scene = random_scene(rng, int(rng.integers(1, 4)), ch, scale=(0.12, 0.35))
        w, h = int(rng.integers(4, 13)), int(rng.integers(4, 13))
        field = make_coordinate_field(w, h)
        shape = (h, w, ch) if ch > 1 else (h, w)
        worst = max(worst, _fd_check(scene, field, rng.normal(size=shape), rng.normal(size=(h, w)), kernels))
    assert worst < 1e-5


def test_outside_primitive_contributes_nothing(kernels):
    field = make_coordinate_field(16, 16)
    inside = Scene([[0.0, 0.0]], [np.eye(2) * 0.01], [1.0], [1.0])
    outside = Scene([[1.6, 0.0]], [np.eye(2) * 0.01], [1.0], [1.0])   # 4 sigma = 0.4, ends at 1.2
    img = render(outside, field, kernels=kernels)
    assert not img.intensity.any() and not img.opacity.any()
    rng = np.random.default_rng(0)
    g = render_backward(outside, field, rng.normal(size=(16, 16)), rng.normal(size=(16, 16)), kernels=kernels)
    assert not g.mean.any() and not g.covariance.any() and not g.opacity.any()
    # pairing with another primitive leaves the inside render untouched
    both = Scene(np.vstack([inside.means, outside.means]), np.vstack([inside.covariances, outside.covariances]),
                 [1.0, 1.0], [1.0, 1.0])
    np.testing.assert_array_equal(render(both, field, kernels=kernels).intensity,
                                  render(inside, field, kernels=kernels).intensity)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 31 - 1), st.integers(1, 5))
def test_render_properties(seed, n):
    rng = np.random.default_rng(seed)
    scene = random_scene(rng, n)
    field = make_coordinate_field(9, 7)
    img = render(scene, field)
    assert np.all(img.opacity >= 0.0) and np.all(img.opacity < 1.0)
    assert np.all(img.intensity >= 0.0)
    doubled = render(scene.replace(amplitudes=2.0 * scene.amplitudes), field)
    np.testing.assert_array_equal(doubled.intensity, 2.0 * img.intensity)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2 ** 31 - 1))
def test_render_is_additive_over_primitives(seed):
    rng = np.random.default_rng(seed)
    a, b = random_scene(rng, 2), random_scene(rng, 3)
    field = make_coordinate_field(8, 6)
    ab = Scene(np.vstack([a.means, b.means]), np.vstack([a.covariances, b.covariances]),
               np.vstack([a.amplitudes, b.amplitudes]), np.concatenate([a.opacities, b.opacities]))
    _, d_ab = render_with_density(ab, field)
    _, d_a = render_with_density(a, field)
    _, d_b = render_with_density(b, field)
    np.testing.assert_allclose(d_ab, d_a + d_b, rtol=1e-13, atol=1e-15)
    np.testing.assert_allclose(render(ab, field).intensity,
                               render(a, field).intensity + render(b, field).intensity, rtol=1e-13, atol=1e-15)


def test_scene_text_roundtrip(tmp_path, rng):
    for ch in (1, 3):
        scene = random_scene(rng, 4, ch)
        path = tmp_path / f"scene{ch}.txt"
        save_scene(scene, path)
        text = path.read_text()
        assert text.startswith("#")
        assert len(text.splitlines()[1].split()) == (7 if ch == 1 else 9)
        assert load_scene(path).equals(scene)


def test_load_scene_skips_comments(tmp_path):
    path = tmp_path / "s.txt"
    path.write_text("# comment\n0.1 0.2 0.01 0 0.02 0.5 0.9\n\n# another\n")
    s = load_scene(path)
    assert len(s) == 1 and s.means[0].tolist() == [0.1, 0.2]
    assert s.covariances[0].tolist() == [[0.01, 0.0], [0.0, 0.02]]


def test_benchmark_script_runs():
    import importlib.util
    from pathlib import Path
    path = Path(__file__).resolve().parents[1] / "benchmarks" / "bench_kernels.py"
    spec = importlib.util.spec_from_file_location("bench_kernels", path)
    mod = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(mod)
    rows = mod.bench(8, [4], 1)
    assert {r[0] for r in rows} == set(BACKENDS_NAMES)
