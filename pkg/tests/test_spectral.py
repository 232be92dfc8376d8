import cmath
import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from spectrack.grid import Image, ShapeError, make_coordinate_field
from spectrack.spectral import (LINEAR, LOG, ConfigurationError, FrequencyGrid, band_of, build_frequency_grid,
                                circular_shift_theorem_check, closed_form_shift_gradient, closed_form_shift_loss,
                                compute_moments, dft_grid, max_active_omega_norm, moments_adjoint,
                                spatial_l2_via_spectrum)


def brute_moments(values, grid, field):
    """Double loop over frequencies and pixels with scalar complex exponentials."""
    out = []
    pts = field.flat()
    flat = values.reshape(-1)
    for wx, wy in grid.omega:
        acc = 0j
        for (x, y), v in zip(pts, flat):
            acc += v * cmath.exp(-1j * (wx * x + wy * y))
        out.append(acc / len(flat))
    return np.array(out)


# --- grid construction ------------------------------------------------------

def test_single_band_unit_ring():
    g = build_frequency_grid(1, 1)
    assert sorted(zip(g.kx.tolist(), g.ky.tolist())) == [(0, 0), (0, 1), (1, -1), (1, 0), (1, 1)]
    assert set(g.band.tolist()) == {0}


def test_band_examples():
    assert band_of(3, 2, LINEAR) == 2
    assert band_of(5, 0, LOG) == 3
    assert band_of(0, 0, LOG) == 0 and band_of(1, -1, LOG) == 0 and band_of(2, 0, LOG) == 1
    g = build_frequency_grid(3, banding_mode=LINEAR)
    assert g.band[g.index_of(3, 2)] == 2
    g = build_frequency_grid(4, banding_mode=LOG)
    assert g.band[g.index_of(5, 0)] == 3


def test_empty_band_error_names_band():
    with pytest.raises(ConfigurationError, match="band 2"):
        build_frequency_grid(3, max_index=2)
    with pytest.raises(ConfigurationError):
        build_frequency_grid(0)
    with pytest.raises(ConfigurationError):
        build_frequency_grid(2, banding_mode="octave")


@pytest.mark.parametrize("mode", [LINEAR, LOG])
@pytest.mark.parametrize("k", [1, 2, 4])
def test_grid_invariants(mode, k):
    g = build_frequency_grid(k, banding_mode=mode, phase_scale=0.7)
    pairs = list(zip(g.kx.tolist(), g.ky.tolist()))
    assert pairs.count((0, 0)) == 1 and g.band[g.index_of(0, 0)] == 0
    seen = set(pairs)
    assert len(seen) == len(pairs)
    for kx, ky in pairs:
        if (kx, ky) != (0, 0):
            assert (-kx, -ky) not in seen
    np.testing.assert_array_equal(g.omega, 0.7 * np.column_stack([g.kx, g.ky]))
    for (kx, ky), b in zip(pairs, g.band):
        assert b == band_of(kx, ky, mode)
    assert set(g.band.tolist()) == set(range(k))


def test_one_dimensional_grid_has_no_vertical_index():
    g = build_frequency_grid(3, dims=1)
    assert not g.ky.any() and g.kx.tolist() == [0, 1, 2, 3]


# --- moments ----------------------------------------------------------------

def test_moments_match_brute_force():
    rng = np.random.default_rng(4)
    field = make_coordinate_field(8, 8)
    values = rng.random((8, 8))
    grid = build_frequency_grid(3)
    got = compute_moments(Image(values), grid, field).values
    np.testing.assert_allclose(got, brute_moments(values, grid, field), rtol=0, atol=1e-12)


def test_moments_non_square_and_rgb():
    rng = np.random.default_rng(5)
    field = make_coordinate_field(7, 5)
    values = rng.random((5, 7, 3))
    grid = build_frequency_grid(2, phase_scale=1.3)
    got = compute_moments(values, grid, field).values
    for c in range(3):
        np.testing.assert_allclose(got[:, c], brute_moments(values[..., c], grid, field), atol=1e-12)


def test_dc_is_mean_and_zero_image():
    rng = np.random.default_rng(6)
    field = make_coordinate_field(6, 4)
    values = rng.random((4, 6))
    grid = build_frequency_grid(2)
    m = compute_moments(values, grid, field).values
    assert m[grid.index_of(0, 0)] == pytest.approx(values.mean(), rel=1e-14)
    assert not compute_moments(np.zeros((4, 6)), grid, field).values.any()
    with pytest.raises(ShapeError):
        compute_moments(np.zeros((5, 6)), grid, field)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 31 - 1), st.floats(-3, 3), st.floats(-3, 3))
def test_moments_linear(seed, a, b):
    rng = np.random.default_rng(seed)
    field = make_coordinate_field(6, 5)
    grid = build_frequency_grid(3)
    i, j = rng.random((5, 6)), rng.random((5, 6))
    lhs = compute_moments(a * i + b * j, grid, field).values
    rhs = a * compute_moments(i, grid, field).values + b * compute_moments(j, grid, field).values
    np.testing.assert_allclose(lhs, rhs, rtol=0, atol=1e-12)


def test_conjugate_symmetry_explicit():
    rng = np.random.default_rng(7)
    field = make_coordinate_field(9, 7)
    values = rng.random((7, 9))
    grid = build_frequency_grid(3)
    neg = FrequencyGrid.from_indices(np.column_stack([-grid.kx, -grid.ky]), grid.phase_scale)
    np.testing.assert_allclose(compute_moments(values, neg, field).values,
                               np.conj(compute_moments(values, grid, field).values), atol=1e-14)


# --- adjoint ----------------------------------------------------------------

def test_adjoint_examples():
    field = make_coordinate_field(5, 4)
    grid = build_frequency_grid(2)
    assert not moments_adjoint(grid, field, np.zeros(len(grid))).any()
    w = np.zeros(len(grid), complex)
    w[grid.index_of(0, 0)] = 1.0
    np.testing.assert_allclose(moments_adjoint(grid, field, w), np.full((4, 5), 1 / 20), rtol=1e-15)
    with pytest.raises(ShapeError):
        moments_adjoint(grid, field, np.zeros(len(grid) + 1))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 31 - 1))
def test_adjoint_is_transpose(seed):
    rng = np.random.default_rng(seed)
    field = make_coordinate_field(int(rng.integers(2, 12)), int(rng.integers(2, 12)))
    grid = build_frequency_grid(int(rng.integers(1, 4)), phase_scale=float(rng.uniform(0.3, 2.0)))
    w = rng.normal(size=len(grid)) + 1j * rng.normal(size=len(grid))
    j = rng.normal(size=(field.height, field.width))
    lhs = float(np.sum(moments_adjoint(grid, field, w) * j))
    rhs = float(np.real(np.sum(w * compute_moments(j, grid, field).values)))
    assert abs(lhs - rhs) <= 1e-10 * max(1.0, abs(rhs))


def test_adjoint_directional_derivative():
    rng = np.random.default_rng(8)
    field = make_coordinate_field(10, 8)
    grid = build_frequency_grid(3)
    w = rng.normal(size=len(grid)) + 1j * rng.normal(size=len(grid))
    i, j = rng.random((8, 10)), rng.normal(size=(8, 10))

    def functional(eps):
        return float(np.real(np.sum(w * compute_moments(i + eps * j, grid, field).values)))

    h = 1e-3   # the functional is linear, so the central difference is exact up to rounding
    fd = (functional(h) - functional(-h)) / (2 * h)
    ana = float(np.sum(moments_adjoint(grid, field, w) * j))
    assert abs(fd - ana) / abs(ana) < 1e-8


def test_rgb_adjoint_matches_per_channel():
    rng = np.random.default_rng(9)
    field = make_coordinate_field(6, 5)
    grid = build_frequency_grid(2)
    w = rng.normal(size=(len(grid), 3)) + 1j * rng.normal(size=(len(grid), 3))
    out = moments_adjoint(grid, field, w)
    for c in range(3):
        np.testing.assert_allclose(out[..., c], moments_adjoint(grid, field, w[:, c]), atol=1e-15)


# --- closed forms -----------------------------------------------------------

def test_closed_form_examples():
    assert closed_form_shift_loss(1.0, [1.0, 0.0], [0.0, 0.0]) == 0.0
    assert closed_form_shift_loss(1.0, [1.0, 0.0], [math.pi, 0.0]) == 2.0
    assert closed_form_shift_loss(1.0, [0.0, 2.0], [0.0, math.pi / 4]) == pytest.approx(1.0, abs=1e-15)
    assert not closed_form_shift_gradient(1.0, [1.0, 0.0], [0.0, 0.0]).any()
    np.testing.assert_allclose(closed_form_shift_gradient(1.0, [1.0, 0.0], [math.pi, 0.0]), 0.0, atol=1e-15)
    np.testing.assert_allclose(closed_form_shift_gradient(1.0, [2.0, 0.0], [math.pi / 4, 0.0]), [2.0, 0.0])


@settings(max_examples=40)
@given(st.floats(0.0, 3.0), st.floats(-4, 4), st.floats(-4, 4), st.floats(-2, 2), st.floats(-2, 2))
def test_closed_form_gradient_is_derivative(mag, wx, wy, dx, dy):
    om, d = np.array([wx, wy]), np.array([dx, dy])
    h = 1e-6
    fd = np.array([(closed_form_shift_loss(mag, om, d + e) - closed_form_shift_loss(mag, om, d - e)) / (2 * h)
                   for e in (np.array([h, 0.0]), np.array([0.0, h]))])
    np.testing.assert_allclose(closed_form_shift_gradient(mag, om, d), fd, atol=1e-6 * (1 + mag * mag * 16))


def test_shifted_pair_matches_closed_form_per_frequency():
    rng = np.random.default_rng(10)
    w, h = 12, 10
    img = rng.random((h, w))
    for sx, sy in [(1, 0), (3, 2), (-4, 7)]:
        shifted = np.roll(img, (sy, sx), axis=(0, 1))
        field = make_coordinate_field(w, h)
        grid = dft_grid(w, h)
        m_gt = compute_moments(shifted, grid, field).values
        m_r = compute_moments(img, grid, field).values
        d = np.array([2.0 * sx / w, 2.0 * sy / h])
        # squared difference is twice the closed form
        for f in range(len(grid)):
            expect = 2.0 * closed_form_shift_loss(abs(m_gt[f]), grid.omega[f], d)
            assert abs(abs(m_gt[f] - m_r[f]) ** 2 - expect) < 1e-10


# --- Parseval and shift theorem --------------------------------------------

def test_parseval_examples():
    a = Image(np.full((4, 5), 0.3))
    assert spatial_l2_via_spectrum(a, a) == 0.0
    assert spatial_l2_via_spectrum(a, Image(np.zeros((4, 5)))) == pytest.approx(0.09 * 20, rel=1e-12)
    with pytest.raises(ShapeError):
        spatial_l2_via_spectrum(np.zeros((3, 3)), np.zeros((3, 4)))


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2 ** 31 - 1), st.integers(1, 16), st.integers(1, 16))
def test_parseval_matches_spatial_sum(seed, w, h):
    rng = np.random.default_rng(seed)
    a, b = rng.random((h, w)), rng.random((h, w))
    direct = float(np.sum((a - b) ** 2))
    assert spatial_l2_via_spectrum(a, b) == pytest.approx(direct, rel=1e-8)


def test_shift_theorem_examples():
    rng = np.random.default_rng(11)
    img = rng.random((8, 8))
    assert circular_shift_theorem_check(img, (0, 0)) < 1e-15
    assert circular_shift_theorem_check(img, (8, 0)) < 1e-12
    assert circular_shift_theorem_check(img, (3, 5)) < 1e-10
    assert circular_shift_theorem_check(rng.random((6, 9, 3)), (2, -1)) < 1e-10


def test_max_active_omega_norm():
    g = build_frequency_grid(3, phase_scale=1.0)
    assert max_active_omega_norm(g, [0, 0, 0]) == 0.0
    assert max_active_omega_norm(g, [1, 0, 0]) == pytest.approx(math.sqrt(2))
    assert max_active_omega_norm(g, [1, 1e-9, 0]) == pytest.approx(math.sqrt(8))


def test_moment_csv(tmp_path):
    grid = build_frequency_grid(1, 1)
    field = make_coordinate_field(4, 4)
    ms = compute_moments(np.eye(4), grid, field)
    path = tmp_path / "m.csv"
    ms.to_csv(path)
    rows = list(csv.reader(path.open()))
    assert rows[0] == ["kx", "ky", "band", "re", "im"]
    assert len(rows) == 6
    for row, v in zip(rows[1:], ms.values):
        assert complex(float(row[3]), float(row[4])) == v
