import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from adaptcs.motion import (BlockMatchParams, MotionField, block_match, cross_diamond_search,
                            full_search, load_field, median_filter_field, save_field,
                            scene_velocity, segment)
from adaptcs.synthetic import smooth_texture
from oracles import exhaustive_match, exhaustive_match_fast, plaid_canvas, smooth_canvas

FULL = BlockMatchParams(16, 40, "mse", "full")
CDS = BlockMatchParams(16, 40, "mse", "cross_diamond")


def shifted_pair(canvas, dy, dx, size=(96, 96), margin=16):
    """``a`` crop and a crop of the same canvas moved so content appears at ``+ (dy, dx)`` in ``b``."""
    h, w = size
    a = canvas[margin:margin + h, margin:margin + w]
    b = canvas[margin - dy:margin - dy + h, margin - dx:margin - dx + w]
    return a, b


@pytest.mark.parametrize("params", [FULL, CDS])
def test_identical_images_give_zero_field(params):
    img = np.random.default_rng(0).random((48, 64))
    f = block_match(img, img, params)
    assert f.grid_shape == (3, 4)
    assert not f.dy.any() and not f.dx.any()
    assert not f.cost.any()


def test_full_search_recovers_integer_translation():
    canvas = np.random.default_rng(1).random((160, 160))
    a, b = shifted_pair(canvas, 5, -7)
    f = full_search(a, b, FULL)
    inner = (slice(1, -1), slice(1, -1))
    assert np.all(f.dy[inner] == 5) and np.all(f.dx[inner] == -7)


def test_full_search_matches_loop_oracle_small():
    rng = np.random.default_rng(2)
    a, b = rng.random((2, 32, 32))
    params = BlockMatchParams(8, 16, "mse", "full")
    dy, dx, cost = exhaustive_match(a, b, 8, 16)
    f = full_search(a, b, params)
    assert np.array_equal(f.dy, dy) and np.array_equal(f.dx, dx)
    assert np.allclose(f.cost, cost, rtol=1e-12, atol=0)


@pytest.mark.parametrize("metric", ["mse", "sad"])
def test_full_search_bit_exact_on_integer_images(metric):
    rng = np.random.default_rng(3)
    a, b = rng.integers(0, 256, (2, 48, 48)).astype(np.float64)
    dy, dx, cost = exhaustive_match_fast(a, b, 16, 40, metric)
    f = full_search(a, b, BlockMatchParams(16, 40, metric, "full"))
    assert np.array_equal(f.dy, dy) and np.array_equal(f.dx, dx)
    assert np.array_equal(f.cost, cost)


def test_tie_break_prefers_shortest_then_smallest_dy_dx():
    a = np.zeros((48, 48))
    f = full_search(a, a, FULL)
    assert not f.dy.any() and not f.dx.any()
    # a flat block matches equally everywhere except where b has a spike
    b = np.zeros((48, 48))
    b[16:32, 16:32] = 1.0
    f = full_search(np.zeros((48, 48)), b, FULL)
    # radius 12 cannot clear the square; overlap is smallest at the four corners,
    # which tie on cost and length, so smallest dy then smallest dx wins
    assert (f.dy[1, 1], f.dx[1, 1]) == (-12, -12)
    # blocks already clear of the square stay put
    assert (f.dy[0, 0], f.dx[0, 0]) == (0, 0)


def test_search_respects_image_borders():
    rng = np.random.default_rng(4)
    a, b = rng.random((2, 48, 48))
    for f in (full_search(a, b, FULL), cross_diamond_search(a, b, CDS)):
        oy = np.arange(3)[:, None] * 16
        ox = np.arange(3)[None, :] * 16
        assert np.all(oy + f.dy >= 0) and np.all(oy + f.dy + 16 <= 48)
        assert np.all(ox + f.dx >= 0) and np.all(ox + f.dx + 16 <= 48)
        assert np.all(np.abs(f.dy) <= 12) and np.all(np.abs(f.dx) <= 12)


@pytest.mark.parametrize("shift", [(0, 0), (1, 0), (0, -1), (3, 4), (-6, 2), (8, -8), (12, -12), (-9, 11)])
def test_cross_diamond_agrees_with_full_search_on_plaid_translation(shift):
    a, b = shifted_pair(plaid_canvas(), *shift, size=(96, 96), margin=20)
    f_full = full_search(a, b, FULL)
    f_cds = cross_diamond_search(a, b, CDS)
    inner = (slice(1, -1), slice(1, -1))
    assert np.array_equal(f_cds.dy[inner], f_full.dy[inner])
    assert np.array_equal(f_cds.dx[inner], f_full.dx[inner])
    # grating period 16: the true shift is recovered modulo 16, nearest to zero
    wrap = [((s + 8) % 16) - 8 for s in shift]
    if all(abs(s) < 8 for s in shift):
        assert np.all(f_full.dy[inner] == shift[0]) and np.all(f_full.dx[inner] == shift[1])
    else:
        assert np.all(np.abs(f_full.dy[inner]) <= 8) and np.all(np.abs(f_full.dx[inner]) <= 8)
        assert np.all((f_full.dy[inner] - wrap[0]) % 16 == 0)


@pytest.mark.parametrize("shift", [(1, 0), (0, 2), (-1, 1), (2, -2)])
def test_cross_diamond_finds_small_shifts_on_texture(shift):
    canvas = smooth_texture((140, 140), 2.5, seed=11)
    a, b = shifted_pair(canvas, *shift, size=(96, 96), margin=20)
    f = cross_diamond_search(a, b, CDS)
    inner = (slice(1, -1), slice(1, -1))
    assert np.all(f.dy[inner] == shift[0]) and np.all(f.dx[inner] == shift[1])


def test_cross_diamond_can_stop_in_local_minimum_of_smooth_content():
    """A pattern search is not exhaustive: on nearly linear blocks it stalls in the valley."""
    a, b = shifted_pair(smooth_canvas((140, 140), seed=7, n_blobs=30, sigma=(12, 24)), 1, 2, size=(96, 96), margin=20)
    f_full = full_search(a, b, FULL)
    f_cds = cross_diamond_search(a, b, CDS)
    inner = (slice(1, -1), slice(1, -1))
    assert np.all(f_full.dy[inner] == 1) and np.all(f_full.dx[inner] == 2)
    assert np.any((f_cds.dy[inner] != 1) | (f_cds.dx[inner] != 2))


def test_cross_diamond_cost_is_never_below_full_search():
    rng = np.random.default_rng(5)
    a, b = rng.random((2, 64, 64))
    f_full = full_search(a, b, FULL)
    f_cds = cross_diamond_search(a, b, CDS)
    assert np.all(f_cds.cost >= f_full.cost)


def test_cross_diamond_halfway_stop_on_static_blocks():
    img = smooth_canvas((64, 64), seed=1)
    f = cross_diamond_search(img, img, CDS)
    assert not f.dy.any() and not f.dx.any()


def test_params_validation():
    with pytest.raises(ValueError):
        BlockMatchParams(16, 8)
    with pytest.raises(ValueError):
        BlockMatchParams(metric="ncc")
    with pytest.raises(ValueError):
        BlockMatchParams(algorithm="tss")
    assert BlockMatchParams(16, 40).search_radius == 12


def test_rejects_mismatched_or_tiny_images():
    with pytest.raises(ValueError):
        full_search(np.zeros((32, 32)), np.zeros((32, 33)))
    with pytest.raises(ValueError):
        full_search(np.zeros((8, 8)), np.zeros((8, 8)))


def _field(dy, dx):
    dy, dx = np.asarray(dy), np.asarray(dx)
    return MotionField(dy, dx, np.zeros(dy.shape), 16)


def test_scene_velocity_is_max_magnitude_over_frames():
    f = _field([[0, 3], [0, 0]], [[0, 4], [1, 0]])
    sv = scene_velocity(f, 5)
    assert sv.max_block_displacement == 5.0 and sv.v == 1.0 and sv.frames_spanned == 5
    with pytest.raises(ValueError):
        scene_velocity(f, 0)


def test_segment_threshold_is_strict():
    f = _field([[0, 1], [2, 0]], [[0, 0], [0, 0]])
    s = segment(f, 1.0)
    assert s.foreground.tolist() == [[False, False], [True, False]]
    with pytest.raises(ValueError):
        segment(f, -1)


def test_median_filter_removes_isolated_vector():
    dy = np.zeros((5, 5), int)
    dx = np.zeros((5, 5), int)
    dx[2, 2] = 9
    out = median_filter_field(_field(dy, dx), 3)
    assert not out.dx.any()
    assert median_filter_field(_field(dy, dx), 1) is not None
    assert median_filter_field(_field(dy, dx), 1).dx[2, 2] == 9


def test_median_filter_keeps_coherent_region():
    dx = np.zeros((6, 6), int)
    dx[:, :4] = 3
    out = median_filter_field(_field(np.zeros((6, 6), int), dx), 3)
    assert np.all(out.dx[:, :3] == 3) and np.all(out.dx[:, 5] == 0)


@settings(max_examples=25, deadline=None)
@given(dy=st.integers(-12, 12), dx=st.integers(-12, 12), seed=st.integers(0, 50))
def test_full_search_translation_property(dy, dx, seed):
    canvas = np.random.default_rng(seed).random((112, 112))
    a, b = shifted_pair(canvas, dy, dx, size=(64, 64), margin=24)
    f = full_search(a, b, FULL)
    # interior blocks whose whole window lies inside b
    assert f.dy[1, 1] == dy and f.dx[1, 1] == dx


def test_field_csv_roundtrip(tmp_path):
    rng = np.random.default_rng(6)
    a, b = rng.random((2, 48, 64))
    f = full_search(a, b, FULL)
    p = tmp_path / "f.csv"
    save_field(f, p)
    lines = p.read_text().splitlines()
    assert lines[0] == "# adaptcs motion_field v1 block_size=16"
    assert lines[1] == "block_row,block_col,dx,dy,cost"
    assert load_field(p) == f
