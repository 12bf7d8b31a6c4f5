import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from adaptcs.videoio import (VideoIOError, VideoSequence, load_pgm, load_sequence, read_keyvalue,
                             save_frame, save_pgm_bytes, save_raw, save_sequence, write_keyvalue)


def test_pgm_roundtrip_is_exact_on_byte_grid(tmp_path):
    raster = np.arange(12 * 7, dtype=np.uint8).reshape(7, 12)
    save_frame(raster / 255.0, tmp_path / "f.pgm")
    assert np.array_equal(load_pgm(tmp_path / "f.pgm"), raster)


def test_pgm_header_layout(tmp_path):
    save_pgm_bytes(np.zeros((2, 3), np.uint8), tmp_path / "f.pgm")
    assert (tmp_path / "f.pgm").read_bytes() == b"P5\n3 2\n255\n" + bytes(6)


def test_pgm_header_comments_are_skipped(tmp_path):
    p = tmp_path / "c.pgm"
    p.write_bytes(b"P5\n# made by hand\n2 1\n# another\n255\n\x10\x20")
    assert load_pgm(p).tolist() == [[16, 32]]


@pytest.mark.parametrize("blob", [b"P2\n1 1\n255\n1", b"P5\n2 2\n255\n\x00", b"P5\n1 1\n65535\n\x00\x00",
                                  b"P5\n", b"P5\nx 1\n255\n\x00"])
def test_bad_pgm_rejected(tmp_path, blob):
    p = tmp_path / "bad.pgm"
    p.write_bytes(blob)
    with pytest.raises(VideoIOError):
        load_pgm(p)


def test_save_frame_rounds_and_rejects_out_of_range(tmp_path):
    save_frame(np.array([[0.0, 0.5, 1.0]]), tmp_path / "r.pgm")
    assert load_pgm(tmp_path / "r.pgm").tolist() == [[0, 128, 255]]
    with pytest.raises(VideoIOError):
        save_frame(np.array([[1.5]]), tmp_path / "x.pgm")
    with pytest.raises(VideoIOError):
        save_frame(np.array([[np.nan]]), tmp_path / "x.pgm")


def test_directory_sequence_roundtrip(tmp_path):
    frames = np.random.default_rng(0).integers(0, 256, (12, 5, 6)) / 255.0
    paths = save_sequence(frames, tmp_path / "seq")
    assert [p.name for p in paths][:2] == ["frame_00000.pgm", "frame_00001.pgm"]
    v = load_sequence(tmp_path / "seq")
    assert len(v) == 12 and v.shape == (5, 6)
    assert np.array_equal(v.frames, frames)


def test_directory_with_mixed_sizes_rejected(tmp_path):
    save_frame(np.zeros((4, 4)), tmp_path / "a.pgm")
    save_frame(np.zeros((4, 5)), tmp_path / "b.pgm")
    with pytest.raises(VideoIOError):
        load_sequence(tmp_path)


def test_empty_directory_rejected(tmp_path):
    with pytest.raises(VideoIOError):
        load_sequence(tmp_path)


def test_missing_path_rejected(tmp_path):
    with pytest.raises(VideoIOError):
        load_sequence(tmp_path / "nope")


def test_raw_roundtrip_and_manifest(tmp_path):
    frames = np.random.default_rng(1).integers(0, 256, (3, 4, 5)) / 255.0
    sidecar = save_raw(frames, tmp_path / "clip.raw")
    assert read_keyvalue(sidecar) == {"width": "5", "height": "4", "frames": "3"}
    assert np.array_equal(load_sequence(tmp_path / "clip.raw").frames, frames)
    assert np.array_equal(load_sequence(tmp_path).frames, frames)
    manifest = tmp_path / "manifest.cfg"
    manifest.write_text("# clip\ndata = clip.raw\nwidth: 5\nheight=4\nframes=3\n")
    assert np.array_equal(load_sequence(manifest).frames, frames)


def test_truncated_raw_rejected(tmp_path):
    (tmp_path / "clip.raw").write_bytes(bytes(10))
    write_keyvalue({"width": 4, "height": 4, "frames": 1}, tmp_path / "clip.txt")
    with pytest.raises(VideoIOError, match="truncated"):
        load_sequence(tmp_path / "clip.raw")


def test_raw_without_sidecar_rejected(tmp_path):
    (tmp_path / "clip.raw").write_bytes(bytes(16))
    with pytest.raises(VideoIOError):
        load_sequence(tmp_path / "clip.raw")


def test_keyvalue_syntax_errors(tmp_path):
    p = tmp_path / "k.txt"
    p.write_text("just words\n")
    with pytest.raises(VideoIOError):
        read_keyvalue(p)


def test_video_sequence_validation_and_decimate():
    with pytest.raises(VideoIOError):
        VideoSequence(np.zeros((0, 4, 4)))
    with pytest.raises(VideoIOError):
        VideoSequence(np.full((1, 2, 2), 2.0))
    v = VideoSequence(np.linspace(0, 1, 10)[:, None, None] * np.ones((10, 2, 2)))
    d = v.decimate(3)
    assert len(d) == 4 and np.array_equal(d.frames, v.frames[::3])
    with pytest.raises(ValueError):
        v.decimate(0)


@settings(max_examples=25, deadline=None)
@given(h=st.integers(1, 9), w=st.integers(1, 9), seed=st.integers(0, 999))
def test_pgm_roundtrip_property(tmp_path_factory, h, w, seed):
    d = tmp_path_factory.mktemp("p")
    raster = np.random.default_rng(seed).integers(0, 256, (h, w)).astype(np.uint8)
    save_pgm_bytes(raster, d / "x.pgm")
    assert np.array_equal(load_pgm(d / "x.pgm"), raster)
