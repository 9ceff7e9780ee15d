import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ganprint.imaging import (CorruptImageError, Dataset, UnreadableImageError, UnsupportedFormatError,
                              env_seed, load_dataset, load_image, make_rng, save_dataset, save_image,
                              split_dataset, synth_texture_dataset)


def test_pgm_endpoints(tmp_path):
    p = tmp_path / "a.pgm"
    p.write_bytes(b"P5\n2 2\n255\n" + bytes([0, 255, 0, 255]))
    img = load_image(p)
    assert img.shape == (2, 2, 1)
    assert img.ravel().tolist() == [0.0, 1.0, 0.0, 1.0]


def test_pgm_header_comments(tmp_path):
    p = tmp_path / "c.pgm"
    p.write_bytes(b"P5\n# made by hand\n2 1\n# another\n255\n" + bytes([10, 20]))
    assert np.allclose(load_image(p).ravel(), [10 / 255, 20 / 255])


@pytest.mark.parametrize("value, byte", [(0.5, 128), (1.0, 255), (0.0, 0)])
def test_quantization_rule(tmp_path, value, byte):
    p = tmp_path / "q.pgm"
    save_image(np.full((1, 1, 1), value), p)
    assert p.read_bytes()[-1] == byte


@pytest.mark.parametrize("suffix, channels", [(".png", 3), (".png", 1), (".ppm", 3), (".pgm", 1)])
def test_roundtrip_is_stable(tmp_path, suffix, channels):
    img = make_rng(3).uniform(size=(5, 7, channels))
    p = tmp_path / f"x{suffix}"
    save_image(img, p)
    once = load_image(p)
    assert np.max(np.abs(once - img)) <= 1 / 510 + 1e-12
    save_image(once, p)
    assert np.array_equal(load_image(p), once)


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(1, 6), st.sampled_from([1, 3])),
              elements=st.floats(0.0, 1.0)))
def test_roundtrip_error_bound(tmp_path_factory, img):
    p = tmp_path_factory.mktemp("rt") / "x.png"
    save_image(img, p)
    assert np.max(np.abs(load_image(p) - img)) <= 1 / 510 + 1e-12


def test_truncated_png_is_corrupt(tmp_path):
    p = tmp_path / "t.png"
    save_image(make_rng(0).uniform(size=(16, 16, 3)), p)
    raw = p.read_bytes()
    p.write_bytes(raw[: len(raw) // 2])
    with pytest.raises(CorruptImageError):
        load_image(p)


def test_truncated_pgm_is_corrupt(tmp_path):
    p = tmp_path / "t.pgm"
    p.write_bytes(b"P5\n4 4\n255\n" + bytes(5))
    with pytest.raises(CorruptImageError):
        load_image(p)


def test_errors_are_distinct(tmp_path):
    with pytest.raises(UnreadableImageError):
        load_image(tmp_path / "missing.png")
    bad = tmp_path / "x.bmp"
    bad.write_bytes(b"BM" + bytes(30))
    with pytest.raises(UnsupportedFormatError):
        load_image(bad)
    assert not issubclass(CorruptImageError, UnsupportedFormatError)


def test_channel_suffix_mismatch(tmp_path):
    with pytest.raises(ValueError):
        save_image(np.zeros((2, 2, 3)), tmp_path / "x.pgm")


def test_synth_deterministic_and_in_range():
    a = synth_texture_dataset(3, 32, make_rng(7))
    b = synth_texture_dataset(3, 32, make_rng(7))
    assert np.array_equal(a.images, b.images)
    assert a.labels == ("Real",) * 3
    one = synth_texture_dataset(1, 16, make_rng(7))
    assert one.images.shape == (1, 16, 16, 3)
    assert one.images.min() >= 0.0 and one.images.max() <= 1.0


def test_synth_preconditions():
    with pytest.raises(ValueError):
        synth_texture_dataset(0, 32, make_rng(0))
    with pytest.raises(ValueError):
        synth_texture_dataset(1, 8, make_rng(0))


def test_synth_histogram_is_nondegenerate():
    d = synth_texture_dataset(200, 32, make_rng(7))
    assert d.images.std() > 0.05


def test_dataset_invariants():
    img = np.zeros((2, 4, 4, 3))
    with pytest.raises(ValueError):
        Dataset(img, ("a", "b"), ("x", "x"))
    d = Dataset(img, ("a", "b"), ("x", "y"))
    assert not d.images.flags.writeable
    assert d[1][1:] == ("b", "y")


def test_split_partition():
    d = synth_texture_dataset(10, 16, make_rng(1))
    a, b = split_dataset(d, 0.8, make_rng(2))
    assert (len(a), len(b)) == (8, 2)
    assert not set(a.ids) & set(b.ids)
    a2, _ = split_dataset(d, 0.8, make_rng(2))
    assert a.ids == a2.ids


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 60), st.floats(0.01, 0.99), st.integers(0, 2**32))
def test_split_is_exhaustive(n, fraction, seed):
    d = Dataset(np.zeros((n, 2, 2, 1)), ("Real",) * n, tuple(f"i{k}" for k in range(n)))
    a, b = split_dataset(d, fraction, make_rng(seed))
    assert sorted(a.ids + b.ids) == sorted(d.ids)
    assert len(a) == int(np.floor(fraction * n + 0.5))


def test_dataset_directory_roundtrip(tmp_path):
    d = synth_texture_dataset(4, 16, make_rng(5))
    manifest = save_dataset(d, tmp_path / "d")
    entries = json.loads(manifest.read_text(encoding="utf-8"))
    assert [e["id"] for e in entries] == list(d.ids)
    assert set(entries[0]) == {"id", "relative_path", "label"}
    back = load_dataset(tmp_path / "d")
    assert back.ids == d.ids and back.labels == d.labels
    assert np.max(np.abs(back.images - d.images)) <= 1 / 510 + 1e-12
    first = manifest.read_bytes()
    save_dataset(d, tmp_path / "d")
    assert manifest.read_bytes() == first


def test_rng_seed_range_and_env(monkeypatch):
    with pytest.raises(ValueError):
        make_rng(-1)
    assert make_rng(2**64 - 1).integers(0, 10) >= 0
    monkeypatch.setenv("GANPRINT_SEED", "99")
    assert env_seed(0) == 99
    monkeypatch.delenv("GANPRINT_SEED")
    assert env_seed(5) == 5
