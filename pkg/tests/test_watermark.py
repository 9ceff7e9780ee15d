import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ganprint.imaging import Dataset, make_rng, synth_texture_dataset
from ganprint.metrics import psnr
from ganprint.toynet import TrainConfig, TriggerSpec, default_generator
from ganprint.watermark import (MIDBAND, EmbedKey, FingerprintCode, FingerprintEmbedder, bit_accuracy,
                                bit_correlations, decode_fingerprint, embed_fingerprint, epoch_sweep,
                                fingerprint_dataset, verify_trigger, watermark_pattern)


@pytest.fixture(scope="module")
def textures():
    return synth_texture_dataset(20, 64, make_rng(21))


def test_midband_positions():
    assert len(MIDBAND) == 15
    assert all(3 <= u + v <= 5 for u, v in MIDBAND)
    assert (0, 0) not in MIDBAND and len(set(MIDBAND)) == 15


def test_code_validation_and_hex():
    with pytest.raises(ValueError):
        FingerprintCode((1,) * 7)
    with pytest.raises(ValueError):
        FingerprintCode((0, 1, 2, 0, 0, 0, 0, 0))
    c = FingerprintCode((1, 0, 1, 1, 0, 0, 0, 1, 1, 1))
    assert c.to_hex() == "2c7"
    assert FingerprintCode.from_hex("2c7", 10) == c
    with pytest.raises(ValueError):
        FingerprintCode.from_hex("fff", 10)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(0, 1), min_size=8, max_size=256))
def test_hex_roundtrip(bits):
    c = FingerprintCode(tuple(bits))
    assert FingerprintCode.from_hex(c.to_hex(), len(c)) == c


def test_bit_accuracy_definition():
    a = FingerprintCode.random(64, make_rng(1))
    assert bit_accuracy(a, a) == 1.0
    assert bit_accuracy(a, a.complement()) == 0.0
    bits = np.array(a.bits)
    bits[:16] ^= 1
    assert bit_accuracy(a, FingerprintCode(tuple(bits))) == 0.75
    with pytest.raises(ValueError):
        bit_accuracy(a, FingerprintCode((0,) * 8))


def test_key_validation():
    with pytest.raises(ValueError):
        EmbedKey(1, strength=0.0)
    with pytest.raises(ValueError):
        EmbedKey(1, block_size=16)


def test_roundtrip_complement_and_psnr(textures):
    key = EmbedKey(7)
    code = FingerprintCode.random(64, make_rng(3))
    for img in textures.images:
        marked = embed_fingerprint(img, code, key)
        assert psnr(marked, img) >= 35
        decoded, corr = decode_fingerprint(marked, key, 64)
        assert decoded == code
        assert np.all(np.abs(corr) >= key.strength - 1e-9)
        assert decode_fingerprint(embed_fingerprint(img, code.complement(), key), key, 64)[0] == code.complement()


def test_correlation_sign_flips_with_bit():
    key = EmbedKey(3)
    code = FingerprintCode.random(32, make_rng(4))
    flipped = np.array(code.bits)
    flipped[5] ^= 1
    img = np.full((64, 64, 3), 0.5)
    a = bit_correlations(embed_fingerprint(img, code, key), key, 32)
    b = bit_correlations(embed_fingerprint(img, FingerprintCode(tuple(flipped)), key), key, 32)
    assert np.sign(a[5]) == -np.sign(b[5])
    assert np.allclose(np.delete(a, 5), np.delete(b, 5))


def test_flat_host_gets_plain_additive_pattern():
    key = EmbedKey(3)
    code = FingerprintCode.random(64, make_rng(4))
    img = np.full((64, 64, 3), 0.5)
    pattern = watermark_pattern(img.shape, code, key)
    assert np.allclose(embed_fingerprint(img, code, key), img + pattern[:, :, None])


def test_vanishing_strength(textures):
    img = textures.images[0]
    marked = embed_fingerprint(img, FingerprintCode.random(64, make_rng(1)), EmbedKey(1, strength=1e-9))
    assert psnr(marked, img) > 80


def test_wrong_key_is_near_chance(textures):
    code = FingerprintCode.random(64, make_rng(5))
    accs = [bit_accuracy(decode_fingerprint(embed_fingerprint(img, code, EmbedKey(10)), EmbedKey(11))[0], code)
            for img in textures.images]
    assert 0.35 <= np.mean(accs) <= 0.65


def test_unmarked_correlations_center_near_zero(textures):
    key = EmbedKey(9)
    corr = np.array([bit_correlations(img, key, 64) for img in textures.images])
    assert abs(corr.mean()) < 0.2
    assert np.mean(np.abs(corr)) < key.strength


def test_geometry_errors():
    code = FingerprintCode.random(64, make_rng(0))
    with pytest.raises(ValueError):
        embed_fingerprint(np.zeros((32, 32, 3)), code, EmbedKey(0))  # 16 blocks < 64 bits
    with pytest.raises(ValueError):
        decode_fingerprint(np.zeros((60, 64, 3)), EmbedKey(0))


def test_fingerprint_dataset_fractions(textures):
    d = textures.subset(range(10))
    code, key = FingerprintCode.random(64, make_rng(1)), EmbedKey(2)
    full = fingerprint_dataset(d, code, key, 1.0)
    assert full.ids == d.ids and full.labels == d.labels
    assert all(not np.array_equal(a, b) for a, b in zip(full.images, d.images))
    assert np.array_equal(fingerprint_dataset(d, code, key, 0.0).images, d.images)
    h1 = fingerprint_dataset(d, code, key, 0.5, seed=3)
    h2 = fingerprint_dataset(d, code, key, 0.5, seed=3)
    assert np.array_equal(h1.images, h2.images)
    changed = [not np.array_equal(a, b) for a, b in zip(h1.images, d.images)]
    assert sum(changed) == 5


def test_embedder_estimator(textures):
    code = FingerprintCode.random(64, make_rng(2))
    est = FingerprintEmbedder(code_hex=code.to_hex(), key_seed=4)
    marked = est.fit(textures.images[:3]).transform(textures.images[:3])
    assert np.all(est.decode(marked) == 1.0)
    assert est.get_params()["key_seed"] == 4


def test_epoch_sweep_shape_and_errors(textures):
    code, key = FingerprintCode.random(64, make_rng(1)), EmbedKey(5)
    cfg = TrainConfig(epochs=4, checkpoint_every=2)
    reps = epoch_sweep(default_generator(0, bias_map_size=(64, 64)), textures.subset(range(8)), code, key, cfg,
                       textures.subset(range(8, 12)))
    assert [r.epoch for r in reps] == [0, 2, 4]
    assert all(r.min_accuracy <= r.bit_accuracy <= r.max_accuracy for r in reps)
    with pytest.raises(ValueError):
        epoch_sweep(default_generator(0), textures, code, key, TrainConfig(epochs=2, checkpoint_every=3), textures)


def test_verify_trigger_cases():
    g = default_generator(0)
    trig_img = make_rng(1).uniform(size=(16, 16, 3))
    ok, value = verify_trigger(g, TriggerSpec(trig_img, g.forward(trig_img)))
    assert ok and value == 99.0
    bad, _ = verify_trigger(g, TriggerSpec(trig_img, 1.0 - g.forward(trig_img)))
    assert not bad
    with pytest.raises(ValueError):
        verify_trigger(g, TriggerSpec(trig_img, np.zeros((8, 8, 3))))
