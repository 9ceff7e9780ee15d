"""Spread-spectrum DCT fingerprints for training sets, plus trigger verification.

A fingerprint bit is carried by whole 8x8 blocks. Each carrier block adds
``strength * (2b - 1) * p`` to its 15 mid-band DCT coefficients, where ``p``
is a key-seeded +-1 pattern. Blocks are dealt to bits round-robin in a
key-seeded order, so every bit is replicated over ``blocks // n`` blocks.
``strength`` is in 8-bit intensity units: 2.0 moves a coefficient by 2/255
on the unit scale. Embedding is host-informed: where the image's own
mid-band content already correlates against a bit, the carrier gets an
extra push of up to ``COMPENSATION * strength`` so the decoded margin stays
at ``strength``. The same offset goes into every channel so the mark
survives channel permutations; decoding reads the channel mean.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .imaging import Dataset, check_batch, check_image, make_rng
from .metrics import psnr
from .spectral import block_dct2, block_idct2, to_gray
from .toynet.network import ToyGenerator
from .toynet.training import TrainConfig, TriggerSpec, hue_shift, train

BLOCK = 8
INTENSITY_SCALE = 255.0
COMPENSATION = 3.0


def _midband() -> tuple[tuple[int, int], ...]:
    # zig-zag order: by anti-diagonal, alternating direction
    out = []
    for s in range(3, 6):
        diag = [(u, s - u) for u in range(s + 1) if u < BLOCK and s - u < BLOCK]
        out.extend(diag if s % 2 else diag[::-1])
    return tuple(out)


MIDBAND = _midband()


@dataclass(frozen=True)
class FingerprintCode:
    bits: tuple[int, ...]

    def __post_init__(self):
        bits = tuple(int(b) for b in self.bits)
        if any(b not in (0, 1) for b in bits):
            raise ValueError("fingerprint bits must be 0 or 1")
        if not 8 <= len(bits) <= 256:
            raise ValueError(f"fingerprint length must be in [8, 256], got {len(bits)}")
        object.__setattr__(self, "bits", bits)

    def __len__(self):
        return len(self.bits)

    @property
    def array(self) -> np.ndarray:
        return np.array(self.bits, dtype=np.int64)

    @classmethod
    def random(cls, n: int, rng: np.random.Generator) -> "FingerprintCode":
        return cls(tuple(rng.integers(0, 2, size=n)))

    def complement(self) -> "FingerprintCode":
        return FingerprintCode(tuple(1 - b for b in self.bits))

    def to_hex(self) -> str:
        """Lowercase hex, most significant bit first, ``ceil(n / 4)`` digits."""
        value = int("".join(map(str, self.bits)), 2)
        return format(value, f"0{-(-len(self) // 4)}x")

    @classmethod
    def from_hex(cls, text: str, n: int | None = None) -> "FingerprintCode":
        text = text.strip().lower()
        n = 4 * len(text) if n is None else n
        if len(text) != -(-n // 4):
            raise ValueError(f"{n} bits need {-(-n // 4)} hex digits, got {len(text)}")
        value = int(text, 16)
        if value >= 2 ** n:
            raise ValueError(f"hex code does not fit in {n} bits")
        return cls(tuple(int(c) for c in format(value, f"0{n}b")))


@dataclass(frozen=True)
class EmbedKey:
    key_seed: int
    strength: float = 2.0
    block_size: int = BLOCK

    def __post_init__(self):
        if not self.strength > 0:
            raise ValueError("strength must be positive")
        if self.block_size != BLOCK:
            raise ValueError("only 8x8 blocks are supported")


@dataclass(frozen=True)
class WatermarkReport:
    bit_accuracy: float
    per_bit_correlations: np.ndarray
    epoch: int | None = None
    min_accuracy: float | None = None
    max_accuracy: float | None = None


@lru_cache(maxsize=64)
def _layout(key_seed: int, n_blocks: int, n_bits: int):
    """Key-seeded carrier assignment: (bit index per block or -1, +-1 patterns)."""
    if n_blocks < n_bits:
        raise ValueError(f"image has {n_blocks} 8x8 blocks, too few for {n_bits} bits")
    rng = make_rng(key_seed)
    order = rng.permutation(n_blocks)
    patterns = rng.choice(np.array([-1.0, 1.0]), size=(n_blocks, len(MIDBAND)))
    owner = np.full(n_blocks, -1, dtype=np.int64)
    reps = n_blocks // n_bits
    for k in range(reps * n_bits):
        owner[order[k]] = k % n_bits
    owner.setflags(write=False)
    patterns.setflags(write=False)
    return owner, patterns


def _check_geometry(h: int, w: int):
    if h % BLOCK or w % BLOCK:
        raise ValueError(f"image size {h}x{w} is not a multiple of {BLOCK}")
    return (h // BLOCK) * (w // BLOCK)


def _bit_amplitudes(code: FingerprintCode, key: EmbedKey, host_corr=None) -> np.ndarray:
    """Per-bit carrier amplitude in strength units, signed by the bit."""
    signs = 2.0 * code.array - 1.0
    amp = np.full(len(code), key.strength)
    if host_corr is not None:
        opposing = np.maximum(0.0, -signs * host_corr)
        amp += np.minimum(opposing, COMPENSATION * key.strength)
    return signs * amp


def _pattern(shape, key: EmbedKey, n_bits: int, bit_amp: np.ndarray) -> np.ndarray:
    h, w = shape[:2]
    n_blocks = _check_geometry(h, w)
    owner, patterns = _layout(key.key_seed, n_blocks, n_bits)
    amp = np.where(owner >= 0, bit_amp[np.maximum(owner, 0)], 0.0)
    coeffs = np.zeros((n_blocks, BLOCK, BLOCK))
    rows, cols = zip(*MIDBAND)
    coeffs[:, rows, cols] = amp[:, None] * patterns / INTENSITY_SCALE
    return block_idct2(coeffs.reshape(h // BLOCK, w // BLOCK, BLOCK, BLOCK))


def watermark_pattern(shape, code: FingerprintCode, key: EmbedKey) -> np.ndarray:
    """The host-independent ``(H, W)`` spatial pattern encoding ``code`` under ``key``."""
    return _pattern(shape, key, len(code), _bit_amplitudes(code, key))


def embed_fingerprint(img, code: FingerprintCode, key: EmbedKey) -> np.ndarray:
    img = check_image(img)
    host = bit_correlations(img, key, len(code))
    pattern = _pattern(img.shape, key, len(code), _bit_amplitudes(code, key, host))
    return np.clip(img + pattern[:, :, None], 0.0, 1.0)


def bit_correlations(img, key: EmbedKey, n: int) -> np.ndarray:
    """Per-bit mean of ``coefficient * pattern`` over carrier positions, in strength units.

    A freshly embedded bit reads about ``+-strength`` plus host interference.
    """
    gray = to_gray(check_image(img))
    n_blocks = _check_geometry(*gray.shape)
    owner, patterns = _layout(key.key_seed, n_blocks, n)
    rows, cols = zip(*MIDBAND)
    coeffs = block_dct2(gray).reshape(n_blocks, BLOCK, BLOCK)[:, rows, cols]
    per_block = (coeffs * patterns).mean(axis=1) * INTENSITY_SCALE
    used = owner >= 0
    sums = np.bincount(owner[used], weights=per_block[used], minlength=n)
    return sums / np.bincount(owner[used], minlength=n)


def decode_fingerprint(img, key: EmbedKey, n: int = 64) -> tuple[FingerprintCode, np.ndarray]:
    """Bit ``i`` is 1 iff its correlation is strictly positive (ties go to 0)."""
    corr = bit_correlations(img, key, n)
    return FingerprintCode(tuple((corr > 0).astype(int))), corr


def bit_accuracy(a: FingerprintCode, b: FingerprintCode) -> float:
    if len(a) != len(b):
        raise ValueError(f"code lengths differ: {len(a)} vs {len(b)}")
    return float(np.mean(a.array == b.array))


def fingerprint_dataset(d: Dataset, code: FingerprintCode, key: EmbedKey,
                        fraction: float = 1.0, seed: int = 0) -> Dataset:
    """Embed into ``round(fraction * len(d))`` seeded-chosen images; others are untouched."""
    if not 0.0 <= fraction <= 1.0:
        raise ValueError(f"fraction must lie in [0, 1], got {fraction}")
    k = int(np.floor(fraction * len(d) + 0.5))
    if k == 0:
        return d
    chosen = make_rng(seed).permutation(len(d))[:k]
    images = np.array(d.images)
    for i in chosen:
        images[i] = embed_fingerprint(images[i], code, key)
    return d.with_images(images)


def score_outputs(outputs, code: FingerprintCode, key: EmbedKey, epoch: int | None = None) -> WatermarkReport:
    outputs = check_batch(outputs)
    accs, corrs = [], []
    for out in outputs:
        decoded, corr = decode_fingerprint(out, key, len(code))
        accs.append(bit_accuracy(decoded, code))
        corrs.append(corr)
    return WatermarkReport(float(np.mean(accs)), np.mean(corrs, axis=0), epoch,
                           float(np.min(accs)), float(np.max(accs)))


def epoch_sweep(base_model: ToyGenerator, clean_data: Dataset, code: FingerprintCode, key: EmbedKey,
                cfg: TrainConfig, heldout: Dataset, fraction: float = 1.0) -> list[WatermarkReport]:
    """Train on fingerprinted hue-shift targets; decode from held-out outputs at each checkpoint.

    Reports come at epoch 0 and every ``cfg.checkpoint_every`` epochs.
    """
    if cfg.checkpoint_every > max(cfg.epochs, 1):
        raise ValueError("checkpoint_every exceeds the number of epochs")
    targets = clean_data.with_images(hue_shift(clean_data.images))
    marked = fingerprint_dataset(targets, code, key, fraction, seed=cfg.seed)
    reports = []

    def checkpoint(epoch, model):
        reports.append(score_outputs(model.forward(heldout.images), code, key, epoch))

    train(base_model, clean_data.images, marked.images, cfg, on_checkpoint=checkpoint)
    return reports


def verify_trigger(g: ToyGenerator, trig: TriggerSpec, threshold_db: float = 25.0) -> tuple[bool, float]:
    """True iff the model's response to the trigger matches the watermark at ``threshold_db``."""
    out = g.forward(trig.trigger_image)
    if out.shape != trig.watermark_target.shape:
        raise ValueError(f"model output {out.shape} does not match watermark {trig.watermark_target.shape}")
    value = psnr(out, trig.watermark_target)
    return value >= threshold_db, value


class FingerprintEmbedder(TransformerMixin, BaseEstimator):
    """Transformer that stamps a fixed fingerprint into image batches."""

    def __init__(self, code_hex: str = "", n_bits: int = 64, key_seed: int = 0, strength: float = 2.0):
        self.code_hex = code_hex
        self.n_bits = n_bits
        self.key_seed = key_seed
        self.strength = strength

    def fit(self, X=None, y=None):
        self.code_ = FingerprintCode.from_hex(self.code_hex, self.n_bits)
        self.key_ = EmbedKey(self.key_seed, self.strength)
        return self

    def transform(self, X):
        if not hasattr(self, "code_"):
            self.fit()
        return np.stack([embed_fingerprint(x, self.code_, self.key_) for x in check_batch(X)])

    def decode(self, X) -> np.ndarray:
        """Bit accuracy of each image in ``X`` against the configured code."""
        if not hasattr(self, "code_"):
            self.fit()
        return np.array([bit_accuracy(decode_fingerprint(x, self.key_, self.n_bits)[0], self.code_)
                         for x in check_batch(X)])
