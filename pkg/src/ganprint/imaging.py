"""Images, datasets, seeded randomness and file I/O.

Images are plain ``numpy`` arrays of shape ``(H, W, C)`` with ``C`` in {1, 3}
and values in ``[0, 1]``; a C-ordered array is row-major and channel
interleaved. Batches stack images along a leading axis.
"""
from __future__ import annotations

import json
import os
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from PIL import Image, UnidentifiedImageError
from scipy.ndimage import gaussian_filter

REAL_LABEL = "Real"
MANIFEST_NAME = "manifest.json"


class ImageIOError(Exception):
    """Base class for image loading failures."""


class UnreadableImageError(ImageIOError):
    """The file does not exist or cannot be opened."""


class UnsupportedFormatError(ImageIOError):
    """The file is not PNG, binary PGM or binary PPM."""


class CorruptImageError(ImageIOError):
    """The header or pixel payload is malformed or truncated."""


def make_rng(seed: int) -> np.random.Generator:
    """Return the toolkit's seeded generator.

    All randomness goes through numpy's PCG64 bit generator, whose output
    stream for a given seed is fixed across platforms.
    """
    seed = int(seed)
    if not 0 <= seed < 2**64:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return np.random.Generator(np.random.PCG64(seed))


def check_image(img, name: str = "image") -> np.ndarray:
    """Validate an image array and return it as float64 ``(H, W, C)``."""
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    if arr.ndim != 3 or arr.shape[2] not in (1, 3):
        raise ValueError(f"{name} must have shape (H, W, C) with C in {{1, 3}}, got {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"{name} must be non-empty, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def check_batch(images, name: str = "images") -> np.ndarray:
    """Validate a stack of images, returning float64 ``(N, H, W, C)``."""
    arr = np.asarray(images, dtype=np.float64)
    if arr.ndim == 3:
        arr = arr[None]
    if arr.ndim != 4 or arr.shape[3] not in (1, 3) or arr.shape[0] < 1:
        raise ValueError(f"{name} must have shape (N, H, W, C) with N >= 1, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


@dataclass(frozen=True)
class Dataset:
    """An ordered, immutable collection of equally shaped labelled images."""

    images: np.ndarray
    labels: tuple[str, ...]
    ids: tuple[str, ...]
    manifest_path: Path | None = field(default=None, compare=False)

    def __post_init__(self):
        raw = np.asarray(self.images, dtype=np.float64)
        if raw.ndim == 4 and len(raw) == 0 and raw.shape[3] in (1, 3):
            images = raw.copy()  # an empty split part
        else:
            images = check_batch(raw).copy()
        images.setflags(write=False)
        object.__setattr__(self, "images", images)
        object.__setattr__(self, "labels", tuple(str(x) for x in self.labels))
        object.__setattr__(self, "ids", tuple(str(x) for x in self.ids))
        if not len(self.labels) == len(self.ids) == len(images):
            raise ValueError("images, labels and ids must have equal length")
        if len(set(self.ids)) != len(self.ids):
            raise ValueError("dataset ids must be unique")

    def __len__(self) -> int:
        return len(self.ids)

    def __getitem__(self, i: int) -> tuple[np.ndarray, str, str]:
        return self.images[i], self.labels[i], self.ids[i]

    @property
    def shape(self) -> tuple[int, int, int]:
        return tuple(self.images.shape[1:])

    def subset(self, indices: Sequence[int]) -> "Dataset":
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(self.images[idx], tuple(self.labels[i] for i in idx),
                       tuple(self.ids[i] for i in idx))

    def with_images(self, images: np.ndarray) -> "Dataset":
        return Dataset(images, self.labels, self.ids)

    @classmethod
    def concat(cls, parts: Sequence["Dataset"]) -> "Dataset":
        return cls(np.concatenate([p.images for p in parts]),
                   tuple(l for p in parts for l in p.labels),
                   tuple(i for p in parts for i in p.ids))


# --------------------------------------------------------------------- I/O

def _to_bytes(img: np.ndarray) -> np.ndarray:
    # round-half-up: 0.5 -> 128
    return np.floor(np.clip(img, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


def quantize8(img) -> np.ndarray:
    """Round to the 8-bit grid used by the image writers, so a save/load is lossless."""
    return _to_bytes(np.asarray(img, dtype=np.float64)).astype(np.float64) / 255.0


def _read_netpbm(raw: bytes, path) -> np.ndarray:
    magic = raw[:2]
    channels = 1 if magic == b"P5" else 3
    fields: list[bytes] = []
    pos = 2
    while len(fields) < 3:
        while pos < len(raw) and raw[pos:pos + 1].isspace():
            pos += 1
        if raw[pos:pos + 1] == b"#":
            while pos < len(raw) and raw[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise CorruptImageError(f"{path}: truncated header")
        fields.append(raw[start:pos])
    pos += 1  # single whitespace byte before the raster
    try:
        width, height, maxval = (int(f) for f in fields)
    except ValueError as exc:
        raise CorruptImageError(f"{path}: malformed header") from exc
    if width < 1 or height < 1:
        raise CorruptImageError(f"{path}: bad dimensions {width}x{height}")
    if maxval != 255:
        raise UnsupportedFormatError(f"{path}: only maxval 255 is supported, got {maxval}")
    need = width * height * channels
    payload = raw[pos:pos + need]
    if len(payload) != need:
        raise CorruptImageError(f"{path}: expected {need} pixel bytes, found {len(payload)}")
    return np.frombuffer(payload, dtype=np.uint8).reshape(height, width, channels)


def load_image(path) -> np.ndarray:
    """Read a PNG, P5 PGM or P6 PPM file into a float image in ``[0, 1]``."""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise UnreadableImageError(f"{path}: {exc.strerror or exc}") from exc

    if raw[:2] in (b"P5", b"P6"):
        data = _read_netpbm(raw, path)
    elif raw[:8] == b"\x89PNG\r\n\x1a\n":
        try:
            with Image.open(path) as im:
                im.load()
                if im.mode not in ("L", "RGB"):
                    if im.mode in ("LA", "RGBA", "P", "1"):
                        im = im.convert("RGB" if im.mode in ("RGBA", "P") else "L")
                    else:
                        raise UnsupportedFormatError(f"{path}: unsupported PNG mode {im.mode}")
                data = np.asarray(im, dtype=np.uint8)
        except UnsupportedFormatError:
            raise
        except (OSError, SyntaxError, ValueError, zlib.error, struct.error,
                UnidentifiedImageError) as exc:
            raise CorruptImageError(f"{path}: {exc}") from exc
        if data.ndim == 2:
            data = data[:, :, None]
    else:
        raise UnsupportedFormatError(f"{path}: not a PNG/PGM/PPM file")
    return data.astype(np.float64) / 255.0


def save_image(img, path) -> None:
    """Write an image as 8-bit PNG (or P5/P6 for ``.pgm``/``.ppm`` suffixes).

    Values are quantized with ``floor(v * 255 + 0.5)``, so a reload differs
    from the input by at most 1/510 per element.
    """
    img = check_image(img)
    path = Path(path)
    data = _to_bytes(img)
    suffix = path.suffix.lower()
    try:
        if suffix in (".pgm", ".ppm"):
            channels = data.shape[2]
            if (suffix == ".pgm") != (channels == 1):
                raise ValueError(f"{suffix} needs {'1' if suffix == '.pgm' else '3'} channel(s)")
            magic = b"P5" if channels == 1 else b"P6"
            header = b"%s\n%d %d\n255\n" % (magic, data.shape[1], data.shape[0])
            path.write_bytes(header + data.tobytes())
        else:
            mode = "L" if data.shape[2] == 1 else "RGB"
            Image.fromarray(data[:, :, 0] if mode == "L" else data, mode).save(path, format="PNG")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc


def write_manifest(dataset: Dataset, directory, paths: Sequence[str]) -> Path:
    directory = Path(directory)
    entries = [{"id": i, "relative_path": p, "label": l}
               for i, p, l in zip(dataset.ids, paths, dataset.labels)]
    out = directory / MANIFEST_NAME
    out.write_text(json.dumps(entries, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
    return out


def save_dataset(dataset: Dataset, directory) -> Path:
    """Write every image as ``<id>.png`` plus a ``manifest.json`` index."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for img, _, ident in (dataset[i] for i in range(len(dataset))):
        rel = f"{ident}.png"
        save_image(img, directory / rel)
        paths.append(rel)
    return write_manifest(dataset, directory, paths)


def load_dataset(directory) -> Dataset:
    """Load a dataset directory (or manifest path) written by `save_dataset`."""
    path = Path(directory)
    manifest = path if path.is_file() else path / MANIFEST_NAME
    try:
        entries = json.loads(manifest.read_text(encoding="utf-8"))
    except OSError as exc:
        raise UnreadableImageError(f"{manifest}: {exc.strerror or exc}") from exc
    if not entries:
        raise ValueError(f"{manifest}: empty manifest")
    root = manifest.parent
    images = [load_image(root / e["relative_path"]) for e in entries]
    return Dataset(np.stack(images), tuple(e["label"] for e in entries),
                   tuple(e["id"] for e in entries), manifest_path=manifest)


# --------------------------------------------------------------- synthesis

def _texture(size: int, rng: np.random.Generator) -> np.ndarray:
    gray = np.zeros((size, size))
    # octaves of low-pass noise, coarse ones dominant
    for sigma, weight in ((8.0, 1.0), (4.0, 0.6), (2.0, 0.35)):
        layer = gaussian_filter(rng.standard_normal((size, size)), sigma, mode="wrap")
        gray += weight * layer / (layer.std() + 1e-12)
    yy, xx = np.mgrid[0:size, 0:size] / (size - 1) - 0.5
    theta = rng.uniform(0.0, 2.0 * np.pi)
    gray += rng.uniform(0.5, 2.0) * (np.cos(theta) * xx + np.sin(theta) * yy) * 2.0
    gray = (gray - gray.min()) / (gray.max() - gray.min() + 1e-12)
    lo = rng.uniform(0.2, 0.5, size=3)
    hi = rng.uniform(0.5, 0.8, size=3)
    if rng.random() < 0.5:
        lo, hi = hi, lo
    return lo + gray[:, :, None] * (hi - lo)


def synth_texture_dataset(n: int, size: int, rng: np.random.Generator,
                          prefix: str = "real") -> Dataset:
    """Seeded colour textures labelled ``"Real"``.

    Each image is a mix of Gaussian-filtered noise octaves plus a random
    linear ramp, mapped between two random colours in ``[0.2, 0.8]``.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if size < 16:
        raise ValueError(f"size must be >= 16, got {size}")
    images = np.stack([_texture(size, rng) for _ in range(n)])
    width = max(4, len(str(n - 1)))
    ids = tuple(f"{prefix}_{i:0{width}d}" for i in range(n))
    return Dataset(images, (REAL_LABEL,) * n, ids)


def split_dataset(d: Dataset, fraction: float, rng: np.random.Generator) -> tuple[Dataset, Dataset]:
    """Shuffle and cut into two disjoint parts; the first has ``round(fraction * len(d))`` items."""
    if len(d) == 0:
        raise ValueError("cannot split an empty dataset")
    if not 0.0 < fraction < 1.0:
        raise ValueError(f"fraction must lie in (0, 1), got {fraction}")
    order = rng.permutation(len(d))
    k = int(np.floor(fraction * len(d) + 0.5))
    return d.subset(order[:k]), d.subset(order[k:])


def env_seed(default: int) -> int:
    value = os.environ.get("GANPRINT_SEED")
    return int(value) if value else default
