"""Source attribution from log-DCT features with multinomial logistic regression."""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin

from .imaging import REAL_LABEL, Dataset, make_rng
from .report import render_table
from .spectral import DctFeatures, log_spectrum
from .toynet.procedural import FAMILIES, procedural_generate

CLASSIFIER_MAGIC = b"GPCL"
CLASSIFIER_VERSION = 1

# Verbatim count matrices (rows true, columns predicted) and their printed precision rows.
PUBLISHED_4CLASS = {
    "classes": ("AttGAN", "CUT", "CycleGAN", "Real"),
    "counts": ((209, 3, 0, 25),
               (5, 221, 7, 4),
               (0, 2, 233, 2),
               (19, 2, 0, 216)),
    "precision": ("0.8970", "0.9693", "0.9708", "0.8745"),
}
PUBLISHED_6CLASS = {
    "classes": ("DD-GAN", "StarGAN", "StarGANv2", "StyleGANv2", "StyleSwin", "Real"),
    "counts": ((934, 13, 0, 33, 0, 20),
               (4, 996, 0, 0, 0, 0),
               (0, 1, 992, 0, 3, 4),
               (3, 1, 0, 992, 2, 2),
               (0, 0, 12, 10, 962, 16),
               (36, 6, 43, 61, 77, 777)),
    "precision": ("0.956", "0.9794", "0.9475", "0.9051", "0.9215", "0.9487"),
}


class ClassifierFormatError(ValueError):
    pass


# ------------------------------------------------------------ confusion matrix

@dataclass(frozen=True)
class ConfusionMatrix:
    counts: np.ndarray
    class_names: tuple[str, ...]

    def __post_init__(self):
        counts = np.array(self.counts, dtype=np.int64)
        k = len(self.class_names)
        if counts.shape != (k, k):
            raise ValueError(f"counts must be {k}x{k}, got {counts.shape}")
        if np.any(counts < 0):
            raise ValueError("counts must be nonnegative")
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "class_names", tuple(self.class_names))

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def accuracy(self) -> float:
        return float(np.trace(self.counts) / self.total) if self.total else float("nan")

    def precision_row(self) -> tuple[np.ndarray, np.ndarray]:
        return precision_row(self)

    def rows(self, decimals_raw: bool = False) -> list[dict]:
        out = [{"true\\pred": name, **{c: int(v) for c, v in zip(self.class_names, row)}}
               for name, row in zip(self.class_names, self.counts)]
        prec, _ = precision_row(self)
        out.append({"true\\pred": "precision", **{c: float(p) for c, p in zip(self.class_names, prec)}})
        return out

    def to_csv(self, raw: bool = False) -> str:
        return render_table(self.rows(), ["true\\pred", *self.class_names], "csv", raw)

    def to_markdown(self) -> str:
        return render_table(self.rows(), ["true\\pred", *self.class_names], "markdown")


def precision_row(m: ConfusionMatrix) -> tuple[np.ndarray, np.ndarray]:
    """Per-class precision ``counts[c, c] / column_sum(c)``.

    Returns ``(precision, empty)``; an empty column gives NaN and ``empty = True``.
    """
    cols = m.counts.sum(axis=0)
    empty = cols == 0
    diag = np.diag(m.counts).astype(np.float64)
    prec = np.full(len(cols), np.nan)
    prec[~empty] = diag[~empty] / cols[~empty]
    return prec, empty


def check_published_tables() -> list[tuple[str, str, str, bool]]:
    """Recompute the printed precision rows; one ``(class, printed, recomputed, ok)`` per column."""
    out = []
    for table in (PUBLISHED_4CLASS, PUBLISHED_6CLASS):
        prec, _ = precision_row(ConfusionMatrix(table["counts"], table["classes"]))
        for name, printed, value in zip(table["classes"], table["precision"], prec):
            decimals = len(printed.split(".")[1])
            got = f"{value:.{decimals}f}"
            out.append((name, printed, got, got == printed))
    return out


# ------------------------------------------------------------ classifier

@dataclass(frozen=True)
class ClassifierParams:
    weights: np.ndarray   # (K, d), acting on standardized features
    bias: np.ndarray      # (K,)
    class_names: tuple[str, ...]
    mean: np.ndarray      # (d,) training-split feature mean
    scale: np.ndarray     # (d,) training-split feature std, zeros replaced by 1
    l2_reg: float = 0.0

    @property
    def feature_dim(self) -> int:
        return self.weights.shape[1]

    def logits(self, features) -> np.ndarray:
        f = np.atleast_2d(np.asarray(features, dtype=np.float64))
        if f.shape[1] != self.feature_dim:
            raise ValueError(f"expected {self.feature_dim}-D features, got {f.shape[1]}")
        return ((f - self.mean) / self.scale) @ self.weights.T + self.bias


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def predict(p: ClassifierParams, features) -> tuple[list[str], np.ndarray]:
    """Labels and probability rows; ties go to the lowest class index."""
    probs = softmax(p.logits(features))
    idx = np.argmax(probs, axis=1)  # first maximum wins
    return [p.class_names[i] for i in idx], probs


def _f32(a) -> np.ndarray:
    return np.asarray(a, dtype=np.float32).astype(np.float64)


def train_classifier(features, labels: Sequence[str], l2_reg: float = 1e-4, epochs: int = 300,
                     lr: float = 0.5, seed: int = 0, class_names: Sequence[str] | None = None,
                     history: list | None = None) -> ClassifierParams:
    """Softmax cross-entropy plus ``l2_reg / 2 * |W|^2`` by full-batch gradient descent.

    Weights start at zero, so the result does not depend on ``seed``; it is
    accepted to keep every stage's signature uniform. Stored parameters are
    rounded to float32 so a saved classifier predicts exactly like this one.
    If ``history`` is a list, the objective before each epoch is appended.
    """
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2 or len(x) != len(labels):
        raise ValueError("features must be (n, d) and pair up with labels")
    if not np.all(np.isfinite(x)):
        raise ValueError("features contain non-finite values")
    names = tuple(class_names) if class_names is not None else tuple(sorted(set(labels)))
    if len(names) < 2 or len(set(labels)) < 2:
        raise ValueError("training needs at least two classes")
    index = {c: i for i, c in enumerate(names)}
    try:
        y = np.array([index[l] for l in labels])
    except KeyError as exc:
        raise ValueError(f"label {exc.args[0]!r} is not among the class names") from None
    mean = _f32(x.mean(axis=0))
    std = x.std(axis=0)
    scale = _f32(np.where(std > 1e-12, std, 1.0))
    z = (x - mean) / scale
    n, d = z.shape
    k = len(names)
    onehot = np.eye(k)[y]
    w = np.zeros((k, d))
    b = np.zeros(k)
    for _ in range(epochs):
        probs = softmax(z @ w.T + b)
        if history is not None:
            ce = -np.mean(np.log(probs[np.arange(n), y] + 1e-300))
            history.append(float(ce + 0.5 * l2_reg * np.sum(w * w)))
        g = (probs - onehot) / n
        w -= lr * (g.T @ z + l2_reg * w)
        b -= lr * g.sum(axis=0)
    return ClassifierParams(_f32(w), _f32(b), names, mean, scale, float(l2_reg))


def evaluate(p: ClassifierParams, features, labels: Sequence[str]) -> ConfusionMatrix:
    if len(labels) == 0:
        raise ValueError("cannot evaluate on an empty test set")
    index = {c: i for i, c in enumerate(p.class_names)}
    unknown = sorted(set(labels) - set(index))
    if unknown:
        raise ValueError(f"unknown labels in test set: {unknown}")
    predicted, _ = predict(p, features)
    counts = np.zeros((len(index), len(index)), dtype=np.int64)
    for t, q in zip(labels, predicted):
        counts[index[t], index[q]] += 1
    return ConfusionMatrix(counts, p.class_names)


class AttributionClassifier(ClassifierMixin, BaseEstimator):
    """Estimator wrapper over `train_classifier`; ``X`` holds feature rows."""

    def __init__(self, l2_reg: float = 1e-4, epochs: int = 300, lr: float = 0.5, seed: int = 0):
        self.l2_reg = l2_reg
        self.epochs = epochs
        self.lr = lr
        self.seed = seed

    def fit(self, X, y):
        self.params_ = train_classifier(X, list(y), self.l2_reg, self.epochs, self.lr, self.seed)
        self.classes_ = np.array(self.params_.class_names)
        return self

    def predict_proba(self, X):
        return predict(self.params_, X)[1]

    def predict(self, X):
        return np.array(predict(self.params_, X)[0])


# ------------------------------------------------------------ file format
#
# magic "GPCL" | u16 version | u32 classes K | u32 dim d | f64 l2_reg
# K x (u16 name length | utf-8 name) | f32 mean[d] | f32 scale[d] | f32 weights[K*d] | f32 bias[K]

def save_classifier(p: ClassifierParams, path) -> None:
    k, d = p.weights.shape
    parts = [CLASSIFIER_MAGIC, struct.pack("<HIId", CLASSIFIER_VERSION, k, d, p.l2_reg)]
    for name in p.class_names:
        raw = name.encode("utf-8")
        parts.append(struct.pack("<H", len(raw)) + raw)
    for arr in (p.mean, p.scale, p.weights, p.bias):
        parts.append(np.asarray(arr, dtype="<f4").tobytes())
    Path(path).write_bytes(b"".join(parts))


def load_classifier(path) -> ClassifierParams:
    data = Path(path).read_bytes()
    pos = 0

    def take(n):
        nonlocal pos
        if pos + n > len(data):
            raise ClassifierFormatError(f"{path}: truncated classifier file")
        chunk = data[pos:pos + n]
        pos += n
        return chunk

    if take(4) != CLASSIFIER_MAGIC:
        raise ClassifierFormatError(f"{path}: not a classifier file (bad magic)")
    version, k, d, l2 = struct.unpack("<HIId", take(18))
    if version != CLASSIFIER_VERSION:
        raise ClassifierFormatError(f"{path}: unsupported classifier format version {version}")
    names = []
    for _ in range(k):
        (n,) = struct.unpack("<H", take(2))
        names.append(take(n).decode("utf-8"))

    def floats(count, shape):
        return np.frombuffer(take(4 * count), dtype="<f4").astype(np.float64).reshape(shape)

    mean, scale = floats(d, (d,)), floats(d, (d,))
    weights, bias = floats(k * d, (k, d)), floats(k, (k,))
    if pos != len(data):
        raise ClassifierFormatError(f"{path}: trailing bytes after classifier")
    return ClassifierParams(weights, bias, tuple(names), mean, scale, l2)


# ------------------------------------------------------------ benchmark data

def family_dataset(n_per_class: int, size: int, seed: int) -> Dataset:
    """``n_per_class`` images for each procedural family plus Real, from disjoint source textures.

    Images are quantized to 8 bits, so the benchmark matches what is saved to disk.
    """
    from .imaging import quantize8, synth_texture_dataset

    if n_per_class < 1:
        raise ValueError("n_per_class must be >= 1")
    classes = (*FAMILIES, REAL_LABEL)
    src = synth_texture_dataset(n_per_class * len(classes), size, make_rng(seed))
    images, labels, ids = [], [], []
    for c, name in enumerate(classes):
        for i in range(n_per_class):
            j = c * n_per_class + i
            img = src.images[j]
            if name != REAL_LABEL:
                img = procedural_generate(name, img, seed=seed + j)
            images.append(quantize8(img))
            labels.append(name)
            ids.append(f"{name}_{i:04d}")
    return Dataset(np.stack(images), tuple(labels), tuple(ids))


def stratified_split(d: Dataset, fraction: float, rng: np.random.Generator) -> tuple[Dataset, Dataset]:
    """Per-class shuffled split; classes are visited in sorted order."""
    train_idx, test_idx = [], []
    labels = np.array(d.labels)
    for name in sorted(set(d.labels)):
        idx = np.flatnonzero(labels == name)
        idx = idx[rng.permutation(len(idx))]
        k = int(np.floor(fraction * len(idx) + 0.5))
        train_idx.extend(idx[:k])
        test_idx.extend(idx[k:])
    return d.subset(sorted(train_idx)), d.subset(sorted(test_idx))


def features_of(d: Dataset, grid: int | None = 8) -> np.ndarray:
    return DctFeatures(grid=grid).transform(d.images)


def spectrum_figure_data(d: Dataset) -> dict[str, np.ndarray]:
    """Per-label mean log spectrum, each an ``(H, W)`` grid."""
    if len(d) == 0:
        raise ValueError("no images to summarize")
    out = {}
    labels = np.array(d.labels)
    for name in dict.fromkeys(d.labels):
        members = d.images[labels == name]
        out[name] = np.mean([log_spectrum(img, flatten=False) for img in members], axis=0)
    return out


def high_band_energy(spectrum: np.ndarray) -> float:
    """Mean log magnitude over the top-frequency quarter (both indices in the upper half)."""
    h, w = spectrum.shape
    return float(spectrum[h // 2:, w // 2:].mean())
