"""Layered toy generators and the GPNT model file format."""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from ..imaging import check_batch, make_rng
from .layers import KIND_IDS, KINDS, BiasMap, Layer, make_layer

MAGIC = b"GPNT"
FORMAT_VERSION = 1


class ModelFormatError(ValueError):
    pass


def _as_batch(x, name="x"):
    arr = np.asarray(x, dtype=np.float64)
    single = arr.ndim == 3
    return check_batch(arr, name), single


class ToyGenerator:
    """An ordered stack of layers mapping images to images.

    Parameters are held in float64 for evaluation but are rounded to float32
    whenever they are stored (see `round_params`).
    """

    def __init__(self, layers: list[Layer], family_tag: str = "toy", seed: int = 0):
        if not layers:
            raise ValueError("a generator needs at least one layer")
        for a, b in zip(layers, layers[1:]):
            if a.out_channels != b.in_channels:
                raise ValueError(f"channel mismatch between {a!r} and {b!r}")
        self.layers = list(layers)
        self.family_tag = str(family_tag)
        self.seed = int(seed)

    @property
    def in_channels(self) -> int:
        return self.layers[0].in_channels

    @property
    def out_channels(self) -> int:
        return self.layers[-1].out_channels

    def output_shape(self, input_shape) -> tuple[int, int, int]:
        h, w, c = input_shape
        if c != self.in_channels:
            raise ValueError(f"model expects {self.in_channels} input channels, got {c}")
        for layer in self.layers:
            h, w = layer.out_spatial(h, w)
        return h, w, self.out_channels

    def copy(self) -> "ToyGenerator":
        return ToyGenerator([l.copy() for l in self.layers], self.family_tag, self.seed)

    def round_params(self) -> None:
        for layer in self.layers:
            for k, v in layer.params.items():
                layer.params[k] = v.astype(np.float32).astype(np.float64)

    def n_params(self) -> int:
        return sum(v.size for l in self.layers for v in l.params.values())

    # ------------------------------------------------------------ passes

    def forward_with_caches(self, x):
        x, _ = _as_batch(x)
        self.output_shape(x.shape[1:])
        caches = []
        for layer in self.layers:
            x, cache = layer.forward(x)
            caches.append(cache)
        return x, caches

    def forward(self, x) -> np.ndarray:
        """Evaluate on one ``(H, W, C)`` image or an ``(N, H, W, C)`` batch."""
        _, single = _as_batch(x)
        out, _ = self.forward_with_caches(x)
        return out[0] if single else out

    __call__ = forward

    def _sweep(self, x, grad_out):
        x, single = _as_batch(x)
        out, caches = self.forward_with_caches(x)
        g = np.asarray(grad_out, dtype=np.float64)
        if single and g.ndim == 3:
            g = g[None]
        if g.shape != out.shape:
            raise ValueError(f"grad_out shape {g.shape} does not match output shape {out.shape}")
        param_grads = [None] * len(self.layers)
        for i in range(len(self.layers) - 1, -1, -1):
            g, param_grads[i] = self.layers[i].backward(caches[i], g)
        return (g[0] if single else g), param_grads

    def backward_input(self, x, grad_out) -> np.ndarray:
        """Gradient of ``<grad_out, forward(x)>`` with respect to ``x``."""
        return self._sweep(x, grad_out)[0]

    def backward_params(self, x, grad_out) -> list[dict[str, np.ndarray]]:
        """Per-layer gradients of ``<grad_out, forward(x)>`` w.r.t. every parameter."""
        return self._sweep(x, grad_out)[1]

    def __repr__(self):
        kinds = " -> ".join(l.kind for l in self.layers)
        return f"ToyGenerator[{self.family_tag}]({kinds})"


def default_generator(seed: int, channels: int = 3, hidden: int = 8,
                      bias_map_size: tuple[int, int] | None = None) -> ToyGenerator:
    """conv3x3(C->hidden) -> tanh -> conv3x3(hidden->C) [-> bias_map] -> tanh.

    Weights are drawn uniform in ``+-sqrt(1/fan_in)`` from the seeded
    generator; a bias map, when requested, starts at zero.
    """
    from .layers import Conv3x3, TanhScaled

    rng = make_rng(seed)
    layers: list[Layer] = [Conv3x3(channels, hidden), TanhScaled(hidden, hidden),
                           Conv3x3(hidden, channels)]
    if bias_map_size is not None:
        layers.append(BiasMap(channels, channels, *bias_map_size))
    layers.append(TanhScaled(channels, channels))
    for layer in layers:
        layer.init_params(rng)
    net = ToyGenerator(layers, family_tag="toy" if bias_map_size is None else "toy_generation", seed=seed)
    net.round_params()
    return net


# ------------------------------------------------------------ file format
#
# magic "GPNT" | u16 version | u16 tag length | tag utf-8 | u64 seed | u32 layer count
# per layer: u8 kind id | u8 ndims | ndims x u32 dims | u32 param count | f32 params (LE)
# params are concatenated in the layer's param_shapes() order, C-ordered.

def save_model(net: ToyGenerator, path) -> None:
    tag = net.family_tag.encode("utf-8")
    chunks = [MAGIC, struct.pack("<HH", FORMAT_VERSION, len(tag)), tag,
              struct.pack("<QI", net.seed, len(net.layers))]
    for layer in net.layers:
        dims = layer.dims
        flat = np.concatenate([layer.params[k].ravel() for k in layer.param_shapes()] or [np.zeros(0)])
        chunks.append(struct.pack("<BB", KIND_IDS[layer.kind], len(dims)))
        chunks.append(struct.pack(f"<{len(dims)}I", *dims))
        chunks.append(struct.pack("<I", flat.size))
        chunks.append(flat.astype("<f4").tobytes())
    Path(path).write_bytes(b"".join(chunks))


def load_model(path) -> ToyGenerator:
    raw = Path(path).read_bytes()
    pos = 0

    def take(n):
        nonlocal pos
        if pos + n > len(raw):
            raise ModelFormatError(f"{path}: truncated model file")
        out = raw[pos:pos + n]
        pos += n
        return out

    if take(4) != MAGIC:
        raise ModelFormatError(f"{path}: not a GPNT model file")
    version, tag_len = struct.unpack("<HH", take(4))
    if version != FORMAT_VERSION:
        raise ModelFormatError(f"{path}: unsupported model format version {version}")
    tag = take(tag_len).decode("utf-8")
    seed, n_layers = struct.unpack("<QI", take(12))
    layers = []
    for _ in range(n_layers):
        kind_id, ndims = struct.unpack("<BB", take(2))
        if kind_id >= len(KINDS):
            raise ModelFormatError(f"{path}: unknown layer kind id {kind_id}")
        dims = struct.unpack(f"<{ndims}I", take(4 * ndims))
        (count,) = struct.unpack("<I", take(4))
        flat = np.frombuffer(take(4 * count), dtype="<f4").astype(np.float64)
        try:
            layer = make_layer(KINDS[kind_id], dims)
        except ValueError as exc:
            raise ModelFormatError(f"{path}: bad layer spec: {exc}") from None
        shapes = layer.param_shapes()
        if count != sum(int(np.prod(s)) for s in shapes.values()):
            raise ModelFormatError(f"{path}: parameter count mismatch for {layer.kind}")
        offset = 0
        for name, shape in shapes.items():
            size = int(np.prod(shape))
            layer.params[name] = flat[offset:offset + size].reshape(shape).copy()
            offset += size
        layers.append(layer)
    if pos != len(raw):
        raise ModelFormatError(f"{path}: trailing bytes after last layer")
    return ToyGenerator(layers, tag, seed)
