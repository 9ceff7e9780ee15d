"""Layer kinds with explicit forward and reverse-mode passes.

Every layer works on batches shaped ``(N, H, W, C)`` in float64. ``forward``
returns the output and a cache; ``backward`` takes that cache and the
output gradient and returns the input gradient plus a dict of parameter
gradients keyed like ``params``.
"""
from __future__ import annotations

from functools import lru_cache

import numpy as np

KINDS = (
    "conv3x3",
    "pointwise_affine",
    "activation_tanh_scaled",
    "upsample_nearest2x",
    "upsample_bilinear2x",
    "upsample_tconv2x",
    "bias_map",
)
KIND_IDS = {k: i for i, k in enumerate(KINDS)}


class Layer:
    kind: str = ""

    def __init__(self, in_channels: int, out_channels: int, params: dict[str, np.ndarray] | None = None):
        if in_channels < 1 or out_channels < 1:
            raise ValueError("channel counts must be positive")
        self.in_channels = int(in_channels)
        self.out_channels = int(out_channels)
        self.params = {k: np.asarray(v, dtype=np.float64) for k, v in (params or {}).items()}
        for name, shape in self.param_shapes().items():
            if name not in self.params:
                self.params[name] = np.zeros(shape)
            elif self.params[name].shape != shape:
                raise ValueError(f"{self.kind}.{name}: expected shape {shape}, got {self.params[name].shape}")

    def param_shapes(self) -> dict[str, tuple[int, ...]]:
        return {}

    @property
    def dims(self) -> tuple[int, ...]:
        return (self.in_channels, self.out_channels)

    def out_spatial(self, h: int, w: int) -> tuple[int, int]:
        return h, w

    def init_params(self, rng: np.random.Generator) -> None:
        pass

    def copy(self) -> "Layer":
        new = type(self).__new__(type(self))
        new.__dict__.update(self.__dict__)
        new.params = {k: v.copy() for k, v in self.params.items()}
        return new

    def _check_input(self, x: np.ndarray) -> None:
        if x.ndim != 4 or x.shape[3] != self.in_channels:
            raise ValueError(f"{self.kind}: expected (N, H, W, {self.in_channels}) input, got {x.shape}")

    def forward(self, x):
        raise NotImplementedError

    def backward(self, cache, grad_out):
        raise NotImplementedError

    def __repr__(self):
        return f"{type(self).__name__}({self.in_channels}->{self.out_channels})"


def _uniform_init(rng, fan_in, shape):
    bound = np.sqrt(1.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


class Conv3x3(Layer):
    """Stride-1 3x3 convolution with reflect padding of 1."""

    kind = "conv3x3"

    def param_shapes(self):
        return {"weight": (self.out_channels, self.in_channels, 3, 3), "bias": (self.out_channels,)}

    def init_params(self, rng):
        fan_in = self.in_channels * 9
        self.params["weight"] = _uniform_init(rng, fan_in, self.param_shapes()["weight"])
        self.params["bias"] = _uniform_init(rng, fan_in, (self.out_channels,))

    def forward(self, x):
        self._check_input(x)
        if x.shape[1] < 2 or x.shape[2] < 2:
            raise ValueError("conv3x3 needs spatial size >= 2 for reflect padding")
        padded = np.pad(x, ((0, 0), (1, 1), (1, 1), (0, 0)), mode="reflect")
        n, h, w, _ = x.shape
        wt = self.params["weight"]
        out = np.zeros((n, h, w, self.out_channels))
        for i in range(3):
            for j in range(3):
                out += padded[:, i:i + h, j:j + w] @ wt[:, :, i, j].T
        return out + self.params["bias"], padded

    def backward(self, padded, grad_out):
        wt = self.params["weight"]
        n, h, w, o = grad_out.shape
        c = self.in_channels
        g2 = grad_out.reshape(-1, o)
        gw = np.empty_like(wt)
        gpad = np.zeros((n, h + 2, w + 2, c))
        for i in range(3):
            for j in range(3):
                window = padded[:, i:i + h, j:j + w].reshape(-1, c)
                gw[:, :, i, j] = g2.T @ window
                gpad[:, i:i + h, j:j + w] += grad_out @ wt[:, :, i, j]
        # fold reflect padding back onto the source rows/columns
        gpad[:, 2] += gpad[:, 0]
        gpad[:, h - 1] += gpad[:, h + 1]
        gpad[:, :, 2] += gpad[:, :, 0]
        gpad[:, :, w - 1] += gpad[:, :, w + 1]
        return gpad[:, 1:h + 1, 1:w + 1], {"weight": gw, "bias": g2.sum(axis=0)}


class PointwiseAffine(Layer):
    """Per-pixel affine channel map ``y = x @ weight.T + bias`` (a 1x1 convolution)."""

    kind = "pointwise_affine"

    def param_shapes(self):
        return {"weight": (self.out_channels, self.in_channels), "bias": (self.out_channels,)}

    def init_params(self, rng):
        self.params["weight"] = _uniform_init(rng, self.in_channels, self.param_shapes()["weight"])
        self.params["bias"] = _uniform_init(rng, self.in_channels, (self.out_channels,))

    def forward(self, x):
        self._check_input(x)
        return x @ self.params["weight"].T + self.params["bias"], x

    def backward(self, x, grad_out):
        grads = {
            "weight": np.einsum("nhwo,nhwc->oc", grad_out, x, optimize=True),
            "bias": grad_out.sum(axis=(0, 1, 2)),
        }
        return grad_out @ self.params["weight"], grads


class TanhScaled(Layer):
    """``(tanh(z) + 1) / 2``, mapping the reals into ``(0, 1)``."""

    kind = "activation_tanh_scaled"

    def forward(self, x):
        self._check_input(x)
        t = np.tanh(x)
        return 0.5 * (t + 1.0), t

    def backward(self, t, grad_out):
        return grad_out * 0.5 * (1.0 - t * t), {}


class UpsampleNearest2x(Layer):
    kind = "upsample_nearest2x"

    def out_spatial(self, h, w):
        return 2 * h, 2 * w

    def forward(self, x):
        self._check_input(x)
        return x.repeat(2, axis=1).repeat(2, axis=2), None

    def backward(self, cache, grad_out):
        n, h, w, c = grad_out.shape
        return grad_out.reshape(n, h // 2, 2, w // 2, 2, c).sum(axis=(2, 4)), {}


@lru_cache(maxsize=32)
def bilinear_matrix(n: int) -> np.ndarray:
    """``(2n, n)`` linear-interpolation matrix, half-pixel centres, edge clamp."""
    mat = np.zeros((2 * n, n))
    for o in range(2 * n):
        src = (o + 0.5) / 2.0 - 0.5
        lo = int(np.floor(src))
        frac = src - lo
        mat[o, min(max(lo, 0), n - 1)] += 1.0 - frac
        mat[o, min(max(lo + 1, 0), n - 1)] += frac
    mat.setflags(write=False)
    return mat


class UpsampleBilinear2x(Layer):
    kind = "upsample_bilinear2x"

    def out_spatial(self, h, w):
        return 2 * h, 2 * w

    def forward(self, x):
        self._check_input(x)
        uh, uw = bilinear_matrix(x.shape[1]), bilinear_matrix(x.shape[2])
        return np.einsum("ph,nhwc,qw->npqc", uh, x, uw, optimize=True), (x.shape[1], x.shape[2])

    def backward(self, size, grad_out):
        uh, uw = bilinear_matrix(size[0]), bilinear_matrix(size[1])
        return np.einsum("ph,npqc,qw->nhwc", uh, grad_out, uw, optimize=True), {}


class UpsampleTConv2x(Layer):
    """Stride-2 transposed 3x3 convolution producing exactly ``2H x 2W``.

    Output pixel ``o`` receives input ``i`` through kernel tap ``k`` when
    ``o = 2i + k - 1``. Even outputs see one tap, odd outputs two, which is
    the uneven overlap behind checkerboard artifacts.
    """

    kind = "upsample_tconv2x"

    def param_shapes(self):
        return {"weight": (self.in_channels, self.out_channels, 3, 3), "bias": (self.out_channels,)}

    def init_params(self, rng):
        fan_in = self.in_channels * 9
        self.params["weight"] = _uniform_init(rng, fan_in, self.param_shapes()["weight"])
        self.params["bias"] = _uniform_init(rng, fan_in, (self.out_channels,))

    def out_spatial(self, h, w):
        return 2 * h, 2 * w

    def forward(self, x):
        self._check_input(x)
        n, h, w, _ = x.shape
        full = np.zeros((n, 2 * h + 1, 2 * w + 1, self.out_channels))
        wt = self.params["weight"]
        for ki in range(3):
            for kj in range(3):
                full[:, ki:ki + 2 * h:2, kj:kj + 2 * w:2] += x @ wt[:, :, ki, kj]
        return full[:, 1:2 * h + 1, 1:2 * w + 1] + self.params["bias"], x

    def backward(self, x, grad_out):
        n, h, w, _ = x.shape
        gfull = np.zeros((n, 2 * h + 1, 2 * w + 1, self.out_channels))
        gfull[:, 1:2 * h + 1, 1:2 * w + 1] = grad_out
        wt = self.params["weight"]
        gx = np.zeros_like(x)
        gw = np.zeros_like(wt)
        for ki in range(3):
            for kj in range(3):
                g = gfull[:, ki:ki + 2 * h:2, kj:kj + 2 * w:2]
                gx += g @ wt[:, :, ki, kj].T
                gw[:, :, ki, kj] = np.einsum("nhwc,nhwo->co", x, g, optimize=True)
        return gx, {"weight": gw, "bias": grad_out.sum(axis=(0, 1, 2))}


class BiasMap(Layer):
    """Learned per-position offset ``y = x + offset``.

    A translation-equivariant conv stack cannot emit a fixed spatial pattern
    on its own; this is the toy counterpart of the learned constant input
    of style-based generators.
    """

    kind = "bias_map"

    def __init__(self, in_channels, out_channels, height: int = 0, width: int = 0, params=None):
        if in_channels != out_channels:
            raise ValueError("bias_map preserves the channel count")
        if height < 1 or width < 1:
            raise ValueError("bias_map needs positive height and width")
        self.height, self.width = int(height), int(width)
        super().__init__(in_channels, out_channels, params)

    def param_shapes(self):
        return {"offset": (self.height, self.width, self.out_channels)}

    @property
    def dims(self):
        return (self.in_channels, self.out_channels, self.height, self.width)

    def forward(self, x):
        self._check_input(x)
        if x.shape[1:3] != (self.height, self.width):
            raise ValueError(f"bias_map expects {self.height}x{self.width} input, got {x.shape[1]}x{x.shape[2]}")
        return x + self.params["offset"], None

    def backward(self, cache, grad_out):
        return grad_out, {"offset": grad_out.sum(axis=0)}


LAYER_TYPES = {cls.kind: cls for cls in (Conv3x3, PointwiseAffine, TanhScaled, UpsampleNearest2x,
                                         UpsampleBilinear2x, UpsampleTConv2x, BiasMap)}


def make_layer(kind: str, dims, params=None) -> Layer:
    try:
        cls = LAYER_TYPES[kind]
    except KeyError:
        raise ValueError(f"unknown layer kind {kind!r}") from None
    dims = tuple(int(d) for d in dims)
    if cls is BiasMap:
        if len(dims) != 4:
            raise ValueError("bias_map dims are (in, out, height, width)")
        return BiasMap(dims[0], dims[1], dims[2], dims[3], params)
    if len(dims) != 2:
        raise ValueError(f"{kind} dims are (in, out)")
    if cls in (TanhScaled, UpsampleNearest2x, UpsampleBilinear2x) and dims[0] != dims[1]:
        raise ValueError(f"{kind} preserves the channel count")
    return cls(dims[0], dims[1], params)
