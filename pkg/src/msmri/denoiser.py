"""A small residual UNet written directly in numpy.

Images enter as ``(batch, 2*T, H, W)`` tensors holding the real and imaginary
planes of every phase. The network predicts a correction that is added to its
input (``out = x + body(x)``).

Layer order for ``levels = L``::

    encoder  2 convs per level (channels base * 2**l), 2x2 average pool after each level
    bottleneck  1 conv at the coarsest scale
    decoder  per level (coarse to fine): 2x nearest upsample, concat skip, 1 conv
    final  1 conv back to 2*T channels, no activation

All convolutions are 3x3 with zero padding and are followed by ReLU except the
final one. Computation runs in float64; the ``.msn`` file stores float32.
"""
from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .exceptions import FormatError

MAGIC = b"MSNT"
VERSION = 1
KIND_CONV_RELU = 1
KIND_CONV_LINEAR = 2


@dataclass(frozen=True)
class Architecture:
    levels: int = 2
    base_channels: int = 16
    n_phases: int = 4

    @property
    def io_channels(self) -> int:
        return 2 * self.n_phases

    def layer_shapes(self):
        """``(out, in)`` channel counts for every conv, in storage order."""
        L, base, io = self.levels, self.base_channels, self.io_channels
        shapes, ch = [], io
        enc = []
        for lvl in range(L):
            c = base * 2**lvl
            shapes += [(c, ch), (c, c)]
            enc.append(c)
            ch = c
        shapes.append((ch, ch))
        for lvl in reversed(range(L)):
            shapes.append((enc[lvl], ch + enc[lvl]))
            ch = enc[lvl]
        shapes.append((io, ch))
        return shapes


@dataclass
class ConvLayer:
    weight: np.ndarray  # (out, in, 3, 3)
    bias: np.ndarray  # (out,)
    relu: bool = True


@dataclass
class DenoiserModel:
    arch: Architecture
    layers: list

    def parameters(self):
        """Flat list ``[w0, b0, w1, b1, ...]`` of the live parameter arrays."""
        return [p for layer in self.layers for p in (layer.weight, layer.bias)]

    @property
    def n_params(self) -> int:
        return sum(p.size for p in self.parameters())

    def copy(self) -> "DenoiserModel":
        return DenoiserModel(
            self.arch,
            [ConvLayer(lay.weight.copy(), lay.bias.copy(), lay.relu) for lay in self.layers],
        )

    def checksum(self) -> str:
        h = hashlib.sha256()
        for p in self.parameters():
            h.update(np.ascontiguousarray(p, dtype="<f4").tobytes())
        return h.hexdigest()


def init_model(arch: Architecture = Architecture(), seed: int = 0) -> DenoiserModel:
    """He-normal weights (std ``sqrt(2 / fan_in)``), zero biases.

    Weights are rounded to float32 so a saved model reloads bit-identically.
    """
    rng = np.random.default_rng(seed)
    shapes = arch.layer_shapes()
    layers = []
    for i, (cout, cin) in enumerate(shapes):
        std = np.sqrt(2.0 / (cin * 9))
        w = (rng.standard_normal((cout, cin, 3, 3)) * std).astype(np.float32).astype(np.float64)
        layers.append(ConvLayer(w, np.zeros(cout), relu=i < len(shapes) - 1))
    return DenoiserModel(arch, layers)


def zero_body(model: DenoiserModel) -> DenoiserModel:
    """Copy of ``model`` whose final conv is all zeros, i.e. an exact identity."""
    out = model.copy()
    out.layers[-1].weight[...] = 0.0
    out.layers[-1].bias[...] = 0.0
    return out


# -- primitive ops on NHWC arrays ---------------------------------------------

def _conv_forward(x, layer):
    B, H, W, C = x.shape
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1), (0, 0)))
    cols = sliding_window_view(xp, (3, 3), axis=(1, 2)).reshape(B * H * W, C * 9)
    wmat = layer.weight.reshape(layer.weight.shape[0], -1)
    out = cols @ wmat.T + layer.bias
    return out.reshape(B, H, W, -1), cols


def _conv_backward(dout, cols, layer, in_shape):
    B, H, W, C = in_shape
    cout = layer.weight.shape[0]
    d2 = dout.reshape(-1, cout)
    dw = (d2.T @ cols).reshape(layer.weight.shape)
    db = d2.sum(axis=0)
    dcols = (d2 @ layer.weight.reshape(cout, -1)).reshape(B, H, W, C, 3, 3)
    dxp = np.zeros((B, H + 2, W + 2, C))
    for di in range(3):
        for dj in range(3):
            dxp[:, di:di + H, dj:dj + W, :] += dcols[..., di, dj]
    return dxp[:, 1:-1, 1:-1, :], dw, db


def _pool(x):
    B, H, W, C = x.shape
    return x.reshape(B, H // 2, 2, W // 2, 2, C).mean(axis=(2, 4))


def _pool_backward(g):
    return np.repeat(np.repeat(g, 2, axis=1), 2, axis=2) * 0.25


def _upsample(x):
    return np.repeat(np.repeat(x, 2, axis=1), 2, axis=2)


def _upsample_backward(g):
    B, H, W, C = g.shape
    return g.reshape(B, H // 2, 2, W // 2, 2, C).sum(axis=(2, 4))


# -- network ------------------------------------------------------------------

def _check_input(model, x):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 4:
        raise ValueError(f"expected a (batch, channels, H, W) tensor, got shape {x.shape}")
    if x.shape[1] != model.arch.io_channels:
        raise ValueError(f"model expects {model.arch.io_channels} channels, got {x.shape[1]}")
    div = 2**model.arch.levels
    if x.shape[2] % div or x.shape[3] % div:
        raise ValueError(f"spatial dims {x.shape[2:]} must be divisible by {div} (2**levels)")
    if not np.all(np.isfinite(x)):
        raise ValueError("input tensor contains non-finite values")
    return x


class _Cache:
    """Activations recorded by one forward pass."""

    def __init__(self, x_shape):
        self.x_shape = x_shape
        self.records = []  # (cols, in_shape, relu_mask) per layer
        self.skip_channels = []


def _apply(layer, h, cache):
    out, cols = _conv_forward(h, layer)
    mask = None
    if layer.relu:
        mask = out > 0
        out = out * mask
    cache.records.append((cols, h.shape, mask))
    return out


def forward_with_cache(model: DenoiserModel, x):
    x = _check_input(model, x)
    cache = _Cache(x.shape)
    L = model.arch.levels
    layers = iter(model.layers)
    h = x.transpose(0, 2, 3, 1)
    skips = []
    for _ in range(L):
        h = _apply(next(layers), h, cache)
        h = _apply(next(layers), h, cache)
        skips.append(h)
        h = _pool(h)
    h = _apply(next(layers), h, cache)
    for lvl in reversed(range(L)):
        up = _upsample(h)
        cache.skip_channels.append(up.shape[-1])
        h = _apply(next(layers), np.concatenate([up, skips[lvl]], axis=-1), cache)
    body = _apply(next(layers), h, cache)
    return x + body.transpose(0, 3, 1, 2), cache


def forward(model: DenoiserModel, x) -> np.ndarray:
    """Apply the network to a ``(batch, 2T, H, W)`` tensor."""
    return forward_with_cache(model, x)[0]


def backward(model: DenoiserModel, x, grad_out, cache: _Cache | None = None):
    """Reverse-mode gradients of ``forward``.

    Returns ``(grad_params, grad_x)`` where ``grad_params`` lines up with
    ``model.parameters()``. Pass the cache from :func:`forward_with_cache` to
    skip recomputing the forward pass.
    """
    if cache is None:
        _, cache = forward_with_cache(model, x)
    grad_out = np.asarray(grad_out, dtype=np.float64)
    if grad_out.shape != cache.x_shape or np.shape(x) != cache.x_shape:
        raise ValueError(f"gradient shape {grad_out.shape} does not match the recorded "
                         f"forward input {cache.x_shape}")
    L = model.arch.levels
    grads = [None] * (2 * len(model.layers))
    idx = len(model.layers) - 1

    def back(g):
        nonlocal idx
        cols, in_shape, mask = cache.records[idx]
        if mask is not None:
            g = g * mask
        dx, dw, db = _conv_backward(g, cols, model.layers[idx], in_shape)
        grads[2 * idx], grads[2 * idx + 1] = dw, db
        idx -= 1
        return dx

    g = back(grad_out.transpose(0, 2, 3, 1))
    skip_grads = [None] * L
    for k, lvl in enumerate(range(L)):
        g = back(g)
        n_up = cache.skip_channels[L - 1 - k]
        skip_grads[lvl] = g[..., n_up:]
        g = _upsample_backward(g[..., :n_up])
    g = back(g)
    for lvl in reversed(range(L)):
        g = _pool_backward(g) + skip_grads[lvl]
        g = back(g)
        g = back(g)
    return grads, g.transpose(0, 3, 1, 2) + grad_out


# -- complex image interface ----------------------------------------------------

def pack(img: np.ndarray) -> np.ndarray:
    """``(H, W, T)`` complex -> ``(2T, H, W)`` real, channels ``re_0, im_0, re_1, ...``."""
    H, W, T = img.shape
    out = np.empty((T, 2, H, W))
    planes = np.transpose(img, (2, 0, 1))
    out[:, 0] = planes.real
    out[:, 1] = planes.imag
    return out.reshape(2 * T, H, W)


def unpack(t: np.ndarray) -> np.ndarray:
    C, H, W = t.shape
    pairs = t.reshape(C // 2, 2, H, W)
    return np.transpose(pairs[:, 0] + 1j * pairs[:, 1], (1, 2, 0))


def denoise_image(model: DenoiserModel, img: np.ndarray) -> np.ndarray:
    """Run the network on a complex ``(H, W, T)`` image, preserving its shape.

    Spatial dims are reflection-padded at the bottom/right up to a multiple of
    ``2**levels`` and cropped afterwards.
    """
    img = np.asarray(img)
    if img.ndim != 3:
        raise ValueError(f"expected an (H, W, T) image, got shape {img.shape}")
    H, W, T = img.shape
    if T != model.arch.n_phases:
        raise ValueError(f"model was built for {model.arch.n_phases} phases, image has {T}")
    div = 2**model.arch.levels
    ph, pw = -H % div, -W % div
    x = pack(img)
    if ph or pw:
        x = np.pad(x, ((0, 0), (0, ph), (0, pw)), mode="reflect")
    out = forward(model, x[None])[0, :, :H, :W]
    return unpack(out)


# -- serialization ------------------------------------------------------------

def save_model(model: DenoiserModel, path) -> None:
    """Write the ``.msn`` container; parameters are stored as float32."""
    parts = [MAGIC, struct.pack("<II", VERSION, len(model.layers))]
    for layer in model.layers:
        kind = KIND_CONV_RELU if layer.relu else KIND_CONV_LINEAR
        parts.append(struct.pack("<5I", kind, *layer.weight.shape))
        parts.append(np.ascontiguousarray(layer.weight, dtype="<f4").tobytes())
        parts.append(np.ascontiguousarray(layer.bias, dtype="<f4").tobytes())
    Path(path).write_bytes(b"".join(parts))


def load_model(path) -> DenoiserModel:
    raw = Path(path).read_bytes()
    if len(raw) < 12:
        raise FormatError(f"{path}: truncated model header")
    if raw[:4] != MAGIC:
        raise FormatError(f"{path}: bad magic {raw[:4]!r}, expected {MAGIC!r}")
    version, n_layers = struct.unpack("<II", raw[4:12])
    if version != VERSION:
        raise FormatError(f"{path}: unsupported model version {version}")
    pos, layers = 12, []
    for i in range(n_layers):
        if len(raw) < pos + 20:
            raise FormatError(f"{path}: truncated header of layer {i}")
        kind, cout, cin, kh, kw = struct.unpack("<5I", raw[pos:pos + 20])
        pos += 20
        if kind not in (KIND_CONV_RELU, KIND_CONV_LINEAR) or (kh, kw) != (3, 3):
            raise FormatError(f"{path}: layer {i} has unsupported kind {kind} or kernel {kh}x{kw}")
        count = cout * cin * kh * kw + cout
        if len(raw) < pos + 4 * count:
            raise FormatError(f"{path}: truncated parameters of layer {i}")
        vals = np.frombuffer(raw, dtype="<f4", count=count, offset=pos).astype(np.float64)
        pos += 4 * count
        layers.append(ConvLayer(vals[:-cout].reshape(cout, cin, kh, kw), vals[-cout:].copy(),
                                kind == KIND_CONV_RELU))
    if pos != len(raw):
        raise FormatError(f"{path}: {len(raw) - pos} trailing bytes")
    if (n_layers - 2) % 3 or n_layers < 5:
        raise FormatError(f"{path}: {n_layers} layers do not form a UNet")
    levels = (n_layers - 2) // 3
    io, base = layers[0].weight.shape[1], layers[0].weight.shape[0]
    arch = Architecture(levels, base, io // 2)
    expected = arch.layer_shapes()
    got = [lay.weight.shape[:2] for lay in layers]
    if io % 2 or got != expected or [lay.relu for lay in layers] != [True] * (n_layers - 1) + [False]:
        raise FormatError(f"{path}: layer shapes {got} do not match a UNet with {levels} levels")
    return DenoiserModel(arch, layers)
