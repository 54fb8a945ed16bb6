"""Convolution, pooling, normalization and resampling layers.

All layers operate on unbatched ``C×H×W`` tensors.
"""

from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from depthkit.exceptions import ShapeError
from depthkit.params import Parameter, Scope
from depthkit.tensor import Tensor, concat, make_op, matmul_mlp, reshape, take, transpose


@dataclass(frozen=True)
class Conv2dSpec:
    """Shape contract of a same-padded 2-D convolution.

    ``groups`` is 1 (dense) or ``in_channels`` (depth-wise, one filter per
    channel). Padding is always ``dilation * (kernel - 1) / 2`` zeros.
    """

    in_channels: int
    out_channels: int
    kernel: int = 1
    dilation: int = 1
    groups: int = 1
    stride: int = 1

    def __post_init__(self) -> None:
        if self.kernel < 1 or self.kernel % 2 == 0:
            raise ShapeError(f"kernel must be odd, got {self.kernel}")
        if self.dilation < 1:
            raise ShapeError(f"dilation must be >= 1, got {self.dilation}")
        if self.groups not in (1, self.in_channels):
            raise ShapeError(f"groups must be 1 or in_channels, got {self.groups}")
        if self.in_channels % self.groups or self.out_channels % self.groups:
            raise ShapeError(
                f"channels {self.in_channels}->{self.out_channels} not divisible by groups {self.groups}"
            )
        if self.depthwise and self.out_channels != self.in_channels:
            raise ShapeError("depth-wise convolution must keep the channel count")
        if self.stride not in (1, 2):
            raise ShapeError(f"stride must be 1 or 2, got {self.stride}")
        if self.depthwise and self.stride != 1:
            raise ShapeError("depth-wise convolution is stride 1 only")

    @property
    def depthwise(self) -> bool:
        return self.groups > 1

    @property
    def padding(self) -> int:
        return self.dilation * (self.kernel - 1) // 2

    @property
    def weight_shape(self) -> tuple[int, int, int, int]:
        return (self.out_channels, self.in_channels // self.groups, self.kernel, self.kernel)

    @property
    def fan_in(self) -> int:
        return (self.in_channels // self.groups) * self.kernel * self.kernel

    def output_size(self, height: int, width: int) -> tuple[int, int]:
        span = self.dilation * (self.kernel - 1)
        return (
            (height + 2 * self.padding - span - 1) // self.stride + 1,
            (width + 2 * self.padding - span - 1) // self.stride + 1,
        )


def _tap_slices(spec: Conv2dSpec, out_h: int, out_w: int):
    k, d, s = spec.kernel, spec.dilation, spec.stride
    for i in range(k):
        for j in range(k):
            rows = slice(i * d, i * d + s * (out_h - 1) + 1, s)
            cols = slice(j * d, j * d + s * (out_w - 1) + 1, s)
            yield i, j, (slice(None), rows, cols)


def conv2d(x: Tensor, spec: Conv2dSpec, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """Zero-padded convolution keeping the spatial size (halving it at stride 2)."""
    if x.ndim != 3 or x.shape[0] != spec.in_channels:
        raise ShapeError(f"conv2d: expected {spec.in_channels} input channels, got shape {x.shape}")
    if weight.shape != spec.weight_shape:
        raise ShapeError(f"conv2d: weight shape {weight.shape} != {spec.weight_shape}")

    channels, height, width = x.shape
    out_h, out_w = spec.output_size(height, width)
    pad = spec.padding
    xp = np.pad(x.data, ((0, 0), (pad, pad), (pad, pad)))
    w = weight.data
    taps = list(_tap_slices(spec, out_h, out_w))

    if spec.depthwise:
        out = np.zeros((channels, out_h, out_w), dtype=x.dtype)
        for i, j, region in taps:
            out += w[:, 0, i, j, None, None] * xp[region]
        cols = None
    else:
        k = spec.kernel
        cols = np.stack([xp[region] for _, _, region in taps], axis=1)
        cols = cols.reshape(channels * k * k, out_h * out_w)
        out = (w.reshape(spec.out_channels, -1) @ cols).reshape(spec.out_channels, out_h, out_w)
    if bias is not None:
        out = out + bias.data[:, None, None]

    def backward(g):
        gxp = np.zeros_like(xp)
        if spec.depthwise:
            gw = np.zeros_like(w)
            for i, j, region in taps:
                gw[:, 0, i, j] = (g * xp[region]).sum(axis=(1, 2))
                gxp[region] += w[:, 0, i, j, None, None] * g
        else:
            g2 = g.reshape(spec.out_channels, -1)
            gw = (g2 @ cols.T).reshape(w.shape)
            gcols = (w.reshape(spec.out_channels, -1).T @ g2).reshape(
                channels, spec.kernel * spec.kernel, out_h, out_w
            )
            for t, (_, _, region) in enumerate(taps):
                gxp[region] += gcols[:, t]
        gx = gxp[:, pad : pad + height, pad : pad + width]
        gb = g.sum(axis=(1, 2)) if bias is not None else None
        return gx, gw, gb

    parents = (x, weight, bias) if bias is not None else (x, weight)
    return make_op(out, parents, lambda g: backward(g)[: len(parents)])


def _region_bounds(extent: int, grid: int) -> list[tuple[int, int]]:
    return [
        (math.floor(i * extent / grid), math.ceil((i + 1) * extent / grid)) for i in range(grid)
    ]


def pool2d(x: Tensor, kind: str, output_grid: int) -> Tensor:
    """Adaptive average or max pooling to a ``g×g`` grid (g=1 is global pooling)."""
    if kind not in ("avg", "max"):
        raise ValueError(f"unknown pooling kind {kind!r}")
    channels, height, width = x.shape
    grid = output_grid
    if grid < 1 or grid > min(height, width):
        raise ShapeError(f"pool2d: grid {grid} larger than spatial extent {height}x{width}")

    rows = _region_bounds(height, grid)
    cols = _region_bounds(width, grid)
    out = np.empty((channels, grid, grid), dtype=x.dtype)
    winners: dict[tuple[int, int], np.ndarray] = {}
    for a, (r0, r1) in enumerate(rows):
        for b, (c0, c1) in enumerate(cols):
            region = x.data[:, r0:r1, c0:c1].reshape(channels, -1)
            if kind == "avg":
                out[:, a, b] = region.mean(axis=1)
            else:
                idx = region.argmax(axis=1)
                winners[a, b] = idx
                out[:, a, b] = region[np.arange(channels), idx]

    def backward(g):
        gx = np.zeros_like(x.data)
        for a, (r0, r1) in enumerate(rows):
            for b, (c0, c1) in enumerate(cols):
                if kind == "avg":
                    area = (r1 - r0) * (c1 - c0)
                    gx[:, r0:r1, c0:c1] += (g[:, a, b] / area)[:, None, None]
                else:
                    idx = winners[a, b]
                    span = c1 - c0
                    gx[np.arange(channels), r0 + idx // span, c0 + idx % span] += g[:, a, b]
        return (gx,)

    return make_op(out, (x,), backward)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize over channels at every spatial position, then apply gain and bias."""
    if x.ndim != 3 or gain.shape != (x.shape[0],) or bias.shape != (x.shape[0],):
        raise ShapeError(f"layer_norm: input {x.shape} with gain {gain.shape}, bias {bias.shape}")
    data = x.data
    mu = data.mean(axis=0, keepdims=True)
    centered = data - mu
    rstd = 1.0 / np.sqrt((centered * centered).mean(axis=0, keepdims=True) + eps)
    xhat = centered * rstd
    gd, bd = gain.data[:, None, None], bias.data[:, None, None]
    out = xhat * gd + bd

    def backward(g):
        dxhat = g * gd
        gx = rstd * (
            dxhat
            - dxhat.mean(axis=0, keepdims=True)
            - xhat * (dxhat * xhat).mean(axis=0, keepdims=True)
        )
        return gx, (g * xhat).sum(axis=(1, 2)), g.sum(axis=(1, 2))

    return make_op(out, (x, gain, bias), backward)


def pixel_shuffle(x: Tensor) -> Tensor:
    """``4C×H×W`` to ``C×2H×2W``; channel ``4c + 2i + j`` lands at offset ``(i, j)``."""
    channels, height, width = x.shape
    if channels % 4:
        raise ShapeError(f"pixel_shuffle: channels {channels} not divisible by 4")
    out = reshape(x, (channels // 4, 2, 2, height, width))
    out = transpose(out, (0, 3, 1, 4, 2))
    return reshape(out, (channels // 4, 2 * height, 2 * width))


def pixel_unshuffle(x: Tensor) -> Tensor:
    """Inverse of :func:`pixel_shuffle`."""
    channels, height, width = x.shape
    if height % 2 or width % 2:
        raise ShapeError(f"pixel_unshuffle: spatial size {height}x{width} must be even")
    out = reshape(x, (channels, height // 2, 2, width // 2, 2))
    out = transpose(out, (0, 2, 4, 1, 3))
    return reshape(out, (channels * 4, height // 2, width // 2))


def _interp_matrix(n_in: int, n_out: int, dtype: np.dtype) -> np.ndarray:
    src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    src = np.clip(src, 0.0, None)
    lo = np.minimum(np.floor(src).astype(int), n_in - 1)
    hi = np.minimum(lo + 1, n_in - 1)
    frac = src - lo
    matrix = np.zeros((n_out, n_in), dtype=np.float64)
    rows = np.arange(n_out)
    np.add.at(matrix, (rows, lo), 1.0 - frac)
    np.add.at(matrix, (rows, hi), frac)
    return matrix.astype(dtype)


def resize_bilinear(x: Tensor, target: tuple[int, int]) -> Tensor:
    """Bilinear resize with the align-corners-false convention."""
    _, height, width = x.shape
    out_h, out_w = target
    if out_h < 1 or out_w < 1:
        raise ShapeError(f"resize_bilinear: invalid target {target}")
    if (out_h, out_w) == (height, width):
        return x
    ry = _interp_matrix(height, out_h, x.dtype)
    rx = _interp_matrix(width, out_w, x.dtype)
    out = ry @ x.data @ rx.T
    return make_op(out, (x,), lambda g: (ry.T @ g @ rx,))


def channel_split(x: Tensor, parts: int = 3) -> list[Tensor]:
    """Split into ``parts`` contiguous channel ranges."""
    channels = x.shape[0]
    if channels % parts:
        raise ShapeError(f"channel_split: {channels} channels not divisible by {parts}")
    step = channels // parts
    return [take(x, slice(i * step, (i + 1) * step)) for i in range(parts)]


def channel_concat(parts: Sequence[Tensor]) -> Tensor:
    return concat(parts, axis=0)


class Conv2d:
    """Convolution with its own weight and bias parameters."""

    def __init__(self, scope: Scope, spec: Conv2dSpec, bias: bool = True):
        self.spec = spec
        self.weight = scope.create("weight", spec.weight_shape, fan_in=spec.fan_in)
        self.bias = scope.create("bias", (spec.out_channels,), init="zeros") if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        return conv2d(x, self.spec, self.weight, self.bias)


def pointwise(scope: Scope, in_channels: int, out_channels: int) -> Conv2d:
    return Conv2d(scope, Conv2dSpec(in_channels, out_channels, kernel=1))


def depthwise(scope: Scope, channels: int, kernel: int, dilation: int = 1) -> Conv2d:
    return Conv2d(scope, Conv2dSpec(channels, channels, kernel, dilation, groups=channels))


class LayerNorm:
    def __init__(self, scope: Scope, channels: int):
        self.gain = scope.create("gain", (channels,), init="ones")
        self.bias = scope.create("bias", (channels,), init="zeros")

    def __call__(self, x: Tensor) -> Tensor:
        return layer_norm(x, self.gain, self.bias)


class MLP:
    """Affine layers ``w0, b0, w1, b1, ...`` over the innermost extent."""

    def __init__(self, scope: Scope, widths: Sequence[int], activation: str = "gelu"):
        if len(widths) < 2:
            raise ShapeError(f"MLP needs at least input and output widths, got {widths}")
        self.activation = activation
        self.layers: list[Parameter] = []
        for index, (fan_in, fan_out) in enumerate(zip(widths[:-1], widths[1:])):
            self.layers.append(scope.create(f"w{index}", (fan_in, fan_out), fan_in=fan_in))
            self.layers.append(scope.create(f"b{index}", (fan_out,), init="zeros"))

    @property
    def output_bias(self) -> Parameter:
        return self.layers[-1]

    @property
    def output_weight(self) -> Parameter:
        return self.layers[-2]

    def __call__(self, x: Tensor) -> Tensor:
        return matmul_mlp(x, self.layers, self.activation)

    def pointwise(self, x: Tensor) -> Tensor:
        """Apply at every spatial position of a ``C×H×W`` map."""
        out = matmul_mlp(transpose(x, (1, 2, 0)), self.layers, self.activation)
        return transpose(out, (2, 0, 1))
