"""The assembled depth network.

rgb -> four-stage pyramid encoder (GLKAM between stages) -> pyramid pooling
-> bin predictor on the pooled context -> decoder with same-scale skips and
pixel-shuffle upsampling -> per-pixel bin probabilities -> expected depth.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from depthkit.config import ModelConfig
from depthkit.container import decode_text, encode_text, read_container, write_container
from depthkit.exceptions import BinSpecError, ContainerError, EmptyMaskError, ShapeError
from depthkit.gbpm import BinSpec, GbpmState, gbpm_forward, uniform_bin_spec
from depthkit.glkam import GlkamState
from depthkit.helpers import log
from depthkit.layers import (
    Conv2d,
    Conv2dSpec,
    pixel_shuffle,
    pointwise,
    pool2d,
    resize_bilinear,
)
from depthkit.objective import SilogParams, silog_loss
from depthkit.params import ParameterStore, Scope
from depthkit.tensor import (
    Tensor,
    activation,
    concat,
    flip,
    precision,
    reshape,
    softmax,
    tsum,
)

INPUT_MULTIPLE = 32
PROBABILITY_TOLERANCE = 1e-4
CONFIG_ENTRY = "meta.model_config"


@dataclass
class FeaturePyramid:
    """Encoder features at 1/4, 1/8, 1/16 and 1/32 scale (C, 2C, 4C, 8C channels)."""

    e1: Tensor
    e2: Tensor
    e3: Tensor
    e4: Tensor

    @property
    def levels(self) -> list[Tensor]:
        return [self.e1, self.e2, self.e3, self.e4]

    def check(self) -> None:
        for finer, coarser in zip(self.levels, self.levels[1:]):
            c, h, w = finer.shape
            if coarser.shape != (2 * c, h // 2, w // 2):
                raise ShapeError(f"pyramid: {finer.shape} cannot precede {coarser.shape}")


@dataclass
class Prediction:
    depth: Tensor
    probabilities: Tensor
    bins: BinSpec


def conv3x3(scope: Scope, in_channels: int, out_channels: int, stride: int = 1) -> Conv2d:
    return Conv2d(scope, Conv2dSpec(in_channels, out_channels, kernel=3, stride=stride))


class ResidualBlock:
    """``x + conv(act(conv(x)))`` with 3×3 dense convolutions."""

    def __init__(self, scope: Scope, channels: int, hidden_activation: str):
        self.conv_a = conv3x3(scope.child("conv_a"), channels, channels)
        self.conv_b = conv3x3(scope.child("conv_b"), channels, channels)
        self.hidden_activation = hidden_activation

    def __call__(self, x: Tensor) -> Tensor:
        return x + self.conv_b(activation(self.conv_a(x), self.hidden_activation))


class EncoderStage:
    def __init__(
        self,
        scope: Scope,
        in_channels: int,
        out_channels: int,
        merges: int,
        hidden_activation: str,
        blocks: int = 2,
    ):
        widths = [in_channels] + [out_channels] * merges
        self.merges = [
            conv3x3(scope.child(f"merge{i}"), widths[i], widths[i + 1], stride=2)
            for i in range(merges)
        ]
        self.blocks = [
            ResidualBlock(scope.child(f"block{i}"), out_channels, hidden_activation)
            for i in range(blocks)
        ]
        self.hidden_activation = hidden_activation

    def __call__(self, x: Tensor) -> Tensor:
        for merge in self.merges:
            x = activation(merge(x), self.hidden_activation)
        for block in self.blocks:
            x = block(x)
        return x


class ToyPyramidEncoder:
    """Strided-conv stand-in for a hierarchical transformer backbone.

    Stage 1 downsamples by 4 with two stride-2 convs; stages 2-4 halve the
    resolution and double the channels once each.
    """

    def __init__(self, store: ParameterStore, config: ModelConfig):
        c, act = config.base_channels, config.hidden_activation
        scope = store.scope("encoder")
        self.stages = [
            EncoderStage(scope.child("stage1"), 3, c, merges=2, hidden_activation=act),
            EncoderStage(scope.child("stage2"), c, 2 * c, merges=1, hidden_activation=act),
            EncoderStage(scope.child("stage3"), 2 * c, 4 * c, merges=1, hidden_activation=act),
            EncoderStage(scope.child("stage4"), 4 * c, 8 * c, merges=1, hidden_activation=act),
        ]
        self.glkams: list[GlkamState | None] = [None, None, None]
        if config.use_glkam:
            self.glkams = [
                GlkamState(store.scope(f"glkam.{i + 1}"), c * 2**i, act) for i in range(3)
            ]


def encode(rgb: Tensor, encoder: ToyPyramidEncoder) -> FeaturePyramid:
    """Run the four stages, applying GLKAM to the outputs of stages 1-3."""
    if rgb.ndim != 3 or rgb.shape[0] != 3:
        raise ShapeError(f"encode: expected a 3xHxW image, got {rgb.shape}")
    _, height, width = rgb.shape
    if height % INPUT_MULTIPLE or width % INPUT_MULTIPLE:
        raise ShapeError(f"encode: input size {height}x{width} must be divisible by 32")

    features: list[Tensor] = []
    x = rgb
    for index, stage in enumerate(encoder.stages):
        x = stage(x)
        if index < 3 and encoder.glkams[index] is not None:
            x = encoder.glkams[index](x)
        features.append(x)
    pyramid = FeaturePyramid(*features)
    pyramid.check()
    return pyramid


class PyramidPooling:
    def __init__(self, scope: Scope, channels: int, n_grids: int):
        branch = channels // 4
        self.channels = channels
        self.branches = [
            pointwise(scope.child(f"branch{i}"), channels, branch) for i in range(n_grids)
        ]
        self.fuse = pointwise(scope.child("fuse"), channels + n_grids * branch, channels)


def clamp_grids(grids: tuple[int, ...], height: int, width: int) -> tuple[int, ...]:
    """Cap each pooling grid at the feature map's smaller side."""
    return tuple(min(grid, height, width) for grid in grids)


def ppm_forward(e4: Tensor, grids: tuple[int, ...], ppm: PyramidPooling) -> Tensor:
    """Pool to each grid, project 8C -> 2C, resize back, concat with the input and fuse."""
    if e4.shape[0] != ppm.channels:
        raise ShapeError(f"ppm: expected {ppm.channels} channels, got {e4.shape}")
    if len(grids) != len(ppm.branches):
        raise ShapeError(f"ppm: {len(grids)} grids for {len(ppm.branches)} branches")
    _, height, width = e4.shape
    if max(grids) > min(height, width):
        raise ShapeError(f"ppm: grid {max(grids)} larger than feature map {height}x{width}")
    pooled = [
        resize_bilinear(branch(pool2d(e4, "avg", grid)), (height, width))
        for grid, branch in zip(grids, ppm.branches)
    ]
    return ppm.fuse(concat([e4, *pooled], axis=0))


class DecoderStage:
    """Concat with the skip, 1×1 conv to ``4 * out``, pixel shuffle, 3×3 conv."""

    def __init__(
        self,
        scope: Scope,
        in_channels: int,
        skip_channels: int,
        out_channels: int,
        hidden_activation: str,
    ):
        self.reduce = pointwise(
            scope.child("reduce"), in_channels + skip_channels, 4 * out_channels
        )
        self.refine = conv3x3(scope.child("refine"), out_channels, out_channels)
        self.hidden_activation = hidden_activation

    def __call__(self, d: Tensor, skip: Tensor) -> Tensor:
        if d.shape[1:] != skip.shape[1:]:
            raise ShapeError(f"decoder: feature {d.shape} and skip {skip.shape} differ in scale")
        x = pixel_shuffle(self.reduce(concat([d, skip], axis=0)))
        return activation(self.refine(x), self.hidden_activation)


class Decoder:
    def __init__(self, store: ParameterStore, config: ModelConfig):
        c, act = config.base_channels, config.hidden_activation
        scope = store.scope("decoder")
        self.stages = [
            DecoderStage(scope.child("stage1"), 8 * c, 8 * c, 4 * c, act),
            DecoderStage(scope.child("stage2"), 4 * c, 4 * c, 2 * c, act),
            DecoderStage(scope.child("stage3"), 2 * c, 2 * c, c, act),
        ]
        self.skip_fuse = pointwise(scope.child("skip_fuse"), 2 * c, c)
        self.hidden_activation = act


def decode(pyramid: FeaturePyramid, ppm_out: Tensor, decoder: Decoder) -> Tensor:
    """Upsample from 1/32 to 1/4, pairing each stage with the same-scale skip.

    The 1/4-scale encoder feature joins through a final 1×1 fuse.
    """
    d = ppm_out
    for stage, skip in zip(decoder.stages, (pyramid.e4, pyramid.e3, pyramid.e2)):
        d = stage(d, skip)
    if d.shape != pyramid.e1.shape:
        raise ShapeError(f"decoder: output {d.shape} does not match e1 {pyramid.e1.shape}")
    fused = decoder.skip_fuse(concat([d, pyramid.e1], axis=0))
    return activation(fused, decoder.hidden_activation)


def depth_probabilities(d4: Tensor, head: Conv2d) -> Tensor:
    """1×1 conv to ``n_bins`` logits, softmax over the bin axis."""
    return softmax(head(d4), axis=0)


def predict_depth(p: Tensor, bins: BinSpec, full_size: tuple[int, int]) -> Tensor:
    """Expected depth ``sum_k c_k p_k`` per pixel, resized to ``full_size``."""
    if p.ndim != 3 or p.shape[0] != bins.n_bins:
        raise ShapeError(f"predict_depth: {p.shape} does not hold {bins.n_bins} bins")
    drift = np.abs(p.data.sum(axis=0, dtype=np.float64) - 1.0).max()
    if drift > PROBABILITY_TOLERANCE:
        raise BinSpecError(f"probabilities do not sum to 1 per pixel (max drift {drift:.2e})")
    centers = reshape(bins.centers, (bins.n_bins, 1, 1))
    expected = tsum(centers * p, axis=0, keepdims=True)
    return resize_bilinear(expected, full_size)


class DepthNet:
    """All parameters plus the forward pass.

    Example:
        >>> model = DepthNet(ModelConfig(base_channels=8, n_bins=16))
        >>> depth = model.predict(generate_scene(0).rgb)
    """

    def __init__(self, config: ModelConfig | None = None):
        self.config = config or ModelConfig()
        self.config.validate()
        c = self.config.base_channels
        self.store = ParameterStore(self.config.seed)
        self.encoder = ToyPyramidEncoder(self.store, self.config)
        self.ppm = PyramidPooling(self.store.scope("ppm"), 8 * c, len(self.config.ppm_grids))
        self.gbpm: GbpmState | None = None
        if self.config.use_gbpm:
            self.gbpm = GbpmState(
                self.store.scope("gbpm"),
                8 * c,
                self.config.n_bins,
                hidden_activation=self.config.hidden_activation,
            )
        self.decoder = Decoder(self.store, self.config)
        self.head = pointwise(self.store.scope("head"), c, self.config.n_bins)
        self._grids: dict[tuple[int, int], tuple[int, ...]] = {}

    @property
    def dtype(self) -> np.dtype:
        return next(iter(self.store)).dtype

    def parameters(self):
        return list(self.store)

    def _input(self, rgb) -> Tensor:
        if isinstance(rgb, Tensor):
            return rgb if rgb.dtype == self.dtype else Tensor(rgb.data.astype(self.dtype))
        return Tensor(np.asarray(rgb, dtype=self.dtype))

    def pooling_grids(self, height: int, width: int) -> tuple[int, ...]:
        """PPM grids for a deepest map of this size, warning once when any is capped."""
        key = (height, width)
        if key not in self._grids:
            grids = clamp_grids(self.config.ppm_grids, height, width)
            if grids != tuple(self.config.ppm_grids):
                log(
                    f"ppm grids {tuple(self.config.ppm_grids)} capped to {grids} "
                    f"for a {height}x{width} feature map",
                    level="warning",
                )
            self._grids[key] = grids
        return self._grids[key]

    def _bins(self, context: Tensor) -> BinSpec:
        cfg = self.config
        if self.gbpm is None:
            with precision(64 if self.dtype == np.float64 else 32):
                return uniform_bin_spec(cfg.n_bins, cfg.d_min, cfg.d_max)
        return gbpm_forward(context, self.gbpm, cfg.d_min, cfg.d_max, cfg.width_norm, cfg.width_eps)

    def forward(self, rgb) -> Prediction:
        rgb = self._input(rgb)
        pyramid = encode(rgb, self.encoder)
        _, h, w = pyramid.e4.shape
        context = ppm_forward(pyramid.e4, self.pooling_grids(h, w), self.ppm)
        bins = self._bins(context)
        probabilities = depth_probabilities(decode(pyramid, context, self.decoder), self.head)
        depth = predict_depth(probabilities, bins, rgb.shape[1:])
        return Prediction(depth=depth, probabilities=probabilities, bins=bins)

    def predict(self, rgb) -> Tensor:
        return self.forward(rgb).depth

    def bins(self, rgb) -> BinSpec:
        return self.forward(rgb).bins


def infer_flip_averaged(rgb, model: DepthNet) -> Tensor:
    """Mean of the prediction and the un-mirrored prediction of the mirrored image."""
    rgb = model._input(rgb)
    direct = model.predict(rgb)
    mirrored = flip(model.predict(flip(rgb, axis=-1)), axis=-1)
    return (direct + mirrored) * 0.5


def forward_loss(sample, model: DepthNet, params: SilogParams | None = None) -> Tensor:
    """SILog loss of the full pipeline on one sample, over its valid pixels."""
    if not np.any(sample.mask):
        raise EmptyMaskError(f"sample {sample.scene_seed} has no valid pixels")
    depth = model.predict(sample.rgb)
    target = np.asarray(sample.depth, dtype=depth.dtype)
    return silog_loss(depth, target, sample.mask, params)


def save_checkpoint(path: str | Path, model: DepthNet) -> Path:
    """Parameters and the model config record in one container."""
    entries = list(model.store.state_dict().items())
    entries.append((CONFIG_ENTRY, encode_text(json.dumps(model.config.to_dict(), sort_keys=True))))
    return write_container(path, entries)


def load_checkpoint(path: str | Path) -> DepthNet:
    """Rebuild the model from its stored config and load the weights."""
    entries = read_container(path)
    if CONFIG_ENTRY not in entries:
        raise ContainerError(f"{path}: no {CONFIG_ENTRY} entry, not a checkpoint")
    config = ModelConfig.from_dict(json.loads(decode_text(entries.pop(CONFIG_ENTRY))))
    bits = 64 if any(array.dtype == np.float64 for array in entries.values()) else 32
    with precision(bits):
        model = DepthNet(config)
    model.store.load_state_dict(entries)
    return model
