"""Global Bin Prediction Module and bin arithmetic.

Average- and max-pooled descriptors of the context feature are fused by a
learned gate, an MLP maps the fused descriptor to normalized bin widths, and
the widths place ``n_bins`` centers inside ``[d_min, d_max]``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from depthkit.exceptions import BinSpecError, ShapeError
from depthkit.layers import MLP, pointwise, pool2d
from depthkit.params import Scope
from depthkit.tensor import (
    Tensor,
    as_tensor,
    concat,
    cumsum,
    reshape,
    sigmoid,
    softmax,
    softplus,
    tensor,
    tsum,
)

WIDTH_SUM_TOLERANCE = 1e-5


@dataclass(frozen=True)
class BinSpec:
    """Normalized bin widths and the centers derived from them."""

    widths: Tensor
    centers: Tensor
    d_min: float
    d_max: float

    @property
    def n_bins(self) -> int:
        return self.widths.shape[0]

    def check(self) -> None:
        """Raise :class:`BinSpecError` unless every invariant holds."""
        widths, centers = self.widths.data, self.centers.data
        if abs(float(widths.sum()) - 1.0) > WIDTH_SUM_TOLERANCE or np.any(widths <= 0):
            raise BinSpecError(f"widths must be positive and sum to 1, got sum {widths.sum()}")
        if np.any(np.diff(centers) <= 0):
            raise BinSpecError("bin centers are not strictly increasing")
        if not (self.d_min < centers[0] and centers[-1] < self.d_max):
            raise BinSpecError(
                f"centers [{centers[0]}, {centers[-1]}] escape ({self.d_min}, {self.d_max})"
            )

    def describe(self) -> dict[str, float]:
        widths, centers = self.widths.data, self.centers.data
        return {
            "n_bins": self.n_bins,
            "d_min": self.d_min,
            "d_max": self.d_max,
            "width_min": float(widths.min()),
            "width_max": float(widths.max()),
            "center_first": float(centers[0]),
            "center_last": float(centers[-1]),
        }


class GbpmState:
    """Parameters of the bin predictor.

    Both pooling branches map ``C`` channels to a descriptor of width ``C_g``
    (``C_g = C`` unless given); the gate MLP has one hidden layer of width
    ``C_g``.
    """

    def __init__(
        self,
        scope: Scope,
        channels: int,
        n_bins: int,
        descriptor_width: int | None = None,
        hidden_activation: str = "gelu",
    ):
        width = descriptor_width or channels
        self.channels = channels
        self.descriptor_width = width
        self.n_bins = n_bins
        self.pw_a = pointwise(scope.child("pw_a"), channels, width)
        self.pw_b = pointwise(scope.child("pw_b"), channels, width)
        self.gate_mlp = MLP(scope.child("gate_mlp"), (2 * width, width, width), hidden_activation)
        self.width_mlp = MLP(scope.child("width_mlp"), (width, width, n_bins), hidden_activation)


def global_descriptors(f: Tensor, state: GbpmState) -> tuple[Tensor, Tensor]:
    """``F_a = PW(GAP(F))`` and ``F_b = PW(GMP(F))`` as vectors."""
    if f.ndim != 3 or f.shape[0] != state.channels:
        raise ShapeError(f"gbpm: expected {state.channels} channels, got shape {f.shape}")
    width = state.descriptor_width
    f_a = reshape(state.pw_a(pool2d(f, "avg", 1)), (width,))
    f_b = reshape(state.pw_b(pool2d(f, "max", 1)), (width,))
    return f_a, f_b


def gated_fuse(f_a: Tensor, f_b: Tensor, state: GbpmState) -> Tensor:
    """``z = sigmoid(MLP([F_a, F_b]))``; ``F_out = F_a * z + F_b * (1 - z)``."""
    if f_a.shape != f_b.shape:
        raise ShapeError(f"gated_fuse: descriptor shapes {f_a.shape} and {f_b.shape} differ")
    z = sigmoid(state.gate_mlp(concat([f_a, f_b], axis=0)))
    return f_a * z + f_b * (1.0 - z)


def normalize_bin_widths(logits: Tensor, kind: str = "softplus", eps: float = 1e-3) -> Tensor:
    """Map raw logits to positive widths summing to one.

    ``softplus``: ``(softplus(l) + eps) / sum(softplus(l) + eps)``.
    ``softmax``: ``(softmax(l) + eps) / (1 + n * eps)``.
    """
    if kind == "softplus":
        raw = softplus(logits) + eps
    elif kind == "softmax":
        probs = softmax(logits, axis=0)
        if not eps:
            return probs
        raw = probs + eps
    else:
        raise ValueError(f"unknown width normalization {kind!r}")
    return raw / tsum(raw)


def predict_bin_widths(
    f_out: Tensor, state: GbpmState, kind: str = "softplus", eps: float = 1e-3
) -> Tensor:
    return normalize_bin_widths(state.width_mlp(f_out), kind, eps)


def bin_centers(widths, d_min: float, d_max: float) -> Tensor:
    """``c_i = d_min + (d_max - d_min) * (b_i / 2 + sum_{j<i} b_j)``."""
    widths = as_tensor(widths)
    if not d_min < d_max:
        raise BinSpecError(f"depth range must satisfy d_min < d_max, got ({d_min}, {d_max})")
    if widths.ndim != 1 or widths.size == 0:
        raise BinSpecError(f"widths must be a non-empty vector, got shape {widths.shape}")
    total = float(widths.data.sum(dtype=np.float64))
    if abs(total - 1.0) > WIDTH_SUM_TOLERANCE:
        raise BinSpecError(f"widths must sum to 1 (±{WIDTH_SUM_TOLERANCE}), got {total}")
    if np.any(widths.data <= 0):
        raise BinSpecError("widths must be positive")
    span = d_max - d_min
    return d_min + span * (cumsum(widths, axis=0) - 0.5 * widths)


def make_bin_spec(widths, d_min: float, d_max: float) -> BinSpec:
    widths = as_tensor(widths)
    return BinSpec(widths, bin_centers(widths, d_min, d_max), float(d_min), float(d_max))


def uniform_bin_spec(n_bins: int, d_min: float, d_max: float) -> BinSpec:
    """Fixed equal-width bins, the baseline when the bin predictor is off."""
    return make_bin_spec(tensor(np.full(n_bins, 1.0 / n_bins)), d_min, d_max)


def gbpm_forward(
    f: Tensor,
    state: GbpmState,
    d_min: float,
    d_max: float,
    kind: str = "softplus",
    eps: float = 1e-3,
) -> BinSpec:
    f_a, f_b = global_descriptors(f, state)
    widths = predict_bin_widths(gated_fuse(f_a, f_b, state), state, kind, eps)
    return make_bin_spec(widths, d_min, d_max)
