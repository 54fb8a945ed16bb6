"""Gated Large Kernel Attention Module.

Three large-kernel-attention branches run over equal channel groups, each
modulated by its own depth-wise spatial gate. The branch result passes
through layer norm and a point-wise FFN, and a sigmoid gate computed from
``[F_m, X]`` blends it back with the input:

    F_out = z * X + (1 - z) * F_m
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from depthkit.exceptions import ShapeError
from depthkit.layers import MLP, LayerNorm, channel_concat, channel_split, depthwise, pointwise
from depthkit.params import Scope
from depthkit.tensor import Tensor, activation, concat, sigmoid


@dataclass(frozen=True)
class LkaGroupConfig:
    """One LKA group: ``a×a`` depth-wise, ``b×b`` dilated depth-wise, then 1×1.

    ``nominal`` is the (K, d) label the group is usually quoted by; the actual
    receptive field follows from the cascade.
    """

    nominal: tuple[int, int]
    a: int
    b: int
    dilation: int

    @property
    def gate_kernel(self) -> int:
        return self.a

    @property
    def receptive_extent(self) -> int:
        return (self.a - 1) + (self.b - 1) * self.dilation + 1


LKA_GROUPS: tuple[LkaGroupConfig, ...] = (
    LkaGroupConfig(nominal=(7, 2), a=3, b=5, dilation=2),
    LkaGroupConfig(nominal=(21, 3), a=5, b=7, dilation=3),
    LkaGroupConfig(nominal=(35, 4), a=7, b=9, dilation=4),
)


class LkaBranch:
    """Parameters of one group: the a-b-1 cascade and its spatial gate."""

    def __init__(self, scope: Scope, channels: int, group: LkaGroupConfig):
        self.group = group
        self.channels = channels
        self.local = depthwise(scope.child("local"), channels, group.a)
        self.dilated = depthwise(scope.child("dilated"), channels, group.b, group.dilation)
        self.point = pointwise(scope.child("point"), channels, channels)
        self.gate = depthwise(scope.child("gate"), channels, group.gate_kernel)

    def cascade(self, x: Tensor) -> Tensor:
        return self.point(self.dilated(self.local(x)))


def lka_branch(x_i: Tensor, group: LkaGroupConfig, params: LkaBranch) -> Tensor:
    """``G_i(x_i) * LKA_i(x_i)`` for one channel group."""
    if x_i.shape[0] != params.channels:
        raise ShapeError(
            f"lka_branch: group {group.nominal} expects {params.channels} channels, got {x_i.shape}"
        )
    return params.gate(x_i) * params.cascade(x_i)


class GlkamState:
    """All parameters of one module instance.

    When ``channels`` is not divisible by three the entry point-wise conv
    widens to ``3 * ceil(C / 3)`` and the exit conv narrows back to ``C``.
    """

    def __init__(self, scope: Scope, channels: int, hidden_activation: str = "gelu"):
        self.channels = channels
        self.split_channels = 3 * math.ceil(channels / 3)
        self.hidden_activation = hidden_activation
        part = self.split_channels // 3

        self.pre_norm = LayerNorm(scope.child("pre_norm"), channels)
        self.entry_pw = pointwise(scope.child("entry_pw"), channels, self.split_channels)
        self.branches = [
            LkaBranch(scope.child(f"lka{index}"), part, group)
            for index, group in enumerate(LKA_GROUPS)
        ]
        self.exit_pw = pointwise(scope.child("exit_pw"), self.split_channels, channels)
        self.post_norm = LayerNorm(scope.child("post_norm"), channels)
        self.ffn_expand = pointwise(scope.child("ffn_expand"), channels, 4 * channels)
        self.ffn_project = pointwise(scope.child("ffn_project"), 4 * channels, channels)
        self.fusion_mlp = MLP(
            scope.child("fusion_mlp"), (2 * channels, channels, channels), hidden_activation
        )

    def __call__(self, x: Tensor) -> Tensor:
        return glkam_forward(x, self)


def mlka_split(x: Tensor, state: GlkamState) -> list[Tensor]:
    """Entry point-wise conv followed by the three-way channel split."""
    if x.shape[0] != state.channels:
        raise ShapeError(f"mlka: expected {state.channels} channels, got {x.shape}")
    return channel_split(state.entry_pw(x), 3)


def mlka_merge(parts: list[Tensor], state: GlkamState) -> Tensor:
    """Per-group branches, concat, and the exit point-wise conv."""
    outputs = [
        lka_branch(part, branch.group, branch) for part, branch in zip(parts, state.branches)
    ]
    return state.exit_pw(channel_concat(outputs))


def mlka(x: Tensor, state: GlkamState) -> Tensor:
    return mlka_merge(mlka_split(x, state), state)


def ffn(x: Tensor, state: GlkamState) -> Tensor:
    return state.ffn_project(activation(state.ffn_expand(x), state.hidden_activation))


def mlka_branch_feature(x: Tensor, state: GlkamState) -> Tensor:
    """``F_m = FFN(LN(MLKA(LN(X))))``."""
    return ffn(state.post_norm(mlka(state.pre_norm(x), state)), state)


def glkam_forward(x: Tensor, state: GlkamState) -> Tensor:
    if x.ndim != 3 or x.shape[0] != state.channels:
        raise ShapeError(f"glkam: expected {state.channels} channels, got shape {x.shape}")
    f_m = mlka_branch_feature(x, state)
    fused = concat([f_m, x], axis=0)
    z = sigmoid(state.fusion_mlp.pointwise(fused))
    return z * x + (1.0 - z) * f_m
