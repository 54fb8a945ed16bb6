"""Verification probes run by ``depthkit probe``.

Each probe builds whatever tiny model it needs, returns a
:class:`ProbeReport` and raises :class:`ProbeFailure` naming the violated
property.
"""

from __future__ import annotations

from collections.abc import Callable
from dataclasses import dataclass, field, replace

import numpy as np

from depthkit.config import ModelConfig
from depthkit.data import generate_scene
from depthkit.exceptions import BinSpecError, ProbeFailure
from depthkit.gbpm import GbpmState, gbpm_forward
from depthkit.glkam import LKA_GROUPS, GlkamState, LkaBranch
from depthkit.gradcheck import GradCheckReport, check_gradients, random_projection
from depthkit.layers import (
    Conv2dSpec,
    conv2d,
    layer_norm,
    pixel_shuffle,
    pixel_unshuffle,
    pool2d,
    resize_bilinear,
)
from depthkit.model import (
    DecoderStage,
    DepthNet,
    PyramidPooling,
    forward_loss,
    ppm_forward,
)
from depthkit.objective import compute_metrics, silog_loss
from depthkit.params import ParameterStore, gradient_coverage
from depthkit.tensor import (
    Tensor,
    backward,
    concat,
    cumsum,
    exp,
    flip,
    gelu,
    log,
    masked_select,
    matmul_mlp,
    no_grad,
    precision,
    relu,
    sigmoid,
    softmax,
    softplus,
    sqrt,
    tensor,
)

GRADCHECK_TOLERANCE = 1e-4
ERF_EXPECTED = (11, 23, 39)

ABLATIONS: tuple[tuple[str, bool, bool], ...] = (
    ("baseline", False, False),
    ("+glkam", True, False),
    ("+gbpm", False, True),
    ("both", True, True),
)


@dataclass
class ProbeReport:
    name: str
    lines: list[str] = field(default_factory=list)
    values: dict[str, object] = field(default_factory=dict)

    def as_text(self) -> str:
        return "\n".join(self.lines) + "\n"


GradCase = tuple[Callable[[], Tensor], list[Tensor], int | None]


def _gradcheck_cases(seed: int) -> dict[str, Callable[[], GradCase]]:
    rng = np.random.default_rng(seed)

    def uniform(*shape: int, low: float = -2.0, high: float = 2.0) -> Tensor:
        return tensor(rng.uniform(low, high, size=shape), requires_grad=True)

    def projected(build: Callable[[], Tensor], shape: tuple[int, ...]) -> Callable[[], Tensor]:
        project = random_projection(shape, int(rng.integers(1 << 31)))
        return lambda: project(build())

    def elementwise() -> GradCase:
        a, b = uniform(3, 4, 4), uniform(3, 1, 1, low=0.5, high=2.0)
        return projected(lambda: (a + b) * a - a / b - b, a.shape), [a, b], None

    def activations() -> GradCase:
        x = uniform(16)
        return projected(lambda: sigmoid(x) * gelu(x) + relu(x), x.shape), [x], None

    def unary() -> GradCase:
        x = uniform(12, low=0.5, high=2.0)
        return (
            projected(lambda: log(x) + sqrt(x) + 0.1 * exp(x) + softplus(x), x.shape),
            [x],
            None,
        )

    def softmax_case() -> GradCase:
        x = uniform(4, 5)
        return projected(lambda: softmax(x, axis=0), x.shape), [x], None

    def mlp() -> GradCase:
        x, w0, b0, w1, b1 = uniform(5, 4), uniform(4, 6), uniform(6), uniform(6, 3), uniform(3)
        return (
            projected(lambda: matmul_mlp(x, [w0, b0, w1, b1], "gelu"), (5, 3)),
            [x, w0, b0, w1, b1],
            None,
        )

    def reshaping() -> GradCase:
        x = uniform(4, 3, 3)
        mask = rng.random((4, 3, 3)) < 0.5
        mask[0, 0, 0] = True

        def build() -> Tensor:
            joined = concat([flip(x, axis=-1), cumsum(x, axis=0)], axis=0)
            return concat([joined.reshape(-1), masked_select(x, mask), x[1:3].reshape(-1)])

        size = 2 * x.size + int(mask.sum()) + 2 * 9
        return projected(build, (size,)), [x], None

    def conv_dense() -> GradCase:
        spec = Conv2dSpec(3, 4, kernel=3, stride=2)
        x, w, b = uniform(3, 8, 8), uniform(*spec.weight_shape), uniform(4)
        return projected(lambda: conv2d(x, spec, w, b), (4, 4, 4)), [x, w, b], None

    def conv_depthwise() -> GradCase:
        spec = Conv2dSpec(3, 3, kernel=5, dilation=2, groups=3)
        x, w = uniform(3, 9, 9), uniform(*spec.weight_shape)
        return projected(lambda: conv2d(x, spec, w), (3, 9, 9)), [x, w], None

    def pooling() -> GradCase:
        x = uniform(2, 6, 6)
        return (
            projected(lambda: concat([pool2d(x, "avg", 3), pool2d(x, "max", 3)]), (4, 3, 3)),
            [x],
            None,
        )

    def norm() -> GradCase:
        x, gain, bias = uniform(5, 3, 3), uniform(5), uniform(5)
        return projected(lambda: layer_norm(x, gain, bias), x.shape), [x, gain, bias], None

    def resampling() -> GradCase:
        x = uniform(8, 4, 4)

        def build() -> Tensor:
            return concat(
                [pixel_unshuffle(pixel_shuffle(x)), resize_bilinear(x, (4, 4)) * 0.5], axis=0
            ).reshape(-1)

        y = uniform(2, 3, 3)
        outputs = projected(build, (16 * 16,))
        resized = projected(lambda: resize_bilinear(y, (7, 5)), (2, 7, 5))
        return (lambda: outputs() + resized()), [x, y], None

    def glkam() -> GradCase:
        state = GlkamState(ParameterStore(seed).scope("glkam"), 6)
        x = uniform(6, 8, 8)
        params = [state.fusion_mlp.layers[0], state.branches[2].dilated.weight]
        return projected(lambda: state(x), x.shape), [x, *params], 24

    def gbpm() -> GradCase:
        state = GbpmState(ParameterStore(seed).scope("gbpm"), 4, 8)
        f = uniform(4, 5, 5)
        params = [state.gate_mlp.layers[0], state.width_mlp.layers[2]]
        return projected(lambda: gbpm_forward(f, state, 0.5, 10.0).centers, (8,)), [f, *params], None

    def ppm() -> GradCase:
        module = PyramidPooling(ParameterStore(seed).scope("ppm"), 8, 3)
        e4 = uniform(8, 6, 6)
        return (
            projected(lambda: ppm_forward(e4, (1, 2, 3), module), e4.shape),
            [e4, module.branches[1].weight, module.fuse.weight],
            24,
        )

    def decoder_stage() -> GradCase:
        stage = DecoderStage(ParameterStore(seed).scope("decoder"), 8, 8, 4, "gelu")
        d, skip = uniform(8, 3, 3), uniform(8, 3, 3)
        return (
            projected(lambda: stage(d, skip), (4, 6, 6)),
            [d, skip, stage.reduce.weight, stage.refine.weight],
            24,
        )

    def silog() -> GradCase:
        pred = uniform(1, 4, 4, low=0.5, high=5.0)
        gt = rng.uniform(0.5, 5.0, size=(1, 4, 4))
        mask = rng.random((1, 4, 4)) < 0.8
        mask[0, 0, 0] = True
        return (lambda: silog_loss(pred, gt, mask)), [pred], None

    def full_model() -> GradCase:
        model = DepthNet(ModelConfig(base_channels=4, n_bins=8, seed=seed))
        rgb = uniform(3, 32, 32, low=0.0, high=1.0)
        gt = rng.uniform(1.0, 9.0, size=(1, 32, 32))
        mask = np.ones(gt.shape, dtype=bool)
        return (lambda: silog_loss(model.predict(rgb), gt, mask)), [rgb, *model.parameters()], 2

    return {
        "elementwise": elementwise,
        "activation": activations,
        "unary": unary,
        "softmax": softmax_case,
        "matmul_mlp": mlp,
        "reshaping": reshaping,
        "conv2d": conv_dense,
        "conv2d_depthwise": conv_depthwise,
        "pool2d": pooling,
        "layer_norm": norm,
        "resampling": resampling,
        "glkam": glkam,
        "gbpm": gbpm,
        "ppm": ppm,
        "decoder_stage": decoder_stage,
        "silog": silog,
        "model": full_model,
    }


def probe_gradcheck(
    seed: int = 0,
    h: float = 1e-5,
    tolerance: float = GRADCHECK_TOLERANCE,
    only: list[str] | None = None,
) -> ProbeReport:
    """Finite-difference check of every differentiable op and the assembled model, 64-bit."""
    report = ProbeReport("gradcheck")
    results: dict[str, GradCheckReport] = {}
    with precision(64):
        cases = _gradcheck_cases(seed)
        for name, build in cases.items():
            if only and name not in only:
                continue
            fn, wrt, max_entries = build()
            results[name] = check_gradients(fn, wrt, h=h, max_entries=max_entries, seed=seed)
            report.lines.append(f"{name}: max rel. err {results[name].max_rel_error:.3e}")

    worst = max(results.values(), key=lambda r: r.max_rel_error, default=GradCheckReport())
    report.values = {name: r.max_rel_error for name, r in results.items()}
    report.values["max_rel_error"] = worst.max_rel_error
    report.lines.append(f"max rel. err {worst.max_rel_error:.3e}")
    failing = [name for name, r in results.items() if not r.passed(tolerance)]
    if failing:
        raise ProbeFailure("gradcheck", f"relative error above {tolerance} in {', '.join(failing)}")
    return report


def impulse_extent(response: np.ndarray) -> int:
    """Side length of the bounding box of the nonzero support."""
    rows = np.flatnonzero(np.abs(response).sum(axis=tuple(range(response.ndim - 1))) > 0)
    return int(rows.max() - rows.min() + 1) if rows.size else 0


def _impulse(size: int) -> Tensor:
    data = np.zeros((1, size, size))
    data[0, size // 2, size // 2] = 1.0
    return Tensor(data)


def probe_erf(size: int = 65) -> ProbeReport:
    """Impulse-response extents of the three LKA cascades (gates excluded)."""
    report = ProbeReport("erf")
    measured: list[int] = []
    with precision(64), no_grad():
        store = ParameterStore(0)
        for index, group in enumerate(LKA_GROUPS):
            branch = LkaBranch(store.scope(f"group{index}"), 1, group)
            for conv in (branch.local, branch.dilated, branch.point):
                conv.weight.data[...] = 1.0
                conv.bias.data[...] = 0.0
            impulse = _impulse(size)
            extent = impulse_extent(branch.cascade(impulse).data)
            single = [
                impulse_extent(conv(impulse).data) for conv in (branch.local, branch.dilated)
            ]
            measured.append(extent)
            report.lines.append(
                f"group{index} {group.nominal}: local {single[0]}, dilated {single[1]}, "
                f"cascade {extent}"
            )
            report.values[f"group{index}"] = extent
            expected_single = [group.a, (group.b - 1) * group.dilation + 1]
            if single != expected_single:
                raise ProbeFailure(
                    "erf", f"group{index} filter extents {single}, expected {expected_single}"
                )
    report.lines.append(", ".join(f"group{i}: {e}" for i, e in enumerate(measured)))
    if tuple(measured) != ERF_EXPECTED:
        raise ProbeFailure("erf", f"cascade extents {measured}, expected {list(ERF_EXPECTED)}")
    return report


def probe_bins(
    config: ModelConfig,
    seed: int = 0,
    size: tuple[int, int] = (64, 64),
    zero_width_mlp: bool = False,
) -> ProbeReport:
    """Bin layout the model predicts for one generated scene."""
    report = ProbeReport("bins")
    model = DepthNet(config)
    if zero_width_mlp and model.gbpm is not None:
        for layer in model.gbpm.width_mlp.layers:
            layer.data[...] = 0.0
    sample = generate_scene(seed, size, config.depth_range)
    with no_grad():
        bins = model.bins(sample.rgb)
    try:
        bins.check()
    except BinSpecError as exc:
        raise ProbeFailure("bins", str(exc)) from exc

    report.values = bins.describe()
    report.lines.extend(f"{key}={value}" for key, value in report.values.items())
    report.lines.append("centers=" + " ".join(f"{c:.4f}" for c in bins.centers.data))
    if zero_width_mlp:
        uniform = 1.0 / bins.n_bins
        if not np.allclose(bins.widths.data, uniform, atol=1e-6):
            raise ProbeFailure("bins", f"zero width MLP did not give uniform widths {uniform}")
    return report


def probe_ablate(
    config: ModelConfig,
    seed: int = 0,
    size: tuple[int, int] = (64, 64),
) -> ProbeReport:
    """Forward, backward and evaluation for the four module toggles."""
    report = ProbeReport("ablate")
    sample = generate_scene(seed, size, config.depth_range)
    header = f"{'config':<10}{'loss':>10}{'delta1':>9}{'params':>9}  in_range  uncovered"
    report.lines.append(header)
    for name, use_glkam, use_gbpm in ABLATIONS:
        model = DepthNet(replace(config, use_glkam=use_glkam, use_gbpm=use_gbpm))
        loss = forward_loss(sample, model)
        backward(loss)
        uncovered = gradient_coverage(model.store)
        with no_grad():
            depth = model.predict(sample.rgb).data
        in_range = bool(np.all((depth > config.d_min) & (depth < config.d_max)))
        metrics = compute_metrics(depth, sample.depth, sample.mask)
        report.values[name] = {
            "loss": loss.item(),
            "delta1": metrics.delta1,
            "params": model.store.count(),
            "in_range": in_range,
            "uncovered": uncovered,
        }
        report.lines.append(
            f"{name:<10}{loss.item():>10.4f}{metrics.delta1:>9.3f}{model.store.count():>9}"
            f"  {str(in_range):<8}  {len(uncovered)}"
        )
        if not np.isfinite(loss.item()):
            raise ProbeFailure("ablate", f"{name}: loss is not finite")
        if not in_range:
            raise ProbeFailure("ablate", f"{name}: depth escapes ({config.d_min}, {config.d_max})")
        if uncovered:
            raise ProbeFailure("ablate", f"{name}: no gradient reaches {', '.join(uncovered[:5])}")
    return report


PROBES = ("gradcheck", "erf", "bins", "ablate")
