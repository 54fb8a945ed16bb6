"""Training, evaluation, prediction and probe loops."""

from __future__ import annotations

import csv
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Protocol

import numpy as np

from depthkit.config import ModelConfig, TrainConfig
from depthkit.data import DepthSample, augment, generate_scenes
from depthkit.exceptions import DepthkitError, ProbeFailure
from depthkit.helpers import derive_seed
from depthkit.model import DepthNet, forward_loss, infer_flip_averaged
from depthkit.objective import MetricReport, SilogParams, compute_metrics
from depthkit.optim import AdamState, adam_step, linear_lr
from depthkit.tensor import backward, no_grad

if TYPE_CHECKING:
    from collections.abc import Callable

    from depthkit.probes import ProbeReport


class OutputWriter(Protocol):
    """Protocol for progress output."""

    def write(self, msg: str, ending: str = "\n") -> None:
        """Write a message."""
        ...


class StderrWriter:
    """Progress goes to the error stream; data only ever goes to files."""

    def write(self, msg: str, ending: str = "\n") -> None:
        print(msg, end=ending, file=sys.stderr)


class _Reporter:
    def __init__(self, verbose: bool = True, output: OutputWriter | None = None):
        self.verbose = verbose
        self.output = output or StderrWriter()

    def _write(self, msg: str, ending: str = "\n") -> None:
        if self.verbose:
            self.output.write(msg, ending=ending)

    def _write_success(self, msg: str) -> None:
        self._write(f"✓ {msg}")

    def _write_error(self, msg: str) -> None:
        self._write(f"✗ {msg}")

    def _write_warning(self, msg: str) -> None:
        self._write(f"⚠ {msg}")


@dataclass
class LossRecord:
    step: int
    lr: float
    loss: float


@dataclass
class TrainResult:
    """Trained model plus the per-step loss log."""

    model: DepthNet
    steps: int = 0
    records: list[LossRecord] = field(default_factory=list)

    @property
    def final_loss(self) -> float | None:
        return self.records[-1].loss if self.records else None

    @property
    def initial_loss(self) -> float | None:
        return self.records[0].loss if self.records else None


class TrainRunner(_Reporter):
    """Adam with linear decay over augmented synthetic scenes.

    Example:
        >>> runner = TrainRunner(ModelConfig(), TrainConfig(steps=50, scenes=4))
        >>> result = runner.run()
        >>> result.final_loss < result.initial_loss
        True
    """

    def __init__(
        self,
        model_config: ModelConfig,
        train_config: TrainConfig,
        verbose: bool = True,
        output: OutputWriter | None = None,
    ):
        super().__init__(verbose, output)
        self.model_config = model_config
        self.train_config = train_config

    def scenes(self) -> list[DepthSample]:
        cfg = self.train_config
        return generate_scenes(cfg.scenes, cfg.seed, cfg.image_size, self.model_config.depth_range)

    def run(self, samples: list[DepthSample] | None = None) -> TrainResult:
        cfg = self.train_config
        cfg.validate()
        samples = samples if samples is not None else self.scenes()
        model = DepthNet(self.model_config)
        result = TrainResult(model=model)
        total = cfg.total_steps
        batch_size = min(cfg.batch_size, len(samples))
        if batch_size < cfg.batch_size:
            self._write_warning(f"batch size scaled down to {batch_size} ({len(samples)} scenes)")

        rng = np.random.default_rng(derive_seed(cfg.seed, "train"))
        silog = SilogParams(cfg.silog_lambda, cfg.silog_alpha)
        state = AdamState()
        params = model.parameters()
        order: list[int] = []

        self._write(
            f"Training {model.store.count()} weights for {total} step(s) "
            f"on {len(samples)} scene(s), batch {batch_size}"
        )
        for step in range(total):
            if len(order) < batch_size:
                order.extend(int(i) for i in rng.permutation(len(samples)))
            batch, order = order[:batch_size], order[batch_size:]

            lr = linear_lr(step, total, cfg.lr_start, cfg.lr_end)
            model.store.zero_grad()
            step_loss = 0.0
            for index in batch:
                sample = samples[index]
                if cfg.augment:
                    sample = augment(sample, rng, depth_range=self.model_config.depth_range)
                loss = forward_loss(sample, model, silog) * (1.0 / batch_size)
                backward(loss)
                step_loss += loss.item()
            adam_step(params, state, lr, cfg.betas, cfg.weight_decay)

            result.records.append(LossRecord(step=step, lr=lr, loss=step_loss))
            result.steps = step + 1
            if cfg.log_every and (step % cfg.log_every == 0 or step == total - 1):
                self._write(f"  step {step:>5}  lr {lr:.3e}  loss {step_loss:.5f}")

        self._write_success(f"Trained {result.steps} step(s)")
        return result


def write_loss_log(path: str | Path, records: list[LossRecord]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["step", "lr", "loss"])
        for record in records:
            writer.writerow([record.step, repr(record.lr), repr(record.loss)])
    return path


def predict_samples(
    model: DepthNet, samples: list[DepthSample], flip_average: bool = False
) -> list[np.ndarray]:
    """Depth maps for every sample, optionally flip-averaged."""
    predictions = []
    with no_grad():
        for sample in samples:
            depth = (
                infer_flip_averaged(sample.rgb, model) if flip_average else model.predict(sample.rgb)
            )
            predictions.append(depth.data)
    return predictions


@dataclass
class EvalResult:
    report: MetricReport
    per_sample: list[MetricReport] = field(default_factory=list)


class EvalRunner(_Reporter):
    """Metric report over a sample set.

    ``oracle`` scores the ground truth against itself, which needs no model.
    """

    def __init__(
        self,
        flip_average: bool = False,
        oracle: bool = False,
        verbose: bool = True,
        output: OutputWriter | None = None,
    ):
        super().__init__(verbose, output)
        self.flip_average = flip_average
        self.oracle = oracle

    def run(self, model: DepthNet | None, samples: list[DepthSample]) -> EvalResult:
        if not samples:
            raise DepthkitError("no samples to evaluate")
        if self.oracle:
            predictions = [sample.depth for sample in samples]
        else:
            if model is None:
                raise DepthkitError("evaluation needs a model unless running in oracle mode")
            predictions = predict_samples(model, samples, self.flip_average)

        per_sample = [
            compute_metrics(pred, sample.depth, sample.mask)
            for pred, sample in zip(predictions, samples)
        ]
        result = EvalResult(report=MetricReport.mean(per_sample), per_sample=per_sample)
        self._write_success(
            f"Evaluated {len(samples)} sample(s): abs_rel {result.report.abs_rel:.4f}, "
            f"delta1 {result.report.delta1:.4f}"
        )
        return result


@dataclass
class ProbeResult:
    """Result of running probes."""

    total: int = 0
    successful: int = 0
    failed: int = 0
    reports: list[ProbeReport] = field(default_factory=list)
    errors: list[tuple[str, Exception]] = field(default_factory=list)

    @property
    def success(self) -> bool:
        """Return True if every probe passed."""
        return self.failed == 0


class ProbeRunner(_Reporter):
    """Runs named probes, collecting failures instead of stopping at the first."""

    def run(self, probes: list[tuple[str, Callable[[], ProbeReport]]]) -> ProbeResult:
        result = ProbeResult(total=len(probes))
        for name, probe in probes:
            self._write(f"probe {name}:")
            try:
                report = probe()
            except ProbeFailure as exc:
                self._write_error(str(exc))
                result.failed += 1
                result.errors.append((name, exc))
                continue
            for line in report.lines:
                self._write(f"  {line}")
            result.reports.append(report)
            result.successful += 1

        if result.success:
            self._write_success(f"{result.successful} probe(s) passed")
        else:
            self._write_error(f"{result.failed} of {result.total} probe(s) failed")
        return result
