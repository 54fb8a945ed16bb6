"""Central finite-difference checks of tape gradients."""

from __future__ import annotations

from collections.abc import Callable, Sequence
from dataclasses import dataclass, field

import numpy as np

from depthkit.exceptions import TapeError
from depthkit.tensor import Tensor, backward, no_grad, tsum

ABS_FLOOR = 1e-6


@dataclass
class GradCheckReport:
    """Worst relative error over the checked entries."""

    max_rel_error: float = 0.0
    checked: int = 0
    worst: tuple[int, tuple[int, ...]] | None = None
    errors: list[float] = field(default_factory=list, repr=False)

    def passed(self, tolerance: float = 1e-4) -> bool:
        return self.max_rel_error <= tolerance


def relative_error(analytic: float, numeric: float) -> float:
    return abs(analytic - numeric) / max(abs(analytic) + abs(numeric), ABS_FLOOR)


def random_projection(shape: tuple[int, ...], seed: int = 0) -> Callable[[Tensor], Tensor]:
    """Fixed random weighting that turns a tensor output into a scalar loss."""
    weights = np.random.default_rng(seed).uniform(-1.0, 1.0, size=shape)

    def project(out: Tensor) -> Tensor:
        return tsum(out * Tensor(weights.astype(out.dtype)))

    return project


def _entries(tensor: Tensor, max_entries: int | None, rng: np.random.Generator):
    indices = list(np.ndindex(*tensor.shape)) if tensor.ndim else [()]
    if max_entries is not None and len(indices) > max_entries:
        picks = rng.choice(len(indices), size=max_entries, replace=False)
        indices = [indices[i] for i in sorted(picks)]
    return indices


def check_gradients(
    fn: Callable[[], Tensor],
    wrt: Sequence[Tensor],
    h: float = 1e-5,
    max_entries: int | None = None,
    seed: int = 0,
) -> GradCheckReport:
    """Compare the tape gradient of ``fn()`` w.r.t. each of ``wrt`` with central differences.

    ``fn`` must rebuild its result from the current ``.data`` of the tensors
    on every call. ``max_entries`` caps the number of entries probed per
    tensor (chosen at random, seeded).
    """
    for tensor in wrt:
        tensor.requires_grad = True
        tensor.grad = None
    loss = fn()
    if loss.size != 1:
        raise TapeError(f"gradcheck needs a scalar function, got shape {loss.shape}")
    backward(loss)

    rng = np.random.default_rng(seed)
    report = GradCheckReport()
    for position, tensor in enumerate(wrt):
        analytic = tensor.grad if tensor.grad is not None else np.zeros_like(tensor.data)
        for index in _entries(tensor, max_entries, rng):
            original = tensor.data[index].copy()
            with no_grad():
                tensor.data[index] = original + h
                plus = fn().item()
                tensor.data[index] = original - h
                minus = fn().item()
            tensor.data[index] = original
            numeric = (plus - minus) / (2.0 * h)
            error = relative_error(float(analytic[index]), numeric)
            report.errors.append(error)
            report.checked += 1
            if error > report.max_rel_error or report.worst is None:
                report.max_rel_error = max(report.max_rel_error, error)
                report.worst = (position, tuple(int(i) for i in np.atleast_1d(index)))
    return report
