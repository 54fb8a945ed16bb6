"""SILog training loss and the depth evaluation metrics."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from depthkit.exceptions import ConfigError, EmptyMaskError, ShapeError
from depthkit.tensor import Tensor, as_tensor, clamp_min, log, masked_select, mean, sqrt

RADICAND_FLOOR = 1e-12


@dataclass(frozen=True)
class SilogParams:
    """``lam`` weights the squared mean inside the root, ``alpha`` scales the result."""

    lam: float = 0.85
    alpha: float = 10.0

    def __post_init__(self) -> None:
        if not 0 < self.lam <= 1:
            raise ConfigError(f"SILog lambda must be in (0, 1], got {self.lam}")
        if self.alpha <= 0:
            raise ConfigError(f"SILog alpha must be > 0, got {self.alpha}")


def _as_array(value) -> np.ndarray:
    return value.data if isinstance(value, Tensor) else np.asarray(value)


def _mask_for(mask, shape: tuple[int, ...]) -> np.ndarray:
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != shape:
        raise ShapeError(f"mask shape {mask.shape} does not match depth shape {shape}")
    if not mask.any():
        raise EmptyMaskError("no valid pixels under the mask")
    return mask


def silog_loss(d_pred, d_gt, mask, params: SilogParams | None = None) -> Tensor:
    """``alpha * sqrt(mean(g^2) - lam * mean(g)^2)`` with ``g = log d_gt - log d_pred``.

    Only masked pixels count. The radicand is floored at 1e-12 before the root.
    """
    params = params or SilogParams()
    d_pred = as_tensor(d_pred)
    gt = _as_array(d_gt)
    if gt.shape != d_pred.shape:
        raise ShapeError(f"silog: prediction {d_pred.shape} and target {gt.shape} differ")
    mask = _mask_for(mask, d_pred.shape)

    log_gt = np.log(gt[mask]).astype(d_pred.dtype)
    g = Tensor(log_gt) - log(masked_select(d_pred, mask))
    g_mean = mean(g)
    radicand = mean(g * g) - params.lam * (g_mean * g_mean)
    return params.alpha * sqrt(clamp_min(radicand, RADICAND_FLOOR))


@dataclass(frozen=True)
class MetricReport:
    """Standard error and threshold-accuracy metrics over valid pixels."""

    abs_rel: float
    rmse: float
    log10: float
    sq_rel: float
    delta1: float
    delta2: float
    delta3: float
    n_valid: int

    def to_dict(self) -> dict[str, float]:
        return asdict(self)

    def as_text(self) -> str:
        """Flat ``key=value`` block, one metric per line."""
        return "\n".join(f"{key}={value}" for key, value in self.to_dict().items()) + "\n"

    @classmethod
    def mean(cls, reports: list[MetricReport]) -> MetricReport:
        """Per-image average of a list of reports (``n_valid`` is summed)."""
        if not reports:
            raise EmptyMaskError("no reports to average")
        fields = ("abs_rel", "rmse", "log10", "sq_rel", "delta1", "delta2", "delta3")
        values = {name: float(np.mean([getattr(r, name) for r in reports])) for name in fields}
        return cls(**values, n_valid=sum(r.n_valid for r in reports))


def compute_metrics(d_pred, d_gt, mask) -> MetricReport:
    """AbsRel, RMSE, Log10, SqRel and the three δ accuracies over masked pixels."""
    pred = _as_array(d_pred).astype(np.float64)
    gt = _as_array(d_gt).astype(np.float64)
    if pred.shape != gt.shape:
        raise ShapeError(f"metrics: prediction {pred.shape} and target {gt.shape} differ")
    mask = _mask_for(mask, gt.shape)
    pred, gt = pred[mask], gt[mask]

    diff = pred - gt
    ratio = np.maximum(pred / gt, gt / pred)
    return MetricReport(
        abs_rel=float(np.mean(np.abs(diff) / gt)),
        rmse=float(np.sqrt(np.mean(diff * diff))),
        log10=float(np.mean(np.abs(np.log10(pred) - np.log10(gt)))),
        sq_rel=float(np.mean(diff * diff / gt)),
        delta1=float(np.mean(ratio < 1.25)),
        delta2=float(np.mean(ratio < 1.25**2)),
        delta3=float(np.mean(ratio < 1.25**3)),
        n_valid=int(mask.sum()),
    )


def build_validity_mask(d_gt, depth_range: tuple[float, float]) -> np.ndarray:
    """Valid where the depth is finite and ``d_min < d <= d_max``."""
    depth = _as_array(d_gt)
    d_min, d_max = depth_range
    with np.errstate(invalid="ignore"):
        return np.isfinite(depth) & (depth > d_min) & (depth <= d_max)
