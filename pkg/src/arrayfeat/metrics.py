"""Frame-level detection/localisation metrics and the masked training loss."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .geometry import CameraModel, azimuth_to_pixel
from .types import FrameTrack, GroundTruth

# absorbs float noise when an error sits exactly on the tolerance boundary
_BOUNDARY_EPS = 1e-9


@dataclass(frozen=True)
class EvalConfig:
    tolerance_deg: float = 2.0
    camera: CameraModel = field(default_factory=CameraModel)
    n_thresholds: int = 101
    binarize_at: float = 0.5
    tolerance_px: float | None = None

    def __post_init__(self):
        if self.tolerance_px is None:
            offset = azimuth_to_pixel(self.camera, self.tolerance_deg) - self.camera.image_width / 2
            object.__setattr__(self, "tolerance_px", float(round(offset)))


@dataclass(frozen=True)
class Counts:
    thresholds: np.ndarray
    tp: np.ndarray
    fp: np.ndarray
    fn: np.ndarray

    @property
    def precision(self) -> np.ndarray:
        pred = self.tp + self.fp
        # no positive predictions: precision taken as 1 (empty set makes no errors)
        return np.where(pred > 0, self.tp / np.maximum(pred, 1), 1.0)

    @property
    def recall(self) -> np.ndarray:
        pos = self.tp + self.fn
        return np.where(pos > 0, self.tp / np.maximum(pos, 1), 0.0)


@dataclass(frozen=True)
class EvalResult:
    ap: float
    f1: float
    aD: float
    det_err: float
    pr_curve: list

    def as_dict(self) -> dict:
        return {"ap": self.ap, "f1": self.f1, "aD": self.aD, "det_err": self.det_err}


def sigmoid_thresholds(n: int = 101) -> np.ndarray:
    """``sigmoid(-6 + 12 k / (n - 1))`` for k = 0..n-1: dense near 0 and 1."""
    if n < 3:
        raise ValueError("need at least 3 thresholds")
    return expit(-6.0 + 12.0 * np.arange(n) / (n - 1))


def _check_lengths(pred: FrameTrack, gt: GroundTruth):
    if len(pred) != len(gt):
        raise ValueError(f"prediction has {len(pred)} frames, ground truth {len(gt)}")


def pixel_errors(pred: FrameTrack, gt: GroundTruth, cam: CameraModel) -> np.ndarray:
    """|x_pred - x_gt| in pixels; NaN on silent ground-truth frames."""
    return np.abs(pred.x_norm - gt.x_norm) * cam.image_width


def match_frames(pred: FrameTrack, gt: GroundTruth, cfg: EvalConfig | None = None,
                 thresholds=None) -> Counts:
    """TP/FP/FN per confidence threshold; a prediction is active when ``C >= t``."""
    cfg = cfg or EvalConfig()
    _check_lengths(pred, gt)
    t = sigmoid_thresholds(cfg.n_thresholds) if thresholds is None else np.asarray(thresholds, dtype=np.float64)
    err = pixel_errors(pred, gt, cfg.camera)
    hit = gt.active & (np.nan_to_num(err, nan=np.inf) <= cfg.tolerance_px + _BOUNDARY_EPS)
    on = pred.confidence[None, :] >= t[:, None]
    tp = (on & hit).sum(axis=1)
    fp = (on & ~hit).sum(axis=1)
    fn = gt.active.sum() - tp
    return Counts(t, tp, fp, fn)


def average_precision(pr_curve) -> float:
    """All-point interpolated AP: make precision non-increasing in recall, then integrate."""
    # accepts (precision, recall) or (threshold, precision, recall) rows
    pts = np.asarray([(p, r) for *_, p, r in pr_curve], dtype=np.float64)
    if pts.size == 0:
        raise ValueError("empty precision-recall curve")
    order = np.argsort(pts[:, 1], kind="stable")
    prec, rec = pts[order, 0], pts[order, 1]
    mrec = np.concatenate([[0.0], rec, [1.0]])
    mpre = np.concatenate([[0.0], prec, [0.0]])
    mpre = np.maximum.accumulate(mpre[::-1])[::-1]
    step = np.flatnonzero(mrec[1:] != mrec[:-1])
    return float(np.sum((mrec[step + 1] - mrec[step]) * mpre[step + 1]))


def summarize(pred: FrameTrack, gt: GroundTruth, cfg: EvalConfig | None = None) -> EvalResult:
    """AP, best F1 over thresholds, aD (mean pixel error of true positives at the
    binarisation threshold; NaN when there are none) and frame detection error."""
    cfg = cfg or EvalConfig()
    counts = match_frames(pred, gt, cfg)
    p, r = counts.precision, counts.recall
    curve = [(float(t), float(a), float(b)) for t, a, b in zip(counts.thresholds, p, r)]
    denom = p + r
    f1 = float(np.max(np.where(denom > 0, 2 * p * r / np.where(denom > 0, denom, 1), 0.0)))

    on = pred.confidence >= cfg.binarize_at
    det_err = float(np.mean(on != gt.active)) if len(gt) else 0.0
    err = pixel_errors(pred, gt, cfg.camera)
    tp = on & gt.active & (np.nan_to_num(err, nan=np.inf) <= cfg.tolerance_px + _BOUNDARY_EPS)
    ad = float(np.mean(err[tp])) if tp.any() else float("nan")
    return EvalResult(average_precision(curve), f1, ad, det_err, curve)


def merge_counts(parts) -> Counts:
    """Pool per-sequence counts (thresholds must agree)."""
    parts = list(parts)
    t = parts[0].thresholds
    return Counts(t, sum(c.tp for c in parts), sum(c.fp for c in parts), sum(c.fn for c in parts))


def eq2_loss(pred: FrameTrack, target: GroundTruth) -> float:
    """Sum over frames of masked squared position error plus squared confidence error.

    The position term only counts where a position label is available
    (``target.available``); the confidence target is 1 on active frames.
    """
    _check_lengths(pred, target)
    c_hat = target.active.astype(np.float64)
    x_hat = np.where(target.available, target.x_norm, 0.0)
    reg = np.where(target.available, (pred.x_norm - x_hat) ** 2, 0.0)
    return float(np.sum(reg + (pred.confidence - c_hat) ** 2))
