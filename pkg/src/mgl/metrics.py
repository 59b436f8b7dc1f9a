"""Evaluation metrics: MAE for masks, threshold-sweep F-measure (ODS/OIS) for edges.

Edge matching is exact pixel coincidence after thresholding, with no spatial
tolerance, so the numbers are strict and not comparable with tolerance-based
benchmark toolboxes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError

THRESHOLDS = np.arange(1, 100, dtype=np.float64) / 100.0


def mae(pred: np.ndarray, gt: np.ndarray) -> float:
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise DimensionError(f"mae: {pred.shape} vs {gt.shape}")
    return float(np.abs(pred - gt).mean())


def f_measure(tp: float, fp: float, fn: float) -> float:
    """2PR/(P+R); zero by convention when there are no true positives."""
    if tp < 0 or fp < 0 or fn < 0:
        raise ValueError("f_measure: counts must be nonnegative")
    if tp == 0:
        return 0.0
    precision = tp / (tp + fp)
    recall = tp / (tp + fn)
    return 2.0 * precision * recall / (precision + recall)


def threshold_counts(pred: np.ndarray, gt: np.ndarray):
    """Per-threshold (tp, fp, fn) for one image; positive means pred > threshold."""
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt) > 0
    if pred.shape != gt.shape:
        raise DimensionError(f"threshold_counts: {pred.shape} vs {gt.shape}")
    binarized = pred[None, ...] > THRESHOLDS.reshape((-1,) + (1,) * pred.ndim)
    tp = (binarized & gt[None]).sum(axis=tuple(range(1, binarized.ndim)))
    fp = (binarized & ~gt[None]).sum(axis=tuple(range(1, binarized.ndim)))
    fn = (~binarized & gt[None]).sum(axis=tuple(range(1, binarized.ndim)))
    return tp.astype(np.int64), fp.astype(np.int64), fn.astype(np.int64)


@dataclass
class PrCurve:
    thresholds: np.ndarray  # the shared 99-point grid
    tp: np.ndarray
    fp: np.ndarray
    fn: np.ndarray

    def f_scores(self) -> np.ndarray:
        return np.asarray([f_measure(t, p, n)
                           for t, p, n in zip(self.tp, self.fp, self.fn)])


def pr_curve(preds, gts) -> PrCurve:
    """Dataset-aggregated counts over the shared threshold grid."""
    if len(preds) != len(gts) or not preds:
        raise ValueError("pr_curve: need equally many, and at least one, pred/gt pair")
    tp = np.zeros(len(THRESHOLDS), dtype=np.int64)
    fp = np.zeros_like(tp)
    fn = np.zeros_like(tp)
    for pred, gt in zip(preds, gts):
        t, p, n = threshold_counts(pred, gt)
        tp += t
        fp += p
        fn += n
    return PrCurve(thresholds=THRESHOLDS.copy(), tp=tp, fp=fp, fn=fn)


@dataclass
class EdgeScores:
    ods: float  # best F over the grid with dataset-aggregated counts
    ois: float  # mean over images of each image's best F


def ods_ois(preds, gts) -> EdgeScores:
    if not preds:
        raise ValueError("ods_ois: empty dataset")
    curve = pr_curve(preds, gts)
    ods = float(curve.f_scores().max())
    best = []
    for pred, gt in zip(preds, gts):
        t, p, n = threshold_counts(pred, gt)
        best.append(max(f_measure(a, b, c) for a, b, c in zip(t, p, n)))
    return EdgeScores(ods=ods, ois=float(np.mean(best)))


def report_lines(values: dict[str, float]) -> str:
    """Machine-readable `metric\\tvalue` lines."""
    return "\n".join(f"{k}\t{v:.6f}" for k, v in values.items())
