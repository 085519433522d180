"""Tracking metrics: success curve, accuracy, robustness, miss/update rates.

A frame is "successful" at threshold tau when its predicted-vs-GT IoU is
>= tau, except at tau = 0 where a strictly positive IoU is required (total
misses never count as successes).  Robustness is the fraction of frames at
which the tracker transitions from positive overlap to zero overlap; a miss
on the very first frame counts as one such event.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DataError
from .geometry import QuadBB, safe_quad_iou

TAU_GRID = np.round(np.arange(0, 21, dtype=np.float64) * 0.05, 2)  # 0.00 .. 1.00


@dataclass(frozen=True)
class MetricReport:
    success_curve: np.ndarray  # rate per TAU_GRID entry
    accuracy: float
    robustness: float
    miss_rate: float
    update_rate: float

    def sr_at(self, tau: float) -> float:
        idx = int(np.argmin(np.abs(TAU_GRID - tau)))
        return float(self.success_curve[idx])


def iou_series(pred: Sequence[QuadBB], gt: Sequence[QuadBB]) -> np.ndarray:
    """Per-frame IoU; non-convex quads fall back to their hulls."""
    if len(pred) != len(gt):
        raise DataError(f"{len(pred)} predictions for {len(gt)} ground-truth frames")
    if len(pred) < 1:
        raise DataError("need at least one frame")
    return np.array([safe_quad_iou(p, g) for p, g in zip(pred, gt)])


def success_curve(pred: Sequence[QuadBB], gt: Sequence[QuadBB]) -> np.ndarray:
    return success_curve_from_ious(iou_series(pred, gt))


def success_curve_from_ious(ious: np.ndarray) -> np.ndarray:
    ious = np.asarray(ious, dtype=np.float64)
    curve = np.array([np.mean(ious >= tau) for tau in TAU_GRID])
    curve[0] = np.mean(ious > 0.0)
    return curve


def accuracy(pred: Sequence[QuadBB], gt: Sequence[QuadBB]) -> float:
    return accuracy_from_ious(iou_series(pred, gt))


def accuracy_from_ious(ious: np.ndarray) -> float:
    hit = np.asarray(ious) > 0.0
    if not hit.any():
        return 0.0
    return float(np.mean(np.asarray(ious)[hit]))


def robustness(pred: Sequence[QuadBB], gt: Sequence[QuadBB]) -> float:
    return robustness_from_ious(iou_series(pred, gt))


def robustness_from_ious(ious: np.ndarray) -> float:
    tracked = np.asarray(ious) > 0.0
    prev = np.concatenate(([True], tracked[:-1]))  # frame-1 miss counts as a drift
    drifts = np.sum(prev & ~tracked)
    return float(drifts / tracked.size)


def miss_rate(pred: Sequence[QuadBB], gt: Sequence[QuadBB]) -> float:
    return miss_rate_from_ious(iou_series(pred, gt))


def miss_rate_from_ious(ious: np.ndarray) -> float:
    return float(np.mean(np.asarray(ious) == 0.0))


def update_rate(dict_updated: Sequence[bool]) -> float:
    flags = np.asarray(dict_updated, dtype=bool)
    if flags.size < 1:
        raise DataError("need at least one frame result")
    return float(flags.mean())


def evaluate(pred: Sequence[QuadBB], gt: Sequence[QuadBB],
             dict_updated: Sequence[bool] | None = None) -> MetricReport:
    ious = iou_series(pred, gt)
    upd = 0.0
    if dict_updated is not None:
        if len(dict_updated) != len(pred):
            raise DataError("dict_updated flag count does not match frames")
        upd = update_rate(dict_updated)
    return MetricReport(success_curve=success_curve_from_ious(ious),
                        accuracy=accuracy_from_ious(ious),
                        robustness=robustness_from_ious(ious),
                        miss_rate=miss_rate_from_ious(ious),
                        update_rate=upd)


def write_report(report: MetricReport, path: Path | str) -> None:
    """Serialize as metric,value rows followed by tau,rate curve rows."""
    path = Path(path)
    try:
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["metric", "value"])
            writer.writerow(["accuracy", f"{report.accuracy:.6f}"])
            writer.writerow(["robustness", f"{report.robustness:.6f}"])
            writer.writerow(["miss_rate", f"{report.miss_rate:.6f}"])
            writer.writerow(["update_rate", f"{report.update_rate:.6f}"])
            writer.writerow(["tau", "rate"])
            for tau, rate in zip(TAU_GRID, report.success_curve):
                writer.writerow([f"{tau:.2f}", f"{rate:.6f}"])
    except OSError as exc:
        raise DataError(f"cannot write report to {path}: {exc}") from exc


@dataclass(frozen=True)
class AblationPairing:
    """Per-threshold and per-frame deltas between two runs on one sequence."""

    sr_delta: np.ndarray        # success-rate (a - b) per TAU_GRID entry
    iou_delta: np.ndarray       # per-frame IoU (a - b)
    likelihood_win_rate: float  # fraction of frames with lik_a > lik_b (strict)


def ablation_pairing(quads_a: Sequence[QuadBB], liks_a: Sequence[float],
                     quads_b: Sequence[QuadBB], liks_b: Sequence[float],
                     gt: Sequence[QuadBB]) -> AblationPairing:
    if not (len(quads_a) == len(quads_b) == len(gt) == len(liks_a) == len(liks_b)):
        raise DataError("paired runs must cover the same frames")
    ious_a = iou_series(quads_a, gt)
    ious_b = iou_series(quads_b, gt)
    sr_delta = success_curve_from_ious(ious_a) - success_curve_from_ious(ious_b)
    wins = np.asarray(liks_a) > np.asarray(liks_b)
    return AblationPairing(sr_delta=sr_delta, iou_delta=ious_a - ious_b,
                           likelihood_win_rate=float(wins.mean()))
