"""Depth-map accuracy metrics and confidence-ordered error curves."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import InvalidInputError

ROC_THETA = 1.05
ROC_STEP = 0.05


def _valid(depth: np.ndarray) -> np.ndarray:
    return np.isfinite(depth) & (depth > 0)


def _pair(est, gt) -> tuple[np.ndarray, np.ndarray]:
    est = np.asarray(est, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if est.shape != gt.shape:
        raise InvalidInputError(f"estimate {est.shape} and ground truth {gt.shape} differ in size")
    return est, gt


def l1_metrics(est, gt) -> tuple[float, float]:
    """Mean absolute and mean relative depth error over pixels valid in both maps."""
    est, gt = _pair(est, gt)
    both = _valid(est) & _valid(gt)
    if not both.any():
        raise InvalidInputError("no pixel is valid in both the estimate and the ground truth")
    diff = np.abs(est[both] - gt[both])
    return float(diff.mean()), float((diff / gt[both]).mean())


def _passes(est: np.ndarray, gt: np.ndarray, theta: float) -> np.ndarray:
    return np.maximum(est / gt, gt / est) < theta


def acc_cpl_f(est, gt, theta: float) -> tuple[float, float, float]:
    """Accuracy, completeness and their harmonic mean for ratio threshold ``theta``.

    A pixel passes when both maps are valid and the larger of the two depth
    ratios stays below ``theta``.  Accuracy divides the pass count by the
    number of estimated pixels, completeness by the number of ground-truth
    pixels.
    """
    est, gt = _pair(est, gt)
    ve, vg = _valid(est), _valid(gt)
    both = ve & vg
    hits = int(_passes(est[both], gt[both], theta).sum())
    n_est, n_gt = int(ve.sum()), int(vg.sum())
    acc = hits / n_est if n_est else 0.0
    cpl = hits / n_gt if n_gt else 0.0
    # equals 2*acc*cpl/(acc+cpl) but rounds once, so it never leaves [min, max] of the two
    f = 2.0 * hits / (n_est + n_gt) if hits else 0.0
    return acc, cpl, f


@dataclass(frozen=True)
class RocCurve:
    densities: tuple[float, ...]
    error_rates: tuple[float, ...]

    def as_dict(self) -> list[dict[str, float]]:
        return [{"density": d, "error_rate": e} for d, e in zip(self.densities, self.error_rates)]


def roc_curve(est, gt, conf, theta: float = ROC_THETA, step: float = ROC_STEP) -> RocCurve:
    """Error rate of the most confident fraction of the estimates, for growing fractions.

    Estimates are ordered by descending confidence (raster order on ties).
    For each density the retained prefix is scored as ``1 - accuracy`` with
    the prefix itself as the estimate set.
    """
    est, gt = _pair(est, gt)
    conf = np.asarray(conf, dtype=np.float64)
    if conf.shape != est.shape:
        raise InvalidInputError("confidence map size differs from the estimate")
    ve = _valid(est).ravel()
    if not ve.any():
        raise InvalidInputError("no valid estimate to rank")
    e, g, c = est.ravel()[ve], gt.ravel()[ve], conf.ravel()[ve]
    order = np.argsort(-c, kind="stable")
    ok = _valid(g[order])
    good = np.zeros(order.size, dtype=bool)
    good[ok] = _passes(e[order][ok], g[order][ok], theta)
    cum = np.cumsum(good)
    steps = int(round(1.0 / step))
    densities, rates = [], []
    for k in range(1, steps + 1):
        frac = k / steps
        n = max(1, math.ceil(round(frac * order.size, 9)))
        densities.append(frac)
        rates.append(1.0 - cum[n - 1] / n)
    return RocCurve(tuple(densities), tuple(rates))


@dataclass
class MetricReport:
    l1_abs: float
    l1_rel: float
    n_valid: int
    n_estimated: int
    n_ground_truth: int
    thresholds: dict[float, tuple[float, float, float]] = field(default_factory=dict)
    roc: RocCurve | None = None

    def to_text(self) -> str:
        """One ``key=value`` pair per line."""
        lines = [
            f"l1_abs={self.l1_abs:.9g}",
            f"l1_rel={self.l1_rel:.9g}",
            f"valid={self.n_valid}",
            f"estimated={self.n_estimated}",
            f"ground_truth={self.n_ground_truth}",
        ]
        for theta, (acc, cpl, f) in self.thresholds.items():
            lines += [f"acc@{theta:g}={acc:.9g}", f"cpl@{theta:g}={cpl:.9g}", f"f@{theta:g}={f:.9g}"]
        if self.roc is not None:
            lines += [f"roc@{d:.2f}={e:.9g}" for d, e in zip(self.roc.densities, self.roc.error_rates)]
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict:
        return {
            "l1_abs": self.l1_abs,
            "l1_rel": self.l1_rel,
            "counts": {"valid": self.n_valid, "estimated": self.n_estimated, "ground_truth": self.n_ground_truth},
            "thresholds": [{"theta": t, "acc": a, "cpl": c, "f": f} for t, (a, c, f) in self.thresholds.items()],
            "roc": self.roc.as_dict() if self.roc is not None else None,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def evaluate(est, gt, thetas: Sequence[float] = (1.05, 1.25), conf=None) -> MetricReport:
    est, gt = _pair(est, gt)
    l1_abs, l1_rel = l1_metrics(est, gt)
    ve, vg = _valid(est), _valid(gt)
    return MetricReport(
        l1_abs=l1_abs,
        l1_rel=l1_rel,
        n_valid=int((ve & vg).sum()),
        n_estimated=int(ve.sum()),
        n_ground_truth=int(vg.sum()),
        thresholds={float(t): acc_cpl_f(est, gt, t) for t in thetas},
        roc=roc_curve(est, gt, conf) if conf is not None else None,
    )
