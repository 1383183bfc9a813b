"""Confusion counts, MCC, F1 and accuracy under the Full and Mask scoring schemes.

Full scores every pixel whose ground truth is 0 or 1. Mask additionally drops
the pixels flagged in an optional exclusion raster. Ground-truth pixels equal
to 255 are skipped by both schemes.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import InputError


class Mode(enum.Enum):
    FULL = "full"
    MASK = "mask"


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    def __post_init__(self):
        if min(self.tp, self.fp, self.tn, self.fn) < 0:
            raise InputError(f"confusion counts must be non-negative: {self}")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    def __add__(self, other: ConfusionCounts) -> ConfusionCounts:
        return ConfusionCounts(self.tp + other.tp, self.fp + other.fp, self.tn + other.tn, self.fn + other.fn)


def confusion(pred, gt, mode: Mode = Mode.MASK, exclusion=None) -> ConfusionCounts:
    """Count agreement between a binary prediction and a ternary ground truth.

    ``exclusion`` is a boolean-like raster (nonzero = exclude). It is honoured
    in Mask mode only.
    """
    pred = np.asarray(pred)
    gt = np.asarray(gt)
    if pred.shape != gt.shape:
        raise InputError(f"prediction shape {pred.shape} != ground truth shape {gt.shape}")
    keep = (gt == 0) | (gt == 1)
    if Mode(mode) is Mode.MASK and exclusion is not None:
        exclusion = np.asarray(exclusion)
        if exclusion.shape != gt.shape:
            raise InputError(f"exclusion shape {exclusion.shape} != ground truth shape {gt.shape}")
        keep &= exclusion == 0
    p = pred[keep] != 0
    t = gt[keep] == 1
    tp = int(np.count_nonzero(p & t))
    fp = int(np.count_nonzero(p & ~t))
    fn = int(np.count_nonzero(~p & t))
    return ConfusionCounts(tp=tp, fp=fp, tn=int(p.size) - tp - fp - fn, fn=fn)


def mcc(c: ConfusionCounts) -> float:
    """Matthews correlation coefficient; 0 when any marginal is empty."""
    factors = (c.tp + c.fp, c.tp + c.fn, c.tn + c.fp, c.tn + c.fn)
    if 0 in factors:
        return 0.0
    num = c.tp * c.tn - c.fp * c.fn
    prod = factors[0] * factors[1] * factors[2] * factors[3]
    root = math.isqrt(prod)
    # exact root when available keeps perfect and inverted predictions at exactly +/-1
    return num / root if root * root == prod else num / math.sqrt(prod)


def f_score(c: ConfusionCounts) -> float:
    denom = 2 * c.tp + c.fp + c.fn
    return 2 * c.tp / denom if denom else 0.0


def accuracy(c: ConfusionCounts) -> float:
    return (c.tp + c.tn) / c.total if c.total else 0.0


@dataclass(frozen=True)
class EvalReport:
    mcc_full: float
    mcc_mask: float
    f1_full: float
    f1_mask: float
    acc_full: float
    acc_mask: float
    full: ConfusionCounts
    mask: ConfusionCounts

    FIELDS = ("mcc_full", "mcc_mask", "f1_full", "f1_mask", "acc_full", "acc_mask")

    def as_dict(self) -> dict[str, float]:
        return {k: getattr(self, k) for k in self.FIELDS}


def evaluate(pred, gt, exclusion=None) -> EvalReport:
    full = confusion(pred, gt, Mode.FULL, exclusion)
    mask = confusion(pred, gt, Mode.MASK, exclusion)
    return EvalReport(
        mcc_full=mcc(full),
        mcc_mask=mcc(mask),
        f1_full=f_score(full),
        f1_mask=f_score(mask),
        acc_full=accuracy(full),
        acc_mask=accuracy(mask),
        full=full,
        mask=mask,
    )


def summarize(reports) -> dict[str, tuple[float, float]]:
    """Mean and population standard deviation of each metric over scenes."""
    reports = list(reports)
    if not reports:
        raise InputError("no reports to summarize")
    out = {}
    for key in EvalReport.FIELDS:
        vals = np.array([getattr(r, key) for r in reports])
        out[key] = (float(vals.mean()), float(vals.std()))
    return out
