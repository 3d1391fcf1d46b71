"""Regression error and term/preterm confusion statistics."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from ..data.categories import is_preterm


@dataclass(frozen=True)
class Metrics:
    mae_weeks: float
    mae_sd_weeks: float
    accuracy: float
    sensitivity: float
    specificity: float
    tp: int
    fn: int
    tn: int
    fp: int

    @property
    def confusion(self) -> tuple[int, int, int, int]:
        return self.tp, self.fn, self.tn, self.fp

    def as_dict(self) -> dict:
        return asdict(self)


def _ratio(num: int, den: int) -> float:
    return num / den if den else math.nan


def rates_from_confusion(tp: int, fn: int, tn: int, fp: int) -> tuple[float, float, float]:
    """(accuracy, sensitivity, specificity) with preterm as the positive class."""
    total = tp + fn + tn + fp
    return _ratio(tp + tn, total), _ratio(tp, tp + fn), _ratio(tn, tn + fp)


def confusion(true_weeks, pred_weeks) -> tuple[int, int, int, int]:
    t = np.array([is_preterm(v) for v in true_weeks], dtype=bool)
    p = np.array([is_preterm(v) for v in pred_weeks], dtype=bool)
    return int((t & p).sum()), int((t & ~p).sum()), int((~t & ~p).sum()), int((~t & p).sum())


def compute_metrics(predictions) -> Metrics:
    """MAE with population SD of absolute errors, plus the 37-week confusion."""
    preds = list(predictions)
    if not preds:
        raise ValueError("cannot compute metrics of an empty prediction set")
    true = np.array([p.ga_true_weeks for p in preds], dtype=np.float64)
    pred = np.array([p.ga_pred_weeks for p in preds], dtype=np.float64)
    abs_err = np.abs(pred - true)
    tp, fn, tn, fp = confusion(true, pred)
    acc, sens, spec = rates_from_confusion(tp, fn, tn, fp)
    return Metrics(float(abs_err.mean()), float(abs_err.std()), acc, sens, spec, tp, fn, tn, fp)


def achievable_confusions(n_pos: int, n_neg: int, accuracy: float, sensitivity: float,
                          specificity: float, decimals: int = 2) -> list[tuple[int, int, int, int]]:
    """All integer confusion matrices of the given composition whose rates round to the triple."""
    hits = []
    for tp in range(n_pos + 1):
        for tn in range(n_neg + 1):
            acc, sens, spec = rates_from_confusion(tp, n_pos - tp, tn, n_neg - tn)
            if (round(acc, decimals) == round(accuracy, decimals)
                    and round(sens, decimals) == round(sensitivity, decimals)
                    and round(spec, decimals) == round(specificity, decimals)):
                hits.append((tp, n_pos - tp, tn, n_neg - tn))
    return hits
