from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .inference import Prediction


class DegenerateDesignError(ValueError):
    pass


@dataclass(frozen=True)
class CervicalLR:
    slope: float
    intercept: float

    def predict(self, cervical_length_mm: float) -> float:
        return self.slope * float(cervical_length_mm) + self.intercept

    def __call__(self, case) -> Prediction:
        if case.cervical_length_mm is None:
            raise ValueError(f"case {case.id} has no cervical length")
        return Prediction(case.id, case.ga_birth_weeks, self.predict(case.cervical_length_mm), 1)


def fit_cervical_lr(cases) -> CervicalLR:
    """Ordinary least squares of GA at birth on cervical length (cases lacking it are skipped)."""
    pts = [(c.cervical_length_mm, c.ga_birth_weeks) for c in cases if c.cervical_length_mm is not None]
    return fit_line(*zip(*pts)) if pts else fit_line([], [])


def fit_line(x, y) -> CervicalLR:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.size < 2:
        raise DegenerateDesignError("need at least two cases with cervical length")
    xc = x - x.mean()
    sxx = float((xc * xc).sum())
    if sxx <= 1e-12 * max(1.0, float((x * x).sum())):
        raise DegenerateDesignError("all cervical lengths are identical")
    slope = float((xc * (y - y.mean())).sum() / sxx)
    return CervicalLR(slope, float(y.mean() - slope * x.mean()))


@dataclass(frozen=True)
class ConstantPredictor:
    value: float

    def __call__(self, case) -> Prediction:
        return Prediction(case.id, case.ga_birth_weeks, self.value, 1)


def training_mean(cases) -> ConstantPredictor:
    return ConstantPredictor(float(np.mean([c.ga_birth_weeks for c in cases])))
