from __future__ import annotations

import enum


class PretermCategory(enum.IntEnum):
    EPT = 0
    VPT = 1
    LPT = 2
    Term = 3


# lower bounds (weeks) of the half-open intervals [28, 32), [32, 37), [37, inf)
BOUNDARIES = (28.0, 32.0, 37.0)
CATEGORY_NAMES = tuple(c.name for c in PretermCategory)


def categorize(ga_birth_weeks: float) -> PretermCategory:
    g = float(ga_birth_weeks)
    if not g > 0:
        raise ValueError(f"gestational age must be positive, got {ga_birth_weeks}")
    if g < 28.0:
        return PretermCategory.EPT
    if g < 32.0:
        return PretermCategory.VPT
    if g < 37.0:
        return PretermCategory.LPT
    return PretermCategory.Term


def is_preterm(ga_weeks: float) -> bool:
    return float(ga_weeks) < 37.0
