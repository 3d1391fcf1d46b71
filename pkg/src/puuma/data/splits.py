"""Category-stratified train/val/test partitioning and class-balanced sampling."""

from __future__ import annotations

from typing import Callable, Iterator, Sequence

import numpy as np

from .categories import PretermCategory


class StratificationError(ValueError):
    pass


def allocate(n: int, ratios: Sequence[float], method: str = "largest_remainder") -> list[int]:
    """Integer split sizes for ``n`` items.

    ``largest_remainder`` keeps every size within 1 of its exact quota.
    ``floor`` gives each non-first split floor(quota) (at least 1) and the
    first split the rest, which is how 295 cases become 243/26/26.
    Every split with a positive ratio receives at least one item when there
    are enough items; a smaller category fills the splits in order, one each.
    """
    r = np.asarray(ratios, dtype=np.float64)
    if n < 0 or r.ndim != 1 or np.any(r < 0) or r.sum() <= 0:
        raise ValueError("need n >= 0 and non-negative ratios with a positive sum")
    if n < int((r > 0).sum()):
        sizes = np.zeros(len(r), dtype=int)
        sizes[np.flatnonzero(r > 0)[:n]] = 1
        return sizes.tolist()
    quota = n * r / r.sum()
    if method == "largest_remainder":
        sizes = np.floor(quota).astype(int)
        order = np.argsort(-(quota - sizes), kind="stable")
        for i in order[: n - sizes.sum()]:
            sizes[i] += 1
    elif method == "floor":
        sizes = np.floor(quota).astype(int)
        sizes[1:] = np.where(r[1:] > 0, np.maximum(sizes[1:], 1), 0)
        sizes[0] = n - sizes[1:].sum()
    else:
        raise ValueError(f"unknown allocation method {method!r}")
    for i in np.flatnonzero((sizes == 0) & (r > 0)):
        donor = int(np.argmax(sizes))
        sizes[donor] -= 1
        sizes[i] += 1
    return sizes.tolist()


def stratified_split(items: Sequence, ratios=(8, 1, 1), seed: int = 0,
                     key: Callable | None = None, method: str = "largest_remainder", required=None):
    """Partition ``items`` into len(ratios) groups with per-category proportions preserved.

    ``key`` maps an item to its category (default: ``item.category``). Each
    category is shuffled with a generator seeded by ``seed``; output groups
    keep the input order of the items they contain. Categories listed in
    ``required`` must be present, otherwise StratificationError is raised.
    """
    key = key or (lambda item: item.category)
    cats = [key(it) for it in items]
    missing = [c for c in (required or ()) if c not in set(cats)]
    if missing:
        names = [getattr(c, "name", str(c)) for c in missing]
        raise StratificationError(f"categories without any case cannot be stratified: {names}")
    rng = np.random.default_rng(seed)
    assignment = np.full(len(items), -1)
    for cat in sorted(set(cats)):
        members = np.array([i for i, c in enumerate(cats) if c == cat])
        sizes = allocate(len(members), ratios, method)
        shuffled = rng.permutation(members)
        start = 0
        for split, size in enumerate(sizes):
            assignment[shuffled[start:start + size]] = split
            start += size
    return tuple([items[i] for i in range(len(items)) if assignment[i] == s] for s in range(len(ratios)))


class BalancedSampler:
    """Infinite stream of indices with P(i) proportional to 1 / count(category(i))."""

    def __init__(self, categories: Sequence, seed: int, n_categories: int = len(PretermCategory)):
        cats = np.asarray([int(c) for c in categories])
        counts = np.bincount(cats, minlength=n_categories)
        if len(cats) == 0 or np.any(counts == 0):
            missing = [PretermCategory(i).name for i in np.flatnonzero(counts == 0)]
            raise StratificationError(f"empty categories in training set: {missing}")
        weights = 1.0 / counts[cats]
        self.categories = cats
        self.counts = counts
        self.probabilities = weights / weights.sum()
        self._cdf = np.cumsum(self.probabilities)
        self._cdf[-1] = 1.0
        self.rng = np.random.default_rng(seed)

    def category_probabilities(self) -> np.ndarray:
        return np.bincount(self.categories, weights=self.probabilities, minlength=len(self.counts))

    def draw(self) -> int:
        return int(np.searchsorted(self._cdf, self.rng.random(), side="right"))

    def __iter__(self) -> Iterator[int]:
        while True:
            yield self.draw()
