"""Synthetic whole-uterus phantoms standing in for the clinical cohort.

Each phantom is an ellipsoidal uterus holding a lobular placenta attached to
its wall. Placental T2* follows a linear signal model in GA at birth (lower
for earlier deliveries) and GA at scan; multi-echo magnitudes are simulated
from the ground-truth map and refitted, so every case passes through the
relaxometry fit.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .categories import PretermCategory, categorize
from .relaxometry import fit_t2star

# GA-at-birth sampling ranges (weeks) per category
BIRTH_RANGES = {
    PretermCategory.EPT: (23.0, 28.0),
    PretermCategory.VPT: (28.0, 32.0),
    PretermCategory.LPT: (32.0, 37.0),
    PretermCategory.Term: (37.0, 42.0),
}
PAPER_IMBALANCE = (20, 30, 60, 290)


@dataclass(frozen=True)
class PhantomSpec:
    volume_shape: tuple[int, int, int] = (48, 48, 24)
    uterus_radius_frac: tuple[float, float] = (0.38, 0.46)
    placenta_radius_frac: tuple[float, float] = (0.22, 0.34)
    placenta_thickness: float = 0.45
    lobularity: float = 0.35
    # placental mean T2* = base + per_birth_week * (ga_birth - 37) + per_scan_week * (ga_scan - 28)
    t2_base_ms: float = 90.0
    t2_per_birth_week: float = 4.0
    t2_per_scan_week: float = -1.0
    texture_ms: float = 6.0
    fluid_t2_ms: float = 240.0
    tissue_t2_ms: float = 35.0
    s0: float = 1000.0
    noise_sigma: float = 4.0
    echo_times: tuple[float, ...] = (13.0, 55.0, 97.0, 139.0, 180.0)

    def __post_init__(self):
        object.__setattr__(self, "volume_shape", tuple(int(v) for v in self.volume_shape))
        object.__setattr__(self, "echo_times", tuple(float(v) for v in self.echo_times))
        for name in ("uterus_radius_frac", "placenta_radius_frac"):
            object.__setattr__(self, name, tuple(float(v) for v in getattr(self, name)))

    def validate(self) -> None:
        te = np.asarray(self.echo_times)
        if te.size < 2 or np.any(np.diff(te) <= 0):
            raise ValueError("echo_times must be strictly increasing with at least 2 entries")
        if len(self.volume_shape) != 3 or min(self.volume_shape) < 8:
            raise ValueError(f"volume_shape must be 3-D with extents >= 8, got {self.volume_shape}")
        if self.noise_sigma < 0 or self.s0 <= 0:
            raise ValueError("noise_sigma must be >= 0 and s0 > 0")

    def to_dict(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in dataclasses.asdict(self).items()}

    @classmethod
    def from_dict(cls, d: dict) -> "PhantomSpec":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown phantom keys: {sorted(unknown)}")
        return cls(**d)

    def placental_mean_t2(self, ga_scan: float, ga_birth: float) -> float:
        t2 = (self.t2_base_ms + self.t2_per_birth_week * (ga_birth - 37.0)
              + self.t2_per_scan_week * (ga_scan - 28.0))
        return float(np.clip(t2, 15.0, 280.0))


@dataclass
class Case:
    id: str
    ga_scan_weeks: float
    ga_birth_weeks: float
    cervical_length_mm: float | None
    t2star: np.ndarray
    placenta_mask: np.ndarray
    echo_times: tuple[float, ...] = ()
    seed: int = 0
    echoes: np.ndarray | None = field(default=None, repr=False)
    qc_flags: np.ndarray | None = field(default=None, repr=False)

    @property
    def category(self) -> PretermCategory:
        return categorize(self.ga_birth_weeks)

    def validate(self) -> None:
        if not 15.0 <= self.ga_scan_weeks < 37.0:
            raise ValueError(f"{self.id}: GA at scan {self.ga_scan_weeks} outside [15, 37)")
        if self.ga_birth_weeks < self.ga_scan_weeks:
            raise ValueError(f"{self.id}: GA at birth precedes GA at scan")
        if self.t2star.shape != self.placenta_mask.shape:
            raise ValueError(f"{self.id}: mask shape differs from T2* shape")
        if not self.placenta_mask.any():
            raise ValueError(f"{self.id}: empty placenta mask")


def _smooth_noise(rng: np.random.Generator, shape, sigma: float) -> np.ndarray:
    field_ = ndimage.gaussian_filter(rng.standard_normal(shape), sigma, mode="wrap")
    return field_ / (field_.std() + 1e-12)


def _grid(shape) -> np.ndarray:
    return np.stack(np.meshgrid(*[np.arange(n) + 0.5 for n in shape], indexing="ij"))


def _placenta_mask(rng, spec: PhantomSpec, uterus: np.ndarray, center, radii) -> np.ndarray:
    shape = spec.volume_shape
    grid = _grid(shape)
    # attach the placenta to a random point of the uterine wall
    direction = rng.standard_normal(3)
    direction /= np.linalg.norm(direction)
    anchor = center + direction * radii * 0.75
    base = rng.uniform(*spec.placenta_radius_frac) * np.asarray(shape, float)
    lobes = _smooth_noise(rng, shape, 2.5)
    for _ in range(8):
        rel = (grid - anchor[:, None, None, None]) / base[:, None, None, None]
        # flatten along the wall normal
        along = np.tensordot(direction, rel, axes=1)
        perp2 = (rel * rel).sum(axis=0) - along ** 2
        dist2 = perp2 + (along / spec.placenta_thickness) ** 2
        mask = ((1.0 - dist2) + spec.lobularity * lobes * 0.5 > 0) & uterus
        frac = mask.mean()
        if 0.03 <= frac <= 0.2:
            return mask
        base = base * (1.15 if frac < 0.03 else 0.87)
    return mask


def generate_phantom(spec: PhantomSpec, seed: int, ga_scan: float, ga_birth: float,
                     case_id: str | None = None) -> Case:
    """Deterministic phantom for (spec, seed, ga_scan, ga_birth), including raw echoes."""
    spec.validate()
    if not 15.0 <= ga_scan < 37.0 or ga_birth < ga_scan:
        raise ValueError(f"invalid gestational ages scan={ga_scan} birth={ga_birth}")
    rng = np.random.default_rng(seed)
    shape = spec.volume_shape
    dims = np.asarray(shape, float)
    grid = _grid(shape)
    center = dims / 2 + rng.uniform(-0.05, 0.05, 3) * dims
    radii = rng.uniform(*spec.uterus_radius_frac, size=3) * dims
    uterus = (((grid - center[:, None, None, None]) / radii[:, None, None, None]) ** 2).sum(axis=0) < 1.0
    placenta = _placenta_mask(rng, spec, uterus, center, radii)

    mean_t2 = spec.placental_mean_t2(ga_scan, ga_birth)
    texture = _smooth_noise(rng, shape, 1.5) * spec.texture_ms
    truth = np.full(shape, spec.tissue_t2_ms) + 3.0 * _smooth_noise(rng, shape, 3.0)
    truth[uterus] = spec.fluid_t2_ms + 10.0 * _smooth_noise(rng, shape, 3.0)[uterus]
    truth[placenta] = mean_t2 + texture[placenta]
    truth = np.clip(truth, 5.0, 400.0)

    proton = spec.s0 * (1.0 + 0.05 * _smooth_noise(rng, shape, 4.0))
    te = np.asarray(spec.echo_times)
    echoes = proton[None] * np.exp(-te[:, None, None, None] / truth[None])
    if spec.noise_sigma > 0:
        re = echoes + rng.normal(0.0, spec.noise_sigma, echoes.shape)
        im = rng.normal(0.0, spec.noise_sigma, echoes.shape)
        echoes = np.sqrt(re ** 2 + im ** 2)
    echoes = echoes.astype(np.float32)
    t2star, flags = fit_t2star(np.moveaxis(echoes, 0, -1), te)

    cl = 8.0 + 0.9 * ga_birth + rng.normal(0.0, 2.0)
    case = Case(
        id=case_id or f"case_{seed}",
        ga_scan_weeks=float(ga_scan),
        ga_birth_weeks=float(ga_birth),
        cervical_length_mm=float(np.clip(cl, 5.0, 55.0)),
        t2star=t2star.astype(np.float32),
        placenta_mask=placenta.astype(np.uint8),
        echo_times=spec.echo_times,
        seed=int(seed),
        echoes=echoes,
        qc_flags=flags,
    )
    case.validate()
    return case


def category_counts(n_cases: int, mix=PAPER_IMBALANCE) -> list[int]:
    """Split ``n_cases`` over the four categories proportionally to ``mix`` (largest remainder)."""
    mix = np.asarray(mix, dtype=np.float64)
    if mix.shape != (4,) or np.any(mix < 0) or mix.sum() <= 0:
        raise ValueError(f"category mix must be 4 non-negative weights, got {mix.tolist()}")
    quota = n_cases * mix / mix.sum()
    counts = np.floor(quota).astype(int)
    order = np.argsort(-(quota - counts), kind="stable")
    for i in order[: n_cases - counts.sum()]:
        counts[i] += 1
    return counts.tolist()


def sample_gestational_ages(rng: np.random.Generator, category: PretermCategory) -> tuple[float, float]:
    lo, hi = BIRTH_RANGES[category]
    ga_birth = round(float(rng.uniform(lo, hi - 0.01)), 2)
    scan_hi = min(ga_birth, 36.9)
    ga_scan = round(float(rng.uniform(16.0, scan_hi)), 2)
    return min(ga_scan, ga_birth), ga_birth


def generate_cohort(n_cases: int, spec: PhantomSpec | None = None, seed: int = 0,
                    mix=PAPER_IMBALANCE, keep_echoes: bool = False) -> list[Case]:
    """Build ``n_cases`` phantoms with category counts proportional to ``mix``."""
    spec = spec or PhantomSpec()
    counts = category_counts(n_cases, mix)
    rng = np.random.default_rng(seed)
    plan = []
    for cat, count in zip(PretermCategory, counts):
        for _ in range(count):
            plan.append((cat, *sample_gestational_ages(rng, cat), int(rng.integers(2 ** 31))))
    order = rng.permutation(len(plan))
    cases = []
    for idx, j in enumerate(order):
        cat, ga_scan, ga_birth, case_seed = plan[j]
        case = generate_phantom(spec, case_seed, ga_scan, ga_birth, case_id=f"case_{idx:04d}")
        if categorize(case.ga_birth_weeks) != cat:
            raise AssertionError("sampled GA fell outside its category")
        if not keep_echoes:
            case.echoes = None
        cases.append(case)
    return cases
