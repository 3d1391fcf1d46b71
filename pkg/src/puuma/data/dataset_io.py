"""On-disk dataset layout.

    <root>/cases/<id>/meta.json    id, GAs, cervical length, category, dims, echo times, seed
    <root>/cases/<id>/echoes.raw   little-endian f32, echo-major (E, D, H, W)
    <root>/cases/<id>/t2star.raw   little-endian f32 (D, H, W)
    <root>/cases/<id>/mask.raw     u8 (D, H, W)
    <root>/splits.json             {"train": [...], "val": [...], "test": [...]}
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .phantom import Case

SPLITS = ("train", "val", "test")


def dump_json(obj, path: Path) -> None:
    path.write_text(json.dumps(obj, sort_keys=True, indent=2) + "\n")


def write_case(case: Case, root) -> Path:
    d = Path(root) / "cases" / case.id
    d.mkdir(parents=True, exist_ok=True)
    meta = {
        "id": case.id,
        "ga_scan_weeks": case.ga_scan_weeks,
        "ga_birth_weeks": case.ga_birth_weeks,
        "cervical_length_mm": case.cervical_length_mm,
        "category": case.category.name,
        "dims": list(case.t2star.shape),
        "echo_times": list(case.echo_times),
        "seed": case.seed,
    }
    dump_json(meta, d / "meta.json")
    if case.echoes is not None:
        (d / "echoes.raw").write_bytes(np.ascontiguousarray(case.echoes, dtype="<f4").tobytes())
    (d / "t2star.raw").write_bytes(np.ascontiguousarray(case.t2star, dtype="<f4").tobytes())
    (d / "mask.raw").write_bytes(np.ascontiguousarray(case.placenta_mask, dtype=np.uint8).tobytes())
    return d


def read_case(case_dir, load_echoes: bool = False) -> Case:
    d = Path(case_dir)
    meta = json.loads((d / "meta.json").read_text())
    dims = tuple(meta["dims"])
    t2 = np.fromfile(d / "t2star.raw", dtype="<f4").astype(np.float32).reshape(dims)
    mask = np.fromfile(d / "mask.raw", dtype=np.uint8).reshape(dims)
    echoes = None
    if load_echoes and (d / "echoes.raw").exists():
        echoes = np.fromfile(d / "echoes.raw", dtype="<f4").astype(np.float32)
        echoes = echoes.reshape((len(meta["echo_times"]),) + dims)
    return Case(id=meta["id"], ga_scan_weeks=meta["ga_scan_weeks"], ga_birth_weeks=meta["ga_birth_weeks"],
                cervical_length_mm=meta["cervical_length_mm"], t2star=t2, placenta_mask=mask,
                echo_times=tuple(meta["echo_times"]), seed=meta["seed"], echoes=echoes)


def write_dataset(root, cases, splits: dict[str, list[str]]) -> Path:
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    for case in cases:
        write_case(case, root)
    dump_json({k: list(splits[k]) for k in SPLITS}, root / "splits.json")
    return root


def read_splits(root) -> dict[str, list[str]]:
    path = Path(root) / "splits.json"
    if not path.exists():
        raise FileNotFoundError(f"no splits.json under {root}")
    return json.loads(path.read_text())


def load_split(root, split: str, load_echoes: bool = False) -> list[Case]:
    ids = read_splits(root)[split]
    return [read_case(Path(root) / "cases" / cid, load_echoes) for cid in ids]


def load_dataset(root) -> dict[str, list[Case]]:
    return {s: load_split(root, s) for s in SPLITS}
