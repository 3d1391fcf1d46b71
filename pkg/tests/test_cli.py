import csv
import json
from pathlib import Path

import pytest

from puuma.cli import COMMANDS, main
from puuma.config import CONFIG_KEYS


def _write_config(d: Path, **sections) -> Path:
    cfg = {"dataset": {"root": "data", "n_cases": 40, "seed": 7},
           "model": {"variant": "puuma", "preset": "desk", "seed": 0},
           "train": {"seed": 0, "total_steps": 8, "out_dir": "runs", "val_stride": [8, 8, 8],
                     "checkpoint_every": 4, "fine_tune_start_step": 6, "fine_tune_checkpoint_every": 1},
           "eval": {"out_dir": "report", "models": ["puuma", "cervical_lr"], "stride": [8, 8, 8]}}
    for k, v in sections.items():
        cfg[k].update(v)
    d.mkdir(parents=True, exist_ok=True)
    path = d / "cfg.json"
    path.write_text(json.dumps(cfg))
    return path


def _tree(root: Path) -> dict:
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    cfg = _write_config(tmp_path_factory.mktemp("shared"))
    assert main(["gen-data", "--config", str(cfg)]) == 0
    return cfg


def test_help_exits_zero(capsys):
    assert main(["--help"]) == 0
    for name in COMMANDS:
        assert main([name, "--help"]) == 0
        out = capsys.readouterr().out
        for key in ("dataset.n_cases", "model.variant", "train.seed", "eval.stride"):
            assert key in out and key in CONFIG_KEYS


def test_bad_usage_exits_one(tmp_path, capsys):
    assert main([]) == 1
    assert main(["train"]) == 1
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"dataset": {"root": "d", "n_cases": 4, "seed": 1, "colour": "red"},
                               "model": {"variant": "puuma", "preset": "desk", "seed": 0},
                               "train": {"seed": 0}, "eval": {}}))
    assert main(["gen-data", "--config", str(bad)]) == 1
    assert "colour" in capsys.readouterr().err


def test_missing_seed_is_config_error(tmp_path):
    cfg = _write_config(tmp_path)
    data = json.loads(cfg.read_text())
    del data["model"]["seed"]
    cfg.write_text(json.dumps(data))
    assert main(["gen-data", "--config", str(cfg)]) == 1


def test_gen_data_is_byte_identical(tmp_path, capsys):
    a = _write_config(tmp_path / "a")
    b = _write_config(tmp_path / "b")
    assert main(["gen-data", "--config", str(a)]) == 0
    out = capsys.readouterr().out
    assert "GA at scan" in out and "GA at birth" in out and "EPT" in out
    assert main(["gen-data", "--config", str(b)]) == 0
    ta, tb = _tree(tmp_path / "a" / "data"), _tree(tmp_path / "b" / "data")
    assert ta == tb and "splits.json" in ta


def test_gen_data_mix_counts(tmp_path):
    cfg = _write_config(tmp_path, dataset={"n_cases": 40, "mix": "paper-imbalance"})
    assert main(["gen-data", "--config", str(cfg)]) == 0
    splits = json.loads((tmp_path / "data" / "splits.json").read_text())
    assert sum(len(v) for v in splits.values()) == 40
    # 20:30:60:290 of 40 by largest remainder
    cats = []
    for cid in sum(splits.values(), []):
        meta = json.loads((tmp_path / "data" / "cases" / cid / "meta.json").read_text())
        cats.append(meta["ga_birth_weeks"])
    assert sum(g < 28 for g in cats) == 2 and sum(g >= 37 for g in cats) == 29


def test_gen_data_refuses_non_empty_dir(tmp_path):
    cfg = _write_config(tmp_path)
    assert main(["gen-data", "--config", str(cfg)]) == 0
    assert main(["gen-data", "--config", str(cfg)]) == 1
    assert main(["gen-data", "--config", str(cfg), "--force"]) == 0


def test_too_few_cases_is_stratification_error(tmp_path, capsys):
    cfg = _write_config(tmp_path, dataset={"n_cases": 2})
    assert main(["gen-data", "--config", str(cfg)]) == 1
    assert "categor" in capsys.readouterr().err
    assert not (tmp_path / "data").exists()


def test_train_requires_dataset(tmp_path, capsys):
    cfg = _write_config(tmp_path)
    assert main(["train", "--config", str(cfg)]) == 1
    assert "gen-data" in capsys.readouterr().err


def test_unet_trains_without_ssm(dataset, tmp_path, capsys):
    assert main(["train", "--config", str(dataset), "--variant", "unet", "--out", str(tmp_path)]) == 0
    assert "0 SSM blocks" in capsys.readouterr().out
    assert (tmp_path / "unet" / "best.pumc").exists()


def test_sixty_steps_make_checkpoints(tmp_path):
    cfg = _write_config(tmp_path, train={"total_steps": 60, "checkpoint_every": 50, "fine_tune_start_step": 48,
                                         "fine_tune_checkpoint_every": 5})
    assert main(["gen-data", "--config", str(cfg)]) == 0
    assert main(["train", "--config", str(cfg)]) == 0
    run = tmp_path / "runs" / "puuma"
    assert len(list(run.glob("ckpt_*.pumc"))) >= 2
    rows = list(csv.DictReader(open(run / "history.csv")))
    assert len(rows) == 61 and all(r["total_loss"] != "nan" for r in rows)


def test_cervical_lr_needs_no_checkpoint(dataset, tmp_path, capsys):
    assert main(["evaluate", "--config", str(dataset), "--variant", "cervical_lr", "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "MAE (weeks)" in out and "Sensitivity" in out
    rows = list(csv.DictReader(open(tmp_path / "metrics.csv")))
    assert [r["model"] for r in rows] == ["cervical_lr"]


def test_missing_checkpoint_names_variant(dataset, capsys):
    assert main(["evaluate", "--config", str(dataset), "--variant", "umamba_global"]) == 1
    assert "umamba_global" in capsys.readouterr().err


def test_cervical_lr_cannot_be_trained(dataset):
    assert main(["train", "--config", str(dataset), "--variant", "cervical_lr"]) == 1


def _pipeline(d: Path) -> Path:
    cfg = _write_config(d)
    for cmd in ("gen-data", "train", "evaluate"):
        assert main([cmd, "--config", str(cfg)]) == 0
    return d


def test_pipeline_rerun_is_byte_identical(tmp_path, capsys):
    a, b = _pipeline(tmp_path / "a"), _pipeline(tmp_path / "b")
    for rel in ("data", "runs", "report"):
        assert _tree(a / rel) == _tree(b / rel)
    rows = list(csv.DictReader(open(a / "report" / "metrics.csv")))
    assert [r["model"] for r in rows] == ["puuma", "cervical_lr"]
    # report rebuilds the same metrics from the prediction CSVs
    before = (a / "report" / "metrics.csv").read_bytes()
    assert main(["report", "--config", str(a / "cfg.json")]) == 0
    assert (a / "report" / "metrics.csv").read_bytes() == before


def test_fit_t2star_reproduces_maps(dataset):
    root = dataset.parent / "data"
    before = _tree(root)
    assert main(["fit-t2star", "--config", str(dataset)]) == 0
    assert _tree(root) == before
