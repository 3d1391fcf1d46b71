"""Command-line pipeline: gen-data, fit-t2star, train, evaluate, report.

Exit codes: 0 success, 1 usage or configuration error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import shutil
import sys
from pathlib import Path

import numpy as np

from .config import CONFIG_KEYS, PREDICTORS, RunConfig, load_config
from .data.categories import CATEGORY_NAMES, PretermCategory
from .data.dataset_io import load_split, read_case, read_splits, write_dataset
from .data.patches import NoValidPatchError
from .data.phantom import category_counts, generate_cohort
from .data.relaxometry import fit_t2star
from .data.splits import StratificationError, stratified_split
from .evaluation import (emit_report, evaluate_suite, fit_cervical_lr, format_table, read_predictions_csv,
                         sliding_window_predict)
from .evaluation.metrics import compute_metrics
from .nets.checkpoint import load_checkpoint, save_checkpoint
from .nets.models import VARIANTS, ConfigError, build_model
from .training import NumericalError, TrainingAborted, select_best, train, write_history

log = logging.getLogger("puuma")

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2


class UsageError(Exception):
    pass


def _resolve(cfg_path: Path, p: str) -> Path:
    path = Path(p)
    return path if path.is_absolute() else cfg_path.parent / path


def _histogram(values, lo: float, hi: float, width: float = 1.0, bar: int = 40) -> list[str]:
    edges = np.arange(lo, hi + width, width)
    counts, _ = np.histogram(values, bins=edges)
    top = max(counts.max(), 1)
    return [f"  {edges[i]:5.1f}-{edges[i + 1]:5.1f} | {'#' * int(round(bar * c / top))} {c}"
            for i, c in enumerate(counts) if c]


def cmd_gen_data(cfg: RunConfig, cfg_path: Path, args) -> int:
    ds = cfg.dataset
    seed = args.seed if args.seed is not None else ds.seed
    root = Path(args.out) if args.out else _resolve(cfg_path, ds.root)
    if root.exists() and any(root.iterdir()):
        if not args.force:
            raise UsageError(f"{root} is not empty (use --force to overwrite)")
        shutil.rmtree(root)
    counts = category_counts(ds.n_cases, ds.mix)
    empty = [CATEGORY_NAMES[i] for i, c in enumerate(counts) if c == 0]
    if empty:
        raise StratificationError(f"n_cases={ds.n_cases} with mix {list(ds.mix)} leaves no cases in "
                                  f"required categories: {', '.join(empty)}")
    cases = generate_cohort(ds.n_cases, ds.phantom, seed=seed, mix=ds.mix, keep_echoes=True)
    train_c, val_c, test_c = stratified_split(cases, ds.ratios, seed=seed, method=ds.split_method,
                                               required=list(PretermCategory))
    splits = {"train": [c.id for c in train_c], "val": [c.id for c in val_c], "test": [c.id for c in test_c]}
    write_dataset(root, cases, splits)
    print(f"wrote {len(cases)} cases to {root}")
    print("category    total train   val  test")
    for cat in PretermCategory:
        row = [sum(1 for c in group if c.category == cat) for group in (cases, train_c, val_c, test_c)]
        print(f"{cat.name:<10}" + "".join(f"{v:>6}" for v in row))
    print("GA at scan (weeks):")
    print("\n".join(_histogram([c.ga_scan_weeks for c in cases], 15, 37)))
    print("GA at birth (weeks):")
    print("\n".join(_histogram([c.ga_birth_weeks for c in cases], 23, 42)))
    return EXIT_OK


def cmd_fit_t2star(cfg: RunConfig, cfg_path: Path, args) -> int:
    root = _resolve(cfg_path, cfg.dataset.root)
    out_root = Path(args.out) if args.out else root
    ids = sorted(sum(read_splits(root).values(), []))
    flagged = 0
    for cid in ids:
        case = read_case(root / "cases" / cid, load_echoes=True)
        if case.echoes is None:
            raise UsageError(f"case {cid} has no echoes.raw")
        t2, flags = fit_t2star(np.moveaxis(case.echoes, 0, -1), case.echo_times)
        flagged += int(flags.sum())
        dest = out_root / "cases" / cid
        dest.mkdir(parents=True, exist_ok=True)
        (dest / "t2star.raw").write_bytes(np.ascontiguousarray(t2, dtype="<f4").tobytes())
    print(f"fitted {len(ids)} cases; {flagged} voxels flagged with non-positive signal")
    return EXIT_OK


def _variants(cfg: RunConfig, args) -> list[str]:
    return [args.variant] if args.variant else [cfg.model.variant]


def cmd_train(cfg: RunConfig, cfg_path: Path, args) -> int:
    root = _resolve(cfg_path, cfg.dataset.root)
    if not (root / "splits.json").exists():
        raise UsageError(f"dataset not found at {root}; run gen-data first")
    train_cases, val_cases = load_split(root, "train"), load_split(root, "val")
    tcfg = cfg.train if args.seed is None else dataclasses.replace(cfg.train, seed=args.seed)
    out_root = Path(args.out) if args.out else _resolve(cfg_path, cfg.train_out_dir)
    status = EXIT_OK
    for variant in _variants(cfg, args):
        model = build_model(cfg.model.model_config(variant), cfg.model.seed)
        out = out_root / variant
        if out.exists() and args.force:
            shutil.rmtree(out)
        out.mkdir(parents=True, exist_ok=True)
        print(f"training {variant}: {model.num_parameters()} parameters, "
              f"{len(model.ssm_modules())} SSM blocks, {tcfg.total_steps} steps")
        try:
            result = train(model, train_cases, val_cases, tcfg, out_dir=out)
        except TrainingAborted as exc:
            write_history(exc.result.history, out / "history.csv")
            if exc.result.checkpoints:
                (out / "best.pumc").write_bytes(exc.result.checkpoints[-1].blob)
            print(f"{variant}: training aborted ({exc}); last good checkpoint kept", file=sys.stderr)
            status = EXIT_NUMERIC
            continue
        write_history(result.history, out / "history.csv")
        best, best_model = select_best(result.checkpoints)
        save_checkpoint(best_model, out / "best.pumc")
        print(f"{variant}: {len(result.checkpoints)} checkpoints, best step {best.step} "
              f"(val MSE {best.val_mse:.4f}), final loss {result.final_loss:.4f}")
        if not np.isfinite(result.final_loss):
            status = EXIT_NUMERIC
    return status


def cmd_evaluate(cfg: RunConfig, cfg_path: Path, args) -> int:
    root = _resolve(cfg_path, cfg.dataset.root)
    test_cases = load_split(root, "test")
    names = [args.variant] if args.variant else list(cfg.eval.models)
    runs = _resolve(cfg_path, cfg.train_out_dir)
    predictors = {}
    for name in names:
        if name == "cervical_lr":
            predictors[name] = fit_cervical_lr(load_split(root, "train"))
            continue
        ckpt = runs / name / "best.pumc"
        if not ckpt.exists():
            raise UsageError(f"missing checkpoint for variant {name}: {ckpt}")
        model = load_checkpoint(ckpt)
        predictors[name] = (lambda m: lambda case: sliding_window_predict(m, case, cfg.eval.stride))(model)
    suite = evaluate_suite(predictors, test_cases)
    out = Path(args.out) if args.out else _resolve(cfg_path, cfg.eval.out_dir)
    emit_report(suite.predictions, out)
    print(suite.table())
    return EXIT_OK


def cmd_report(cfg: RunConfig, cfg_path: Path, args) -> int:
    out = Path(args.out) if args.out else _resolve(cfg_path, cfg.eval.out_dir)
    names = [args.variant] if args.variant else list(cfg.eval.models)
    preds = {}
    for name in names:
        path = out / f"predictions_{name}.csv"
        if not path.exists():
            raise UsageError(f"no predictions for {name} at {path}; run evaluate first")
        preds[name] = read_predictions_csv(path)
    emit_report(preds, out)
    print(format_table({k: compute_metrics(v) for k, v in preds.items()}))
    return EXIT_OK


COMMANDS = {
    "gen-data": (cmd_gen_data, "generate the synthetic cohort, fit T2* maps and write splits.json"),
    "fit-t2star": (cmd_fit_t2star, "refit every case's T2* map from its raw echoes"),
    "train": (cmd_train, "train a variant, keep checkpoints and write best.pumc + history.csv"),
    "evaluate": (cmd_evaluate, "run predictors on the test split and write the comparison report"),
    "report": (cmd_report, "rebuild metrics.csv and scatter plots from prediction CSVs"),
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="run configuration (JSON)")
    common.add_argument("--seed", type=int, default=None, help="override the seed used by this command")
    common.add_argument("--out", default=None, help="override the output directory of this command")
    common.add_argument("--force", action="store_true", help="overwrite existing outputs")
    common.add_argument("--variant", choices=VARIANTS + ("cervical_lr",), default=None,
                        help="restrict the command to one model")
    common.add_argument("-v", "--verbose", action="store_true")
    parser = argparse.ArgumentParser(prog="puuma", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter, epilog=CONFIG_KEYS)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, text) in COMMANDS.items():
        sub.add_parser(name, parents=[common], help=text, description=text, epilog=CONFIG_KEYS,
                       formatter_class=argparse.RawDescriptionHelpFormatter)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0) and EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    if args.variant == "cervical_lr" and args.command == "train":
        print("error: cervical_lr is fitted during evaluate, not trained", file=sys.stderr)
        return EXIT_USAGE
    cfg_path = Path(args.config)
    try:
        cfg = load_config(cfg_path)
        return COMMANDS[args.command][0](cfg, cfg_path, args)
    except (NumericalError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (UsageError, ConfigError, StratificationError, NoValidPatchError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
