"""Model comparison table, CSV outputs and predicted-vs-true SVG scatters."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

from ..data.categories import BOUNDARIES, CATEGORY_NAMES
from .inference import Prediction
from .metrics import Metrics, compute_metrics

METRIC_COLUMNS = ["model", "mae", "mae_sd", "accuracy", "sensitivity", "specificity", "tp", "fn", "tn", "fp"]
PREDICTION_COLUMNS = ["case_id", "ga_true", "ga_pred", "category_true", "category_pred", "n_valid_patches"]
TABLE_HEADER = ("Model", "MAE (weeks)", "Accuracy", "Sensitivity", "Specificity")
DISPLAY_NAMES = {"puuma": "PUUMA", "umamba_global": "U-Mamba", "cervical_lr": "LR on cervical length",
                 "unet": "U-Net"}
CATEGORY_COLOURS = {"EPT": "#d62728", "VPT": "#ff7f0e", "LPT": "#2ca02c", "Term": "#1f77b4"}


@dataclass
class SuiteResult:
    predictions: dict[str, list[Prediction]]
    metrics: dict[str, Metrics]

    def table(self) -> str:
        return format_table(self.metrics)


def evaluate_suite(predictors: dict, test_cases) -> SuiteResult:
    """Run every predictor (callable: case -> Prediction) on the same test cases."""
    cases = sorted(test_cases, key=lambda c: c.id)
    if "cervical_lr" in predictors:
        missing = [c.id for c in cases if c.cervical_length_mm is None]
        if missing:
            raise ValueError(f"test cases without cervical length: {missing}")
    predictions = {name: [fn(c) for c in cases] for name, fn in predictors.items()}
    metrics = {name: compute_metrics(p) for name, p in predictions.items()}
    return SuiteResult(predictions, metrics)


def _fmt(v: float) -> str:
    return "nan" if isinstance(v, float) and math.isnan(v) else f"{v:.2f}"


def format_table(metrics: dict[str, Metrics]) -> str:
    rows = [TABLE_HEADER]
    for name, m in metrics.items():
        rows.append((DISPLAY_NAMES.get(name, name), f"{m.mae_weeks:.2f} ± {m.mae_sd_weeks:.2f}",
                     _fmt(m.accuracy), _fmt(m.sensitivity), _fmt(m.specificity)))
    widths = [max(len(r[i]) for r in rows) for i in range(len(TABLE_HEADER))]
    lines = [" | ".join(cell.ljust(w) for cell, w in zip(r, widths)).rstrip() for r in rows]
    lines.insert(1, "-+-".join("-" * w for w in widths))
    return "\n".join(lines)


def _num(v) -> str:
    return f"{v:.6f}"


def write_metrics_csv(metrics: dict[str, Metrics], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(METRIC_COLUMNS)
        for name, m in metrics.items():
            w.writerow([name, _num(m.mae_weeks), _num(m.mae_sd_weeks), _num(m.accuracy), _num(m.sensitivity),
                        _num(m.specificity), m.tp, m.fn, m.tn, m.fp])


def write_predictions_csv(preds: list[Prediction], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PREDICTION_COLUMNS)
        for p in preds:
            w.writerow([p.case_id, _num(p.ga_true_weeks), _num(p.ga_pred_weeks), p.category_true.name,
                        p.category_pred.name, p.n_valid_patches])


def read_predictions_csv(path) -> list[Prediction]:
    with open(path, newline="") as fh:
        return [Prediction(r["case_id"], float(r["ga_true"]), float(r["ga_pred"]), int(r["n_valid_patches"]))
                for r in csv.DictReader(fh)]


def scatter_svg(preds: list[Prediction], title: str, lo: float = 20.0, hi: float = 44.0, size: int = 420) -> str:
    """Predicted vs true GA: dashed identity, dotted category guides, points coloured by true category."""
    margin = 50
    span = size - 2 * margin

    def sx(v):
        return margin + (min(max(v, lo), hi) - lo) / (hi - lo) * span

    def sy(v):
        return size - margin - (min(max(v, lo), hi) - lo) / (hi - lo) * span

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
           f'viewBox="0 0 {size} {size}">',
           f'<title>{title}</title>',
           f'<rect x="{margin}" y="{margin}" width="{span}" height="{span}" fill="none" stroke="#000"/>',
           f'<line class="identity" x1="{sx(lo):.2f}" y1="{sy(lo):.2f}" x2="{sx(hi):.2f}" y2="{sy(hi):.2f}" '
           f'stroke="#555" stroke-dasharray="6,4"/>']
    for week, name in zip(BOUNDARIES, CATEGORY_NAMES[1:]):
        out.append(f'<line class="guide" data-week="{week:g}" x1="{sx(week):.2f}" y1="{sy(lo):.2f}" '
                   f'x2="{sx(week):.2f}" y2="{sy(hi):.2f}" stroke="{CATEGORY_COLOURS[name]}" '
                   f'stroke-dasharray="2,3"/>')
    for p in preds:
        colour = CATEGORY_COLOURS[p.category_true.name]
        out.append(f'<circle class="point" data-case="{p.case_id}" cx="{sx(p.ga_true_weeks):.2f}" '
                   f'cy="{sy(p.ga_pred_weeks):.2f}" r="4" fill="{colour}"/>')
    out.append(f'<text x="{size / 2:.0f}" y="{size - 12}" text-anchor="middle" font-size="12">'
               f'True GA at birth (weeks)</text>')
    out.append(f'<text x="14" y="{size / 2:.0f}" text-anchor="middle" font-size="12" '
               f'transform="rotate(-90 14 {size / 2:.0f})">Predicted GA at birth (weeks)</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_report(predictions: dict[str, list[Prediction]], out_dir) -> list[Path]:
    """Write metrics.csv plus per-model prediction CSVs and scatter SVGs."""
    for name in predictions:
        if not name or not name.strip():
            raise ValueError("model name must be non-empty")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    metrics = {name: compute_metrics(p) for name, p in predictions.items()}
    write_metrics_csv(metrics, out / "metrics.csv")
    written.append(out / "metrics.csv")
    for name, preds in predictions.items():
        write_predictions_csv(preds, out / f"predictions_{name}.csv")
        (out / f"scatter_{name}.svg").write_text(scatter_svg(preds, DISPLAY_NAMES.get(name, name)))
        written += [out / f"predictions_{name}.csv", out / f"scatter_{name}.svg"]
    return written
