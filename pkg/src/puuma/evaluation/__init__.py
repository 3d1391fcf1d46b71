from .baselines import CervicalLR, ConstantPredictor, DegenerateDesignError, fit_cervical_lr, fit_line, training_mean
from .inference import Prediction, default_stride, sliding_window_predict, valid_window_origins, validation_mse
from .metrics import Metrics, achievable_confusions, compute_metrics, confusion, rates_from_confusion
from .report import SuiteResult, emit_report, evaluate_suite, format_table, read_predictions_csv, scatter_svg

__all__ = [
    "CervicalLR", "ConstantPredictor", "DegenerateDesignError", "Metrics", "Prediction", "SuiteResult",
    "achievable_confusions", "compute_metrics", "confusion", "default_stride", "emit_report",
    "evaluate_suite", "fit_cervical_lr", "fit_line", "format_table", "rates_from_confusion",
    "read_predictions_csv", "scatter_svg", "sliding_window_predict", "training_mean",
    "valid_window_origins", "validation_mse",
]
