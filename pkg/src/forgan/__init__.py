"""One-step-ahead probabilistic forecasting with a conditional GAN."""
__version__ = "0.1.0"

from .data import (AffineScaler, LorenzParams, MackeyGlassParams, WindowedDataset,
                   build_lorenz_dataset, build_toy_bimodal, ingest_csv_series,
                   integrate_lorenz, integrate_mackey_glass, window_series)
from .estimators import ForGANForecaster, GRegressionForecaster
from .metrics import (EvaluationReport, evaluate_deterministic, evaluate_probabilistic, kld,
                      knuth_bins, mae, mape, rmse)
from .model import (PRESETS, ForGanModel, HyperParams, TrainConfig, load_model, save_model,
                    train_forgan, train_gregression)

__all__ = [
    "AffineScaler",
    "EvaluationReport",
    "ForGANForecaster",
    "ForGanModel",
    "GRegressionForecaster",
    "HyperParams",
    "LorenzParams",
    "MackeyGlassParams",
    "PRESETS",
    "TrainConfig",
    "WindowedDataset",
    "build_lorenz_dataset",
    "build_toy_bimodal",
    "evaluate_deterministic",
    "evaluate_probabilistic",
    "ingest_csv_series",
    "integrate_lorenz",
    "integrate_mackey_glass",
    "kld",
    "knuth_bins",
    "load_model",
    "mae",
    "mape",
    "rmse",
    "save_model",
    "train_forgan",
    "train_gregression",
    "window_series",
]
