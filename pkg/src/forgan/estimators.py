"""scikit-learn compatible front ends for the ForGAN and G-regression trainers.

``X`` is a matrix of condition windows (one row per window, oldest value first;
only the last ``condition_len`` columns are used) and ``y`` the value that
follows each window.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_conditions, check_targets
from .data import AffineScaler, WindowedDataset
from .model import ForGanModel, HyperParams, TrainConfig, train_forgan, train_gregression


class _ForecasterBase(RegressorMixin, BaseEstimator):
    _kind = ""

    def __init__(self, cell_type="GRU", gen_hidden=8, dis_hidden=64, noise_dim=32,
                 condition_len=24, d_iters=2, n_steps=1000, batch_size=128,
                 learning_rate=1e-3, discriminator_learning_rate=None, beta1=0.5,
                 instance_noise=0.0, validation_every=100, validation_samples=10,
                 random_state=0):
        self.cell_type = cell_type
        self.gen_hidden = gen_hidden
        self.dis_hidden = dis_hidden
        self.noise_dim = noise_dim
        self.condition_len = condition_len
        self.d_iters = d_iters
        self.n_steps = n_steps
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.discriminator_learning_rate = discriminator_learning_rate
        self.beta1 = beta1
        self.instance_noise = instance_noise
        self.validation_every = validation_every
        self.validation_samples = validation_samples
        self.random_state = random_state

    @property
    def hyper(self) -> HyperParams:
        return HyperParams(self.cell_type, self.gen_hidden, self.dis_hidden, self.noise_dim,
                           self.condition_len, self.d_iters)

    def _train_config(self) -> TrainConfig:
        return TrainConfig(total_generator_steps=self.n_steps, batch_size=self.batch_size,
                           seed=0 if self.random_state is None else int(self.random_state),
                           learning_rate=self.learning_rate,
                           discriminator_learning_rate=self.discriminator_learning_rate,
                           beta1=self.beta1,
                           instance_noise=self.instance_noise,
                           validation_every=self.validation_every,
                           validation_samples=self.validation_samples)

    def _dataset(self, X, y, X_val, y_val) -> WindowedDataset:
        hyper = self.hyper
        X = check_conditions(X, hyper.condition_len)
        y = check_targets(y, X.shape[0])
        if X_val is None:
            Xv, yv = np.empty((0, X.shape[1])), np.empty(0)
        else:
            Xv = check_conditions(X_val, hyper.condition_len)
            yv = check_targets(y_val, Xv.shape[0])
        scaler = AffineScaler().fit(y)
        return WindowedDataset(np.vstack([X, Xv]), np.concatenate([y, yv]),
                               n_train=len(y), n_val=len(yv), scaler=scaler)

    def fit(self, X, y, X_val=None, y_val=None):
        """Train on (X, y); an optional validation set drives checkpoint selection."""
        dataset = self._dataset(X, y, X_val, y_val)
        trainer = train_forgan if self._kind == "forgan" else train_gregression
        self.model_, self.training_log_ = trainer(dataset, self.hyper, self._train_config())
        self.n_features_in_ = np.asarray(X).shape[1] if np.ndim(X) == 2 else self.condition_len
        return self

    @classmethod
    def from_model(cls, model: ForGanModel):
        """Wrap an already trained (e.g. loaded) model without retraining."""
        h = model.hyper
        est = cls(h.cell_type, h.gen_hidden, h.dis_hidden, h.noise_dim, h.condition_len,
                  h.d_iters)
        est.model_ = model
        return est

    def sample_forecasts(self, X, k, rng):
        check_is_fitted(self, "model_")
        return self.model_.sample_forecasts(X, k, rng)


class ForGANForecaster(_ForecasterBase):
    """Probabilistic one-step-ahead forecaster trained adversarially.

    Parameters mirror the six searchable hyperparameters (cell type, generator and
    discriminator widths, noise size, window length, discriminator steps per
    generator step) plus the training budget.

    ``predict`` returns one sampled forecast per window; use :meth:`sample` for
    the full predictive distribution.
    """

    _kind = "forgan"

    def sample(self, X, n_samples: int = 100, random_state=None) -> np.ndarray:
        """[n_windows, n_samples] draws from the learned conditional distribution."""
        check_is_fitted(self, "model_")
        return self.model_.sample_forecasts(X, n_samples, np.random.default_rng(random_state))

    def predict(self, X, random_state=None) -> np.ndarray:
        return self.sample(X, 1, random_state)[:, 0]

    def predict_median(self, X, n_samples: int = 100, random_state=None) -> np.ndarray:
        return np.median(self.sample(X, n_samples, random_state), axis=1)


class GRegressionForecaster(_ForecasterBase):
    """Mean-regression baseline: the generator architecture trained on RMSE.

    The noise input is fed as zeros, so predictions are deterministic.
    ``d_iters`` and ``dis_hidden`` are accepted for parity but unused.
    """

    _kind = "g-regression"

    def predict(self, X) -> np.ndarray:
        check_is_fitted(self, "model_")
        return self.model_.predict(X)
