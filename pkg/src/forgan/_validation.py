"""Input checks shared by the model functions and the estimator wrappers."""
import numpy as np
from sklearn.utils.validation import check_array

from .exceptions import ShapeError


def check_conditions(X, condition_len: int) -> np.ndarray:
    """Coerce ``X`` to a float64 [n, >=C] matrix and keep its last ``condition_len`` columns."""
    X = check_array(X, dtype=np.float64, ensure_2d=False, ensure_all_finite=True)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    if X.shape[1] < condition_len:
        raise ShapeError(
            f"condition windows have {X.shape[1]} steps but the model needs {condition_len}"
        )
    return X[:, X.shape[1] - condition_len:]


def check_targets(y, n: int) -> np.ndarray:
    y = check_array(y, dtype=np.float64, ensure_2d=False).ravel()
    if y.shape[0] != n:
        raise ShapeError(f"got {y.shape[0]} targets for {n} condition windows")
    return y


def check_noise(noise, noise_dim: int, rows: int) -> np.ndarray:
    z = np.asarray(noise, dtype=np.float64)
    if z.ndim == 1:
        z = z.reshape(1, -1)
    if z.shape != (rows, noise_dim):
        raise ShapeError(f"noise must have shape ({rows}, {noise_dim}), got {z.shape}")
    return z
