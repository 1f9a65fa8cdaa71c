"""Benchmark datasets: Lorenz clusters, Mackey-Glass, CSV series and a bimodal toy set.

Every builder returns a :class:`WindowedDataset`, i.e. aligned
(condition window, next value) pairs with a 50/10/40 train/validation/test
split and an affine scaler fitted on the training targets.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .exceptions import DataError

DATASET_FORMAT_VERSION = 1
SPLIT_FRACTIONS = (0.5, 0.1, 0.4)


# ---------------------------------------------------------------------------
# Scaling


class AffineScaler(TransformerMixin, BaseEstimator):
    """Min-max scaler mapping the fitted values onto [0, 1].

    A constant (or empty) fit set yields unit scale so that the map stays invertible.
    """

    def __init__(self, offset: float = 0.0, scale: float = 1.0):
        self.offset = offset
        self.scale = scale

    def fit(self, X, y=None):
        values = np.asarray(X, dtype=np.float64).ravel()
        if values.size == 0:
            self.offset, self.scale = 0.0, 1.0
            return self
        lo, hi = float(values.min()), float(values.max())
        self.offset = lo
        self.scale = hi - lo if hi > lo else 1.0
        return self

    def transform(self, X):
        return (np.asarray(X, dtype=np.float64) - self.offset) / self.scale

    def inverse_transform(self, X):
        return np.asarray(X, dtype=np.float64) * self.scale + self.offset

    def to_dict(self) -> dict:
        return {"offset": float(self.offset), "scale": float(self.scale)}

    @classmethod
    def from_dict(cls, d: dict) -> "AffineScaler":
        return cls(float(d["offset"]), float(d["scale"]))


# ---------------------------------------------------------------------------
# Windowed dataset container


def split_sizes(n: int) -> tuple[int, int, int]:
    """50% train, 10% validation, remainder (40% plus rounding leftovers) test."""
    n_train = int(math.floor(n * SPLIT_FRACTIONS[0]))
    n_val = int(math.floor(n * SPLIT_FRACTIONS[1]))
    return n_train, n_val, n - n_train - n_val


@dataclass
class WindowedDataset:
    conditions: np.ndarray
    targets: np.ndarray
    n_train: int
    n_val: int
    scaler: AffineScaler
    label: str = ""
    clusters: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.conditions = np.asarray(self.conditions, dtype=np.float64)
        self.targets = np.asarray(self.targets, dtype=np.float64)
        if self.conditions.ndim != 2 or len(self.conditions) != len(self.targets):
            raise DataError("conditions must be [n, C] and aligned with targets")
        if self.n_train + self.n_val > len(self.targets):
            raise DataError("split sizes exceed the number of windows")

    @classmethod
    def from_arrays(cls, conditions, targets, label="", clusters=None, meta=None):
        """Split chronologically 50/10/40 and fit the scaler on training targets."""
        targets = np.asarray(targets, dtype=np.float64)
        n_train, n_val, _ = split_sizes(len(targets))
        scaler = AffineScaler().fit(targets[:n_train])
        return cls(conditions, targets, n_train, n_val, scaler, label,
                   None if clusters is None else np.asarray(clusters, dtype=np.int64),
                   dict(meta or {}))

    def __len__(self) -> int:
        return len(self.targets)

    @property
    def condition_len(self) -> int:
        return self.conditions.shape[1]

    @property
    def n_test(self) -> int:
        return len(self) - self.n_train - self.n_val

    @property
    def train_idx(self) -> np.ndarray:
        return np.arange(0, self.n_train)

    @property
    def val_idx(self) -> np.ndarray:
        return np.arange(self.n_train, self.n_train + self.n_val)

    @property
    def test_idx(self) -> np.ndarray:
        return np.arange(self.n_train + self.n_val, len(self))

    def split(self, name: str):
        """Return ``(conditions, targets, clusters)`` for ``train``, ``val`` or ``test``."""
        idx = {"train": self.train_idx, "val": self.val_idx, "test": self.test_idx}[name]
        clusters = None if self.clusters is None else self.clusters[idx]
        return self.conditions[idx], self.targets[idx], clusters

    # -- files -----------------------------------------------------------
    def save(self, directory) -> tuple[Path, Path]:
        """Write ``dataset.csv`` (one row per window) and ``dataset.json`` metadata."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        csv_path = directory / "dataset.csv"
        meta_path = directory / "dataset.json"
        header = [f"c{i}" for i in range(self.condition_len)] + ["target"]
        columns = [self.conditions, self.targets[:, None]]
        if self.clusters is not None:
            header.append("cluster")
            columns.append(self.clusters[:, None].astype(np.float64))
        table = np.hstack(columns)
        with open(csv_path, "w", newline="") as fh:
            fh.write(",".join(header) + "\n")
            for row in table:
                fh.write(",".join(_fmt(v) for v in row) + "\n")
        meta = {
            "format_version": DATASET_FORMAT_VERSION,
            "label": self.label,
            "n_windows": len(self),
            "condition_len": self.condition_len,
            "split": {"train": self.n_train, "val": self.n_val, "test": self.n_test},
            "scaler": self.scaler.to_dict(),
            "has_clusters": self.clusters is not None,
            **self.meta,
        }
        meta_path.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
        return csv_path, meta_path

    @classmethod
    def load(cls, directory) -> "WindowedDataset":
        directory = Path(directory)
        csv_path = directory / "dataset.csv"
        meta_path = directory / "dataset.json"
        for p in (csv_path, meta_path):
            if not p.exists():
                raise DataError(f"dataset file not found: {p}")
        meta = json.loads(meta_path.read_text())
        if meta.get("format_version") != DATASET_FORMAT_VERSION:
            raise DataError(f"{meta_path}: unsupported format version {meta.get('format_version')}")
        try:
            table = np.loadtxt(csv_path, delimiter=",", skiprows=1, ndmin=2)
        except ValueError as exc:
            raise DataError(f"{csv_path}: {exc}") from None
        c = int(meta["condition_len"])
        clusters = table[:, c + 1].astype(np.int64) if meta.get("has_clusters") else None
        extra = {k: v for k, v in meta.items()
                 if k not in ("format_version", "label", "n_windows", "condition_len",
                              "split", "scaler", "has_clusters")}
        return cls(table[:, :c], table[:, c], int(meta["split"]["train"]),
                   int(meta["split"]["val"]), AffineScaler.from_dict(meta["scaler"]),
                   meta.get("label", ""), clusters, extra)


def _fmt(v: float) -> str:
    return repr(float(v))


def window_series(series: Sequence[float], condition_len: int, label: str = "",
                  meta: dict | None = None) -> WindowedDataset:
    """Slide a stride-1 window: condition = steps [i, i+C), target = step i+C."""
    x = np.asarray(series, dtype=np.float64).ravel()
    if condition_len < 1:
        raise DataError("condition length must be at least 1")
    if len(x) <= condition_len:
        raise DataError(
            f"series of length {len(x)} is too short for condition length {condition_len}"
        )
    windows = np.lib.stride_tricks.sliding_window_view(x, condition_len + 1)
    return WindowedDataset.from_arrays(windows[:, :-1].copy(), windows[:, -1].copy(),
                                       label=label, meta=meta)


# ---------------------------------------------------------------------------
# Fixed-step integration


def rk4_step(f: Callable[[np.ndarray], np.ndarray], y: np.ndarray, dt: float) -> np.ndarray:
    k1 = f(y)
    k2 = f(y + 0.5 * dt * k1)
    k3 = f(y + 0.5 * dt * k2)
    k4 = f(y + dt * k3)
    return y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def rk4_integrate(f, y0, dt: float, n_steps: int) -> np.ndarray:
    """Classical 4th-order Runge-Kutta; returns the ``n_steps + 1`` states."""
    y = np.asarray(y0, dtype=np.float64)
    out = np.empty((n_steps + 1,) + y.shape)
    out[0] = y
    for i in range(n_steps):
        y = rk4_step(f, y, dt)
        out[i + 1] = y
    return out


# ---------------------------------------------------------------------------
# Lorenz


@dataclass
class LorenzParams:
    sigma: float = 16.0
    rho: float = 45.92
    beta: float = 4.0
    x0: float = 1.0
    z0: float = 1.0
    y0: tuple[float, ...] = (1.0001, 1.000001, 1.00000001, 1.0000000001, 1.000000000001)
    occurrences: tuple[float, ...] = (0.055, 0.22, 0.42, 0.24, 0.065)
    noise_std: float = 7.2
    dt: float = 0.02
    horizon: float = 26.0
    condition_start: float = 12.0
    condition_end: float = 17.0
    target_times: tuple[float, ...] = (20.0, 22.0, 25.0)
    # RK4 steps per recorded sample; dt alone is too coarse for these parameters
    substeps: int = 16

    def __post_init__(self):
        if self.substeps < 1:
            raise DataError("substeps must be at least 1")
        if len(self.y0) != len(self.occurrences):
            raise DataError("each cluster seed needs a relative occurrence")
        if abs(sum(self.occurrences) - 1.0) > 1e-9:
            raise DataError(f"cluster occurrences sum to {sum(self.occurrences)}, not 1")

    def index_of(self, t: float) -> int:
        return int(round(t / self.dt))


def lorenz_derivative(state, params: LorenzParams) -> np.ndarray:
    x, y, z = state
    return np.array([
        params.sigma * (y - x),
        x * (params.rho - z) - y,
        x * y - params.beta * z,
    ])


def integrate_lorenz(params: LorenzParams, y0, dt: float | None = None,
                     horizon: float | None = None, return_states: bool = False,
                     substeps: int | None = None) -> np.ndarray:
    """x-coordinate of the Lorenz trajectory from ``(x0, y0, z0)`` on [0, horizon].

    Samples are recorded every ``dt``; each interval is integrated with
    ``substeps`` RK4 steps.  An array ``y0`` integrates several seeds at once and
    returns one row per seed.
    """
    dt = params.dt if dt is None else dt
    horizon = params.horizon if horizon is None else horizon
    substeps = params.substeps if substeps is None else substeps
    n_steps = int(round(horizon / dt))
    sigma, rho, beta = params.sigma, params.rho, params.beta

    def f(s):
        x, y, z = s
        return np.array([sigma * (y - x), x * (rho - z) - y, x * y - beta * z])

    y0 = np.asarray(y0, dtype=np.float64)
    start = np.stack([np.full_like(y0, params.x0), y0, np.full_like(y0, params.z0)])
    states = rk4_integrate(f, start, dt / substeps, n_steps * substeps)[::substeps]
    if not np.all(np.isfinite(states)):
        raise DataError("Lorenz integration diverged to non-finite values")
    states = np.moveaxis(states, 0, -1)  # [3, (seeds,) time]
    return states if return_states else states[0]


def lorenz_clean_trajectories(params: LorenzParams) -> np.ndarray:
    """[n_clusters, n_steps + 1] noise-free x-trajectories, one per seed."""
    return integrate_lorenz(params, np.asarray(params.y0))


def build_lorenz_dataset(params: LorenzParams, n_samples: int,
                         rng: np.random.Generator) -> WindowedDataset:
    """Noisy (condition window, future value) pairs drawn from the seeded clusters.

    The condition is x over [condition_start, condition_end) and the target is x at
    one of ``target_times`` chosen uniformly; Gaussian noise of ``noise_std`` is added
    to both.  Rows are shuffled before the 50/10/40 split.
    """
    if n_samples < 1:
        raise DataError("n_samples must be at least 1")
    clean = lorenz_clean_trajectories(params)
    lo, hi = params.index_of(params.condition_start), params.index_of(params.condition_end)
    target_idx = np.array([params.index_of(t) for t in params.target_times])

    clusters = rng.choice(len(params.y0), size=n_samples, p=np.asarray(params.occurrences))
    which = rng.integers(0, len(target_idx), size=n_samples)
    conditions = clean[clusters, lo:hi] + rng.normal(0.0, params.noise_std, (n_samples, hi - lo))
    targets = clean[clusters, target_idx[which]] + rng.normal(0.0, params.noise_std, n_samples)

    order = rng.permutation(n_samples)
    meta = {"generator": "lorenz", "params": _jsonable(asdict(params)),
            "target_time_index": which[order].tolist()}
    ds = WindowedDataset.from_arrays(conditions[order], targets[order], label="lorenz",
                                     clusters=clusters[order], meta=meta)
    return ds


# ---------------------------------------------------------------------------
# Mackey-Glass


@dataclass
class MackeyGlassParams:
    a: float = 0.2
    b: float = 0.1
    tau: float = 17.0
    exponent: float = 10.0
    dt: float = 0.1
    record_interval: float = 1.0
    washout: int = 1000
    history_init: float = 1.2


def mackey_glass_derivative(x_now: float, x_delayed: float, params: MackeyGlassParams) -> float:
    return params.a * x_delayed / (1.0 + x_delayed ** params.exponent) - params.b * x_now


def _divides(step: float, total: float) -> int:
    ratio = total / step
    n = int(round(ratio))
    if n < 1 or abs(ratio - n) > 1e-9 * max(1.0, ratio):
        raise DataError(f"step {step} does not divide {total}")
    return n


def integrate_mackey_glass(params: MackeyGlassParams, length: int = 20000) -> np.ndarray:
    """Record ``length`` values of the delay equation after discarding the washout.

    Fixed-step RK4; the delayed term at half steps is the linear interpolation of
    the two bracketing history samples.
    """
    lag = _divides(params.dt, params.tau)
    stride = _divides(params.dt, params.record_interval)
    a, b, p, dt = params.a, params.b, params.exponent, params.dt

    def f(x, xd):
        return a * xd / (1.0 + xd ** p) - b * x

    # ring buffer of the last lag+1 states: hist[k % size] = x at step k
    size = lag + 1
    hist = [params.history_init] * size
    x = params.history_init
    total = (params.washout + length) * stride
    out = np.empty(length)
    rec = 0
    for k in range(total):
        xd0 = hist[(k - lag) % size] if k >= lag else params.history_init
        xd1 = hist[(k - lag + 1) % size] if k + 1 >= lag else params.history_init
        xdm = 0.5 * (xd0 + xd1)
        k1 = f(x, xd0)
        k2 = f(x + 0.5 * dt * k1, xdm)
        k3 = f(x + 0.5 * dt * k2, xdm)
        k4 = f(x + dt * k3, xd1)
        x = x + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        hist[(k + 1) % size] = x
        if (k + 1) % stride == 0:
            idx = (k + 1) // stride - params.washout - 1
            if idx >= 0:
                out[idx] = x
                rec += 1
    if not np.all(np.isfinite(out)):
        raise DataError("Mackey-Glass integration produced non-finite values")
    return out


# ---------------------------------------------------------------------------
# CSV series and toy data


def ingest_csv_series(path, column: str | int = 0) -> np.ndarray:
    """Read one numeric column of a CSV file, keeping row order.

    A string ``column`` selects by header name (the first line is then a header);
    an integer selects by position in a header-less file.  If the first line of a
    file read by index is not numeric it is treated as a header.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"series file not found: {path}")
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataError(f"{path}: empty file")
    start = 0
    if isinstance(column, str):
        header = [h.strip() for h in rows[0]]
        if column not in header:
            raise DataError(f"{path}: no column named {column!r} (have {header})")
        col = header.index(column)
        start = 1
    else:
        col = int(column)
        if rows[0] and col < len(rows[0]) and not _is_number(rows[0][col]):
            start = 1
    values = []
    for lineno, row in enumerate(rows[start:], start=start + 1):
        if not row or all(not c.strip() for c in row):
            continue
        if col >= len(row):
            raise DataError(f"{path}: line {lineno} has no column {column!r}")
        try:
            v = float(row[col])
        except ValueError:
            raise DataError(f"{path}: line {lineno}: cannot parse {row[col]!r} as a number") from None
        if not math.isfinite(v):
            raise DataError(f"{path}: line {lineno}: non-finite value {row[col]!r}")
        values.append(v)
    if not values:
        raise DataError(f"{path}: no numeric rows")
    return np.array(values, dtype=np.float64)


def _is_number(s: str) -> bool:
    try:
        float(s)
        return True
    except ValueError:
        return False


TOY_TEMPLATE = 0.5 + 0.3 * np.sin(np.linspace(0.0, 2.0 * np.pi, 10))


def build_toy_bimodal(n: int, rng: np.random.Generator, p_one: float = 0.8,
                      noise_std: float = 0.05) -> WindowedDataset:
    """Ten-step noisy copies of one template; the next value is 1 w.p. ``p_one`` else 0."""
    if n < 1:
        raise DataError("n must be at least 1")
    conditions = TOY_TEMPLATE + rng.normal(0.0, noise_std, size=(n, len(TOY_TEMPLATE)))
    targets = (rng.random(n) < p_one).astype(np.float64)
    meta = {"generator": "toy-bimodal", "params": {"p_one": p_one, "noise_std": noise_std}}
    ds = WindowedDataset.from_arrays(conditions, targets, label="toy-bimodal", meta=meta)
    if ds.n_train == 0 or np.ptp(ds.targets[:ds.n_train]) == 0:
        # tiny sets: keep targets on their natural [0, 1] scale
        ds.scaler = AffineScaler(0.0, 1.0)
    return ds


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj
