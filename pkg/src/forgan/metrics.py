"""Point-wise errors, Knuth-optimal histograms, discrete KL divergence and the
repeated-sampling evaluation protocol for probabilistic and point forecasters.
"""
from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass, field
from typing import Protocol

import numpy as np
from scipy.special import gammaln

from .exceptions import DataError, ShapeError

UNDEFINED = "undefined"


def _pair(x, x_hat) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=np.float64).ravel()
    x_hat = np.asarray(x_hat, dtype=np.float64).ravel()
    if x.size == 0 or x.size != x_hat.size:
        raise ShapeError(f"expected equal non-zero lengths, got {x.size} and {x_hat.size}")
    return x, x_hat


def rmse(x, x_hat) -> float:
    x, x_hat = _pair(x, x_hat)
    return float(np.sqrt(np.mean((x - x_hat) ** 2)))


def mae(x, x_hat) -> float:
    x, x_hat = _pair(x, x_hat)
    return float(np.mean(np.abs(x - x_hat)))


def mape(x, x_hat) -> float:
    """Mean absolute percentage error, in percent."""
    x, x_hat = _pair(x, x_hat)
    if np.any(x == 0):
        raise ZeroDivisionError("MAPE is undefined when a ground-truth value is zero")
    return float(np.mean(np.abs(100.0 * (x - x_hat) / x)))


# ---------------------------------------------------------------------------
# Histograms


@dataclass(frozen=True)
class Histogram:
    edges: np.ndarray
    counts: np.ndarray

    def __post_init__(self):
        edges = np.asarray(self.edges, dtype=np.float64)
        counts = np.asarray(self.counts, dtype=np.int64)
        if edges.ndim != 1 or len(edges) < 2 or np.any(np.diff(edges) <= 0):
            raise ShapeError("histogram edges must be strictly increasing with >= 2 entries")
        if counts.shape != (len(edges) - 1,):
            raise ShapeError("need one count per bin")
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "counts", counts)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def mass(self) -> np.ndarray:
        return self.counts / self.total if self.total else np.zeros(len(self.counts))

    def to_dict(self) -> dict:
        return {"edges": self.edges.tolist(), "counts": self.counts.tolist()}


def histogram(samples, edges) -> Histogram:
    """Count ``samples`` into ``edges``; values outside the range land in the end bins."""
    edges = np.asarray(edges, dtype=np.float64)
    x = np.asarray(samples, dtype=np.float64).ravel()
    idx = np.searchsorted(edges, x, side="right") - 1
    idx = np.clip(idx, 0, len(edges) - 2)
    return Histogram(edges, np.bincount(idx, minlength=len(edges) - 1))


def knuth_log_posterior(counts, n_bins: int | None = None) -> float:
    """Relative log-posterior of an equal-width histogram with these bin counts."""
    counts = np.asarray(counts)
    m = len(counts) if n_bins is None else n_bins
    n = counts.sum()
    return float(n * np.log(m) + gammaln(m / 2.0) - m * gammaln(0.5)
                 - gammaln(n + m / 2.0) + np.sum(gammaln(counts + 0.5)))


def knuth_max_bins(n: int) -> int:
    return max(1, min(200, math.ceil(n / 10)))


def knuth_bins(samples, max_bins: int | None = None) -> tuple[int, np.ndarray]:
    """Equal-width bin count maximising the Knuth posterior, and its edges on [min, max]."""
    x = np.asarray(samples, dtype=np.float64).ravel()
    if x.size < 2:
        raise DataError("Knuth binning needs at least two samples")
    lo, hi = float(x.min()), float(x.max())
    if not hi > lo:
        raise DataError("Knuth binning needs at least two distinct values")
    top = knuth_max_bins(x.size) if max_bins is None else max_bins
    best_m, best_f = 1, -np.inf
    for m in range(1, top + 1):
        f = knuth_log_posterior(histogram(x, np.linspace(lo, hi, m + 1)).counts, m)
        if f > best_f:
            best_m, best_f = m, f
    return best_m, np.linspace(lo, hi, best_m + 1)


def kld(p: Histogram, q: Histogram) -> float | None:
    """Discrete KL(P || Q) in nats, or ``None`` when Q leaves part of P's support empty."""
    if p.edges.shape != q.edges.shape or not np.array_equal(p.edges, q.edges):
        raise ShapeError("KL divergence needs histograms on identical bin edges")
    pm, qm = p.mass, q.mass
    support = pm > 0
    if np.any(qm[support] == 0):
        return None
    return float(max(0.0, np.sum(pm[support] * np.log(pm[support] / qm[support]))))


def kld_from_samples(truth, predictions) -> tuple[float | None, Histogram, Histogram]:
    """KLD with Knuth edges fitted on ``truth``; predictions share those edges."""
    _, edges = knuth_bins(truth)
    p = histogram(truth, edges)
    q = histogram(predictions, edges)
    return kld(p, q), p, q


# ---------------------------------------------------------------------------
# Evaluation protocol


class ProbabilisticForecaster(Protocol):
    def sample_forecasts(self, conditions: np.ndarray, k: int,
                         rng: np.random.Generator) -> np.ndarray:
        """[n, k] forecasts on the original data scale."""


class PointForecaster(Protocol):
    def predict(self, conditions: np.ndarray) -> np.ndarray:
        ...


def _metric_or_nan(fn, x, x_hat) -> float:
    try:
        return fn(x, x_hat)
    except ZeroDivisionError:
        return float("nan")


@dataclass
class EvaluationReport:
    rmse_mean: float
    rmse_std: float
    mae_mean: float
    mae_std: float
    mape_mean: float
    mape_std: float
    kld: float | None
    p_hist: Histogram
    q_hist: Histogram
    runs: int
    samples_per_condition: int
    n_conditions: int
    clusters: dict = field(default_factory=dict)

    @property
    def edges(self) -> np.ndarray:
        return self.p_hist.edges

    @property
    def kld_defined(self) -> bool:
        return self.kld is not None

    def to_dict(self) -> dict:
        def num(v):
            return None if v is None or (isinstance(v, float) and math.isnan(v)) else v

        return {
            "rmse": {"mean": self.rmse_mean, "std": self.rmse_std},
            "mae": {"mean": self.mae_mean, "std": self.mae_std},
            "mape": {"mean": num(self.mape_mean), "std": num(self.mape_std)},
            "kld": UNDEFINED if self.kld is None else self.kld,
            "runs": self.runs,
            "samples_per_condition": self.samples_per_condition,
            "n_conditions": self.n_conditions,
            "edges": self.p_hist.edges.tolist(),
            "p_counts": self.p_hist.counts.tolist(),
            "q_counts": self.q_hist.counts.tolist(),
            "clusters": {str(k): v.to_dict() for k, v in self.clusters.items()},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "EvaluationReport":
        def num(v):
            return float("nan") if v is None else float(v)

        edges = np.asarray(d["edges"])
        return cls(
            d["rmse"]["mean"], d["rmse"]["std"], d["mae"]["mean"], d["mae"]["std"],
            num(d["mape"]["mean"]), num(d["mape"]["std"]),
            None if d["kld"] == UNDEFINED else float(d["kld"]),
            Histogram(edges, d["p_counts"]), Histogram(edges, d["q_counts"]),
            int(d["runs"]), int(d["samples_per_condition"]), int(d["n_conditions"]),
            {k: cls.from_dict(v) for k, v in d.get("clusters", {}).items()},
        )

    def histogram_csv(self) -> str:
        """Plot-ready overlay: edge_low, edge_high, p_mass, q_mass per bin."""
        buf = io.StringIO()
        buf.write("edge_low,edge_high,p_mass,q_mass\n")
        e = self.p_hist.edges
        for lo, hi, p, q in zip(e[:-1], e[1:], self.p_hist.mass, self.q_hist.mass):
            buf.write(f"{float(lo)!r},{float(hi)!r},{float(p)!r},{float(q)!r}\n")
        return buf.getvalue()


def _report(truth, run_forecasts, pooled, edges, samples_per_condition) -> EvaluationReport:
    scores = np.array([
        (rmse(truth, f), mae(truth, f), _metric_or_nan(mape, truth, f)) for f in run_forecasts
    ])
    mean = scores.mean(axis=0)
    std = scores.std(axis=0) if len(scores) > 1 else np.zeros(3)
    p = histogram(truth, edges)
    q = histogram(pooled, edges)
    return EvaluationReport(
        float(mean[0]), float(std[0]), float(mean[1]), float(std[1]),
        float(mean[2]), float(std[2]), kld(p, q), p, q,
        runs=len(run_forecasts), samples_per_condition=samples_per_condition,
        n_conditions=len(truth),
    )


def _per_cluster(truth, clusters, run_forecasts, pooled_rows, edges, spc):
    out = {}
    if clusters is None:
        return out
    clusters = np.asarray(clusters)
    for label in np.unique(clusters):
        m = clusters == label
        out[int(label)] = _report(truth[m], [f[m] for f in run_forecasts],
                                  pooled_rows[m], edges, spc)
    return out


def evaluate_probabilistic(model: ProbabilisticForecaster, conditions, targets,
                           samples_per_condition: int = 100, runs: int = 100,
                           rng: np.random.Generator | None = None,
                           clusters=None) -> EvaluationReport:
    """Repeated-sampling evaluation of a generative forecaster.

    KLD compares the ground-truth histogram (Knuth edges fitted on ``targets``) to
    the pooled histogram of ``samples_per_condition`` forecasts per condition.
    RMSE/MAE/MAPE are computed for ``runs`` passes over the conditions, one sampled
    forecast per condition per pass, and reported as mean and standard deviation.
    """
    if samples_per_condition < 1 or runs < 1:
        raise ValueError("samples_per_condition and runs must be positive")
    rng = np.random.default_rng() if rng is None else rng
    conditions = np.asarray(conditions, dtype=np.float64)
    truth = np.asarray(targets, dtype=np.float64).ravel()
    if truth.size == 0:
        raise DataError("cannot evaluate on an empty test set")
    _, edges = knuth_bins(truth)

    pooled = np.asarray(model.sample_forecasts(conditions, samples_per_condition, rng))
    if pooled.shape != (len(truth), samples_per_condition):
        raise ShapeError(f"sampler returned shape {pooled.shape}")
    run_forecasts = [
        np.asarray(model.sample_forecasts(conditions, 1, rng)).reshape(len(truth))
        for _ in range(runs)
    ]
    report = _report(truth, run_forecasts, pooled, edges, samples_per_condition)
    report.clusters = _per_cluster(truth, clusters, run_forecasts, pooled, edges,
                                   samples_per_condition)
    return report


def evaluate_deterministic(model: PointForecaster, conditions, targets,
                           clusters=None) -> EvaluationReport:
    """Single-pass evaluation of a point forecaster; KLD uses its prediction histogram."""
    conditions = np.asarray(conditions, dtype=np.float64)
    truth = np.asarray(targets, dtype=np.float64).ravel()
    if truth.size == 0:
        raise DataError("cannot evaluate on an empty test set")
    _, edges = knuth_bins(truth)
    pred = np.asarray(model.predict(conditions), dtype=np.float64).reshape(len(truth))
    report = _report(truth, [pred], pred, edges, 1)
    report.clusters = _per_cluster(truth, clusters, [pred], pred, edges, 1)
    return report
