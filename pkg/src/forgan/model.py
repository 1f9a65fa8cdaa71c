"""Conditional GAN forecaster: networks, adversarial training, sampling, persistence.

The generator encodes a condition window with one recurrent layer, appends a
standard-normal noise vector and maps the result through two dense layers to a
one-step-ahead forecast.  The discriminator appends a candidate value to the
condition window, runs its own recurrent layer over the extended window and
outputs the probability that the window is real.
"""
from __future__ import annotations

import hashlib
import json
import logging
import struct
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import __version__
from ._validation import check_conditions, check_noise
from .data import AffineScaler, WindowedDataset
from .exceptions import (ConfigError, DataError, ModelFormatError, ShapeError,
                         TrainingDivergedError)
from .metrics import knuth_bins, histogram, kld
from .nn import Adam, Dense, Module, Tensor, make_cell, no_grad
from .nn import tensor as T
from .rng import substream

logger = logging.getLogger(__name__)

POWERS_OF_TWO = tuple(2 ** i for i in range(9))  # 1 .. 256
DOMAINS = {
    "cell_type": ("GRU", "LSTM"),
    "gen_hidden": POWERS_OF_TWO,
    "dis_hidden": POWERS_OF_TWO,
    "noise_dim": tuple(2 ** i for i in range(6)),  # 1 .. 32
    "condition_len": POWERS_OF_TWO,
    "d_iters": tuple(range(1, 8)),
}
LOG_EPS = 1e-12


@dataclass(frozen=True)
class HyperParams:
    cell_type: str = "GRU"
    gen_hidden: int = 8
    dis_hidden: int = 64
    noise_dim: int = 32
    condition_len: int = 24
    d_iters: int = 2

    def __post_init__(self):
        # range check only: the published Lorenz preset uses C = 24, which lies
        # between the grid points of the search space
        object.__setattr__(self, "cell_type", str(self.cell_type).upper())
        if self.cell_type not in DOMAINS["cell_type"]:
            raise ConfigError(f"cell_type must be GRU or LSTM, got {self.cell_type!r}")
        for f in fields(self)[1:]:
            value = getattr(self, f.name)
            domain = DOMAINS[f.name]
            if isinstance(value, bool) or not isinstance(value, (int, np.integer)) \
                    or not domain[0] <= value <= domain[-1]:
                raise ConfigError(
                    f"{f.name}={value!r} must be an integer in [{domain[0]}, {domain[-1]}]"
                )
            object.__setattr__(self, f.name, int(value))

    def in_search_space(self) -> bool:
        """True when every field is one of the grid values searched by the tuner."""
        return all(getattr(self, f.name) in DOMAINS[f.name] for f in fields(self))

    def as_tuple(self) -> tuple:
        return tuple(getattr(self, f.name) for f in fields(self))

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "HyperParams":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown hyperparameter(s): {sorted(unknown)}")
        return cls(**d)


PRESETS = {
    "lorenz": HyperParams("GRU", 8, 64, 32, 24, 2),
    "mackey-glass": HyperParams("LSTM", 64, 256, 4, 32, 6),
    "traffic": HyperParams("GRU", 8, 128, 16, 32, 3),
}


@dataclass
class TrainConfig:
    total_generator_steps: int = 1000
    batch_size: int = 128
    seed: int = 0
    learning_rate: float = 1e-3
    # discriminator step size; None reuses learning_rate
    discriminator_learning_rate: float | None = None
    # linearly shrink every step size towards zero over the run
    learning_rate_decay: bool = False
    beta1: float = 0.9
    beta2: float = 0.999
    validation_every: int = 100
    validation_samples: int = 10
    checkpoint_every: int = 0
    checkpoint_dir: str | None = None
    # std (in scaled units) of Gaussian noise added to every candidate value the
    # discriminator sees; 0 disables it.  With instance_noise_decay the std
    # shrinks linearly to zero over the run.
    instance_noise: float = 0.0
    instance_noise_decay: bool = False

    def __post_init__(self):
        if self.total_generator_steps < 0:
            raise ConfigError("total_generator_steps must be non-negative")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be at least 1")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        if self.discriminator_learning_rate is not None and self.discriminator_learning_rate <= 0:
            raise ConfigError("discriminator_learning_rate must be positive")
        if self.instance_noise < 0:
            raise ConfigError("instance_noise must be non-negative")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ConfigError("moment decay rates must lie in [0, 1)")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        return cls(**d)


# ---------------------------------------------------------------------------
# Networks


class _Composite(Module):
    parts: tuple[str, ...] = ()

    def named_parameters(self):
        out = []
        for part in self.parts:
            module = getattr(self, part)
            out += [(f"{part}.{name}", p) for name, p in module.named_parameters()]
        return out


class Generator(_Composite):
    parts = ("condition_rnn", "hidden", "out")

    def __init__(self, hyper: HyperParams, rng: np.random.Generator):
        width = hyper.gen_hidden + hyper.noise_dim
        self.condition_len = hyper.condition_len
        self.noise_dim = hyper.noise_dim
        self.condition_rnn = make_cell(hyper.cell_type, 1, hyper.gen_hidden, rng)
        self.hidden = Dense(width, width, "relu", rng)
        self.out = Dense(width, 1, "identity", rng)

    def represent(self, conditions) -> Tensor:
        """Final recurrent state for a [B, C] batch of (scaled) condition windows."""
        c = np.asarray(conditions.data if isinstance(conditions, Tensor) else conditions)
        return self.condition_rnn(c.reshape(c.shape[0], c.shape[1], 1))

    def head(self, representation, noise) -> Tensor:
        return self.out(self.hidden(T.concat([representation, noise], axis=1)))

    def __call__(self, conditions, noise) -> Tensor:
        return self.head(self.represent(conditions), noise)


class Discriminator(_Composite):
    parts = ("sequence_rnn", "out")

    def __init__(self, hyper: HyperParams, rng: np.random.Generator):
        self.condition_len = hyper.condition_len
        self.sequence_rnn = make_cell(hyper.cell_type, 1, hyper.dis_hidden, rng)
        self.out = Dense(hyper.dis_hidden, 1, "sigmoid", rng)

    def __call__(self, conditions, candidates) -> Tensor:
        """Probability that each ``condition + candidate`` window is real, shape [B, 1]."""
        c = np.asarray(conditions, dtype=np.float64)
        cand = T.as_tensor(candidates).reshape(c.shape[0], 1)
        window = T.concat([Tensor(c), cand], axis=1).reshape(c.shape[0], c.shape[1] + 1, 1)
        return self.out(self.sequence_rnn(window))


# ---------------------------------------------------------------------------
# Model


class ForGanModel:
    """Trained generator (and discriminator) plus the scaler of their training data.

    ``kind`` is ``"forgan"`` for the adversarial model and ``"g-regression"`` for the
    RMSE-trained baseline, whose noise input is always zero.  Public methods take
    and return values on the original data scale.
    """

    def __init__(self, hyper: HyperParams, scaler: AffineScaler | None = None,
                 kind: str = "forgan", rng: np.random.Generator | None = None):
        if kind not in ("forgan", "g-regression"):
            raise ConfigError(f"unknown model kind {kind!r}")
        rng = np.random.default_rng() if rng is None else rng
        self.hyper = hyper
        self.kind = kind
        self.scaler = AffineScaler() if scaler is None else scaler
        self.generator = Generator(hyper, rng)
        self.discriminator = Discriminator(hyper, rng) if kind == "forgan" else None
        self._rep_cache: tuple[bytes, np.ndarray] | None = None

    @property
    def deterministic(self) -> bool:
        return self.kind == "g-regression"

    # -- internal helpers on the scaled domain -----------------------------
    def _scaled_conditions(self, conditions) -> np.ndarray:
        c = check_conditions(conditions, self.hyper.condition_len)
        return self.scaler.transform(c)

    def _representation(self, scaled: np.ndarray) -> np.ndarray:
        key = hashlib.sha1(scaled.tobytes()).digest() + str(scaled.shape).encode()
        if self._rep_cache is not None and self._rep_cache[0] == key:
            return self._rep_cache[1]
        with no_grad():
            rep = self.generator.represent(scaled).data
        self._rep_cache = (key, rep)
        return rep

    def invalidate_cache(self) -> None:
        self._rep_cache = None

    # -- public API ----------------------------------------------------------
    def generate(self, condition, noise) -> float:
        """Forecast for one condition window and one explicit noise vector."""
        c = np.asarray(condition, dtype=np.float64).ravel()
        if c.size != self.hyper.condition_len:
            raise ShapeError(
                f"condition must have {self.hyper.condition_len} values, got {c.size}"
            )
        z = check_noise(noise, self.hyper.noise_dim, 1)
        scaled = self.scaler.transform(c.reshape(1, -1))
        with no_grad():
            out = self.generator(scaled, z).data
        return float(self.scaler.inverse_transform(out)[0, 0])

    def sample_forecasts(self, conditions, k: int, rng: np.random.Generator,
                         max_rows: int = 65536) -> np.ndarray:
        """``k`` forecasts per condition window, shape [n, k].

        Noise is drawn row-major: the vectors for condition ``i`` are rows
        ``i*k .. i*k+k-1`` of one ``rng.standard_normal((n*k, N))`` draw.
        """
        if k < 1:
            raise ValueError("k must be at least 1")
        scaled = self._scaled_conditions(conditions)
        n = scaled.shape[0]
        rep = self._representation(scaled)
        if self.deterministic:
            z = np.zeros((n * k, self.hyper.noise_dim))
        else:
            z = rng.standard_normal((n * k, self.hyper.noise_dim))
        rep_rows = np.repeat(rep, k, axis=0)
        out = np.empty(n * k)
        with no_grad():
            for lo in range(0, n * k, max_rows):
                hi = min(lo + max_rows, n * k)
                out[lo:hi] = self.generator.head(Tensor(rep_rows[lo:hi]), Tensor(z[lo:hi])).data[:, 0]
        return self.scaler.inverse_transform(out).reshape(n, k)

    def predict(self, conditions, rng: np.random.Generator | None = None) -> np.ndarray:
        """Point forecasts: zero-noise output for G-regression, one sampled draw for ForGAN."""
        if not self.deterministic and rng is None:
            rng = np.random.default_rng()
        return self.sample_forecasts(conditions, 1, rng)[:, 0]

    def discriminator_score(self, condition, candidate) -> np.ndarray | float:
        if self.discriminator is None:
            raise ConfigError("G-regression models have no discriminator")
        c = np.asarray(condition, dtype=np.float64)
        single = c.ndim == 1
        if single:
            c = c.reshape(1, -1)
        if c.shape[1] != self.hyper.condition_len:
            raise ShapeError(
                f"condition must have {self.hyper.condition_len} values, got {c.shape[1]}"
            )
        cand = np.asarray(candidate, dtype=np.float64).reshape(-1)
        if cand.size != c.shape[0]:
            raise ShapeError("need one candidate per condition")
        with no_grad():
            s = self.discriminator(self.scaler.transform(c),
                                   self.scaler.transform(cand).reshape(-1, 1)).data[:, 0]
        return float(s[0]) if single else s

    def state_dict(self) -> dict[str, np.ndarray]:
        state = {f"generator.{k}": v for k, v in self.generator.state_dict().items()}
        if self.discriminator is not None:
            state.update({f"discriminator.{k}": v
                          for k, v in self.discriminator.state_dict().items()})
        return state

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        self.generator.load_state_dict(_strip(state, "generator."))
        if self.discriminator is not None:
            self.discriminator.load_state_dict(_strip(state, "discriminator."))
        self.invalidate_cache()

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        out = [(f"generator.{n}", p) for n, p in self.generator.named_parameters()]
        if self.discriminator is not None:
            out += [(f"discriminator.{n}", p) for n, p in self.discriminator.named_parameters()]
        return out

    def save(self, path) -> Path:
        return save_model(self, path)


def _strip(state, prefix):
    return {k[len(prefix):]: v for k, v in state.items() if k.startswith(prefix)}


# functional aliases


def generate(model: ForGanModel, condition, noise) -> float:
    return model.generate(condition, noise)


def sample_forecasts(model: ForGanModel, condition, k: int, rng: np.random.Generator) -> np.ndarray:
    """``k`` independent forecasts for a single condition window."""
    return model.sample_forecasts(np.asarray(condition, dtype=np.float64).reshape(1, -1), k, rng)[0]


def discriminator_score(model: ForGanModel, condition, candidate: float) -> float:
    return model.discriminator_score(np.asarray(condition, dtype=np.float64).ravel(), candidate)


# ---------------------------------------------------------------------------
# Training


@dataclass
class TrainingLog:
    d_losses: list[float] = field(default_factory=list)
    g_losses: list[float] = field(default_factory=list)
    d_updates: int = 0
    g_updates: int = 0
    validation: list[tuple[int, float | None]] = field(default_factory=list)
    best_step: int | None = None

    def to_csv(self) -> str:
        """One row per generator step: step, generator loss, mean discriminator loss."""
        rows = ["step,g_loss,d_loss"]
        per = max(1, len(self.d_losses) // max(1, len(self.g_losses))) if self.d_losses else 0
        for i, g in enumerate(self.g_losses):
            d = self.d_losses[i * per:(i + 1) * per] if per else []
            rows.append(f"{i + 1},{g!r},{(sum(d) / len(d)) if d else ''!r}")
        return "\n".join(rows) + "\n"

    def validation_csv(self) -> str:
        rows = ["step,metric"]
        rows += [f"{s},{'undefined' if v is None else repr(v)}" for s, v in self.validation]
        return "\n".join(rows) + "\n"


def _check_dataset(dataset: WindowedDataset, hyper: HyperParams):
    if len(dataset) == 0 or dataset.n_train == 0:
        raise DataError("training split is empty")
    if dataset.condition_len < hyper.condition_len:
        raise DataError(
            f"dataset windows have {dataset.condition_len} steps, "
            f"hyperparameters need {hyper.condition_len}"
        )


def _scaled_split(dataset: WindowedDataset, hyper: HyperParams, name: str):
    c, y, _ = dataset.split(name)
    c = c[:, c.shape[1] - hyper.condition_len:]
    return dataset.scaler.transform(c), dataset.scaler.transform(y)


def _finite_or_abort(value: float, what: str, step: int):
    if not np.isfinite(value):
        raise TrainingDivergedError(f"{what} became {value} at generator step {step}")


def _validation_kld(model: ForGanModel, dataset: WindowedDataset, k: int,
                    rng: np.random.Generator) -> float | None:
    c, y, _ = dataset.split("val")
    if len(y) < 2 or np.ptp(y) == 0:
        return None
    _, edges = knuth_bins(y)
    model.invalidate_cache()
    samples = model.sample_forecasts(c, k, rng)
    return kld(histogram(y, edges), histogram(samples, edges))


def _set_rates(cfg: TrainConfig, step: int, pairs) -> None:
    if not cfg.learning_rate_decay:
        return
    scale = 1.0 - (step - 1) / cfg.total_generator_steps
    for opt, base in pairs:
        opt.lr = base * scale


def _maybe_checkpoint(model, cfg: TrainConfig, step: int):
    if cfg.checkpoint_every and cfg.checkpoint_dir and step % cfg.checkpoint_every == 0:
        path = Path(cfg.checkpoint_dir) / f"checkpoint_{step:07d}.forgan"
        save_model(model, path)


def train_forgan(dataset: WindowedDataset, hyper: HyperParams,
                 cfg: TrainConfig | None = None,
                 callback=None) -> tuple[ForGanModel, TrainingLog]:
    """Adversarial training; each generator step follows ``hyper.d_iters`` discriminator steps.

    The discriminator minimises binary cross-entropy (real = 1, generated = 0);
    the generator minimises ``-log D(G(z|c))``.  Minibatches are drawn uniformly
    with replacement from the training split.  When a validation split exists the
    parameters with the lowest validation KLD (checked every ``validation_every``
    steps) are returned.
    """
    cfg = TrainConfig() if cfg is None else cfg
    _check_dataset(dataset, hyper)
    model = ForGanModel(hyper, dataset.scaler, "forgan", substream(cfg.seed, "init"))
    gen, dis = model.generator, model.discriminator
    log = TrainingLog()
    if cfg.total_generator_steps == 0:
        return model, log

    batch_rng = substream(cfg.seed, "batches")
    noise_rng = substream(cfg.seed, "noise")
    blur_rng = substream(cfg.seed, "instance-noise")
    val_rng = substream(cfg.seed, "validation")
    c_train, y_train = _scaled_split(dataset, hyper, "train")
    n_train, B, N = len(y_train), cfg.batch_size, hyper.noise_dim
    betas = (cfg.beta1, cfg.beta2)
    g_opt = Adam(gen.parameters(), lr=cfg.learning_rate, betas=betas)
    d_lr = cfg.discriminator_learning_rate or cfg.learning_rate
    d_opt = Adam(dis.parameters(), lr=d_lr, betas=betas)
    labels_real = slice(0, B)
    labels_fake = slice(B, 2 * B)
    best = (np.inf, None)

    def blur(shape, step):
        sigma = cfg.instance_noise
        if cfg.instance_noise_decay:
            sigma *= 1.0 - (step - 1) / cfg.total_generator_steps
        return sigma * blur_rng.standard_normal(shape) if sigma > 0 else 0.0

    for step in range(1, cfg.total_generator_steps + 1):
        _set_rates(cfg, step, ((g_opt, cfg.learning_rate), (d_opt, d_lr)))
        for _ in range(hyper.d_iters):
            idx = batch_rng.integers(0, n_train, B)
            c = c_train[idx]
            z = noise_rng.standard_normal((B, N))
            with no_grad():
                fake = gen(c, z).data
            cand = np.concatenate([y_train[idx, None], fake]) + blur((2 * B, 1), step)
            d = dis(np.concatenate([c, c]), Tensor(cand))
            log_real = T.mean_all(T.log(d[labels_real], LOG_EPS))
            log_fake = T.mean_all(T.log(T.sub(1.0, d[labels_fake]), LOG_EPS))
            loss = T.mul(T.add(log_real, log_fake), -1.0)
            _finite_or_abort(loss.item(), "discriminator loss", step)
            d_opt.zero_grad()
            loss.backward()
            d_opt.step()
            log.d_losses.append(loss.item())
            log.d_updates += 1

        idx = batch_rng.integers(0, n_train, B)
        c = c_train[idx]
        z = noise_rng.standard_normal((B, N))
        fake = T.add(gen(c, z), blur((B, 1), step))
        g_loss = T.mul(T.mean_all(T.log(dis(c, fake), LOG_EPS)), -1.0)
        _finite_or_abort(g_loss.item(), "generator loss", step)
        g_opt.zero_grad()
        g_loss.backward()
        g_opt.step()
        dis.zero_grad()
        log.g_losses.append(g_loss.item())
        log.g_updates += 1

        if cfg.validation_every and dataset.n_val and (
                step % cfg.validation_every == 0 or step == cfg.total_generator_steps):
            score = _validation_kld(model, dataset, cfg.validation_samples, val_rng)
            log.validation.append((step, score))
            logger.debug("step %d: validation KLD %s", step, score)
            if score is not None and score < best[0]:
                best = (score, model.state_dict())
                log.best_step = step
        _maybe_checkpoint(model, cfg, step)
        if callback is not None:
            callback(step, model, log)

    if best[1] is not None:
        model.load_state_dict(best[1])
    model.invalidate_cache()
    return model, log


def train_gregression(dataset: WindowedDataset, hyper: HyperParams,
                      cfg: TrainConfig | None = None,
                      callback=None) -> tuple[ForGanModel, TrainingLog]:
    """Train the generator architecture on batch RMSE with the noise input held at zero.

    Checkpoint selection uses validation RMSE.
    """
    cfg = TrainConfig() if cfg is None else cfg
    _check_dataset(dataset, hyper)
    model = ForGanModel(hyper, dataset.scaler, "g-regression", substream(cfg.seed, "init"))
    gen = model.generator
    log = TrainingLog()
    if cfg.total_generator_steps == 0:
        return model, log

    batch_rng = substream(cfg.seed, "batches")
    c_train, y_train = _scaled_split(dataset, hyper, "train")
    c_val, y_val = _scaled_split(dataset, hyper, "val")
    n_train, B = len(y_train), cfg.batch_size
    zeros = np.zeros((B, hyper.noise_dim))
    opt = Adam(gen.parameters(), lr=cfg.learning_rate, betas=(cfg.beta1, cfg.beta2))
    best = (np.inf, None)

    for step in range(1, cfg.total_generator_steps + 1):
        _set_rates(cfg, step, ((opt, cfg.learning_rate),))
        idx = batch_rng.integers(0, n_train, B)
        pred = gen(c_train[idx], zeros)
        loss = T.sqrt(T.mean_all(T.square(T.sub(pred, y_train[idx, None]))), LOG_EPS)
        _finite_or_abort(loss.item(), "regression loss", step)
        opt.zero_grad()
        loss.backward()
        opt.step()
        log.g_losses.append(loss.item())
        log.g_updates += 1

        if cfg.validation_every and len(y_val) and (
                step % cfg.validation_every == 0 or step == cfg.total_generator_steps):
            with no_grad():
                p = gen(c_val, np.zeros((len(y_val), hyper.noise_dim))).data[:, 0]
            score = float(np.sqrt(np.mean((p - y_val) ** 2)))
            log.validation.append((step, score))
            if score < best[0]:
                best = (score, model.state_dict())
                log.best_step = step
        _maybe_checkpoint(model, cfg, step)
        if callback is not None:
            callback(step, model, log)

    if best[1] is not None:
        model.load_state_dict(best[1])
    model.invalidate_cache()
    return model, log


# ---------------------------------------------------------------------------
# Persistence
#
# File layout (all integers little-endian):
#   8 bytes   magic b"FORGAN\x00\x01"
#   4 bytes   header length L (uint32)
#   L bytes   UTF-8 JSON header: format_version, package version, kind, hyper,
#             scaler, and "parameters": [[name, shape], ...] in payload order
#   payload   concatenated float64 arrays (C order) in header order
#   32 bytes  SHA-256 of header + payload

MAGIC = b"FORGAN\x00\x01"
MODEL_FORMAT_VERSION = 1


def save_model(model: ForGanModel, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    params = model.named_parameters()
    header = {
        "format_version": MODEL_FORMAT_VERSION,
        "package_version": __version__,
        "kind": model.kind,
        "hyper": model.hyper.to_dict(),
        "scaler": model.scaler.to_dict(),
        "parameters": [[name, list(p.shape)] for name, p in params],
    }
    head = json.dumps(header, sort_keys=True).encode()
    payload = b"".join(np.ascontiguousarray(p.data, dtype="<f8").tobytes() for _, p in params)
    digest = hashlib.sha256(head + payload).digest()
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(head)))
        fh.write(head)
        fh.write(payload)
        fh.write(digest)
    tmp.replace(path)
    return path


def load_model(path) -> ForGanModel:
    path = Path(path)
    try:
        blob = path.read_bytes()
    except FileNotFoundError:
        raise ModelFormatError(f"model file not found: {path}") from None
    if len(blob) < len(MAGIC) + 4 + 32 or blob[:len(MAGIC)] != MAGIC:
        raise ModelFormatError(f"{path}: not a model file (bad magic or too short)")
    (hlen,) = struct.unpack("<I", blob[8:12])
    head = blob[12:12 + hlen]
    body = blob[12 + hlen:-32]
    if len(head) != hlen or hashlib.sha256(head + body).digest() != blob[-32:]:
        raise ModelFormatError(f"{path}: checksum mismatch (truncated or corrupt file)")
    header = json.loads(head)
    if header.get("format_version") != MODEL_FORMAT_VERSION:
        raise ModelFormatError(
            f"{path}: format version {header.get('format_version')} is not supported "
            f"(expected {MODEL_FORMAT_VERSION})"
        )
    hyper = HyperParams.from_dict(header["hyper"])
    model = ForGanModel(hyper, AffineScaler.from_dict(header["scaler"]), header["kind"],
                        np.random.default_rng(0))
    state, offset = {}, 0
    for name, shape in header["parameters"]:
        n = int(np.prod(shape)) * 8
        if offset + n > len(body):
            raise ModelFormatError(f"{path}: payload shorter than declared parameters")
        state[name] = np.frombuffer(body[offset:offset + n], dtype="<f8").reshape(shape).copy()
        offset += n
    if offset != len(body):
        raise ModelFormatError(f"{path}: payload longer than declared parameters")
    expected = {name for name, _ in model.named_parameters()}
    if set(state) != expected:
        raise ModelFormatError(f"{path}: parameter names do not match the architecture")
    model.load_state_dict(state)
    return model
