"""Genetic-algorithm search over the ForGAN hyperparameter grid.

A gene is a :class:`~forgan.model.HyperParams`.  The best ``survivors`` of the
pool breed ``n_crossover`` uniform-crossover children and ``n_mutation``
mutants; the next pool is the best ``pool_size`` genes among survivors and
offspring, so the best gene is never lost.  Lower fitness is better and an
undefined fitness counts as ``+inf``.
"""
from __future__ import annotations

import json
import logging
import math
import warnings
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Callable

import numpy as np

from .data import WindowedDataset
from .exceptions import ConfigError
from .model import DOMAINS, HyperParams, TrainConfig, train_forgan
from .rng import substream

logger = logging.getLogger(__name__)

FIELD_NAMES = tuple(f.name for f in fields(HyperParams))
FitnessFn = Callable[[HyperParams, "WindowedDataset | None", int], "float | None"]


@dataclass(frozen=True)
class Gene:
    hyper: HyperParams
    fitness: float = math.inf

    def to_dict(self) -> dict:
        return {"hyper": self.hyper.to_dict(), "fitness": _fitness_json(self.fitness)}

    @classmethod
    def from_dict(cls, d: dict) -> "Gene":
        return cls(HyperParams.from_dict(d["hyper"]), _fitness_from_json(d["fitness"]))


@dataclass
class GaConfig:
    pool_size: int = 8
    iterations: int = 8
    survivors: int = 4
    n_crossover: int = 4
    n_mutation: int = 4
    mutation_rate: float = 1 / 6
    seed: int = 0
    train: TrainConfig = field(default_factory=lambda: TrainConfig(
        total_generator_steps=300, validation_every=50))

    def __post_init__(self):
        if isinstance(self.train, dict):
            self.train = TrainConfig.from_dict(self.train)
        if min(self.pool_size, self.iterations, self.survivors) < 1:
            raise ConfigError("pool_size, iterations and survivors must be positive")
        if self.survivors > self.pool_size:
            raise ConfigError("survivors cannot exceed pool_size")
        if self.survivors + self.n_crossover + self.n_mutation < self.pool_size:
            raise ConfigError("survivors plus offspring must be able to refill the pool")
        if self.n_crossover + self.n_mutation > self.pool_size:
            raise ConfigError("more offspring than pool slots would overrun the evaluation budget")
        if self.n_crossover and self.survivors < 2:
            raise ConfigError("crossover needs at least two survivors")
        if not 0 <= self.mutation_rate <= 1:
            raise ConfigError("mutation_rate must lie in [0, 1]")

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d["train"] = self.train.to_dict()
        return d


@dataclass
class GaResult:
    best: Gene
    history: list[dict]
    n_evaluations: int
    all_undefined: bool = False

    def to_dict(self) -> dict:
        return {"best": self.best.to_dict(), "n_evaluations": self.n_evaluations,
                "all_undefined": self.all_undefined, "iterations": len(self.history)}


# ---------------------------------------------------------------------------
# Operators


def search_domains(dataset: WindowedDataset | None = None) -> dict[str, tuple]:
    """The tuning grid, with window lengths capped at what ``dataset`` provides."""
    domains = dict(DOMAINS)
    if dataset is not None:
        lengths = tuple(c for c in DOMAINS["condition_len"] if c <= dataset.condition_len)
        if not lengths:
            raise ConfigError("dataset windows are shorter than every searchable length")
        domains["condition_len"] = lengths
    return domains


def _draw(rng: np.random.Generator, domain: tuple):
    return domain[int(rng.integers(len(domain)))]


def random_gene(rng: np.random.Generator, domains: dict | None = None) -> HyperParams:
    domains = DOMAINS if domains is None else domains
    return HyperParams(**{name: _draw(rng, domains[name]) for name in FIELD_NAMES})


def crossover(a: HyperParams, b: HyperParams, rng: np.random.Generator) -> HyperParams:
    """Uniform crossover: every field comes from ``a`` or ``b`` with equal odds."""
    take_a = rng.random(len(FIELD_NAMES)) < 0.5
    return HyperParams(*(x if keep else y
                         for keep, x, y in zip(take_a, a.as_tuple(), b.as_tuple())))


def mutate(g: HyperParams, rate: float, rng: np.random.Generator,
           domains: dict | None = None) -> HyperParams:
    """Resample each field from its domain with probability ``rate``."""
    domains = DOMAINS if domains is None else domains
    hits = rng.random(len(FIELD_NAMES)) < rate
    values = [_draw(rng, domains[name]) if hit else value
              for hit, name, value in zip(hits, FIELD_NAMES, g.as_tuple())]
    return HyperParams(*values)


def encode(g: HyperParams, domains: dict | None = None) -> np.ndarray:
    """Position of each field value inside its domain (useful for distances)."""
    domains = DOMAINS if domains is None else domains
    return np.array([domains[name].index(v) for name, v in zip(FIELD_NAMES, g.as_tuple())])


# ---------------------------------------------------------------------------
# Fitness


def validation_kld_fitness(train_cfg: TrainConfig | None = None) -> FitnessFn:
    """Train a ForGAN for the gene and report its best validation KLD."""
    base = TrainConfig(total_generator_steps=300, validation_every=50) \
        if train_cfg is None else train_cfg

    def fitness(hyper: HyperParams, dataset: WindowedDataset, seed: int) -> float | None:
        cfg = TrainConfig.from_dict({**base.to_dict(), "seed": seed,
                                     "checkpoint_every": 0, "checkpoint_dir": None})
        _, log = train_forgan(dataset, hyper, cfg)
        scores = [v for _, v in log.validation if v is not None]
        return min(scores) if scores else None

    return fitness


def _as_fitness(value) -> float:
    if value is None:
        return math.inf
    value = float(value)
    return math.inf if math.isnan(value) else value


def _fitness_json(value: float):
    return "undefined" if math.isinf(value) else value


def _fitness_from_json(value) -> float:
    return math.inf if value == "undefined" else float(value)


def gene_seed(seed: int, hyper: HyperParams) -> int:
    """Training seed for a gene, so cached and fresh evaluations agree."""
    return int(substream(seed, "fitness:" + repr(hyper.as_tuple())).integers(2 ** 31))


# ---------------------------------------------------------------------------
# Driver


def _rank(pool: list[Gene]) -> list[Gene]:
    # stable: earlier pool members win ties, so survivors keep their places
    return sorted(pool, key=lambda g: g.fitness)


def _fresh(make, taken: set, attempts: int = 32) -> HyperParams:
    # redraw genes already in the pool so duplicates cannot crowd it out
    for _ in range(attempts):
        h = make()
        if h not in taken:
            break
    taken.add(h)
    return h


def _load_log(path: Path) -> list[dict]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(json.loads(line))
    return records


def run_ga(dataset: WindowedDataset | None, cfg: GaConfig | None = None,
           fitness_fn: FitnessFn | None = None, log_path=None,
           resume: bool = True) -> GaResult:
    """Evolve the pool for ``cfg.iterations`` rounds and return the best gene seen.

    ``fitness_fn(hyper, dataset, seed)`` defaults to ForGAN validation KLD under
    ``cfg.train``.  Results are cached per distinct gene, so the number of
    fitness calls never exceeds ``pool_size * iterations``.  With ``log_path``
    each iteration is appended as one JSON line; a later call with the same
    path and ``resume=True`` continues after the last logged iteration.
    """
    cfg = GaConfig() if cfg is None else cfg
    fitness_fn = validation_kld_fitness(cfg.train) if fitness_fn is None else fitness_fn
    domains = search_domains(dataset)
    rng = substream(cfg.seed, "ga")
    cache: dict[HyperParams, float] = {}
    history: list[dict] = []
    n_calls = 0
    start = 0
    log_path = None if log_path is None else Path(log_path)

    if log_path is not None and log_path.exists() and resume:
        history = _load_log(log_path)
        for rec in history:
            for entry in rec["pool"]:
                g = Gene.from_dict(entry)
                cache[g.hyper] = g.fitness
        if history:
            last = history[-1]
            if last["config"] != cfg.to_dict():
                raise ConfigError(f"{log_path} was written with a different GA configuration")
            start = last["iteration"] + 1
            n_calls = last["n_evaluations"]
            candidates = [HyperParams.from_dict(h) for h in last["next_candidates"]]
            rng.bit_generator.state = last["rng_state"]
    elif log_path is not None and log_path.exists():
        log_path.unlink()
    if start == 0:
        taken: set = set()
        candidates = [_fresh(lambda: random_gene(rng, domains), taken)
                      for _ in range(cfg.pool_size)]

    for it in range(start, cfg.iterations):
        evaluated = []
        for h in candidates:
            if h not in cache:
                cache[h] = _as_fitness(fitness_fn(h, dataset, gene_seed(cfg.seed, h)))
                n_calls += 1
                logger.info("gene %s -> %s", h.as_tuple(), cache[h])
            evaluated.append(Gene(h, cache[h]))
        pool = _rank(list({g.hyper: g for g in evaluated}.values()))[:cfg.pool_size]
        survivors = [g.hyper for g in pool[:cfg.survivors]]
        taken = set(survivors)

        def child():
            i, j = rng.choice(len(survivors), size=2, replace=False)
            return crossover(survivors[i], survivors[j], rng)

        def mutant():
            parent = survivors[int(rng.integers(len(survivors)))]
            return mutate(parent, cfg.mutation_rate, rng, domains)

        offspring = [_fresh(child, taken) for _ in range(cfg.n_crossover)]
        offspring += [_fresh(mutant, taken) for _ in range(cfg.n_mutation)]
        candidates = survivors + offspring
        record = {
            "iteration": it,
            "pool": [g.to_dict() for g in pool],
            "best": pool[0].to_dict(),
            "n_evaluations": n_calls,
            "next_candidates": [h.to_dict() for h in candidates],
            "rng_state": rng.bit_generator.state,
            "config": cfg.to_dict(),
        }
        history.append(record)
        if log_path is not None:
            log_path.parent.mkdir(parents=True, exist_ok=True)
            with open(log_path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(record, sort_keys=True) + "\n")

    if not history:
        raise ConfigError("GA ran for zero iterations")
    best = min((Gene.from_dict(rec["best"]) for rec in history), key=lambda g: g.fitness)
    final = [Gene.from_dict(e) for e in history[-1]["pool"]]
    all_undefined = all(math.isinf(g.fitness) for g in final)
    if all_undefined:
        warnings.warn("every gene in the final pool has undefined fitness", RuntimeWarning)
    return GaResult(best, history, n_calls, all_undefined)
