"""Command-line experiment runner.

Subcommands: ``generate``, ``train``, ``evaluate``, ``tune`` and
``full-experiment``.  Every command writes its artifacts plus a
``manifest.json`` into ``--out``.  Exit status is 0 on success, 2 for
configuration errors, 3 for data or file errors and 4 when training diverges.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

from . import __version__
from .config import PRESET_NAMES, ExperimentConfig, resolve_config
from .data import WindowedDataset
from .exceptions import ConfigError, DataError, ModelFormatError, ShapeError
from .ga import run_ga
from .metrics import EvaluationReport, evaluate_deterministic, evaluate_probabilistic
from .model import ForGanModel, HyperParams, load_model, save_model, train_forgan, \
    train_gregression
from .rng import substream

logger = logging.getLogger("forgan")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4
MODEL_KINDS = ("forgan", "g-regression")


class StageError(Exception):
    """Wraps a failure with the pipeline stage it happened in."""

    def __init__(self, stage: str, error: Exception):
        super().__init__(f"stage '{stage}' failed: {error}")
        self.stage = stage
        self.error = error


class _Stage:
    def __init__(self, name: str):
        self.name = name

    def __enter__(self):
        logger.info("stage %s", self.name)
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc is not None and not isinstance(exc, StageError) and isinstance(exc, Exception):
            raise StageError(self.name, exc) from exc
        return False


# ---------------------------------------------------------------------------
# Manifest


class Manifest:
    def __init__(self, out: Path, command: str, cfg: ExperimentConfig | None):
        self.out = out
        self.command = command
        self.cfg = cfg
        self.artifacts: dict[str, str] = {}
        self.extra: dict = {}
        self._t0 = time.perf_counter()

    def add(self, name: str, path: Path) -> Path:
        self.artifacts[name] = str(Path(path).resolve().relative_to(self.out.resolve()))
        return path

    def write(self) -> Path:
        missing = [n for n, p in self.artifacts.items() if not (self.out / p).exists()]
        if missing:
            raise DataError(f"artifacts missing from {self.out}: {missing}")
        doc = {
            "tool": "forgan",
            "version": __version__,
            "command": self.command,
            "seed": None if self.cfg is None else self.cfg.seed,
            "config": None if self.cfg is None else self.cfg.to_dict(),
            "artifacts": dict(sorted(self.artifacts.items())),
            **self.extra,
            "wall_clock_seconds": round(time.perf_counter() - self._t0, 3),
        }
        path = self.out / "manifest.json"
        path.write_text(json.dumps(doc, indent=2) + "\n")
        return path


def read_manifest(path) -> tuple[dict, Path]:
    path = Path(path)
    if not path.exists():
        raise DataError(f"manifest not found: {path}")
    return json.loads(path.read_text()), path.parent


# ---------------------------------------------------------------------------
# Stages


def _load_dataset(path) -> WindowedDataset:
    path = Path(path)
    if not (path / "dataset.csv").exists():
        raise DataError(f"no dataset found at {path}")
    return WindowedDataset.load(path)


def stage_generate(cfg: ExperimentConfig, out: Path, manifest: Manifest) -> WindowedDataset:
    ds, series = cfg.build_dataset()
    csv_path, meta_path = ds.save(out / "dataset")
    manifest.add("dataset_csv", csv_path)
    manifest.add("dataset_meta", meta_path)
    if series is not None:
        series_path = out / "dataset" / "series.csv"
        with open(series_path, "w") as fh:
            fh.write("value\n")
            fh.writelines(repr(float(v)) + "\n" for v in series)
        manifest.add("series_csv", series_path)
    manifest.extra["dataset_dir"] = "dataset"
    return ds


def stage_train(cfg: ExperimentConfig, hyper: HyperParams, ds: WindowedDataset, kind: str,
                out: Path, manifest: Manifest) -> ForGanModel:
    trainer = train_forgan if kind == "forgan" else train_gregression
    t0 = time.perf_counter()
    model, log = trainer(ds, hyper, cfg.train)
    logger.info("%s trained in %.1f s (best step %s)", kind, time.perf_counter() - t0,
                log.best_step)
    manifest.add(f"model_{kind}", save_model(model, out / f"model-{kind}.forgan"))
    loss_path = out / f"loss-{kind}.csv"
    loss_path.write_text(log.to_csv())
    manifest.add(f"loss_{kind}", loss_path)
    val_path = out / f"validation-{kind}.csv"
    val_path.write_text(log.validation_csv())
    manifest.add(f"validation_{kind}", val_path)
    return model


def evaluate_model(model: ForGanModel, ds: WindowedDataset, cfg: ExperimentConfig
                   ) -> EvaluationReport:
    if ds.condition_len < model.hyper.condition_len:
        raise DataError(f"model needs {model.hyper.condition_len}-step windows, "
                        f"dataset has {ds.condition_len}")
    c, y, clusters = ds.split("test")
    if model.deterministic:
        return evaluate_deterministic(model, c, y, clusters)
    return evaluate_probabilistic(model, c, y, cfg.eval.samples_per_condition, cfg.eval.runs,
                                  substream(cfg.seed, "eval"), clusters)


def stage_evaluate(model: ForGanModel, ds: WindowedDataset, cfg: ExperimentConfig,
                   out: Path, manifest: Manifest) -> EvaluationReport:
    report = evaluate_model(model, ds, cfg)
    kind = model.kind
    doc = {"model_kind": kind, "hyper": model.hyper.to_dict(), **report.to_dict()}
    report_path = out / f"report-{kind}.json"
    report_path.write_text(json.dumps(doc, indent=2) + "\n")
    manifest.add(f"report_{kind}", report_path)
    hist_path = out / f"histogram-{kind}.csv"
    hist_path.write_text(report.histogram_csv())
    manifest.add(f"histogram_{kind}", hist_path)
    for label, sub in sorted(report.clusters.items()):
        p = out / f"histogram-{kind}-cluster{label}.csv"
        p.write_text(sub.histogram_csv())
        manifest.add(f"histogram_{kind}_cluster{label}", p)
    kld = "undefined" if report.kld is None else f"{report.kld:.6g}"
    print(f"{kind}: KLD {kld}  RMSE {report.rmse_mean:.6g} +- {report.rmse_std:.3g}  "
          f"MAE {report.mae_mean:.6g} +- {report.mae_std:.3g}")
    return report


def stage_tune(cfg: ExperimentConfig, ds: WindowedDataset, out: Path,
               manifest: Manifest) -> HyperParams:
    log_path = out / "ga_log.jsonl"
    result = run_ga(ds, cfg.ga, log_path=log_path, resume=True)
    manifest.add("ga_log", log_path)
    best_path = out / "best_hyper.json"
    fragment = {"hyper": result.best.hyper.to_dict(), **result.to_dict()}
    best_path.write_text(json.dumps(fragment, indent=2) + "\n")
    manifest.add("best_hyper", best_path)
    manifest.extra["ga_warning_all_undefined"] = result.all_undefined
    if result.all_undefined:
        print("warning: no gene reached a defined validation KLD", file=sys.stderr)
    print(f"best gene: {result.best.hyper.as_tuple()} fitness {result.best.to_dict()['fitness']}")
    return result.best.hyper


# ---------------------------------------------------------------------------
# Commands


def _config_from_args(args) -> ExperimentConfig:
    overrides: dict = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    dataset: dict = {}
    if getattr(args, "n", None) is not None:
        dataset["n"] = args.n
    if getattr(args, "csv", None) is not None:
        dataset["path"] = args.csv
    if getattr(args, "column", None) is not None:
        dataset["column"] = int(args.column) if args.column.isdigit() else args.column
    if dataset:
        overrides["dataset"] = dataset
    if getattr(args, "steps", None) is not None:
        overrides["train"] = {"total_generator_steps": args.steps}
    if getattr(args, "hyper_file", None):
        try:
            frag = json.loads(Path(args.hyper_file).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{args.hyper_file}: invalid JSON ({exc})") from None
        overrides["hyper"] = frag.get("hyper", frag)
    return resolve_config(args.preset, args.config, args.paper_scale, overrides)


def _dataset_for(args, cfg: ExperimentConfig, out: Path, manifest: Manifest):
    if getattr(args, "data", None):
        with _Stage("load-data"):
            ds = _load_dataset(args.data)
        manifest.extra["dataset_dir"] = str(Path(args.data).resolve())
        return ds
    with _Stage("generate"):
        return stage_generate(cfg, out, manifest)


def cmd_generate(args) -> int:
    cfg = _config_from_args(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    manifest = Manifest(out, "generate", cfg)
    with _Stage("generate"):
        ds = stage_generate(cfg, out, manifest)
    print(f"wrote {len(ds)} windows to {out / 'dataset'}")
    manifest.write()
    return EXIT_OK


def _hyper_or_fail(cfg: ExperimentConfig) -> HyperParams:
    if cfg.hyper is None:
        raise ConfigError("hyperparameters are set to 'tune'; run tune first and pass "
                          "--hyper-file")
    return cfg.hyper


def cmd_train(args) -> int:
    cfg = _config_from_args(args)
    hyper = _hyper_or_fail(cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    manifest = Manifest(out, "train", cfg)
    ds = _dataset_for(args, cfg, out, manifest)
    kinds = MODEL_KINDS if args.model == "both" else (args.model,)
    for kind in kinds:
        with _Stage(f"train-{kind}"):
            stage_train(cfg, hyper, ds, kind, out, manifest)
    manifest.write()
    return EXIT_OK


def cmd_evaluate(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.manifest:
        doc, root = read_manifest(args.manifest)
        cfg = ExperimentConfig.from_dict(doc["config"])
        data_dir = Path(doc["dataset_dir"])
        data_dir = data_dir if data_dir.is_absolute() else root / data_dir
        model_files = [root / p for n, p in sorted(doc["artifacts"].items())
                       if n.startswith("model_")]
        if args.model_file:
            model_files = [Path(args.model_file)]
    else:
        cfg = _config_from_args(args)
        if not args.data or not args.model_file:
            raise ConfigError("evaluate needs --data and --model-file, or --manifest")
        data_dir, model_files = Path(args.data), [Path(args.model_file)]
    if not model_files:
        raise ConfigError("no model to evaluate")
    manifest = Manifest(out, "evaluate", cfg)
    manifest.extra["dataset_dir"] = str(data_dir.resolve())
    with _Stage("load-data"):
        ds = _load_dataset(data_dir)
    for path in model_files:
        with _Stage("evaluate"):
            if not path.exists():
                raise DataError(f"model file not found: {path}")
            stage_evaluate(load_model(path), ds, cfg, out, manifest)
    manifest.write()
    return EXIT_OK


def cmd_tune(args) -> int:
    cfg = _config_from_args(args)
    if args.pool is not None or args.iterations is not None:
        ga = cfg.ga.to_dict()
        if args.pool is not None:
            ga.update(pool_size=args.pool, survivors=max(2, args.pool // 2),
                      n_crossover=args.pool // 2, n_mutation=args.pool - args.pool // 2)
        if args.iterations is not None:
            ga["iterations"] = args.iterations
        cfg = ExperimentConfig.from_dict({**cfg.to_dict(), "ga": ga})
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    manifest = Manifest(out, "tune", cfg)
    ds = _dataset_for(args, cfg, out, manifest)
    with _Stage("tune"):
        stage_tune(cfg, ds, out, manifest)
    manifest.write()
    return EXIT_OK


def cmd_full_experiment(args) -> int:
    cfg = _config_from_args(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    manifest = Manifest(out, "full-experiment", cfg)
    ds = _dataset_for(args, cfg, out, manifest)
    hyper = cfg.hyper
    if hyper is None or args.tune:
        with _Stage("tune"):
            hyper = stage_tune(cfg, ds, out, manifest)
        if ds.condition_len < hyper.condition_len:
            raise StageError("tune", DataError("tuned window exceeds the dataset width"))
    manifest.extra["hyper"] = hyper.to_dict()
    kinds = MODEL_KINDS if args.model == "both" else (args.model,)
    summary = {}
    for kind in kinds:
        with _Stage(f"train-{kind}"):
            model = stage_train(cfg, hyper, ds, kind, out, manifest)
        with _Stage(f"evaluate-{kind}"):
            report = stage_evaluate(model, ds, cfg, out, manifest)
        summary[kind] = {"kld": report.to_dict()["kld"], "rmse_mean": report.rmse_mean}
    manifest.extra["summary"] = summary
    manifest.write()
    return EXIT_OK


# ---------------------------------------------------------------------------
# Entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="forgan", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"forgan {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, data=True, model=False):
        p.add_argument("--preset", choices=PRESET_NAMES)
        p.add_argument("--config", help="JSON config file (merged over the preset)")
        p.add_argument("--seed", type=int)
        p.add_argument("--out", default="forgan-out")
        p.add_argument("--paper-scale", action="store_true",
                       help="use the larger budgets stored with the preset")
        p.add_argument("--n", type=int, help="number of windows (or series length)")
        p.add_argument("--csv", help="series CSV for the traffic preset")
        p.add_argument("--column", help="CSV column name or index")
        if data:
            p.add_argument("--data", help="existing dataset directory")
        if model:
            p.add_argument("--model", choices=MODEL_KINDS + ("both",), default="forgan")
            p.add_argument("--steps", type=int, help="override the training budget")
            p.add_argument("--hyper-file", help="JSON with a 'hyper' block, e.g. from tune")

    p = sub.add_parser("generate", help="build a dataset")
    common(p, data=False)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", help="train a model")
    common(p, model=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="evaluate a trained model on the test split")
    common(p)
    p.add_argument("--model-file")
    p.add_argument("--manifest", help="re-run evaluation from a train/full-experiment manifest")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("tune", help="genetic hyperparameter search")
    common(p)
    p.add_argument("--pool", type=int)
    p.add_argument("--iterations", type=int)
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("full-experiment", help="generate, (tune,) train, evaluate")
    common(p, model=True)
    p.set_defaults(func=cmd_full_experiment, model="both")
    p.add_argument("--tune", action="store_true", help="tune before training")
    return parser


def _exit_code(error: Exception) -> int:
    if isinstance(error, ConfigError):
        return EXIT_CONFIG
    if isinstance(error, (DataError, ShapeError, ModelFormatError, OSError)):
        return EXIT_DATA
    if isinstance(error, FloatingPointError):
        return EXIT_NUMERIC
    return 1


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _exit_code(exc.error)
    except (ConfigError, DataError, ShapeError, ModelFormatError, OSError,
            FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _exit_code(exc)


if __name__ == "__main__":
    sys.exit(main())
