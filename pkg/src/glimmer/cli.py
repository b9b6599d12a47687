"""Command-line pipeline: synth, train, tune, eval, predict.

Exit codes are a stable contract: 0 success, 1 data error, 2 usage error,
3 numeric error during training, 4 checkpoint error. All randomness flows
from explicit ``--seed`` flags, so every command is deterministic given its
arguments.

Each command accepts ``--config FILE`` with flat ``key = value`` lines
(``#`` starts a comment; keys use underscores, e.g. ``batch_size = 48``).
Command-line flags override config-file values; keys a command does not
know are ignored so one file can drive several commands.
"""

from __future__ import annotations

import csv
import functools
import glob as globmod
import json
import sys
from datetime import datetime, timezone
from pathlib import Path

import click
import numpy as np

from .data import (
    CgmRecord,
    Thresholds,
    WindowSet,
    build_features,
    chronological_split,
    generate_synthetic,
    make_windows,
    parse_csv,
    record_timestamps,
    write_csv,
)
from .errors import CheckpointError, DataError, NumericError, ShapeError
from .evaluation import (
    EvalReport,
    evaluate_predictions,
    write_ceg_pairs_csv,
    write_report_csv,
    write_report_json,
)
from .forecaster import GlucoseForecaster
from .pool import indexed_map
from .scaling import WindowScaler
from .tuner import (
    GA_LOG_HEADER,
    GaConfig,
    make_training_fitness,
    quadratic_surrogate,
    run_ga,
)

EXIT_DATA = 1
EXIT_NUMERIC = 3
EXIT_CHECKPOINT = 4


def _handle_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (CheckpointError, ShapeError) as exc:
            click.echo(f"checkpoint error: {exc}", err=True)
            sys.exit(EXIT_CHECKPOINT)
        except NumericError as exc:
            click.echo(f"numeric error: {exc}", err=True)
            sys.exit(EXIT_NUMERIC)
        except (DataError, OSError) as exc:
            click.echo(f"data error: {exc}", err=True)
            sys.exit(EXIT_DATA)
        except ValueError as exc:
            raise click.UsageError(str(exc))

    return wrapper


def parse_config_file(path: str) -> dict[str, str]:
    """Flat ``key = value`` lines; blank lines and ``#`` comments are skipped."""
    values: dict[str, str] = {}
    for raw in Path(path).read_text(encoding="utf-8").splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise click.UsageError(f"bad config line (expected key = value): {raw!r}")
        key, value = line.split("=", 1)
        values[key.strip()] = value.strip()
    return values


def _config_callback(ctx, param, value):
    if value:
        ctx.default_map = {**(ctx.default_map or {}), **parse_config_file(value)}
    return value


def config_option(fn):
    return click.option(
        "--config",
        type=click.Path(exists=True, dir_okay=False),
        is_eager=True,
        expose_value=False,
        callback=_config_callback,
        help="Flat key = value config file; flags override its values.",
    )(fn)


def threshold_options(fn):
    fn = click.option("--t-hypo", type=float, default=70.0, show_default=True,
                      help="Hypoglycemia boundary (mg/dL).")(fn)
    fn = click.option("--t-hyper", type=float, default=180.0, show_default=True,
                      help="Hyperglycemia boundary (mg/dL).")(fn)
    return fn


@click.group()
@click.version_option(package_name="glimmer")
def main():
    """Glucose forecasting toolkit: synthesize, train, tune, evaluate, predict."""


# ---------------------------------------------------------------------------
# synth
# ---------------------------------------------------------------------------


@main.command()
@config_option
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--days", type=click.IntRange(min=1), default=14, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), required=True,
              help="Output CSV path.")
@threshold_options
@_handle_errors
def synth(seed, days, out, t_hypo, t_hyper):
    """Write a deterministic synthetic CGM/pump CSV (288 records/day)."""
    records = generate_synthetic(seed, days, Thresholds(t_hypo, t_hyper))
    Path(out).parent.mkdir(parents=True, exist_ok=True)
    write_csv(records, out)
    click.echo(f"wrote {len(records)} records to {out}")


# ---------------------------------------------------------------------------
# shared pipeline helpers
# ---------------------------------------------------------------------------


def _windows_for(records: list[CgmRecord], thresholds: Thresholds) -> WindowSet:
    feats = build_features(records, thresholds)
    return make_windows(feats, record_timestamps(records))


def _split_records(records, test_fraction: float | None):
    """Optional test carve-out, then an 80/20 train/val split of the rest."""
    test_records = None
    train_records = records
    if test_fraction:
        train_records, test_records = chronological_split(records, 1.0 - test_fraction)
    tr, val = chronological_split(train_records, 0.8)
    return tr, val, test_records


def _expand_data(data: str) -> list[str]:
    if any(ch in data for ch in "*?["):
        paths = sorted(globmod.glob(data))
        if not paths:
            raise click.UsageError(f"--data glob {data!r} matched no files")
        return paths
    return [data]


def _write_history_csv(history, path):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["epoch", "train_loss", "val_loss"])
        for row in history:
            writer.writerow([row.epoch, repr(row.train_loss), repr(row.val_loss)])


def train_options(fn):
    fn = click.option("--loss", type=click.Choice(["weighted", "plain"]), default="weighted",
                      show_default=True, help="Region-weighted MAE or the plain-MAE baseline.")(fn)
    fn = click.option("--w-hypo", type=float, default=3.296, show_default=True)(fn)
    fn = click.option("--w-hyper", type=float, default=2.382, show_default=True)(fn)
    fn = click.option("--epochs", type=click.IntRange(min=1), default=30, show_default=True)(fn)
    fn = click.option("--batch-size", type=click.IntRange(min=1), default=48, show_default=True)(fn)
    fn = click.option("--learning-rate", type=float, default=1e-3, show_default=True)(fn)
    fn = click.option("--seed", type=int, default=0, show_default=True)(fn)
    fn = click.option("--lstm-units", type=click.IntRange(min=1), default=8, show_default=True)(fn)
    fn = click.option("--dense-hidden", type=click.IntRange(min=0), default=0, show_default=True)(fn)
    return fn


def _make_forecaster(loss, w_hypo, w_hyper, t_hypo, t_hyper, epochs, batch_size,
                     learning_rate, seed, lstm_units, dense_hidden) -> GlucoseForecaster:
    return GlucoseForecaster(
        lstm_units=lstm_units,
        dense_hidden=dense_hidden,
        loss=loss,
        w_hypo=w_hypo,
        w_hyper=w_hyper,
        t_hypo=t_hypo,
        t_hyper=t_hyper,
        batch_size=batch_size,
        epochs=epochs,
        learning_rate=learning_rate,
        seed=seed,
    )


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------


@main.command()
@config_option
@click.option("--data", required=True, help="Input CSV path (or glob for per-patient runs).")
@click.option("--out", type=click.Path(file_okay=False), required=True,
              help="Output directory for checkpoint.json, history.csv and test.csv.")
@click.option("--test-fraction", type=click.FloatRange(0.0, 0.9), default=0.2, show_default=True,
              help="Tail share carved off as the held-out test split (0 = the file is "
                   "already a train file).")
@train_options
@threshold_options
@click.option("--quiet", is_flag=True, help="Suppress per-epoch progress lines.")
@_handle_errors
def train(data, out, test_fraction, loss, w_hypo, w_hyper, epochs, batch_size,
          learning_rate, seed, lstm_units, dense_hidden, t_hypo, t_hyper, quiet):
    """Train a forecaster: split, craft features, window, scale, fit.

    Un-partitioned data gets an 80/20 train/test split first (the test tail
    is written to test.csv for later `glimmer eval`), then the training part
    is split 80/20 into train/val for epoch selection.
    """
    paths = _expand_data(data)
    for path in paths:
        out_dir = Path(out) if len(paths) == 1 else Path(out) / Path(path).stem
        out_dir.mkdir(parents=True, exist_ok=True)
        thresholds = Thresholds(t_hypo, t_hyper)
        records = parse_csv(path)
        tr_records, val_records, test_records = _split_records(records, test_fraction)
        tr = _windows_for(tr_records, thresholds)
        val = _windows_for(val_records, thresholds)
        if len(tr) == 0 or len(val) == 0:
            raise DataError(f"{path}: not enough contiguous data to build training windows")

        est = _make_forecaster(loss, w_hypo, w_hyper, t_hypo, t_hyper, epochs,
                               batch_size, learning_rate, seed, lstm_units, dense_hidden)
        on_epoch = None
        if not quiet:
            on_epoch = lambda s: click.echo(
                f"epoch {s.epoch}: train_loss={s.train_loss:.4f} val_loss={s.val_loss:.4f}"
            )
        est.fit(tr.x, tr.y, X_val=val.x, y_val=val.y, on_epoch=on_epoch)

        est.save(str(out_dir / "checkpoint.json"))
        _write_history_csv(est.history_, out_dir / "history.csv")
        if test_records is not None:
            write_csv(test_records, str(out_dir / "test.csv"))
        click.echo(
            f"{path}: trained on {len(tr)} windows, best epoch {est.best_epoch_}, "
            f"checkpoint in {out_dir}"
        )


# ---------------------------------------------------------------------------
# tune
# ---------------------------------------------------------------------------


@main.command()
@config_option
@click.option("--data", required=True, help="Input CSV path.")
@click.option("--out", type=click.Path(file_okay=False), required=True,
              help="Output directory for best_weights.json and ga_log.csv.")
@click.option("--test-fraction", type=click.FloatRange(0.0, 0.9), default=0.2, show_default=True)
@click.option("--population", type=click.IntRange(min=2), default=20, show_default=True)
@click.option("--generations", type=click.IntRange(min=1), default=25, show_default=True)
@click.option("--mutation-std", type=float, default=0.5, show_default=True)
@click.option("--fitness-epochs", type=click.IntRange(min=1), default=5, show_default=True,
              help="Reduced training budget per fitness evaluation.")
@click.option("--retrain", is_flag=True,
              help="Retrain at the full epoch budget with the winning weights.")
@click.option("--surrogate", is_flag=True,
              help="Harness mode: quadratic fitness centered at (3, 2), no training.")
@train_options
@threshold_options
@_handle_errors
def tune(data, out, test_fraction, population, generations, mutation_std, fitness_epochs,
         retrain, surrogate, loss, w_hypo, w_hyper, epochs, batch_size, learning_rate,
         seed, lstm_units, dense_hidden, t_hypo, t_hyper):
    """Search (w_hypo, w_hyper) with the genetic algorithm.

    Fitness is the validation RMSE of a reduced-budget training run with
    the candidate weights; the log records one row per generation.
    """
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    ga_cfg = GaConfig(population=population, generations=generations,
                      mutation_std=mutation_std, seed=seed)
    thresholds = Thresholds(t_hypo, t_hyper)

    if surrogate:
        best, log = run_ga(ga_cfg, quadratic_surrogate())
    else:
        records = parse_csv(data)
        tr_records, val_records, _ = _split_records(records, test_fraction)
        tr = _windows_for(tr_records, thresholds)
        val = _windows_for(val_records, thresholds)
        if len(tr) == 0 or len(val) == 0:
            raise DataError(f"{data}: not enough contiguous data to build training windows")
        est = _make_forecaster("weighted", w_hypo, w_hyper, t_hypo, t_hyper, fitness_epochs,
                               batch_size, learning_rate, seed, lstm_units, dense_hidden)
        scaler = WindowScaler().fit(tr.x)
        arch = est._arch(tr.x.shape[1], tr.x.shape[2], tr.y.shape[1])
        fitness = make_training_fitness(
            scaler.transform(tr.x), tr.y, scaler.transform(val.x), val.y,
            arch, est._train_config(),
        )
        best, log = run_ga(ga_cfg, fitness)

    with open(out_dir / "ga_log.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(GA_LOG_HEADER)
        for row in log:
            writer.writerow([row.generation, repr(row.best_w_hypo), repr(row.best_w_hyper),
                             repr(row.best_fitness), repr(row.mean_fitness)])
    with open(out_dir / "best_weights.json", "w", encoding="utf-8") as fh:
        json.dump({"w_hypo": best.w_hypo, "w_hyper": best.w_hyper, "fitness": best.fitness},
                  fh, indent=2)
    click.echo(f"best weights ({best.w_hypo:.3f}, {best.w_hyper:.3f}), fitness {best.fitness:.4f}")

    if retrain and not surrogate:
        est = _make_forecaster("weighted", best.w_hypo, best.w_hyper, t_hypo, t_hyper, epochs,
                               batch_size, learning_rate, seed, lstm_units, dense_hidden)
        est.fit(tr.x, tr.y, X_val=val.x, y_val=val.y)
        est.save(str(out_dir / "checkpoint.json"))
        _write_history_csv(est.history_, out_dir / "history.csv")
        click.echo(f"retrained at full budget, checkpoint in {out_dir}")


# ---------------------------------------------------------------------------
# eval
# ---------------------------------------------------------------------------


@main.command(name="eval")
@config_option
@click.option("--data", required=True,
              help="Test CSV path (or glob: per-patient plus pooled reports).")
@click.option("--checkpoint", "checkpoints", multiple=True, required=True,
              type=click.Path(exists=True, dir_okay=False),
              help="Checkpoint path; repeat for one-per-seed reporting.")
@click.option("--out", type=click.Path(file_okay=False), required=True,
              help="Output directory for report.json, report.csv, ceg_pairs.csv.")
@threshold_options
@_handle_errors
def eval_cmd(data, checkpoints, out, t_hypo, t_hyper):
    """Score checkpoints on a test CSV and write JSON/CSV reports.

    With several checkpoints the report carries mean and std across them
    (seed-indexed in the order given). The CEG pair dump pools every
    checkpoint's (reference, prediction) pairs.
    """
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    thresholds = Thresholds(t_hypo, t_hyper)
    models = [GlucoseForecaster.load(p) for p in checkpoints]

    paths = _expand_data(data)
    pooled_truth: list[np.ndarray] = []
    pooled_pred: list[np.ndarray] = []
    for path in paths:
        records = parse_csv(path)
        windows = _windows_for(records, thresholds)
        if len(windows) == 0:
            raise DataError(f"{path}: no complete windows in test data")
        truth = windows.y.ravel()
        preds = indexed_map(lambda m: m.predict(windows.x).ravel(), models)
        results = [evaluate_predictions(truth, p, thresholds) for p in preds]
        report = EvalReport(seeds=list(range(len(models))), per_seed=results)

        prefix = "" if len(paths) == 1 else f"{Path(path).stem}."
        write_report_json(report, str(out_dir / f"{prefix}report.json"))
        write_report_csv(report, str(out_dir / f"{prefix}report.csv"))
        write_ceg_pairs_csv(
            np.tile(truth, len(models)), np.concatenate(preds),
            str(out_dir / f"{prefix}ceg_pairs.csv"),
        )
        pooled_truth.append(np.tile(truth, len(models)))
        pooled_pred.append(np.concatenate(preds))
        agg = report.aggregate()
        click.echo(
            f"{path}: rmse {agg['rmse']['mean']:.3f} +/- {agg['rmse']['std']:.3f}, "
            f"mae {agg['mae']['mean']:.3f} +/- {agg['mae']['std']:.3f} "
            f"({len(models)} checkpoint(s), {len(windows)} windows)"
        )

    if len(paths) > 1:
        truth = np.concatenate(pooled_truth)
        pred = np.concatenate(pooled_pred)
        pooled = EvalReport(seeds=[0], per_seed=[evaluate_predictions(truth, pred, thresholds)])
        write_report_json(pooled, str(out_dir / "pooled.report.json"))
        write_report_csv(pooled, str(out_dir / "pooled.report.csv"))


# ---------------------------------------------------------------------------
# predict
# ---------------------------------------------------------------------------


@main.command()
@config_option
@click.option("--data", required=True, type=click.Path(exists=True, dir_okay=False),
              help="Input CSV with at least one full input window.")
@click.option("--checkpoint", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", type=click.Path(dir_okay=False), required=True,
              help="Output forecast CSV path.")
@threshold_options
@_handle_errors
def predict(data, checkpoint, out, t_hypo, t_hyper):
    """Forecast 12 future values (+5..+60 min) per complete input window."""
    thresholds = Thresholds(t_hypo, t_hyper)
    model = GlucoseForecaster.load(checkpoint)
    records = parse_csv(data)
    feats = build_features(records, thresholds)
    horizon = model.params_.arch.output_len
    windows = make_windows(feats, record_timestamps(records),
                           in_len=model.params_.arch.input_len,
                           out_len=horizon)
    Path(out).parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["origin_timestamp"] + [f"t_plus_{5 * (i + 1)}_min" for i in range(horizon)])
        if len(windows) > 0:
            preds = model.predict(windows.x)
            for origin, row in zip(windows.origin_s, preds):
                stamp = datetime.fromtimestamp(int(origin), tz=timezone.utc)
                writer.writerow([stamp.strftime("%Y-%m-%dT%H:%M:%SZ")] + [repr(float(v)) for v in row])
    click.echo(f"wrote {len(windows)} forecast row(s) to {out}")


if __name__ == "__main__":
    main()
