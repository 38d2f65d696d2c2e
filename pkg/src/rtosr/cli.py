"""Command-line interface.

Every subcommand exits 0 on success; pipeline failures print a JSON object
``{"error": <type>, "message": <text>}`` on stderr and exit 1.
"""

from __future__ import annotations

import functools
import json
import sys
from pathlib import Path

import click

from . import (
    config as config_mod,
    manifest as manifest_mod,
    rt_data,
    service as service_mod,
    survey as survey_mod,
    synth,
    thresholds as thresholds_mod,
    training,
)
from .errors import RtosrError
from .evaluation import write_verdict_csv
from .model import load_checkpoint


def pipeline_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (RtosrError, ValueError, KeyError, OSError) as exc:
            sys.stderr.write(
                json.dumps({"error": type(exc).__name__, "message": str(exc)}) + "\n"
            )
            sys.exit(1)

    return wrapper


@click.group()
def main():
    """Reaction-time-conditioned open set recognition pipeline."""


@main.command("gen-data")
@click.option("--out-manifest", type=click.Path(), required=True)
@click.option("--out-rt", type=click.Path(), required=True, help="rt_agg CSV output")
@click.option("--n-known", type=int, default=20, show_default=True)
@click.option("--n-unknown", type=int, default=5, show_default=True)
@click.option("--dim", type=int, default=16, show_default=True)
@click.option("--samples-per-known", type=int, default=50, show_default=True)
@click.option("--test-per-known", type=int, default=25, show_default=True)
@click.option("--samples-per-unknown", type=int, default=50, show_default=True)
@click.option("--annotated-fraction", type=float, default=0.5, show_default=True)
@click.option("--rt-noise", type=float, default=1.0, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@pipeline_errors
def gen_data(
    out_manifest,
    out_rt,
    n_known,
    n_unknown,
    dim,
    samples_per_known,
    test_per_known,
    samples_per_unknown,
    annotated_fraction,
    rt_noise,
    seed,
):
    """Generate the synthetic Gaussian dataset with synthetic RTs."""
    cfg = synth.SyntheticConfig(
        n_known=n_known,
        n_unknown=n_unknown,
        dim=dim,
        samples_per_known=samples_per_known,
        test_per_known=test_per_known,
        samples_per_unknown=samples_per_unknown,
        annotated_class_fraction=annotated_fraction,
        rt_noise=rt_noise,
        seed=seed,
    )
    data = synth.generate_synthetic(cfg)
    with open(out_manifest, "w", encoding="utf-8", newline="") as f:
        manifest_mod.write_manifest_csv(data.manifest, f)
    with open(out_rt, "w", encoding="utf-8", newline="") as f:
        rt_data.write_rt_agg_csv(data.image_rts, f)
    click.echo(f"wrote {len(data.manifest.entries)} samples, {len(data.image_rts)} RTs")


@main.command("split")
@click.option("--manifest", "manifest_path", type=click.Path(exists=True), required=True)
@click.option("--out", type=click.Path(), required=True)
@click.option("--ratio", type=float, default=0.7, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@pipeline_errors
def split_cmd(manifest_path, out, ratio, seed):
    """Per-class train/valid split (RT-annotated samples split proportionally)."""
    with open(manifest_path, encoding="utf-8") as f:
        m = manifest_mod.read_manifest_csv(f)
    result = manifest_mod.split_train_valid(m, ratio=ratio, seed=seed)
    with open(out, "w", encoding="utf-8", newline="") as f:
        manifest_mod.write_manifest_csv(result, f)
    n_train = len(result.subset("train"))
    n_valid = len(result.subset("valid"))
    click.echo(f"split: {n_train} train / {n_valid} valid")


def _config_options(fn):
    opts = [
        click.option("--config", "config_path", type=click.Path(exists=True), default=None),
        click.option("--epochs", type=int, default=None),
        click.option("--batch-size", type=int, default=None),
        click.option("--learning-rate", type=float, default=None),
        click.option("--momentum", type=float, default=None),
        click.option("--weight-decay", type=float, default=None),
        click.option("--w-ce", type=float, default=None),
        click.option("--w-performance", type=float, default=None),
        click.option("--w-exit", type=float, default=None),
        click.option("--ce-mode", type=click.Choice(config_mod.CE_MODES), default=None),
        click.option(
            "--exit-loss-mode", type=click.Choice(config_mod.EXIT_LOSS_MODES), default=None
        ),
        click.option("--coupling", type=click.Choice(config_mod.COUPLING_MODES), default=None),
        click.option("--threshold-period", type=int, default=None),
        click.option("--seed", type=int, default=None),
    ]
    for opt in reversed(opts):
        fn = opt(fn)
    return fn


@main.command("train")
@click.option("--manifest", "manifest_path", type=click.Path(exists=True), required=True)
@click.option("--out-dir", type=click.Path(), required=True)
@_config_options
@pipeline_errors
def train_cmd(manifest_path, out_dir, config_path, **flags):
    """Train with per-epoch checkpoints and the loss-breakdown log."""
    cfg = config_mod.build_config(config_path, flags)
    with open(manifest_path, encoding="utf-8") as f:
        m = manifest_mod.read_manifest_csv(f)
    result = training.train(cfg, m, out_dir=out_dir)
    best = training.select_best_model(result.checkpoints)
    click.echo(
        f"trained {cfg.epochs} epochs; best epoch {best.epoch} "
        f"(val top-1 {best.val_accuracy:.4f})"
    )


def _best_checkpoint_path(run_dir: Path) -> Path:
    paths = sorted((run_dir / "checkpoints").glob("epoch_*.npz"))
    if not paths:
        raise FileNotFoundError(f"no checkpoints under {run_dir}")
    checkpoints = [load_checkpoint(p) for p in paths]
    best = training.select_best_model(checkpoints)
    return paths[checkpoints.index(best)]


@main.command("calibrate")
@click.option("--manifest", "manifest_path", type=click.Path(exists=True), required=True)
@click.option("--run-dir", type=click.Path(exists=True), required=True)
@click.option("--out", type=click.Path(), required=True, help="thresholds JSON output")
@pipeline_errors
def calibrate_cmd(manifest_path, run_dir, out):
    """Select the best checkpoint and compute inference thresholds from it."""
    with open(manifest_path, encoding="utf-8") as f:
        m = manifest_mod.read_manifest_csv(f)
    best_path = _best_checkpoint_path(Path(run_dir))
    ckpt = load_checkpoint(best_path)
    ts = training.calibrate_on_manifest(ckpt.net, m, ckpt.epoch)
    Path(out).write_text(thresholds_mod.thresholds_to_json(ts), encoding="utf-8")
    click.echo(f"best checkpoint {best_path.name}; thresholds -> {out}")


@main.command("evaluate")
@click.option("--manifest", "manifest_path", type=click.Path(exists=True), required=True)
@click.option("--checkpoint", "checkpoint_path", type=click.Path(exists=True), required=False)
@click.option("--run-dir", type=click.Path(exists=True), required=False)
@click.option("--thresholds", "thresholds_path", type=click.Path(exists=True), required=True)
@click.option("--report-out", type=click.Path(), required=True)
@click.option("--verdicts-out", type=click.Path(), default=None)
@pipeline_errors
def evaluate_cmd(manifest_path, checkpoint_path, run_dir, thresholds_path, report_out, verdicts_out):
    """Score both test partitions with the given model and thresholds."""
    if (checkpoint_path is None) == (run_dir is None):
        raise ValueError("pass exactly one of --checkpoint or --run-dir")
    with open(manifest_path, encoding="utf-8") as f:
        m = manifest_mod.read_manifest_csv(f)
    path = Path(checkpoint_path) if checkpoint_path else _best_checkpoint_path(Path(run_dir))
    ckpt = load_checkpoint(path)
    ts = thresholds_mod.thresholds_from_json(
        Path(thresholds_path).read_text(encoding="utf-8")
    )
    report, samples = training.evaluate_manifest(ckpt.net, ts, m)
    Path(report_out).write_text(json.dumps(report, indent=2), encoding="utf-8")
    if verdicts_out:
        with open(verdicts_out, "w", encoding="utf-8", newline="") as f:
            write_verdict_csv(samples, f)
    click.echo(json.dumps(report))


@main.command("report")
@click.argument("report_files", nargs=-1, type=click.Path(exists=True), required=True)
@click.option("--out", type=click.Path(), default=None)
@pipeline_errors
def report_cmd(report_files, out):
    """Aggregate per-seed metric reports into mean +- standard error."""
    reports = [
        json.loads(Path(p).read_text(encoding="utf-8")) for p in report_files
    ]
    agg = training.aggregate_reports(reports)
    text = json.dumps(agg, indent=2)
    if out:
        Path(out).write_text(text, encoding="utf-8")
    click.echo(text)


@main.group("rt")
def rt_group():
    """Reaction-time data utilities."""


@rt_group.command("aggregate")
@click.option("--raw", "raw_path", type=click.Path(exists=True), required=True)
@click.option("--out", type=click.Path(), required=True)
@click.option("--r-max", type=float, default=rt_data.DEFAULT_MAX_RT_SECONDS, show_default=True)
@pipeline_errors
def rt_aggregate(raw_path, out, r_max):
    """Filter a raw RT export and aggregate per-image mean RTs."""
    with open(raw_path, encoding="utf-8") as f:
        measurements = rt_data.read_rt_raw_csv(f)
    ds = rt_data.RTDataset(tuple(measurements), r_max_seconds=r_max)
    valid = rt_data.filter_valid_measurements(ds)
    agg = rt_data.aggregate_mean_rt(valid)
    with open(out, "w", encoding="utf-8", newline="") as f:
        rt_data.write_rt_agg_csv(agg, f)
    click.echo(f"{len(measurements)} raw -> {len(valid)} valid -> {len(agg)} images")


@rt_group.command("bins")
@click.option("--agg", "agg_path", type=click.Path(exists=True), required=True)
@click.option("--n-exits", type=int, default=5, show_default=True)
@click.option("--out", type=click.Path(), required=True)
@pipeline_errors
def rt_bins(agg_path, n_exits, out):
    """Compute exit-bin cutoffs from aggregated mean RTs."""
    with open(agg_path, encoding="utf-8") as f:
        rts = rt_data.read_rt_agg_csv(f)
    binning = rt_data.compute_quintile_binning(rts, n_exits)
    Path(out).write_text(rt_data.binning_to_json(binning), encoding="utf-8")
    click.echo(f"cutoffs: {list(binning.cutoffs)}")


@main.group("survey")
def survey_group():
    """Survey generation and the collection service."""


@survey_group.command("gen")
@click.option(
    "--classes",
    "classes_path",
    type=click.Path(exists=True),
    required=True,
    help="JSON mapping class label -> list of image ids",
)
@click.option("--seed", type=int, required=True)
@click.option("--out", type=click.Path(), required=True)
@click.option(
    "--not-present-fraction",
    type=float,
    default=survey_mod.DEFAULT_NOT_PRESENT_FRACTION,
    show_default=True,
)
@pipeline_errors
def survey_gen(classes_path, seed, out, not_present_fraction):
    """Generate the n^2 survey sets for a class manifest."""
    pool = json.loads(Path(classes_path).read_text(encoding="utf-8"))
    classes = list(pool.keys())
    surveys = survey_mod.generate_survey_sets(
        classes, pool, rng_seed=seed, not_present_fraction=not_present_fraction
    )
    Path(out).write_text(survey_mod.surveys_to_json(surveys), encoding="utf-8")
    click.echo(f"{len(classes)} classes -> {len(surveys)} survey sets")


@survey_group.command("serve")
@click.option("--surveys", "surveys_path", type=click.Path(exists=True), required=True)
@click.option("--images", "images_dir", type=click.Path(exists=True), required=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8000, show_default=True)
@click.option("--quorum", type=int, default=service_mod.DEFAULT_QUORUM, show_default=True)
@click.option(
    "--frontend",
    "frontend_dir",
    type=click.Path(exists=True),
    default=None,
    help="serve a built browser UI (directory with index.html) at /",
)
@pipeline_errors
def survey_serve(surveys_path, images_dir, host, port, quorum, frontend_dir):
    """Serve surveys to the browser UI and record timed responses."""
    surveys = survey_mod.surveys_from_json(
        Path(surveys_path).read_text(encoding="utf-8")
    )
    store = service_mod.SurveyStore(surveys, quorum=quorum)
    service_mod.serve(store, images_dir, host=host, port=port, frontend_dir=frontend_dir)


if __name__ == "__main__":
    main()
