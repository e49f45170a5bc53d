"""Command-line entry point ``odl``.

Exit codes: 0 on success, 1 on data or runtime errors, 2 on usage errors.
"""

from __future__ import annotations

import csv
import io
import json
import os
import platform
import sys
import tempfile
import time
from importlib import metadata
from pathlib import Path

import click

from .batch import read_batches
from .engine import DEFAULT_GRID, EngineConfig, OnlineDebiasedLasso
from .errors import ODLError
from .family import get_family
from .inference import VarianceMode
from .prox import ProxConfig
from .report import RECORD_COLUMNS, build_report, read_records
from .metrics import GROUPS, METRICS
from .sim import run_replications, setting

NUMBER_FORMAT = "%.17g"


def fmt(v) -> str:
    if isinstance(v, (int,)) and not isinstance(v, bool):
        return str(v)
    return NUMBER_FORMAT % float(v)


def atomic_write(path, data: str | bytes) -> None:
    """Write to a sibling temporary file, then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, mode, **({} if mode == "wb" else {"newline": ""})) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) if not isinstance(v, str) else v for v in row])
    return buf.getvalue()


def versions() -> dict:
    out = {"python": platform.python_version()}
    for pkg in ("artifact", "numpy", "scipy", "numba", "click"):
        try:
            out[pkg] = metadata.version(pkg)
        except metadata.PackageNotFoundError:
            pass
    return out


def write_manifest(path, command: str, config: dict, seed, started: float, outputs) -> None:
    manifest = {"command": command, "config": config, "seed": seed, "versions": versions(),
                "seconds": time.perf_counter() - started,
                "outputs": [str(p) for p in outputs]}
    atomic_write(path, json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def parse_floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise click.BadParameter(f"not a comma-separated list of numbers: {text!r}") from None


def parse_ints(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise click.BadParameter(f"not a comma-separated list of integers: {text!r}") from None


@click.group(context_settings={"help_option_names": ["-h", "--help"]})
@click.option("-v", "--verbose", count=True, help="Log progress to stderr.")
def main(verbose):
    """Online debiased lasso for streaming GLM data."""
    import logging
    level = logging.WARNING - 10 * min(verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


def _prox_options(f):
    f = click.option("--learning-rate", type=float, default=0.005, show_default=True)(f)
    f = click.option("--stop-tol", type=float, default=1e-6, show_default=True)(f)
    f = click.option("--max-iter", type=int, default=100_000, show_default=True)(f)
    f = click.option("--variance-mode", type=click.Choice([m.value for m in VarianceMode]),
                     default=VarianceMode.AS_WRITTEN.value, show_default=True)(f)
    return f


@main.command()
@click.option("--setting", "setting_no", type=click.IntRange(1, 2), required=True,
              help="1: p=100, N=120; 2: p=600, N=624.")
@click.option("--sigma", type=click.Choice(["identity", "ar"]), default="identity",
              show_default=True)
@click.option("--reps", type=click.IntRange(min=1), default=200, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", "out_dir", type=click.Path(file_okay=False), default=".",
              show_default=True)
@click.option("--workers", type=click.IntRange(min=1), default=None,
              help="Worker processes (capped by ODL_THREADS).")
@click.option("--compare/--no-compare", default=False,
              help="Also compute the MLE and offline debiased columns.")
@_prox_options
def simulate(setting_no, sigma, reps, seed, out_dir, workers, compare, learning_rate,
             stop_tol, max_iter, variance_mode):
    """Monte-Carlo study of a standard design."""
    started = time.perf_counter()
    try:
        prox = ProxConfig(learning_rate, stop_tol, max_iter)
        engine = EngineConfig(prox=prox, variance_mode=variance_mode)
    except ValueError as exc:
        raise click.UsageError(str(exc)) from None
    cfg = setting(setting_no, "identity" if sigma == "identity" else "ar-half",
                  replications=reps, seed=seed, engine=engine,
                  include_mle=compare, include_offline=compare)
    try:
        table = run_replications(cfg, workers)
    except ODLError as exc:
        raise click.ClickException(str(exc)) from None
    out = Path(out_dir)
    extra = ["mle", "offline"] if compare else []
    header = ["metric", "group", *[str(b) for b in cfg.report_at], *extra]
    rows = []
    for metric in METRICS:
        for group in GROUPS:
            row = [metric, group]
            row += [table.get("odl", b, group)[metric] for b in cfg.report_at]
            row += [table.get(m, cfg.n_batches, group)[metric] for m in extra]
            rows.append(row)
    config_echo = {"setting": setting_no, "sigma": cfg.sigma_kind, "replications": reps,
                   "engine": engine.to_json(), "p": cfg.p, "n_total": cfg.n_total,
                   "batch_sizes": list(cfg.batch_sizes), "s0": cfg.s0}
    files = [out / "metrics.csv", out / "metrics.json"]
    atomic_write(files[0], csv_text(header, rows))
    atomic_write(files[1], json.dumps({"config": config_echo, **table.to_json()}, indent=2) + "\n")
    write_manifest(out / "manifest.json", "simulate", config_echo, seed, started, files)
    click.echo(f"wrote {files[0]} ({reps} replications, {table.timing['total_seconds']:.1f}s)")


def _record_row(rec, intercept: bool):
    # CSV coordinates name the input column xk; 0 is the intercept
    coord = rec.r if intercept else rec.r + 1
    return [rec.batch_index, coord, rec.lambda_used, rec.beta_lasso, rec.beta_debiased, rec.se,
            rec.ci_low, rec.ci_high, rec.p_value, rec.error or ""]


@main.command("stream-fit")
@click.option("--input", "input_path", default="-", show_default=True,
              help="Batch stream file, or '-' for stdin.")
@click.option("--out", "out_path", type=click.Path(dir_okay=False), required=True,
              help="Records CSV.")
@click.option("--family", default="bernoulli-logit", show_default=True)
@click.option("--track", default=None,
              help="Comma-separated column numbers (k for xk, 0 for the intercept); "
                   "default all.")
@click.option("--grid", default=",".join(repr(v) for v in DEFAULT_GRID), show_default=True)
@click.option("--ci-level", type=float, default=0.95, show_default=True)
@click.option("--intercept/--no-intercept", default=False,
              help="Prepend an unpenalized intercept column.")
@click.option("--snapshot", "snapshot_path", type=click.Path(dir_okay=False), default=None,
              help="Snapshot file rewritten every --snapshot-every batches.")
@click.option("--snapshot-every", type=click.IntRange(min=1), default=None)
@click.option("--resume", "resume_path", type=click.Path(exists=True, dir_okay=False),
              default=None, help="Restore from a snapshot and skip the batches it covers.")
@click.option("--stop-after", type=click.IntRange(min=0), default=None,
              help="Stop once the engine has absorbed this many batches.")
@_prox_options
def stream_fit(input_path, out_path, family, track, grid, ci_level, intercept, snapshot_path,
               snapshot_every, resume_path, stop_after, learning_rate, stop_tol, max_iter,
               variance_mode):
    """Fit a batch stream and write one record per batch and tracked column."""
    started = time.perf_counter()
    if snapshot_every is not None and snapshot_path is None:
        raise click.UsageError("--snapshot-every needs --snapshot")
    try:
        fam = get_family(family)
        prox = ProxConfig(learning_rate, stop_tol, max_iter)
        grid_vals = parse_floats(grid)
        tracked = parse_ints(track) if track is not None else None
        config = EngineConfig(family=fam, lambda_grid=grid_vals, prox=prox,
                              ci_level=ci_level, variance_mode=variance_mode,
                              intercept=intercept)
    except (ValueError, KeyError) as exc:
        raise click.UsageError(str(exc)) from None

    header = [*RECORD_COLUMNS, "error"]
    out = Path(out_path)
    engine = None
    skip = 0
    prior = ""
    try:
        if resume_path is not None:
            engine = OnlineDebiasedLasso.restore(Path(resume_path).read_bytes())
            config = engine.config
            intercept = config.intercept
            skip = engine.b
            if out.exists():
                prior = out.read_text()
        rows_text = io.StringIO()
        writer = csv.writer(rows_text, lineterminator="\n")

        def flush():
            body = prior if prior else csv_text(header, [])
            atomic_write(out, body + rows_text.getvalue())

        fh = sys.stdin if input_path == "-" else open(input_path, newline="")
        try:
            consumed = 0
            for batch in read_batches(fh, intercept=config.intercept):
                if stop_after is not None and (engine.b if engine else 0) >= stop_after:
                    break
                if engine is None:
                    if tracked is not None:
                        idx = [k if intercept else k - 1 for k in tracked]
                        config.tracked_coords = tuple(idx)
                    engine = OnlineDebiasedLasso(config, batch.p)
                if batch.n > 0 and consumed < skip:
                    consumed += 1
                    continue
                records = engine.process_batch(batch)
                for rec in records:
                    writer.writerow([fmt(v) if not isinstance(v, str) else v
                                     for v in _record_row(rec, intercept)])
                if (snapshot_every and batch.n > 0 and engine.b % snapshot_every == 0):
                    flush()
                    atomic_write(snapshot_path, engine.snapshot())
        finally:
            if fh is not sys.stdin:
                fh.close()
        if consumed < skip:
            raise click.ClickException(
                f"input holds {consumed} batches but the snapshot covers {skip}")
        flush()
        outputs = [out]
        if snapshot_path is not None and engine is not None:
            atomic_write(snapshot_path, engine.snapshot())
            outputs.append(Path(snapshot_path))
    except (ODLError, OSError, IndexError) as exc:
        raise click.ClickException(str(exc)) from None
    echo = config.to_json()
    echo.update(input=input_path, resume=resume_path)
    write_manifest(out.with_name(out.name + ".manifest.json"), "stream-fit", echo, None,
                   started, outputs)


@main.command()
@click.option("--records", "records_path", type=click.Path(exists=True, dir_okay=False),
              required=True)
@click.option("--out", "out_dir", type=click.Path(file_okay=False), required=True)
def report(records_path, out_dir):
    """Trace, interval-band and AUC tables from a records CSV."""
    started = time.perf_counter()
    try:
        with open(records_path, newline="") as fh:
            rep = build_report(read_records(fh))
    except (ODLError, OSError) as exc:
        raise click.ClickException(str(exc)) from None
    out = Path(out_dir)
    files = [out / "traces.csv", out / "bands.csv", out / "auc.csv"]
    atomic_write(files[0], csv_text(["batch_index", "coord", "neglog10_p"], rep["traces"]))
    atomic_write(files[1], csv_text(["batch_index", "coord", "estimate", "ci_low", "ci_high"],
                                    rep["bands"]))
    atomic_write(files[2], csv_text(["coord", "auc"], rep["auc"]))
    write_manifest(out / "manifest.json", "report", {"records": str(records_path)}, None,
                   started, files)


if __name__ == "__main__":
    main()
