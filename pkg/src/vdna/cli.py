"""Command-line surface: `vdna <subcommand>`.

Every subcommand is deterministic given identical inputs and --seed, exits 0
only on success and prints a single machine-parsable JSON line on stderr on
failure. Commands that write an output file also write a JSON run report
next to it (override the location with --report) capturing the inputs,
parameters, outputs and package version so multi-step experiments stay
auditable.

CSV outputs use '.' decimals, ',' separators and '\\n' line endings. The
VDNA_THREADS environment variable caps the worker count used when folding
multiple dump files.
"""

from __future__ import annotations

import glob
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from functools import reduce
from importlib import metadata
from pathlib import Path

import click
import numpy as np

from . import calibration, container, evaluation, metrics, weights
from .dump import read_dump
from .errors import VdnaError
from .layers import unflatten_index

try:
    _VERSION = metadata.version("vdna")
except metadata.PackageNotFoundError:
    _VERSION = "unknown"


def _expand(pattern: str) -> list[str]:
    files = sorted(glob.glob(pattern, recursive=True))
    if not files:
        raise click.ClickException(f"no files match {pattern!r}")
    return files


def _workers(n_items: int) -> int:
    cap = os.environ.get("VDNA_THREADS")
    limit = int(cap) if cap else (os.cpu_count() or 1)
    return max(1, min(n_items, limit))


def _write_report(report: str | None, out: str | None, command: str, params: dict, outputs: dict):
    path = report or (f"{out}.report.json" if out else None)
    if path is None:
        return
    doc = {
        "command": command,
        "params": {k: str(v) if isinstance(v, Path) else v for k, v in params.items()},
        "outputs": outputs,
        "version": _VERSION,
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


@click.group()
@click.version_option(_VERSION, prog_name="vdna")
def cli():
    """Build, merge and compare per-neuron activation fingerprints."""


@cli.command()
@click.option("--dumps", required=True, help="Glob of activation dump files.")
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@click.option("--report", type=click.Path(dir_okay=False))
def calibrate(dumps, out, report):
    """Track per-neuron activation extremes over dump files."""
    files = _expand(dumps)

    def observe_one(path):
        header, records = read_dump(path)
        table = calibration.CalibrationTable(header.extractor_id, header.layers)
        table.observe(header, records)
        return table

    with ThreadPoolExecutor(max_workers=_workers(len(files))) as pool:
        tables = list(pool.map(observe_one, files))
    merged = tables[0]
    for table in tables[1:]:
        merged.merge(table)
    merged.save(out)
    click.echo(f"calibrated {len(files)} dump(s) -> {out}")
    _write_report(report, out, "calibrate", {"dumps": files}, {"calibration": out})


@cli.command()
@click.option("--dumps", required=True, help="Glob of activation dump files.")
@click.option("--cal", "cal_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--kind", type=click.Choice(["hist", "gauss"]), default="hist", show_default=True)
@click.option("--bins", type=click.IntRange(min=1), default=1000, show_default=True)
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@click.option("--report", type=click.Path(dir_okay=False))
def fit(dumps, cal_path, kind, bins, out, report):
    """Build a fingerprint from dump files through a calibration table."""
    files = _expand(dumps)
    table = calibration.CalibrationTable.load(cal_path)

    def fit_one(path):
        header, records = read_dump(path)
        return container.fit(header, records, table, kind, bins)

    with ThreadPoolExecutor(max_workers=_workers(len(files))) as pool:
        parts = list(pool.map(fit_one, files))
    vdna = reduce(container.merge, parts)
    container.save(vdna, out)
    click.echo(f"fit {vdna.n_images} image(s) -> {out}")
    _write_report(
        report, out, "fit",
        {"dumps": files, "cal": cal_path, "kind": kind, "bins": bins},
        {"vdna": out, "n_images": vdna.n_images},
    )


@cli.command()
@click.argument("inputs", nargs=-1, required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@click.option("--report", type=click.Path(dir_okay=False))
def merge(inputs, out, report):
    """Merge fingerprints of disjoint image sets."""
    if len(inputs) < 2:
        raise click.ClickException("need at least two fingerprints to merge")
    merged = reduce(container.merge, (container.load(p) for p in inputs))
    container.save(merged, out)
    click.echo(f"merged {len(inputs)} fingerprint(s), {merged.n_images} image(s) -> {out}")
    _write_report(report, out, "merge", {"inputs": list(inputs)},
                  {"vdna": out, "n_images": merged.n_images})


@cli.command()
@click.argument("path", type=click.Path(exists=True, dir_okay=False))
def info(path):
    """Print fingerprint metadata."""
    vdna = container.load(path)
    click.echo(f"kind: {vdna.kind}")
    click.echo(f"extractor: {vdna.extractor_id}")
    click.echo(f"layers: {len(vdna.layers)}")
    click.echo(f"neurons: {vdna.neuron_count}")
    if vdna.kind == container.KIND_HIST:
        click.echo(f"bins: {vdna.bins}")
    click.echo(f"n_images: {vdna.n_images}")
    click.echo(f"calibration: {vdna.calibration_fingerprint or '(none)'}")
    click.echo(f"payload bytes (uncompressed): {container.payload_size(vdna)}")
    click.echo(f"file bytes: {os.path.getsize(path)}")


@cli.command("layer-stats")
@click.option("--dumps", required=True, help="Glob of activation dump files.")
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@click.option("--report", type=click.Path(dir_okay=False))
def layer_stats_cmd(dumps, out, report):
    """Fit one multivariate Gaussian per layer to spatially averaged features."""
    files = _expand(dumps)
    first_header, _ = read_dump(files[0])

    def all_records():
        for path in files:
            header, records = read_dump(path)
            if header != first_header:
                raise VdnaError(f"dump {path!r} has a different extractor or layer table")
            yield from records

    stats = metrics.layer_stats(first_header, all_records())
    metrics.save_layer_stats(stats, out)
    click.echo(f"layer statistics over {stats.n_images} image(s) -> {out}")
    _write_report(report, out, "layer-stats", {"dumps": files},
                  {"stats": out, "n_images": stats.n_images})


@cli.command()
@click.argument("a", type=click.Path(exists=True, dir_okay=False))
@click.argument("b", type=click.Path(exists=True, dir_okay=False))
@click.option("--mode", type=click.Choice(["emd", "fd", "layer-fd"]), default="emd",
              show_default=True)
@click.option("--weights", "weights_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--per-neuron", "per_neuron", type=click.Path(dir_okay=False),
              help="Write per-neuron (or per-layer) distances to this CSV.")
@click.option("--bin-width-units", is_flag=True,
              help="Scale EMD by the bin width 2/B (distance on the activation axis).")
@click.option("--report", type=click.Path(dir_okay=False))
def dist(a, b, mode, weights_path, per_neuron, bin_width_units, report):
    """Distance between two fingerprints (or layer-statistics files)."""
    w = weights.load_weights(weights_path)[0] if weights_path else None
    if mode == "layer-fd":
        s1, s2 = metrics.load_layer_stats(a), metrics.load_layer_stats(b)
        per = metrics.fd_layers(s1, s2)
        used = w or metrics.WeightVector.uniform(len(per))
        if len(used) != len(per):
            raise VdnaError(f"weight vector has {len(used)} entries for {len(per)} layers")
        value = float(np.dot(used.values, per))
        rows = [(s1.layers[i].name, "", per[i], used.values[i]) for i in range(len(per))]
    else:
        v1, v2 = container.load(a), container.load(b)
        if mode == "emd" and v1.kind != container.KIND_HIST:
            raise VdnaError("mode emd requires hist fingerprints")
        if mode == "fd" and v1.kind != container.KIND_GAUSS:
            raise VdnaError("mode fd requires gauss fingerprints")
        per = metrics.neuron_distances(v1, v2, bin_width_units)
        used = w or metrics.WeightVector.uniform(len(per))
        if len(used) != len(per):
            raise VdnaError(f"weight vector has {len(used)} entries for {len(per)} neurons")
        value = float(np.dot(used.values, per))
        rows = []
        if per_neuron:
            for flat in range(len(per)):
                li, ni = unflatten_index(v1.layers, flat)
                rows.append((v1.layers[li].name, ni, per[flat], used.values[flat]))
    if per_neuron:
        import csv

        with open(per_neuron, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["layer", "neuron", "distance", "weight"])
            writer.writerows(rows)
    click.echo(repr(value))
    _write_report(report, per_neuron, "dist",
                  {"a": a, "b": b, "mode": mode, "weights": weights_path,
                   "bin_width_units": bin_width_units},
                  {"distance": value, "per_neuron": per_neuron})


def _load_pair_manifest(path) -> list[weights.AttributePair]:
    with open(path) as fh:
        entries = json.load(fh)
    if not isinstance(entries, list) or not entries:
        raise VdnaError(f"{path}: manifest must be a non-empty JSON list")
    pairs = []
    for e in entries:
        if not isinstance(e, dict) or not {"name", "with", "without"} <= e.keys():
            raise VdnaError(f"{path}: each entry needs name/with/without, got {e!r}")
        pairs.append(
            weights.AttributePair.from_vdnas(
                e["name"], container.load(e["with"]), container.load(e["without"])
            )
        )
    return pairs


@cli.command("optimize-weights")
@click.option("--target-with", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--target-without", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--others-manifest", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--val-manifest", type=click.Path(exists=True, dir_okay=False),
              help="Pairs for early stopping; defaults to the training pairs.")
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@click.option("--allow-negative", is_flag=True, help="Do not project weights onto >= 0.")
@click.option("--learning-rate", type=float, default=1e-5, show_default=True)
@click.option("--patience", type=click.IntRange(min=1), default=50, show_default=True)
@click.option("--max-iters", type=click.IntRange(min=0), default=5000, show_default=True)
@click.option("--report", type=click.Path(dir_okay=False))
def optimize_weights(target_with, target_without, others_manifest, val_manifest, out,
                     allow_negative, learning_rate, patience, max_iters, report):
    """Learn weights that cancel the target attribute and preserve the rest."""
    target = weights.AttributePair.from_vdnas(
        "target", container.load(target_with), container.load(target_without)
    )
    others_train = _load_pair_manifest(others_manifest)
    others_val = _load_pair_manifest(val_manifest) if val_manifest else others_train
    config = weights.OptimizerConfig(
        learning_rate=learning_rate,
        patience=patience,
        max_iters=max_iters,
        nonneg_projection=not allow_negative,
    )
    w, trace = weights.optimize(target, others_train, others_val, config)
    extractor = target.dna_with.extractor_id if target.dna_with else ""
    weights.save_weights(w, out, extractor, provenance={
        "target_with": target_with,
        "target_without": target_without,
        "others": [p.name for p in others_train],
        "nonneg_projection": config.nonneg_projection,
        "best_iteration": trace.best_iteration,
        "iterations": len(trace.train_loss),
    })
    final = weights.loss(target, others_train, w)
    click.echo(
        f"optimized {len(w)} weights in {len(trace.train_loss)} iteration(s), "
        f"best at {trace.best_iteration}, train loss {final:.6f} -> {out}"
    )
    _write_report(report, out, "optimize-weights",
                  {"target_with": target_with, "target_without": target_without,
                   "others_manifest": others_manifest, "val_manifest": val_manifest,
                   "allow_negative": allow_negative, "learning_rate": learning_rate,
                   "patience": patience, "max_iters": max_iters},
                  {"weights": out, "iterations": len(trace.train_loss),
                   "best_iteration": trace.best_iteration,
                   "best_val_loss": min(trace.val_loss, default=None)})


@cli.command("select-neurons")
@click.option("--pairs", "pairs_manifest", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("-k", "top_k", required=True, type=click.IntRange(min=1))
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@click.option("--report", type=click.Path(dir_okay=False))
def select_neurons(pairs_manifest, top_k, out, report):
    """Rank neurons by attribute sensitivity; keep the top k.

    With several pairs, the with-sides are merged into one fingerprint and
    the without-sides into another before computing per-neuron distances.
    """
    with open(pairs_manifest) as fh:
        entries = json.load(fh)
    if not isinstance(entries, list) or not entries:
        raise VdnaError(f"{pairs_manifest}: manifest must be a non-empty JSON list")
    with_all = reduce(container.merge, (container.load(e["with"]) for e in entries))
    without_all = reduce(container.merge, (container.load(e["without"]) for e in entries))
    distances = metrics.neuron_distances(with_all, without_all)
    selected = weights.select_sensitive_neurons(distances, top_k)
    import csv

    with open(out, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["rank", "flat_index", "layer", "neuron", "distance"])
        for rank, flat in enumerate(selected, start=1):
            li, ni = unflatten_index(with_all.layers, int(flat))
            writer.writerow([rank, int(flat), with_all.layers[li].name, ni,
                             repr(float(distances[flat]))])
    click.echo(f"selected {top_k} neuron(s) -> {out}")
    _write_report(report, out, "select-neurons",
                  {"pairs": pairs_manifest, "k": top_k}, {"neurons": out})


def _selection_weights(neurons_csv, n) -> metrics.WeightVector:
    import csv

    with open(neurons_csv, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0][:2] != ["rank", "flat_index"]:
        raise VdnaError(f"{neurons_csv}: expected a neuron-selection CSV")
    return metrics.WeightVector.from_selection((int(r[1]) for r in rows[1:]), n)


@cli.command()
@click.option("--ref", "ref_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--items", required=True, help="Glob of item fingerprint files.")
@click.option("--weights", "weights_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--neurons", "neurons_path", type=click.Path(exists=True, dir_okay=False),
              help="Neuron-selection CSV; weights become 1/k on selected, 0 elsewhere.")
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@click.option("--report", type=click.Path(dir_okay=False))
def rank(ref_path, items, weights_path, neurons_path, out, report):
    """Rank item fingerprints by distance to a reference fingerprint."""
    if weights_path and neurons_path:
        raise click.ClickException("--weights and --neurons are mutually exclusive")
    reference = container.load(ref_path)
    files = _expand(items)
    w = None
    if weights_path:
        w = weights.load_weights(weights_path)[0]
    elif neurons_path:
        w = _selection_weights(neurons_path, reference.neuron_count)
    named = [(Path(p).stem, container.load(p)) for p in files]
    ranked = evaluation.rank_against_reference(reference, named, w)
    evaluation.write_ranked_csv(out, ranked)
    click.echo(f"ranked {len(ranked)} item(s) -> {out}")
    _write_report(report, out, "rank",
                  {"ref": ref_path, "items": files, "weights": weights_path,
                   "neurons": neurons_path},
                  {"ranked": out, "n_items": len(ranked)})


@cli.command()
@click.option("--ranked", "ranked_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--positives", "positives_path", required=True,
              type=click.Path(exists=True, dir_okay=False),
              help="Text file with one positive id per line.")
@click.option("--out", "out_path", type=click.Path(dir_okay=False),
              help="Write the (recall, precision) CSV here.")
@click.option("--report", type=click.Path(dir_okay=False))
def pr(ranked_path, positives_path, out_path, report):
    """Precision-recall over a ranked list; prints the AUC."""
    ranked = evaluation.read_ranked_csv(ranked_path)
    with open(positives_path) as fh:
        positives = {line.strip() for line in fh if line.strip()}
    precision, recall, auc = evaluation.pr_curve(ranked, positives)
    if out_path:
        evaluation.write_pr_csv(out_path, precision, recall)
    click.echo(f"AUC={auc:.6f}")
    _write_report(report, out_path, "pr",
                  {"ranked": ranked_path, "positives": positives_path},
                  {"auc": auc, "curve": out_path})


@cli.command()
@click.option("--miou", "miou_ref", required=True,
              help="Matrix CSV path or bundled:<name> (bundled:mseg).")
@click.option("--pred", "pred_ref", required=True,
              help="Matrix CSV path or bundled:<name> (e.g. bundled:dna-emd-mugs).")
@click.option("--random-baseline", "baseline_trials", type=click.IntRange(min=2),
              help="Also report the discrepancy of N random orderings.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--report", type=click.Path(dir_okay=False))
def crossgen(miou_ref, pred_ref, baseline_trials, seed, report):
    """Rank-discrepancy between transfer mIoUs and predicted distances."""

    def resolve(ref):
        if ref.startswith("bundled:"):
            return evaluation.bundled_fixture_path(ref[len("bundled:"):])
        if not os.path.exists(ref):
            raise VdnaError(f"no such file: {ref!r}")
        return ref

    table = evaluation.load_crossgen(resolve(miou_ref), resolve(pred_ref))
    d = evaluation.crossgen_discrepancy(table)
    click.echo(f"{d:.2f}")
    outputs = {"discrepancy": d}
    if baseline_trials:
        mean, std = evaluation.random_ordering_baseline(table, baseline_trials, seed)
        click.echo(f"random baseline over {baseline_trials} orderings: "
                   f"{mean:.2f} +/- {std:.2f}")
        outputs["random_baseline"] = {"trials": baseline_trials, "seed": seed,
                                      "mean": mean, "std": std}
    _write_report(report, None, "crossgen",
                  {"miou": miou_ref, "pred": pred_ref,
                   "random_baseline": baseline_trials, "seed": seed}, outputs)


def main():
    try:
        cli(standalone_mode=False)
    except click.exceptions.Abort:
        sys.exit(130)
    except click.exceptions.Exit as exc:
        sys.exit(exc.exit_code)
    except click.ClickException as exc:
        print(json.dumps({"error": type(exc).__name__, "message": exc.format_message()}),
              file=sys.stderr)
        sys.exit(exc.exit_code or 1)
    except (VdnaError, ValueError, OSError) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}),
              file=sys.stderr)
        sys.exit(1)


if __name__ == "__main__":
    main()
