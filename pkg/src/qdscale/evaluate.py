"""Ensemble evaluation, backend comparison, and structural diagnostics.

Evaluation runs the two-stage sampler over selected timesteps of a split and
scores each variable with MAE (ensemble mean) and CRPS (full ensemble),
one report row per timestep x variable x metric. Ensembles and regression
fields are persisted as float32 payloads so diagnostics can be produced
without re-sampling. Backend comparison evaluates the same timesteps with
matched member seeds on the exact and a noisy backend and tabulates the
per-row score deltas.
"""

import csv
import json
from pathlib import Path

import numpy as np

from . import svgchart
from .corrdiff import downscale_ensemble
from .errors import ConfigurationError
from .metrics import (
    MetricsReport,
    backend_delta,
    crps_ensemble,
    directional_spectrum,
    format_mean_std,
    fss,
    joint_histogram,
    mae,
    win_counts,
    windspeed_log_pdf,
)

SPLITS = {"val": "val", "ood": "test_ood"}


def dataset_split(split):
    if split not in SPLITS:
        raise ConfigurationError("split must be one of %s, got %r" % (sorted(SPLITS), split))
    return SPLITS[split]


def select_times(count, times=None):
    """All timesteps, or `times` evenly spaced ones (first and last included)."""
    if times is None or times >= count:
        return np.arange(count)
    if times < 1:
        raise ConfigurationError("need at least one timestep")
    if times == 1:
        return np.array([0])
    return np.unique(np.round(np.linspace(0, count - 1, times)).astype(int))


def evaluate_model(regression, diffusion, dataset, split, members, sched, seed,
                   backend="exact", times=None, model_name="model", log=None):
    """Score a model over a split; returns (report, ensembles, regressions, ids).

    Member m of timestep i draws from default_rng([seed, i, m]), so scores at
    a timestep do not depend on which other timesteps are evaluated.
    """
    if members < 1:
        raise ConfigurationError("need at least one ensemble member")
    name = dataset_split(split)
    lo, hi = dataset.lo[name], dataset.hi[name]
    ids = select_times(lo.shape[0], times)
    report = MetricsReport(model=model_name, split=split, members=members)
    ensembles = np.empty((len(ids), members, 2) + hi.shape[2:])
    regressions = np.empty((len(ids), 2) + hi.shape[2:])
    for j, i in enumerate(ids):
        fc = downscale_ensemble(
            regression, diffusion, lo[i], dataset, members, sched,
            seed=[seed, int(i)], backend=backend, time_id=int(i),
        )
        ensembles[j] = fc.members
        regressions[j] = fc.regression
        mean = fc.ensemble_mean()
        for c, var in enumerate(("u", "v")):
            report.add(i, var, "MAE", mae(mean[c], hi[i, c]))
            report.add(i, var, "CRPS", crps_ensemble(fc.members[:, c], hi[i, c]))
        if log is not None:
            log("evaluated timestep %d (%d/%d)" % (i, j + 1, len(ids)))
    return report, ensembles, regressions, ids


def write_eval_outputs(outdir, report, ensembles, regressions, ids, extra_meta=None):
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    report.to_csv(outdir / "metrics.csv")
    report.to_json(outdir / "metrics.json")
    (outdir / "ensembles.f32").write_bytes(
        np.ascontiguousarray(ensembles).astype("<f4").tobytes()
    )
    (outdir / "regression.f32").write_bytes(
        np.ascontiguousarray(regressions).astype("<f4").tobytes()
    )
    meta = {
        "model": report.model,
        "split": report.split,
        "members": report.members,
        "time_ids": [int(i) for i in ids],
        "grid": int(ensembles.shape[-1]),
    }
    meta.update(extra_meta or {})
    with open(outdir / "eval_meta.json", "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_eval_outputs(outdir):
    outdir = Path(outdir)
    try:
        meta = json.loads((outdir / "eval_meta.json").read_text())
    except FileNotFoundError:
        raise ConfigurationError(
            "%s holds no evaluation outputs (run evaluate first)" % outdir
        )
    k = len(meta["time_ids"])
    m, n = meta["members"], meta["grid"]
    ens = np.frombuffer((outdir / "ensembles.f32").read_bytes(), dtype="<f4")
    if ens.size != k * m * 2 * n * n:
        raise ConfigurationError("ensembles.f32 does not match eval_meta.json")
    ens = ens.astype(np.float64).reshape(k, m, 2, n, n)
    reg = np.frombuffer((outdir / "regression.f32").read_bytes(), dtype="<f4")
    reg = reg.astype(np.float64).reshape(k, 2, n, n)
    report = MetricsReport.from_csv(outdir / "metrics.csv")
    return report, ens, reg, meta


def compare_backends_run(regression, diffusion, dataset, sched, noise, outdir,
                         split="val", times=20, members=16, seed=0, log=None):
    """Exact vs noisy inference with matched seeds; emits deltas and a chart."""
    exact_rep, _, _, ids = evaluate_model(
        regression, diffusion, dataset, split, members, sched, seed,
        backend="exact", times=times, model_name="exact", log=log,
    )
    noisy_rep, _, _, _ = evaluate_model(
        regression, diffusion, dataset, split, members, sched, seed,
        backend=noise, times=times, model_name="noisy", log=log,
    )
    rows = backend_delta(noisy_rep, exact_rep)
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    with open(outdir / "deltas.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["time_id", "variable", "metric", "exact", "noisy", "delta"])
        for r in rows:
            writer.writerow([r["time_id"], r["variable"], r["metric"],
                             repr(r["exact"]), repr(r["noisy"]), repr(r["delta"])])
    summary = {
        "max_abs_delta": max(abs(r["delta"]) for r in rows),
        "p_dep": noise.p_dep,
        "p_ro": noise.p_ro,
        "shots": noise.shots,
        "time_ids": [int(i) for i in ids],
        "members": members,
    }
    with open(outdir / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    curves = []
    for metric in ("MAE", "CRPS"):
        for var in ("u", "v"):
            sel = [r for r in rows if r["metric"] == metric and r["variable"] == var]
            curves.append(
                ("%s %s" % (metric, var),
                 [r["time_id"] for r in sel], [r["delta"] for r in sel])
            )
    svgchart.line_chart(outdir / "deltas.svg", curves, title="noisy - exact score deltas",
                        xlabel="timestep", ylabel="delta")
    return rows, summary


def _pooled_speed(fields):
    return np.hypot(fields[..., 0, :, :], fields[..., 1, :, :])


def diagnostics_run(entries, dataset, split, outdir, neighborhoods=(1, 3, 5, 9),
                    bins=40):
    """Structural diagnostics for truth, regression, and each model's ensemble.

    entries: list of (name, eval_dir). All entries must have been evaluated
    over the same timesteps of the same split.
    """
    if not entries:
        raise ConfigurationError("diagnostics needs at least one evaluated run")
    loaded = []
    for name, eval_dir in entries:
        report, ens, reg, meta = read_eval_outputs(eval_dir)
        if meta["split"] != split:
            raise ConfigurationError(
                "%s was evaluated on split %r, not %r" % (eval_dir, meta["split"], split)
            )
        loaded.append((name, ens, reg, meta))
    ids = loaded[0][3]["time_ids"]
    for name, _, _, meta in loaded[1:]:
        if meta["time_ids"] != ids:
            raise ConfigurationError(
                "run %r covers different timesteps; rerun evaluate with matching --times"
                % name
            )
    truth = dataset.hi[dataset_split(split)][np.array(ids)]
    regression = loaded[0][2]  # the frozen mean predictor (shared across runs)
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    sources = [("truth", truth), ("regression", regression)]
    sources += [(name, ens.reshape((-1, 2) + ens.shape[3:])) for name, ens, _, _ in loaded]

    for direction in ("zonal", "meridional"):
        curves, header, columns = [], ["k"], []
        for name, fields in sources:
            k, power = directional_spectrum(fields, direction=direction)
            header.append(name)
            columns.append(power)
            curves.append((name, k, power))
        with open(outdir / ("spectra_%s.csv" % direction), "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for row in zip(k, *columns):
                writer.writerow([int(row[0])] + [repr(float(v)) for v in row[1:]])
        svgchart.line_chart(
            outdir / ("spectra_%s.svg" % direction), curves,
            title="%s wind spectra" % direction, xlabel="wavenumber", ylabel="power",
            logx=True, logy=True,
        )

    vmax = float(max(_pooled_speed(fields).max() for _, fields in sources))
    curves, header, columns = [], ["speed"], []
    for name, fields in sources:
        edges, log_pdf = windspeed_log_pdf(fields, bins=bins, vmax=vmax)
        header.append(name)
        columns.append(log_pdf)
        centers = 0.5 * (edges[:-1] + edges[1:])
        curves.append((name, centers, log_pdf))
    with open(outdir / "windspeed_pdf.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in zip(centers, *columns):
            writer.writerow([repr(float(row[0]))] + [repr(float(v)) for v in row[1:]])
    svgchart.line_chart(outdir / "windspeed_pdf.svg", curves,
                        title="wind speed distribution", xlabel="speed",
                        ylabel="log10 density")

    bound = float(max(np.abs(fields).max() for _, fields in sources))
    for name, fields in sources:
        edges, density = joint_histogram(fields, bins=bins, bound=bound)
        with open(outdir / ("joint_%s.csv" % name), "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["edges"] + [repr(float(e)) for e in edges])
            for row in density:
                writer.writerow([""] + [repr(float(v)) for v in row])
        svgchart.heatmap(outdir / ("joint_%s.svg" % name), density,
                         extent=(-bound, bound, -bound, bound),
                         title="joint (u, v) density: %s" % name,
                         xlabel="u", ylabel="v")

    threshold = float(np.percentile(_pooled_speed(truth), 99))
    truth_speed = _pooled_speed(truth)
    rows = []
    for n in neighborhoods:
        row = {"neighborhood": n}
        reg_speed = _pooled_speed(regression)
        row["regression"] = float(np.mean(
            [fss(reg_speed[j], truth_speed[j], threshold, n) for j in range(len(ids))]
        ))
        for name, ens, _, _ in loaded:
            speed = _pooled_speed(ens)
            scores = [
                fss(speed[j, m], truth_speed[j], threshold, n)
                for j in range(len(ids))
                for m in range(speed.shape[1])
            ]
            row[name] = float(np.mean(scores))
        rows.append(row)
    with open(outdir / "fss.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        header = ["neighborhood", "regression"] + [name for name, _, _, _ in loaded]
        writer.writerow(header)
        for row in rows:
            writer.writerow([row["neighborhood"]] + [repr(row[h]) for h in header[1:]])
    with open(outdir / "fss_threshold.json", "w") as fh:
        json.dump({"p99_speed_threshold": threshold}, fh, indent=2)
        fh.write("\n")
    return {"threshold": threshold, "sources": [name for name, _ in sources]}


def highband_power_fraction(report_ensembles, regression_fields, direction="zonal"):
    """Fraction of upper-third wavenumbers where the ensemble out-powers
    the regression-only prediction (the qualitative spectrum ordering)."""
    ens_fields = report_ensembles.reshape((-1, 2) + report_ensembles.shape[3:])
    k, ens_power = directional_spectrum(ens_fields, direction=direction)
    _, reg_power = directional_spectrum(regression_fields, direction=direction)
    band = k >= k[-1] - (len(k) // 3) + 1
    return float(np.mean(ens_power[band] > reg_power[band]))


def comparison_table(report_a, report_b):
    """Side-by-side aggregates plus win counts of B over A (Table-style)."""
    wins = win_counts(report_a, report_b)
    agg_a, agg_b = report_a.aggregate(), report_b.aggregate()
    lines = ["%-12s %-6s %22s %22s" % ("metric", "var", report_a.model, report_b.model)]
    for key in sorted(agg_a):
        metric, var = key
        lines.append(
            "%-12s %-6s %22s %22s"
            % (metric, var, format_mean_std(*agg_a[key]), format_mean_std(*agg_b[key]))
        )
    lines.append("%s wins: %s" % (report_b.model, wins["formatted"]))
    return lines, wins
