"""Evaluation reports, persisted ensembles, backend deltas, diagnostics."""

import numpy as np
import pytest

from qdscale.cli import _load_diffusion_run
from qdscale.data import read_dataset
from qdscale.errors import ConfigurationError
from qdscale.evaluate import (
    compare_backends_run,
    comparison_table,
    dataset_split,
    diagnostics_run,
    evaluate_model,
    highband_power_fraction,
    read_eval_outputs,
    select_times,
    write_eval_outputs,
)
from qdscale.metrics import MetricsReport
from qdscale.qsim import NoiseParams


@pytest.fixture(scope="module")
def setup(tiny_runs):
    cfg, reg, diff, sched = _load_diffusion_run(tiny_runs["diff"])
    return {
        "cfg": cfg, "reg": reg, "diff": diff, "sched": sched,
        "ds": read_dataset(tiny_runs["ds"]),
    }


def test_dataset_split_names():
    assert dataset_split("val") == "val"
    assert dataset_split("ood") == "test_ood"
    with pytest.raises(ConfigurationError, match="split"):
        dataset_split("train")


@pytest.mark.parametrize(
    "count,times,expected",
    [
        (10, None, list(range(10))),
        (10, 3, [0, 4, 9]),
        (10, 1, [0]),
        (10, 99, list(range(10))),
        (5, 2, [0, 4]),
    ],
)
def test_select_times(count, times, expected):
    assert select_times(count, times).tolist() == expected


def test_select_times_rejects_zero():
    with pytest.raises(ConfigurationError, match="timestep"):
        select_times(10, 0)


def test_report_shape(setup):
    report, ens, regs, ids = evaluate_model(
        setup["reg"], setup["diff"], setup["ds"], "val", 2, setup["sched"],
        seed=0, times=2,
    )
    assert ids.tolist() == [0, 3]
    assert len(report.rows) == 2 * 2 * 2  # timesteps x variables x metrics
    assert ens.shape == (2, 2, 2, 16, 16)
    assert regs.shape == (2, 2, 16, 16)
    metrics = {(r["variable"], r["metric"]) for r in report.rows}
    assert metrics == {("u", "MAE"), ("u", "CRPS"), ("v", "MAE"), ("v", "CRPS")}


def test_single_member_crps_equals_mae(setup):
    report, _, _, _ = evaluate_model(
        setup["reg"], setup["diff"], setup["ds"], "val", 1, setup["sched"],
        seed=0, times=2,
    )
    by = {(r["time_id"], r["variable"], r["metric"]): r["value"] for r in report.rows}
    for (tid, var, metric), value in by.items():
        if metric == "MAE":
            assert by[(tid, var, "CRPS")] == value


def test_scores_independent_of_time_subset(setup):
    full, ens_full, _, ids_full = evaluate_model(
        setup["reg"], setup["diff"], setup["ds"], "val", 2, setup["sched"], seed=0,
    )
    sub, ens_sub, _, ids_sub = evaluate_model(
        setup["reg"], setup["diff"], setup["ds"], "val", 2, setup["sched"],
        seed=0, times=2,
    )
    full_by = {(r["time_id"], r["variable"], r["metric"]): r["value"] for r in full.rows}
    for row in sub.rows:
        assert full_by[(row["time_id"], row["variable"], row["metric"])] == row["value"]
    pos = {int(i): j for j, i in enumerate(ids_full)}
    for j, i in enumerate(ids_sub):
        assert np.array_equal(ens_sub[j], ens_full[pos[int(i)]])


def test_eval_outputs_round_trip(setup, tmp_path):
    report, ens, regs, ids = evaluate_model(
        setup["reg"], setup["diff"], setup["ds"], "val", 2, setup["sched"],
        seed=0, times=2, model_name="tiny",
    )
    write_eval_outputs(tmp_path, report, ens, regs, ids, extra_meta={"seed": 0})
    report2, ens2, regs2, meta = read_eval_outputs(tmp_path)
    assert report2.rows == report.rows
    assert np.array_equal(ens2, ens.astype("<f4").astype(np.float64))
    assert np.array_equal(regs2, regs.astype("<f4").astype(np.float64))
    assert meta["model"] == "tiny" and meta["time_ids"] == [0, 3]
    assert meta["seed"] == 0


def test_read_eval_outputs_missing(tmp_path):
    with pytest.raises(ConfigurationError, match="run evaluate first"):
        read_eval_outputs(tmp_path / "nowhere")


def test_read_eval_outputs_truncated(setup, tmp_path):
    report, ens, regs, ids = evaluate_model(
        setup["reg"], setup["diff"], setup["ds"], "val", 1, setup["sched"],
        seed=0, times=1,
    )
    write_eval_outputs(tmp_path, report, ens, regs, ids)
    payload = (tmp_path / "ensembles.f32").read_bytes()
    (tmp_path / "ensembles.f32").write_bytes(payload[:-8])
    with pytest.raises(ConfigurationError, match="ensembles.f32"):
        read_eval_outputs(tmp_path)


def test_compare_backends_zero_noise(hybrid_run, tmp_path):
    cfg, reg, diff, sched = _load_diffusion_run(hybrid_run["hyb"])
    ds = read_dataset(hybrid_run["ds"])
    rows, summary = compare_backends_run(
        reg, diff, ds, sched, NoiseParams(), tmp_path, times=2, members=1,
    )
    assert summary["max_abs_delta"] == 0.0
    assert all(r["delta"] == 0.0 for r in rows)
    assert all(r["noisy"] == r["exact"] for r in rows)
    for name in ("deltas.csv", "summary.json", "deltas.svg"):
        assert (tmp_path / name).exists()


def test_compare_backends_noise_moves_scores(hybrid_run, tmp_path):
    cfg, reg, diff, sched = _load_diffusion_run(hybrid_run["hyb"])
    ds = read_dataset(hybrid_run["ds"])
    rows, summary = compare_backends_run(
        reg, diff, ds, sched, NoiseParams(p_dep=0.05), tmp_path,
        times=2, members=1,
    )
    assert summary["max_abs_delta"] > 0.0


def _write_eval(setup, outdir, name, model):
    report, ens, regs, ids = evaluate_model(
        setup["reg"], model, setup["ds"], "val", 2, setup["sched"],
        seed=0, times=2, model_name=name,
    )
    write_eval_outputs(outdir, report, ens, regs, ids)


def test_diagnostics_outputs(setup, tiny_runs, tmp_path):
    _, _, diff2, _ = _load_diffusion_run(tiny_runs["diff2"])
    a, b = tmp_path / "a", tmp_path / "b"
    _write_eval(setup, a, "a", setup["diff"])
    _write_eval(setup, b, "b", diff2)
    out = tmp_path / "diag"
    info = diagnostics_run([("a", a), ("b", b)], setup["ds"], "val", out,
                           neighborhoods=(1, 3))
    assert info["sources"] == ["truth", "regression", "a", "b"]
    for stem in ("spectra_zonal", "spectra_meridional", "windspeed_pdf"):
        assert (out / (stem + ".csv")).exists()
        assert (out / (stem + ".svg")).exists()
    for name in info["sources"]:
        assert (out / ("joint_%s.csv" % name)).exists()
        assert (out / ("joint_%s.svg" % name)).exists()
    lines = (out / "fss.csv").read_text().strip().splitlines()
    assert lines[0] == "neighborhood,regression,a,b"
    assert len(lines) == 3
    for line in lines[1:]:
        values = [float(tok) for tok in line.split(",")[1:]]
        assert all(0.0 <= v <= 1.0 for v in values)


def test_diagnostics_split_mismatch(setup, tmp_path):
    _write_eval(setup, tmp_path / "a", "a", setup["diff"])
    with pytest.raises(ConfigurationError, match="split"):
        diagnostics_run([("a", tmp_path / "a")], setup["ds"], "ood", tmp_path / "out")


def test_diagnostics_timestep_mismatch(setup, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    _write_eval(setup, a, "a", setup["diff"])
    report, ens, regs, ids = evaluate_model(
        setup["reg"], setup["diff"], setup["ds"], "val", 2, setup["sched"],
        seed=0, times=1, model_name="b",
    )
    write_eval_outputs(b, report, ens, regs, ids)
    with pytest.raises(ConfigurationError, match="timesteps"):
        diagnostics_run([("a", a), ("b", b)], setup["ds"], "val", tmp_path / "out")


def test_highband_power_fraction_extremes():
    rng = np.random.default_rng(11)
    regs = rng.normal(size=(3, 2, 16, 16))
    noisy = regs[:, None] + 2.0 * rng.normal(size=(3, 4, 2, 16, 16))
    assert highband_power_fraction(noisy, regs) == 1.0
    damped = np.repeat((0.2 * regs)[:, None], 4, axis=1)
    assert highband_power_fraction(damped, regs) == 0.0


def test_comparison_table_wins():
    a = MetricsReport(model="alpha", split="val", members=2)
    b = MetricsReport(model="beta", split="val", members=2)
    for tid in range(3):
        for var in ("u", "v"):
            a.add(tid, var, "MAE", 1.0 + tid)
            b.add(tid, var, "MAE", 0.5 + tid)  # beta always lower
    lines, wins = comparison_table(a, b)
    assert wins["wins"] == 6 and wins["total"] == 6
    assert "beta wins: 6/6 (100.0%)" in lines[-1]
    assert "alpha" in lines[0] and "beta" in lines[0]
