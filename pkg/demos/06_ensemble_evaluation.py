"""
Probabilistic evaluation of a trained downscaler
================================================

Draws a calibrated ensemble for each coarse input (mean from the regression
stage, spread from the diffusion stage), then scores it with MAE on the
ensemble mean, CRPS on the full ensemble, and neighborhood skill at the
99th-percentile wind speed. Run 05_train_downscaler.py first.
"""

from pathlib import Path

import numpy as np

from qdscale import svgchart
from qdscale.config import load_config
from qdscale.corrdiff import downscale_ensemble, make_schedule
from qdscale.data import FieldSpec, build_dataset
from qdscale.evaluate import evaluate_model, highband_power_fraction
from qdscale.metrics import directional_spectrum, format_mean_std, fss
from qdscale.train import load_model

run = Path("demo_out/05_train_downscaler")
out = Path("demo_out/06_ensemble_evaluation")
out.mkdir(parents=True, exist_ok=True)
if not (run / "diff" / "checkpoint.bin").exists():
    raise SystemExit("train first: python3 demos/05_train_downscaler.py")

cfg = load_config(override_tokens=[
    "--data.size", "16",
    "--model.level_channels", "[4,8,8]", "--model.emb_dim", "16",
])
ds = build_dataset(FieldSpec(size=16, seed=0), n_train=64, n_val=8, n_ood=8)
regression = load_model(run / "reg", cfg, "regression")
diffusion = load_model(run / "diff", cfg, "diffusion")
sched = make_schedule(cfg["diffusion"]["T"])

# one ensemble, up close: members share the regression mean, differ in residual
fc = downscale_ensemble(regression, diffusion, ds.lo["val"][0], ds,
                        members=8, sched=sched, seed=0)
spread = fc.members.std(axis=0).mean()
print("8 members on one timestep: mean residual spread %.3f m/s" % spread)

# the full report: MAE + CRPS per timestep and variable over the val split
report, ens, regs, ids = evaluate_model(
    regression, diffusion, ds, "val", members=8, sched=sched, seed=0,
)
for (metric, var), (mean, std) in sorted(report.aggregate().items()):
    print("%-5s %s  %s" % (metric, var, format_mean_std(mean, std)))

# the diffusion stage restores small-scale power the regression mean lacks
frac = highband_power_fraction(ens, regs)
print("ensemble out-powers regression at %.0f%% of upper-third wavenumbers"
      % (100 * frac))
k, ens_p = directional_spectrum(ens.reshape((-1, 2, 16, 16)))
_, reg_p = directional_spectrum(regs)
_, truth_p = directional_spectrum(ds.hi["val"])
svgchart.line_chart(
    out / "spectra.svg",
    [("truth", k, truth_p), ("regression", k, reg_p), ("ensemble", k, ens_p)],
    title="zonal spectra", xlabel="wavenumber", ylabel="power",
    logx=True, logy=True,
)

# neighborhood skill at extreme winds, scored per member and averaged —
# averaging the members first would wash the extremes out of the forecast
speed_truth = np.hypot(ds.hi["val"][:, 0], ds.hi["val"][:, 1])
speed_members = np.hypot(ens[:, :, 0], ens[:, :, 1])
threshold = np.percentile(speed_truth, 99)
for n in (1, 3, 5):
    scores = [fss(speed_members[j, m], speed_truth[j], threshold, n)
              for j in range(len(ids)) for m in range(ens.shape[1])]
    print("FSS @ p99 speed, %dx%d window: %.3f" % (n, n, np.mean(scores)))
print("wrote", out / "spectra.svg")
