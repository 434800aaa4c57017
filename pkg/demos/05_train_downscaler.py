"""
Training the two-stage downscaler
=================================

Stage one is a plain UNet regression onto the conditional mean; stage two is
a denoising diffusion model over the residual, conditioned on the upsampled
input and the frozen regression output. This runs both stages at toy scale
and plots the loss curves.
"""

from pathlib import Path

import numpy as np

from qdscale import svgchart
from qdscale.config import load_config
from qdscale.data import FieldSpec, build_dataset
from qdscale.train import load_model, train_stage

out = Path("demo_out/05_train_downscaler")
out.mkdir(parents=True, exist_ok=True)

# a 16x16 problem keeps each UNet pass cheap enough to watch converge live
cfg = load_config(override_tokens=[
    "--data.size", "16",
    "--model.level_channels", "[4,8,8]", "--model.emb_dim", "16",
    "--train.steps", "200", "--train.checkpoint_every", "50", "--train.batch", "4",
    "--train.lr", "0.005",
])
ds = build_dataset(FieldSpec(size=16, seed=0), n_train=64, n_val=8, n_ood=8)

print("-- regression stage (predicts the conditional mean)")
reg_losses = train_stage(cfg, ds, out / "reg", "regression")
regression = load_model(out / "reg", cfg, "regression")

print("-- diffusion stage (predicts noise on the residual)")
# the residual model must be decent at every one of the T noise levels or the
# sampler amplifies its errors, so it gets more steps than the mean predictor
cfg["train"]["lr"] = 2e-3
cfg["train"]["steps"] = 600
cfg["train"]["batch"] = 8
cfg["train"]["checkpoint_every"] = 150
diff_losses = train_stage(cfg, ds, out / "diff", "diffusion", regression=regression)

for name, losses in (("regression", reg_losses), ("diffusion", diff_losses)):
    first = np.mean([v for _, v in losses[:10]])
    last = np.mean([v for _, v in losses[-10:]])
    print("%s: first-10 mean %.4f -> last-10 mean %.4f (%.0f%% drop)"
          % (name, first, last, 100 * (1 - last / first)))

svgchart.line_chart(
    out / "losses.svg",
    [(name, [s for s, _ in ls], [v for _, v in ls])
     for name, ls in (("regression", reg_losses), ("diffusion", diff_losses))],
    title="training losses", xlabel="step", ylabel="mse", logy=True,
)
print("wrote", out / "losses.svg")

# both runs resume from checkpoint.bin if interrupted: rerunning is a no-op
again = train_stage(cfg, ds, out / "diff", "diffusion", regression=regression)
print("rerun after completion trains %d further steps" % len(again))
