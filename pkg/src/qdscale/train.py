"""Training loops for the regression and diffusion stages.

Both stages draw their per-step randomness from ``default_rng([seed, stage,
step])`` so a run can be interrupted and resumed bit-exactly: the checkpoint
carries parameters, Adam moments, and the step counter, and no step depends
on random state left over from earlier steps. Each run directory gets a
``checkpoint.bin`` (overwritten at checkpoint intervals) and an appended
``loss.csv`` with one row per step.
"""

import csv
from pathlib import Path

import numpy as np

from . import tensor as T
from .checkpoint import load_checkpoint, save_checkpoint
from .corrdiff import diffusion_train_step, make_schedule, regression_forward
from .errors import ConfigurationError, NumericError
from .hybrid import HybridBottleneckConfig
from .tensor import Tensor, no_grad
from .unet import UNet

_STAGE_TAGS = {"regression": 0, "diffusion": 1}


class Adam:
    def __init__(self, named_params, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.named_params = list(named_params)
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self.m = {name: np.zeros_like(p.data) for name, p in self.named_params}
        self.v = {name: np.zeros_like(p.data) for name, p in self.named_params}

    def step(self):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for name, p in self.named_params:
            g = p.grad if p.grad is not None else np.zeros_like(p.data)
            self.m[name] = b1 * self.m[name] + (1 - b1) * g
            self.v[name] = b2 * self.v[name] + (1 - b2) * g * g
            mhat = self.m[name] / (1 - b1**self.t)
            vhat = self.v[name] / (1 - b2**self.t)
            p.data = p.data - self.lr * mhat / (np.sqrt(vhat) + self.eps)


def hybrid_config(cfg):
    """HybridBottleneckConfig from the ansatz/hybrid config tables."""
    return HybridBottleneckConfig(
        n_qubits=cfg["ansatz"]["n_qubits"],
        variant=cfg["ansatz"]["variant"],
        layers=cfg["ansatz"]["layers"],
        n_circuits=cfg["hybrid"]["n_circuits"],
        enabled=cfg["hybrid"]["enabled"],
    )


def build_model(cfg, stage, seed):
    levels = cfg["model"]["level_channels"]
    if stage == "regression":
        return UNet(2, 2, level_channels=levels, emb_dim=0, seed=seed, head_init="conv")
    hybrid = hybrid_config(cfg)
    if not hybrid.enabled:
        hybrid = None
    return UNet(6, 2, level_channels=levels, emb_dim=cfg["model"]["emb_dim"],
                hybrid=hybrid, seed=seed)


def _checkpoint_path(run_dir):
    return Path(run_dir) / "checkpoint.bin"


def save_training_state(run_dir, model, opt, step):
    arrays = {"param/" + k: v for k, v in model.state_dict().items()}
    arrays.update({"adam/m/" + k: v for k, v in opt.m.items()})
    arrays.update({"adam/v/" + k: v for k, v in opt.v.items()})
    arrays["meta/progress"] = np.array([step, opt.t], dtype=np.float64)
    save_checkpoint(_checkpoint_path(run_dir), sorted(arrays.items()))


def load_training_state(run_dir, model, opt=None):
    """Restore parameters (and optimizer moments); returns the stored step."""
    path = _checkpoint_path(run_dir)
    if not path.exists():
        raise ConfigurationError(
            "%s has no checkpoint.bin (train that stage first)" % Path(run_dir)
        )
    arrays = load_checkpoint(path)
    state = {k[len("param/"):]: v for k, v in arrays.items() if k.startswith("param/")}
    model.load_state_dict(state)
    step = int(arrays["meta/progress"][0])
    if opt is not None:
        for name, _ in opt.named_params:
            opt.m[name] = arrays["adam/m/" + name].copy()
            opt.v[name] = arrays["adam/v/" + name].copy()
        opt.t = int(arrays["meta/progress"][1])
    return step


def load_model(run_dir, cfg, stage):
    model = build_model(cfg, stage, seed=cfg["seed"] + _STAGE_TAGS[stage])
    load_training_state(run_dir, model)
    return model


def _append_losses(run_dir, rows):
    path = Path(run_dir) / "loss.csv"
    new = not path.exists()
    with open(path, "a", newline="") as fh:
        writer = csv.writer(fh)
        if new:
            writer.writerow(["step", "loss"])
        for step, loss in rows:
            writer.writerow([step, repr(loss)])


def _normalized_split(dataset, split):
    return dataset.normalize(dataset.hi[split]), dataset.normalize(dataset.lo[split])


def precompute_regression(regression, y_norm, chunk=16):
    """Frozen-stage conditional means for a whole split, in chunks."""
    outs = []
    with no_grad():
        for start in range(0, y_norm.shape[0], chunk):
            outs.append(regression_forward(regression, y_norm[start:start + chunk]).data)
    return np.concatenate(outs, axis=0)


def train_stage(cfg, dataset, run_dir, stage, regression=None, log=print):
    """Run (or resume) one stage; returns the per-step losses of this call."""
    if stage not in _STAGE_TAGS:
        raise ConfigurationError("stage must be 'regression' or 'diffusion', got %r" % stage)
    if stage == "diffusion" and regression is None:
        raise ConfigurationError("the diffusion stage needs a trained regression model")
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    seed = cfg["seed"]
    tag = _STAGE_TAGS[stage]
    steps = cfg["train"]["steps"]
    batch = cfg["train"]["batch"]
    every = cfg["train"]["checkpoint_every"]
    model = build_model(cfg, stage, seed=seed + tag)
    opt = Adam(model.named_parameters(), lr=cfg["train"]["lr"])
    start = 0
    if _checkpoint_path(run_dir).exists():
        start = load_training_state(run_dir, model, opt)
        if start >= steps:
            log("%s: checkpoint already at step %d >= %d, nothing to do" % (stage, start, steps))
            return []
        log("%s: resuming from step %d" % (stage, start))
    x_norm, y_norm = _normalized_split(dataset, "train")
    n = x_norm.shape[0]
    sched = make_schedule(cfg["diffusion"]["T"], cfg["diffusion"]["schedule"])
    reg_cache = precompute_regression(regression, y_norm) if stage == "diffusion" else None
    losses = []
    flushed = 0
    for step in range(start + 1, steps + 1):
        rng = np.random.default_rng([seed, tag, step])
        idx = rng.integers(0, n, size=batch)
        model.zero_grad()
        if stage == "regression":
            pred = regression_forward(model, y_norm[idx])
            loss = T.mse(pred, Tensor(x_norm[idx]))
            value = float(loss.data)
            if not np.isfinite(value):
                raise NumericError("non-finite regression loss at step %d" % step)
            loss.backward()
        else:
            value = diffusion_train_step(
                x_norm[idx], y_norm[idx], regression, model, sched, rng,
                reg_out=reg_cache[idx],
            )
        opt.step()
        losses.append((step, value))
        if step % every == 0 or step == steps:
            save_training_state(run_dir, model, opt, step)
            _append_losses(run_dir, losses[flushed:])
            flushed = len(losses)
            log("%s step %d/%d loss %.6f" % (stage, step, steps, value))
    return losses
