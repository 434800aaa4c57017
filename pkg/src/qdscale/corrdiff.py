"""Two-stage corrective downscaling: regression mean + diffusion residual.

A deterministic regression net maps the (nearest-upsampled) low-res wind to
the conditional mean; a DDPM learns the residual r = x - mean in normalized
space, conditioned on the upsampled low-res field and the regression output
stacked along channels. Predictions are reconstructed member-wise as

    member = denormalize(regression_output + sampled_residual)

so in normalized space each member is exactly the regression plus its
residual. Sampling is ancestral with the posterior variance
beta_t * (1 - abar_{t-1}) / (1 - abar_t), which vanishes at t = 1.
"""

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .data import SCALE
from .errors import ConfigurationError, NumericError
from .tensor import Tensor, no_grad

_BETA_START_REF = 1e-4  # reference endpoints for a 1000-step linear schedule
_BETA_END_REF = 0.02


@dataclass(frozen=True)
class NoiseSchedule:
    kind: str
    steps: int
    betas: np.ndarray  # betas[i] is beta_{i+1}, i = 0..T-1
    alpha_bar: np.ndarray  # [T+1], alpha_bar[0] = 1

    @property
    def posterior_variance(self):
        """sigma_t^2 for t = 1..T at index t; index 0 unused (zero)."""
        out = np.zeros(self.steps + 1)
        out[1:] = self.betas * (1.0 - self.alpha_bar[:-1]) / (1.0 - self.alpha_bar[1:])
        return out


def make_schedule(steps, kind="linear", beta_start=None, beta_end=None):
    """Noise schedule over ``steps`` diffusion steps.

    Linear default endpoints are the 1000-step references scaled by
    1000/steps (capped below 1) so the terminal signal level stays roughly
    step-count independent; explicit endpoints are used as given.
    """
    if not isinstance(steps, (int, np.integer)) or steps < 2:
        raise ConfigurationError("schedule needs an integer steps >= 2, got %r" % (steps,))
    if kind == "linear":
        scale = 1000.0 / steps
        if beta_start is None:
            beta_start = _BETA_START_REF * scale
        if beta_end is None:
            beta_end = min(_BETA_END_REF * scale, 0.999)
        if not 0.0 < beta_start < beta_end < 1.0:
            raise ConfigurationError(
                "need 0 < beta_start < beta_end < 1, got %r, %r" % (beta_start, beta_end)
            )
        betas = np.linspace(beta_start, beta_end, steps)
    elif kind == "cosine":
        s = 0.008
        grid = np.arange(steps + 1) / steps
        f = np.cos((grid + s) / (1.0 + s) * np.pi / 2.0) ** 2
        ab = f / f[0]
        betas = np.clip(1.0 - ab[1:] / ab[:-1], 1e-8, 0.999)
    else:
        raise ConfigurationError("schedule kind must be 'linear' or 'cosine', got %r" % kind)
    alpha_bar = np.concatenate([[1.0], np.cumprod(1.0 - betas)])
    return NoiseSchedule(kind=kind, steps=steps, betas=betas, alpha_bar=alpha_bar)


def forward_noise(r0, t, eps, sched):
    """x_t = sqrt(abar_t) r0 + sqrt(1 - abar_t) eps; t scalar or per-sample."""
    r0 = np.asarray(r0, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    t = np.asarray(t)
    if np.any(t < 0) or np.any(t > sched.steps):
        raise ConfigurationError("timestep out of range 0..%d" % sched.steps)
    ab = sched.alpha_bar[t]
    if t.ndim:
        ab = ab.reshape(t.shape + (1,) * (r0.ndim - t.ndim))
    return np.sqrt(ab) * r0 + np.sqrt(1.0 - ab) * eps


def upsample_nearest(y, factor=SCALE):
    y = np.asarray(y, dtype=np.float64)
    return np.repeat(np.repeat(y, factor, axis=-2), factor, axis=-1)


def regression_forward(model, y_lr, backend="exact"):
    """Conditional-mean estimate on the hi-res grid, normalized space."""
    y_lr = np.asarray(y_lr, dtype=np.float64)
    if y_lr.ndim != 4 or y_lr.shape[1] != 2:
        raise ConfigurationError("expected [B, 2, h, w] low-res input, got %r" % (y_lr.shape,))
    return model(Tensor(upsample_nearest(y_lr)), backend=backend)


def _condition(y_lr, reg_out):
    return np.concatenate([upsample_nearest(y_lr), reg_out], axis=1)


def diffusion_train_step(x_hr, y_lr, regression, model, sched, rng, backend="exact",
                         reg_out=None):
    """One epsilon-prediction step; backward is run, returns the loss value.

    Draw order per step: timesteps t ~ U{1..T} for the batch, then one
    standard-normal noise field. The regression net stays frozen; its outputs
    for the batch may be passed in precomputed (``reg_out``).
    """
    x_hr = np.asarray(x_hr, dtype=np.float64)
    y_lr = np.asarray(y_lr, dtype=np.float64)
    batch = x_hr.shape[0]
    t = rng.integers(1, sched.steps + 1, size=batch)
    eps = rng.standard_normal(x_hr.shape)
    if reg_out is None:
        with no_grad():
            reg_out = regression_forward(regression, y_lr).data
    else:
        reg_out = np.asarray(reg_out, dtype=np.float64)
    r0 = x_hr - reg_out
    x_t = forward_noise(r0, t, eps, sched)
    inp = np.concatenate([x_t, _condition(y_lr, reg_out)], axis=1)
    pred = model(Tensor(inp), t=t, backend=backend)
    loss = T.mse(pred, Tensor(eps))
    value = float(loss.data)
    if not np.isfinite(value):
        raise NumericError(
            "non-finite diffusion loss (t=%s, |x_t|max=%g)" % (t.tolist(), np.abs(x_t).max())
        )
    loss.backward()
    return value


def _as_rngs(rng, batch):
    if isinstance(rng, (list, tuple)):
        if len(rng) != batch:
            raise ConfigurationError("need %d member streams, got %d" % (batch, len(rng)))
        return list(rng)
    return None  # single stream draws batched arrays


def sample_residual(model, cond, sched, rng, backend="exact"):
    """Ancestral DDPM sampling of normalized residual fields.

    cond: [B, 4, H, W] conditioning (upsampled low-res + regression output).
    rng: one Generator for the whole batch, or one per batch element (the
    per-member form keeps each member's draws independent of batch size).
    """
    cond = np.asarray(cond, dtype=np.float64)
    batch = cond.shape[0]
    shape = (batch, 2) + cond.shape[2:]
    rngs = _as_rngs(rng, batch)

    def draw():
        if rngs is None:
            return rng.standard_normal(shape)
        return np.stack([r.standard_normal(shape[1:]) for r in rngs])

    x = draw()
    post_var = sched.posterior_variance
    with no_grad():
        for t in range(sched.steps, 0, -1):
            beta = sched.betas[t - 1]
            ab = sched.alpha_bar[t]
            eps_hat = model(
                Tensor(np.concatenate([x, cond], axis=1)),
                t=np.full(batch, t),
                backend=backend,
            ).data
            x = (x - beta / np.sqrt(1.0 - ab) * eps_hat) / np.sqrt(1.0 - beta)
            if t > 1:
                x = x + np.sqrt(post_var[t]) * draw()
    if not np.all(np.isfinite(x)):
        raise NumericError("non-finite values during residual sampling")
    return x


@dataclass
class EnsembleForecast:
    """One timestep's stochastic downscale: M exchangeable members."""

    members: np.ndarray  # [M, 2, H, W], physical units
    regression: np.ndarray  # [2, H, W], physical units
    regression_normalized: np.ndarray  # [2, H, W]
    residuals: np.ndarray  # [M, 2, H, W], normalized space
    member_seeds: list
    time_id: int = 0

    @property
    def n_members(self):
        return self.members.shape[0]

    def ensemble_mean(self):
        return self.members.mean(axis=0)


def downscale_ensemble(regression, diffusion, y_lr, dataset, members, sched,
                       seed=0, backend="exact", time_id=0):
    """Full pipeline for one low-res field (physical units in and out).

    Member m draws from default_rng([*seed, m]) (seed may be an int or a
    sequence); members are batched through the nets, whose ops are all
    per-sample, so a member depends only on its own seed.
    """
    if members < 1:
        raise ConfigurationError("need at least one ensemble member")
    y_lr = np.asarray(y_lr, dtype=np.float64)
    if y_lr.ndim != 3 or y_lr.shape[0] != 2:
        raise ConfigurationError("expected one [2, h, w] low-res field, got %r" % (y_lr.shape,))
    base = list(seed) if isinstance(seed, (list, tuple)) else [seed]
    y_norm = dataset.normalize(y_lr)
    with no_grad():
        reg_norm = regression_forward(regression, y_norm[None], backend=backend).data[0]
    cond = np.repeat(_condition(y_norm[None], reg_norm[None]), members, axis=0)
    rngs = [np.random.default_rng(base + [m]) for m in range(members)]
    residuals = sample_residual(diffusion, cond, sched, rngs, backend=backend)
    member_fields = np.stack(
        [dataset.denormalize(reg_norm + residuals[m]) for m in range(members)]
    )
    return EnsembleForecast(
        members=member_fields,
        regression=dataset.denormalize(reg_norm),
        regression_normalized=reg_norm,
        residuals=residuals,
        member_seeds=[base + [m] for m in range(members)],
        time_id=time_id,
    )
