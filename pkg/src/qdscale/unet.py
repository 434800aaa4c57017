"""UNet backbones for the downscaling pipeline.

An encoder-decoder over square grids: a conv stem, one residual block per
resolution level, 2x down/up transitions, symmetric skip concatenation, and a
zero-initialized output conv (so a freshly built net is the zero map). Each
residual block is

    h = conv0(silu(gn0(x)))
    h = h + project(embedding)        broadcast over the grid, if conditioned
    h = conv1(silu(gn1(h)))
    out = h + skip(x)                 1x1 conv when channel width changes

Timestep conditioning uses a sinusoidal embedding passed through a two-layer
MLP once per forward, then a per-block linear projection. The deepest block
runs at the 2x2 bottleneck; optionally its two convolutions are replaced by
hybrid conv vertices that route leading channels through quantum circuits.
"""

import numpy as np

from . import tensor as T
from .errors import ConfigurationError
from .hybrid import HybridConvVertex
from .tensor import Tensor

GROUPS = 4
_GN_EPS = 1e-5


def sinusoidal_embedding(t, dim):
    """Classic sin/cos position encoding of integer timesteps; shape [B, dim]."""
    if dim < 4 or dim % 2:
        raise ConfigurationError("embedding dim must be even and >= 4, got %d" % dim)
    t = np.asarray(t, dtype=np.float64).reshape(-1)
    half = dim // 2
    freqs = np.exp(-np.log(10000.0) * np.arange(half) / (half - 1))
    args = t[:, None] * freqs[None, :]
    return np.concatenate([np.sin(args), np.cos(args)], axis=1)


def _conv_init(rng, c_out, c_in, k):
    fan_in = c_in * k * k
    return Tensor(rng.standard_normal((c_out, c_in, k, k)) * np.sqrt(2.0 / fan_in),
                  requires_grad=True)


def _linear_init(rng, d_out, d_in):
    w = Tensor(rng.standard_normal((d_out, d_in)) * np.sqrt(2.0 / d_in),
               requires_grad=True)
    b = Tensor(np.zeros(d_out), requires_grad=True)
    return w, b


def _gn_init(c):
    return Tensor(np.ones(c), requires_grad=True), Tensor(np.zeros(c), requires_grad=True)


class _Block:
    """One residual block; optionally conditioned, optionally hybridized."""

    def __init__(self, c_in, c_out, emb_dim, rng, hybrid_cfg=None):
        for c in (c_in, c_out):
            if c % GROUPS:
                raise ConfigurationError(
                    "block channels must be divisible by %d groups, got %d" % (GROUPS, c)
                )
        self.c_in, self.c_out = c_in, c_out
        self.gn0_g, self.gn0_b = _gn_init(c_in)
        self.gn1_g, self.gn1_b = _gn_init(c_out)
        if hybrid_cfg is not None and hybrid_cfg.quantum_channels > 0:
            self.vertex0 = HybridConvVertex(hybrid_cfg, c_in, c_out, rng)
            self.vertex1 = HybridConvVertex(hybrid_cfg, c_out, c_out, rng)
        else:
            self.vertex0 = self.vertex1 = None
            self.conv0 = _conv_init(rng, c_out, c_in, 3)
            self.conv1 = _conv_init(rng, c_out, c_out, 3)
        if emb_dim:
            self.emb_w, self.emb_b = _linear_init(rng, c_out, emb_dim)
        else:
            self.emb_w = self.emb_b = None
        self.skip = None if c_in == c_out else _conv_init(rng, c_out, c_in, 1)

    def __call__(self, x, emb, backend):
        h = T.silu(T.groupnorm(x, self.gn0_g, self.gn0_b, GROUPS, _GN_EPS))
        h = self.vertex0(h, backend) if self.vertex0 else T.conv2d(h, self.conv0)
        if self.emb_w is not None:
            h = T.broadcast_add(h, T.linear(emb, self.emb_w, self.emb_b))
        h = T.silu(T.groupnorm(h, self.gn1_g, self.gn1_b, GROUPS, _GN_EPS))
        h = self.vertex1(h, backend) if self.vertex1 else T.conv2d(h, self.conv1)
        shortcut = x if self.skip is None else T.conv2d(x, self.skip)
        return T.add(h, shortcut)

    def named_parameters(self, prefix):
        out = [(prefix + "gn0_g", self.gn0_g), (prefix + "gn0_b", self.gn0_b)]
        if self.vertex0 is not None:
            out += self.vertex0.named_parameters(prefix + "vertex0.")
        else:
            out.append((prefix + "conv0", self.conv0))
        if self.emb_w is not None:
            out += [(prefix + "emb_w", self.emb_w), (prefix + "emb_b", self.emb_b)]
        out += [(prefix + "gn1_g", self.gn1_g), (prefix + "gn1_b", self.gn1_b)]
        if self.vertex1 is not None:
            out += self.vertex1.named_parameters(prefix + "vertex1.")
        else:
            out.append((prefix + "conv1", self.conv1))
        if self.skip is not None:
            out.append((prefix + "skip", self.skip))
        return out


class UNet:
    """Encoder-decoder with residual blocks and optional quantum bottleneck.

    level_channels[i] is the width at resolution H / 2^i; the deepest level
    hosts the (optionally hybrid) bottleneck block.
    """

    def __init__(self, in_channels, out_channels, level_channels=(8, 16, 16, 16, 16),
                 emb_dim=0, hybrid=None, seed=0, head_init="zero"):
        if len(level_channels) < 2:
            raise ConfigurationError("need at least two resolution levels")
        if head_init not in ("zero", "conv"):
            raise ConfigurationError("head_init must be 'zero' or 'conv', got %r" % (head_init,))
        if emb_dim and (emb_dim < 4 or emb_dim % 2):
            raise ConfigurationError("embedding dim must be even and >= 4, got %d" % emb_dim)
        cs = tuple(int(c) for c in level_channels)
        if hybrid is not None and hybrid.quantum_channels > cs[-1]:
            raise ConfigurationError(
                "bottleneck width %d is below the %d quantum channels"
                % (cs[-1], hybrid.quantum_channels)
            )
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.level_channels = cs
        self.emb_dim = emb_dim
        self.hybrid = hybrid
        rng = np.random.default_rng(seed)
        self.stem = _conv_init(rng, cs[0], in_channels, 3)
        if emb_dim:
            self.mlp_w0, self.mlp_b0 = _linear_init(rng, emb_dim, emb_dim)
            self.mlp_w1, self.mlp_b1 = _linear_init(rng, emb_dim, emb_dim)
        levels = len(cs)
        self.enc = [_Block(cs[i], cs[i], emb_dim, rng) for i in range(levels - 1)]
        self.down = [_conv_init(rng, cs[i + 1], cs[i], 3) for i in range(levels - 1)]
        self.bottleneck = _Block(cs[-1], cs[-1], emb_dim, rng, hybrid_cfg=hybrid)
        self.up = [_conv_init(rng, cs[i], cs[i + 1], 3) for i in range(levels - 1)]
        self.dec = [_Block(2 * cs[i], cs[i], emb_dim, rng) for i in range(levels - 1)]
        if head_init == "conv":
            # reduced-gain output projection: keeps the initial prediction
            # scale modest without pinning it to zero
            self.head = Tensor(_conv_init(rng, out_channels, cs[0], 3).data * 0.1,
                               requires_grad=True)
        else:
            # a zero head keeps the first denoising predictions at exactly zero,
            # which stabilizes the early diffusion steps
            self.head = Tensor(np.zeros((out_channels, cs[0], 3, 3)), requires_grad=True)

    def __call__(self, x, t=None, backend="exact"):
        x = x if isinstance(x, Tensor) else Tensor(x)
        if x.data.ndim != 4 or x.shape[1] != self.in_channels:
            raise ConfigurationError(
                "expected [B, %d, H, W] input, got %r" % (self.in_channels, x.shape)
            )
        downs = len(self.level_channels) - 1
        size = x.shape[2]
        if x.shape[3] != size or size % (1 << downs):
            raise ConfigurationError(
                "grid %r does not support %d 2x reductions" % (x.shape[2:], downs)
            )
        if self.hybrid is not None and size >> downs != 2:
            raise ConfigurationError(
                "hybrid bottleneck needs a 2x2 deepest level, got %dx%d"
                % (size >> downs, size >> downs)
            )
        if self.emb_dim:
            if t is None:
                raise ConfigurationError("this network is conditioned; pass timesteps t")
            raw = sinusoidal_embedding(np.broadcast_to(t, (x.shape[0],)), self.emb_dim)
            emb = T.linear(Tensor(raw), self.mlp_w0, self.mlp_b0)
            emb = T.linear(T.silu(emb), self.mlp_w1, self.mlp_b1)
        else:
            emb = None
        h = T.conv2d(x, self.stem)
        skips = []
        for i in range(downs):
            h = self.enc[i](h, emb, backend)
            skips.append(h)
            h = T.conv2d(T.avgpool2x(h), self.down[i])
        h = self.bottleneck(h, emb, backend)
        for i in reversed(range(downs)):
            h = T.conv2d(T.upsample2x(h), self.up[i])
            h = self.dec[i](T.concat([skips[i], h], axis=1), emb, backend)
        return T.conv2d(h, self.head)

    def named_parameters(self):
        out = [("stem", self.stem)]
        if self.emb_dim:
            out += [("mlp_w0", self.mlp_w0), ("mlp_b0", self.mlp_b0),
                    ("mlp_w1", self.mlp_w1), ("mlp_b1", self.mlp_b1)]
        for i, block in enumerate(self.enc):
            out += block.named_parameters("enc%d." % i)
            out.append(("down%d" % i, self.down[i]))
        out += self.bottleneck.named_parameters("bottleneck.")
        for i, block in enumerate(self.dec):
            out.append(("up%d" % i, self.up[i]))
            out += block.named_parameters("dec%d." % i)
        out.append(("head", self.head))
        return out

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None

    def state_dict(self):
        return {name: p.data for name, p in self.named_parameters()}

    def load_state_dict(self, arrays):
        params = dict(self.named_parameters())
        missing = sorted(set(params) - set(arrays))
        extra = sorted(set(arrays) - set(params))
        if missing or extra:
            raise ConfigurationError(
                "parameter names do not match (missing %r, unexpected %r)"
                % (missing, extra)
            )
        for name, p in params.items():
            arr = np.asarray(arrays[name], dtype=np.float64)
            if arr.shape != p.data.shape:
                raise ConfigurationError(
                    "parameter %s has shape %r, expected %r"
                    % (name, arr.shape, p.data.shape)
                )
            p.data = arr.copy()
