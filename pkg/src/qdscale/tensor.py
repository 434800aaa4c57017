"""Reverse-mode automatic differentiation on float64 numpy arrays.

The op set is exactly what the downscaling UNets need: conv2d, linear, silu,
group norm, elementwise add/sub/mul, channel concat/split, nearest 2x
upsampling, 2x average pooling, per-channel broadcast add, and mse — plus a
scalar sum used by losses and tests. Every Tensor stores float64 data, an
optional float64 grad of the same shape, and a backward closure; calling
``backward()`` on a scalar walks the graph in reverse topological order.
Gradients accumulate until reset, so repeated backward calls add up.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ConfigurationError

_grad_enabled = True


class no_grad:
    """Context manager that disables graph construction (inference mode)."""

    def __enter__(self):
        global _grad_enabled
        self._prev = _grad_enabled
        _grad_enabled = False
        return self

    def __exit__(self, *exc):
        global _grad_enabled
        _grad_enabled = self._prev
        return False


def is_grad_enabled():
    return _grad_enabled


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_backward", "_parents")

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._backward = None
        self._parents = ()

    @property
    def shape(self):
        return self.data.shape

    def item(self):
        return float(self.data)

    def zero_grad(self):
        self.grad = None

    def detach(self):
        return Tensor(self.data)

    def backward(self):
        """Reverse-mode sweep from a scalar node."""
        if self.data.size != 1:
            raise ConfigurationError(
                "backward() requires a scalar tensor, got shape %r" % (self.shape,)
            )
        topo = []
        seen = set()

        def visit(t):
            if id(t) in seen:
                return
            seen.add(id(t))
            for p in t._parents:
                visit(p)
            topo.append(t)

        visit(self)
        _accumulate(self, np.ones_like(self.data))
        for t in reversed(topo):
            if t._backward is not None:
                t._backward()

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return mul(self, other)
        return scale(self, other)

    __rmul__ = __mul__

    def __repr__(self):
        return "Tensor(shape=%r, requires_grad=%r)" % (self.shape, self.requires_grad)


def _accumulate(t, g):
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


def _node(data, parents, backward):
    """Wrap an op result; builds the graph only when gradients are wanted."""
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward(out)
    return out


def _as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


# ---------------------------------------------------------------------------
# elementwise and reduction ops


def add(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    if a.shape != b.shape:
        raise ConfigurationError("add: shape mismatch %r vs %r" % (a.shape, b.shape))

    def bw(out):
        def run():
            if a.requires_grad:
                _accumulate(a, out.grad)
            if b.requires_grad:
                _accumulate(b, out.grad)

        return run

    return _node(a.data + b.data, (a, b), bw)


def sub(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    if a.shape != b.shape:
        raise ConfigurationError("sub: shape mismatch %r vs %r" % (a.shape, b.shape))

    def bw(out):
        def run():
            if a.requires_grad:
                _accumulate(a, out.grad)
            if b.requires_grad:
                _accumulate(b, -out.grad)

        return run

    return _node(a.data - b.data, (a, b), bw)


def mul(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    if a.shape != b.shape:
        raise ConfigurationError("mul: shape mismatch %r vs %r" % (a.shape, b.shape))

    def bw(out):
        def run():
            if a.requires_grad:
                _accumulate(a, out.grad * b.data)
            if b.requires_grad:
                _accumulate(b, out.grad * a.data)

        return run

    return _node(a.data * b.data, (a, b), bw)


def scale(a, s):
    a = _as_tensor(a)
    s = float(s)

    def bw(out):
        def run():
            if a.requires_grad:
                _accumulate(a, out.grad * s)

        return run

    return _node(a.data * s, (a,), bw)


def silu(a):
    """x * sigmoid(x), the smooth gate used throughout the UNets."""
    a = _as_tensor(a)
    sig = 1.0 / (1.0 + np.exp(-a.data))

    def bw(out):
        def run():
            if a.requires_grad:
                _accumulate(a, out.grad * sig * (1.0 + a.data * (1.0 - sig)))

        return run

    return _node(a.data * sig, (a,), bw)


def sum_all(a):
    a = _as_tensor(a)

    def bw(out):
        def run():
            if a.requires_grad:
                _accumulate(a, np.full_like(a.data, float(out.grad)))

        return run

    return _node(a.data.sum(), (a,), bw)


def mse(a, b):
    """Mean squared error over all elements; returns a scalar tensor."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.shape != b.shape:
        raise ConfigurationError("mse: shape mismatch %r vs %r" % (a.shape, b.shape))
    diff = a.data - b.data
    n = diff.size

    def bw(out):
        def run():
            g = (2.0 / n) * diff * out.grad
            if a.requires_grad:
                _accumulate(a, g)
            if b.requires_grad:
                _accumulate(b, -g)

        return run

    return _node(np.mean(diff * diff), (a, b), bw)


# ---------------------------------------------------------------------------
# shape ops


def concat(tensors, axis=1):
    tensors = [_as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def bw(out):
        def run():
            pieces = np.split(out.grad, splits, axis=axis)
            for t, g in zip(tensors, pieces):
                if t.requires_grad:
                    _accumulate(t, g)

        return run

    return _node(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors), bw)


def split(a, sizes, axis=1):
    """Split into consecutive chunks of the given sizes along ``axis``."""
    a = _as_tensor(a)
    if sum(sizes) != a.shape[axis]:
        raise ConfigurationError(
            "split: sizes %r do not cover axis %d of shape %r" % (sizes, axis, a.shape)
        )
    outs = []
    start = 0
    for size in sizes:
        sl = [slice(None)] * a.data.ndim
        sl[axis] = slice(start, start + size)
        sl = tuple(sl)

        def bw(out, sl=sl):
            def run():
                if a.requires_grad:
                    g = np.zeros_like(a.data)
                    g[sl] = out.grad
                    _accumulate(a, g)

            return run

        outs.append(_node(a.data[sl].copy(), (a,), bw))
        start += size
    return outs


def upsample2x(a):
    """Nearest-neighbour 2x upsampling of [B, C, H, W]."""
    a = _as_tensor(a)

    def bw(out):
        def run():
            if a.requires_grad:
                B, C, H, W = a.shape
                g = out.grad.reshape(B, C, H, 2, W, 2).sum(axis=(3, 5))
                _accumulate(a, g)

        return run

    return _node(np.repeat(np.repeat(a.data, 2, axis=2), 2, axis=3), (a,), bw)


def avgpool2x(a):
    """2x2 average pooling of [B, C, H, W]; H and W must be even."""
    a = _as_tensor(a)
    B, C, H, W = a.shape
    if H % 2 or W % 2:
        raise ConfigurationError("avgpool2x: odd spatial size %r" % ((H, W),))

    def bw(out):
        def run():
            if a.requires_grad:
                g = np.repeat(np.repeat(out.grad, 2, axis=2), 2, axis=3) / 4.0
                _accumulate(a, g)

        return run

    return _node(a.data.reshape(B, C, H // 2, 2, W // 2, 2).mean(axis=(3, 5)), (a,), bw)


def broadcast_add(a, e):
    """Add a per-channel vector [B, C] onto a map [B, C, H, W]."""
    a, e = _as_tensor(a), _as_tensor(e)
    if a.data.ndim != 4 or e.data.ndim != 2 or a.shape[:2] != e.shape:
        raise ConfigurationError(
            "broadcast_add: expected [B,C,H,W] and [B,C], got %r and %r"
            % (a.shape, e.shape)
        )

    def bw(out):
        def run():
            if a.requires_grad:
                _accumulate(a, out.grad)
            if e.requires_grad:
                _accumulate(e, out.grad.sum(axis=(2, 3)))

        return run

    return _node(a.data + e.data[:, :, None, None], (a, e), bw)


# ---------------------------------------------------------------------------
# linear and convolution


def linear(x, w, b=None):
    """x [B, din] @ w [dout, din]^T (+ b [dout])."""
    x, w = _as_tensor(x), _as_tensor(w)
    b = _as_tensor(b) if b is not None else None
    y = x.data @ w.data.T
    if b is not None:
        y = y + b.data

    parents = (x, w) if b is None else (x, w, b)

    def bw(out):
        def run():
            g = out.grad
            if x.requires_grad:
                _accumulate(x, g @ w.data)
            if w.requires_grad:
                _accumulate(w, g.T @ x.data)
            if b is not None and b.requires_grad:
                _accumulate(b, g.sum(axis=0))

        return run

    return _node(y, parents, bw)


def conv2d(x, kernel, stride=1, pad=None):
    """2-D convolution, NCHW layout, square odd kernel, no bias.

    ``pad`` defaults to k//2, the same-size convention at stride 1.
    """
    x, kernel = _as_tensor(x), _as_tensor(kernel)
    if x.data.ndim != 4 or kernel.data.ndim != 4:
        raise ConfigurationError(
            "conv2d: expected [B,Cin,H,W] and [Cout,Cin,k,k], got %r and %r"
            % (x.shape, kernel.shape)
        )
    B, Cin, H, W = x.shape
    Cout, Cin_k, kh, kw = kernel.shape
    if kh != kw or kh % 2 == 0:
        raise ConfigurationError("conv2d: kernel must be square and odd, got %r" % ((kh, kw),))
    if Cin_k != Cin:
        raise ConfigurationError("conv2d: in-channel mismatch %d vs %d" % (Cin_k, Cin))
    if pad is None:
        pad = kh // 2
    if (H + 2 * pad - kh) % stride or (W + 2 * pad - kw) % stride:
        raise ConfigurationError(
            "conv2d: size %r with k=%d pad=%d stride=%d does not tile" % ((H, W), kh, pad, stride)
        )
    Ho = (H + 2 * pad - kh) // stride + 1
    Wo = (W + 2 * pad - kw) // stride + 1

    xp = np.pad(x.data, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x.data
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
    col = win.transpose(0, 2, 3, 1, 4, 5).reshape(B * Ho * Wo, Cin * kh * kw)
    wmat = kernel.data.reshape(Cout, Cin * kh * kw)
    y = (col @ wmat.T).reshape(B, Ho, Wo, Cout).transpose(0, 3, 1, 2)

    def bw(out):
        def run():
            g = out.grad.transpose(0, 2, 3, 1).reshape(B * Ho * Wo, Cout)
            if kernel.requires_grad:
                _accumulate(kernel, (g.T @ col).reshape(kernel.shape))
            if x.requires_grad:
                dcol = (g @ wmat).reshape(B, Ho, Wo, Cin, kh, kw).transpose(0, 3, 1, 2, 4, 5)
                dxp = np.zeros((B, Cin, H + 2 * pad, W + 2 * pad))
                for i in range(kh):
                    for j in range(kw):
                        dxp[:, :, i : i + stride * Ho : stride, j : j + stride * Wo : stride] += (
                            dcol[:, :, :, :, i, j]
                        )
                _accumulate(x, dxp[:, :, pad : pad + H, pad : pad + W] if pad else dxp)

        return run

    return _node(y, (x, kernel), bw)


def groupnorm(x, gamma, beta, groups=4, eps=1e-5):
    """Group normalization over [B, C, H, W] with per-channel affine."""
    x, gamma, beta = _as_tensor(x), _as_tensor(gamma), _as_tensor(beta)
    B, C, H, W = x.shape
    if C % groups:
        raise ConfigurationError("groupnorm: %d channels not divisible by %d groups" % (C, groups))
    if gamma.shape != (C,) or beta.shape != (C,):
        raise ConfigurationError("groupnorm: affine params must have shape (%d,)" % C)
    m = (C // groups) * H * W
    xg = x.data.reshape(B, groups, m)
    mu = xg.mean(axis=2, keepdims=True)
    var = xg.var(axis=2, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = ((xg - mu) * inv).reshape(B, C, H, W)
    y = gamma.data[None, :, None, None] * xhat + beta.data[None, :, None, None]

    def bw(out):
        def run():
            g = out.grad
            if gamma.requires_grad:
                _accumulate(gamma, (g * xhat).sum(axis=(0, 2, 3)))
            if beta.requires_grad:
                _accumulate(beta, g.sum(axis=(0, 2, 3)))
            if x.requires_grad:
                dxhat = (g * gamma.data[None, :, None, None]).reshape(B, groups, m)
                xh = xhat.reshape(B, groups, m)
                dx = inv * (
                    dxhat
                    - dxhat.mean(axis=2, keepdims=True)
                    - xh * (dxhat * xh).mean(axis=2, keepdims=True)
                )
                _accumulate(x, dx.reshape(B, C, H, W))

        return run

    return _node(y, (x, gamma, beta), bw)


# ---------------------------------------------------------------------------
# gradient checking


def finite_diff_check(f, params, eps=1e-4):
    """Max relative disagreement between reverse-mode and central differences.

    ``f`` is a no-argument callable returning a scalar Tensor computed from the
    ``params`` tensors. Error per coordinate is |analytic - fd| / (|fd| + 1e-8);
    the max over every coordinate of every param is returned.
    """
    for p in params:
        p.grad = None
    f().backward()
    grads = [
        p.grad.copy() if p.grad is not None else np.zeros_like(p.data) for p in params
    ]
    worst = 0.0
    with no_grad():
        for p, g in zip(params, grads):
            flat = p.data.reshape(-1)
            gflat = g.reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + eps
                fp = float(f().data)
                flat[i] = orig - eps
                fm = float(f().data)
                flat[i] = orig
                fd = (fp - fm) / (2.0 * eps)
                worst = max(worst, abs(gflat[i] - fd) / (abs(fd) + 1e-8))
    return worst
