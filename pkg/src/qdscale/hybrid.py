"""Hybrid quantum-classical bottleneck convolutions.

At the 2x2 bottleneck of the UNet, the first ``quantum_channels =
n_circuits * N/4`` channels are routed through independent variational
circuits — one circuit per group of N/4 channels, each channel contributing
its four pixels as encoding angles (channel-major, then row-major pixels) —
and the per-qubit Z expectations are reshaped back into channels. The
remaining channels go through an ordinary 3x3 convolution, and the two
outputs are concatenated along the channel axis.

Gradients for the quantum branch use the parameter-shift rule for both the
circuit weights and the encoded inputs. Parameter-shift jacobians are always
evaluated on the exact backend: training is exact; noisy backends are an
inference-time emulation knob.
"""

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .ansatz import AnsatzSpec, bind, build, param_count
from .errors import ConfigurationError
from .qsim import parameter_shift_jacobian, run
from .tensor import Tensor, _accumulate, _node
from .utils import parallel_map


@dataclass(frozen=True)
class HybridBottleneckConfig:
    n_qubits: int = 12
    variant: str = "B"
    layers: int = 2
    n_circuits: int = 1
    enabled: bool = True

    @property
    def channels_per_circuit(self):
        return self.n_qubits // 4

    @property
    def quantum_channels(self):
        if not self.enabled or self.n_circuits == 0:
            return 0
        return self.n_circuits * self.channels_per_circuit

    def ansatz_spec(self):
        return AnsatzSpec(self.n_qubits, self.variant, self.layers)


def _check_patch(x, channels, what):
    if x.data.ndim != 4 or x.shape[2:] != (2, 2):
        raise ConfigurationError(
            "%s: expected [B, C, 2, 2] input, got %r" % (what, x.shape)
        )
    if channels is not None and x.shape[1] != channels:
        raise ConfigurationError(
            "%s: expected %d channels, got %d" % (what, channels, x.shape[1])
        )


def quantum_layer_forward(x, template, weights, backend="exact"):
    """Run one circuit per batch element over a [B, N/4, 2, 2] patch."""
    x = x if isinstance(x, Tensor) else Tensor(x)
    _check_patch(x, template.n_qubits // 4, "quantum_layer")
    if weights.shape != (template.n_weight_slots,):
        raise ConfigurationError(
            "quantum_layer: expected %d weights, got %r"
            % (template.n_weight_slots, weights.shape)
        )
    batch = x.shape[0]
    groups = template.n_qubits // 4
    bound = [bind(template, x.data[b].reshape(-1), weights.data) for b in range(batch)]
    outs = parallel_map(lambda c: run(c, backend), bound)
    out = np.stack(outs).reshape(batch, groups, 2, 2)

    def bw(node):
        def run_bw():
            jacs = parallel_map(parameter_shift_jacobian, bound)
            gw = np.zeros_like(weights.data)
            gx = np.zeros_like(x.data)
            for b in range(batch):
                g = node.grad[b].reshape(-1)
                jw, jx = jacs[b]
                gw += jw.T @ g
                gx[b] = (jx.T @ g).reshape(groups, 2, 2)
            if weights.requires_grad:
                _accumulate(weights, gw)
            if x.requires_grad:
                _accumulate(x, gx)

        return run_bw

    return _node(out, (x, weights), bw)


def quantum_channel_layer_forward(x, template, weights_list, backend="exact"):
    """Independent circuits over consecutive channel groups of x."""
    x = x if isinstance(x, Tensor) else Tensor(x)
    groups = template.n_qubits // 4
    n_circuits = len(weights_list)
    _check_patch(x, groups * n_circuits, "quantum_channel_layer")
    if n_circuits == 1:
        return quantum_layer_forward(x, template, weights_list[0], backend)
    chunks = T.split(x, [groups] * n_circuits, axis=1)
    outs = [
        quantum_layer_forward(chunk, template, w, backend)
        for chunk, w in zip(chunks, weights_list)
    ]
    return T.concat(outs, axis=1)


def hybrid_conv_vertex_forward(x, cfg, template, qweights, conv_kernel, backend="exact"):
    """Quantum channels + classical conv, concatenated along channels."""
    x = x if isinstance(x, Tensor) else Tensor(x)
    qc = cfg.quantum_channels
    if qc == 0:
        return T.conv2d(x, conv_kernel)
    _check_patch(x, None, "hybrid_conv_vertex")
    c_in = x.shape[1]
    if qc >= c_in:
        raise ConfigurationError(
            "hybrid_conv_vertex: %d quantum channels need at least %d inputs, got %d"
            % (qc, qc + 1, c_in)
        )
    if conv_kernel.shape[1] != c_in - qc:
        raise ConfigurationError(
            "hybrid_conv_vertex: classical kernel expects %d in-channels, got %d"
            % (conv_kernel.shape[1], c_in - qc)
        )
    xq, xc = T.split(x, [qc, c_in - qc], axis=1)
    out_q = quantum_channel_layer_forward(xq, template, qweights, backend)
    out_c = T.conv2d(xc, conv_kernel)
    return T.concat([out_q, out_c], axis=1)


class HybridConvVertex:
    """A drop-in conv vertex whose first channels are quantum-processed.

    ``c_in -> c_out`` where the first ``cfg.quantum_channels`` input channels
    map to the first ``cfg.quantum_channels`` output channels through the
    circuits and the rest through a 3x3 convolution.
    """

    def __init__(self, cfg, c_in, c_out, rng):
        qc = cfg.quantum_channels
        if qc > 0:
            self.template = build(cfg.ansatz_spec())
            n_w = param_count(cfg.ansatz_spec())
            self.qweights = [
                Tensor(rng.uniform(-0.2, 0.2, n_w), requires_grad=True)
                for _ in range(cfg.n_circuits)
            ]
        else:
            self.template = None
            self.qweights = []
        fan_in = (c_in - qc) * 9
        kdata = rng.standard_normal((c_out - qc, c_in - qc, 3, 3)) * np.sqrt(2.0 / fan_in)
        self.kernel = Tensor(kdata, requires_grad=True)
        self.cfg = cfg

    def __call__(self, x, backend="exact"):
        return hybrid_conv_vertex_forward(
            x, self.cfg, self.template, self.qweights, self.kernel, backend
        )

    def named_parameters(self, prefix=""):
        out = [(prefix + "kernel", self.kernel)]
        for i, w in enumerate(self.qweights):
            out.append((prefix + "q%d" % i, w))
        return out
