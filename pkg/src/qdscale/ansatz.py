"""Hardware-efficient circuit templates for 2x2-pixel channel groups.

A register of N qubits (N a multiple of 4) carries N/4 channel groups of one
2x2 spatial patch each: group g owns qubits 4g..4g+3, and qubit 4g+p encodes
pixel p of that channel (row-major pixel order). Input encoding is H followed
by RZ(x_i) on every qubit.

Per layer the variational part is built from two blocks:

* Block A (per channel group): RY(w) on each of the 4 qubits, a CZ ring
  (q0,q1),(q1,q2),(q2,q3),(q3,q0), then RZ(w) on each qubit — 8 weights per
  group per layer. Acts strictly inside each group.
* Block B (per pixel position p in 0..3): a CNOT chain across groups at fixed
  pixel offset (qubit 4g+p controls qubit 4(g+1)+p), then RY(w) on the pixel-p
  qubit of every group — N weights per layer. This is the only cross-channel
  coupling, and it needs at least two channel groups to exist.

Variants: "A", "B", and "A+B" (A then B within each layer).
"""

from dataclasses import dataclass
from typing import Tuple

import numpy as np

from .errors import ConfigurationError
from .qsim import BoundCircuit, Gate

VARIANTS = ("A", "B", "A+B")


@dataclass(frozen=True)
class AnsatzSpec:
    n_qubits: int
    variant: str
    layers: int


@dataclass(frozen=True)
class CircuitTemplate:
    n_qubits: int
    gates: Tuple[Gate, ...]
    n_weight_slots: int
    n_input_slots: int


def _validate(spec):
    if spec.n_qubits < 4 or spec.n_qubits % 4:
        raise ConfigurationError(
            "n_qubits must be a positive multiple of 4, got %r" % (spec.n_qubits,)
        )
    if spec.n_qubits > 16:
        raise ConfigurationError("n_qubits above the 16-qubit simulator cap")
    if spec.variant not in VARIANTS:
        raise ConfigurationError("variant must be one of %r, got %r" % (VARIANTS, spec.variant))
    if spec.layers < 1:
        raise ConfigurationError("layers must be >= 1, got %r" % (spec.layers,))
    channels = spec.n_qubits // 4
    if spec.variant in ("B", "A+B") and channels < 2:
        raise ConfigurationError(
            "block B requires at least two channels, got %d (variant %r)"
            % (channels, spec.variant)
        )
    return channels


def param_count(spec):
    """Number of weight slots the template will emit."""
    channels = _validate(spec)
    per_layer = 0
    if spec.variant in ("A", "A+B"):
        per_layer += 8 * channels
    if spec.variant in ("B", "A+B"):
        per_layer += spec.n_qubits
    return spec.layers * per_layer


def build(spec):
    """Emit the gate sequence with symbolic weight/input slots."""
    channels = _validate(spec)
    n = spec.n_qubits
    gates = []
    for q in range(n):
        gates.append(Gate("H", (q,)))
    for q in range(n):
        gates.append(Gate("RZ", (q,), slot=("input", q)))
    w = 0
    for _ in range(spec.layers):
        if spec.variant in ("A", "A+B"):
            for g in range(channels):
                base = 4 * g
                for i in range(4):
                    gates.append(Gate("RY", (base + i,), slot=("weight", w)))
                    w += 1
                for i in range(4):
                    gates.append(Gate("CZ", (base + i, base + (i + 1) % 4)))
                for i in range(4):
                    gates.append(Gate("RZ", (base + i,), slot=("weight", w)))
                    w += 1
        if spec.variant in ("B", "A+B"):
            for p in range(4):
                for g in range(channels - 1):
                    gates.append(Gate("CNOT", (4 * g + p, 4 * (g + 1) + p)))
                for g in range(channels):
                    gates.append(Gate("RY", (4 * g + p,), slot=("weight", w)))
                    w += 1
    assert w == param_count(spec)
    return CircuitTemplate(n, tuple(gates), n_weight_slots=w, n_input_slots=n)


def bind(template, inputs, weights):
    """Resolve slot angles, producing a runnable circuit.

    Rebinding the same values yields a bitwise-identical circuit; the
    template itself is never mutated.
    """
    inputs = np.asarray(inputs, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    if inputs.shape != (template.n_input_slots,):
        raise ConfigurationError(
            "bind: expected %d inputs, got shape %r" % (template.n_input_slots, inputs.shape)
        )
    if weights.shape != (template.n_weight_slots,):
        raise ConfigurationError(
            "bind: expected %d weights, got shape %r" % (template.n_weight_slots, weights.shape)
        )
    if not (np.all(np.isfinite(inputs)) and np.all(np.isfinite(weights))):
        raise ConfigurationError("bind: non-finite angle")
    gates = []
    for g in template.gates:
        if g.slot is None:
            gates.append(g)
        else:
            kind, idx = g.slot
            val = inputs[idx] if kind == "input" else weights[idx]
            gates.append(Gate(g.kind, g.qubits, float(val), g.slot))
    return BoundCircuit(
        template.n_qubits, tuple(gates), template.n_weight_slots, template.n_input_slots
    )
