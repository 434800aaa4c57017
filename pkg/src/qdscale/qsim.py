"""Exact statevector simulation of small circuits, with trajectory noise.

Conventions
-----------
* Little-endian qubit order: qubit 0 is the least significant bit of the
  basis-state index, so |q1 q0> = |10> is index 2. In the reshaped
  ``[2]*n`` view, qubit q lives on axis ``n-1-q``.
* Gate set: H, RX, RY, RZ (half-angle convention, RZ = diag(e^{-i a/2},
  e^{+i a/2})), CNOT and CZ as (control, target).
* Readout is the vector of per-qubit Pauli-Z expectations.

The noisy backend is trajectory (Monte Carlo) emulation: every gate is
followed by an independent depolarizing event on each qubit it touches
(probability ``p_dep`` of a uniformly random Pauli X/Y/Z), a measurement
bitstring is sampled per shot, and each measured bit flips with probability
``p_ro``. Everything is seed-deterministic. With ``p_dep == p_ro == 0`` the
noisy backend short-circuits to the exact expectation path, so it is
bit-identical to ``"exact"`` in the noiseless limit.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import NamedTuple, Optional, Tuple

import numpy as np

from .errors import ConfigurationError, NumericError

MAX_QUBITS = 16

GATE_KINDS = ("H", "RX", "RY", "RZ", "CNOT", "CZ")
ROTATIONS = ("RX", "RY", "RZ")


class Gate(NamedTuple):
    kind: str
    qubits: Tuple[int, ...]
    angle: Optional[float] = None
    # slot: None for fixed gates, else ("weight", i) or ("input", i)
    slot: Optional[Tuple[str, int]] = None


@dataclass
class StateVector:
    n_qubits: int
    amps: np.ndarray

    @classmethod
    def zero(cls, n_qubits):
        _check_n(n_qubits)
        amps = np.zeros(2**n_qubits, dtype=np.complex128)
        amps[0] = 1.0
        return cls(n_qubits, amps)

    def norm(self):
        return float(np.sqrt(np.vdot(self.amps, self.amps).real))


@dataclass
class NoiseParams:
    """Trajectory-noise configuration; one instance is a seeded stream.

    Each ``run`` consumes one invocation from the stream, so successive runs
    differ but the whole sequence is reproducible from ``seed``. Not safe to
    share across threads; clone per worker with ``with_seed``.
    """

    p_dep: float = 0.0
    p_ro: float = 0.0
    shots: int = 256
    seed: int = 0
    _invocations: int = field(default=0, repr=False, compare=False)

    def __post_init__(self):
        if not (0.0 <= self.p_dep <= 1.0 and 0.0 <= self.p_ro <= 1.0):
            raise ConfigurationError(
                "noise probabilities must be in [0,1], got p_dep=%r p_ro=%r"
                % (self.p_dep, self.p_ro)
            )
        if self.shots < 1:
            raise ConfigurationError("shots must be >= 1, got %r" % (self.shots,))

    def with_seed(self, seed):
        return NoiseParams(self.p_dep, self.p_ro, self.shots, int(seed))

    def _next_rng(self):
        rng = np.random.default_rng([self.seed, self._invocations])
        self._invocations += 1
        return rng


@dataclass(frozen=True)
class BoundCircuit:
    n_qubits: int
    gates: Tuple[Gate, ...]
    n_weight_slots: int = 0
    n_input_slots: int = 0


def _check_n(n):
    if not (1 <= n <= MAX_QUBITS):
        raise ConfigurationError("n_qubits must be in [1, %d], got %r" % (MAX_QUBITS, n))


def _rotation_matrix(kind, angle):
    h = 0.5 * angle
    c, s = np.cos(h), np.sin(h)
    if kind == "RX":
        return np.array([[c, -1j * s], [-1j * s, c]])
    if kind == "RY":
        return np.array([[c, -s], [s, c]])
    raise ConfigurationError("not a 2x2 rotation: %r" % kind)


_H_MATRIX = np.array([[1.0, 1.0], [1.0, -1.0]], dtype=np.complex128) / np.sqrt(2.0)


def _apply_inplace(amps, n, kind, qubits, angle):
    view = amps.reshape([2] * n)
    if kind == "RZ":
        v = np.moveaxis(view, n - 1 - qubits[0], 0)
        h = 0.5 * angle
        v[0] *= np.exp(-1j * h)
        v[1] *= np.exp(1j * h)
    elif kind == "H" or kind == "RX" or kind == "RY":
        u = _H_MATRIX if kind == "H" else _rotation_matrix(kind, angle)
        v = np.moveaxis(view, n - 1 - qubits[0], 0)
        t0 = v[0].copy()
        v[0] = u[0, 0] * t0 + u[0, 1] * v[1]
        v[1] = u[1, 0] * t0 + u[1, 1] * v[1]
    elif kind == "CNOT":
        c, t = qubits
        v = np.moveaxis(view, (n - 1 - c, n - 1 - t), (0, 1))
        tmp = v[1, 0].copy()
        v[1, 0] = v[1, 1]
        v[1, 1] = tmp
    elif kind == "CZ":
        c, t = qubits
        v = np.moveaxis(view, (n - 1 - c, n - 1 - t), (0, 1))
        v[1, 1] *= -1.0
    else:
        raise ConfigurationError("unknown gate kind %r" % kind)


def _apply_pauli_inplace(amps, n, pauli, q):
    v = np.moveaxis(amps.reshape([2] * n), n - 1 - q, 0)
    if pauli == 0:  # X
        tmp = v[0].copy()
        v[0] = v[1]
        v[1] = tmp
    elif pauli == 1:  # Y
        tmp = v[0].copy()
        v[0] = -1j * v[1]
        v[1] = 1j * tmp
    else:  # Z
        v[1] *= -1.0


def _validate_gate(gate, n):
    if gate.kind not in GATE_KINDS:
        raise ConfigurationError("unknown gate kind %r" % (gate.kind,))
    want = 2 if gate.kind in ("CNOT", "CZ") else 1
    if len(gate.qubits) != want or len(set(gate.qubits)) != want:
        raise ConfigurationError("gate %r has bad qubit tuple %r" % (gate.kind, gate.qubits))
    for q in gate.qubits:
        if not (0 <= q < n):
            raise ConfigurationError("qubit %d out of range for %d qubits" % (q, n))
    if gate.kind in ROTATIONS and gate.angle is None:
        raise ConfigurationError("rotation %r is missing its angle" % (gate.kind,))


def apply_gate(state, gate):
    """Apply one gate, returning a new StateVector."""
    _validate_gate(gate, state.n_qubits)
    amps = state.amps.copy()
    _apply_inplace(amps, state.n_qubits, gate.kind, gate.qubits, gate.angle)
    return StateVector(state.n_qubits, amps)


@lru_cache(maxsize=8)
def _z_signs(n):
    idx = np.arange(2**n)
    bits = (idx[None, :] >> np.arange(n)[:, None]) & 1
    return (1.0 - 2.0 * bits).astype(np.float64)


def expectations_z(state):
    """Per-qubit <Z_i>, index i = qubit i (little-endian)."""
    probs = (state.amps.real**2 + state.amps.imag**2)
    return _z_signs(state.n_qubits) @ probs


def _simulate(circuit, overrides=None, keep_prefix=False):
    """Run the circuit exactly; optionally add per-gate angle offsets.

    ``overrides`` maps gate index -> angle delta. With ``keep_prefix`` the
    list of states after each gate is returned alongside the final state.
    """
    n = circuit.n_qubits
    amps = np.zeros(2**n, dtype=np.complex128)
    amps[0] = 1.0
    prefix = [amps.copy()] if keep_prefix else None
    for i, g in enumerate(circuit.gates):
        ang = g.angle
        if overrides is not None and i in overrides:
            ang = ang + overrides[i]
        _apply_inplace(amps, n, g.kind, g.qubits, ang)
        if keep_prefix:
            prefix.append(amps.copy())
    drift = abs(np.vdot(amps, amps).real - 1.0)
    if drift > 1e-9:
        raise NumericError("statevector norm drift %.3e" % drift)
    return (amps, prefix) if keep_prefix else amps


def _touch_events(gates):
    events = []
    for i, g in enumerate(gates):
        for q in g.qubits:
            events.append((i, q))
    return events


def _sample_outcomes(rng, probs, count):
    cdf = np.cumsum(probs)
    cdf[-1] = 1.0
    return np.searchsorted(cdf, rng.random(count), side="right")


def _run_noisy(circuit, noise):
    n = circuit.n_qubits
    if noise.p_dep == 0.0 and noise.p_ro == 0.0:
        # noiseless limit: fall through to the exact expectation path
        return expectations_z(StateVector(n, _simulate(circuit)))
    rng = noise._next_rng()
    shots = noise.shots
    use_dep = noise.p_dep > 0.0 and len(circuit.gates) > 0
    if use_dep:
        final, prefix = _simulate(circuit, keep_prefix=True)
        events = _touch_events(circuit.gates)
        mask = rng.random((shots, len(events))) < noise.p_dep
        err_rows = np.nonzero(mask.any(axis=1))[0]
    else:
        final = _simulate(circuit)
        err_rows = np.array([], dtype=np.int64)
        mask = None

    outcomes = np.empty(shots, dtype=np.int64)
    clean = np.ones(shots, dtype=bool)
    clean[err_rows] = False
    n_clean = int(clean.sum())
    if n_clean:
        probs = final.real**2 + final.imag**2
        outcomes[clean] = _sample_outcomes(rng, probs, n_clean)
    for s in err_rows:
        evs = np.nonzero(mask[s])[0]
        first_gate = events[evs[0]][0]
        amps = prefix[first_gate + 1].copy()
        k = 0
        # paulis for errored events on the gate just replayed, then continue
        while k < len(evs) and events[evs[k]][0] == first_gate:
            _apply_pauli_inplace(amps, n, int(rng.integers(3)), events[evs[k]][1])
            k += 1
        for gi in range(first_gate + 1, len(circuit.gates)):
            g = circuit.gates[gi]
            _apply_inplace(amps, n, g.kind, g.qubits, g.angle)
            while k < len(evs) and events[evs[k]][0] == gi:
                _apply_pauli_inplace(amps, n, int(rng.integers(3)), events[evs[k]][1])
                k += 1
        probs = amps.real**2 + amps.imag**2
        outcomes[s] = _sample_outcomes(rng, probs, 1)[0]

    bits = (outcomes[:, None] >> np.arange(n)[None, :]) & 1
    if noise.p_ro > 0.0:
        bits = bits ^ (rng.random((shots, n)) < noise.p_ro)
    return (1.0 - 2.0 * bits).mean(axis=0)


def run(circuit, backend="exact"):
    """Expectation values <Z_i> of the circuit on the chosen backend."""
    for g in circuit.gates:
        _validate_gate(g, circuit.n_qubits)
    _check_n(circuit.n_qubits)
    if isinstance(backend, NoiseParams):
        return _run_noisy(circuit, backend)
    if backend == "exact":
        return expectations_z(StateVector(circuit.n_qubits, _simulate(circuit)))
    raise ConfigurationError("backend must be 'exact' or NoiseParams, got %r" % (backend,))


def _slot_occurrences(circuit, slot):
    if not (isinstance(slot, tuple) and len(slot) == 2 and slot[0] in ("weight", "input")):
        raise ConfigurationError("slot must be ('weight'|'input', index), got %r" % (slot,))
    kind, idx = slot
    limit = circuit.n_weight_slots if kind == "weight" else circuit.n_input_slots
    if not (0 <= idx < limit):
        raise ConfigurationError("slot %r out of range (%d %s slots)" % (slot, limit, kind))
    occ = [i for i, g in enumerate(circuit.gates) if g.slot == slot]
    for i in occ:
        if circuit.gates[i].kind not in ROTATIONS:
            raise ConfigurationError("slot %r bound to non-rotation gate" % (slot,))
    return occ


def parameter_shift_grad(circuit, backend, slot):
    """d<Z_i>/d(slot angle) via the two-point parameter-shift rule."""
    occ = _slot_occurrences(circuit, slot)
    grad = np.zeros(circuit.n_qubits)
    half = 0.5 * np.pi
    for i in occ:
        if isinstance(backend, NoiseParams) or backend != "exact":
            plus = run(_shifted(circuit, i, half), backend)
            minus = run(_shifted(circuit, i, -half), backend)
        else:
            plus = expectations_z(StateVector(circuit.n_qubits, _simulate(circuit, {i: half})))
            minus = expectations_z(StateVector(circuit.n_qubits, _simulate(circuit, {i: -half})))
        grad += 0.5 * (plus - minus)
    return grad


def _shifted(circuit, gate_idx, delta):
    gates = list(circuit.gates)
    g = gates[gate_idx]
    gates[gate_idx] = Gate(g.kind, g.qubits, g.angle + delta, g.slot)
    return BoundCircuit(circuit.n_qubits, tuple(gates), circuit.n_weight_slots, circuit.n_input_slots)


def parameter_shift_jacobian(circuit):
    """Exact-backend jacobians (d<Z>/dweights, d<Z>/dinputs).

    Reuses the cached state just before each shifted gate, so each shifted
    evaluation only replays the circuit suffix.
    """
    n = circuit.n_qubits
    jw = np.zeros((n, circuit.n_weight_slots))
    jx = np.zeros((n, circuit.n_input_slots))
    if circuit.n_weight_slots == 0 and circuit.n_input_slots == 0:
        return jw, jx
    small = n <= 13  # prefix cache is ~G * 2^n complex; skip for big registers
    if small:
        _, prefix = _simulate(circuit, keep_prefix=True)
    half = 0.5 * np.pi
    signs = _z_signs(n)
    for i, g in enumerate(circuit.gates):
        if g.slot is None:
            continue
        contrib = np.zeros(n)
        for sgn in (half, -half):
            if small:
                amps = prefix[i].copy()
                _apply_inplace(amps, n, g.kind, g.qubits, g.angle + sgn)
                for gi in range(i + 1, len(circuit.gates)):
                    gg = circuit.gates[gi]
                    _apply_inplace(amps, n, gg.kind, gg.qubits, gg.angle)
                z = signs @ (amps.real**2 + amps.imag**2)
            else:
                z = expectations_z(StateVector(n, _simulate(circuit, {i: sgn})))
            contrib += z if sgn > 0 else -z
        kind, idx = g.slot
        if kind == "weight":
            jw[:, idx] += 0.5 * contrib
        else:
            jx[:, idx] += 0.5 * contrib
    return jw, jx
