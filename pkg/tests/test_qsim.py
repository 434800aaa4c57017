import numpy as np
import pytest

from qdscale import qsim
from qdscale.ansatz import AnsatzSpec, bind, build
from qdscale.errors import ConfigurationError
from qdscale.qsim import (
    BoundCircuit,
    Gate,
    NoiseParams,
    StateVector,
    apply_gate,
    expectations_z,
    parameter_shift_grad,
    parameter_shift_jacobian,
    run,
)

# ---------------------------------------------------------------------------
# brute-force dense-matrix oracle (little-endian, qubit 0 = LSB)


def _embed_single(u, q, n):
    return np.kron(np.kron(np.eye(2 ** (n - 1 - q)), u), np.eye(2**q))


def _gate_unitary(gate, n):
    X = np.array([[0, 1], [1, 0]], dtype=complex)
    Z = np.diag([1.0, -1.0]).astype(complex)
    P0 = np.diag([1.0, 0.0]).astype(complex)
    P1 = np.diag([0.0, 1.0]).astype(complex)
    if gate.kind == "H":
        u = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
        return _embed_single(u, gate.qubits[0], n)
    if gate.kind in ("RX", "RY", "RZ"):
        h = 0.5 * gate.angle
        c, s = np.cos(h), np.sin(h)
        if gate.kind == "RX":
            u = np.array([[c, -1j * s], [-1j * s, c]])
        elif gate.kind == "RY":
            u = np.array([[c, -s], [s, c]])
        else:
            u = np.diag([np.exp(-1j * h), np.exp(1j * h)])
        return _embed_single(u, gate.qubits[0], n)
    c, t = gate.qubits
    other = X if gate.kind == "CNOT" else Z
    return _embed_single(P0, c, n) + _embed_single(P1, c, n) @ _embed_single(other, t, n)


def _oracle_state(circuit):
    psi = np.zeros(2**circuit.n_qubits, dtype=complex)
    psi[0] = 1.0
    for g in circuit.gates:
        psi = _gate_unitary(g, circuit.n_qubits) @ psi
    return psi


def _oracle_z(circuit):
    psi = _oracle_state(circuit)
    n = circuit.n_qubits
    probs = np.abs(psi) ** 2
    return np.array(
        [sum(probs[b] * (1 - 2 * ((b >> q) & 1)) for b in range(2**n)) for q in range(n)]
    )


def _random_circuit(rng, n, depth):
    kinds = ["H", "RX", "RY", "RZ"] + (["CNOT", "CZ"] if n >= 2 else [])
    gates = []
    for _ in range(depth):
        kind = rng.choice(kinds)
        if kind in ("CNOT", "CZ"):
            q = rng.choice(n, size=2, replace=False)
            gates.append(Gate(kind, (int(q[0]), int(q[1]))))
        elif kind == "H":
            gates.append(Gate("H", (int(rng.integers(n)),)))
        else:
            gates.append(Gate(kind, (int(rng.integers(n)),), float(rng.uniform(-np.pi, np.pi))))
    return BoundCircuit(n, tuple(gates))


# ---------------------------------------------------------------------------
# hand cases and conventions


def test_bell_state():
    circ = BoundCircuit(2, (Gate("H", (0,)), Gate("CNOT", (0, 1))))
    amps = qsim._simulate(circ)
    r = 1 / np.sqrt(2)
    assert np.allclose(amps, [r, 0, 0, r])
    assert np.allclose(run(circ), [0.0, 0.0])


def test_little_endian_qubit0_is_lsb():
    # flipping qubit 0 of |00> must populate basis index 1
    circ = BoundCircuit(2, (Gate("RX", (0,), np.pi),))
    amps = qsim._simulate(circ)
    assert np.isclose(abs(amps[1]), 1.0)
    # and flipping qubit 1 populates index 2
    circ = BoundCircuit(2, (Gate("RX", (1,), np.pi),))
    amps = qsim._simulate(circ)
    assert np.isclose(abs(amps[2]), 1.0)


@pytest.mark.parametrize("theta", [0.0, 0.3, np.pi / 2, 2.5])
def test_ry_expectation(theta):
    circ = BoundCircuit(1, (Gate("RY", (0,), theta),))
    assert np.isclose(run(circ)[0], np.cos(theta), atol=1e-12)


def test_parameter_shift_hand_case():
    circ = BoundCircuit(
        1, (Gate("RY", (0,), np.pi / 2, ("weight", 0)),), n_weight_slots=1
    )
    grad = parameter_shift_grad(circ, "exact", ("weight", 0))
    assert np.isclose(grad[0], -1.0, atol=1e-12)


def test_apply_gate_is_pure():
    state = StateVector.zero(2)
    before = state.amps.copy()
    out = apply_gate(state, Gate("H", (0,)))
    assert np.array_equal(state.amps, before)
    assert not np.allclose(out.amps, before)


# ---------------------------------------------------------------------------
# oracle equivalence


@pytest.mark.parametrize("n", [1, 2, 3, 4, 5])
@pytest.mark.parametrize("seed", range(8))
def test_random_circuits_match_dense_oracle(n, seed):
    rng = np.random.default_rng([n, seed])
    circ = _random_circuit(rng, n, depth=24)
    amps = qsim._simulate(circ)
    assert np.max(np.abs(amps - _oracle_state(circ))) < 1e-10
    assert np.max(np.abs(run(circ) - _oracle_z(circ))) < 1e-10


@pytest.mark.parametrize(
    "n,variant",
    [(4, "A"), (8, "A"), (8, "B"), (8, "A+B")],
)
def test_ansatz_templates_match_dense_oracle(n, variant):
    rng = np.random.default_rng([n, len(variant)])
    spec = AnsatzSpec(n, variant, layers=2)
    template = build(spec)
    circ = bind(
        template,
        rng.uniform(-1, 1, template.n_input_slots),
        rng.uniform(-np.pi, np.pi, template.n_weight_slots),
    )
    amps = qsim._simulate(circ)
    assert np.max(np.abs(amps - _oracle_state(circ))) < 1e-10
    assert np.max(np.abs(run(circ) - _oracle_z(circ))) < 1e-10


def test_norm_drift_after_1000_gates():
    rng = np.random.default_rng(123)
    circ = _random_circuit(rng, 6, depth=1000)
    amps = qsim._simulate(circ)
    assert abs(np.vdot(amps, amps).real - 1.0) < 1e-12


# ---------------------------------------------------------------------------
# parameter shift


@pytest.mark.parametrize("variant,n", [("A", 4), ("B", 8), ("A+B", 8)])
def test_parameter_shift_matches_finite_difference(variant, n):
    rng = np.random.default_rng(7)
    template = build(AnsatzSpec(n, variant, layers=1))
    inputs = rng.uniform(-1, 1, template.n_input_slots)
    weights = rng.uniform(-np.pi, np.pi, template.n_weight_slots)
    circ = bind(template, inputs, weights)
    eps = 1e-5
    for kind, count, vec in (
        ("weight", template.n_weight_slots, weights),
        ("input", template.n_input_slots, inputs),
    ):
        for idx in range(count):
            grad = parameter_shift_grad(circ, "exact", (kind, idx))
            shifted = vec.copy()
            shifted[idx] += eps
            plus = run(bind(template, shifted if kind == "input" else inputs,
                            weights if kind == "input" else shifted))
            shifted[idx] -= 2 * eps
            minus = run(bind(template, shifted if kind == "input" else inputs,
                             weights if kind == "input" else shifted))
            fd = (plus - minus) / (2 * eps)
            assert np.max(np.abs(grad - fd)) < 1e-6


def test_jacobian_matches_per_slot_grads():
    rng = np.random.default_rng(3)
    template = build(AnsatzSpec(8, "A+B", layers=2))
    circ = bind(
        template,
        rng.uniform(-2, 2, template.n_input_slots),
        rng.uniform(-np.pi, np.pi, template.n_weight_slots),
    )
    jw, jx = parameter_shift_jacobian(circ)
    for idx in range(template.n_weight_slots):
        assert np.allclose(jw[:, idx], parameter_shift_grad(circ, "exact", ("weight", idx)), atol=1e-12)
    for idx in range(template.n_input_slots):
        assert np.allclose(jx[:, idx], parameter_shift_grad(circ, "exact", ("input", idx)), atol=1e-12)


def test_slot_outside_light_cone_has_zero_grad():
    # RZ on a qubit that is never measured against anything: <Z> of qubit 1
    # cannot depend on a diagonal rotation of qubit 0 applied to |0>
    circ = BoundCircuit(
        2, (Gate("RZ", (0,), 0.4, ("weight", 0)),), n_weight_slots=1
    )
    grad = parameter_shift_grad(circ, "exact", ("weight", 0))
    assert np.allclose(grad, 0.0, atol=1e-14)


# ---------------------------------------------------------------------------
# noisy backend


def _ry_layer_circuit(n=2):
    return BoundCircuit(
        n, tuple(Gate("RY", (q,), 0.5 + 0.3 * q) for q in range(n))
    )


def test_zero_noise_equals_exact_identically():
    circ = _ry_layer_circuit()
    noisy = run(circ, NoiseParams(p_dep=0.0, p_ro=0.0, shots=128, seed=5))
    exact = run(circ, "exact")
    assert np.array_equal(noisy, exact)


def test_shot_noise_within_binomial_bound():
    # forcing the sampling path with a vanishing flip probability: deviation
    # from exact stays within ~5 binomial standard errors
    circ = _ry_layer_circuit()
    noisy = run(circ, NoiseParams(p_dep=0.0, p_ro=1e-12, shots=10_000, seed=1))
    exact = run(circ, "exact")
    assert np.max(np.abs(noisy - exact)) <= 0.05


def test_full_readout_noise_kills_signal():
    circ = _ry_layer_circuit()
    noisy = run(circ, NoiseParams(p_dep=0.0, p_ro=0.5, shots=40_000, seed=2))
    assert np.max(np.abs(noisy)) < 0.02


def test_depolarizing_damps_expectation_monotonically():
    theta = 0.7
    circ = BoundCircuit(1, (Gate("RY", (0,), theta),))
    levels = [0.0, 0.05, 0.15, 0.3]
    estimates = []
    for i, p in enumerate(levels):
        z = run(circ, NoiseParams(p_dep=p, p_ro=0.0, shots=100_000, seed=10 + i))[0]
        estimates.append(abs(z))
    sigma = 3.0 / np.sqrt(100_000)
    for a, b in zip(estimates, estimates[1:]):
        assert b <= a + 3 * sigma


def test_trajectories_deterministic_given_seed():
    circ = _ry_layer_circuit()
    a = run(circ, NoiseParams(p_dep=0.01, p_ro=0.01, shots=200, seed=9))
    b = run(circ, NoiseParams(p_dep=0.01, p_ro=0.01, shots=200, seed=9))
    assert np.array_equal(a, b)
    noise = NoiseParams(p_dep=0.01, p_ro=0.01, shots=200, seed=9)
    first, second = run(circ, noise), run(circ, noise)
    assert not np.array_equal(first, second)  # stream advances per invocation


# ---------------------------------------------------------------------------
# contract errors


def test_bad_backend_rejected():
    with pytest.raises(ConfigurationError):
        run(_ry_layer_circuit(), "fancy")


def test_bad_noise_params_rejected():
    with pytest.raises(ConfigurationError):
        NoiseParams(p_dep=1.5)
    with pytest.raises(ConfigurationError):
        NoiseParams(shots=0)


def test_bad_slot_rejected():
    circ = _ry_layer_circuit()
    with pytest.raises(ConfigurationError):
        parameter_shift_grad(circ, "exact", ("weight", 0))  # circuit has no slots
    with pytest.raises(ConfigurationError):
        parameter_shift_grad(circ, "exact", "w0")


def test_bad_gates_rejected():
    with pytest.raises(ConfigurationError):
        run(BoundCircuit(2, (Gate("SWAP", (0, 1)),)))
    with pytest.raises(ConfigurationError):
        run(BoundCircuit(2, (Gate("CNOT", (0, 0)),)))
    with pytest.raises(ConfigurationError):
        run(BoundCircuit(2, (Gate("RY", (3,), 0.1),)))
    with pytest.raises(ConfigurationError):
        run(BoundCircuit(2, (Gate("RY", (0,)),)))


def test_register_size_cap():
    with pytest.raises(ConfigurationError):
        StateVector.zero(17)
