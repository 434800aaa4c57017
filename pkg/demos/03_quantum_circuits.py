"""
Variational circuits on the statevector simulator
=================================================

Builds the three entangling-block ansatz variants, runs them exactly and
under depolarizing/readout noise, and shows that the parameter-shift rule
gives machine-precision gradients where finite differences only approximate.
"""

import numpy as np

from qdscale.ansatz import AnsatzSpec, bind, build, param_count
from qdscale.qsim import NoiseParams, parameter_shift_grad, run

rng = np.random.default_rng(3)

# an 8-qubit circuit: 2 channel groups of 4 qubits each
spec = AnsatzSpec(n_qubits=8, variant="A+B", layers=1)
template = build(spec)
print("variant %s, %d qubits: %d weight slots, %d input slots, %d gates"
      % (spec.variant, spec.n_qubits, template.n_weight_slots,
         template.n_input_slots, len(template.gates)))

inputs = rng.uniform(-np.pi, np.pi, size=template.n_input_slots)
weights = rng.normal(scale=0.4, size=template.n_weight_slots)
circuit = bind(template, inputs, weights)

# exact expectations <Z_i> per qubit
exact = run(circuit, backend="exact")
print("exact <Z>:", np.array2string(exact, precision=3))

# trajectory noise: depolarizing after each gate plus readout flips
for p in (0.0, 0.01, 0.05):
    noisy = run(circuit, backend=NoiseParams(p_dep=p, p_ro=0.01, shots=512, seed=0))
    print("p_dep=%-5g max deviation from exact: %.4f" % (p, np.abs(noisy - exact).max()))

# parameter-shift gradient of slot 0 vs a central finite difference
slot = ("weight", 0)
analytic = parameter_shift_grad(circuit, "exact", slot)
eps = 1e-5
w_plus, w_minus = weights.copy(), weights.copy()
w_plus[0] += eps
w_minus[0] -= eps
fd = (run(bind(template, inputs, w_plus)) - run(bind(template, inputs, w_minus))) / (2 * eps)
print("parameter-shift vs finite difference: max |diff| = %.2e"
      % np.abs(analytic - fd).max())

# channel bookkeeping: 4 qubits encode one 2x2 patch of one channel
for n, circuits in ((12, 1), (12, 3), (4, 1), (4, 3)):
    channels = circuits * (n // 4)
    print("%2d qubits x %d circuits -> %d quantum channels" % (n, circuits, channels))
print("weight count for variant B at 12 qubits, 1 layer:",
      param_count(AnsatzSpec(12, "B", 1)))
