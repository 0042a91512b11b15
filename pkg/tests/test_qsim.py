"""Statevector simulator: gates vs dense-unitary oracle, circuit, SPSA."""

import numpy as np
import pytest

from fanetq.errors import ContractViolation, TrainingError
from fanetq.qsim import (
    H_MATRIX,
    N_QUBITS,
    QUBIT_PAIRS,
    SpsaState,
    VqcSpec,
    ansatz_layer,
    apply_cnot,
    apply_cphase,
    apply_gate,
    encode_layer,
    ry_matrix,
    rx_matrix,
    rz_matrix,
    spsa_gradient,
    spsa_minimize,
    vqc_forward,
    vqc_state,
    z_expectations,
    zero_state,
)

# ---------------------------------------------------------------------------
# dense-matrix oracle: build the full 2^n x 2^n unitary with kron products
# ---------------------------------------------------------------------------


def dense_1q(mat, qubit, n):
    ops = [np.eye(2)] * n
    ops[qubit] = mat
    out = ops[0]
    for op in ops[1:]:
        out = np.kron(out, op)
    return out


def dense_cnot(control, target, n):
    dim = 2**n
    u = np.zeros((dim, dim))
    for b in range(dim):
        bits = [(b >> (n - 1 - k)) & 1 for k in range(n)]
        if bits[control] == 1:
            bits[target] ^= 1
        b2 = 0
        for bit in bits:
            b2 = (b2 << 1) | bit
        u[b2, b] = 1.0
    return u


def dense_cphase(lam, control, target, n):
    dim = 2**n
    diag = np.ones(dim, dtype=complex)
    for b in range(dim):
        bits = [(b >> (n - 1 - k)) & 1 for k in range(n)]
        if bits[control] == 1 and bits[target] == 1:
            diag[b] = np.exp(1j * lam)
    return np.diag(diag)


def dense_encode_layer(x):
    u = np.eye(16, dtype=complex)
    for q in range(4):
        u = dense_1q(H_MATRIX, q, 4) @ u
    for q in range(4):
        u = dense_1q(rz_matrix(2 * x[q]), q, 4) @ u
    for qi, qj in QUBIT_PAIRS:
        xx = 2.0 * (np.pi - x[qi]) * (np.pi - x[qj])
        u = dense_cnot(qi, qj, 4) @ u
        u = dense_1q(rz_matrix(xx), qj, 4) @ u
        u = dense_cnot(qi, qj, 4) @ u
    return u


def dense_ansatz_layer(theta):
    u = np.eye(16, dtype=complex)
    for q in range(4):
        u = dense_cnot(q, (q + 1) % 4, 4) @ u
    for q in range(4):
        u = dense_1q(rz_matrix(theta[3 * q]), q, 4) @ u
        u = dense_1q(ry_matrix(theta[3 * q + 1]), q, 4) @ u
        u = dense_1q(rz_matrix(theta[3 * q + 2]), q, 4) @ u
    return u


def dense_vqc_state(spec, features):
    x = spec.scaled_angles(np.asarray(features, dtype=float))
    state = np.zeros(16, dtype=complex)
    state[0] = 1.0
    for layer in range(spec.n_layers):
        state = dense_encode_layer(x[4 * layer : 4 * layer + 4]) @ state
        state = dense_ansatz_layer(spec.theta[12 * layer : 12 * layer + 12]) @ state
    return state


class TestGates:
    def test_h_on_zero(self):
        s = apply_gate(zero_state(1), "H", (0,))
        assert np.abs(s - np.array([1, 1]) / np.sqrt(2)).max() < 1e-12

    def test_bell_state(self):
        s = zero_state(2)
        s = apply_gate(s, "H", (0,))
        s = apply_gate(s, "CNOT", (0, 1))
        bell = np.zeros(4)
        bell[0] = bell[3] = 1 / np.sqrt(2)
        assert np.abs(s - bell).max() < 1e-12

    def test_random_sequence_matches_dense_oracle(self):
        rng = np.random.default_rng(0)
        for _ in range(25):
            n = 4
            state = zero_state(n)
            u = np.eye(16, dtype=complex)
            for _ in range(6):
                kind = rng.choice(["H", "RX", "RY", "RZ", "CNOT", "CPHASE"])
                if kind in ("CNOT", "CPHASE"):
                    q = list(rng.choice(n, size=2, replace=False))
                    lam = float(rng.uniform(-np.pi, np.pi))
                    state = apply_gate(state, kind, tuple(q), lam)
                    if kind == "CNOT":
                        u = dense_cnot(q[0], q[1], n) @ u
                    else:
                        u = dense_cphase(lam, q[0], q[1], n) @ u
                else:
                    q = int(rng.integers(0, n))
                    lam = float(rng.uniform(-np.pi, np.pi))
                    state = apply_gate(state, kind, (q,), lam)
                    mats = {"H": H_MATRIX, "RX": rx_matrix(lam), "RY": ry_matrix(lam), "RZ": rz_matrix(lam)}
                    u = dense_1q(mats[kind], q, n) @ u
            expected = u @ zero_state(n)
            assert np.abs(state - expected).max() < 1e-10

    def test_duplicate_control_target_rejected(self):
        with pytest.raises(ContractViolation):
            apply_cnot(zero_state(2), 1, 1)
        with pytest.raises(ContractViolation):
            apply_cphase(zero_state(2), 0.3, 0, 0)

    def test_norm_preserved_long_circuit(self):
        rng = np.random.default_rng(1)
        state = zero_state(4)
        for _ in range(200):
            q = int(rng.integers(0, 4))
            state = apply_gate(state, "RY", (q,), float(rng.uniform(-np.pi, np.pi)))
            state = apply_cnot(state, q, (q + 1) % 4)
        assert abs(np.linalg.norm(state) - 1.0) < 1e-10

    def test_batched_matches_single(self):
        rng = np.random.default_rng(2)
        batch = np.tile(zero_state(4), (3, 1)).astype(complex)
        single = [zero_state(4) for _ in range(3)]
        for _ in range(10):
            q = int(rng.integers(0, 4))
            lam = float(rng.uniform(-np.pi, np.pi))
            batch = apply_gate(batch, "RY", (q,), lam)
            batch = apply_cnot(batch, q, (q + 1) % 4)
            single = [apply_cnot(apply_gate(s, "RY", (q,), lam), q, (q + 1) % 4) for s in single]
        for k in range(3):
            assert np.abs(batch[k] - single[k]).max() < 1e-12


class TestEncodeLayer:
    def test_all_pi_inputs_zero_pairwise_angles(self):
        # xx = 2(pi - x_i)(pi - x_j) vanishes at x = pi: layer equals H+RZ only
        x = np.full(4, np.pi)
        got = encode_layer(zero_state(4), x)
        expected = zero_state(4)
        for q in range(4):
            expected = apply_gate(expected, "H", (q,))
        for q in range(4):
            expected = apply_gate(expected, "RZ", (q,), 2 * np.pi)
        assert np.abs(got - expected).max() < 1e-12

    def test_zero_inputs_pairwise_angle_value(self):
        # direct substitution: xx = 2 pi^2 for every pair
        x = np.zeros(4)
        got = encode_layer(zero_state(4), x)
        expected = zero_state(4)
        for q in range(4):
            expected = apply_gate(expected, "H", (q,))
        for q in range(4):
            expected = apply_gate(expected, "RZ", (q,), 0.0)
        for qi, qj in QUBIT_PAIRS:
            expected = apply_cnot(expected, qi, qj)
            expected = apply_gate(expected, "RZ", (qi, qj)[1:], 2 * np.pi**2)
            expected = apply_cnot(expected, qi, qj)
        assert np.abs(got - expected).max() < 1e-12

    def test_matches_dense_oracle(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            x = rng.uniform(-np.pi, np.pi, size=4)
            got = encode_layer(zero_state(4), x)
            expected = dense_encode_layer(x) @ zero_state(4)
            assert np.abs(got - expected).max() < 1e-10


class TestAnsatzLayer:
    def test_zero_angles_only_ring_acts(self):
        theta = np.zeros(12)
        got = ansatz_layer(zero_state(4), theta)
        expected = zero_state(4)
        for q in range(4):
            expected = apply_cnot(expected, q, (q + 1) % 4)
        assert np.abs(got - expected).max() < 1e-12

    def test_parameter_count_per_layer(self):
        assert VqcSpec(n_layers=3).theta.size == 36
        assert VqcSpec(n_layers=1).theta.size == 12
        assert VqcSpec(n_layers=2).theta.size == 24

    def test_matches_dense_oracle(self):
        rng = np.random.default_rng(4)
        for _ in range(20):
            theta = rng.uniform(-np.pi, np.pi, size=12)
            got = ansatz_layer(zero_state(4), theta)
            expected = dense_ansatz_layer(theta) @ zero_state(4)
            assert np.abs(got - expected).max() < 1e-10


class TestVqcForward:
    def test_initial_state_expectations(self):
        assert np.array_equal(z_expectations(zero_state(4)), np.ones(4))

    def test_outputs_bounded(self):
        rng = np.random.default_rng(5)
        spec = VqcSpec(n_layers=2, scaling_fn="arctan", theta=rng.uniform(-3, 3, 24), xi=rng.uniform(-2, 2, 8))
        feats = rng.uniform(-5, 5, size=(1000, 8))
        z = vqc_forward(spec, feats)
        assert np.all(z >= -1.0 - 1e-12) and np.all(z <= 1.0 + 1e-12)

    @pytest.mark.parametrize("n_layers", [1, 2, 3])
    def test_matches_dense_oracle(self, n_layers):
        rng = np.random.default_rng(10 + n_layers)
        for _ in range(34):
            spec = VqcSpec(
                n_layers=n_layers,
                scaling_fn=str(rng.choice(["identity", "arctan"])),
                theta=rng.uniform(-np.pi, np.pi, 12 * n_layers),
                xi=rng.uniform(-2, 2, 4 * n_layers),
            )
            feats = rng.uniform(-np.pi, np.pi, size=4 * n_layers)
            got_state = vqc_state(spec, feats)
            expected_state = dense_vqc_state(spec, feats)
            assert np.abs(got_state - expected_state).max() < 1e-10
            assert np.abs(vqc_forward(spec, feats) - z_expectations(expected_state)).max() < 1e-10

    def test_feature_length_mismatch(self):
        spec = VqcSpec(n_layers=2)
        with pytest.raises(ContractViolation):
            vqc_forward(spec, np.zeros(4))

    def test_deterministic(self):
        rng = np.random.default_rng(6)
        spec = VqcSpec(n_layers=2, scaling_fn="arctan", theta=rng.uniform(-1, 1, 24), xi=rng.uniform(-1, 1, 8))
        feats = rng.uniform(-1, 1, 8)
        assert np.array_equal(vqc_forward(spec, feats), vqc_forward(spec, feats))

    def test_batched_matches_per_sample(self):
        rng = np.random.default_rng(7)
        spec = VqcSpec(n_layers=1, theta=rng.uniform(-1, 1, 12))
        feats = rng.uniform(-np.pi, np.pi, size=(17, 4))
        batched = vqc_forward(spec, feats)
        for i in range(17):
            assert np.abs(batched[i] - vqc_forward(spec, feats[i])).max() < 1e-12

    def test_export_roundtrip(self):
        rng = np.random.default_rng(8)
        spec = VqcSpec(n_layers=3, scaling_fn="arctan", theta=rng.uniform(-1, 1, 36), xi=rng.uniform(-1, 1, 12))
        clone = VqcSpec.from_json(spec.to_json())
        assert clone.n_layers == 3 and clone.scaling_fn == "arctan"
        feats = rng.uniform(-1, 1, 12)
        assert np.array_equal(vqc_forward(spec, feats), vqc_forward(clone, feats))

    def test_spec_validation(self):
        with pytest.raises(ContractViolation):
            VqcSpec(n_layers=0)
        with pytest.raises(ContractViolation):
            VqcSpec(n_layers=1, scaling_fn="sigmoid")
        with pytest.raises(ContractViolation):
            VqcSpec(n_layers=1, theta=np.zeros(13))


class TestSpsa:
    def test_three_evaluations_per_estimate(self):
        calls = []

        def loss(theta):
            calls.append(theta.copy())
            return float(np.sum(theta**2))

        state = SpsaState.matched_to_lr(1e-4, seed=0)
        spsa_gradient(loss, np.ones(5), state)
        assert len(calls) == 3

    def test_linear_loss_unbiased(self):
        # estimator expectation equals the true gradient of g . theta
        rng_seed = 123
        g = np.array([0.7, -1.3, 2.1, 0.4])
        state = SpsaState.matched_to_lr(1e-4, seed=rng_seed)
        state.c = 0.05
        estimates = []
        for _ in range(10_000):
            grad, _ = spsa_gradient(lambda th: float(g @ th), np.zeros(4), state)
            state.k = 0  # hold the perturbation size fixed
            estimates.append(grad)
        est = np.stack(estimates)
        se = est.std(axis=0) / np.sqrt(len(est))
        assert np.all(np.abs(est.mean(axis=0) - g) < 3 * se + 1e-9)

    def test_schedule_strictly_decreasing(self):
        state = SpsaState.matched_to_lr(1e-4, seed=0)
        cks, aks = [], []
        for k in range(50):
            state.k = k
            cks.append(state.perturbation_size())
            aks.append(state.step_size())
        assert all(b < a for a, b in zip(cks, cks[1:]))
        assert all(b < a for a, b in zip(aks, aks[1:]))
        assert all(c > 0 for c in cks) and all(a > 0 for a in aks)

    def test_first_step_matches_learning_rate(self):
        state = SpsaState.matched_to_lr(3e-4, seed=0)
        assert state.step_size() == pytest.approx(3e-4)

    def test_quadratic_bowl_minimized(self):
        rng = np.random.default_rng(9)
        target = rng.uniform(-1, 1, size=12)

        def loss(th):
            return float(np.sum((th - target) ** 2))

        state = SpsaState(a=0.6, c=0.1, rng=np.random.default_rng(1))
        theta, final_loss = spsa_minimize(loss, np.zeros(12), state, iterations=2000)
        assert loss(theta) < 1e-2

    def test_non_finite_loss_raises(self):
        state = SpsaState.matched_to_lr(1e-4, seed=0)
        with pytest.raises(TrainingError):
            spsa_gradient(lambda th: float("nan"), np.zeros(3), state)
