"""Exact statevector simulation of the 4-qubit data-reuploading critic core.

The simulator keeps a batch axis in front of the amplitude axes so that a
whole minibatch of inputs can be pushed through the circuit at once.  All
data-dependent gates (the encoding rotations) are diagonal, so per-sample
angles broadcast cheaply; the trainable ansatz angles are shared across the
batch.  Qubit 0 is the most significant bit of the amplitude index.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ContractViolation, TrainingError

SQRT2_INV = 1.0 / np.sqrt(2.0)

H_MATRIX = np.array([[1, 1], [1, -1]], dtype=complex) * SQRT2_INV


def rx_matrix(lam: float) -> np.ndarray:
    c, s = np.cos(lam / 2), np.sin(lam / 2)
    return np.array([[c, -1j * s], [-1j * s, c]], dtype=complex)


def ry_matrix(lam: float) -> np.ndarray:
    c, s = np.cos(lam / 2), np.sin(lam / 2)
    return np.array([[c, -s], [s, c]], dtype=complex)


def rz_matrix(lam: float) -> np.ndarray:
    return np.array([[np.exp(-0.5j * lam), 0], [0, np.exp(0.5j * lam)]], dtype=complex)


def zero_state(n_qubits: int, batch: int | None = None) -> np.ndarray:
    """|0...0> as a (2^n,) vector, or a (batch, 2^n) stack of copies."""
    dim = 2**n_qubits
    if batch is None:
        state = np.zeros(dim, dtype=complex)
        state[0] = 1.0
        return state
    state = np.zeros((batch, dim), dtype=complex)
    state[:, 0] = 1.0
    return state


def _as_batch(state: np.ndarray) -> tuple[np.ndarray, bool]:
    if state.ndim == 1:
        return state[None, :], True
    return state, False


def _n_qubits_of(state: np.ndarray) -> int:
    n = int(np.log2(state.shape[-1]))
    if 2**n != state.shape[-1]:
        raise ContractViolation(f"amplitude axis of length {state.shape[-1]} is not a power of two")
    return n


def apply_1q(state: np.ndarray, matrix: np.ndarray, qubit: int) -> np.ndarray:
    """Apply a 2x2 unitary to one qubit of a (batch, 2^n) or (2^n,) state."""
    batched, squeeze = _as_batch(state)
    n = _n_qubits_of(batched)
    if not 0 <= qubit < n:
        raise ContractViolation(f"qubit {qubit} out of range for {n} qubits")
    s = batched.reshape((-1,) + (2,) * n)
    s = np.moveaxis(s, 1 + qubit, -1)
    s = s @ matrix.T
    s = np.moveaxis(s, -1, 1 + qubit).reshape(batched.shape)
    return s[0] if squeeze else s


def apply_diag_1q(state: np.ndarray, phases: np.ndarray, qubit: int) -> np.ndarray:
    """Apply diag(phases[..., 0], phases[..., 1]) on one qubit.

    ``phases`` has shape (2,) for a shared gate or (batch, 2) for per-sample
    angles; the diagonal structure is what makes batched encoding cheap.
    """
    batched, squeeze = _as_batch(state)
    n = _n_qubits_of(batched)
    s = batched.reshape((-1,) + (2,) * n)
    shape = [1] * (n + 1)
    shape[1 + qubit] = 2
    if phases.ndim == 2:
        shape[0] = phases.shape[0]
    s = s * phases.reshape(shape)
    s = s.reshape(batched.shape)
    return s[0] if squeeze else s


def apply_cnot(state: np.ndarray, control: int, target: int) -> np.ndarray:
    if control == target:
        raise ContractViolation("CNOT control and target must differ")
    batched, squeeze = _as_batch(state)
    n = _n_qubits_of(batched)
    s = batched.reshape((-1,) + (2,) * n).copy()
    idx0 = [slice(None)] * (n + 1)
    idx1 = [slice(None)] * (n + 1)
    idx0[1 + control] = 1
    idx1[1 + control] = 1
    idx0[1 + target] = 0
    idx1[1 + target] = 1
    tmp = s[tuple(idx0)].copy()
    s[tuple(idx0)] = s[tuple(idx1)]
    s[tuple(idx1)] = tmp
    s = s.reshape(batched.shape)
    return s[0] if squeeze else s


def apply_cphase(state: np.ndarray, lam: float, control: int, target: int) -> np.ndarray:
    if control == target:
        raise ContractViolation("CPHASE control and target must differ")
    batched, squeeze = _as_batch(state)
    n = _n_qubits_of(batched)
    s = batched.reshape((-1,) + (2,) * n).copy()
    idx = [slice(None)] * (n + 1)
    idx[1 + control] = 1
    idx[1 + target] = 1
    s[tuple(idx)] = s[tuple(idx)] * np.exp(1j * lam)
    s = s.reshape(batched.shape)
    return s[0] if squeeze else s


def apply_gate(state: np.ndarray, gate: str, targets: tuple[int, ...], param: float | None = None) -> np.ndarray:
    """Named-gate dispatcher for {H, RX, RY, RZ, CNOT, CPHASE}."""
    gate = gate.upper()
    if gate == "H":
        return apply_1q(state, H_MATRIX, targets[0])
    if gate == "RX":
        return apply_1q(state, rx_matrix(param), targets[0])
    if gate == "RY":
        return apply_1q(state, ry_matrix(param), targets[0])
    if gate == "RZ":
        return apply_1q(state, rz_matrix(param), targets[0])
    if gate == "CNOT":
        return apply_cnot(state, targets[0], targets[1])
    if gate == "CPHASE":
        return apply_cphase(state, param, targets[0], targets[1])
    raise ContractViolation(f"unknown gate {gate!r}")


def z_expectations(state: np.ndarray) -> np.ndarray:
    """<Z_q> for every qubit; (4,) for a single state, (batch, 4) otherwise."""
    batched, squeeze = _as_batch(state)
    n = _n_qubits_of(batched)
    probs = (batched.real**2 + batched.imag**2).reshape((-1,) + (2,) * n)
    out = np.empty((batched.shape[0], n))
    for q in range(n):
        marg = probs.sum(axis=tuple(1 + a for a in range(n) if a != q))
        out[:, q] = marg[:, 0] - marg[:, 1]
    return out[0] if squeeze else out


# ---------------------------------------------------------------------------
# Data-reuploading circuit
# ---------------------------------------------------------------------------

SCALING_FNS: dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "identity": lambda x: x,
    "arctan": np.arctan,
}

N_QUBITS = 4
PARAMS_PER_ROTATION_LAYER = 3 * N_QUBITS  # RZ-RY-RZ per qubit
QUBIT_PAIRS = [(i, j) for i in range(N_QUBITS) for j in range(i + 1, N_QUBITS)]


@dataclass
class VqcSpec:
    """Layered data-reuploading circuit description.

    ``theta`` are the quantum weights (12 per layer, updated by SPSA),
    ``xi`` the per-feature input scalings (4 per layer, trained with the
    classical optimizer and counted as classical weights).
    """

    n_layers: int
    scaling_fn: str = "identity"
    theta: np.ndarray = field(default=None)  # type: ignore[assignment]
    xi: np.ndarray = field(default=None)  # type: ignore[assignment]
    n_qubits: int = N_QUBITS

    def __post_init__(self):
        if self.n_qubits != N_QUBITS:
            raise ContractViolation("the critic core circuit is fixed at 4 qubits")
        if self.n_layers < 1:
            raise ContractViolation("n_layers must be >= 1")
        if self.scaling_fn not in SCALING_FNS:
            raise ContractViolation(f"unknown scaling_fn {self.scaling_fn!r}")
        if self.theta is None:
            self.theta = np.zeros(PARAMS_PER_ROTATION_LAYER * self.n_layers)
        else:
            self.theta = np.asarray(self.theta, dtype=float)
        if self.xi is None:
            self.xi = np.ones(N_QUBITS * self.n_layers)
        else:
            self.xi = np.asarray(self.xi, dtype=float)
        if self.theta.shape != (PARAMS_PER_ROTATION_LAYER * self.n_layers,):
            raise ContractViolation(f"theta must have {PARAMS_PER_ROTATION_LAYER * self.n_layers} entries")
        if self.xi.shape != (N_QUBITS * self.n_layers,):
            raise ContractViolation(f"xi must have {N_QUBITS * self.n_layers} entries")

    @property
    def n_features(self) -> int:
        return N_QUBITS * self.n_layers

    @property
    def n_quantum_weights(self) -> int:
        return self.theta.size

    def scaled_angles(self, features: np.ndarray) -> np.ndarray:
        """x = f(o * xi) for raw pre-features o of shape (..., 4L)."""
        return SCALING_FNS[self.scaling_fn](features * self.xi)

    def to_dict(self) -> dict:
        return {
            "n_qubits": self.n_qubits,
            "L": self.n_layers,
            "scaling_fn": self.scaling_fn,
            "theta": self.theta.tolist(),
            "xi": self.xi.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "VqcSpec":
        return cls(
            n_layers=d["L"],
            scaling_fn=d["scaling_fn"],
            theta=np.asarray(d["theta"]),
            xi=np.asarray(d["xi"]),
            n_qubits=d.get("n_qubits", N_QUBITS),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "VqcSpec":
        return cls.from_dict(json.loads(text))


def _rz_phases(angles: np.ndarray) -> np.ndarray:
    """diag entries of RZ for per-sample angles of shape (batch,) or scalar."""
    angles = np.asarray(angles)
    return np.stack([np.exp(-0.5j * angles), np.exp(0.5j * angles)], axis=-1)


def encode_layer(state: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Second-order Pauli-Z evolution encoding for one layer.

    H on every qubit, RZ(2 x_q) per qubit, then for each pair q_i < q_j a
    CNOT-conjugated RZ on q_j with angle 2(pi - x_i)(pi - x_j).  ``x`` holds
    the already-scaled angles, shape (4,) or (batch, 4).
    """
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != N_QUBITS:
        raise ContractViolation("encode_layer expects 4 features per sample")
    for q in range(N_QUBITS):
        state = apply_1q(state, H_MATRIX, q)
    for q in range(N_QUBITS):
        state = apply_diag_1q(state, _rz_phases(2.0 * x[..., q]), q)
    for qi, qj in QUBIT_PAIRS:
        xx = 2.0 * (np.pi - x[..., qi]) * (np.pi - x[..., qj])
        state = apply_cnot(state, qi, qj)
        state = apply_diag_1q(state, _rz_phases(xx), qj)
        state = apply_cnot(state, qi, qj)
    return state


def ansatz_layer(state: np.ndarray, theta_layer: np.ndarray) -> np.ndarray:
    """Trainable block: a CNOT ring, then RZ-RY-RZ Euler rotations per qubit.

    The ring comes first so the rotations sit between this layer's entangler
    and the next layer's encoding; the entangler-then-rotation order is what
    reproduces the reference entanglement-capability values for L = 1..3.
    """
    theta_layer = np.asarray(theta_layer, dtype=float)
    if theta_layer.shape != (PARAMS_PER_ROTATION_LAYER,):
        raise ContractViolation("ansatz_layer expects 12 angles")
    for q in range(N_QUBITS):
        state = apply_cnot(state, q, (q + 1) % N_QUBITS)
    for q in range(N_QUBITS):
        state = apply_1q(state, rz_matrix(theta_layer[3 * q]), q)
        state = apply_1q(state, ry_matrix(theta_layer[3 * q + 1]), q)
        state = apply_1q(state, rz_matrix(theta_layer[3 * q + 2]), q)
    return state


def vqc_state(spec: VqcSpec, features: np.ndarray, theta: np.ndarray | None = None) -> np.ndarray:
    """Output statevector for raw pre-features of shape (4L,) or (batch, 4L)."""
    features = np.asarray(features, dtype=float)
    if features.shape[-1] != spec.n_features:
        raise ContractViolation(
            f"expected {spec.n_features} pre-features for L={spec.n_layers}, got {features.shape[-1]}"
        )
    theta = spec.theta if theta is None else np.asarray(theta, dtype=float)
    x = spec.scaled_angles(features)
    batch = None if features.ndim == 1 else features.shape[0]
    state = zero_state(spec.n_qubits, batch)
    for layer in range(spec.n_layers):
        lo = N_QUBITS * layer
        state = encode_layer(state, x[..., lo : lo + N_QUBITS])
        state = ansatz_layer(state, theta[PARAMS_PER_ROTATION_LAYER * layer : PARAMS_PER_ROTATION_LAYER * (layer + 1)])
    return state


def vqc_forward(spec: VqcSpec, features: np.ndarray, theta: np.ndarray | None = None) -> np.ndarray:
    """<Z_q> outputs, each in [-1, 1]; batched when ``features`` is 2-D."""
    return z_expectations(vqc_state(spec, features, theta))


# ---------------------------------------------------------------------------
# SPSA
# ---------------------------------------------------------------------------


@dataclass
class SpsaState:
    """Gain schedule and RNG stream for simultaneous-perturbation estimates.

    Step sizes a_k = a / (k + 1 + A)^alpha and perturbation magnitudes
    c_k = c / (k + 1)^gamma, both positive and decreasing.
    """

    a: float
    c: float = 0.1
    A: float = 50.0
    alpha: float = 0.602
    gamma: float = 0.101
    k: int = 0
    rng: np.random.Generator = field(default_factory=lambda: np.random.default_rng(0))

    @classmethod
    def matched_to_lr(cls, lr: float, seed: int = 0, **kwargs) -> "SpsaState":
        """Pick ``a`` so the first step size equals the Adam learning rate."""
        state = cls(a=1.0, rng=np.random.default_rng(seed), **kwargs)
        state.a = lr * (1.0 + state.A) ** state.alpha
        return state

    def step_size(self) -> float:
        return self.a / (self.k + 1 + self.A) ** self.alpha

    def perturbation_size(self) -> float:
        return self.c / (self.k + 1) ** self.gamma


def spsa_gradient(
    loss_fn: Callable[[np.ndarray], float],
    theta: np.ndarray,
    state: SpsaState,
) -> tuple[np.ndarray, float]:
    """Three-evaluation gradient estimate at ``theta``.

    Draws one Rademacher perturbation, evaluates the loss at the center and
    at theta +/- c_k * delta, and returns (gradient estimate, center loss).
    Advances the iteration counter; the caller applies the update as
    theta <- theta - step_size * grad.
    """
    theta = np.asarray(theta, dtype=float)
    ck = state.perturbation_size()
    delta = state.rng.integers(0, 2, size=theta.shape).astype(float) * 2.0 - 1.0
    loss_center = float(loss_fn(theta))
    loss_plus = float(loss_fn(theta + ck * delta))
    loss_minus = float(loss_fn(theta - ck * delta))
    if not (np.isfinite(loss_center) and np.isfinite(loss_plus) and np.isfinite(loss_minus)):
        raise TrainingError("non-finite loss in SPSA evaluation")
    grad = (loss_plus - loss_minus) / (2.0 * ck * delta)
    state.k += 1
    return grad, loss_center


def spsa_minimize(
    loss_fn: Callable[[np.ndarray], float],
    theta0: np.ndarray,
    state: SpsaState,
    iterations: int,
) -> tuple[np.ndarray, float]:
    """Plain SPSA descent loop; returns (theta, last center loss)."""
    theta = np.array(theta0, dtype=float)
    loss = float(loss_fn(theta))
    for _ in range(iterations):
        ak = state.step_size()
        grad, loss = spsa_gradient(loss_fn, theta, state)
        theta = theta - ak * grad
    return theta, loss
