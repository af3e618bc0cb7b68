"""Dense statevector simulation for small registers and brickwork MBQC."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Hashable, Iterable, NamedTuple, Sequence

import numpy as np

from . import _kernels as K
from .geometry import (
    BwsLayout,
    QubitPos,
    RandomPads,
    adapt_angle,
    check_angles,
    flip_mask,
    to_radians,
)

ATOL = 1e-12
SPECTRAL_ATOL = 1e-10

_S2 = 1.0 / math.sqrt(2.0)
I2 = np.eye(2, dtype=complex)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
Z = np.array([[1, 0], [0, -1]], dtype=complex)
H = np.array([[1, 1], [1, -1]], dtype=complex) * _S2
PAULI = {"I": I2, "X": X, "Y": Y, "Z": Z}


def rz(k: int) -> np.ndarray:
    """R_Z(k pi/4) = diag(1, e^{i k pi/4})."""
    return np.diag([1.0, np.exp(1j * to_radians(k))]).astype(complex)


def rx(k: int) -> np.ndarray:
    """R_X(k pi/4) = H R_Z(k pi/4) H."""
    return H @ rz(k) @ H


def rz_rad(t: float) -> np.ndarray:
    return np.diag([1.0, np.exp(1j * t)]).astype(complex)


def rx_rad(t: float) -> np.ndarray:
    return H @ rz_rad(t) @ H


def plus_state(k: int = 0) -> np.ndarray:
    """|+>_k = R_Z(k pi/4)|+>."""
    return np.array([1.0, np.exp(1j * to_radians(k))], dtype=complex) * _S2


class Gate(NamedTuple):
    name: str
    angle: int | None = None

    @property
    def arity(self) -> int:
        return 2 if self.name in ("CZ", "CNOT") else 1

    def matrix(self) -> np.ndarray:
        if self.name == "RZ":
            return rz(self.angle)
        if self.name == "RX":
            return rx(self.angle)
        if self.name == "CNOT":
            return np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex)
        if self.name == "CZ":
            return np.diag([1, 1, 1, -1]).astype(complex)
        return {"H": H, "X": X, "Z": Z}[self.name]


def RZ(k: int) -> Gate:
    return Gate("RZ", int(k) % 8)


def RX(k: int) -> Gate:
    return Gate("RX", int(k) % 8)


HGATE, XGATE, ZGATE = Gate("H"), Gate("X"), Gate("Z")
CZ, CNOT = Gate("CZ"), Gate("CNOT")


@dataclass(frozen=True)
class StateVector:
    """Amplitudes over labelled qubits; label order fixes the tensor order."""

    amplitudes: np.ndarray
    labels: tuple

    @classmethod
    def from_product(cls, labels: Sequence[Hashable], states: Sequence[np.ndarray]) -> "StateVector":
        amp = np.ones(1, dtype=complex)
        for s in states:
            amp = np.kron(amp, np.asarray(s, dtype=complex))
        return cls(amp, tuple(labels))

    @classmethod
    def plus(cls, labels: Sequence[Hashable]) -> "StateVector":
        return cls.from_product(labels, [plus_state()] * len(labels))

    @property
    def num_qubits(self) -> int:
        return len(self.labels)

    def index(self, label: Hashable) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise KeyError(f"unknown qubit label {label!r}") from None

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def extend(self, labels: Sequence[Hashable], states: Sequence[np.ndarray]) -> "StateVector":
        fresh = set(labels)
        if len(fresh) != len(labels) or fresh & set(self.labels):
            raise ValueError("new labels must be distinct and unused")
        tail = StateVector.from_product(labels, states)
        return StateVector(np.kron(self.amplitudes, tail.amplitudes), self.labels + tail.labels)

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def reduced(self, labels: Sequence[Hashable]) -> np.ndarray:
        """Reduced density matrix on ``labels`` (in that order)."""
        keep = [self.index(l) for l in labels]
        rest = [q for q in range(self.num_qubits) if q not in keep]
        t = self.amplitudes.reshape([2] * self.num_qubits).transpose(keep + rest)
        t = t.reshape(1 << len(keep), -1)
        return t @ t.conj().T


def apply_matrix(state: StateVector, u: np.ndarray, targets: Sequence[Hashable]) -> StateVector:
    """Apply an arbitrary 2^k x 2^k unitary to the listed qubits."""
    qs = [state.index(t) for t in targets]
    if len(set(qs)) != len(qs):
        raise ValueError("duplicate targets")
    nq = state.num_qubits
    k = len(qs)
    psi = state.amplitudes.copy()
    if k == 1:
        K.apply_1q(psi, nq, qs[0], np.ascontiguousarray(u, dtype=complex))
        return StateVector(psi, state.labels)
    t = psi.reshape([2] * nq)
    t = np.moveaxis(t, qs, list(range(k)))
    shape = t.shape
    t = (np.asarray(u, dtype=complex) @ t.reshape(1 << k, -1)).reshape(shape)
    t = np.moveaxis(t, list(range(k)), qs)
    return StateVector(np.ascontiguousarray(t).reshape(-1), state.labels)


def apply_gate(state: StateVector, gate: Gate, targets) -> StateVector:
    """Apply ``gate``; ``targets`` is one label or a list of labels."""
    targets = list(targets) if isinstance(targets, list) else [targets]
    if len(targets) != gate.arity:
        raise ValueError(f"{gate.name} acts on {gate.arity} qubit(s)")
    if len(set(targets)) != len(targets):
        raise ValueError("duplicate targets")
    if gate.name == "CZ":
        a, b = (state.index(t) for t in targets)
        psi = state.amplitudes.copy()
        K.apply_cz(psi, state.num_qubits, a, b)
        return StateVector(psi, state.labels)
    return apply_matrix(state, gate.matrix(), targets)


def measure_rotated(state: StateVector, qubit: Hashable, delta: int, rng: np.random.Generator | None = None,
                    *, u: float | None = None, keep: bool = False) -> tuple[int, StateVector]:
    """Measure ``qubit`` in the basis R_Z(delta)|+->; outcome 0 is the |+> branch.

    ``u`` overrides the uniform draw (used to replay a fixed random stream).
    With ``keep`` the qubit stays in the register, projected onto its basis state.
    """
    q = state.index(qubit)
    if u is None:
        u = float(rng.random())
    psi = state.amplitudes.copy()
    theta = to_radians(delta)
    if keep:
        s, _ = K.measure_keep(psi, state.num_qubits, q, theta, u)
        return s, StateVector(psi, state.labels)
    s, out, _ = K.measure_remove(psi, state.num_qubits, q, theta, u)
    return s, StateVector(out, state.labels[:q] + state.labels[q + 1:])


def outcome_probability(state: StateVector, qubit: Hashable, delta: int) -> float:
    """Probability of outcome 0 when measuring ``qubit`` at ``delta``."""
    rho = state.reduced([qubit])
    v = plus_state(delta)
    return float(np.real(v.conj() @ rho @ v))


# -- brickwork evaluation -------------------------------------------------------

def flow_signals(layout: BwsLayout, s: np.ndarray, i: int, j: int) -> tuple[int, int]:
    """(s_X, s_Z) for qubit (i,j), 1-indexed, from the outcome grid ``s``."""
    sx = sz = 0
    if j >= 2:
        sx = int(s[i - 1, j - 2])
        v = layout.vertical
        if i >= 2 and v[i - 2, j - 1]:
            sz ^= int(s[i - 2, j - 2])
        if i < layout.n and v[i - 1, j - 1]:
            sz ^= int(s[i, j - 2])
    if j >= 3:
        sz ^= int(s[i - 1, j - 3])
    return sx, sz


def run_blind(layout: BwsLayout, angles, pads: RandomPads, flips: Iterable = (), *,
              uniforms: np.ndarray | None = None, rng: np.random.Generator | None = None,
              with_deltas: bool = False):
    """Blinded evaluation: returns (de-padded outcomes, raw outcomes[, announced angles])."""
    phi = check_angles(layout, angles)
    if uniforms is None:
        uniforms = rng.random(layout.shape)
    out_s = np.zeros(layout.shape, dtype=np.int64)
    out_b = np.zeros(layout.shape, dtype=np.int64)
    out_d = np.zeros(layout.shape, dtype=np.int64)
    K.frontier(layout.n, layout.m, np.ascontiguousarray(pads.prepared(layout)), phi,
               np.ascontiguousarray(pads.theta), np.ascontiguousarray(pads.r),
               np.ascontiguousarray(pads.r_prime), flip_mask(layout, flips),
               layout.vertical, np.ascontiguousarray(uniforms, dtype=np.float64), out_s, out_b, out_d)
    if with_deltas:
        return out_s, out_b, out_d
    return out_s, out_b


def run_mbqc(layout: BwsLayout, angles, flips: Iterable = (), rng: np.random.Generator | None = None,
             *, uniforms: np.ndarray | None = None) -> np.ndarray:
    """Un-blinded brickwork evaluation on a two-column frontier.

    Returns the n x m outcome grid. A flip at (i,j) applies Z to that qubit
    right before it is measured.
    """
    s, _ = run_blind(layout, angles, RandomPads.zeros(layout), flips, uniforms=uniforms, rng=rng)
    return s


def run_mbqc_reference(layout: BwsLayout, angles, flips: Iterable = (), rng: np.random.Generator | None = None,
                       *, uniforms: np.ndarray | None = None, lazy: bool = False) -> np.ndarray:
    """Label-based evaluation through :class:`StateVector`.

    With ``lazy=False`` the whole graph is entangled up front (feasible for
    about 14 qubits); ``lazy=True`` uses the same frontier order as
    :func:`run_mbqc`. Used as an independent check of the fast kernel.
    """
    phi = check_angles(layout, angles)
    fl = flip_mask(layout, flips)
    if uniforms is None:
        uniforms = rng.random(layout.shape)
    s = np.zeros(layout.shape, dtype=np.int64)
    col = lambda j: [QubitPos(i, j) for i in range(1, layout.n + 1)]

    def entangle(state, j):
        live = set(state.labels)
        for a, b in sorted(layout.edges):
            if j in (a.j, b.j) and a in live and b in live:
                state = apply_gate(state, CZ, [a, b])
        return state

    if lazy:
        state = entangle(StateVector.plus(col(1)), 1)
    else:
        state = StateVector.plus(list(layout.positions()))
        for a, b in sorted(layout.edges):
            state = apply_gate(state, CZ, [a, b])
    for j in range(1, layout.m + 1):
        if lazy and j < layout.m:
            nxt = col(j + 1)
            state = entangle(state.extend(nxt, [plus_state()] * layout.n), j + 1)
        for i in range(1, layout.n + 1):
            q = QubitPos(i, j)
            if fl[i - 1, j - 1]:
                state = apply_gate(state, ZGATE, q)
            sx, sz = flow_signals(layout, s, i, j)
            d = adapt_angle(int(phi[i - 1, j - 1]), sx, sz)
            s[i - 1, j - 1], state = measure_rotated(state, q, d, u=float(uniforms[i - 1, j - 1]))
    return s


# -- density matrices -------------------------------------------------------------

def density(psi: np.ndarray) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex).reshape(-1)
    return np.outer(psi, psi.conj())


def is_density(rho: np.ndarray, atol: float = ATOL) -> bool:
    rho = np.asarray(rho)
    if not np.allclose(rho, rho.conj().T, atol=atol):
        return False
    if abs(np.trace(rho) - 1) > atol:
        return False
    return bool(np.linalg.eigvalsh(rho).min() >= -SPECTRAL_ATOL)


def trace_distance(a: np.ndarray, b: np.ndarray) -> float:
    a, b = np.asarray(a), np.asarray(b)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch {a.shape} vs {b.shape}")
    return 0.5 * float(np.linalg.svd(a - b, compute_uv=False).sum())


def random_density(dim: int, rng: np.random.Generator) -> np.ndarray:
    g = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    rho = g @ g.conj().T
    return rho / np.trace(rho)


def pauli_word(letters: str) -> np.ndarray:
    out = np.ones((1, 1), dtype=complex)
    for ch in letters:
        out = np.kron(out, PAULI[ch])
    return out


def pauli_twirl_residual(N: int, P: str, P_prime: str, rho: np.ndarray) -> float:
    """Largest entry of sum_Q (QPQ) rho (QP'Q) over all 4^N Pauli words Q."""
    if not 1 <= N <= 3 or len(P) != N or len(P_prime) != N:
        raise ValueError("P and P' must be Pauli words of length N <= 3")
    p, pp = pauli_word(P), pauli_word(P_prime)
    acc = np.zeros((1 << N, 1 << N), dtype=complex)
    for word in itertools.product("IXYZ", repeat=N):
        q = pauli_word("".join(word))
        acc += (q @ p @ q) @ rho @ (q @ pp @ q)
    return float(np.abs(acc).max())
