"""Logical circuits carried by a brickwork angle grid.

Measuring column j at angle phi teleports the wire through H R_Z(-phi). Pairing
consecutive columns gives, per tape y and wire i,

    R_Z^dag(phi_{4y-3}), R_X^dag(phi_{4y-2}), R_Z^dag(phi_{4y-1}), cZ,
    R_X^dag(phi_{4y}), cZ

and the last column is a final R_Z^dag(phi_m) followed by an X-basis readout.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from . import _kernels as K
from .engine import H, X, Z, rx, rz
from .geometry import BwsLayout, check_angles, check_positions, slot_axis


@dataclass(frozen=True)
class Rotation:
    wire: int
    column: int
    axis: str
    angle: int


@dataclass(frozen=True)
class CZLayer:
    column: int
    pairs: tuple


@dataclass(frozen=True)
class Byproduct:
    wire: int
    column: int
    letter: str


@dataclass(frozen=True)
class LogicalCircuit:
    """Time-ordered ops on ``n`` wires; readout is X-basis after the last op."""

    n: int
    m: int
    ops: tuple

    def slots(self, wire: int) -> list:
        return [op for op in self.ops if isinstance(op, Rotation) and op.wire == wire]

    def cz_layers(self) -> list:
        return [op for op in self.ops if isinstance(op, CZLayer)]

    def byproducts(self) -> list:
        return [op for op in self.ops if isinstance(op, Byproduct)]


def extract_logical_circuit(angles, layout: BwsLayout) -> LogicalCircuit:
    phi = check_angles(layout, angles)
    n = layout.n
    ops: list = []

    def column(j):
        ops.extend(Rotation(i, j, slot_axis(j), int(phi[i - 1, j - 1])) for i in range(1, n + 1))

    for y in range(1, layout.w + 1):
        for j in (4 * y - 3, 4 * y - 2, 4 * y - 1):
            column(j)
        pairs = layout.tape_pairs(y)
        ops.append(CZLayer(4 * y - 1, pairs))
        column(4 * y)
        ops.append(CZLayer(4 * y + 1, pairs))
    column(layout.m)
    return LogicalCircuit(n, layout.m, tuple(ops))


def insert_flip_byproducts(circuit: LogicalCircuit, flips: Iterable) -> LogicalCircuit:
    """Place a Z (odd column) or X (even column) right before each flipped slot."""
    from .geometry import build_layout

    flips = check_positions(build_layout(circuit.n, circuit.m), flips)
    wanted = {(q.i, q.j) for q in flips}
    ops: list = []
    for op in circuit.ops:
        if isinstance(op, Rotation) and (op.wire, op.column) in wanted:
            ops.append(Byproduct(op.wire, op.column, "Z" if op.column % 2 else "X"))
        ops.append(op)
    return LogicalCircuit(circuit.n, circuit.m, tuple(ops))


_PAULI = {"X": X, "Z": Z}


def _op_matrix(op) -> np.ndarray:
    if isinstance(op, Rotation):
        return rz(-op.angle) if op.axis == "Z" else rx(-op.angle)
    return _PAULI[op.letter]


def _run_ops(psi: np.ndarray, circuit: LogicalCircuit) -> np.ndarray:
    n = circuit.n
    for op in circuit.ops:
        if isinstance(op, CZLayer):
            for a, b in op.pairs:
                K.apply_cz(psi, n, a - 1, b - 1)
        else:
            K.apply_1q(psi, n, op.wire - 1, _op_matrix(op))
    return psi


def final_state(circuit: LogicalCircuit) -> np.ndarray:
    """State just before the X-basis readout, starting from |+>^n."""
    dim = 1 << circuit.n
    psi = np.full(dim, 1.0 / np.sqrt(dim), dtype=complex)
    return _run_ops(psi, circuit)


def output_distribution(circuit: LogicalCircuit) -> np.ndarray:
    """Probabilities of the n readout bits; wire 1 is the most significant bit."""
    psi = final_state(circuit)
    for q in range(circuit.n):
        K.apply_1q(psi, circuit.n, q, H)
    return np.abs(psi) ** 2


def circuit_unitary(circuit: LogicalCircuit) -> np.ndarray:
    dim = 1 << circuit.n
    cols = []
    for b in range(dim):
        e = np.zeros(dim, dtype=complex)
        e[b] = 1.0
        cols.append(_run_ops(e, circuit))
    return np.stack(cols, axis=1)


def bits_to_index(bits) -> int:
    out = 0
    for b in bits:
        out = (out << 1) | int(b)
    return out


def index_to_bits(index: int, n: int) -> tuple:
    return tuple((index >> (n - 1 - k)) & 1 for k in range(n))


def total_variation(p: np.ndarray, q: np.ndarray) -> float:
    return 0.5 * float(np.abs(np.asarray(p) - np.asarray(q)).sum())


def empirical_distribution(rows: Iterable, n: int) -> np.ndarray:
    counts = np.zeros(1 << n)
    total = 0
    for bits in rows:
        counts[bits_to_index(bits)] += 1
        total += 1
    return counts / max(total, 1)
