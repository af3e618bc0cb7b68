"""Brickwork geometry, Z8 angle arithmetic and the shared value types.

Angles are integers mod 8 in units of pi/4 everywhere outside the quantum
engine. Rows and columns are 1-indexed; numpy grids are indexed ``[i-1, j-1]``.
"""
from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Mapping, NamedTuple

import numpy as np

AngleZ8 = int
PI = 4
HALF_PI = 2


class DimensionError(ValueError):
    """Raised for grids that cannot hold a brickwork state."""


def z8(k: int) -> AngleZ8:
    return int(k) % 8


def negate(k: AngleZ8) -> AngleZ8:
    return (-k) % 8


def add_pi(k: AngleZ8) -> AngleZ8:
    return (k + PI) % 8


def to_radians(k: AngleZ8) -> float:
    return (k % 8) * np.pi / 4


def delta_angle(phi: AngleZ8, theta: AngleZ8, r: int, r_prime: int) -> AngleZ8:
    """Blinded angle ``(-1)^r' phi + theta + r pi``."""
    sign = -1 if r_prime & 1 else 1
    return (sign * phi + theta + PI * (r & 1)) % 8


def adapt_angle(phi: AngleZ8, s_x: int, s_z: int) -> AngleZ8:
    """Flow-corrected angle ``(-1)^s_X phi + s_Z pi``."""
    sign = -1 if s_x & 1 else 1
    return (sign * phi + PI * (s_z & 1)) % 8


class QubitPos(NamedTuple):
    i: int
    j: int

    def __str__(self) -> str:
        return f"({self.i},{self.j})"


class ComputationKind(enum.Enum):
    TARGET = "target"
    RTRAP = "rtrap"
    CTRAP = "ctrap"


@dataclass(frozen=True)
class BwsLayout:
    """An n x m brickwork graph.

    ``bricks`` lists ``(y, a)`` for every brick of tape ``y`` covering rows
    ``a`` and ``a + 1``.
    """

    n: int
    m: int
    edges: frozenset = field(repr=False)
    bricks: tuple = field(repr=False)

    @property
    def w(self) -> int:
        return (self.m - 1) // 4

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n, self.m)

    def contains(self, q: tuple[int, int]) -> bool:
        return 1 <= q[0] <= self.n and 1 <= q[1] <= self.m

    def positions(self) -> Iterable[QubitPos]:
        """All qubits in measurement order (column by column, top to bottom)."""
        for j in range(1, self.m + 1):
            for i in range(1, self.n + 1):
                yield QubitPos(i, j)

    def tape_pairs(self, y: int) -> tuple[tuple[int, int], ...]:
        return tuple((a, a + 1) for (yy, a) in self.bricks if yy == y)

    def partner(self, i: int, y: int) -> int | None:
        """Row sharing a brick with row ``i`` in tape ``y``, if any."""
        for a, b in self.tape_pairs(y):
            if i == a:
                return b
            if i == b:
                return a
        return None

    @cached_property
    def vertical(self) -> np.ndarray:
        """``vertical[i-1, j-1]`` is True when (i,j)-(i+1,j) is an edge."""
        out = np.zeros((self.n, self.m), dtype=np.bool_)
        for (a, b) in self.edges:
            if a.j == b.j:
                top = min(a.i, b.i)
                out[top - 1, a.j - 1] = True
        return out

    @cached_property
    def _adjacency(self) -> dict:
        adj: dict[QubitPos, set] = {q: set() for q in self.positions()}
        for a, b in self.edges:
            adj[a].add(b)
            adj[b].add(a)
        return {q: frozenset(v) for q, v in adj.items()}


def _vertical_columns(y: int) -> tuple[int, int]:
    return (4 * y - 1, 4 * y + 1)


def build_layout(n: int, m: int) -> BwsLayout:
    if not isinstance(n, (int, np.integer)) or not isinstance(m, (int, np.integer)):
        raise DimensionError("n and m must be integers")
    n, m = int(n), int(m)
    if n < 2 or n % 2:
        raise DimensionError("n must be even and at least 2")
    if m < 5 or m % 4 != 1:
        raise DimensionError("m must satisfy m = 1 mod 4 and m >= 5")
    w = (m - 1) // 4
    edges = set()
    for i in range(1, n + 1):
        for j in range(1, m):
            edges.add(frozenset((QubitPos(i, j), QubitPos(i, j + 1))))
    bricks = []
    for y in range(1, w + 1):
        first = 1 if y % 2 else 2
        for a in range(first, n, 2):
            bricks.append((y, a))
            for j in _vertical_columns(y):
                edges.add(frozenset((QubitPos(a, j), QubitPos(a + 1, j))))
    pairs = frozenset(tuple(sorted(e)) for e in edges)
    return BwsLayout(n=n, m=m, edges=pairs, bricks=tuple(bricks))


def neighbors(layout: BwsLayout, q: tuple[int, int]) -> frozenset:
    q = QubitPos(*q)
    if not layout.contains(q):
        raise IndexError(f"position {q} outside {layout.n}x{layout.m} layout")
    return layout._adjacency[q]


def slot_axis(j: int) -> str:
    """Logical rotation axis realised by measuring column j."""
    return "Z" if j % 2 else "X"


# -- angle grids -------------------------------------------------------------

def zero_angles(layout: BwsLayout) -> np.ndarray:
    return np.zeros(layout.shape, dtype=np.int64)


def check_angles(layout: BwsLayout, angles) -> np.ndarray:
    arr = np.asarray(angles, dtype=np.int64)
    if arr.shape != layout.shape:
        raise DimensionError(f"angle grid {arr.shape} does not match layout {layout.shape}")
    return arr % 8


def angles_to_json(layout: BwsLayout, angles) -> dict:
    arr = check_angles(layout, angles)
    return {"n": layout.n, "m": layout.m, "angles": arr.tolist()}


def angles_from_json(doc: Mapping | str) -> tuple[BwsLayout, np.ndarray]:
    if isinstance(doc, str):
        doc = json.loads(doc)
    layout = build_layout(doc["n"], doc["m"])
    arr = np.asarray(doc["angles"], dtype=np.int64)
    if arr.shape != layout.shape or np.any((arr < 0) | (arr > 7)):
        raise DimensionError("angles must be an n x m grid of integers 0..7")
    return layout, arr


@dataclass(frozen=True)
class RandomPads:
    """Per-qubit secrets of one computation."""

    theta: np.ndarray
    r: np.ndarray
    r_prime: np.ndarray

    @classmethod
    def draw(cls, layout: BwsLayout, rng: np.random.Generator) -> "RandomPads":
        shape = layout.shape
        theta = rng.integers(0, 8, size=shape)
        r = rng.integers(0, 2, size=shape)
        r_prime = rng.integers(0, 2, size=shape)
        return cls(theta.astype(np.int64), r.astype(np.int64), r_prime.astype(np.int64))

    @classmethod
    def zeros(cls, layout: BwsLayout) -> "RandomPads":
        z = np.zeros(layout.shape, dtype=np.int64)
        return cls(z, z.copy(), z.copy())

    def neighbor_sum(self, layout: BwsLayout) -> np.ndarray:
        """Parity of r' over the neighbours of every qubit."""
        rp = self.r_prime
        out = np.zeros_like(rp)
        out[:, 1:] ^= rp[:, :-1]
        out[:, :-1] ^= rp[:, 1:]
        v = layout.vertical
        out[1:, :] ^= rp[:-1, :] & v[:-1, :]
        out[:-1, :] ^= rp[1:, :] & v[:-1, :]
        return out

    def prepared(self, layout: BwsLayout) -> np.ndarray:
        """Angles of the states R_Z(theta + pi * sum r')|+> sent to the prover."""
        return (self.theta + PI * self.neighbor_sum(layout)) % 8


# -- flip patterns -------------------------------------------------------------

FlipPattern = Mapping[int, frozenset]


def as_positions(items: Iterable) -> frozenset:
    return frozenset(QubitPos(int(a), int(b)) for a, b in items)


def check_positions(layout: BwsLayout, positions: Iterable) -> frozenset:
    out = as_positions(positions)
    for q in out:
        if not layout.contains(q):
            raise IndexError(f"flip position {q} outside {layout.n}x{layout.m} layout")
    return out


def flip_mask(layout: BwsLayout, positions: Iterable) -> np.ndarray:
    mask = np.zeros(layout.shape, dtype=np.bool_)
    for q in check_positions(layout, positions):
        mask[q.i - 1, q.j - 1] = True
    return mask


def pattern_to_json(pattern: Iterable) -> list:
    return sorted([q.i, q.j] for q in as_positions(pattern))
