"""Rotation traps and CNOT traps with their classical outcome predictors."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .geometry import (
    HALF_PI,
    PI,
    BwsLayout,
    ComputationKind,
    build_layout,
    check_angles,
    zero_angles,
)


class MalformedTrap(ValueError):
    """The trap's angles do not give a deterministic readout."""


@dataclass(frozen=True)
class TrapInstance:
    kind: ComputationKind
    layout: BwsLayout
    angles: np.ndarray = field(repr=False)
    coins: Mapping = field(repr=False)

    @property
    def final_angles(self) -> dict:
        m = self.layout.m
        return {i: int(self.angles[i - 1, m - 1]) for i in range(1, self.layout.n + 1)}

    def to_json(self) -> dict:
        return {
            "kind": self.kind.value,
            "n": self.layout.n,
            "m": self.layout.m,
            "angles": self.angles.tolist(),
            "coins": self.coins,
            "final_angles": {str(k): v for k, v in self.final_angles.items()},
        }

    @classmethod
    def from_json(cls, doc: Mapping | str) -> "TrapInstance":
        if isinstance(doc, str):
            doc = json.loads(doc)
        layout = build_layout(doc["n"], doc["m"])
        kind = ComputationKind(doc["kind"])
        if kind is ComputationKind.TARGET:
            raise MalformedTrap("a target is not a trap")
        return cls(kind, layout, check_angles(layout, doc["angles"]), doc["coins"])


def _draw(rng, high: int) -> int:
    return int(rng.integers(0, high))


def gen_rtrap(layout: BwsLayout, rng) -> TrapInstance:
    """Rotation trap: every wire gets random Z rotations, Hadamards in pairs.

    Per row a ``count`` bit records whether the wire currently sits in the
    Hadamard-conjugated frame. Tapes before the last flip a coin: 0 puts a
    Hadamard (pi/2, pi/2, pi/2) and toggles ``count``; 1 puts random angles on
    the slots that act as Z rotations in the current frame. The last tape either
    rotates (count 0) or closes with a Hadamard (count 1). The readout angle is
    minus the accumulated rotation, which undoes it exactly.
    """
    w, m = layout.w, layout.m
    phi = zero_angles(layout)
    rows = []
    for i in range(layout.n):
        count = 0
        coins, tapes, drawn = [], [], []

        def rotate(cols):
            for j in cols:
                k = _draw(rng, 8)
                phi[i, j - 1] = k
                drawn.append([j, k])

        for y in range(1, w):
            c = _draw(rng, 2)
            coins.append(c)
            if c == 0:
                phi[i, 4 * y - 4:4 * y - 1] = HALF_PI
                count ^= 1
                tapes.append("H")
            elif count == 0:
                rotate((4 * y - 3, 4 * y - 1))
                tapes.append("RZ")
            else:
                rotate((4 * y - 2,))
                tapes.append("RX")
        if count == 0:
            rotate((4 * w - 3, 4 * w - 1))
            tapes.append("RZ")
        else:
            phi[i, 4 * w - 4:4 * w - 1] = HALF_PI
            tapes.append("H")
        total = sum(k for _, k in drawn) % 8
        phi[i, m - 1] = (-total) % 8
        rows.append({"tape_coins": coins, "tapes": tapes, "random": drawn, "phase": total})
    return TrapInstance(ComputationKind.RTRAP, layout, phi, {"rows": rows})


def gen_ctrap(layout: BwsLayout, rng, *, initial_angle: int = PI) -> TrapInstance:
    """CNOT trap: random initial Z per wire, one random-orientation CNOT per brick.

    The readout angles carry the Z frame propagated through the CNOT network.
    ``initial_angle`` exists only to demonstrate that pi/2 breaks determinism.
    """
    n, m = layout.n, layout.m
    phi = zero_angles(layout)
    initial = [_draw(rng, 2) for _ in range(n)]
    frame = [1 if c == 0 else 0 for c in initial]
    for i, c in enumerate(initial):
        if c == 0:
            phi[i, 0] = initial_angle
    bricks = []
    for y, a in layout.bricks:
        c = _draw(rng, 2)
        ctrl, tgt = (a, a + 1) if c == 0 else (a + 1, a)
        phi[ctrl - 1, 4 * y - 2] = HALF_PI
        phi[tgt - 1, 4 * y - 3] = HALF_PI
        phi[tgt - 1, 4 * y - 1] = (-HALF_PI) % 8
        frame[ctrl - 1] ^= frame[tgt - 1]
        bricks.append({"tape": y, "rows": [a, a + 1], "coin": c, "control": ctrl})
    for i in range(n):
        phi[i, m - 1] = PI * frame[i]
    return TrapInstance(ComputationKind.CTRAP, layout, phi,
                        {"initial": initial, "bricks": bricks, "frame": frame})


def gen_trap(kind: ComputationKind, layout: BwsLayout, rng) -> TrapInstance:
    if kind is ComputationKind.RTRAP:
        return gen_rtrap(layout, rng)
    if kind is ComputationKind.CTRAP:
        return gen_ctrap(layout, rng)
    raise ValueError(f"not a trap kind: {kind}")


def _readout_bit(total: int, row: int) -> int:
    total %= 8
    if total == 0:
        return 0
    if total == PI:
        return 1
    raise MalformedTrap(f"row {row}: readout is not deterministic (residual {total} x pi/4)")


def predict_trap_outcome(trap: TrapInstance) -> dict:
    """Expected readout bit per row, without any quantum simulation."""
    n, m = trap.layout.n, trap.layout.m
    out = {}
    if trap.kind is ComputationKind.RTRAP:
        rows = trap.coins["rows"]
        if len(rows) != n:
            raise MalformedTrap("coin record does not cover every row")
        for i, rec in enumerate(rows, start=1):
            if sum(t == "H" for t in rec["tapes"]) % 2:
                raise MalformedTrap(f"row {i}: odd number of Hadamard tapes")
            phase = sum(k for _, k in rec["random"])
            out[i] = _readout_bit(phase + int(trap.angles[i - 1, m - 1]), i)
        return out
    if trap.kind is ComputationKind.CTRAP:
        frame = [1 if c == 0 else 0 for c in trap.coins["initial"]]
        for b in trap.coins["bricks"]:
            a, c = b["rows"][0], b["control"]
            t = a + 1 if c == a else a
            frame[c - 1] ^= frame[t - 1]
        for i in range(1, n + 1):
            out[i] = _readout_bit(PI * frame[i - 1] + int(trap.angles[i - 1, m - 1]), i)
        return out
    raise MalformedTrap(f"cannot predict a {trap.kind.value} computation")
