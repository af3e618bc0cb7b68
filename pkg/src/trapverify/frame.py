"""Pauli-frame propagation of phase-flip by-products.

Exact detection probabilities are computed by pushing the by-products of a
flip pattern through every coin assignment of a trap. Within one assignment a
trap is a Clifford circuit up to its uniformly random rotation slots, so each
readout bit is either flipped, untouched, or (when a random slot's sign no
longer matches the compensating readout angle) a fair coin.
"""
from __future__ import annotations

import csv
import enum
import itertools
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from importlib import resources
from typing import Iterable, Sequence

import numpy as np

from . import _kernels as K
from .engine import PAULI, rx_rad, rz_rad
from .geometry import BwsLayout, QubitPos, as_positions, build_layout, check_positions
from .traps import gen_ctrap, gen_rtrap


class UnsupportedPattern(ValueError):
    """The flip pattern is outside the family an exact routine supports."""


# -- Pauli words ---------------------------------------------------------------

_LETTER_BITS = {"I": (0, 0, 0), "X": (1, 0, 0), "Z": (0, 1, 0), "Y": (1, 1, 1)}


@dataclass(frozen=True)
class PauliWord:
    """``i^phase`` times a tensor product of X^x Z^z factors, one per wire."""

    x: tuple
    z: tuple
    phase: int = 0

    @classmethod
    def from_letters(cls, letters: str, phase: int = 0) -> "PauliWord":
        xs, zs = [], []
        for ch in letters:
            a, b, p = _LETTER_BITS[ch]
            xs.append(a)
            zs.append(b)
            phase += p
        return cls(tuple(xs), tuple(zs), phase % 4)

    @classmethod
    def identity(cls, n: int) -> "PauliWord":
        return cls((0,) * n, (0,) * n, 0)

    @property
    def letters(self) -> str:
        return "".join("IXZY"[a + 2 * b] for a, b in zip(self.x, self.z))

    def __mul__(self, other: "PauliWord") -> "PauliWord":
        if len(self.x) != len(other.x):
            raise ValueError("Pauli words act on different numbers of wires")
        # Z^z1 X^x2 = (-1)^(z1 x2) X^x2 Z^z1
        sign = sum(b * c for b, c in zip(self.z, other.x)) % 2
        x = tuple(a ^ c for a, c in zip(self.x, other.x))
        z = tuple(b ^ d for b, d in zip(self.z, other.z))
        return PauliWord(x, z, (self.phase + other.phase + 2 * sign) % 4)

    def commutes_with(self, other: "PauliWord") -> bool:
        s = sum(a * d + b * c for a, b, c, d in zip(self.x, self.z, other.x, other.z))
        return s % 2 == 0

    def matrix(self) -> np.ndarray:
        out = np.array([[1.0 + 0j]])
        for a, b in zip(self.x, self.z):
            f = np.linalg.matrix_power(PAULI["X"], a) @ np.linalg.matrix_power(PAULI["Z"], b)
            out = np.kron(out, f)
        return (1j ** self.phase) * out


# -- single-tape propagation ------------------------------------------------------

class GateCase(enum.Enum):
    RZ = "RZ"
    RX = "RX"
    H = "H"


@dataclass(frozen=True)
class TapeEffect:
    """By-products of one tape moved to its front.

    ``signs`` holds a flip bit per rotation slot (phi1, phi2, phi3); for the
    Hadamard case the Clifford absorbs them and they are reported as zero.
    ``residual`` is the (X power, Z power) left at the front.
    """

    signs: tuple
    residual: tuple

    @property
    def residual_letters(self) -> str:
        x, z = self.residual
        return ("X" if x else "") + ("Z" if z else "")

    def is_trivial(self) -> bool:
        return not any(self.signs) and self.residual == (0, 0)


_AXES = ("Z", "X", "Z")


def propagate_tape(flips: Sequence[int], case: GateCase | str) -> TapeEffect:
    """Push the flips l1..l5 of one tape to its front.

    Time order on wire i is R_Z(phi1), Z^l1, R_X(phi2), X^l2, R_Z(phi3),
    Z^(l3 + l5), X^l4; l5 arrives through the cZ pair from the neighbour's
    column-4y flip. A Pauli crossing a rotation about an anticommuting axis
    flips that angle's sign; across a pi/2 rotation it picks up the axis.
    """
    case = GateCase(case)
    l1, l2, l3, l4, l5 = (int(b) & 1 for b in flips)
    # Pauli inserted after slot k (time order), as (x, z)
    after = [(0, l1), (l2, 0), (l4, l3 ^ l5)]
    x = z = 0
    signs = [0, 0, 0]
    for k in (2, 1, 0):
        ax, az = after[k]
        x ^= ax
        z ^= az
        anti = x if _AXES[k] == "Z" else z
        if not anti:
            continue
        if case is GateCase.H:
            if _AXES[k] == "Z":
                z ^= 1
            else:
                x ^= 1
        elif (case is GateCase.RZ and k != 1) or (case is GateCase.RX and k == 1):
            signs[k] = 1
    return TapeEffect(tuple(signs), (x, z))


def format_effect(effect: TapeEffect, case: GateCase | str) -> str:
    """Cell text in the ``RZ(-phi1+phi3)XZ`` / ``RX(phi2)X`` / ``HXZ`` notation; blank if trivial."""
    case = GateCase(case)
    if effect.is_trivial():
        return ""
    res = effect.residual_letters
    if case is GateCase.H:
        return "H" + res
    s1, s2, s3 = effect.signs
    if case is GateCase.RZ:
        return f"RZ({'-' if s1 else ''}phi1{'-' if s3 else '+'}phi3){res}"
    return f"RX({'-' if s2 else ''}phi2){res}"


# -- brute-force unitary oracle -------------------------------------------------------

_GENERIC = (0.4137, 1.0729, 0.6581)


def _phase_equal(a: np.ndarray, b: np.ndarray, atol: float = 1e-10) -> bool:
    d = a.shape[0]
    return abs(abs(np.trace(a.conj().T @ b)) - d) < atol


def _tape_unitaries(flips, case: GateCase):
    """Two-wire tape unitary with explicit flips, plus the flip-free wire-i unitary."""
    l1, l2, l3, l4, l5 = (int(b) & 1 for b in flips)
    if case is GateCase.H:
        p1 = p2 = p3 = np.pi / 2
    elif case is GateCase.RZ:
        p1, p2, p3 = _GENERIC[0], 0.0, _GENERIC[2]
    else:
        p1, p2, p3 = 0.0, _GENERIC[1], 0.0
    X, Z, I2 = PAULI["X"], PAULI["Z"], PAULI["I"]
    pw = lambda p, k: p if k else I2
    wire = (rz_rad(p3) @ pw(Z, l3) @ pw(X, l2) @ rx_rad(p2) @ pw(Z, l1) @ rz_rad(p1))
    cz = np.diag([1, 1, 1, -1]).astype(complex)
    mid = np.kron(pw(X, l4), pw(X, l5))
    full = cz @ mid @ cz @ np.kron(wire, I2)
    clean = rz_rad(p3) @ rx_rad(p2) @ rz_rad(p1)
    return full, clean, (p1, p2, p3)


def _split_partner(full: np.ndarray) -> tuple[np.ndarray, str]:
    """Write ``full`` as A (x) B with B a Pauli on the partner wire."""
    for name in "IXZY":
        rest = full @ np.kron(PAULI["I"], PAULI[name].conj().T)
        a = rest[0::2, 0::2]
        if np.allclose(rest, np.kron(a, PAULI["I"]), atol=1e-10):
            return a, name
    raise AssertionError("tape unitary does not factor over the two wires")


def oracle_tape_effect(flips: Sequence[int], case: GateCase | str) -> TapeEffect:
    """Identify the tape effect by matching explicit matrices against all normal forms."""
    case = GateCase(case)
    full, clean, (p1, p2, p3) = _tape_unitaries(flips, case)
    a, _ = _split_partner(full)
    matches = []
    for sx, sz in itertools.product((0, 1), repeat=2):
        pauli = np.linalg.matrix_power(PAULI["X"], sx) @ np.linalg.matrix_power(PAULI["Z"], sz)
        if case is GateCase.H:
            if _phase_equal(a, clean @ pauli):
                matches.append(TapeEffect((0, 0, 0), (sx, sz)))
            continue
        for s1, s2, s3 in itertools.product((0, 1), repeat=3):
            if case is GateCase.RZ and s2 or case is GateCase.RX and (s1 or s3):
                continue
            sg = lambda s: -1.0 if s else 1.0
            cand = rz_rad(sg(s3) * p3) @ rx_rad(sg(s2) * p2) @ rz_rad(sg(s1) * p1) @ pauli
            if _phase_equal(a, cand):
                matches.append(TapeEffect((s1, s2, s3), (sx, sz)))
    if len(matches) != 1:
        raise AssertionError(f"oracle found {len(matches)} normal forms for {flips} {case.value}")
    return matches[0]


# -- the full table -------------------------------------------------------------------

@dataclass(frozen=True)
class Table1Row:
    label: str
    flips: tuple
    cells: tuple        # symbolic text per case
    oracle_cells: tuple
    reference_cells: tuple

    @property
    def oracle_agrees(self) -> bool:
        return self.cells == self.oracle_cells

    @property
    def reference_diffs(self) -> tuple:
        return tuple(c.value for c, a, b in zip(GateCase, self.cells, self.reference_cells) if a != b)


def table1_labels() -> list:
    """The 31 non-empty flip subsets, ordered by size then lexicographically."""
    out = []
    for r in range(1, 6):
        out.extend(itertools.combinations(range(1, 6), r))
    return out


@lru_cache(maxsize=1)
def load_reference_table() -> dict:
    """Transcribed reference cells keyed by label (e.g. ``"1,2"``)."""
    text = resources.files("trapverify").joinpath("data/table1_reference.csv").read_text()
    rows = csv.DictReader(text.splitlines())
    return {r["flipped"]: (r["RZ"], r["RX"], r["H"]) for r in rows}


def regenerate_table1() -> list:
    ref = load_reference_table()
    out = []
    for subset in table1_labels():
        flips = tuple(1 if k in subset else 0 for k in range(1, 6))
        label = ",".join(map(str, subset))
        cells = tuple(format_effect(propagate_tape(flips, c), c) for c in GateCase)
        oracle = tuple(format_effect(oracle_tape_effect(flips, c), c) for c in GateCase)
        out.append(Table1Row(label, flips, cells, oracle, ref.get(label, ("?", "?", "?"))))
    return out


def table1_csv_rows(rows: Iterable[Table1Row]) -> list:
    header = ["flipped", "RZ", "RX", "H", "oracle_agrees", "diff_vs_reference"]
    body = [[r.label, *r.cells, str(r.oracle_agrees).lower(), ";".join(r.reference_diffs)] for r in rows]
    return [header, *body]


def twirled_flip_average() -> Fraction:
    """Mean of |<+|R_Z(k pi/2)|+>|^2 over k = 0..3, in exact arithmetic.

    cos^2(k pi/4) for k = 0..3 is 1, 1/2, 0, 1/2.
    """
    table = {0: Fraction(1), 1: Fraction(1, 2), 2: Fraction(0), 3: Fraction(1, 2)}
    return sum(table.values(), Fraction(0)) / 4


# -- trap slot tables ------------------------------------------------------------------

class _ScriptedCoins:
    """rng stand-in: coin draws come from a script, angle draws are 0."""

    def __init__(self, coins: Sequence[int]):
        self._coins = iter(coins)

    def integers(self, low, high=None, size=None):
        if high is None:
            low, high = 0, low
        if high - low == 2:
            return next(self._coins)
        return 0


def _rtrap_row_coins(w: int) -> int:
    return max(w - 1, 0)


def rtrap_slot_tables(layout: BwsLayout) -> tuple[np.ndarray, np.ndarray]:
    """Slot kinds and fixed angles for every R-trap coin assignment."""
    n, m, w = layout.n, layout.m, layout.w
    per_row = _rtrap_row_coins(w)
    total = n * per_row
    ncfg = 1 << total
    kinds = np.zeros((ncfg, n, m), dtype=np.int64)
    fixed = np.zeros((ncfg, n, m), dtype=np.int64)
    for c, bits in enumerate(itertools.product((0, 1), repeat=total)):
        trap = gen_rtrap(layout, _ScriptedCoins(bits))
        fixed[c] = trap.angles
        kinds[c][trap.angles != 0] = 1
        for i, rec in enumerate(trap.coins["rows"]):
            for j, _ in rec["random"]:
                kinds[c, i, j - 1] = 2
            if rec["random"]:
                kinds[c, i, m - 1] = 2
    return kinds, fixed


def ctrap_slot_tables(layout: BwsLayout) -> tuple[np.ndarray, np.ndarray]:
    """All slots fixed; one entry per assignment of initial and brick coins."""
    total = layout.n + len(layout.bricks)
    ncfg = 1 << total
    fixed = np.zeros((ncfg, layout.n, layout.m), dtype=np.int64)
    for c, bits in enumerate(itertools.product((0, 1), repeat=total)):
        fixed[c] = gen_ctrap(layout, _ScriptedCoins(bits)).angles
    return np.ones_like(fixed), fixed


def _pair_arrays(layout: BwsLayout):
    a, b, col = [], [], []
    for y, top in layout.bricks:
        for j in (4 * y - 1, 4 * y + 1):
            a.append(top - 1)
            b.append(top)
            col.append(j - 1)
    as_arr = lambda v: np.asarray(v, dtype=np.int64)
    return as_arr(a), as_arr(b), as_arr(col)


def frame_codes(layout: BwsLayout, kinds, fixed, patterns: Sequence) -> np.ndarray:
    """Per-row readout codes ``[pattern, config, row]``: 0 pass, 1 flipped, 2 fair coin."""
    flips = np.zeros((len(patterns), layout.n, layout.m), dtype=np.uint8)
    for p, pat in enumerate(patterns):
        for q in check_positions(layout, pat):
            flips[p, q.i - 1, q.j - 1] = 1
    out = np.zeros((len(patterns), kinds.shape[0], layout.n), dtype=np.int64)
    pa, pb, pc = _pair_arrays(layout)
    K.frame_scan(np.ascontiguousarray(kinds), np.ascontiguousarray(fixed), flips,
                 layout.vertical, pa, pb, pc, out)
    return out


def _detection_from_codes(codes: np.ndarray) -> list:
    """Exact detection probability per pattern from ``[pattern, config, row]`` codes."""
    npat, ncfg, n = codes.shape
    flipped = (codes == 1).any(axis=2)
    coins = (codes == 2).sum(axis=2)
    # pass weight per config is 2^(n - coins) / 2^n unless some row is flipped
    weight = np.where(flipped, 0, np.left_shift(1, n - coins))
    totals = weight.sum(axis=1)
    denom = ncfg << n
    return [1 - Fraction(int(t), denom) for t in totals]


# -- R-trap detection ----------------------------------------------------------------------

def _rtrap_layout(pattern: frozenset, w: int, n: int | None) -> BwsLayout:
    if not pattern:
        return build_layout(2 if n is None else n, 4 * w + 1)
    rows = sorted({q.i for q in pattern})
    if rows[-1] - rows[0] > 1:
        raise UnsupportedPattern("exact R-trap enumeration supports patterns on at most two adjacent rows")
    if n is None:
        n = rows[-1] + 1
        n += n % 2
    return build_layout(n, 4 * w + 1)


def rtrap_detection_probabilities(layout: BwsLayout, patterns: Sequence) -> list:
    kinds, fixed = rtrap_slot_tables(layout)
    return _detection_from_codes(frame_codes(layout, kinds, fixed, patterns))


def rtrap_detection_probability(pattern: Iterable, w: int, n: int | None = None) -> Fraction:
    """Exact probability that a uniformly drawn R-trap flags ``pattern``.

    The grid has ``4w + 1`` columns and, unless given, the smallest even number
    of rows that also holds the row just below the pattern.
    """
    if not 1 <= w <= 3:
        raise UnsupportedPattern("exact R-trap enumeration supports 1 <= w <= 3")
    pattern = as_positions(pattern)
    layout = _rtrap_layout(pattern, w, n)
    return rtrap_detection_probabilities(layout, [pattern])[0]


# -- C-trap detection ------------------------------------------------------------------------

def type1_pairs(layout: BwsLayout) -> list:
    return [frozenset({QubitPos(i, 4 * y - 1), QubitPos(i, 4 * y + 1)})
            for i in range(1, layout.n + 1) for y in range(1, layout.w + 1)]


def type2_pairs(layout: BwsLayout) -> list:
    return [frozenset({QubitPos(i, 1), QubitPos(i, layout.m)}) for i in range(1, layout.n + 1)]


def _gf2_rank(vectors: list) -> int:
    rows = list(vectors)
    rank = 0
    for bit in range(max((v.bit_length() for v in rows), default=0)):
        pivot = next((k for k in range(rank, len(rows)) if rows[k] >> bit & 1), None)
        if pivot is None:
            continue
        rows[rank], rows[pivot] = rows[pivot], rows[rank]
        for k in range(len(rows)):
            if k != rank and rows[k] >> bit & 1:
                rows[k] ^= rows[rank]
        rank += 1
    return rank


def _as_bits(layout: BwsLayout, pattern: frozenset) -> int:
    return sum(1 << ((q.i - 1) * layout.m + q.j - 1) for q in pattern)


def in_pair_span(layout: BwsLayout, pattern: Iterable) -> bool:
    """True when ``pattern`` is a symmetric difference of Type-I and Type-II pairs."""
    basis = [_as_bits(layout, p) for p in type1_pairs(layout) + type2_pairs(layout)]
    target = _as_bits(layout, check_positions(layout, pattern))
    return _gf2_rank(basis + [target]) == _gf2_rank(basis)


def is_pair_union(layout: BwsLayout, pattern: Iterable) -> bool:
    """True when ``pattern`` is exactly the union of the Type-I/Type-II pairs it contains."""
    pattern = check_positions(layout, pattern)
    inside = [p for p in type1_pairs(layout) + type2_pairs(layout) if p <= pattern]
    return bool(pattern) and frozenset().union(*inside) == pattern


def ctrap_detection_probabilities(layout: BwsLayout, patterns: Sequence, *, strict: bool = True) -> list:
    pats = [check_positions(layout, p) for p in patterns]
    if strict:
        for p in pats:
            if not (is_pair_union(layout, p) or in_pair_span(layout, p)):
                raise UnsupportedPattern(f"{sorted(p)} is not built from Type-I/Type-II pairs")
    kinds, fixed = ctrap_slot_tables(layout)
    return _detection_from_codes(frame_codes(layout, kinds, fixed, pats))


def ctrap_detection_probability(pattern: Iterable, layout: BwsLayout, *, strict: bool = True) -> Fraction:
    """Exact probability, over the C-trap coins, that ``pattern`` changes the readout."""
    return ctrap_detection_probabilities(layout, [pattern], strict=strict)[0]


def pair_family(layout: BwsLayout) -> list:
    """Every Type-I/Type-II pair and every union of two distinct pairs."""
    pairs = type1_pairs(layout) + type2_pairs(layout)
    unions = [a | b for a, b in itertools.combinations(pairs, 2)]
    return pairs + unions


# -- exhaustive single-row search ------------------------------------------------------------

def find_undetectable(w: int, *, n: int = 4, row: int = 2) -> set:
    """All non-empty flip patterns on one row that R-traps never detect.

    The default row has brick partners in tapes of both parities.
    """
    if not 1 <= w <= 3:
        raise UnsupportedPattern("exhaustive search supports 1 <= w <= 3")
    layout = build_layout(n, 4 * w + 1)
    if not 1 <= row <= n:
        raise IndexError(f"row {row} outside {n}-row layout")
    probs = single_row_detection(layout, row)
    return {pat for pat, p in probs.items() if p == 0}


def single_row_detection(layout: BwsLayout, row: int) -> dict:
    """Exact R-trap detection probability of every non-empty pattern on ``row``."""
    m = layout.m
    patterns = []
    for mask in range(1, 1 << m):
        patterns.append(frozenset(QubitPos(row, j + 1) for j in range(m) if mask >> j & 1))
    probs = rtrap_detection_probabilities(layout, patterns)
    return dict(zip(patterns, probs))


def expected_undetectable(w: int, row: int) -> set:
    """Non-empty symmetric differences of the row's Type-I pairs and its Type-II pair."""
    m = 4 * w + 1
    gens = [frozenset({QubitPos(row, 4 * y - 1), QubitPos(row, 4 * y + 1)}) for y in range(1, w + 1)]
    gens.append(frozenset({QubitPos(row, 1), QubitPos(row, m)}))
    out = set()
    for r in range(1, len(gens) + 1):
        for combo in itertools.combinations(gens, r):
            acc = frozenset()
            for g in combo:
                acc = acc ^ g
            if acc:
                out.add(acc)
    return out


def literal_unions(w: int, row: int) -> set:
    """Plain set unions of the same generators, for comparison with the XOR reading."""
    m = 4 * w + 1
    gens = [frozenset({QubitPos(row, 4 * y - 1), QubitPos(row, 4 * y + 1)}) for y in range(1, w + 1)]
    gens.append(frozenset({QubitPos(row, 1), QubitPos(row, m)}))
    out = set()
    for r in range(1, len(gens) + 1):
        for combo in itertools.combinations(gens, r):
            out.add(frozenset().union(*combo))
    return out


class PatternKind(enum.Enum):
    TYPE_I = "TypeI"
    TYPE_II = "TypeII"
    MIXED_UNDETECTABLE = "MixedUndetectable"
    DETECTABLE = "Detectable"


@dataclass(frozen=True)
class PatternClass:
    kind: PatternKind
    p_detect: Fraction = Fraction(0)

    def __post_init__(self):
        if not 0 <= self.p_detect <= 1:
            raise ValueError("detection probability outside [0, 1]")
        if self.kind is not PatternKind.DETECTABLE and self.p_detect != 0:
            raise ValueError("undetectable classes have zero detection probability")


def classify_pattern(pattern: Iterable, w: int, n: int | None = None) -> PatternClass:
    pattern = as_positions(pattern)
    p = rtrap_detection_probability(pattern, w, n)
    if p:
        return PatternClass(PatternKind.DETECTABLE, p)
    rows = {q.i for q in pattern}
    if len(rows) == 1:
        (i,) = rows
        m = 4 * w + 1
        if pattern == {QubitPos(i, 1), QubitPos(i, m)}:
            return PatternClass(PatternKind.TYPE_II)
        cols = sorted(q.j for q in pattern)
        pairs = [(cols[k], cols[k + 1]) for k in range(0, len(cols), 2)] if len(cols) % 2 == 0 else []
        if pairs and all(a % 4 == 3 and b == a + 2 for a, b in pairs):
            return PatternClass(PatternKind.TYPE_I)
    return PatternClass(PatternKind.MIXED_UNDETECTABLE)



def type1_reading_comparison(w: int, *, n: int = 4, row: int = 2) -> dict:
    """Compare two readings of the Type-I pair columns against the exhaustive search.

    ``tape`` pairs columns (4y-1, 4y+1); ``mod3`` pairs (j, j+2) with j divisible by 3.
    """
    m = 4 * w + 1
    layout = build_layout(n, m)
    probs = single_row_detection(layout, row)
    pair = lambda a, b: frozenset({QubitPos(row, a), QubitPos(row, b)})
    found = sorted((min(q.j for q in p), max(q.j for q in p)) for p, v in probs.items() if v == 0 and len(p) == 2)
    readings = {
        "tape": [(4 * y - 1, 4 * y + 1) for y in range(1, w + 1)],
        "mod3": [(j, j + 2) for j in range(1, m - 1) if j % 3 == 0],
    }
    out = {"undetectable_pairs": [list(p) for p in found]}
    for name, cols in readings.items():
        out[name] = {
            "pairs": [list(c) for c in cols],
            "detection": {f"{a},{b}": str(probs[pair(a, b)]) for a, b in cols},
            "all_undetectable": all(probs[pair(a, b)] == 0 for a, b in cols),
        }
    return out
