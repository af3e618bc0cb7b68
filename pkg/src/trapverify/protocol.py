"""Verifier/prover state machines for the prepare-and-send protocol (1) and the
receive-and-measure protocol (2).

Alice's side lives in this module; Bob's quantum side is simulated in-process
and only talks to Alice through :class:`Message` objects. Runs without a
:class:`UnitaryHook` use the fused frontier kernel and rebuild the message log
from its outputs; hooked runs go through a per-measurement :class:`StateVector`
loop that consumes exactly the same random stream.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .engine import (
    CZ,
    ZGATE,
    StateVector,
    apply_gate,
    flow_signals,
    measure_rotated,
    plus_state,
    run_blind,
)
from .geometry import (
    BwsLayout,
    ComputationKind,
    QubitPos,
    RandomPads,
    adapt_angle,
    build_layout,
    check_angles,
    check_positions,
    delta_angle,
)
from .traps import TrapInstance, gen_trap

DEFAULT_RETRY_CAP = 10_000
BATCH = 8
ALICE, BOB = "alice", "bob"


class PreparationAborted(RuntimeError):
    """Protocol 2 state preparation hit the retry cap (distinct from Reject)."""


# -- messages ------------------------------------------------------------------------

@dataclass(frozen=True)
class QubitBatch:
    k: int
    i: int
    j: int
    angles: tuple
    sender: str = ALICE

    bits = 0

    @property
    def qubits(self) -> int:
        return len(self.angles)


@dataclass(frozen=True)
class AngleAnnouncement:
    k: int
    i: int
    j: int
    delta: int
    sender: str = ALICE
    bits = 3
    qubits = 0


@dataclass(frozen=True)
class OutcomeReport:
    k: int
    i: int
    j: int
    s: int
    sender: str = BOB
    bits = 1
    qubits = 0


@dataclass(frozen=True)
class QubitForward:
    k: int
    i: int
    j: int
    direction: str
    bits = 0
    qubits = 1

    @property
    def sender(self) -> str:
        return self.direction.split("->")[0]


@dataclass(frozen=True)
class PrepRequest:
    """Ask for a batch of |+_tau> states; the tau list is public and fixed, so it carries no bits."""

    k: int
    i: int
    j: int
    taus: tuple = tuple(range(BATCH))
    sender: str = ALICE
    bits = 0
    qubits = 0


Message = QubitBatch | AngleAnnouncement | OutcomeReport | QubitForward | PrepRequest


def message_to_json(msg) -> dict:
    doc = {"type": type(msg).__name__, "sender": msg.sender}
    for name in msg.__dataclass_fields__:
        if name == "sender":
            continue
        val = getattr(msg, name)
        doc[name] = list(val) if isinstance(val, tuple) else val
    return doc


@dataclass
class Counters:
    bits_alice: int = 0
    qubits_alice: int = 0
    bits_bob: int = 0
    qubits_bob: int = 0

    def add(self, msg) -> None:
        if msg.sender == ALICE:
            self.bits_alice += msg.bits
            self.qubits_alice += msg.qubits
        else:
            self.bits_bob += msg.bits
            self.qubits_bob += msg.qubits

    def as_dict(self) -> dict:
        return {"n_bits_alice": self.bits_alice, "n_qubits_alice": self.qubits_alice,
                "n_bits_bob": self.bits_bob, "n_qubits_bob": self.qubits_bob}


def recount(messages: Iterable) -> Counters:
    c = Counters()
    for msg in messages:
        c.add(msg)
    return c


class _Channel:
    def __init__(self, log: bool):
        self.log = log
        self.messages: list = []
        self.counters = Counters()

    def send(self, msg) -> None:
        self.counters.add(msg)
        if self.log:
            self.messages.append(msg)


# -- verdicts and transcripts ----------------------------------------------------------------

@dataclass(frozen=True)
class Verdict:
    accepted: bool
    output: tuple | None = None

    @classmethod
    def accept(cls, output) -> "Verdict":
        return cls(True, tuple(int(b) for b in output))

    @classmethod
    def reject(cls) -> "Verdict":
        return cls(False, None)

    def to_json(self):
        if self.accepted:
            return {"result": "accept", "output": list(self.output)}
        return {"result": "reject"}


@dataclass
class Transcript:
    protocol: int
    n: int
    m: int
    v: int
    seed: int | None
    target: int
    kinds: list
    outcomes: list = field(repr=False)
    counters: Counters = field(default_factory=Counters)
    messages: list = field(default_factory=list, repr=False)
    attempts: int = 0
    prep_min_fidelity: float | None = None
    logged: bool = True

    @property
    def retries(self) -> int:
        return max(self.attempts - (self.v + 1) * self.n * self.m, 0) if self.protocol == 2 else 0

    def to_json(self, verdict: Verdict | None = None, *, include_messages: bool = True) -> dict:
        doc = {
            "protocol": self.protocol,
            "n": self.n,
            "m": self.m,
            "v": self.v,
            "seed": self.seed,
            "target": self.target,
            "kinds": [k.value for k in self.kinds],
            "counters": self.counters.as_dict(),
            "outcomes": [o.tolist() for o in self.outcomes],
        }
        if self.protocol == 2:
            doc["attempts"] = self.attempts
            doc["retries"] = self.retries
            doc["prep_min_fidelity"] = self.prep_min_fidelity
        if verdict is not None:
            doc["verdict"] = verdict.to_json()
        if include_messages and self.logged:
            doc["messages"] = [message_to_json(mg) for mg in self.messages]
        return doc

    def dumps(self, verdict: Verdict | None = None, *, include_messages: bool = True) -> str:
        return json.dumps(self.to_json(verdict, include_messages=include_messages), sort_keys=True)


def verify_traps(outcomes: Sequence, kinds: Sequence) -> Verdict:
    """Accept iff every trap's last column is all zeros; the output is the target's last column."""
    if len(outcomes) != len(kinds):
        raise ValueError("one outcome grid per computation is required")
    output = None
    for s, kind in zip(outcomes, kinds):
        last = np.asarray(s)[:, -1]
        if kind is ComputationKind.TARGET:
            output = last
        elif last.any():
            return Verdict.reject()
    if output is None:
        raise ValueError("no target computation among the kinds")
    return Verdict.accept(output)


def expected_counters(protocol: int, n: int, m: int, v: int, attempts: int | None = None) -> dict:
    size = (v + 1) * n * m
    if protocol == 1:
        return {"n_bits_alice": 3 * size, "n_qubits_alice": size, "n_bits_bob": size, "n_qubits_bob": 0}
    if attempts is None:
        attempts = size
    return {"n_bits_alice": 0, "n_qubits_alice": size, "n_bits_bob": 0,
            "n_qubits_bob": BATCH * attempts + size}


def overhead_counters(t: Transcript, protocol: int | None = None) -> dict:
    """Counters of ``t`` next to the closed-form overheads.

    For protocol 2 ``formula`` is the retry-free value 9(v+1)nm while
    ``expected`` accounts for the recorded retries.
    """
    protocol = t.protocol if protocol is None else protocol
    if protocol != t.protocol:
        raise ValueError(f"transcript is from protocol {t.protocol}")
    if len(t.outcomes) != t.v + 1:
        raise ValueError("incomplete transcript")
    actual = t.counters.as_dict()
    formula = expected_counters(protocol, t.n, t.m, t.v)
    expected = expected_counters(protocol, t.n, t.m, t.v, t.attempts if protocol == 2 else None)
    out = {"actual": actual, "formula": formula, "expected": expected,
           "matches_formula": actual == formula, "matches_expected": actual == expected}
    if t.logged:
        out["recount_matches"] = recount(t.messages).as_dict() == actual
    if protocol == 2:
        out["retries"] = t.retries
    return out


# -- prover behaviours -----------------------------------------------------------------------

class BatchBehavior:
    """How the prover fills a Protocol 2 batch; honest by default."""

    name = "honest"
    ancillas = 0

    def prepare(self, taus: Sequence[int], rng: np.random.Generator) -> StateVector:
        return StateVector.from_product(range(len(taus)), [plus_state(t) for t in taus])


class HonestBatch(BatchBehavior):
    pass


@dataclass(frozen=True)
class WrongAngleBatch(BatchBehavior):
    """Every state is rotated by ``offset`` units of pi/4 away from the requested one."""

    offset: int = 1
    name = "wrong-angle"

    def prepare(self, taus, rng):
        return StateVector.from_product(range(len(taus)), [plus_state(t + self.offset) for t in taus])


@dataclass(frozen=True)
class ZeroStateBatch(BatchBehavior):
    """Sends |0> instead of |+_tau>."""

    name = "zero-states"

    def prepare(self, taus, rng):
        zero = np.array([1.0, 0.0], dtype=complex)
        return StateVector.from_product(range(len(taus)), [zero] * len(taus))


@dataclass(frozen=True)
class EntangledBatch(BatchBehavior):
    """Each state gets a controlled phase of ``angle`` units from one shared ancilla in |+>."""

    angle: int = 2
    name = "entangled-ancilla"
    ancillas = 1

    def prepare(self, taus, rng):
        labels = list(range(len(taus))) + [("anc", 0)]
        state = StateVector.from_product(labels, [plus_state(t) for t in taus] + [plus_state()])
        amp = state.amplitudes.reshape([2] * len(labels)).copy()
        for q in range(len(taus)):
            idx = [slice(None)] * len(labels)
            idx[q] = 1
            idx[-1] = 1
            amp[tuple(idx)] *= np.exp(1j * np.pi / 4 * self.angle)
        return StateVector(amp.reshape(-1), tuple(labels))


def _as_pattern(pattern) -> dict:
    if pattern is None:
        return {}
    if isinstance(pattern, Mapping):
        return {int(k): frozenset(QubitPos(*q) for q in v) for k, v in pattern.items()}
    raise TypeError("pattern must map computation index k to positions")


@dataclass(frozen=True)
class Honest:
    batch: BatchBehavior = field(default_factory=HonestBatch)
    name = "honest"

    def flips(self, k: int) -> frozenset:
        return frozenset()

    def report_flips(self, k: int) -> frozenset:
        return frozenset()


@dataclass(frozen=True)
class ZFlip:
    """Apply Z right before measuring the listed qubits of computation k."""

    pattern: Mapping = field(default_factory=dict)
    batch: BatchBehavior = field(default_factory=HonestBatch)
    name = "zflip"

    def __post_init__(self):
        object.__setattr__(self, "pattern", _as_pattern(self.pattern))

    @classmethod
    def everywhere(cls, positions: Iterable, computations: int) -> "ZFlip":
        pos = frozenset(QubitPos(*q) for q in positions)
        return cls({k: pos for k in range(1, computations + 1)})

    def flips(self, k: int) -> frozenset:
        return self.pattern.get(k, frozenset())

    def report_flips(self, k: int) -> frozenset:
        return frozenset()


@dataclass(frozen=True)
class OutcomeFlip(ZFlip):
    """Measure honestly but report the listed outcomes inverted."""

    name = "outcomeflip"

    def flips(self, k: int) -> frozenset:
        return frozenset()

    def report_flips(self, k: int) -> frozenset:
        return self.pattern.get(k, frozenset())


MAX_HOOK_ANCILLAS = 2


@dataclass(frozen=True)
class UnitaryHook:
    """Call ``hook(k, position, state, ancilla_labels)`` before each of Bob's measurements.

    ``state`` holds the live frontier plus the ancillas; the hook returns a new
    state over the same labels. The ancillas start in |0> and persist across
    computations.
    """

    hook: Callable
    ancillas: int = 0
    batch: BatchBehavior = field(default_factory=HonestBatch)
    name = "unitary-hook"

    def __post_init__(self):
        if not 0 <= self.ancillas <= MAX_HOOK_ANCILLAS:
            raise ValueError(f"at most {MAX_HOOK_ANCILLAS} ancilla qubits are supported")

    def flips(self, k: int) -> frozenset:
        return frozenset()

    def report_flips(self, k: int) -> frozenset:
        return frozenset()


ProverBehavior = Honest | ZFlip | OutcomeFlip | UnitaryHook


# -- shared setup -----------------------------------------------------------------------------

@dataclass
class _Setup:
    layout: BwsLayout
    target_angles: np.ndarray
    target: int
    kinds: list
    traps: dict

    def angles(self, k: int) -> np.ndarray:
        if k == self.target:
            return self.target_angles
        return self.traps[k].angles


def _rng(rng) -> tuple[np.random.Generator, int | None]:
    if isinstance(rng, np.random.Generator):
        return rng, None
    if rng is None:
        raise ValueError("a seed or numpy Generator is required")
    seed = int(rng)
    return np.random.default_rng(seed), seed


def _setup(n, m, v, target_angles, rng, force_kind) -> _Setup:
    layout = build_layout(n, m)
    if not isinstance(v, (int, np.integer)) or v < 0:
        raise ValueError("v must be a non-negative integer")
    phi = check_angles(layout, target_angles)
    target = int(rng.integers(1, v + 2))
    kinds = []
    for k in range(1, v + 2):
        if k == target:
            kinds.append(ComputationKind.TARGET)
        elif force_kind is not None:
            kinds.append(ComputationKind(force_kind))
        else:
            kinds.append(ComputationKind.RTRAP if int(rng.integers(0, 2)) == 0 else ComputationKind.CTRAP)
    traps: dict[int, TrapInstance] = {}
    for k, kind in enumerate(kinds, start=1):
        if kind is not ComputationKind.TARGET:
            traps[k] = gen_trap(kind, layout, rng)
    return _Setup(layout, phi, target, kinds, traps)


def _check_behavior(prover, layout: BwsLayout, v: int) -> None:
    for attr in ("pattern",):
        pat = getattr(prover, attr, None)
        if pat:
            for k, pos in pat.items():
                if not 1 <= k <= v + 1:
                    raise ValueError(f"pattern names computation {k}, expected 1..{v + 1}")
                check_positions(layout, pos)


# -- Bob's message-level simulation (used with UnitaryHook) ---------------------------------

def _entangle_column(state: StateVector, layout: BwsLayout, j: int) -> StateVector:
    live = set(state.labels)
    for a, b in sorted(layout.edges):
        if j in (a.j, b.j) and a in live and b in live:
            state = apply_gate(state, CZ, [a, b])
    return state


def _slow_evaluate(layout, k, phi, pads, uniforms, prover, ancilla_state):
    """Per-measurement evaluation with Bob's hook; returns (s, b, deltas, ancilla_state)."""
    n, m = layout.n, layout.m
    prep = pads.prepared(layout)
    s = np.zeros(layout.shape, dtype=np.int64)
    b = np.zeros(layout.shape, dtype=np.int64)
    d = np.zeros(layout.shape, dtype=np.int64)
    zflips = prover.flips(k)
    rflips = prover.report_flips(k)
    hook = getattr(prover, "hook", None)
    anc = tuple(("anc", a) for a in range(getattr(prover, "ancillas", 0) if hook else 0))
    col = lambda j: [QubitPos(i, j) for i in range(1, n + 1)]
    state = ancilla_state.extend(col(1), [plus_state(int(prep[i, 0])) for i in range(n)])
    state = _entangle_column(state, layout, 1)
    for j in range(1, m + 1):
        if j < m:
            state = state.extend(col(j + 1), [plus_state(int(prep[i, j])) for i in range(n)])
            state = _entangle_column(state, layout, j + 1)
        for i in range(1, n + 1):
            q = QubitPos(i, j)
            sx, sz = flow_signals(layout, s, i, j)
            delta = delta_angle(adapt_angle(int(phi[i - 1, j - 1]), sx, sz),
                                int(pads.theta[i - 1, j - 1]), int(pads.r[i - 1, j - 1]),
                                int(pads.r_prime[i - 1, j - 1]))
            d[i - 1, j - 1] = delta
            if hook is not None:
                new = hook(k, q, state, anc)
                if not isinstance(new, StateVector) or new.labels != state.labels:
                    raise ValueError("hook must return a StateVector over the same labels")
                state = new
            if q in zflips:
                state = apply_gate(state, ZGATE, q)
            bit, state = measure_rotated(state, q, delta, u=float(uniforms[i - 1, j - 1]))
            bit ^= int(q in rflips)
            b[i - 1, j - 1] = bit
            s[i - 1, j - 1] = bit ^ int(pads.r[i - 1, j - 1])
    return s, b, d, state


def _fast_evaluate(layout, k, phi, pads, uniforms, prover):
    # Reported-bit flips feed Alice's adaptive angles, so they always take the slow path.
    return run_blind(layout, phi, pads, prover.flips(k), uniforms=uniforms, with_deltas=True)


# -- Protocol 1 -------------------------------------------------------------------------------

def run_protocol1(n: int, m: int, v: int, target_angles, prover=None, rng=None, *,
                  force_kind: ComputationKind | str | None = None, log: bool = True,
                  slow: bool = False) -> tuple[Verdict, Transcript]:
    """Prepare-and-send protocol with v traps and one hidden target."""
    rng, seed = _rng(rng)
    prover = Honest() if prover is None else prover
    setup = _setup(n, m, v, target_angles, rng, force_kind)
    layout = setup.layout
    _check_behavior(prover, layout, v)
    use_slow = slow or isinstance(prover, (UnitaryHook, OutcomeFlip))
    chan = _Channel(log)
    outcomes = []
    ancilla = StateVector(np.ones(1, dtype=complex), ())
    if isinstance(prover, UnitaryHook) and prover.ancillas:
        ancilla = StateVector.from_product([("anc", a) for a in range(prover.ancillas)],
                                           [np.array([1.0, 0.0], dtype=complex)] * prover.ancillas)
    for k in range(1, v + 2):
        pads = RandomPads.draw(layout, rng)
        uniforms = rng.random(layout.shape)
        phi = setup.angles(k)
        prep = pads.prepared(layout)
        if use_slow:
            s, b, d, ancilla = _slow_evaluate(layout, k, phi, pads, uniforms, prover, ancilla)
        else:
            s, b, d = _fast_evaluate(layout, k, phi, pads, uniforms, prover)
        for q in layout.positions():
            chan.send(QubitBatch(k, q.i, q.j, (int(prep[q.i - 1, q.j - 1]),)))
        for q in layout.positions():
            chan.send(AngleAnnouncement(k, q.i, q.j, int(d[q.i - 1, q.j - 1])))
            chan.send(OutcomeReport(k, q.i, q.j, int(b[q.i - 1, q.j - 1])))
        outcomes.append(s)
    verdict = verify_traps(outcomes, setup.kinds)
    t = Transcript(1, n, m, v, seed, setup.target, setup.kinds, outcomes, chan.counters,
                   chan.messages, logged=log)
    return verdict, t


# -- Protocol 2 -------------------------------------------------------------------------------

def certify_batch(batch: BatchBehavior, tau_needed: int, rng: np.random.Generator,
                  *, cap: int = DEFAULT_RETRY_CAP) -> tuple[int, float]:
    """Repeat-until-success preparation of one qubit.

    Alice measures every qubit of a batch in its own basis, keeping the
    post-measurement state; any outcome 1 discards the batch. Returns the
    number of batches used and the fidelity of the forwarded qubit with
    |+_tau_needed>.
    """
    taus = tuple(range(BATCH))
    for attempt in range(1, cap + 1):
        state = batch.prepare(taus, rng)
        us = rng.random(BATCH)
        ok = True
        for t in taus:
            bit, state = measure_rotated(state, t, t, u=float(us[t]), keep=True)
            if bit:
                ok = False
                break
        if ok:
            rho = state.reduced([tau_needed])
            ref = plus_state(tau_needed)
            return attempt, float(np.real(ref.conj() @ rho @ ref))
    raise PreparationAborted(f"no clean batch after {cap} attempts")


def run_protocol2(n: int, m: int, v: int, target_angles, prover=None, rng=None, *,
                  force_kind: ComputationKind | str | None = None, log: bool = True,
                  slow: bool = False, retry_cap: int = DEFAULT_RETRY_CAP) -> tuple[Verdict, Transcript]:
    """Receive-and-measure protocol: Bob prepares batches, Alice certifies and measures."""
    rng, seed = _rng(rng)
    prover = Honest() if prover is None else prover
    if isinstance(prover, OutcomeFlip):
        raise ValueError("outcome flips need a prover that reports outcomes (protocol 1 only)")
    setup = _setup(n, m, v, target_angles, rng, force_kind)
    layout = setup.layout
    _check_behavior(prover, layout, v)
    use_slow = slow or isinstance(prover, UnitaryHook)
    batch = getattr(prover, "batch", HonestBatch())
    chan = _Channel(log)
    outcomes = []
    attempts_total = 0
    min_fid = 1.0
    ancilla = StateVector(np.ones(1, dtype=complex), ())
    if isinstance(prover, UnitaryHook) and prover.ancillas:
        ancilla = StateVector.from_product([("anc", a) for a in range(prover.ancillas)],
                                           [np.array([1.0, 0.0], dtype=complex)] * prover.ancillas)
    for k in range(1, v + 2):
        pads = RandomPads.draw(layout, rng)
        uniforms = rng.random(layout.shape)
        phi = setup.angles(k)
        prep = pads.prepared(layout)
        for q in layout.positions():
            tau = int(prep[q.i - 1, q.j - 1])
            attempts, fid = certify_batch(batch, tau, rng, cap=retry_cap)
            attempts_total += attempts
            min_fid = min(min_fid, fid)
            for _ in range(attempts):
                chan.send(PrepRequest(k, q.i, q.j))
                chan.send(QubitBatch(k, q.i, q.j, tuple(range(BATCH)), sender=BOB))
            chan.send(QubitForward(k, q.i, q.j, f"{ALICE}->{BOB}"))
        if use_slow:
            s, _, _, ancilla = _slow_evaluate(layout, k, phi, pads, uniforms, prover, ancilla)
        else:
            s, _, _ = _fast_evaluate(layout, k, phi, pads, uniforms, prover)
        for q in layout.positions():
            chan.send(QubitForward(k, q.i, q.j, f"{BOB}->{ALICE}"))
        outcomes.append(s)
    verdict = verify_traps(outcomes, setup.kinds)
    t = Transcript(2, n, m, v, seed, setup.target, setup.kinds, outcomes, chan.counters,
                   chan.messages, attempts=attempts_total, prep_min_fidelity=min_fid, logged=log)
    return verdict, t


def run_protocol(protocol: int, *args, **kwargs) -> tuple[Verdict, Transcript]:
    if protocol == 1:
        return run_protocol1(*args, **kwargs)
    if protocol == 2:
        return run_protocol2(*args, **kwargs)
    raise ValueError("protocol must be 1 or 2")
