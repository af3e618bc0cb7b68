import numpy as np
import pytest

from trapverify.engine import PAULI, ZGATE, StateVector, apply_gate, apply_matrix, run_blind
from trapverify.experiments import default_target
from trapverify.geometry import ComputationKind, QubitPos, RandomPads, build_layout, zero_angles
from trapverify.protocol import (
    AngleAnnouncement,
    EntangledBatch,
    Honest,
    OutcomeFlip,
    PreparationAborted,
    UnitaryHook,
    Verdict,
    WrongAngleBatch,
    ZeroStateBatch,
    ZFlip,
    certify_batch,
    expected_counters,
    overhead_counters,
    recount,
    run_protocol,
    run_protocol1,
    run_protocol2,
    verify_traps,
)

TARGET = default_target()


def accept_rate(run, prover, trials, v=2, seed0=0, **kw):
    return np.mean([run(2, 5, v, TARGET, prover, rng=seed0 + s, log=False, **kw)[0].accepted
                    for s in range(trials)])


@pytest.mark.parametrize("proto", [1, 2])
@pytest.mark.parametrize("n,m,v", [(2, 5, 4), (4, 9, 2), (2, 9, 0)])
def test_honest_runs_accept(proto, n, m, v):
    phi = np.random.default_rng(n + m).integers(0, 8, size=(n, m))
    for seed in range(10):
        verdict, t = run_protocol(proto, n, m, v, phi, rng=seed)
        assert verdict.accepted
        assert len(verdict.output) == n
        assert t.kinds.count(ComputationKind.TARGET) == 1


def test_verify_traps_cases():
    zero = np.zeros((2, 5), dtype=int)
    one = zero.copy()
    one[1, -1] = 1
    T, R = ComputationKind.TARGET, ComputationKind.RTRAP
    assert verify_traps([one, zero], [T, R]) == Verdict.accept((0, 1))
    assert not verify_traps([zero, one], [T, R]).accepted
    assert verify_traps([one], [T]).accepted


def test_output_flip_everywhere_always_rejects():
    prover = ZFlip.everywhere([(1, 5)], 5)
    for seed in range(50):
        assert not run_protocol1(2, 5, 4, TARGET, prover, rng=seed)[0].accepted


def test_slow_and_fast_paths_agree():
    prover = ZFlip.everywhere([(1, 2), (2, 3)], 4)
    for seed in range(20):
        a = run_protocol1(2, 5, 3, TARGET, prover, rng=seed)
        b = run_protocol1(2, 5, 3, TARGET, prover, rng=seed, slow=True)
        assert a[0] == b[0]
        assert a[1].dumps(a[0]) == b[1].dumps(b[0])


def test_zflip_and_outcome_flip_coincide():
    pos = [(1, 2), (2, 4)]
    trials = 1500
    z = accept_rate(run_protocol1, ZFlip.everywhere(pos, 3), trials)
    o = accept_rate(run_protocol1, OutcomeFlip.everywhere(pos, 3), trials)
    assert abs(z - o) < 0.02


def test_protocol2_detection_matches_protocol1():
    prover = ZFlip.everywhere([(1, 3)], 3)
    p1 = accept_rate(run_protocol1, prover, 1000)
    p2 = accept_rate(run_protocol2, prover, 1000, seed0=10 ** 6)
    assert abs(p1 - p2) < 0.05


def test_outcome_flip_is_protocol1_only():
    with pytest.raises(ValueError):
        run_protocol2(2, 5, 1, TARGET, OutcomeFlip({1: [(1, 1)]}), rng=0)


def test_pattern_outside_range():
    with pytest.raises(ValueError):
        run_protocol1(2, 5, 1, TARGET, ZFlip({3: [(1, 1)]}), rng=0)
    with pytest.raises(IndexError):
        run_protocol1(2, 5, 1, TARGET, ZFlip({1: [(3, 1)]}), rng=0)


def test_seed_is_required():
    with pytest.raises(ValueError):
        run_protocol1(2, 5, 1, TARGET)


@pytest.mark.parametrize("proto", [1, 2])
def test_counters(proto):
    lay = build_layout(4, 9)
    verdict, t = run_protocol(proto, 4, 9, 4, zero_angles(lay), rng=3)
    rep = overhead_counters(t)
    assert rep["matches_formula"] and rep["recount_matches"]
    if proto == 1:
        assert rep["actual"] == {"n_bits_alice": 540, "n_qubits_alice": 180, "n_bits_bob": 180, "n_qubits_bob": 0}
    else:
        assert rep["actual"] == {"n_bits_alice": 0, "n_qubits_alice": 180, "n_bits_bob": 0, "n_qubits_bob": 1620}
        assert rep["retries"] == 0
    assert recount(t.messages).as_dict() == t.counters.as_dict()


def test_protocol2_retries_add_qubits():
    verdict, t = run_protocol2(2, 5, 1, TARGET, Honest(batch=WrongAngleBatch()), rng=4)
    rep = overhead_counters(t)
    assert verdict.accepted
    assert t.retries > 0
    assert rep["actual"]["n_qubits_bob"] > 9 * 2 * 10
    assert rep["matches_expected"] and not rep["matches_formula"]
    assert rep["actual"] == expected_counters(2, 2, 5, 1, t.attempts)


def test_protocol2_abort_distinct_from_reject():
    with pytest.raises(PreparationAborted):
        run_protocol2(2, 5, 1, TARGET, Honest(batch=ZeroStateBatch()), rng=0, retry_cap=3)


@pytest.mark.parametrize("batch", [WrongAngleBatch(), ZeroStateBatch(), EntangledBatch()])
def test_certified_qubit_is_exact(batch):
    rng = np.random.default_rng(9)
    for tau in range(8):
        attempts, fid = certify_batch(batch, tau, rng)
        assert attempts >= 1
        assert fid == pytest.approx(1.0, abs=1e-12)


def test_protocol2_sends_no_classical_bits_from_alice():
    verdict, t = run_protocol2(2, 5, 2, TARGET, rng=8)
    assert t.counters.as_dict()["n_bits_alice"] == 0
    assert not any(m.sender == "alice" and m.bits for m in t.messages)


@pytest.mark.parametrize("proto", [1, 2])
def test_deterministic_transcripts(proto):
    a = run_protocol(proto, 2, 5, 2, TARGET, ZFlip({1: [(1, 2)]}), rng=17)
    b = run_protocol(proto, 2, 5, 2, TARGET, ZFlip({1: [(1, 2)]}), rng=17)
    assert a[1].dumps(a[0]) == b[1].dumps(b[0])


def test_announced_angles_uniform():
    lay = build_layout(2, 5)
    rng = np.random.default_rng(0)
    phi = TARGET
    counts = np.zeros(8)
    runs = 10000
    for _ in range(runs):
        pads = RandomPads.draw(lay, rng)
        _, _, d = run_blind(lay, phi, pads, rng=rng, with_deltas=True)
        counts[d[1, 2]] += 1
    chi2 = ((counts - runs / 8) ** 2 / (runs / 8)).sum()
    # 7 degrees of freedom, p = 0.001
    assert chi2 < 24.32


def test_transcript_records_announcements():
    verdict, t = run_protocol1(2, 5, 1, TARGET, rng=2)
    ann = [m for m in t.messages if isinstance(m, AngleAnnouncement)]
    assert len(ann) == 2 * 10
    assert all(0 <= m.delta < 8 for m in ann)


def test_unitary_hook_z_matches_zflip():
    pos = QubitPos(1, 3)

    def hook(k, q, state, anc):
        return apply_gate(state, ZGATE, q) if q == pos else state

    for seed in range(10):
        a = run_protocol1(2, 5, 2, TARGET, UnitaryHook(hook), rng=seed)
        b = run_protocol1(2, 5, 2, TARGET, ZFlip.everywhere([pos], 3), rng=seed)
        assert a[0] == b[0]
        assert [o.tolist() for o in a[1].outcomes] == [o.tolist() for o in b[1].outcomes]


def test_unitary_hook_with_ancilla_persists():
    later = []

    def hook(k, q, state, anc):
        if k == 1 and q == QubitPos(1, 1):
            return apply_matrix(state, PAULI["X"], [anc[0]])
        if k == 2:
            later.append(state.reduced([anc[0]])[1, 1].real)
        return state

    verdict, t = run_protocol1(2, 5, 1, TARGET, UnitaryHook(hook, ancillas=1), rng=1)
    assert verdict.accepted
    # the ancilla flipped during computation 1 is still |1> throughout computation 2
    assert later and min(later) == pytest.approx(1.0, abs=1e-12)


def test_unitary_hook_ancilla_bound():
    with pytest.raises(ValueError):
        UnitaryHook(lambda *a: a[2], ancillas=3)


def test_hook_must_keep_labels():
    with pytest.raises(ValueError):
        run_protocol1(2, 5, 0, TARGET, UnitaryHook(lambda k, q, s, a: StateVector.plus(["x"])), rng=0)
