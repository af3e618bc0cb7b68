import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from trapverify import _kernels as K
from trapverify.engine import (
    RX,
    RZ,
    StateVector,
    apply_gate,
    measure_rotated,
    outcome_probability,
    plus_state,
    run_blind,
    run_mbqc,
    run_mbqc_reference,
    rx,
    rz,
)
from trapverify.geometry import (
    DimensionError,
    QubitPos,
    RandomPads,
    adapt_angle,
    angles_from_json,
    angles_to_json,
    build_layout,
    check_angles,
    delta_angle,
    slot_axis,
)

DIMS = [(2, 5), (2, 9), (4, 5), (4, 9)]


@pytest.mark.parametrize("n,m", [(3, 5), (0, 5), (2, 4), (2, 7), (2, 1)])
def test_bad_dimensions(n, m):
    with pytest.raises(DimensionError):
        build_layout(n, m)


def test_brick_count_and_edges():
    lay = build_layout(4, 9)
    assert lay.w == 2
    # horizontal edges plus two vertical edges per brick
    horizontal = 4 * 8
    assert len(lay.edges) == horizontal + 2 * len(lay.bricks)
    odd = [b for b in lay.bricks if b[0] % 2]
    even = [b for b in lay.bricks if b[0] % 2 == 0]
    assert {a for _, a in odd} == {1, 3}
    assert {a for _, a in even} == {2}


def test_slot_axes():
    assert [slot_axis(j) for j in range(1, 6)] == ["Z", "X", "Z", "X", "Z"]


def test_angles_json_round_trip():
    lay = build_layout(2, 5)
    phi = np.arange(10).reshape(2, 5) % 8
    back_layout, back = angles_from_json(angles_to_json(lay, phi))
    assert back_layout == lay
    assert np.array_equal(back, phi)


def test_angles_reduce_mod_8_but_json_is_strict():
    lay = build_layout(2, 5)
    assert not check_angles(lay, np.full((2, 5), 8)).any()
    with pytest.raises(DimensionError):
        check_angles(lay, np.zeros((2, 9)))
    with pytest.raises(DimensionError):
        angles_from_json({"n": 2, "m": 5, "angles": [[8] * 5] * 2})


@given(st.integers(0, 7), st.integers(0, 7), st.integers(0, 1), st.integers(0, 1))
def test_delta_inverts_with_pads(phi, theta, r, rp):
    d = delta_angle(phi, theta, r, rp)
    # undoing the pad recovers phi (up to the r pi which flips the outcome)
    back = ((d - theta - 4 * r) * (-1 if rp else 1)) % 8
    assert back == phi


@given(st.integers(0, 7), st.integers(0, 1), st.integers(0, 1))
def test_adapt_angle(phi, sx, sz):
    a = adapt_angle(phi, sx, sz)
    assert a == ((-phi if sx else phi) + 4 * sz) % 8


def test_rotation_matrices_unitary():
    for k in range(8):
        for u in (rz(k), rx(k)):
            assert np.allclose(u @ u.conj().T, np.eye(2))


def test_measure_plus_state_is_deterministic():
    for k in range(8):
        st_ = StateVector.from_product([0], [plus_state(k)])
        assert outcome_probability(st_, 0, k) == pytest.approx(0.0, abs=1e-12) or \
            outcome_probability(st_, 0, k) == pytest.approx(1.0, abs=1e-12)
        bit, _ = measure_rotated(st_, 0, k, u=0.5)
        assert bit == 0
        bit, _ = measure_rotated(st_, 0, (k + 4) % 8, u=0.5)
        assert bit == 1


def test_apply_gate_matches_matrix():
    st_ = StateVector.plus(["a", "b"])
    out = apply_gate(st_, RZ(2), ["a"])
    ref = np.kron(rz(2) @ plus_state(), plus_state())
    assert abs(abs(np.vdot(ref, out.amplitudes)) - 1) < 1e-12
    out = apply_gate(out, RX(1), ["b"])
    ref = np.kron(rz(2) @ plus_state(), rx(1) @ plus_state())
    assert abs(abs(np.vdot(ref, out.amplitudes)) - 1) < 1e-12


@pytest.mark.parametrize("n,m", DIMS)
def test_kernel_matches_reference(n, m):
    lay = build_layout(n, m)
    rng = np.random.default_rng(n * 100 + m)
    for _ in range(10):
        phi = rng.integers(0, 8, size=lay.shape)
        u = rng.random(lay.shape)
        flips = {QubitPos(int(rng.integers(1, n + 1)), int(rng.integers(1, m + 1)))}
        a = run_mbqc(lay, phi, flips, uniforms=u)
        b = run_mbqc_reference(lay, phi, flips, uniforms=u, lazy=n * m > 12)
        assert np.array_equal(a, b)


def test_numpy_and_numba_frontier_agree():
    lay = build_layout(4, 9)
    rng = np.random.default_rng(3)
    phi = rng.integers(0, 8, size=lay.shape)
    pads = RandomPads.draw(lay, rng)
    u = rng.random(lay.shape)
    outs = []
    for fn in (K.nb_frontier, K.np_frontier):
        orig = K.frontier
        K.frontier = fn
        try:
            outs.append(run_blind(lay, phi, pads, uniforms=u, with_deltas=True))
        finally:
            K.frontier = orig
    for x, y in zip(*outs):
        assert np.array_equal(x, y)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_blind_outcome_depads_to_plain(seed):
    """With shared uniforms the de-padded blind run equals the un-blinded run."""
    lay = build_layout(2, 5)
    rng = np.random.default_rng(seed)
    phi = rng.integers(0, 8, size=lay.shape)
    pads = RandomPads.draw(lay, rng)
    u = rng.random(lay.shape)
    s_plain = run_mbqc(lay, phi, uniforms=u)
    s_blind, b = run_blind(lay, phi, pads, uniforms=u)
    assert np.array_equal(s_blind, b ^ pads.r)
    # output statistics agree, so the last column of a zero-angle run is all zero in both
    if not phi.any():
        assert not s_plain[:, -1].any() and not s_blind[:, -1].any()
