import json
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from trapverify.experiments import (
    Check,
    ReportBundle,
    attack_success_bound,
    blindness_check,
    completeness_suite,
    corrupts_target,
    default_target,
    emit_report,
    epsilon_curve,
    parallel_map,
    render_report,
    soundness_mc,
    twirl_check,
    wilson_interval,
)
from trapverify.engine import density, pauli_twirl_residual, plus_state, random_density, trace_distance
from trapverify.frame import find_undetectable


def test_epsilon_v7():
    r = epsilon_curve(7)
    assert r.epsilon == Fraction(7 ** 7, 8 ** 6 * 8)
    assert r.vtilde_star == frozenset({7, 8})
    assert r.bound_applies
    assert r.curve[1] == Fraction(1, 8)


def test_epsilon_v99():
    r = epsilon_curve(99)
    assert float(r.epsilon) == pytest.approx(0.031415, abs=1e-4)
    assert r.vtilde_star == frozenset({7, 8})


def test_epsilon_scaling():
    const = Fraction(7 ** 7, 8 ** 6)
    prev = None
    for v in range(7, 40):
        eps = epsilon_curve(v).epsilon
        assert eps * (v + 1) == const
        assert prev is None or eps < prev
        prev = eps


def test_small_v_flagged():
    r = epsilon_curve(3)
    assert not r.bound_applies
    assert r.vtilde_star == frozenset({4})


@given(st.integers(1, 30), st.integers(0, 30))
def test_bound_formula(vt, extra):
    v = vt + extra
    assert attack_success_bound(vt, v) == Fraction(vt, v + 1) * Fraction(7, 8) ** (vt - 1)


def test_honest_soundness_is_zero():
    r = soundness_mc(7, 0, [], 50, seed=1)
    assert r.mc_estimate == 0


def test_single_output_flip_hits_one_in_eight():
    r = soundness_mc(7, 1, [[(1, 5)]], 3000, seed=2)
    assert abs(r.mc_estimate - 1 / 8) < 3 * r.sigma + 0.01


def test_soundness_within_bound_small():
    family = sorted(find_undetectable(1, n=2, row=1), key=sorted)
    r = soundness_mc(7, 7, family, 1000, seed=3)
    assert r.mc_estimate <= float(r.bound) + 3 * r.sigma


def test_corruption_requires_output_change():
    tgt = default_target()
    assert corrupts_target(tgt, [(1, 5)])
    # on an all-zero target two Z's on the same wire cancel
    zeros = np.zeros((2, 5), dtype=int)
    assert not corrupts_target(zeros, [(1, 1), (1, 5)])
    assert corrupts_target(zeros, [(2, 5)])


def test_trace_distance_examples():
    zero = np.array([1, 0], dtype=complex)
    one = np.array([0, 1], dtype=complex)
    rho = random_density(4, np.random.default_rng(0))
    assert trace_distance(rho, rho) == pytest.approx(0, abs=1e-12)
    assert trace_distance(density(zero), density(one)) == pytest.approx(1)
    assert trace_distance(density(zero), density(plus_state())) == pytest.approx(2 ** -0.5, abs=1e-10)


def test_blindness():
    assert blindness_check() < 1e-12
    assert blindness_check(neighbor_pad_sum=1) < 1e-12
    assert blindness_check([(0, 3), (1, 6), (2, 7)]) < 1e-12
    assert blindness_check([(5, 5)]) == 0
    assert blindness_check([(0, 2)], pad_free=True) > 0.1


def test_twirl():
    out = twirl_check(seed=4)
    assert out["max"] < 1e-12
    rho = density(np.array([1, 0], dtype=complex))
    assert pauli_twirl_residual(1, "X", "X", rho) > 0.1


def test_wilson():
    lo, hi = wilson_interval(50, 100)
    assert lo < 0.5 < hi
    assert wilson_interval(0, 100)[0] == 0


def _square(x):
    return x * x


def test_parallel_map_order():
    assert parallel_map(_square, list(range(20)), threads=2) == [x * x for x in range(20)]
    assert parallel_map(_square, [3], threads=1) == [9]


def test_completeness_small():
    b = completeness_suite([(2, 5)], 5, seed=7, vs=(0, 4))
    assert b.passed
    assert len(b.checks) == 4


def test_report_round_trip_and_determinism(tmp_path):
    b1 = completeness_suite([(2, 5)], 3, seed=11)
    b2 = completeness_suite([(2, 5)], 3, seed=11)
    p1, p2 = tmp_path / "a.json", tmp_path / "b.json"
    emit_report(b1, "json", p1)
    emit_report(b2, "json", p2)
    assert p1.read_bytes() == p2.read_bytes()
    assert ReportBundle.from_json(json.loads(p1.read_text())) == b1


def test_csv_report_one_row_per_check():
    b = ReportBundle("demo", {"x": 1}, [Check("a", True), Check("b", False, "why")], {})
    lines = render_report(b, "csv").strip().splitlines()
    assert len(lines) == 3
    assert not b.passed
