"""Analysis suites: soundness curve and Monte Carlo, blindness, twirl,
completeness, and machine-readable reports."""
from __future__ import annotations

import csv
import io
import itertools
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from functools import partial
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .circuit import extract_logical_circuit, insert_flip_byproducts, output_distribution, total_variation
from .engine import density, pauli_twirl_residual, plus_state, random_density, run_mbqc, trace_distance
from .geometry import ComputationKind, build_layout, delta_angle
from .protocol import Honest, ZFlip, run_protocol1, run_protocol2
from .traps import gen_ctrap, gen_trap, predict_trap_outcome

BOUND_MIN_V = 7
TV_TOL = 1e-9


# -- worker pool ------------------------------------------------------------------------

def default_threads() -> int:
    return len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else (os.cpu_count() or 1)


def parallel_map(fn: Callable, items: Sequence, threads: int | None = 1) -> list:
    """Order-preserving map; ``fn`` must be picklable when ``threads > 1``."""
    threads = default_threads() if threads is None else threads
    if threads <= 1 or len(items) < 2:
        return [fn(x) for x in items]
    chunk = max(1, len(items) // (threads * 8))
    with ProcessPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, items, chunksize=chunk))


# -- statistics ---------------------------------------------------------------------------

def wilson_interval(successes: int, trials: int, z: float = 1.959963984540054) -> tuple[float, float]:
    if trials == 0:
        return (0.0, 1.0)
    p = successes / trials
    den = 1 + z * z / trials
    centre = (p + z * z / (2 * trials)) / den
    half = z * math.sqrt(p * (1 - p) / trials + z * z / (4 * trials * trials)) / den
    lo = 0.0 if successes == 0 else max(0.0, centre - half)
    hi = 1.0 if successes == trials else min(1.0, centre + half)
    return (lo, hi)


def binomial_sigma(p: float, trials: int) -> float:
    return math.sqrt(max(p * (1 - p), 0.0) / trials) if trials else 0.0


# -- soundness --------------------------------------------------------------------------------

@dataclass
class SoundnessResult:
    v: int
    vtilde_star: frozenset
    epsilon: Fraction
    curve: dict = field(default_factory=dict)
    bound_applies: bool = True
    vtilde: int | None = None
    bound: Fraction | None = None
    mc_estimate: float | None = None
    ci95: tuple | None = None
    sigma: float | None = None
    trials: int = 0
    accept_rate: float | None = None

    @property
    def epsilon_float(self) -> float:
        return float(self.epsilon)

    @property
    def within_bound(self) -> bool | None:
        if self.mc_estimate is None:
            return None
        limit = self.bound if self.bound is not None else self.epsilon
        return self.mc_estimate <= float(limit) + 3 * self.sigma

    def to_json(self) -> dict:
        doc = {
            "v": self.v,
            "vtilde_star": sorted(self.vtilde_star),
            "epsilon": str(self.epsilon),
            "epsilon_float": self.epsilon_float,
            "epsilon_times_v_plus_1": float(self.epsilon * (self.v + 1)),
            "bound_applies": self.bound_applies,
        }
        if self.mc_estimate is not None:
            doc.update({
                "vtilde": self.vtilde,
                "bound": str(self.bound),
                "bound_float": float(self.bound),
                "mc_estimate": self.mc_estimate,
                "ci95": list(self.ci95),
                "sigma": self.sigma,
                "trials": self.trials,
                "accept_rate": self.accept_rate,
                "within_bound": self.within_bound,
            })
        return doc


def attack_success_bound(vtilde: int, v: int) -> Fraction:
    """(vtilde / (v+1)) (7/8)^(vtilde-1): hit the target and slip past every attacked trap."""
    if vtilde <= 0:
        return Fraction(0)
    return Fraction(vtilde, v + 1) * Fraction(7, 8) ** (vtilde - 1)


def epsilon_curve(v: int) -> SoundnessResult:
    if v < 0:
        raise ValueError("v must be non-negative")
    curve = {t: attack_success_bound(t, v) for t in range(1, v + 2)}
    best = max(curve.values())
    star = frozenset(t for t, f in curve.items() if f == best)
    return SoundnessResult(v, star, best, curve, bound_applies=v >= BOUND_MIN_V)


def default_target(n: int = 2, m: int = 5, seed: int = 20240501) -> np.ndarray:
    return np.random.default_rng(seed).integers(0, 8, size=(n, m))


def corrupts_target(target_angles, pattern: Iterable) -> bool:
    """Whether the by-products of ``pattern`` change the target's exact output distribution."""
    phi = np.asarray(target_angles)
    layout = build_layout(*phi.shape)
    c = extract_logical_circuit(phi, layout)
    return total_variation(output_distribution(c), output_distribution(insert_flip_byproducts(c, pattern))) > TV_TOL


@dataclass(frozen=True)
class _SoundnessCtx:
    n: int
    m: int
    v: int
    vtilde: int
    family: tuple
    corrupting: tuple
    target: tuple
    force_kind: str | None


def _soundness_trial(ctx: _SoundnessCtx, seed: int) -> tuple[int, int]:
    attacker = np.random.default_rng([seed, 0xA7])
    attacked = attacker.choice(ctx.v + 1, size=ctx.vtilde, replace=False) + 1
    picks = attacker.integers(0, len(ctx.family), size=ctx.vtilde)
    pattern = {int(k): ctx.family[int(p)] for k, p in zip(attacked, picks)}
    verdict, t = run_protocol1(ctx.n, ctx.m, ctx.v, np.asarray(ctx.target), ZFlip(pattern), seed,
                               force_kind=ctx.force_kind, log=False)
    hit = t.target in pattern and ctx.corrupting[int(picks[list(attacked).index(t.target)])]
    return int(hit and verdict.accepted), int(verdict.accepted)


def soundness_mc(v: int, vtilde: int, pattern_family: Sequence, trials: int, seed: int, *,
                 n: int = 2, m: int = 5, target_angles=None, force_kind=None,
                 threads: int | None = 1) -> SoundnessResult:
    """Estimate p(target corrupted and accepted) under a ZFlip prover on ``vtilde`` computations.

    Each attacked computation gets a pattern drawn uniformly from
    ``pattern_family``. Trial ``t`` uses seed ``seed + t``.
    """
    if trials < 1:
        raise ValueError("trials must be positive")
    if not 0 <= vtilde <= v + 1:
        raise ValueError("vtilde must lie in 0..v+1")
    target = default_target(n, m) if target_angles is None else np.asarray(target_angles)
    curve = epsilon_curve(v)
    bound = attack_success_bound(vtilde, v)
    if vtilde == 0:
        hits = [(0, 1)] * trials
    else:
        family = tuple(tuple(sorted((q[0], q[1]) for q in p)) for p in pattern_family)
        if not family:
            raise ValueError("empty pattern family")
        corrupting = tuple(corrupts_target(target, p) for p in family)
        kind = None if force_kind is None else ComputationKind(force_kind).value
        ctx = _SoundnessCtx(n, m, v, vtilde, family, corrupting, tuple(map(tuple, target.tolist())), kind)
        hits = parallel_map(partial(_soundness_trial, ctx), [seed + t for t in range(trials)], threads)
    k = sum(h for h, _ in hits)
    acc = sum(a for _, a in hits)
    p = k / trials
    return SoundnessResult(
        v, curve.vtilde_star, curve.epsilon, curve.curve, curve.bound_applies,
        vtilde=vtilde, bound=bound, mc_estimate=p, ci95=wilson_interval(k, trials),
        sigma=binomial_sigma(p, trials), trials=trials, accept_rate=acc / trials)


def detection_rate_mc(n: int, m: int, pattern: Iterable, trials: int, seed: int, *,
                      kind: ComputationKind | str | None = None) -> float:
    """Fraction of freshly drawn traps (fair kind coin unless ``kind``) whose readout ``pattern`` changes."""
    layout = build_layout(n, m)
    rng = np.random.default_rng(seed)
    pattern = [tuple(q) for q in pattern]
    hits = 0
    for _ in range(trials):
        if kind is None:
            k = ComputationKind.RTRAP if int(rng.integers(0, 2)) == 0 else ComputationKind.CTRAP
        else:
            k = ComputationKind(kind)
        trap = gen_trap(k, layout, rng)
        s = run_mbqc(layout, trap.angles, pattern, rng)
        pred = predict_trap_outcome(trap)
        hits += any(int(s[i - 1, m - 1]) != b for i, b in pred.items())
    return hits / trials


# -- blindness and twirl ----------------------------------------------------------------------

def blindness_operator(phi: int, neighbor_pad_sum: int = 0, *, pad_free: bool = False) -> np.ndarray:
    """Bob's averaged view of one qubit: (prepared state) x (announced angle label), 16 x 16."""
    thetas = [0] if pad_free else range(8)
    acc = np.zeros((16, 16), dtype=complex)
    count = 0
    for theta, r, rp in itertools.product(thetas, (0, 1), (0, 1)):
        prep = density(plus_state(theta + 4 * neighbor_pad_sum))
        label = np.zeros((8, 8))
        label[delta_angle(phi, theta, r, rp), delta_angle(phi, theta, r, rp)] = 1.0
        acc += np.kron(prep, label)
        count += 1
    return acc / count


def all_phi_pairs() -> list:
    return list(itertools.combinations(range(8), 2))


def blindness_check(phi_pairs: Sequence | None = None, neighbor_pad_sum: int = 0, *,
                    pad_free: bool = False) -> float:
    pairs = all_phi_pairs() if phi_pairs is None else phi_pairs
    ops = {}
    worst = 0.0
    for a, b in pairs:
        for phi in (a, b):
            if phi not in ops:
                ops[phi] = blindness_operator(phi, neighbor_pad_sum, pad_free=pad_free)
        worst = max(worst, trace_distance(ops[a], ops[b]))
    return worst


def twirl_check(seed: int, random_pairs: int = 50) -> dict:
    """Largest twirl residual over all single-qubit P != P' and random two-qubit pairs."""
    rng = np.random.default_rng(seed)
    single = 0.0
    for p, pp in itertools.permutations("IXYZ", 2):
        single = max(single, pauli_twirl_residual(1, p, pp, random_density(2, rng)))
    words = ["".join(w) for w in itertools.product("IXYZ", repeat=2)]
    double = 0.0
    for _ in range(random_pairs):
        a, b = rng.choice(len(words), size=2, replace=False)
        double = max(double, pauli_twirl_residual(2, words[a], words[b], random_density(4, rng)))
    return {"single_qubit_max": single, "two_qubit_max": double, "max": max(single, double)}


# -- completeness -------------------------------------------------------------------------------

def deterministic_target(n: int, m: int, seed: int) -> tuple[np.ndarray, tuple]:
    """A CNOT-network computation with a known non-trivial output.

    It is a C-trap with its compensating readout angles removed, so the output
    is the propagated Z frame.
    """
    trap = gen_ctrap(build_layout(n, m), np.random.default_rng(seed))
    phi = trap.angles.copy()
    phi[:, -1] = 0
    return phi, tuple(trap.coins["frame"])


@dataclass(frozen=True)
class _CompletenessCtx:
    protocol: int
    n: int
    m: int
    v: int


def _completeness_trial(ctx: _CompletenessCtx, seed: int) -> tuple[bool, bool]:
    phi, expected = deterministic_target(ctx.n, ctx.m, seed)
    run = run_protocol1 if ctx.protocol == 1 else run_protocol2
    verdict, _ = run(ctx.n, ctx.m, ctx.v, phi, Honest(), seed, log=False)
    return verdict.accepted, verdict.accepted and verdict.output == expected


# -- reports -----------------------------------------------------------------------------------

@dataclass
class Check:
    name: str
    passed: bool
    detail: str = ""


@dataclass
class ReportBundle:
    suite: str
    params: dict
    checks: list
    payload: dict
    seed: int | None = None

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_json(self) -> dict:
        return {"suite": self.suite, "params": self.params, "seed": self.seed,
                "passed": self.passed, "checks": [asdict(c) for c in self.checks],
                "payload": self.payload}

    @classmethod
    def from_json(cls, doc: dict) -> "ReportBundle":
        return cls(doc["suite"], doc["params"], [Check(**c) for c in doc["checks"]],
                   doc["payload"], doc.get("seed"))

    def __eq__(self, other):
        return isinstance(other, ReportBundle) and self.to_json() == other.to_json()


def _jsonable(x):
    if isinstance(x, Fraction):
        return str(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, (set, frozenset)):
        return sorted(x)
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(f"not JSON serialisable: {type(x).__name__}")


def render_report(bundle: ReportBundle, fmt: str = "json") -> str:
    if fmt == "json":
        return json.dumps(bundle.to_json(), sort_keys=True, indent=2, default=_jsonable) + "\n"
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["suite", "check", "passed", "detail"])
        for c in bundle.checks:
            w.writerow([bundle.suite, c.name, str(c.passed).lower(), c.detail])
        return buf.getvalue()
    raise ValueError(f"unknown report format {fmt!r}")


def emit_report(bundle: ReportBundle, fmt: str = "json", path: str | Path | None = None) -> str:
    text = render_report(bundle, fmt)
    if path is not None:
        Path(path).write_text(text)
    return text


def completeness_suite(dims: Sequence, runs: int, seed: int, *, vs: Sequence = (4,),
                       protocols: Sequence = (1, 2), threads: int | None = 1) -> ReportBundle:
    """Honest runs must all accept and return the target's known output."""
    checks, payload = [], {}
    base = seed
    for protocol, (n, m), v in itertools.product(protocols, dims, vs):
        ctx = _CompletenessCtx(protocol, n, m, v)
        seeds = [base + t for t in range(runs)]
        base += runs
        res = parallel_map(partial(_completeness_trial, ctx), seeds, threads)
        acc = sum(a for a, _ in res)
        agree = sum(b for _, b in res)
        key = f"p{protocol}_n{n}_m{m}_v{v}"
        payload[key] = {"runs": runs, "accepted": acc, "output_matches": agree}
        checks.append(Check(key, acc == runs and agree == runs, f"{acc}/{runs} accepted, {agree}/{runs} outputs match"))
    params = {"dims": [list(d) for d in dims], "runs": runs, "vs": list(vs), "protocols": list(protocols)}
    return ReportBundle("completeness", params, checks, payload, seed)


def correctness_tv(n: int, m: int, v: int, samples: int, seed: int, target_angles=None) -> float:
    """TV distance between accepted Protocol 1 outputs and un-blinded samples of the same target."""
    target = default_target(n, m) if target_angles is None else np.asarray(target_angles)
    layout = build_layout(n, m)
    rng = np.random.default_rng(seed + samples)
    prot = np.zeros(1 << n)
    ref = np.zeros(1 << n)
    weights = 1 << np.arange(n - 1, -1, -1)
    for t in range(samples):
        verdict, _ = run_protocol1(n, m, v, target, Honest(), seed + t, log=False)
        prot[int(np.dot(verdict.output, weights))] += 1
        s = run_mbqc(layout, target, rng=rng)
        ref[int(np.dot(s[:, -1], weights))] += 1
    return total_variation(prot / samples, ref / samples)
