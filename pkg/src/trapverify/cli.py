"""Command-line entry point: ``trapverify {trap-gen,run-protocol,analyze} ...``.

Exit codes: 0 all checks passed, 1 a check failed, 2 usage or configuration error.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np

from .experiments import (
    Check,
    ReportBundle,
    blindness_check,
    default_target,
    default_threads,
    emit_report,
    epsilon_curve,
    parallel_map,
    soundness_mc,
    twirl_check,
)
from .geometry import DimensionError, angles_from_json, build_layout, pattern_to_json
from .protocol import (
    Honest,
    OutcomeFlip,
    PreparationAborted,
    ZFlip,
    overhead_counters,
    run_protocol1,
    run_protocol2,
)
from .traps import predict_trap_outcome, gen_ctrap, gen_rtrap

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2

DEFAULTS = {
    "kind": "r",
    "protocol": 1,
    "behavior": "honest",
    "format": "json",
    "threads": None,
    "w": 3,
    "rows": 4,
    "row": 2,
    "vtilde": [1, 4, 7],
    "neighbor_pad_sum": 0,
}


class UsageError(Exception):
    pass


# -- config handling -------------------------------------------------------------------

def _merge(args: argparse.Namespace) -> dict:
    cfg: dict = {}
    if getattr(args, "config", None):
        try:
            cfg = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from None
        if not isinstance(cfg, dict):
            raise UsageError("config file must hold a JSON object")
        cfg = {k.replace("-", "_"): v for k, v in cfg.items()}
    for key, val in vars(args).items():
        if val is not None and key not in ("config", "func"):
            cfg[key] = val
    for key, val in DEFAULTS.items():
        cfg.setdefault(key, val)
    return cfg


def _need(cfg: dict, *keys: str) -> None:
    missing = [k for k in keys if cfg.get(k) is None]
    if missing:
        raise UsageError("missing required option(s): " + ", ".join("--" + k.replace("_", "-") for k in missing))


def _int(cfg: dict, key: str) -> int:
    try:
        return int(cfg[key])
    except (TypeError, ValueError):
        raise UsageError(f"--{key} must be an integer") from None


def _layout(cfg: dict):
    _need(cfg, "n", "m")
    try:
        return build_layout(_int(cfg, "n"), _int(cfg, "m"))
    except DimensionError as exc:
        raise UsageError(str(exc)) from None


def _seed(cfg: dict) -> int:
    if cfg.get("seed") is None:
        raise UsageError("--seed is required for stochastic commands")
    return _int(cfg, "seed")


def _write(text: str, out) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _finish(bundle: ReportBundle, cfg: dict) -> int:
    text = emit_report(bundle, cfg["format"], cfg.get("out"))
    if not cfg.get("out"):
        sys.stdout.write(text)
    return EXIT_OK if bundle.passed else EXIT_FAIL


# -- trap-gen ----------------------------------------------------------------------------------

def cmd_trap_gen(cfg: dict) -> int:
    layout = _layout(cfg)
    if cfg["kind"] not in ("r", "c"):
        raise UsageError("--kind must be r or c")
    seed = _seed(cfg)
    gen = gen_rtrap if cfg["kind"] == "r" else gen_ctrap
    trap = gen(layout, np.random.default_rng(seed))
    doc = {"seed": seed, "trap": trap.to_json()}
    code = EXIT_OK
    if cfg.get("verify"):
        from .engine import run_mbqc

        pred = predict_trap_outcome(trap)
        s = run_mbqc(layout, trap.angles, rng=np.random.default_rng(seed))
        ok = all(int(s[i - 1, -1]) == b for i, b in pred.items())
        doc["verify"] = {"predicted": [pred[i] for i in sorted(pred)],
                         "simulated": s[:, -1].tolist(), "deterministic": ok}
        code = EXIT_OK if ok else EXIT_FAIL
    _write(json.dumps(doc, sort_keys=True, indent=2) + "\n", cfg.get("out"))
    return code


# -- run-protocol -----------------------------------------------------------------------------

def _load_pattern(path, v: int) -> dict:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read pattern file {path}: {exc}") from None
    if isinstance(doc, list):
        return {k: [tuple(q) for q in doc] for k in range(1, v + 2)}
    if isinstance(doc, dict):
        return {int(k): [tuple(q) for q in val] for k, val in doc.items()}
    raise UsageError("pattern file must be a list of [i, j] or a map k -> list of [i, j]")


def _behavior(cfg: dict, v: int):
    name = cfg["behavior"]
    if name == "honest":
        return Honest()
    if name in ("zflip", "outcomeflip"):
        if not cfg.get("pattern"):
            raise UsageError(f"--behavior {name} needs --pattern")
        pat = _load_pattern(cfg["pattern"], v)
        return ZFlip(pat) if name == "zflip" else OutcomeFlip(pat)
    raise UsageError("--behavior must be honest, zflip or outcomeflip")


def _protocol_job(job):
    protocol, n, m, v, target, prover, seed, log, force_kind = job
    run = run_protocol1 if protocol == 1 else run_protocol2
    try:
        verdict, t = run(n, m, v, np.asarray(target), prover, seed, log=log, force_kind=force_kind)
    except PreparationAborted as exc:
        return {"seed": seed, "verdict": {"result": "abort", "reason": str(exc)}}, None
    doc = t.to_json(verdict, include_messages=log)
    return doc, overhead_counters(t)


def cmd_run_protocol(cfg: dict) -> int:
    layout = _layout(cfg)
    n, m = layout.n, layout.m
    _need(cfg, "v")
    cfg.setdefault("trials", 1)
    v, trials, protocol = _int(cfg, "v"), _int(cfg, "trials"), _int(cfg, "protocol")
    if protocol not in (1, 2):
        raise UsageError("--protocol must be 1 or 2")
    if v < 0 or trials < 1:
        raise UsageError("--v must be >= 0 and --trials >= 1")
    prover = _behavior(cfg, v)
    if protocol == 2 and isinstance(prover, OutcomeFlip):
        raise UsageError("outcomeflip applies to protocol 1 only")
    seed = _seed(cfg)
    if cfg.get("target"):
        try:
            tl, target = angles_from_json(Path(cfg["target"]).read_text())
        except (OSError, ValueError, KeyError) as exc:
            raise UsageError(f"cannot read target {cfg['target']}: {exc}") from None
        if tl.shape != layout.shape:
            raise UsageError("target grid does not match --n/--m")
    else:
        target = default_target(n, m)
    force = {"r": "rtrap", "c": "ctrap"}.get(cfg.get("force_kind"), None)
    log = not cfg.get("no_log", False)
    jobs = [(protocol, n, m, v, target.tolist(), prover, seed + t, log, force) for t in range(trials)]
    results = parallel_map(_protocol_job, jobs, cfg["threads"])
    tallies = {"accept": 0, "reject": 0, "abort": 0}
    counters_ok = True
    for doc, over in results:
        tallies[doc["verdict"]["result"]] += 1
        if over is not None:
            counters_ok &= over["matches_expected"] and over.get("recount_matches", True)
    checks = [Check("counters", counters_ok, "counters equal the closed-form overheads in every run")]
    if isinstance(prover, Honest):
        checks.append(Check("honest_accepts", tallies["accept"] == trials, f"{tallies['accept']}/{trials} accepted"))
    first = results[0][1]
    payload = {"tallies": tallies, "overheads": first, "runs": [d for d, _ in results]}
    params = {"protocol": protocol, "n": n, "m": m, "v": v, "behavior": cfg["behavior"],
              "trials": trials, "logged": log, "force_kind": force}
    return _finish(ReportBundle("run-protocol", params, checks, payload, seed), cfg)


# -- analyze ------------------------------------------------------------------------------------

def _table1(cfg: dict) -> int:
    from .frame import regenerate_table1, table1_csv_rows

    rows = regenerate_table1()
    cells = 3 * len(rows)
    agree = 3 * sum(r.oracle_agrees for r in rows)
    diffs = [{"flipped": r.label, "cases": list(r.reference_diffs),
              "computed": list(r.cells), "reference": list(r.reference_cells)}
             for r in rows if r.reference_diffs]
    ref_agree = cells - sum(len(d["cases"]) for d in diffs)
    if cfg["format"] == "csv":
        buf = io.StringIO()
        csv.writer(buf, lineterminator="\n").writerows(table1_csv_rows(rows))
        _write(buf.getvalue(), cfg.get("out"))
        sys.stderr.write(f"symbolic=oracle {agree}/{cells}; reference agreement {ref_agree}/{cells}\n")
        return EXIT_OK if agree == cells else EXIT_FAIL
    checks = [Check("symbolic_equals_oracle", agree == cells, f"{agree}/{cells}")]
    payload = {"oracle_agreement": agree, "cells": cells, "reference_agreement": ref_agree,
               "reference_diffs": diffs,
               "rows": [{"flipped": r.label, "RZ": r.cells[0], "RX": r.cells[1], "H": r.cells[2]} for r in rows]}
    return _finish(ReportBundle("table1", {}, checks, payload), cfg)


def _find_undetectable(cfg: dict) -> int:
    from .frame import expected_undetectable, find_undetectable, literal_unions, type1_reading_comparison

    w, n, row = _int(cfg, "w"), _int(cfg, "rows"), _int(cfg, "row")
    if not 1 <= w <= 3:
        raise UsageError("--w must be 1, 2 or 3")
    try:
        build_layout(n, 4 * w + 1)
    except DimensionError as exc:
        raise UsageError(str(exc)) from None
    if not 1 <= row <= n:
        raise UsageError("--row must lie within --rows")
    found = find_undetectable(w, n=n, row=row)
    span = expected_undetectable(w, row)
    unions = literal_unions(w, row)
    checks = [Check("equals_pair_span", found == span,
                    f"{len(found)} found, {len(span)} symmetric differences of Type-I/Type-II pairs")]
    payload = {
        "patterns": sorted((pattern_to_json(p) for p in found), key=lambda p: (len(p), p)),
        "matches_literal_unions": found == unions,
        "type1_readings": type1_reading_comparison(w, n=n, row=row),
    }
    return _finish(ReportBundle("find-undetectable", {"w": w, "rows": n, "row": row}, checks, payload), cfg)


def _soundness(cfg: dict) -> int:
    from .frame import find_undetectable

    cfg.setdefault("v", 7)
    cfg.setdefault("trials", 10_000)
    cfg.setdefault("n", 2)
    cfg.setdefault("m", 5)
    v, trials = _int(cfg, "v"), _int(cfg, "trials")
    layout = _layout(cfg)
    seed = _seed(cfg)
    vt = cfg["vtilde"]
    vtildes = [int(x) for x in (vt if isinstance(vt, list) else [vt])]
    family = set()
    for row in range(1, layout.n + 1):
        family |= find_undetectable(layout.w, n=layout.n, row=row)
    family = sorted(family, key=lambda p: pattern_to_json(p))
    force = {"r": "rtrap", "c": "ctrap"}.get(cfg.get("force_kind"), None)
    checks, results = [], []
    for t in vtildes:
        if not 0 <= t <= v + 1:
            raise UsageError("--vtilde values must lie in 0..v+1")
        r = soundness_mc(v, t, family, trials, seed + 1_000_003 * t, n=layout.n, m=layout.m,
                         force_kind=force, threads=cfg["threads"])
        results.append(r.to_json())
        if force is None:
            checks.append(Check(f"vtilde={t}", bool(r.within_bound),
                                f"estimate {r.mc_estimate:.5f} <= bound {float(r.bound):.5f} + 3 sigma {3 * r.sigma:.5f}"))
    params = {"v": v, "trials": trials, "n": layout.n, "m": layout.m, "vtilde": vtildes,
              "family": [pattern_to_json(p) for p in family], "force_kind": force}
    return _finish(ReportBundle("soundness", params, checks, {"results": results}, seed), cfg)


def _blindness(cfg: dict) -> int:
    nps = _int(cfg, "neighbor_pad_sum") & 1
    dist = blindness_check(None, nps)
    control = blindness_check([(0, 2)], nps, pad_free=True)
    checks = [Check("max_trace_distance", dist < 1e-12, f"{dist:.3e} over all 28 angle pairs"),
              Check("pad_free_control_distinguishes", control > 0.1, f"{control:.3f}")]
    payload = {"max_trace_distance": dist, "pad_free_distance_0_vs_2": control,
               "protocol2_alice_bits": "structural: Alice sends no classical data"}
    return _finish(ReportBundle("blindness", {"neighbor_pad_sum": nps}, checks, payload), cfg)


def _twirl(cfg: dict) -> int:
    seed = _seed(cfg)
    res = twirl_check(seed)
    checks = [Check("residual", res["max"] < 1e-12, f"{res['max']:.3e}")]
    return _finish(ReportBundle("twirl", {}, checks, res, seed), cfg)


def _epsilon(cfg: dict) -> int:
    _need(cfg, "v")
    v = _int(cfg, "v")
    if v < 0:
        raise UsageError("--v must be >= 0")
    r = epsilon_curve(v)
    const = Fraction(7 ** 7, 8 ** 6)
    checks = []
    if r.bound_applies:
        checks.append(Check("epsilon_times_v_plus_1", r.epsilon * (v + 1) == const,
                            f"{float(r.epsilon * (v + 1)):.6f} vs 7^7/8^6"))
    payload = r.to_json()
    payload["curve"] = {str(k): str(f) for k, f in r.curve.items()}
    if not r.bound_applies:
        payload["note"] = "v < 7: the maximiser is v+1 and the closed form does not apply"
    return _finish(ReportBundle("epsilon", {"v": v}, checks, payload), cfg)


ANALYSES = {
    "table1": _table1,
    "find-undetectable": _find_undetectable,
    "soundness": _soundness,
    "blindness": _blindness,
    "twirl": _twirl,
    "epsilon": _epsilon,
}


def cmd_analyze(cfg: dict) -> int:
    return ANALYSES[cfg["analysis"]](cfg)


# -- parser ---------------------------------------------------------------------------------------

def _common(p: argparse.ArgumentParser, *, seed=True, dims=True) -> None:
    p.add_argument("--config", help="JSON file with option values; flags override it")
    if dims:
        p.add_argument("--n", type=int, help="rows (even, >= 2)")
        p.add_argument("--m", type=int, help="columns (m = 1 mod 4, >= 5)")
    if seed:
        p.add_argument("--seed", type=int, help="base seed; run t uses seed + t")
    p.add_argument("--out", help="output file (default: stdout)")
    p.add_argument("--format", choices=["json", "csv"], help="report format (default json)")
    p.add_argument("--threads", type=int, help="worker processes (default: available CPUs)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="trapverify", description="Trap-based verification of blind MBQC.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("trap-gen", help="generate an R-trap or C-trap angle grid")
    _common(p)
    p.add_argument("--kind", choices=["r", "c"], help="trap kind (default r)")
    p.add_argument("--verify", action="store_true", default=None, help="check the honest outcome first")
    p.set_defaults(func=cmd_trap_gen)

    p = sub.add_parser("run-protocol", help="run protocol 1 or 2 for a number of seeds")
    _common(p)
    p.add_argument("--protocol", type=int, choices=[1, 2])
    p.add_argument("--v", type=int, help="number of traps")
    p.add_argument("--behavior", choices=["honest", "zflip", "outcomeflip"])
    p.add_argument("--pattern", help="JSON flip pattern: list of [i, j] or map k -> list")
    p.add_argument("--target", help="JSON angle grid {n, m, angles} for the target")
    p.add_argument("--trials", type=int)
    p.add_argument("--force-kind", choices=["r", "c"], help="use only one trap kind")
    p.add_argument("--no-log", action="store_true", default=None, help="omit message logs")
    p.set_defaults(func=cmd_run_protocol)

    p = sub.add_parser("analyze", help="analysis suites")
    asub = p.add_subparsers(dest="analysis", required=True)
    a = asub.add_parser("table1", help="regenerate the single-tape by-product table")
    _common(a, seed=False, dims=False)
    a = asub.add_parser("find-undetectable", help="exhaustive single-row search")
    _common(a, seed=False, dims=False)
    a.add_argument("--w", type=int, help="tapes (1..3, default 3)")
    a.add_argument("--rows", type=int, help="grid rows (default 4)")
    a.add_argument("--row", type=int, help="row to scan (default 2)")
    a = asub.add_parser("soundness", help="Monte Carlo soundness against the bound")
    _common(a)
    a.add_argument("--v", type=int)
    a.add_argument("--vtilde", type=int, nargs="+", help="attacked computations (default 1 4 7)")
    a.add_argument("--trials", type=int)
    a.add_argument("--force-kind", choices=["r", "c"])
    a = asub.add_parser("blindness", help="trace distance of Bob's averaged view")
    _common(a, seed=False, dims=False)
    a.add_argument("--neighbor-pad-sum", type=int, choices=[0, 1])
    a = asub.add_parser("twirl", help="Pauli twirl residuals")
    _common(a, dims=False)
    a = asub.add_parser("epsilon", help="exact soundness curve")
    _common(a, seed=False, dims=False)
    a.add_argument("--v", type=int)
    for a in asub.choices.values():
        a.set_defaults(func=cmd_analyze)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _merge(args)
        cfg["threads"] = default_threads() if cfg.get("threads") is None else int(cfg["threads"])
        return args.func(cfg)
    except UsageError as exc:
        sys.stderr.write(f"trapverify: error: {exc}\n")
        return EXIT_USAGE
    except OSError as exc:
        sys.stderr.write(f"trapverify: error: {exc}\n")
        return EXIT_USAGE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
