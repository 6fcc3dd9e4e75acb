"""
Acceptance checks for the obfuscated firewall toolkit.

Usage:
    python3 -m eval.run_eval                     # run every case in eval/cases
    python3 -m eval.run_eval --case foo          # run just foo.json
    python3 -m eval.run_eval --verbose           # echo extra diagnostics

Case kinds:
    verify    obfuscate an ACL pack and compare every decision with the oracle
    counts    encode/re_rand counts against the closed forms on random bit rules
    leakage   closed form against Monte Carlo over a parameter grid
    timing    filter (per packet) or obfuscation time ordering across schemes (same machine, same seed)
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from pathlib import Path
from typing import Callable, Dict, List, Tuple

ROOT = Path(__file__).resolve().parents[1]
if str(ROOT) not in sys.path:
    sys.path.insert(0, str(ROOT))

from src import ges_core as ges  # noqa: E402
from src.analysis import LeakageQuery, count_report, leakage_monte_carlo, leakage_probability  # noqa: E402
from src.ges_core import RandomSource  # noqa: E402
from src.loaders import generate_packets  # noqa: E402
from src.matcher import filter_packet  # noqa: E402
from src.models import BasicSchemeConfig, BitRule, DENY, PERMIT  # noqa: E402
from src.obfuscator import obfuscate_basic, obfuscate_naive  # noqa: E402
from src.pipeline import ObfuscateOptions, obfuscate_acl, verify  # noqa: E402
from src.rules_registry import resolve_pack  # noqa: E402

CASES_DIR = Path(__file__).resolve().parent / "cases"

Result = Tuple[List[str], Dict[str, object]]


def _load_case(path: Path) -> Dict[str, object]:
    with path.open() as f:
        data = json.load(f)
    data.setdefault("name", path.stem)
    return data


def _options(case: Dict[str, object], scheme: str, pack) -> ObfuscateOptions:
    return ObfuscateOptions(
        scheme=scheme,
        backend=case.get("backend", "transparent"),
        lam=case.get("lambda", 12),
        seed=case.get("seed", 1),
        mode=case.get("mode", pack.mode),
        layout=case.get("layout", pack.layout),
        M=case.get("M"),
        N=case.get("N"),
        parts=case.get("parts", 4),
        inner=case.get("inner", "naive"),
        default_action=pack.default_action,
    )


def _eval_verify(case: Dict[str, object]) -> Result:
    errors: List[str] = []
    info: Dict[str, object] = {"schemes": {}}
    pack = resolve_pack(case["pack"])
    rules = pack.rules[: case.get("rules", len(pack.rules))]
    expectations = case.get("expectations", {})
    for scheme in case.get("schemes", ["basic"]):
        opts = _options(case, scheme, pack)
        result = obfuscate_acl(rules, opts)
        vr = verify(rules, result.firewall, count=case.get("count", 1000), exhaustive_bits=case.get("exhaustive_bits"),
                    mode=opts.mode, seed=case.get("packet_seed", 7), default_action=pack.default_action)
        info["schemes"][scheme] = {
            "kappa": [i.params.kappa for i in result.firewall.instances], "agree": vr.agree, "total": vr.total,
            "margins": vr.margins, "obfuscate_s": round(result.elapsed, 3), "filter_s": round(vr.seconds, 3),
        }
        if vr.disagreements:
            errors.append(f"{scheme}: {len(vr.disagreements)} of {vr.total} decisions disagree with the oracle")
        want_kappa = (expectations.get("kappa") or {}).get(scheme)
        if want_kappa is not None and [i.params.kappa for i in result.firewall.instances][0] != want_kappa:
            errors.append(f"{scheme}: expected kappa {want_kappa}")
        min_margin = expectations.get("min_margin")
        if min_margin is not None:
            low = [m for m in vr.margins if m is None or m < min_margin]
            if low:
                errors.append(f"{scheme}: calibration margins {vr.margins} below {min_margin} bits")
    return errors, info


def _random_bit_rules(n: int, l: int, rng: RandomSource) -> List[BitRule]:
    rules = []
    for _ in range(l):
        w = rng.randbelow(n + 1)
        wild = frozenset(rng.sample(range(n), w))
        v = tuple(0 if i in wild else rng.randbits(1) for i in range(n))
        rules.append(BitRule(v, wild, DENY if rng.randbits(1) else PERMIT))
    return rules


def _eval_counts(case: Dict[str, object]) -> Result:
    errors: List[str] = []
    info: Dict[str, object] = {"grid": []}
    cheaper = {(c["n"], c["l"]) for c in case.get("basic_cheaper", [])}
    rng = RandomSource(case.get("seed", 1))
    for n in case.get("n", [8, 32]):
        for l in case.get("l", [1, 10, 50]):
            rules = _random_bit_rules(n, l, rng)
            M, N = case.get("M", 2 * n), case.get("N", 2 * n)
            with ges.counting() as c_naive:
                obfuscate_naive(rules, 12, "transparent", rng.spawn(n * 1000 + l), n=n)
            with ges.counting() as c_basic:
                obfuscate_basic(rules, BasicSchemeConfig(M, N), 12, "transparent", rng.spawn(n * 1000 + l + 1), n=n)
            naive = count_report(c_naive, "naive", n, l)
            basic = count_report(c_basic, "basic", n, l, M, N)
            info["grid"].append({"n": n, "l": l, "naive": naive.as_dict(), "basic": basic.as_dict()})
            for rep in (naive, basic):
                if not rep.matches:
                    errors.append(f"{rep.scheme} n={n} l={l}: measured {rep.measured_encode}/{rep.measured_re_rand}, "
                                  f"predicted {rep.predicted_encode}")
            if (n, l) in cheaper and not basic.measured_encode < naive.measured_encode:
                errors.append(f"n={n} l={l}: basic made {basic.measured_encode} encodes, naive {naive.measured_encode}")
    return errors, info


def _eval_leakage(case: Dict[str, object]) -> Result:
    errors: List[str] = []
    info: Dict[str, object] = {"cells": 0}
    trials = case.get("trials", 100_000)
    rng = RandomSource(case.get("seed", 1))
    for M in case["M"]:
        for N in case["N"]:
            for w1, w2 in case["w"]:
                q = LeakageQuery(M=M, N=N, w1=w1, w2=w2, n=case["n"])
                p = leakage_probability(q)
                mc = leakage_monte_carlo(q, trials, rng)
                info["cells"] += 1
                tol = 3 * max(mc.stderr, math.sqrt(p * (1 - p) / trials)) + 1e-9
                if abs(mc.estimate - p) > tol:
                    errors.append(f"M={M} N={N} w=({w1},{w2}): closed {p:.5f} vs MC {mc.estimate:.5f}±{mc.stderr:.5f}")
    for check in case.get("exact", []):
        q = LeakageQuery(**check["query"])
        got = leakage_probability(q)
        if abs(got - check["expected"]) > 1e-9:
            errors.append(f"{check['query']}: {got} != {check['expected']}")
    return errors, info


def _eval_timing(case: Dict[str, object]) -> Result:
    errors: List[str] = []
    info: Dict[str, object] = {}
    pack = resolve_pack(case["pack"])
    rules = pack.rules[: case.get("rules", len(pack.rules))]
    phase = case.get("phase", "filter")
    timings: Dict[str, float] = {}
    if phase == "obfuscate":
        # best of `repeat` whole obfuscation runs
        for scheme in case["schemes"]:
            opts = _options(case, scheme, pack)
            timings[scheme] = min(obfuscate_acl(rules, opts).elapsed for _ in range(case.get("repeat", 1)))
        info["obfuscate_s"] = {k: round(v, 4) for k, v in timings.items()}
    else:
        packets = generate_packets(rules, case.get("count", 20), RandomSource(case.get("packet_seed", 7)), hit_ratio=0.0)
        for scheme in case["schemes"]:
            fw = obfuscate_acl(rules, _options(case, scheme, pack)).firewall
            t0 = time.perf_counter()
            for p in packets:
                filter_packet(fw, p)
            timings[scheme] = (time.perf_counter() - t0) / len(packets)
        info["per_packet_s"] = {k: round(v, 6) for k, v in timings.items()}
    order = case["schemes"]
    ratio = case.get("min_ratio", 2.0)
    for fast, slow in zip(order, order[1:]):
        if timings[slow] < ratio * timings[fast]:
            errors.append(f"{slow} ({timings[slow]:.5f}s) not {ratio}x slower than {fast} ({timings[fast]:.5f}s)")
    return errors, info


EVALUATORS: Dict[str, Callable[[Dict[str, object]], Result]] = {
    "verify": _eval_verify,
    "counts": _eval_counts,
    "leakage": _eval_leakage,
    "timing": _eval_timing,
}


def _evaluate_case(case: Dict[str, object]) -> Result:
    kind = case.get("kind", "verify")
    if kind not in EVALUATORS:
        return [f"unknown case kind '{kind}'"], {}
    try:
        return EVALUATORS[kind](case)
    except Exception as exc:  # pragma: no cover - surfaced as a case failure
        return [f"runtime error: {type(exc).__name__}: {exc}"], {}


def _print_debug(info: Dict[str, object]) -> None:
    if not info:
        return
    for key, value in info.items():
        if isinstance(value, dict):
            for sub, detail in value.items():
                print(f"    {key}.{sub}: {detail}")
        elif isinstance(value, list):
            for item in value[:6]:
                print(f"    {key}: {item}")
            if len(value) > 6:
                print(f"    {key}: … (+{len(value) - 6} more)")
        else:
            print(f"    {key}: {value}")


def main() -> int:
    parser = argparse.ArgumentParser(description="Run acceptance cases.")
    parser.add_argument("--case", metavar="NAME", help="Run a single case (matches <NAME>.json inside eval/cases).")
    parser.add_argument("--verbose", action="store_true", help="Print extra diagnostics (always shown on failures).")
    args = parser.parse_args()

    if not CASES_DIR.exists():
        print("No cases found. Add JSON files under eval/cases.", file=sys.stderr)
        return 1

    case_paths = sorted(CASES_DIR.glob("*.json"))
    if args.case:
        matches = [p for p in case_paths if p.stem == args.case]
        if not matches:
            print(f"Case '{args.case}' not found.", file=sys.stderr)
            return 1
        case_paths = matches

    overall_errors = 0
    for path in case_paths:
        case = _load_case(path)
        t0 = time.perf_counter()
        errors, info = _evaluate_case(case)
        took = time.perf_counter() - t0
        if errors:
            overall_errors += 1
            print(f"[FAIL] {case['name']} ({took:.1f}s)")
            for err in errors:
                print(f"  - {err}")
            _print_debug(info)
        else:
            print(f"[PASS] {case['name']} ({took:.1f}s)")
            if args.verbose:
                _print_debug(info)

    return 1 if overall_errors else 0


if __name__ == "__main__":  # pragma: no cover - CLI entry
    raise SystemExit(main())
