# src/main.py
"""
sofa command line.

    python -m src.main obfuscate --scheme basic --rules standard50 --out fw.json
    python -m src.main filter --firewall fw.json --packets packets.jsonl --out decisions.jsonl
    python -m src.main verify --rules standard50 --firewall fw.json --count 10000
    python -m src.main leakage --M 64 --N 64 --w1 8 --w2 8 --n 32 --trials 100000
    python -m src.main bench --schemes basic,dnc,blocking --rules standard50 --out bench.csv

Exit codes: 0 ok, 1 other failure, 2 input error, 3 verification failure, 4 integrity error.
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional

from .analysis import LeakageQuery, leakage_monte_carlo, leakage_probability
from .bench import bench_bits, bench_primitives, bench_rule_counts, bench_schemes
from .config import get_settings
from .errors import InputError, SofaError, VerificationError
from .ges_core import RandomSource
from .loaders import decision_record, read_packets, write_decisions
from .matcher import filter_packets
from .obfuscator import INNER_SCHEMES, SCHEMES
from .pipeline import ObfuscateOptions, obfuscate_acl, verify
from .render import render_frame, render_verify_report
from .rules import MODES
from .rules_registry import resolve_pack
from .serialize import load_firewall, save_firewall

logger = logging.getLogger("sofa")


def _csv_list(text: str) -> List[str]:
    return [t.strip() for t in text.split(",") if t.strip()]


def _int_list(text: str) -> List[int]:
    try:
        return [int(t) for t in _csv_list(text)]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got '{text}'") from None


def _add_scheme_flags(p: argparse.ArgumentParser, rules_required: bool = True) -> None:
    s = get_settings()
    p.add_argument("--rules", required=rules_required, default=None if rules_required else "standard50",
                   help="ACL pack name under data/acls, pack directory, or .acl file")
    p.add_argument("--backend", choices=["transparent", "clt"], default=s.backend)
    p.add_argument("--mode", choices=sorted(MODES), default=None, help="bit view (default: the pack's)")
    p.add_argument("--layout", default=None, help="blocking layout name or header/width[@shift],... (default: the pack's)")
    p.add_argument("--M", type=int, default=None, help="equal-ratio units for basic (default 2n)")
    p.add_argument("--N", type=int, default=None, help="unequal-ratio units for basic (default 2n)")
    p.add_argument("--parts", type=int, default=4, help="dnc part count")
    p.add_argument("--inner", choices=INNER_SCHEMES, default="naive", help="dnc inner scheme")
    p.add_argument("--allow-remainder", action="store_true", help="dnc: last part takes the remainder bits")
    p.add_argument("--cap", type=int, default=None, help=f"blocking pairs-per-rule cap (default {s.blocking_cap})")
    p.add_argument("--lambda", dest="lam", type=int, default=s.lam)
    p.add_argument("--seed", type=int, default=s.seed)
    p.add_argument("--workers", type=int, default=s.workers)
    p.add_argument("--profile", type=Path, default=None, help="CLT parameter profile (YAML)")
    p.add_argument("--nu", type=int, default=None)
    p.add_argument("--rho", type=int, default=None, help="CLT noise bits")
    p.add_argument("--alpha", type=int, default=None, help="CLT plaintext prime bits")
    p.add_argument("--eta", type=int, default=None, help="CLT secret prime bits (overrides the schedule)")
    p.add_argument("--t", type=int, default=None, help="CLT prime count (overrides the schedule)")


def _options(args, scheme: str):
    pack = resolve_pack(args.rules)
    ges_options = {}
    if args.backend == "clt":
        ges_options = {k: v for k, v in {
            "profile": args.profile, "nu": args.nu, "rho_noise": args.rho, "alpha_bits": args.alpha,
            "eta": args.eta, "t": args.t,
        }.items() if v is not None}
    opts = ObfuscateOptions(
        scheme=scheme, backend=args.backend, lam=args.lam, seed=args.seed,
        mode=args.mode or pack.mode, layout=args.layout or pack.layout,
        M=args.M, N=args.N, parts=args.parts, inner=args.inner, allow_remainder=args.allow_remainder,
        cap=args.cap, workers=args.workers, default_action=pack.default_action, ges_options=ges_options,
    )
    return pack, opts


# ---- commands

def cmd_obfuscate(args) -> int:
    pack, opts = _options(args, args.scheme)
    print(f"seed: {opts.seed}")
    result = obfuscate_acl(pack.rules, opts)
    size = save_firewall(result.firewall, args.out)
    summary = result.summary()
    summary["file_bytes"] = size
    for inst in result.firewall.instances:
        if inst.params.backend_id == "clt":
            summary.setdefault("calibration_margin", []).append(inst.pzt.payload.calibration_margin)
    print(json.dumps(summary, sort_keys=True))
    print(f"Wrote {args.out}")
    return 0


def cmd_filter(args) -> int:
    fw = load_firewall(args.firewall)
    lines = read_packets(args.packets)
    good = [ln for ln in lines if ln.packet is not None]
    decisions = iter(filter_packets(fw, [ln.packet for ln in good], workers=args.workers))
    records = []
    for ln in lines:
        if ln.packet is None:
            print(f"packet {ln.index}: {ln.error}", file=sys.stderr)
            records.append(decision_record(ln.index, None, error=ln.error))
        else:
            records.append(decision_record(ln.index, next(decisions), args.hide_rule_index))
    if args.out:
        write_decisions(records, args.out)
        print(f"Wrote {len(records)} decisions to {args.out}")
    else:
        for r in records:
            print(json.dumps(r, sort_keys=True))
    return 0


def cmd_verify(args) -> int:
    pack = resolve_pack(args.rules)
    fw = load_firewall(args.firewall)
    packets = None
    if args.packets:
        lines = read_packets(args.packets)
        bad = [ln for ln in lines if ln.packet is None]
        if bad:
            raise InputError(f"packet {bad[0].index}: {bad[0].error}")
        packets = [ln.packet for ln in lines]
    print(f"seed: {args.seed}")
    result = verify(pack.rules, fw, packets=packets, count=args.count, exhaustive_bits=args.exhaustive_bits,
                    mode=pack.mode, seed=args.seed, workers=args.workers, default_action=pack.default_action)
    print(json.dumps({
        "scheme": result.scheme, "total": result.total, "agree": result.agree,
        "disagreements": len(result.disagreements), "calibration_margin": result.margins,
    }, sort_keys=True))
    for d in result.disagreements[:10]:
        print(f"  packet {d.index}: oracle {d.expected.action.kind}/{d.expected.rule} "
              f"obfuscated {d.observed.action.kind}/{d.observed.rule}", file=sys.stderr)
    if args.report:
        Path(args.report).write_text(render_verify_report(result, fw), encoding="utf-8")
        print(f"Wrote {args.report}")
    if not result.passed:
        raise VerificationError(f"{len(result.disagreements)} of {result.total} decisions disagree with the oracle")
    return 0


def cmd_leakage(args) -> int:
    q = LeakageQuery(M=args.M, N=args.N, w1=args.w1, w2=args.w2, n=args.n)
    out = {"M": q.M, "N": q.N, "w1": q.w1, "w2": q.w2, "n": q.n, "probability": leakage_probability(q)}
    if args.trials is not None:
        mc = leakage_monte_carlo(q, args.trials, RandomSource(args.seed))
        out.update(estimate=mc.estimate, stderr=mc.stderr, trials=mc.trials)
    print(json.dumps(out, sort_keys=True))
    return 0


def cmd_bench(args) -> int:
    ges_options = {"profile": args.profile} if args.backend == "clt" and args.profile else {}
    if args.primitives:
        kappas = args.kappas or [5, 9, 33]
        df = bench_primitives(kappas, args.backend, args.lam, args.seed, args.repeat, ges_options)
    elif args.bits:
        df = bench_bits(args.bits, args.backend, args.lam, args.seed, args.repeat, ges_options)
    else:
        pack, base = _options(args, "basic")
        schemes = args.schemes
        bad = [s for s in schemes if s not in SCHEMES]
        if bad:
            raise InputError(f"unknown scheme(s) {', '.join(bad)}")
        if args.rule_counts:
            df = bench_rule_counts(pack.rules, schemes, args.rule_counts, base, args.repeat)
        else:
            df = bench_schemes(pack.rules, schemes, base, args.packets, args.repeat)
    if args.out:
        df.to_csv(args.out, index=False)
        print(f"Wrote {args.out}")
    print(render_frame(df), end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sofa", description="Obfuscated firewall toolkit")
    parser.add_argument("-v", "--verbose", action="store_true", help="INFO logging (DEBUG with SOFA_LOG_LEVEL)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("obfuscate", help="compile an ACL into an obfuscated firewall file")
    p.add_argument("--scheme", choices=SCHEMES, required=True)
    p.add_argument("--out", required=True)
    _add_scheme_flags(p)
    p.set_defaults(func=cmd_obfuscate)

    p = sub.add_parser("filter", help="filter packets with an obfuscated firewall")
    p.add_argument("--firewall", required=True)
    p.add_argument("--packets", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--hide-rule-index", action="store_true")
    p.add_argument("--workers", type=int, default=get_settings().workers)
    p.set_defaults(func=cmd_filter)

    p = sub.add_parser("verify", help="compare obfuscated decisions with the plaintext ACL")
    p.add_argument("--rules", required=True)
    p.add_argument("--firewall", required=True)
    group = p.add_mutually_exclusive_group()
    group.add_argument("--packets", default=None)
    group.add_argument("--exhaustive-bits", type=int, default=None)
    p.add_argument("--count", type=int, default=1000, help="random packets when neither --packets nor --exhaustive-bits")
    p.add_argument("--seed", type=int, default=get_settings().seed)
    p.add_argument("--workers", type=int, default=get_settings().workers)
    p.add_argument("--report", default=None, help="write a markdown report here")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("leakage", help="basic-scheme index collision probability")
    for name in ("M", "N", "w1", "w2", "n"):
        p.add_argument(f"--{name}", type=int, required=True)
    p.add_argument("--trials", type=int, default=None)
    p.add_argument("--seed", type=int, default=get_settings().seed)
    p.set_defaults(func=cmd_leakage)

    p = sub.add_parser("bench", help="timings and op counts (CSV)")
    p.add_argument("--schemes", type=_csv_list, default=["basic", "dnc", "blocking"])
    p.add_argument("--packets", type=int, default=100)
    p.add_argument("--repeat", type=int, default=1)
    p.add_argument("--out", default=None)
    p.add_argument("--primitives", action="store_true", help="time single GES procedures instead")
    p.add_argument("--kappas", type=_int_list, default=None)
    p.add_argument("--bits", type=_int_list, default=None, help="time inst_gen plus one naive rule per bit width")
    p.add_argument("--rule-counts", type=_int_list, default=None)
    _add_scheme_flags(p, rules_required=False)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = "INFO" if args.verbose and get_settings().log_level == "WARNING" else get_settings().log_level
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except SofaError as exc:
        print(f"Error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    raise SystemExit(main())
