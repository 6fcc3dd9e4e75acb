# src/pipeline.py
"""
Orchestration shared by the CLI, the API and the eval harness:
ACL -> compiled rules -> obfuscated firewall (with op counts), and the
differential verification of an obfuscated firewall against its ACL.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

from . import ges_core as ges
from .analysis import CountReport, count_report, stored_encodings
from .errors import MismatchError, SchemeConfigError
from .ges_core import RandomSource
from .loaders import generate_packets
from .matcher import filter_packets, oracle_filter
from .models import DENY, AclRule, Action, BasicSchemeConfig, BitRule, BlockRuleSpec, MatchDecision, ObfuscatedFirewall, PacketHeader
from .obfuscator import (
    SCHEMES, obfuscate_basic, obfuscate_blocking, obfuscate_dnc, obfuscate_naive, part_widths,
)
from .rules import MODES, compile_bits, compile_blocks, header_from_bits, header_sets, packet_bits, packet_tuple, parse_layout

logger = logging.getLogger(__name__)

MAX_EXHAUSTIVE_BITS = 20


@dataclass
class ObfuscateOptions:
    scheme: str = "basic"
    backend: str = "transparent"
    lam: int = 12
    seed: int = 1
    mode: str = "standard"
    layout: str = "octets"
    M: Optional[int] = None
    N: Optional[int] = None
    parts: int = 4
    inner: str = "naive"
    allow_remainder: bool = False
    cap: Optional[int] = None
    workers: int = 1
    default_action: Action = DENY
    ges_options: Dict[str, Any] = field(default_factory=dict)

    def basic_config(self, width: int) -> Optional[BasicSchemeConfig]:
        if self.M is None and self.N is None:
            return None
        fallback = BasicSchemeConfig.for_width(width)
        return BasicSchemeConfig(self.M if self.M is not None else fallback.M, self.N if self.N is not None else fallback.N)


@dataclass
class ObfuscationResult:
    firewall: ObfuscatedFirewall
    counts: Dict[str, int]
    report: CountReport
    elapsed: float

    def summary(self) -> Dict[str, Any]:
        fw = self.firewall
        return {
            "scheme": fw.scheme,
            "rules": len(fw.rules),
            "kappa": [inst.params.kappa for inst in fw.instances],
            "encode": self.counts["encode"],
            "re_rand": self.counts["re_rand"],
            "encode_predicted": self.report.predicted_encode,
            "counts_match": self.report.matches,
            "stored_encodings": stored_encodings(fw),
            "seconds": round(self.elapsed, 4),
        }


# ---- obfuscation

def _bit_width(opts: ObfuscateOptions) -> int:
    return sum(w for _, w in MODES[opts.mode])


def _run_naive(rules: Sequence[AclRule], opts: ObfuscateOptions, rng: RandomSource) -> ObfuscatedFirewall:
    return obfuscate_naive(compile_bits(rules, opts.mode), opts.lam, opts.backend, rng,
                           default_action=opts.default_action, mode=opts.mode, n=_bit_width(opts),
                           workers=opts.workers, ges_options=opts.ges_options)


def _run_basic(rules: Sequence[AclRule], opts: ObfuscateOptions, rng: RandomSource) -> ObfuscatedFirewall:
    width = _bit_width(opts)
    return obfuscate_basic(compile_bits(rules, opts.mode), opts.basic_config(width), opts.lam, opts.backend, rng,
                           default_action=opts.default_action, mode=opts.mode, n=width,
                           workers=opts.workers, ges_options=opts.ges_options)


def _run_blocking(rules: Sequence[AclRule], opts: ObfuscateOptions, rng: RandomSource) -> ObfuscatedFirewall:
    layout = parse_layout(opts.layout)
    return obfuscate_blocking(compile_blocks(rules, layout), layout, opts.lam, opts.backend, rng,
                              default_action=opts.default_action, cap=opts.cap,
                              workers=opts.workers, ges_options=opts.ges_options)


def _run_dnc(rules: Sequence[AclRule], opts: ObfuscateOptions, rng: RandomSource) -> ObfuscatedFirewall:
    width = _bit_width(opts)
    widths = part_widths(width, opts.parts, opts.allow_remainder)
    config = opts.basic_config(widths[0]) if opts.inner == "basic" else None
    return obfuscate_dnc(compile_bits(rules, opts.mode), opts.parts, opts.inner, opts.lam, opts.backend, rng,
                         config=config, default_action=opts.default_action, mode=opts.mode, n=width,
                         allow_remainder=opts.allow_remainder, workers=opts.workers, ges_options=opts.ges_options)


RUNNERS: Dict[str, Callable[[Sequence[AclRule], ObfuscateOptions, RandomSource], ObfuscatedFirewall]] = {
    "naive": _run_naive,
    "basic": _run_basic,
    "blocking": _run_blocking,
    "dnc": _run_dnc,
}


def obfuscate_acl(rules: Sequence[AclRule], opts: ObfuscateOptions) -> ObfuscationResult:
    if opts.scheme not in RUNNERS:
        raise SchemeConfigError(f"unknown scheme '{opts.scheme}' (expected one of {', '.join(SCHEMES)})")
    if opts.mode not in MODES:
        raise SchemeConfigError(f"unknown mode '{opts.mode}'")
    rng = RandomSource(opts.seed)
    t0 = time.perf_counter()
    with ges.counting() as counter:
        fw = RUNNERS[opts.scheme](rules, opts, rng)
    elapsed = time.perf_counter() - t0

    units = fw.units[0] if fw.units else ()
    M = N = None
    if fw.scheme == "basic":
        config = opts.basic_config(fw.width) or BasicSchemeConfig.for_width(fw.width)
        M, N = config.M, config.N
    elif fw.scheme == "dnc" and fw.inner == "basic":
        config = opts.basic_config(fw.part_widths[0])
        if config is not None:
            M, N = config.M, config.N
    report = count_report(counter, fw.scheme, fw.width, len(fw.rules), M, N, fw.layout, fw.part_widths, fw.inner or "naive")
    logger.info("obfuscated %d rules with %s in %.3fs (%d shared units)", len(fw.rules), fw.scheme, elapsed, len(units))
    return ObfuscationResult(fw, counter.snapshot(), report, elapsed)


# ---- verification

@dataclass
class Disagreement:
    index: int
    packet: PacketHeader
    expected: MatchDecision
    observed: MatchDecision


@dataclass
class VerifyResult:
    scheme: str
    total: int
    agree: int
    disagreements: List[Disagreement]
    margins: List[Optional[int]]
    seconds: float
    source: str

    @property
    def passed(self) -> bool:
        return not self.disagreements and self.agree == self.total


def check_compatible(rules: Sequence[AclRule], fw: ObfuscatedFirewall, default_action: Optional[Action] = None) -> None:
    """Cheap structural check that the firewall was built from these rules."""
    if len(rules) != len(fw.rules):
        raise MismatchError(f"ACL has {len(rules)} rules, firewall has {len(fw.rules)}")
    for idx, (a, b) in enumerate(zip(rules, fw.rules)):
        if a.action != b.action:
            raise MismatchError(f"rule {idx}: ACL action {a.action.kind} != firewall action {b.action.kind}")
    if default_action is not None and default_action != fw.default_action:
        raise MismatchError(f"default action {default_action.kind} != firewall default {fw.default_action.kind}")
    if fw.scheme != "blocking" and fw.mode is None:
        raise MismatchError("firewall was built from raw bit vectors; no header mode to verify against")


def _oracle(rules: Sequence[AclRule], fw: ObfuscatedFirewall) -> Tuple[List[Union[BitRule, BlockRuleSpec]], Callable[[PacketHeader], Tuple[int, ...]]]:
    if fw.scheme == "blocking":
        return compile_blocks(rules, fw.layout), lambda p: packet_tuple(p, fw.layout)
    return compile_bits(rules, fw.mode), lambda p: packet_bits(p, fw.mode)


def base_header(rule: Optional[AclRule]) -> PacketHeader:
    """Smallest packet inside `rule` (all zeros without a rule)."""
    values = {}
    for header, (kind, a, b) in (header_sets(rule).items() if rule else []):
        values[header] = a if kind == "range" else b
    return PacketHeader(**{h: values.get(h, 0) for h in ("src_ip", "src_port", "dst_ip", "dst_port", "proto")})


def exhaustive_packets(bits: int, mode: str, base: PacketHeader) -> List[PacketHeader]:
    """All 2^bits settings of the leading bits of the mode's bit view; the rest comes from `base`."""
    width = sum(w for _, w in MODES[mode])
    if not 1 <= bits <= min(width, MAX_EXHAUSTIVE_BITS):
        raise SchemeConfigError(f"exhaustive bits must be in [1, {min(width, MAX_EXHAUSTIVE_BITS)}]")
    tail = list(packet_bits(base, mode))[bits:]
    out = []
    for x in range(1 << bits):
        head = [(x >> (bits - 1 - i)) & 1 for i in range(bits)]
        out.append(header_from_bits(head + tail, mode))
    return out


def verify(
    rules: Sequence[AclRule],
    fw: ObfuscatedFirewall,
    packets: Optional[Sequence[PacketHeader]] = None,
    count: int = 1000,
    exhaustive_bits: Optional[int] = None,
    mode: str = "standard",
    seed: int = 1,
    workers: int = 1,
    default_action: Optional[Action] = None,
) -> VerifyResult:
    check_compatible(rules, fw, default_action)
    if packets is not None:
        source = f"{len(packets)} supplied packets"
    elif exhaustive_bits:
        packets = exhaustive_packets(exhaustive_bits, fw.mode or mode, base_header(rules[0] if rules else None))
        source = f"exhaustive over {exhaustive_bits} leading bits"
    else:
        packets = generate_packets(rules, count, RandomSource(seed))
        source = f"{count} seeded random packets (seed {seed})"

    oracle_rules, view = _oracle(rules, fw)
    t0 = time.perf_counter()
    observed = filter_packets(fw, list(packets), workers=workers)
    elapsed = time.perf_counter() - t0
    bad = []
    for idx, (p, got) in enumerate(zip(packets, observed)):
        want = oracle_filter(oracle_rules, view(p), fw.default_action)
        if want != got:
            bad.append(Disagreement(idx, p, want, got))
    margins = [
        inst.pzt.payload.calibration_margin if inst.params.backend_id == "clt" else None
        for inst in fw.instances
    ]
    logger.info("verified %d packets in %.3fs, %d disagreements", len(packets), elapsed, len(bad))
    return VerifyResult(fw.scheme, len(packets), len(packets) - len(bad), bad, margins, elapsed, source)
