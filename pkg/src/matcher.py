# src/matcher.py
"""
Execute obfuscated firewalls (cloud side) and the plaintext reference oracle.

For each rule the packet picks one pair per bit (or per field value);
LHS = u_final * prod(v_picked), RHS = v_final * prod(u_picked) at level
kappa, and the rule matches iff LHS - RHS zero-tests.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Dict, Iterable, List, Sequence, Tuple, Union

from . import ges_core as ges
from .errors import MismatchError
from .ges_core import GesInstance
from .models import (
    DENY, Action, BasicRule, BitRule, BlockingRule, BlockRuleSpec, DncRule, EncodingPair,
    EncodingPairUnit, MatchDecision, NaiveRule, ObfuscatedFirewall, PacketHeader,
)
from .rules import packet_bits, packet_tuple

PacketLike = Union[PacketHeader, Sequence[int]]


def _pairs_match(inst: GesInstance, final: EncodingPair, picked: Iterable[EncodingPair]) -> bool:
    params = inst.params
    lhs, rhs = final
    for u, v in picked:
        lhs = ges.mul(params, lhs.level, lhs, 1, v)
        rhs = ges.mul(params, rhs.level, rhs, 1, u)
    return ges.is_zero(params, inst.pzt, ges.sub(params, params.kappa, lhs, rhs))


def _bit_pairs(units: Sequence[EncodingPairUnit], bits: Sequence[int]) -> Iterable[EncodingPair]:
    return (unit.pair(b) for unit, b in zip(units, bits))


def _view(fw: ObfuscatedFirewall, p: PacketLike) -> Tuple[int, ...]:
    """Bit vector (bit schemes) or field tuple (blocking) for a packet."""
    if isinstance(p, PacketHeader):
        if fw.scheme == "blocking":
            return packet_tuple(p, fw.layout)
        if fw.mode is None:
            raise MismatchError("firewall has no header mode; pass a raw bit vector")
        return packet_bits(p, fw.mode)
    view = tuple(int(x) for x in p)
    if len(view) != fw.width:
        raise MismatchError(f"packet view has {len(view)} coordinates, firewall expects {fw.width}")
    if fw.scheme == "blocking":
        for x, dom in zip(view, fw.layout.domains):
            if not 0 <= x < dom:
                raise MismatchError(f"field value {x} outside [0, {dom})")
    elif any(b not in (0, 1) for b in view):
        raise MismatchError("bit view must be a 0/1 vector")
    return view


# ---- per-scheme matching over a prepared view

def _match_naive(fw: ObfuscatedFirewall, rule: NaiveRule, view, part: int = 0) -> bool:
    return _pairs_match(fw.instances[part], rule.final, _bit_pairs(rule.units, view))


def _match_basic(fw: ObfuscatedFirewall, rule: BasicRule, view, part: int = 0) -> bool:
    shared = fw.units[part]
    return _pairs_match(fw.instances[part], rule.final, _bit_pairs((shared[j] for j in rule.indices), view))


def _match_blocking(fw: ObfuscatedFirewall, rule: BlockingRule, view, part: int = 0) -> bool:
    return _pairs_match(fw.instances[0], rule.final, (table[x] for table, x in zip(rule.tables, view)))


def _match_dnc(fw: ObfuscatedFirewall, rule: DncRule, view, part: int = 0) -> bool:
    start = 0
    for j, (sub, width) in enumerate(zip(rule.parts, fw.part_widths)):
        piece = view[start:start + width]
        start += width
        if not MATCHERS[type(sub)](fw, sub, piece, j):
            return False
    return True


MATCHERS: Dict[type, Callable[..., bool]] = {
    NaiveRule: _match_naive,
    BasicRule: _match_basic,
    BlockingRule: _match_blocking,
    DncRule: _match_dnc,
}


def match_rule(fw: ObfuscatedFirewall, rule, p: PacketLike) -> bool:
    return MATCHERS[type(rule)](fw, rule, _view(fw, p))


def filter_packet(fw: ObfuscatedFirewall, p: PacketLike) -> MatchDecision:
    """First matching rule wins; otherwise the firewall's default action."""
    view = _view(fw, p)
    for idx, rule in enumerate(fw.rules):
        if MATCHERS[type(rule)](fw, rule, view):
            return MatchDecision(rule.action, idx)
    return MatchDecision(fw.default_action, None)


def filter_packets(fw: ObfuscatedFirewall, packets: Sequence[PacketLike], workers: int = 1) -> List[MatchDecision]:
    """Decisions in input order, whatever the worker count."""
    if workers <= 1 or len(packets) <= 1:
        return [filter_packet(fw, p) for p in packets]

    def task(p):
        with ges.counting() as local:
            return filter_packet(fw, p), local

    parent = ges.active_counter()
    with ThreadPoolExecutor(max_workers=workers) as pool:
        done = list(pool.map(task, packets))
    if parent is not None:
        for _, local in done:
            parent.merge(local)
    return [d for d, _ in done]


# ---- plaintext oracle

def oracle_match(rule: Union[BitRule, BlockRuleSpec], view: Sequence[int]) -> bool:
    if isinstance(rule, BlockRuleSpec):
        return all(x in allowed for x, allowed in zip(view, rule.filters))
    return all(view[i] == rule.v[i] for i in range(rule.n) if i not in rule.wildcards)


def oracle_filter(rules: Sequence[Union[BitRule, BlockRuleSpec]], view: Sequence[int], default: Action = DENY) -> MatchDecision:
    for idx, rule in enumerate(rules):
        if oracle_match(rule, view):
            return MatchDecision(rule.action, idx)
    return MatchDecision(default, None)
