# src/obfuscator.py
"""
Compile plaintext rules into obfuscated firewalls.

Every rule hides its expected values as ratios between level-1 encoding
pairs (u = [rho], v = [rho * alpha]). A packet matches when the products
picked by its bits cancel against the rule's final pair at level kappa.

    naive     per rule, per bit: two pairs (one per bit value)
    basic     M+N shared units, permuted; rules keep index arrays into them
    blocking  per rule, per field value: one pair; kappa = fields + 1
    dnc       the bit string split into parts, each with its own instance
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

from . import ges_core as ges
from .config import get_settings
from .errors import FieldDomainError, SchemeConfigError
from .ges_core import Encoding, GesInstance, GesParams, RandomSource, ZeroTestParam
from .models import (
    DENY, Action, BasicRule, BasicSchemeConfig, BitRule, BlockingRule, BlockRuleSpec,
    DncRule, EncodingPair, EncodingPairUnit, FieldLayout, IndexSets, NaiveRule,
    ObfuscatedFirewall,
)
from .rules import MODES

logger = logging.getLogger(__name__)

SCHEMES = ("naive", "basic", "blocking", "dnc")
INNER_SCHEMES = ("naive", "basic")


class _Keyed:
    """Instance plus the secret key; lives only for the duration of a build."""

    def __init__(self, params: GesParams, pzt: ZeroTestParam, sk: Any):
        self.params, self.pzt, self.sk = params, pzt, sk

    @property
    def public(self) -> GesInstance:
        return GesInstance(self.params, self.pzt)

    # level-1 pair hiding ratio alpha: u = [rho]_1, v = [rho * alpha]_1
    def pair(self, rho: Encoding, alpha: Encoding, rng: RandomSource) -> EncodingPair:
        p, sk = self.params, self.sk
        u = ges.encode(p, sk, 1, rho, rng)
        v = ges.encode(p, sk, 1, ges.mul(p, 0, rho, 0, alpha), rng)
        return ges.re_rand(p, sk, 1, u, rng), ges.re_rand(p, sk, 1, v, rng)

    def samp(self, rng: RandomSource) -> Encoding:
        return ges.samp(self.params, self.sk, rng)

    def final_pair(self, ratios: Sequence[Encoding], rng: RandomSource) -> EncodingPair:
        rho = self.samp(rng)
        agg = ratios[0]
        for a in ratios[1:]:
            agg = ges.mul(self.params, 0, agg, 0, a)
        return self.pair(rho, agg, rng)


def _new_instance(lam: int, kappa: int, backend: str, rng: RandomSource, ges_options: Optional[Dict]) -> _Keyed:
    params, pzt, sk = ges.inst_gen(lam, kappa, backend, rng, **(ges_options or {}))
    return _Keyed(params, pzt, sk)


def _map_rules(fn: Callable[[int, Any], Any], items: Sequence[Any], workers: int) -> List[Any]:
    """
    Run fn(index, item) per rule. Each call draws from its own sub-stream,
    so serial and threaded runs give identical output. Worker threads count
    into private counters merged here.
    """
    if workers <= 1 or len(items) <= 1:
        return [fn(i, item) for i, item in enumerate(items)]

    def task(i: int, item: Any):
        with ges.counting() as local:
            return fn(i, item), local

    parent = ges.active_counter()
    with ThreadPoolExecutor(max_workers=workers) as pool:
        done = list(pool.map(lambda pair: task(*pair), enumerate(items)))
    if parent is not None:
        for _, local in done:
            parent.merge(local)
    return [result for result, _ in done]


def _width(rules: Sequence[BitRule], n: Optional[int], mode: Optional[str]) -> int:
    widths = {r.n for r in rules}
    if len(widths) > 1:
        raise SchemeConfigError(f"rules have mixed widths {sorted(widths)}")
    if widths:
        width = widths.pop()
        if n is not None and n != width:
            raise SchemeConfigError(f"rule width {width} != requested n={n}")
        return width
    if n is not None:
        return n
    return sum(w for _, w in MODES[mode or "standard"])


# ---------- naive ----------

def _naive_rule(inst: _Keyed, rule: BitRule, rng: RandomSource) -> NaiveRule:
    units: List[EncodingPairUnit] = []
    chosen: List[Encoding] = []
    for i in range(rule.n):
        a0 = inst.samp(rng)
        a1 = a0 if i in rule.wildcards else inst.samp(rng)
        u0, v0 = inst.pair(inst.samp(rng), a0, rng)
        u1, v1 = inst.pair(inst.samp(rng), a1, rng)
        units.append(EncodingPairUnit(u0, v0, u1, v1))
        chosen.append(a1 if rule.v[i] else a0)
    return NaiveRule(tuple(units), inst.final_pair(chosen, rng), rule.action)


def obfuscate_naive(
    rules: Sequence[BitRule],
    lam: int,
    backend: str,
    rng: RandomSource,
    default_action: Action = DENY,
    mode: Optional[str] = None,
    n: Optional[int] = None,
    workers: int = 1,
    ges_options: Optional[Dict] = None,
) -> ObfuscatedFirewall:
    ges.note_run()
    width = _width(rules, n, mode)
    inst = _new_instance(lam, width + 1, backend, rng, ges_options)
    built = _map_rules(lambda i, r: _naive_rule(inst, r, rng.spawn(i)), rules, workers)
    logger.info("naive: %d rules, n=%d, kappa=%d", len(built), width, width + 1)
    return ObfuscatedFirewall(
        scheme="naive", instances=(inst.public,), units=((),), rules=tuple(built),
        default_action=default_action, mode=mode, width=width,
    )


# ---------- basic ----------

def _draw_indices(pool: Sequence[int], k: int, rng: RandomSource) -> List[int]:
    """k distinct indices from pool."""
    return rng.sample(pool, k)


def check_basic_config(rules: Sequence[BitRule], config: BasicSchemeConfig) -> None:
    if config.M < 0 or config.N < 0 or config.M + config.N == 0:
        raise SchemeConfigError(f"M and N must be non-negative and not both zero (got M={config.M}, N={config.N})")
    need_m = max((len(r.wildcards) for r in rules), default=0)
    need_n = max((r.n - len(r.wildcards) for r in rules), default=0)
    if config.M < need_m:
        raise SchemeConfigError(f"M={config.M} is too small: a rule has {need_m} wildcard bits (use --M {need_m} or more)")
    if config.N < need_n:
        raise SchemeConfigError(f"N={config.N} is too small: a rule has {need_n} fixed bits (use --N {need_n} or more)")


class BasicBuilder:
    """
    Shared-unit builder. Units 0..M-1 get equal ratios for both bit values,
    the rest unequal; a random permutation then hides which is which. The
    index sets and level-0 ratios stay here and are dropped with the builder.
    """

    def __init__(self, inst: _Keyed, config: BasicSchemeConfig, rng: RandomSource):
        self.inst = inst
        units: List[Tuple[EncodingPairUnit, Tuple[Encoding, Encoding], bool]] = []
        for idx in range(config.M + config.N):
            equal = idx < config.M
            a0 = inst.samp(rng)
            a1 = a0 if equal else inst.samp(rng)
            u0, v0 = inst.pair(inst.samp(rng), a0, rng)
            u1, v1 = inst.pair(inst.samp(rng), a1, rng)
            units.append((EncodingPairUnit(u0, v0, u1, v1), (a0, a1), equal))
        rng.shuffle(units)
        self.units: Tuple[EncodingPairUnit, ...] = tuple(u for u, _, _ in units)
        self._alphas = [a for _, a, _ in units]
        self.index_sets = IndexSets(
            E=tuple(i for i, (_, _, eq) in enumerate(units) if eq),
            UE=tuple(i for i, (_, _, eq) in enumerate(units) if not eq),
        )

    def draw_indices(self, rule: BitRule, rng: RandomSource) -> Tuple[int, ...]:
        wild = [i for i in range(rule.n) if i in rule.wildcards]
        fixed = [i for i in range(rule.n) if i not in rule.wildcards]
        from_e = iter(_draw_indices(self.index_sets.E, len(wild), rng))
        from_ue = iter(_draw_indices(self.index_sets.UE, len(fixed), rng))
        return tuple(next(from_e) if i in rule.wildcards else next(from_ue) for i in range(rule.n))

    def build_rule(self, rule: BitRule, rng: RandomSource) -> BasicRule:
        indices = self.draw_indices(rule, rng)
        chosen = [self._alphas[j][rule.v[i]] for i, j in enumerate(indices)]
        return BasicRule(indices, self.inst.final_pair(chosen, rng), rule.action)


def obfuscate_basic(
    rules: Sequence[BitRule],
    config: Optional[BasicSchemeConfig],
    lam: int,
    backend: str,
    rng: RandomSource,
    default_action: Action = DENY,
    mode: Optional[str] = None,
    n: Optional[int] = None,
    workers: int = 1,
    ges_options: Optional[Dict] = None,
) -> ObfuscatedFirewall:
    ges.note_run()
    width = _width(rules, n, mode)
    config = config or BasicSchemeConfig.for_width(width)
    check_basic_config(rules, config)
    inst = _new_instance(lam, width + 1, backend, rng, ges_options)
    builder = BasicBuilder(inst, config, rng)
    built = _map_rules(lambda i, r: builder.build_rule(r, rng.spawn(i)), rules, workers)
    logger.info("basic: %d rules, n=%d, M=%d, N=%d, kappa=%d", len(built), width, config.M, config.N, width + 1)
    return ObfuscatedFirewall(
        scheme="basic", instances=(inst.public,), units=(builder.units,), rules=tuple(built),
        default_action=default_action, mode=mode, width=width,
    )


# ---------- blocking ----------

def _blocking_rule(inst: _Keyed, rule: BlockRuleSpec, layout: FieldLayout, rng: RandomSource) -> BlockingRule:
    tables = []
    etas = []
    for f, allowed in zip(layout.fields, rule.filters):
        eta = inst.samp(rng)
        etas.append(eta)
        tables.append(tuple(
            inst.pair(inst.samp(rng), eta if j in allowed else inst.samp(rng), rng)
            for j in range(f.domain)
        ))
    return BlockingRule(tuple(tables), inst.final_pair(etas, rng), rule.action)


def obfuscate_blocking(
    rules: Sequence[BlockRuleSpec],
    layout: FieldLayout,
    lam: int,
    backend: str,
    rng: RandomSource,
    default_action: Action = DENY,
    cap: Optional[int] = None,
    workers: int = 1,
    ges_options: Optional[Dict] = None,
) -> ObfuscatedFirewall:
    ges.note_run()
    cap = get_settings().blocking_cap if cap is None else cap
    total = sum(layout.domains)
    if total > cap:
        raise FieldDomainError(
            f"layout '{layout.name}' needs {total} encoding pairs per rule, above the cap of {cap} (raise --cap)")
    for idx, r in enumerate(rules):
        if len(r.filters) != layout.k:
            raise SchemeConfigError(f"rule {idx} has {len(r.filters)} filter sets, layout '{layout.name}' has {layout.k} fields")
    inst = _new_instance(lam, layout.k + 1, backend, rng, ges_options)
    built = _map_rules(lambda i, r: _blocking_rule(inst, r, layout, rng.spawn(i)), rules, workers)
    logger.info("blocking: %d rules, layout=%s, k=%d, kappa=%d", len(built), layout.name, layout.k, layout.k + 1)
    return ObfuscatedFirewall(
        scheme="blocking", instances=(inst.public,), units=((),), rules=tuple(built),
        default_action=default_action, layout=layout, width=layout.k,
    )


# ---------- divide and conquer ----------

def part_widths(n: int, parts: int, allow_remainder: bool = False) -> Tuple[int, ...]:
    if parts < 1:
        raise SchemeConfigError(f"parts must be >= 1, got {parts}")
    if parts > n:
        raise SchemeConfigError(f"cannot split {n} bits into {parts} parts")
    base, rem = divmod(n, parts)
    if rem and not allow_remainder:
        raise SchemeConfigError(f"{parts} parts do not divide n={n} (allow the last part to take the remainder)")
    return tuple([base] * (parts - 1) + [n - base * (parts - 1)])


def _slice(rule: BitRule, start: int, width: int) -> BitRule:
    return BitRule(
        rule.v[start:start + width],
        frozenset(i - start for i in rule.wildcards if start <= i < start + width),
        rule.action,
    )


def obfuscate_dnc(
    rules: Sequence[BitRule],
    parts: int,
    inner: str,
    lam: int,
    backend: str,
    rng: RandomSource,
    config: Optional[BasicSchemeConfig] = None,
    default_action: Action = DENY,
    mode: Optional[str] = None,
    n: Optional[int] = None,
    allow_remainder: bool = False,
    workers: int = 1,
    ges_options: Optional[Dict] = None,
) -> ObfuscatedFirewall:
    ges.note_run()
    if inner not in INNER_SCHEMES:
        raise SchemeConfigError(f"dnc inner scheme must be one of {', '.join(INNER_SCHEMES)}, got '{inner}'")
    width = _width(rules, n, mode)
    widths = part_widths(width, parts, allow_remainder)
    starts = [sum(widths[:j]) for j in range(len(widths))]
    sliced = [[_slice(r, s, w) for r in rules] for s, w in zip(starts, widths)]

    keyed: List[_Keyed] = []
    builders: List[Optional[BasicBuilder]] = []
    for w, part_rules in zip(widths, sliced):
        inst = _new_instance(lam, w + 1, backend, rng, ges_options)
        keyed.append(inst)
        if inner == "basic":
            part_config = config or BasicSchemeConfig.for_width(w)
            check_basic_config(part_rules, part_config)
            builders.append(BasicBuilder(inst, part_config, rng))
        else:
            builders.append(None)

    def build(i: int, rule: BitRule) -> DncRule:
        rule_rng = rng.spawn(i)
        subs = []
        for j, (inst, builder) in enumerate(zip(keyed, builders)):
            piece = sliced[j][i]
            subs.append(builder.build_rule(piece, rule_rng) if builder else _naive_rule(inst, piece, rule_rng))
        return DncRule(tuple(subs), rule.action)

    built = _map_rules(build, rules, workers)
    logger.info("dnc: %d rules, parts=%s, inner=%s", len(built), list(widths), inner)
    return ObfuscatedFirewall(
        scheme="dnc", instances=tuple(k.public for k in keyed),
        units=tuple(b.units if b else () for b in builders), rules=tuple(built),
        default_action=default_action, mode=mode, inner=inner, part_widths=widths, width=width,
    )
