# src/bench.py
"""
Benchmark harness. Every cell is repeated `repeat` times and reported as
min/median/max seconds; op counts come from the run-scoped counter.
Absolute timings are machine-bound; compare orderings only.
"""

from __future__ import annotations

import logging
import time
from dataclasses import replace
from typing import Callable, Dict, List, Sequence

import pandas as pd

from . import ges_core as ges
from .analysis import stored_encodings
from .errors import InputError
from .ges_core import RandomSource
from .loaders import generate_packets
from .matcher import filter_packet
from .models import DENY, AclRule, BitRule
from .obfuscator import obfuscate_naive
from .pipeline import ObfuscateOptions, obfuscate_acl
from .serialize import dumps_firewall

logger = logging.getLogger(__name__)

TIME_COLUMNS = ["seconds_min", "seconds_median", "seconds_max"]


def _aggregate(rows: List[Dict], keys: List[str]) -> pd.DataFrame:
    df = pd.DataFrame(rows)
    if df.empty:
        return df
    counts = [c for c in df.columns if c not in keys + ["seconds", "repeat"]]
    agg = df.groupby(keys, sort=False).agg(
        seconds_min=("seconds", "min"),
        seconds_median=("seconds", "median"),
        seconds_max=("seconds", "max"),
        **{c: (c, "first") for c in counts},
    )
    return agg.reset_index()


def bench_schemes(
    rules: Sequence[AclRule],
    schemes: Sequence[str],
    base: ObfuscateOptions,
    packets: int = 100,
    repeat: int = 1,
) -> pd.DataFrame:
    """Per scheme: one obfuscate row (whole run) and one filter row (per packet)."""
    corpus = generate_packets(rules, packets, RandomSource(base.seed))
    rows: List[Dict] = []
    for scheme in schemes:
        opts = replace(base, scheme=scheme)
        for r in range(repeat):
            result = obfuscate_acl(rules, opts)
            fw = result.firewall
            kappa = max(inst.params.kappa for inst in fw.instances)
            rows.append({
                "scheme": scheme, "kappa": kappa, "phase": "obfuscate", "rules": len(fw.rules), "repeat": r,
                "seconds": result.elapsed, "encode": result.counts["encode"], "re_rand": result.counts["re_rand"],
                "is_zero": 0, "stored_encodings": stored_encodings(fw), "file_bytes": len(dumps_firewall(fw)),
            })
            with ges.counting() as counter:
                t0 = time.perf_counter()
                for p in corpus:
                    filter_packet(fw, p)
                elapsed = time.perf_counter() - t0
            rows.append({
                "scheme": scheme, "kappa": kappa, "phase": "filter", "rules": len(fw.rules), "repeat": r,
                "seconds": elapsed / max(1, len(corpus)), "encode": 0, "re_rand": 0,
                "is_zero": counter.is_zero, "stored_encodings": stored_encodings(fw), "file_bytes": 0,
            })
            logger.info("bench %s repeat %d: obfuscate %.3fs, filter %.5fs/packet", scheme, r, result.elapsed, rows[-1]["seconds"])
    return _aggregate(rows, ["scheme", "kappa", "phase", "rules"])


def bench_rule_counts(
    rules: Sequence[AclRule],
    schemes: Sequence[str],
    counts: Sequence[int],
    base: ObfuscateOptions,
    repeat: int = 1,
) -> pd.DataFrame:
    """Obfuscation time against rule-count prefixes of the ACL."""
    rows: List[Dict] = []
    for scheme in schemes:
        opts = replace(base, scheme=scheme)
        for count in counts:
            prefix = list(rules[:count])
            for r in range(repeat):
                result = obfuscate_acl(prefix, opts)
                rows.append({
                    "scheme": scheme, "rules": len(prefix), "repeat": r, "seconds": result.elapsed,
                    "encode": result.counts["encode"], "re_rand": result.counts["re_rand"],
                    "stored_encodings": stored_encodings(result.firewall),
                })
    return _aggregate(rows, ["scheme", "rules"])


def _time(fn: Callable[[], object]) -> float:
    t0 = time.perf_counter()
    fn()
    return time.perf_counter() - t0


def bench_primitives(kappas: Sequence[int], backend: str, lam: int, seed: int, repeat: int = 3, ges_options=None) -> pd.DataFrame:
    """Wall time of single GES procedures per kappa."""
    rows: List[Dict] = []
    for kappa in kappas:
        for r in range(repeat):
            rng = RandomSource(seed + r)
            t0 = time.perf_counter()
            params, pzt, sk = ges.inst_gen(lam, kappa, backend, rng, **(ges_options or {}))
            rows.append({"kappa": kappa, "primitive": "inst_gen", "repeat": r, "seconds": time.perf_counter() - t0})
            a = ges.samp(params, sk, rng)
            rows.append({"kappa": kappa, "primitive": "samp", "repeat": r, "seconds": _time(lambda: ges.samp(params, sk, rng))})
            e1 = ges.encode(params, sk, 1, a, rng)
            rows.append({"kappa": kappa, "primitive": "encode", "repeat": r, "seconds": _time(lambda: ges.encode(params, sk, 1, a, rng))})
            rows.append({"kappa": kappa, "primitive": "re_rand", "repeat": r, "seconds": _time(lambda: ges.re_rand(params, sk, 1, e1, rng))})
            top = e1
            for _ in range(kappa - 1):
                top = ges.mul(params, top.level, top, 1, e1)
            # a level-1 product needs kappa >= 2
            if kappa > 1:
                rows.append({"kappa": kappa, "primitive": "mul", "repeat": r,
                             "seconds": _time(lambda: ges.mul(params, 1, e1, 1, e1))})
            rows.append({"kappa": kappa, "primitive": "is_zero", "repeat": r,
                         "seconds": _time(lambda: ges.is_zero(params, pzt, top))})
    return _aggregate(rows, ["kappa", "primitive"])


def _one_rule(width: int, rng: RandomSource) -> BitRule:
    return BitRule(tuple(rng.randbits(1) for _ in range(width)), frozenset(), DENY)


def bench_bits(widths: Sequence[int], backend: str, lam: int, seed: int, repeat: int = 3, ges_options=None) -> pd.DataFrame:
    """Instance generation and one naive rule against the bit width n (kappa = n + 1)."""
    rows: List[Dict] = []
    for width in widths:
        if width < 1:
            raise InputError(f"bit widths must be >= 1, got {width}")
        for r in range(repeat):
            rng = RandomSource(seed + r)
            rows.append({"bits": width, "kappa": width + 1, "phase": "inst_gen", "repeat": r, "encode": 0,
                         "seconds": _time(lambda: ges.inst_gen(lam, width + 1, backend, rng, **(ges_options or {})))})
            rule = _one_rule(width, rng)
            with ges.counting() as counter:
                t0 = time.perf_counter()
                obfuscate_naive([rule], lam, backend, rng, ges_options=ges_options)
                elapsed = time.perf_counter() - t0
            rows.append({"bits": width, "kappa": width + 1, "phase": "obfuscate_rule", "repeat": r,
                         "encode": counter.encode, "seconds": elapsed})
        logger.info("bench bits n=%d done", width)
    return _aggregate(rows, ["bits", "kappa", "phase"])
