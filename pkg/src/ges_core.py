# src/ges_core.py
"""
Graded encoding system (GES) front end.

The nine procedures are module-level functions that validate levels,
count invocations into the active OpCounter and dispatch to a backend
module (`ges_transparent` or `ges_clt`) selected by `params.backend_id`.

Encoding procedures (samp/encode/re_rand) take the secret key: only the
enterprise encodes. Everything else works from public data.
"""

from __future__ import annotations

import hashlib
from contextlib import contextmanager
from contextvars import ContextVar
from dataclasses import dataclass, fields
from typing import Any, Dict, Iterator, List, Optional, Sequence, Tuple

import gmpy2

from .errors import GesError, LevelError

BACKEND_IDS = ("transparent", "clt")
SEED_MASK = (1 << 64) - 1


# ---------- types ----------

@dataclass(frozen=True)
class GesParams:
    lam: int
    kappa: int
    backend_id: str
    public_payload: Any


@dataclass(frozen=True)
class RingElement:
    value: Any          # int (transparent) or tuple of residues (clt)


@dataclass(frozen=True, slots=True)
class Encoding:
    level: int
    payload: Any        # int / mpz, canonical for its backend
    noise: int = 0      # tracked numerator bound in bits (clt only)


@dataclass(frozen=True)
class ZeroTestParam:
    payload: Any


@dataclass(frozen=True)
class GesInstance:
    """Public half of an instance: what an obfuscated firewall carries."""
    params: GesParams
    pzt: ZeroTestParam


class RandomSource:
    """Seeded generator; identical seeds give identical draws."""

    def __init__(self, seed: int = 1):
        self.seed = int(seed) & SEED_MASK
        self._state = gmpy2.random_state(self.seed)

    def randbits(self, bits: int) -> int:
        if bits <= 0:
            return 0
        return int(gmpy2.mpz_urandomb(self._state, bits))

    def randbelow(self, n: int) -> int:
        if n <= 0:
            raise ValueError("randbelow needs a positive bound")
        return int(gmpy2.mpz_random(self._state, n))

    def random(self) -> float:
        return self.randbits(53) / float(1 << 53)

    def shuffle(self, items: List[Any]) -> None:
        # Fisher-Yates
        for i in range(len(items) - 1, 0, -1):
            j = self.randbelow(i + 1)
            items[i], items[j] = items[j], items[i]

    def sample(self, population: Sequence[Any], k: int) -> List[Any]:
        """k distinct draws (partial Fisher-Yates)."""
        pool = list(population)
        if k > len(pool):
            raise ValueError(f"cannot draw {k} without replacement from {len(pool)}")
        for i in range(k):
            j = i + self.randbelow(len(pool) - i)
            pool[i], pool[j] = pool[j], pool[i]
        return pool[:k]

    def spawn(self, stream_id: int) -> "RandomSource":
        """Independent sub-stream derived from the seed alone, not the current state."""
        digest = hashlib.blake2b(
            f"{self.seed}:{stream_id}".encode(), digest_size=8, person=b"sofa-rng"
        ).digest()
        return RandomSource(int.from_bytes(digest, "big"))


# ---------- instrumentation ----------

@dataclass
class OpCounter:
    samp: int = 0
    encode: int = 0
    re_rand: int = 0
    add: int = 0
    neg: int = 0
    mul: int = 0
    is_zero: int = 0
    runs: int = 0

    def bump(self, name: str) -> None:
        setattr(self, name, getattr(self, name) + 1)

    def merge(self, other: "OpCounter") -> None:
        for f in fields(self):
            setattr(self, f.name, getattr(self, f.name) + getattr(other, f.name))

    def snapshot(self) -> Dict[str, int]:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def diff(self, before: Dict[str, int]) -> Dict[str, int]:
        return {k: v - before.get(k, 0) for k, v in self.snapshot().items()}


_ACTIVE: ContextVar[Optional[OpCounter]] = ContextVar("sofa_op_counter", default=None)


@contextmanager
def counting() -> Iterator[OpCounter]:
    """
    Run-scoped counter. Nested scopes merge into the enclosing one on exit,
    so worker threads can count privately and report at the barrier.
    """
    parent = _ACTIVE.get()
    counter = OpCounter()
    token = _ACTIVE.set(counter)
    try:
        yield counter
    finally:
        _ACTIVE.reset(token)
        if parent is not None:
            parent.merge(counter)


def active_counter() -> Optional[OpCounter]:
    return _ACTIVE.get()


def note_run() -> None:
    counter = _ACTIVE.get()
    if counter is not None:
        counter.runs += 1


def _count(name: str) -> None:
    counter = _ACTIVE.get()
    if counter is not None:
        counter.bump(name)


# ---------- dispatch ----------

_BACKENDS: Dict[str, Any] = {}


def backend_module(backend_id: str):
    if not _BACKENDS:
        from . import ges_clt, ges_transparent
        _BACKENDS.update({"transparent": ges_transparent, "clt": ges_clt})
    try:
        return _BACKENDS[backend_id]
    except KeyError:
        raise GesError(f"unsupported backend '{backend_id}' (expected one of {', '.join(BACKEND_IDS)})") from None


def _check_level(e: Encoding, level: int, what: str) -> None:
    if e.level != level:
        raise LevelError(f"{what}: operand at level {e.level}, expected {level}")


# ---------- the nine procedures ----------

def inst_gen(lam: int, kappa: int, backend: str, rng: RandomSource, **options) -> Tuple[GesParams, ZeroTestParam, Any]:
    if lam < 1:
        raise GesError(f"lambda must be >= 1, got {lam}")
    if kappa < 1:
        raise GesError(f"kappa must be >= 1, got {kappa}")
    return backend_module(backend).inst_gen(lam, kappa, rng, **options)


def samp(params: GesParams, secret_key: Any, rng: RandomSource) -> Encoding:
    _count("samp")
    return backend_module(params.backend_id).samp(params, secret_key, rng)


def encode(params: GesParams, secret_key: Any, target_level: int, e: Encoding, rng: RandomSource) -> Encoding:
    if not 1 <= target_level <= params.kappa:
        raise LevelError(f"encode: target level {target_level} outside [1, {params.kappa}]")
    _check_level(e, 0, "encode")
    _count("encode")
    return backend_module(params.backend_id).encode(params, secret_key, target_level, e, rng)


def re_rand(params: GesParams, secret_key: Any, level: int, e: Encoding, rng: RandomSource) -> Encoding:
    _check_level(e, level, "re_rand")
    _count("re_rand")
    return backend_module(params.backend_id).re_rand(params, secret_key, level, e, rng)


def add(params: GesParams, level: int, e1: Encoding, e2: Encoding) -> Encoding:
    _check_level(e1, level, "add")
    _check_level(e2, level, "add")
    _count("add")
    return backend_module(params.backend_id).add(params, e1, e2)


def neg(params: GesParams, level: int, e1: Encoding) -> Encoding:
    _check_level(e1, level, "neg")
    _count("neg")
    return backend_module(params.backend_id).neg(params, e1)


def sub(params: GesParams, level: int, e1: Encoding, e2: Encoding) -> Encoding:
    return add(params, level, e1, neg(params, level, e2))


def mul(params: GesParams, level1: int, e1: Encoding, level2: int, e2: Encoding) -> Encoding:
    _check_level(e1, level1, "mul")
    _check_level(e2, level2, "mul")
    if level1 + level2 > params.kappa:
        raise LevelError(f"mul: level overflow {level1}+{level2} > kappa={params.kappa}")
    _count("mul")
    return backend_module(params.backend_id).mul(params, e1, e2)


def is_zero(params: GesParams, pzt: ZeroTestParam, e: Encoding) -> bool:
    _check_level(e, params.kappa, "is_zero")
    _count("is_zero")
    return backend_module(params.backend_id).is_zero(params, pzt, e)


def extract(params: GesParams, pzt: ZeroTestParam, e: Encoding) -> str:
    _check_level(e, params.kappa, "extract")
    return backend_module(params.backend_id).extract(params, pzt, e)


# ---------- helpers shared by backends and schemes ----------

def digest_int(value: int, domain: bytes = b"sofa/extract/v1") -> str:
    """sha256 over a domain tag and the signed big-endian bytes of `value`."""
    value = int(value)
    size = max(1, (value.bit_length() + 8) // 8)
    return hashlib.sha256(domain + value.to_bytes(size, "big", signed=True)).hexdigest()


def product(params: GesParams, factors: Sequence[Encoding]) -> Encoding:
    """Left-to-right product of encodings; levels add up."""
    acc = factors[0]
    for f in factors[1:]:
        acc = mul(params, acc.level, acc, f.level, f)
    return acc


def secret_types() -> Tuple[type, ...]:
    """Classes flagged `__secret__`; the serializer refuses to emit them."""
    from . import ges_clt, ges_transparent
    from .models import IndexSets
    return (ges_transparent.TransparentSecretKey, ges_clt.CltSecretKey, IndexSets)
