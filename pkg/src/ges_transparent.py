# src/ges_transparent.py
"""
Exact, insecure backend: an encoding is the ring value mod a prime q plus
its level. Used as the correctness oracle for every scheme.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

import gmpy2

from .errors import GesError
from .ges_core import Encoding, GesParams, RandomSource, ZeroTestParam, digest_int

MIN_MODULUS_BITS = 64


@dataclass(frozen=True)
class TransparentPublic:
    q: int


@dataclass(frozen=True)
class TransparentSecretKey:
    __secret__ = True
    q: int


def modulus_bits(lam: int) -> int:
    return max(MIN_MODULUS_BITS, 2 * lam)


def _random_prime(bits: int, rng: RandomSource) -> int:
    while True:
        candidate = gmpy2.next_prime(rng.randbits(bits) | (1 << (bits - 1)))
        if candidate.bit_length() == bits:
            return int(candidate)


def inst_gen(lam: int, kappa: int, rng: RandomSource, modulus: Optional[int] = None, **_ignored) -> Tuple[GesParams, ZeroTestParam, TransparentSecretKey]:
    if modulus is None:
        q = _random_prime(modulus_bits(lam), rng)
    else:
        if modulus < 2 or not gmpy2.is_prime(modulus):
            raise GesError(f"transparent modulus must be prime, got {modulus}")
        q = int(modulus)
    params = GesParams(lam=lam, kappa=kappa, backend_id="transparent", public_payload=TransparentPublic(q))
    return params, ZeroTestParam(payload=None), TransparentSecretKey(q)


def samp(params: GesParams, secret_key: TransparentSecretKey, rng: RandomSource) -> Encoding:
    return Encoding(0, rng.randbelow(params.public_payload.q))


def encode(params: GesParams, secret_key, target_level: int, e: Encoding, rng: RandomSource) -> Encoding:
    return Encoding(target_level, e.payload)


def re_rand(params: GesParams, secret_key, level: int, e: Encoding, rng: RandomSource) -> Encoding:
    return Encoding(level, e.payload)


def add(params: GesParams, e1: Encoding, e2: Encoding) -> Encoding:
    return Encoding(e1.level, (e1.payload + e2.payload) % params.public_payload.q)


def neg(params: GesParams, e1: Encoding) -> Encoding:
    return Encoding(e1.level, (-e1.payload) % params.public_payload.q)


def mul(params: GesParams, e1: Encoding, e2: Encoding) -> Encoding:
    return Encoding(e1.level + e2.level, (e1.payload * e2.payload) % params.public_payload.q)


def is_zero(params: GesParams, pzt: ZeroTestParam, e: Encoding) -> bool:
    return e.payload == 0


def extract(params: GesParams, pzt: ZeroTestParam, e: Encoding) -> str:
    return digest_int(e.payload)


def decode(secret_key: TransparentSecretKey, e: Encoding) -> int:
    return int(e.payload)


def encode_value(params: GesParams, level: int, value: int) -> Encoding:
    """Direct encoding of a known value (tests and calibration only)."""
    return Encoding(level, int(value) % params.public_payload.q)


def payload_bound(params: GesParams) -> int:
    return params.public_payload.q


def fresh_noise(params: GesParams) -> int:
    return 0
