# src/ges_clt.py
"""
CLT-style graded encodings over the integers.

An encoding at level k of the residue vector (m_1..m_t) is an integer c in
[0, x0) with c = (r_i*g_i + m_i) * z^-k  (mod p_i) for small noise r_i.
Zero testing multiplies by pzt = sum h_i*(z^kappa * g_i^-1 mod p_i)*(x0/p_i)
and checks that the centered result is small compared to x0.

Only the secret-key holder encodes, so there are no public randomizers:
re-randomization adds a fresh encoding of zero.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import gmpy2
from gmpy2 import mpz

from .config import load_clt_profile
from .errors import CalibrationError, GesError, LevelError, NoiseBudgetError
from .ges_core import Encoding, GesParams, RandomSource, RingElement, ZeroTestParam, digest_int

logger = logging.getLogger(__name__)

MAX_KAPPA = 64
EXTRACT_GUARD_BITS = 16


@dataclass(frozen=True)
class CltPublicParams:
    x0: int
    t: int
    eta: int
    alpha_bits: int
    rho_noise: int
    nu: int
    kappa: int


@dataclass(frozen=True)
class CltZeroTest:
    pzt: int
    calibration_margin: int
    zero_bits: int          # largest |omega| bit length seen on known zeros


@dataclass(frozen=True, eq=False)
class CltSecretKey:
    __secret__ = True
    primes: Tuple[int, ...]
    small_primes: Tuple[int, ...]
    z: int
    z_inv_powers: Tuple[int, ...]
    z_powers: Tuple[int, ...]
    crt_coeffs: Tuple[int, ...]


def eta_for(kappa: int, nu: int, rho_noise: int, alpha_bits: int, eta_floor: int = 160, eta_slack: int = 32) -> int:
    return max(eta_floor, nu + kappa * (2 * rho_noise + alpha_bits) + eta_slack)


def noise_budget(public: CltPublicParams) -> int:
    """Largest numerator bound (bits) that still zero-tests correctly at level kappa."""
    return public.eta - public.nu - public.rho_noise - public.t.bit_length()


def _random_prime(bits: int, rng: RandomSource) -> mpz:
    while True:
        candidate = gmpy2.next_prime(mpz(rng.randbits(bits)) | (mpz(1) << (bits - 1)))
        if candidate.bit_length() == bits:
            return candidate


def _distinct_primes(count: int, bits: int, rng: RandomSource) -> List[mpz]:
    out: List[mpz] = []
    while len(out) < count:
        p = _random_prime(bits, rng)
        if p not in out:
            out.append(p)
    return out


def _build(kappa: int, eta: int, t: int, rho: int, alpha: int, nu: int, rng: RandomSource):
    primes = _distinct_primes(t, eta, rng)
    small = _distinct_primes(t, alpha, rng)
    x0 = mpz(1)
    for p in primes:
        x0 *= p
    while True:
        z = mpz(rng.randbelow(int(x0)))
        if z > 1 and gmpy2.gcd(z, x0) == 1:
            break
    z_inv = gmpy2.invert(z, x0)
    z_inv_powers = tuple(gmpy2.powmod(z_inv, k, x0) for k in range(kappa + 1))
    z_powers = tuple(gmpy2.powmod(z, k, x0) for k in range(kappa + 1))
    crt_coeffs = []
    for p in primes:
        xp = x0 // p
        crt_coeffs.append((xp * gmpy2.invert(xp % p, p)) % x0)
    zk = z_powers[kappa]
    pzt = mpz(0)
    for p, g in zip(primes, small):
        h = mpz(rng.randbits(rho)) | 1
        pzt += h * ((zk * gmpy2.invert(g, p)) % p) * (x0 // p)
    pzt %= x0
    public = CltPublicParams(x0=x0, t=t, eta=eta, alpha_bits=alpha, rho_noise=rho, nu=nu, kappa=kappa)
    secret = CltSecretKey(
        primes=tuple(primes), small_primes=tuple(small), z=z,
        z_inv_powers=z_inv_powers, z_powers=z_powers, crt_coeffs=tuple(crt_coeffs),
    )
    return public, secret, pzt


def _encode_raw(public: CltPublicParams, secret: CltSecretKey, level: int, residues: Sequence[int], noise_bits: int, rng: RandomSource) -> Encoding:
    acc = mpz(0)
    for p, g, m, coeff in zip(secret.primes, secret.small_primes, residues, secret.crt_coeffs):
        r = mpz(rng.randbits(noise_bits))
        acc += ((r * g + (m % g)) % p) * coeff
    c = (acc % public.x0) * secret.z_inv_powers[level] % public.x0
    return Encoding(level, c, noise_bits + public.alpha_bits + 1)


def _omega(public: CltPublicParams, pzt: int, payload: int) -> mpz:
    omega = (pzt * payload) % public.x0
    if omega > public.x0 >> 1:
        omega -= public.x0
    return omega


def _calibrate(public: CltPublicParams, secret: CltSecretKey, pzt: int, samples: int, rng: RandomSource) -> Tuple[int, int, bool]:
    """
    Build known-zero and known-nonzero level-kappa encodings the way the
    schemes do (kappa level-1 factors per side, one subtraction) and
    measure the bit gap of their zero-test values.
    """
    x0, rho = public.x0, public.rho_noise

    def vector() -> List[int]:
        return [rng.randbelow(int(g)) for g in secret.small_primes]

    def side(vectors: List[List[int]]) -> mpz:
        acc = mpz(1)
        for vec in vectors:
            acc = acc * _encode_raw(public, secret, 1, vec, rho + 1, rng).payload % x0
        return acc

    zero_bits, nonzero_bits = [], []
    for _ in range(samples):
        a = [vector() for _ in range(public.kappa)]
        b = [vector() for _ in range(public.kappa)]
        lhs = side(a)
        zero_bits.append(abs(_omega(public, pzt, (lhs - side(a)) % x0)).bit_length())
        nonzero_bits.append(abs(_omega(public, pzt, (lhs - side(b)) % x0)).bit_length())
    max_zero, min_nonzero = max(zero_bits), min(nonzero_bits)
    threshold = x0.bit_length() - public.nu
    margin = min_nonzero - max_zero
    return margin, max_zero, max_zero <= threshold < min_nonzero


def clt_inst_gen(
    lam: int,
    kappa: int,
    rng: RandomSource,
    nu: Optional[int] = None,
    rho_noise: Optional[int] = None,
    alpha_bits: Optional[int] = None,
    eta: Optional[int] = None,
    t: Optional[int] = None,
    profile: Optional[Path] = None,
) -> Tuple[CltPublicParams, CltZeroTest, CltSecretKey]:
    if not 1 <= kappa <= MAX_KAPPA:
        raise GesError(f"clt backend supports kappa in [1, {MAX_KAPPA}], got {kappa}")
    sched = load_clt_profile(profile, nu=nu, rho_noise=rho_noise, alpha_bits=alpha_bits)
    rho = sched["rho_noise"] if rho_noise is not None else max(sched["rho_noise"], lam)
    alpha, nu_bits = sched["alpha_bits"], sched["nu"]
    if nu_bits < 8:
        raise GesError(f"nu must be >= 8 bits, got {nu_bits}")
    eta_bits = eta or eta_for(kappa, nu_bits, rho, alpha, sched["eta_floor"], sched["eta_slack"])
    t_count = t or max(sched["t_floor"], kappa)

    for attempt in range(1, sched["retry_budget"] + 1):
        public, secret, pzt = _build(kappa, eta_bits, t_count, rho, alpha, nu_bits, rng)
        margin, zero_bits, separated = _calibrate(public, secret, pzt, sched["calibration_samples"], rng)
        if separated and margin >= sched["min_margin"]:
            logger.info("clt instance kappa=%d eta=%d t=%d nu=%d |x0|=%d bits, calibration margin %d bits",
                        kappa, eta_bits, t_count, nu_bits, public.x0.bit_length(), margin)
            return public, CltZeroTest(pzt=pzt, calibration_margin=margin, zero_bits=zero_bits), secret
        logger.debug("calibration attempt %d failed (margin=%d, eta=%d); growing eta", attempt, margin, eta_bits)
        eta_bits += sched["eta_step"]
    raise CalibrationError(
        f"zero-test calibration failed after {sched['retry_budget']} attempts "
        f"(kappa={kappa}, eta up to {eta_bits - sched['eta_step']}, t={t_count}, nu={nu_bits}, "
        f"rho={rho}, alpha={alpha})"
    )


def clt_encode_level(params: GesParams, secret: CltSecretKey, level: int, residues, noise_bits: int, rng: RandomSource) -> Encoding:
    public: CltPublicParams = params.public_payload
    if not 0 <= level <= public.kappa:
        raise LevelError(f"clt encode: level {level} outside [0, {public.kappa}]")
    if noise_bits + public.alpha_bits >= public.eta - public.nu:
        raise NoiseBudgetError(f"noise of {noise_bits} bits exceeds the instance budget (eta={public.eta}, nu={public.nu})")
    if isinstance(residues, RingElement):
        residues = residues.value
    if len(residues) != public.t:
        raise GesError(f"expected {public.t} residues, got {len(residues)}")
    return _encode_raw(public, secret, level, residues, noise_bits, rng)


def clt_decode(secret: CltSecretKey, e: Encoding) -> Tuple[int, ...]:
    """Secret-key decoding of the residue vector."""
    out = []
    for p, g in zip(secret.primes, secret.small_primes):
        num = (e.payload * secret.z_powers[e.level]) % p
        if num > p >> 1:
            num -= p
        out.append(int(num % g))
    return tuple(out)


def clt_is_zero(public: CltPublicParams, pzt: CltZeroTest, e: Encoding) -> bool:
    if e.level != public.kappa:
        raise LevelError(f"is_zero: level {e.level} != kappa {public.kappa}")
    return abs(_omega(public, pzt.pzt, e.payload)).bit_length() <= public.x0.bit_length() - public.nu


# ---------- backend interface used by ges_core ----------

def inst_gen(lam: int, kappa: int, rng: RandomSource, **options) -> Tuple[GesParams, ZeroTestParam, CltSecretKey]:
    public, zt, secret = clt_inst_gen(lam, kappa, rng, **{k: v for k, v in options.items() if k != "modulus"})
    return GesParams(lam=lam, kappa=kappa, backend_id="clt", public_payload=public), ZeroTestParam(zt), secret


def samp(params: GesParams, secret: CltSecretKey, rng: RandomSource) -> Encoding:
    residues = [rng.randbelow(int(g)) for g in secret.small_primes]
    return _encode_raw(params.public_payload, secret, 0, residues, params.public_payload.rho_noise, rng)


def encode(params: GesParams, secret: CltSecretKey, target_level: int, e: Encoding, rng: RandomSource) -> Encoding:
    return _encode_raw(params.public_payload, secret, target_level, clt_decode(secret, e), params.public_payload.rho_noise, rng)


def re_rand(params: GesParams, secret: CltSecretKey, level: int, e: Encoding, rng: RandomSource) -> Encoding:
    public: CltPublicParams = params.public_payload
    zero = _encode_raw(public, secret, level, [0] * public.t, public.rho_noise, rng)
    return Encoding(level, (e.payload + zero.payload) % public.x0, max(e.noise, zero.noise) + 1)


def add(params: GesParams, e1: Encoding, e2: Encoding) -> Encoding:
    x0 = params.public_payload.x0
    return Encoding(e1.level, (e1.payload + e2.payload) % x0, max(e1.noise, e2.noise) + 1)


def neg(params: GesParams, e1: Encoding) -> Encoding:
    return Encoding(e1.level, (-e1.payload) % params.public_payload.x0, e1.noise)


def mul(params: GesParams, e1: Encoding, e2: Encoding) -> Encoding:
    public: CltPublicParams = params.public_payload
    noise = e1.noise + e2.noise
    if noise > noise_budget(public):
        raise NoiseBudgetError(f"mul: noise bound {noise} bits exceeds budget {noise_budget(public)}")
    return Encoding(e1.level + e2.level, (e1.payload * e2.payload) % public.x0, noise)


def is_zero(params: GesParams, pzt: ZeroTestParam, e: Encoding) -> bool:
    return clt_is_zero(params.public_payload, pzt.payload, e)


def extract(params: GesParams, pzt: ZeroTestParam, e: Encoding) -> str:
    zt: CltZeroTest = pzt.payload
    shift = zt.zero_bits + EXTRACT_GUARD_BITS
    omega = _omega(params.public_payload, zt.pzt, e.payload)
    return digest_int((omega + (mpz(1) << (shift - 1))) >> shift)


def decode(secret: CltSecretKey, e: Encoding) -> Tuple[int, ...]:
    return clt_decode(secret, e)


def encode_value(params: GesParams, secret: CltSecretKey, level: int, residues, rng: RandomSource) -> Encoding:
    return clt_encode_level(params, secret, level, residues, params.public_payload.rho_noise, rng)


def payload_bound(params: GesParams) -> int:
    return int(params.public_payload.x0)


def fresh_noise(params: GesParams) -> int:
    """Bound carried by stored level-1 encodings (encode followed by re_rand)."""
    public: CltPublicParams = params.public_payload
    return public.rho_noise + public.alpha_bits + 2
