from dataclasses import replace

import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import chisquare

from src import ges_core as ges
from src import ges_transparent
from src.errors import GesError, LevelError
from src.ges_core import Encoding, RandomSource


def _enc(params, level, value):
    return ges_transparent.encode_value(params, level, value)


values = st.integers(min_value=0, max_value=(1 << 70))


@pytest.fixture(scope="module")
def kappa3_instance():
    return ges.inst_gen(12, 3, "transparent", RandomSource(13))


@settings(max_examples=1000, deadline=None)
@given(values, values, values)
def test_transparent_ring_laws(kappa3_instance, a, b, c):
    params, pzt, _ = kappa3_instance
    q = params.public_payload.q
    ea, eb, ec = _enc(params, 1, a), _enc(params, 1, b), _enc(params, 1, c)
    one = _enc(params, 1, 1)

    s = ges.add(params, 1, ea, eb)
    assert s.payload == (a + b) % q
    assert ges.add(params, 1, eb, ea) == s
    assert ges.is_zero(replace(params, kappa=1), pzt, ges.sub(params, 1, ea, ea))

    p = ges.mul(params, 1, ea, 1, eb)
    assert p.level == 2
    assert p.payload == (a * b) % q

    def top(e2):
        return ges.mul(params, 2, e2, 1, one)

    def same(x, y):
        assert x.level == y.level == params.kappa
        assert ges.extract(params, pzt, x) == ges.extract(params, pzt, y)
        assert ges.is_zero(params, pzt, ges.sub(params, params.kappa, x, y))

    # associativity and commutativity of mul at level kappa
    same(ges.mul(params, 2, p, 1, ec), ges.mul(params, 1, ea, 2, ges.mul(params, 1, eb, 1, ec)))
    same(ges.mul(params, 2, p, 1, ec), ges.mul(params, 2, ges.mul(params, 1, ec, 1, eb), 1, ea))
    # associativity of add, lifted to level kappa
    left = ges.add(params, 1, ges.add(params, 1, ea, eb), ec)
    right = ges.add(params, 1, ea, ges.add(params, 1, eb, ec))
    same(top(ges.mul(params, 1, left, 1, one)), top(ges.mul(params, 1, right, 1, one)))
    # distributivity
    dist = ges.mul(params, 1, ea, 1, ges.add(params, 1, eb, ec))
    split = ges.add(params, 2, p, ges.mul(params, 1, ea, 1, ec))
    assert dist.payload == split.payload
    same(top(dist), top(split))


def test_level_checks(transparent_instance):
    params, pzt, sk = transparent_instance
    rng = RandomSource(3)
    a = ges.samp(params, sk, rng)
    e1 = ges.encode(params, sk, 1, a, rng)
    e2 = ges.encode(params, sk, 2, a, rng)

    with pytest.raises(LevelError):
        ges.add(params, 1, e1, e2)
    with pytest.raises(LevelError):
        ges.encode(params, sk, 0, a, rng)
    with pytest.raises(LevelError):
        ges.encode(params, sk, params.kappa + 1, a, rng)
    with pytest.raises(LevelError):
        ges.encode(params, sk, 1, e1, rng)
    with pytest.raises(LevelError):
        ges.mul(params, 2, e2, 3, Encoding(3, 1))
    with pytest.raises(LevelError):
        ges.is_zero(params, pzt, e1)
    with pytest.raises(LevelError):
        ges.re_rand(params, sk, 2, e1, rng)


def test_inst_gen_rejects_bad_arguments():
    with pytest.raises(GesError):
        ges.inst_gen(0, 4, "transparent", RandomSource(1))
    with pytest.raises(GesError):
        ges.inst_gen(12, 0, "transparent", RandomSource(1))
    with pytest.raises(GesError):
        ges.inst_gen(12, 4, "ggh", RandomSource(1))
    with pytest.raises(GesError):
        ges.inst_gen(12, 4, "transparent", RandomSource(1), modulus=1 << 64)


def test_transparent_modulus_size():
    params, _, _ = ges.inst_gen(40, 2, "transparent", RandomSource(5))
    assert params.public_payload.q.bit_length() == 80
    params, _, _ = ges.inst_gen(12, 2, "transparent", RandomSource(5))
    assert params.public_payload.q.bit_length() == 64


def test_top_level_product_zero_tests(transparent_instance):
    params, pzt, sk = transparent_instance
    rng = RandomSource(9)
    xs = [ges.encode(params, sk, 1, ges.samp(params, sk, rng), rng) for _ in range(params.kappa)]
    top = ges.product(params, xs)
    assert top.level == params.kappa
    assert ges.is_zero(params, pzt, ges.sub(params, params.kappa, top, ges.product(params, xs[::-1])))
    other = ges.product(params, xs[1:] + [ges.encode(params, sk, 1, ges.samp(params, sk, rng), rng)])
    assert not ges.is_zero(params, pzt, ges.sub(params, params.kappa, top, other))
    assert ges.extract(params, pzt, top) == ges.extract(params, pzt, ges.product(params, xs[::-1]))
    assert ges.extract(params, pzt, top) != ges.extract(params, pzt, other)


def test_samp_is_uniform_mod_small_bins(transparent_instance):
    params, _, sk = transparent_instance
    rng = RandomSource(21)
    bins = [0] * 16
    for _ in range(3200):
        bins[ges.samp(params, sk, rng).payload % 16] += 1
    assert chisquare(bins).pvalue > 0.001


def test_zero_test_is_exact_for_a_small_prime():
    params, pzt, _ = ges.inst_gen(12, 2, "transparent", RandomSource(1), modulus=1021)
    q = params.public_payload.q
    one = _enc(params, 1, 1)
    for v in range(q):
        assert ges.is_zero(params, pzt, _enc(params, 2, v)) == (v == 0)
        assert ges.is_zero(params, pzt, ges.mul(params, 1, _enc(params, 1, v), 1, one)) == (v == 0)


def test_samp_is_uniform_mod_101():
    params, _, sk = ges.inst_gen(12, 2, "transparent", RandomSource(1), modulus=101)
    rng = RandomSource(22)
    bins = [0] * 101
    for _ in range(10_000):
        bins[ges.samp(params, sk, rng).payload] += 1
    assert chisquare(bins).pvalue > 0.01


def test_counter_scopes_merge_into_parent(transparent_instance):
    params, _, sk = transparent_instance
    rng = RandomSource(4)
    with ges.counting() as outer:
        ges.samp(params, sk, rng)
        with ges.counting() as inner:
            a = ges.samp(params, sk, rng)
            ges.encode(params, sk, 1, a, rng)
            ges.note_run()
        assert inner.samp == 1 and inner.encode == 1 and inner.runs == 1
    assert outer.samp == 2
    assert outer.encode == 1
    assert outer.runs == 1
    assert ges.active_counter() is None


def test_random_source_is_deterministic():
    a, b = RandomSource(77), RandomSource(77)
    assert [a.randbits(40) for _ in range(5)] == [b.randbits(40) for _ in range(5)]
    # spawn depends on the seed only
    c = RandomSource(77)
    c.randbits(100)
    assert RandomSource(77).spawn(3).randbits(64) == c.spawn(3).randbits(64)
    assert RandomSource(77).spawn(3).randbits(64) != RandomSource(77).spawn(4).randbits(64)


def test_random_source_sample_without_replacement():
    rng = RandomSource(8)
    drawn = rng.sample(range(10), 10)
    assert sorted(drawn) == list(range(10))
    with pytest.raises(ValueError):
        rng.sample(range(3), 4)
    with pytest.raises(ValueError):
        rng.randbelow(0)


def test_digest_int_handles_sign_and_zero():
    assert ges.digest_int(0) == ges.digest_int(0)
    assert ges.digest_int(5) != ges.digest_int(-5)
    assert len(ges.digest_int(1 << 300)) == 64
