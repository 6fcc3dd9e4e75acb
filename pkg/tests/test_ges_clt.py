import pytest

from src import ges_clt
from src import ges_core as ges
from src.errors import CalibrationError, GesError, NoiseBudgetError
from src.ges_core import Encoding, RandomSource


def _level1(params, sk, rng):
    return ges.re_rand(params, sk, 1, ges.encode(params, sk, 1, ges.samp(params, sk, rng), rng), rng)


def test_schedule_follows_profile(clt_instance):
    params, pzt, _ = clt_instance
    pub = params.public_payload
    assert params.backend_id == "clt"
    assert pub.t == 8
    assert pub.rho_noise == 16
    assert pub.eta == ges_clt.eta_for(4, pub.nu, pub.rho_noise, pub.alpha_bits)
    assert pub.x0.bit_length() >= pub.t * (pub.eta - 1)
    assert pzt.payload.calibration_margin >= 8
    assert 0 < pzt.payload.zero_bits <= pub.x0.bit_length() - pub.nu


def test_rho_tracks_lambda():
    params, _, _ = ges.inst_gen(24, 2, "clt", RandomSource(2))
    assert params.public_payload.rho_noise == 24
    params, _, _ = ges.inst_gen(24, 2, "clt", RandomSource(2), rho_noise=18)
    assert params.public_payload.rho_noise == 18


def test_encode_decode_and_homomorphisms(clt_instance):
    params, _, sk = clt_instance
    rng = RandomSource(31)
    gs = sk.small_primes
    for _ in range(200):
        a, b = ges.samp(params, sk, rng), ges.samp(params, sk, rng)
        ra, rb = ges_clt.decode(sk, a), ges_clt.decode(sk, b)
        ea, eb = ges.encode(params, sk, 1, a, rng), ges.encode(params, sk, 1, b, rng)
        assert ges_clt.decode(sk, ea) == ra

        s = ges_clt.decode(sk, ges.add(params, 1, ea, eb))
        assert s == tuple((x + y) % g for x, y, g in zip(ra, rb, gs))
        m = ges_clt.decode(sk, ges.mul(params, 1, ea, 1, eb))
        assert m == tuple((x * y) % g for x, y, g in zip(ra, rb, gs))
        n = ges_clt.decode(sk, ges.neg(params, 1, ea))
        assert n == tuple((-x) % g for x, g in zip(ra, gs))


def test_re_rand_changes_payload_not_value(clt_instance):
    params, _, sk = clt_instance
    rng = RandomSource(32)
    e = ges.encode(params, sk, 1, ges.samp(params, sk, rng), rng)
    r = ges.re_rand(params, sk, 1, e, rng)
    assert r.payload != e.payload
    assert ges_clt.decode(sk, r) == ges_clt.decode(sk, e)
    assert r.noise == ges_clt.fresh_noise(params)


def test_zero_test_on_scheme_shaped_products(clt_instance):
    params, pzt, sk = clt_instance
    rng = RandomSource(33)
    for _ in range(5):
        xs = [_level1(params, sk, rng) for _ in range(params.kappa)]
        ys = [_level1(params, sk, rng) for _ in range(params.kappa)]
        # same values, different noise
        xs2 = [ges.re_rand(params, sk, 1, x, rng) for x in xs]
        top = ges.product(params, xs)
        assert ges.is_zero(params, pzt, ges.sub(params, params.kappa, top, ges.product(params, xs2)))
        assert not ges.is_zero(params, pzt, ges.sub(params, params.kappa, top, ges.product(params, ys)))


def test_extract_ignores_noise(clt_instance):
    params, pzt, sk = clt_instance
    rng = RandomSource(34)
    top = ges.product(params, [_level1(params, sk, rng) for _ in range(params.kappa)])
    again = ges.re_rand(params, sk, params.kappa, top, rng)
    other = ges.product(params, [_level1(params, sk, rng) for _ in range(params.kappa)])
    assert ges.extract(params, pzt, top) == ges.extract(params, pzt, again)
    assert ges.extract(params, pzt, top) != ges.extract(params, pzt, other)


def test_random_payload_is_not_zero(clt_instance):
    params, pzt, _ = clt_instance
    rng = RandomSource(36)
    x0 = params.public_payload.x0
    # a hit has probability about 2^(1 - nu) per draw
    hits = sum(ges.is_zero(params, pzt, Encoding(params.kappa, rng.randbelow(x0))) for _ in range(10_000))
    assert hits == 0


def test_noise_budget_is_enforced(clt_instance):
    params, _, sk = clt_instance
    budget = ges_clt.noise_budget(params.public_payload)
    rng = RandomSource(35)
    e = _level1(params, sk, rng)
    heavy = Encoding(1, e.payload, budget)
    with pytest.raises(NoiseBudgetError):
        ges.mul(params, 1, heavy, 1, e)
    with pytest.raises(NoiseBudgetError):
        ges_clt.clt_encode_level(params, sk, 1, [0] * params.public_payload.t, params.public_payload.eta, rng)


def test_encode_level_checks_residue_count(clt_instance):
    params, _, sk = clt_instance
    with pytest.raises(GesError):
        ges_clt.encode_value(params, sk, 1, [1, 2], RandomSource(1))


def test_calibration_retries_then_fails(monkeypatch):
    seen = []

    def never_separates(public, secret, pzt, samples, rng):
        seen.append(public.eta)
        return 0, 0, False

    monkeypatch.setattr(ges_clt, "_calibrate", never_separates)
    with pytest.raises(CalibrationError) as exc:
        ges.inst_gen(12, 2, "clt", RandomSource(1), eta=160)
    assert seen == [160, 224, 288]
    assert "3 attempts" in str(exc.value)


def test_kappa_bound():
    with pytest.raises(GesError):
        ges.inst_gen(12, ges_clt.MAX_KAPPA + 1, "clt", RandomSource(1))


def test_small_nu_rejected():
    with pytest.raises(GesError):
        ges.inst_gen(12, 2, "clt", RandomSource(1), nu=4)
