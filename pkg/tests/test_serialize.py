import json
from dataclasses import replace

import pytest
from conftest import bit_rule, bits_of

from src import serialize
from src.errors import FormatVersionError, InputError, IntegrityError, SofaError
from src.ges_core import GesInstance, RandomSource
from src.ges_transparent import TransparentSecretKey
from src.matcher import filter_packet
from src.models import DENY, PERMIT, BlockRuleSpec
from src.obfuscator import obfuscate_basic, obfuscate_blocking, obfuscate_dnc, obfuscate_naive
from src.rules import parse_layout
from src.serialize import (
    DENYLIST, FORMAT, dumps_firewall, load_firewall, loads_firewall, public_summary, save_firewall, schema_keys,
)


@pytest.fixture(scope="module")
def firewalls():
    rules = [bit_rule("1*0*10", DENY), bit_rule("0**1**", PERMIT), bit_rule("******", DENY)]
    layout = parse_layout("src_ip/2,src_ip/3")
    specs = [BlockRuleSpec((frozenset({1, 3}), frozenset({0, 5})), PERMIT)]
    return {
        "naive": (obfuscate_naive(rules, 12, "transparent", RandomSource(1), mode=None), 6),
        "basic": (obfuscate_basic(rules, None, 12, "transparent", RandomSource(2)), 6),
        "dnc": (obfuscate_dnc(rules, 3, "basic", 12, "transparent", RandomSource(3)), 6),
        "blocking": (obfuscate_blocking(specs, layout, 12, "transparent", RandomSource(4)), None),
        "clt": (obfuscate_basic(rules[:2], None, 12, "clt", RandomSource(5)), 6),
    }


@pytest.mark.parametrize("name", ["naive", "basic", "dnc", "blocking", "clt"])
def test_save_load_save_is_byte_identical(name, firewalls, tmp_path):
    fw, width = firewalls[name]
    path = tmp_path / f"{name}.json"
    size = save_firewall(fw, path)
    raw = path.read_bytes()
    assert size == len(raw)
    again = load_firewall(path)
    assert dumps_firewall(again).encode("utf-8") == raw
    if width:
        for x in range(1 << width):
            view = bits_of(x, width)
            assert filter_packet(again, view) == filter_packet(fw, view)
    else:
        for a in range(4):
            for b in range(8):
                assert filter_packet(again, (a, b)) == filter_packet(fw, (a, b))


def test_file_carries_no_secret_names(firewalls):
    for fw, _ in firewalls.values():
        doc = json.loads(dumps_firewall(fw))
        assert doc["format"] == FORMAT
        assert not (serialize._keys(doc) & DENYLIST)


def test_schema_cannot_express_secret_names():
    keys = schema_keys()
    assert {"format", "instances", "rules", "units_digest"} <= keys
    assert not (keys & DENYLIST)


def test_clt_instance_public_fields(firewalls):
    fw, _ = firewalls["clt"]
    inst = json.loads(dumps_firewall(fw))["instances"][0]
    assert set(inst["public"]) == {"x0", "t", "eta_bits", "alpha_bits", "rho_bits", "nu"}
    assert set(inst["pzt"]) == {"pzt", "margin", "zero_bits"}
    assert inst["pzt"]["margin"] >= 8


def test_refuses_secret_objects(firewalls):
    fw, _ = firewalls["naive"]
    leaky = replace(fw.instances[0].params, public_payload=TransparentSecretKey(7))
    bad = replace(fw, instances=(GesInstance(leaky, fw.instances[0].pzt),))
    with pytest.raises(SofaError, match="secret"):
        dumps_firewall(bad)


def _doc(firewalls, name):
    return json.loads(dumps_firewall(firewalls[name][0]))


def test_corrupted_rule_names_its_index(firewalls):
    doc = _doc(firewalls, "naive")
    unit = doc["rules"][1]["units"][0]
    unit[0] = "AA" + unit[0][2:] if not unit[0].startswith("AA") else "AQ" + unit[0][2:]
    with pytest.raises(IntegrityError, match="rule 1"):
        loads_firewall(json.dumps(doc))


def test_corrupted_units_detected(firewalls):
    doc = _doc(firewalls, "basic")
    doc["instances"][0]["units"].reverse()
    with pytest.raises(IntegrityError, match="digest"):
        loads_firewall(json.dumps(doc))


def test_out_of_range_encoding_rejected(firewalls):
    doc = _doc(firewalls, "naive")
    q = serialize.int_b64(doc["instances"][0]["public"]["q"])
    rule = doc["rules"][0]
    rule["final"][0] = serialize.b64_int(q + 1)
    rule.pop("digest")
    rule["digest"] = serialize._digest(rule)
    with pytest.raises(IntegrityError, match="outside"):
        loads_firewall(json.dumps(doc))


def test_unknown_format_version(firewalls):
    doc = _doc(firewalls, "basic")
    doc["format"] = "sofa/2"
    with pytest.raises(FormatVersionError):
        loads_firewall(json.dumps(doc))


def test_structural_errors(firewalls, tmp_path):
    with pytest.raises(InputError):
        loads_firewall("not json")
    with pytest.raises(InputError):
        loads_firewall("[1, 2]")
    with pytest.raises(InputError):
        load_firewall(tmp_path / "missing.json")
    doc = _doc(firewalls, "dnc")
    doc["instances"].pop()
    with pytest.raises(IntegrityError, match="instances"):
        loads_firewall(json.dumps(doc))


def test_public_summary(firewalls):
    info = public_summary(firewalls["dnc"][0])
    assert info["scheme"] == "dnc"
    assert info["part_widths"] == [2, 2, 2]
    assert [i["kappa"] for i in info["instances"]] == [3, 3, 3]
    clt = public_summary(firewalls["clt"][0])
    assert clt["instances"][0]["calibration_margin"] >= 8


def test_b64_int_edges():
    assert serialize.b64_int(0) == "AA=="
    assert serialize.int_b64(serialize.b64_int(1 << 200)) == 1 << 200
    with pytest.raises(IntegrityError):
        serialize.int_b64("@@@")
