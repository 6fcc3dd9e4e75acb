import pytest

from src.errors import AclSyntaxError, InputError, RuleCompileError, SchemeConfigError
from src.ges_core import RandomSource
from src.matcher import oracle_match
from src.models import DENY, PERMIT, PacketHeader, PortRange
from src.rules import (
    LAYOUTS, acl_match, compile_bit, compile_block, format_acl, header_from_bits, ip_to_int,
    packet_bits, packet_tuple, parse_acl, parse_layout, parse_line, proto_number,
)
from src.rules_registry import load_all_packs, load_pack, resolve_pack

TABLE1 = """
# four rules
deny    192.168.45.*    *       *               *        *
permit  10.*.*.*        *       192.168.4.*     80       TCP
permit  10.56.*.*       *       192.168.*.*     [22, 88] TCP
deny    114.212.190.*   8000    *               8090     UDP
"""


def _pkt(src="0.0.0.0", sport=0, dst="0.0.0.0", dport=0, proto=6):
    return PacketHeader(ip_to_int(src), sport, ip_to_int(dst), dport, proto)


def test_parse_table1():
    rules = parse_acl(TABLE1)
    assert len(rules) == 4
    assert rules[0].src_ip == (192, 168, 45, None)
    assert rules[0].dst_ip == (None, None, None, None)
    assert rules[1].dst_port == PortRange(80, 80)
    assert rules[2].dst_port == PortRange(22, 88)
    assert rules[2].line_no == 5
    assert rules[3].proto == "UDP"
    assert [r.action for r in rules] == [DENY, PERMIT, PERMIT, DENY]


def test_format_then_parse_keeps_rules():
    rules = parse_acl(TABLE1)
    assert parse_acl(format_acl(rules)) == rules


def test_action_aliases():
    assert parse_line("allow * * * * *", 1).action == PERMIT
    assert parse_line("DROP 1.2.3.4 * * * *", 1).action == DENY


@pytest.mark.parametrize("line,fragment", [
    ("deny 1.2.3 * * * *", "4 octets"),
    ("deny 1.2.3.300 * * * *", "malformed octet"),
    ("deny * [90,80] * * *", "inverted port range"),
    ("deny * 70000 * * *", "out of range"),
    ("deny * * * * SCTP", "unknown protocol"),
    ("reject * * * * *", "unknown action"),
    ("deny * * * *", "expected 6 fields"),
])
def test_syntax_errors_name_the_line(line, fragment):
    with pytest.raises(AclSyntaxError) as exc:
        parse_acl("# header\n" + line)
    assert exc.value.line_no == 2
    assert fragment in str(exc.value)
    assert isinstance(exc.value, InputError)


def test_acl_match_direct():
    rules = parse_acl(TABLE1)
    assert acl_match(rules[0], _pkt("192.168.45.9"))
    assert not acl_match(rules[0], _pkt("192.168.46.9"))
    assert acl_match(rules[1], _pkt("10.9.9.9", 1234, "192.168.4.7", 80, 6))
    assert not acl_match(rules[1], _pkt("10.9.9.9", 1234, "192.168.4.7", 80, 17))
    assert acl_match(rules[2], _pkt("10.56.1.1", 5, "192.168.0.1", 88, 6))
    assert not acl_match(rules[2], _pkt("10.56.1.1", 5, "192.168.0.1", 89, 6))


def test_compile_bit_standard():
    rule = parse_line("deny 10.1.*.* * * * *", 1)
    br = compile_bit(rule, "standard")
    assert br.n == 32
    assert br.wildcards == frozenset(range(16, 32))
    assert br.v[:16] == tuple(int(b) for b in "0000101000000001")


def test_standard_mode_rejects_other_headers():
    rule = parse_line("deny 10.1.*.* * * 80 TCP", 3)
    with pytest.raises(RuleCompileError) as exc:
        compile_bit(rule, "standard")
    assert exc.value.line_no == 3


def test_extended_mode_rejects_port_ranges():
    rules = parse_acl(TABLE1)
    assert compile_bit(rules[1], "extended").n == 104
    with pytest.raises(RuleCompileError, match="not bit-expressible"):
        compile_bit(rules[2], "extended")


def test_compile_bit_agrees_with_packet_bits():
    rule = parse_acl(TABLE1)[3]
    br = compile_bit(rule, "extended")
    p = _pkt("114.212.190.3", 8000, "1.2.3.4", 8090, 17)
    bits = packet_bits(p, "extended")
    assert all(bits[i] == br.v[i] for i in range(br.n) if i not in br.wildcards)


def test_block_compilation_of_port_range():
    rule = parse_acl(TABLE1)[2]
    spec = compile_block(rule, LAYOUTS["extended-bytes"])
    # dst_port hi byte is 0, lo byte covers 22..88
    names = [f.name for f in LAYOUTS["extended-bytes"].fields]
    assert spec.filters[names.index("dst_port.hi")] == frozenset({0})
    assert spec.filters[names.index("dst_port.lo")] == frozenset(range(22, 89))
    assert spec.filters[names.index("src_ip.1")] == frozenset({56})
    assert len(spec.filters[names.index("src_ip.2")]) == 256


def test_block_compilation_rejects_non_product_range():
    rule = parse_line("deny * * * [250,260] *", 7)
    with pytest.raises(RuleCompileError, match="cross product"):
        compile_block(rule, LAYOUTS["extended-bytes"])
    # a 16-bit port field takes any range
    spec = compile_block(rule, LAYOUTS["extended"])
    assert len(spec.filters[9]) == 11


def test_block_compilation_rejects_uncovered_bits():
    rule = parse_line("deny * * 10.0.0.1 * *", 1)
    with pytest.raises(RuleCompileError, match="does not cover"):
        compile_block(rule, LAYOUTS["octets"])


def test_packet_views():
    p = _pkt("10.1.2.3", 443, "8.8.8.8", 53, 17)
    assert packet_tuple(p, LAYOUTS["octets"]) == (10, 1, 2, 3)
    assert packet_tuple(p, LAYOUTS["extended-bytes"])[4:6] == (1, 187)
    assert header_from_bits(packet_bits(p, "standard")).src_ip == p.src_ip
    assert header_from_bits(packet_bits(p, "extended"), "extended") == p


def test_parse_layout_compact_form():
    layout = parse_layout("src_ip/8,src_ip/8,dst_port/4@0")
    assert [f.shift for f in layout.fields] == [24, 16, 0]
    assert layout.domains == (256, 256, 16)
    with pytest.raises(SchemeConfigError, match="overlaps"):
        parse_layout("src_ip/8@0,src_ip/4@4")
    with pytest.raises(SchemeConfigError):
        parse_layout("mac/8")
    with pytest.raises(SchemeConfigError):
        parse_layout("src_ip/20")


def test_shipped_packs_load():
    packs = {p.pack_id: p for p in load_all_packs()}
    assert {"table1", "toy8", "standard50"} <= set(packs)
    assert len(packs["table1"].rules) == 4
    assert len(packs["standard50"].rules) == 50
    assert packs["standard50"].mode == "standard"
    for rule in packs["standard50"].rules:
        assert compile_bit(rule, "standard").n == 32


def test_resolve_pack_by_file(tmp_path):
    path = tmp_path / "mine.acl"
    path.write_text("permit 1.*.*.* * * * *\n", encoding="utf-8")
    pack = resolve_pack(str(path))
    assert pack.pack_id == "mine"
    assert pack.default_action == DENY
    with pytest.raises(InputError):
        resolve_pack("no-such-pack")


@pytest.mark.parametrize("line", [
    "deny 1.2.3.² * * * *",
    "deny * ²² * * *",
    "deny * [1,³] * * *",
    "deny 1.2.3.٣ * * * *",
])
def test_non_ascii_digits_are_syntax_errors(line):
    with pytest.raises(AclSyntaxError) as exc:
        parse_acl(line)
    assert exc.value.line_no == 1


def test_non_ascii_digits_in_packet_fields():
    with pytest.raises(ValueError, match="bad IPv4"):
        ip_to_int("1.2.3.²")
    with pytest.raises(ValueError, match="unknown protocol"):
        proto_number("¹⁷")


def test_table1_first_rule_bit_form():
    rule = parse_acl(TABLE1)[0]
    br = compile_bit(rule, "standard")
    assert "".join(map(str, br.v)) == "11000000" "10101000" "00101101" "00000000"
    assert br.wildcards == frozenset(range(24, 32))
    assert br.action == DENY
    spec = compile_block(rule, LAYOUTS["octets"])
    assert spec.filters[:3] == (frozenset({192}), frozenset({168}), frozenset({45}))
    assert spec.filters[3] == frozenset(range(256))
    bits = packet_bits(_pkt("192.168.45.7"), "standard")
    assert "".join(map(str, bits)) == "11000000" "10101000" "00101101" "00000111"


def test_pack_layout_is_validated_on_load(tmp_path):
    pack = tmp_path / "bad"
    pack.mkdir()
    (pack / "rules.acl").write_text("deny 10.*.*.* * * * *\n", encoding="utf-8")
    (pack / "meta.yaml").write_text("layout: src_ip/8@0,src_ip/4@4\n", encoding="utf-8")
    with pytest.raises(SchemeConfigError, match="overlaps"):
        load_pack(pack)
    (pack / "meta.yaml").write_text("layout: src_ip/40\n", encoding="utf-8")
    with pytest.raises(InputError):
        resolve_pack(str(pack))


def _views_agree(rule, bit, block, layout, p):
    direct = acl_match(rule, p)
    assert oracle_match(bit, packet_bits(p, "standard")) == direct
    assert oracle_match(block, packet_tuple(p, layout)) == direct
    return direct


@pytest.mark.slow
def test_bit_and_block_views_agree_on_16_bit_prefixes():
    rules = parse_acl("""
    deny    10.1.*.*     * * * *
    permit  10.*.*.*     * * * *
    deny    *.7.*.*      * * * *
    permit  * * * * *
    """)
    layout = parse_layout("src_ip/8,src_ip/8")
    compiled = [(r, compile_bit(r, "standard"), compile_block(r, layout)) for r in rules]
    for x in range(1 << 16):
        p = _pkt(f"{x >> 8}.{x & 255}.3.9")
        hits = [_views_agree(r, bit, block, layout, p) for r, bit, block in compiled]
        assert hits[3]


def test_bit_and_block_views_agree_on_random_packets():
    rules = resolve_pack("standard50").rules
    layout = LAYOUTS["octets"]
    compiled = [(r, compile_bit(r, "standard"), compile_block(r, layout)) for r in rules]
    rng = RandomSource(404)
    matched = 0
    for i in range(10_000):
        if i % 2:
            src = rng.randbits(32)
        else:
            # fill a random rule's wildcard octets
            octets = rules[rng.randbelow(len(rules))].src_ip
            src = 0
            for o in octets:
                src = (src << 8) | (rng.randbelow(256) if o is None else o)
        p = PacketHeader(src, 0, 0, 0, 6)
        matched += any([_views_agree(r, bit, block, layout, p) for r, bit, block in compiled])
    assert matched >= 5_000
