# src/rules.py
"""
Rule model: ACL text -> AclRule -> BitRule (bit schemes) or BlockRuleSpec
(blocking), plus the packet views both kinds of firewall match against.

ACL grammar, one rule per line:

    <action> <src_ip> <src_port> <dst_ip> <dst_port> <proto>

`#` starts a comment. IPs are dotted quads whose octets are 0-255 or `*`
(a bare `*` wildcards the whole address). Ports are `*`, a literal, or an
inclusive range `[a,b]`. Protocols are TCP, UDP, ICMP, ANY (`*` = ANY).
"""

import re
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from .errors import AclSyntaxError, RuleCompileError, SchemeConfigError
from .models import (
    HEADER_BITS, AclRule, Action, BitRule, BlockRuleSpec, Field, FieldLayout,
    PacketHeader, PortRange,
)

ACTIONS = {"permit": "permit", "allow": "permit", "deny": "deny", "drop": "deny"}
PROTO_NUMBERS = {"TCP": 6, "UDP": 17, "ICMP": 1}
PROTO_NAMES = {v: k for k, v in PROTO_NUMBERS.items()}

# Bit views: ordered (header, width) segments, big-endian within each header.
MODES: Dict[str, Tuple[Tuple[str, int], ...]] = {
    "standard": (("src_ip", 32),),
    "extended": (("src_ip", 32), ("src_port", 16), ("dst_ip", 32), ("dst_port", 16), ("proto", 8)),
}

_RANGE_RX = re.compile(r"\[\s*([0-9]+)\s*,\s*([0-9]+)\s*\]")
_NUMBER_RX = re.compile(r"[0-9]+")
_WILD = "*"


def _is_number(token: str) -> bool:
    return _NUMBER_RX.fullmatch(token) is not None


# ---- layouts

def _octets(header: str) -> List[Field]:
    return [Field(f"{header}.{j}", header, 24 - 8 * j, 8) for j in range(4)]


def _bytes16(header: str) -> List[Field]:
    return [Field(f"{header}.hi", header, 8, 8), Field(f"{header}.lo", header, 0, 8)]


def _make_layout(name: str, fields: Sequence[Field]) -> FieldLayout:
    layout = FieldLayout(name, tuple(fields))
    validate_layout(layout)
    return layout


LAYOUTS: Dict[str, FieldLayout] = {}


def validate_layout(layout: FieldLayout) -> None:
    if not layout.fields:
        raise SchemeConfigError(f"layout '{layout.name}' has no fields")
    used: Dict[str, int] = {}
    for f in layout.fields:
        if f.header not in HEADER_BITS:
            raise SchemeConfigError(f"layout '{layout.name}': unknown header '{f.header}'")
        if not 1 <= f.width <= 16:
            raise SchemeConfigError(f"layout '{layout.name}': field {f.name} width must be in [1, 16]")
        if f.shift < 0 or f.shift + f.width > HEADER_BITS[f.header]:
            raise SchemeConfigError(f"layout '{layout.name}': field {f.name} exceeds the {f.header} header")
        mask = ((1 << f.width) - 1) << f.shift
        if used.get(f.header, 0) & mask:
            raise SchemeConfigError(f"layout '{layout.name}': field {f.name} overlaps another field")
        used[f.header] = used.get(f.header, 0) | mask


def parse_layout(text: str, name: Optional[str] = None) -> FieldLayout:
    """
    Named layout, or the compact form `header/width[@shift],...`. Without a
    shift a field takes the next bits of its header from the top down.
    """
    text = (text or "").strip()
    if text in LAYOUTS:
        return LAYOUTS[text]
    fields: List[Field] = []
    cursor: Dict[str, int] = {}
    for token in filter(None, (t.strip() for t in text.split(","))):
        m = re.fullmatch(r"([a-z_]+)/(\d+)(?:@(\d+))?", token)
        if not m:
            raise SchemeConfigError(f"bad layout field '{token}' (expected header/width[@shift])")
        header, width = m.group(1), int(m.group(2))
        if header not in HEADER_BITS:
            raise SchemeConfigError(f"unknown header '{header}' in layout")
        top = cursor.get(header, HEADER_BITS[header])
        shift = int(m.group(3)) if m.group(3) is not None else top - width
        cursor[header] = shift
        fields.append(Field(f"{header}@{shift}", header, shift, width))
    return _make_layout(name or text, fields)


LAYOUTS.update({
    "octets": _make_layout("octets", _octets("src_ip")),
    "extended-bytes": _make_layout(
        "extended-bytes",
        _octets("src_ip") + _bytes16("src_port") + _octets("dst_ip") + _bytes16("dst_port")
        + [Field("proto", "proto", 0, 8)],
    ),
    "extended": _make_layout(
        "extended",
        _octets("src_ip") + [Field("src_port", "src_port", 0, 16)] + _octets("dst_ip")
        + [Field("dst_port", "dst_port", 0, 16), Field("proto", "proto", 0, 8)],
    ),
})


# ---- parsing

def _parse_ip(token: str, line_no: int) -> Tuple[Optional[int], ...]:
    if token == _WILD:
        return (None, None, None, None)
    parts = token.split(".")
    if len(parts) != 4:
        raise AclSyntaxError(line_no, f"malformed address '{token}' (expected 4 octets)")
    out: List[Optional[int]] = []
    for part in parts:
        if part == _WILD:
            out.append(None)
        elif _is_number(part) and int(part) <= 255:
            out.append(int(part))
        else:
            raise AclSyntaxError(line_no, f"malformed octet '{part}' in '{token}'")
    return tuple(out)


def _parse_port(token: str, line_no: int) -> Optional[PortRange]:
    if token == _WILD:
        return None
    m = _RANGE_RX.fullmatch(token)
    if m:
        lo, hi = int(m.group(1)), int(m.group(2))
    elif _is_number(token):
        lo = hi = int(token)
    else:
        raise AclSyntaxError(line_no, f"malformed port '{token}'")
    if hi > 65535:
        raise AclSyntaxError(line_no, f"port {hi} out of range")
    if lo > hi:
        raise AclSyntaxError(line_no, f"inverted port range [{lo},{hi}]")
    return PortRange(lo, hi)


def _parse_proto(token: str, line_no: int) -> str:
    if token == _WILD:
        return "ANY"
    up = token.upper()
    if up != "ANY" and up not in PROTO_NUMBERS:
        raise AclSyntaxError(line_no, f"unknown protocol '{token}'")
    return up


def parse_line(line: str, line_no: int) -> Optional[AclRule]:
    body = line.split("#", 1)[0].strip()
    if not body:
        return None
    body = _RANGE_RX.sub(lambda m: f"[{m.group(1)},{m.group(2)}]", body)
    tokens = body.split()
    if len(tokens) != 6:
        raise AclSyntaxError(line_no, f"expected 6 fields, got {len(tokens)}")
    action_tok = tokens[0]
    kind = ACTIONS.get(action_tok.lower())
    if kind is None:
        raise AclSyntaxError(line_no, f"unknown action '{action_tok}'")
    return AclRule(
        src_ip=_parse_ip(tokens[1], line_no),
        src_port=_parse_port(tokens[2], line_no),
        dst_ip=_parse_ip(tokens[3], line_no),
        dst_port=_parse_port(tokens[4], line_no),
        proto=_parse_proto(tokens[5], line_no),
        action=Action(kind, action_tok),
        line_no=line_no,
    )


def parse_acl(text: str) -> List[AclRule]:
    """Ordered rule list; priority is file order."""
    rules = []
    for line_no, line in enumerate(text.splitlines(), start=1):
        rule = parse_line(line, line_no)
        if rule is not None:
            rules.append(rule)
    return rules


def _fmt_ip(ip: Sequence[Optional[int]]) -> str:
    if all(o is None for o in ip):
        return _WILD
    return ".".join(_WILD if o is None else str(o) for o in ip)


def _fmt_port(port: Optional[PortRange]) -> str:
    if port is None:
        return _WILD
    return str(port.lo) if port.is_literal else f"[{port.lo},{port.hi}]"


def format_rule(rule: AclRule) -> str:
    proto = _WILD if rule.proto == "ANY" else rule.proto
    return " ".join([
        rule.action.kind, _fmt_ip(rule.src_ip), _fmt_port(rule.src_port),
        _fmt_ip(rule.dst_ip), _fmt_port(rule.dst_port), proto,
    ])


def format_acl(rules: Iterable[AclRule]) -> str:
    return "".join(format_rule(r) + "\n" for r in rules)


# ---- header match sets
# A header's match set is either a bit cube (fixed mask + value) or an
# inclusive integer range (port ranges).

Cube = Tuple[str, int, int]          # ("cube", mask, value)
Span = Tuple[str, int, int]          # ("range", lo, hi)


def _ip_cube(ip: Sequence[Optional[int]]) -> Cube:
    mask = value = 0
    for j, octet in enumerate(ip):
        if octet is not None:
            mask |= 0xFF << (24 - 8 * j)
            value |= octet << (24 - 8 * j)
    return ("cube", mask, value)


def _port_set(port: Optional[PortRange]):
    if port is None or port.is_full:
        return ("cube", 0, 0)
    if port.is_literal:
        return ("cube", 0xFFFF, port.lo)
    return ("range", port.lo, port.hi)


def header_sets(rule: AclRule) -> Dict[str, Tuple[str, int, int]]:
    return {
        "src_ip": _ip_cube(rule.src_ip),
        "src_port": _port_set(rule.src_port),
        "dst_ip": _ip_cube(rule.dst_ip),
        "dst_port": _port_set(rule.dst_port),
        "proto": ("cube", 0, 0) if rule.proto == "ANY" else ("cube", 0xFF, PROTO_NUMBERS[rule.proto]),
    }


def acl_match(rule: AclRule, p: PacketHeader) -> bool:
    """Direct plaintext match of a surface rule."""
    for header, (kind, a, b) in header_sets(rule).items():
        x = getattr(p, header)
        if kind == "cube" and (x & a) != b:
            return False
        if kind == "range" and not a <= x <= b:
            return False
    return True


# ---- bit compilation

def compile_bit(rule: AclRule, mode: str = "standard") -> BitRule:
    if mode not in MODES:
        raise SchemeConfigError(f"unknown mode '{mode}' (expected one of {', '.join(MODES)})")
    sets = header_sets(rule)
    if mode == "standard":
        extra = [h for h in ("src_port", "dst_ip", "dst_port", "proto") if sets[h][1] != 0 or sets[h][0] != "cube"]
        if extra:
            raise RuleCompileError(
                f"standard mode matches the source address only; {', '.join(extra)} must be '*'", rule.line_no)
    v: List[int] = []
    wild: List[int] = []
    for header, width in MODES[mode]:
        kind, mask, value = sets[header]
        if kind != "cube":
            raise RuleCompileError(
                f"{header} range [{mask},{value}] is not bit-expressible; use a literal, '*', or the blocking scheme",
                rule.line_no)
        for bit in range(width - 1, -1, -1):
            if (mask >> bit) & 1:
                v.append((value >> bit) & 1)
            else:
                wild.append(len(v))
                v.append(0)
    return BitRule(tuple(v), frozenset(wild), rule.action)


def compile_bits(rules: Iterable[AclRule], mode: str = "standard") -> List[BitRule]:
    return [compile_bit(r, mode) for r in rules]


# ---- block compilation

def _project(kind: str, a: int, b: int, f: Field) -> frozenset:
    fmask = (1 << f.width) - 1
    if kind == "cube":
        m, val = (a >> f.shift) & fmask, (b >> f.shift) & fmask
        return frozenset(x for x in range(f.domain) if x & m == val)
    return frozenset((x >> f.shift) & fmask for x in range(a, b + 1))


def compile_block(rule: AclRule, layout: FieldLayout) -> BlockRuleSpec:
    sets = header_sets(rule)
    filters = [frozenset()] * layout.k
    covered: Dict[str, List[int]] = {}
    for i, f in enumerate(layout.fields):
        covered.setdefault(f.header, []).append(i)
    for header, (kind, a, b) in sets.items():
        idx = covered.get(header, [])
        for i in idx:
            filters[i] = _project(kind, a, b, layout.fields[i])
        free_bits = HEADER_BITS[header] - sum(layout.fields[i].width for i in idx)
        if kind == "cube":
            cover_mask = 0
            for i in idx:
                f = layout.fields[i]
                cover_mask |= ((1 << f.width) - 1) << f.shift
            if a & ~cover_mask:
                raise RuleCompileError(
                    f"{header} constrains bits that layout '{layout.name}' does not cover", rule.line_no)
            continue
        size = 1 << free_bits
        for i in idx:
            size *= len(filters[i])
        if size != b - a + 1:
            raise RuleCompileError(
                f"{header} range [{a},{b}] is not a cross product of fields under layout '{layout.name}'",
                rule.line_no)
    return BlockRuleSpec(tuple(filters), rule.action)


def compile_blocks(rules: Iterable[AclRule], layout: FieldLayout) -> List[BlockRuleSpec]:
    return [compile_block(r, layout) for r in rules]


# ---- packet views

def packet_bits(p: PacketHeader, mode: str = "standard") -> Tuple[int, ...]:
    bits: List[int] = []
    for header, width in MODES[mode]:
        x = getattr(p, header)
        bits.extend((x >> bit) & 1 for bit in range(width - 1, -1, -1))
    return tuple(bits)


def packet_tuple(p: PacketHeader, layout: FieldLayout) -> Tuple[int, ...]:
    return tuple((getattr(p, f.header) >> f.shift) & (f.domain - 1) for f in layout.fields)


def header_from_bits(bits: Sequence[int], mode: str = "standard") -> PacketHeader:
    """Inverse of packet_bits; headers outside the mode are zero."""
    values = dict.fromkeys(HEADER_BITS, 0)
    pos = 0
    for header, width in MODES[mode]:
        x = 0
        for b in bits[pos:pos + width]:
            x = (x << 1) | b
        values[header] = x
        pos += width
    return PacketHeader(**values)


def ip_to_int(text: str) -> int:
    parts = text.split(".")
    if len(parts) != 4 or not all(_is_number(p) and int(p) <= 255 for p in parts):
        raise ValueError(f"bad IPv4 address '{text}'")
    out = 0
    for p in parts:
        out = (out << 8) | int(p)
    return out


def int_to_ip(x: int) -> str:
    return ".".join(str((x >> s) & 0xFF) for s in (24, 16, 8, 0))


def proto_number(token) -> int:
    if isinstance(token, int):
        if not 0 <= token <= 255:
            raise ValueError(f"protocol number {token} out of range")
        return token
    up = str(token).upper()
    if up in PROTO_NUMBERS:
        return PROTO_NUMBERS[up]
    if _is_number(up) and int(up) <= 255:
        return int(up)
    raise ValueError(f"unknown protocol '{token}'")
