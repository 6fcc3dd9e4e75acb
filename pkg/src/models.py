from dataclasses import dataclass, field
from typing import FrozenSet, Optional, Tuple, Union

from .ges_core import Encoding, GesInstance

HEADER_BITS = {"src_ip": 32, "src_port": 16, "dst_ip": 32, "dst_port": 16, "proto": 8}

# ---- rule model

@dataclass(frozen=True)
class Action:
    kind: str                                   # 'permit' | 'deny'
    raw: str = field(default="", compare=False)

    def __str__(self) -> str:
        return self.kind


PERMIT = Action("permit", "permit")
DENY = Action("deny", "deny")


@dataclass(frozen=True)
class PortRange:
    lo: int
    hi: int

    @property
    def is_literal(self) -> bool:
        return self.lo == self.hi

    @property
    def is_full(self) -> bool:
        return self.lo == 0 and self.hi == 65535


Octet = Optional[int]                            # None = wildcard
IpPattern = Tuple[Octet, Octet, Octet, Octet]


@dataclass(frozen=True)
class AclRule:
    src_ip: IpPattern
    src_port: Optional[PortRange]               # None = wildcard
    dst_ip: IpPattern
    dst_port: Optional[PortRange]
    proto: str                                  # TCP | UDP | ICMP | ANY
    action: Action
    line_no: int = field(default=0, compare=False)


@dataclass(frozen=True)
class BitRule:
    """R = (v, W, A). Wildcard positions are 0-based; v is 0 on every wildcard."""
    v: Tuple[int, ...]
    wildcards: FrozenSet[int]
    action: Action

    def __post_init__(self):
        if any(b not in (0, 1) for b in self.v):
            raise ValueError("v must be a 0/1 vector")
        for i in self.wildcards:
            if not 0 <= i < len(self.v):
                raise ValueError(f"wildcard position {i} outside [0, {len(self.v)})")
            if self.v[i]:
                raise ValueError(f"v[{i}] must be 0 on a wildcard position")

    @property
    def n(self) -> int:
        return len(self.v)


@dataclass(frozen=True)
class Field:
    name: str
    header: str
    shift: int
    width: int

    @property
    def domain(self) -> int:
        return 1 << self.width


@dataclass(frozen=True)
class FieldLayout:
    name: str
    fields: Tuple[Field, ...]

    @property
    def k(self) -> int:
        return len(self.fields)

    @property
    def domains(self) -> Tuple[int, ...]:
        return tuple(f.domain for f in self.fields)

    @property
    def bits(self) -> int:
        return sum(f.width for f in self.fields)


@dataclass(frozen=True)
class BlockRuleSpec:
    filters: Tuple[FrozenSet[int], ...]         # F_i per field; F_i = I_i is a field wildcard
    action: Action

    def __post_init__(self):
        for i, f in enumerate(self.filters):
            if not f:
                raise ValueError(f"filter set for field {i} is empty")


@dataclass(frozen=True)
class PacketHeader:
    src_ip: int
    src_port: int
    dst_ip: int
    dst_port: int
    proto: int


# ---- matcher

@dataclass(frozen=True)
class MatchDecision:
    action: Action
    rule: Optional[int] = None                  # None -> default action applied


# ---- obfuscated forms

EncodingPair = Tuple[Encoding, Encoding]        # (u, v)


@dataclass(frozen=True)
class EncodingPairUnit:
    u0: Encoding
    v0: Encoding
    u1: Encoding
    v1: Encoding

    def pair(self, bit: int) -> EncodingPair:
        return (self.u1, self.v1) if bit else (self.u0, self.v0)


@dataclass(frozen=True)
class IndexSets:
    """E / UE after the permutation. Builder-only; never leaves the obfuscator."""
    __secret__ = True
    E: Tuple[int, ...]
    UE: Tuple[int, ...]


@dataclass(frozen=True)
class BasicSchemeConfig:
    M: int
    N: int

    @classmethod
    def for_width(cls, n: int) -> "BasicSchemeConfig":
        return cls(M=2 * n, N=2 * n)


@dataclass(frozen=True)
class NaiveRule:
    units: Tuple[EncodingPairUnit, ...]         # one unit (two pairs) per bit
    final: EncodingPair
    action: Action


@dataclass(frozen=True)
class BasicRule:
    indices: Tuple[int, ...]                    # P_r, into the shared unit array
    final: EncodingPair
    action: Action


@dataclass(frozen=True)
class BlockingRule:
    tables: Tuple[Tuple[EncodingPair, ...], ...]  # per field, indexed by field value
    final: EncodingPair
    action: Action


@dataclass(frozen=True)
class DncRule:
    parts: Tuple[Union[NaiveRule, BasicRule], ...]
    action: Action


ObfuscatedRule = Union[NaiveRule, BasicRule, BlockingRule, DncRule]


@dataclass(frozen=True)
class ObfuscatedFirewall:
    scheme: str                                 # naive | basic | blocking | dnc
    instances: Tuple[GesInstance, ...]          # one per dnc part, else one
    units: Tuple[Tuple[EncodingPairUnit, ...], ...]  # shared units per instance (basic inner only)
    rules: Tuple[ObfuscatedRule, ...]
    default_action: Action = DENY
    mode: Optional[str] = None                  # bit view: standard | extended | None (raw vectors)
    layout: Optional[FieldLayout] = None        # blocking only
    inner: Optional[str] = None                 # dnc only
    part_widths: Tuple[int, ...] = ()
    width: int = 0                              # n for bit schemes, k for blocking
