# src/loaders.py
"""Packet and decision files (JSONL), ACL files, and seeded packet corpora."""

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Union

from pydantic import BaseModel, ValidationError, field_validator

from .errors import InputError
from .ges_core import RandomSource
from .models import AclRule, MatchDecision, PacketHeader
from .rules import header_sets, int_to_ip, ip_to_int, parse_acl, proto_number, PROTO_NAMES

COMMON_PROTOS = (1, 6, 17)


class PacketRecord(BaseModel):
    src_ip: str = "0.0.0.0"
    src_port: int = 0
    dst_ip: str = "0.0.0.0"
    dst_port: int = 0
    proto: Union[int, str] = 0

    @field_validator("src_port", "dst_port")
    @classmethod
    def _port(cls, v: int) -> int:
        if not 0 <= v <= 65535:
            raise ValueError(f"port {v} out of range")
        return v

    def to_header(self) -> PacketHeader:
        return PacketHeader(
            src_ip=ip_to_int(self.src_ip), src_port=self.src_port,
            dst_ip=ip_to_int(self.dst_ip), dst_port=self.dst_port,
            proto=proto_number(self.proto),
        )


@dataclass(frozen=True)
class PacketLine:
    index: int
    packet: Optional[PacketHeader]
    error: Optional[str] = None


def parse_packet(obj) -> PacketHeader:
    try:
        return PacketRecord.model_validate(obj).to_header()
    except ValidationError as exc:
        raise ValueError("; ".join(e["msg"] for e in exc.errors())) from None


def read_packets(path: Union[str, Path]) -> List[PacketLine]:
    """One record per non-blank line. Bad lines are kept with their error so output stays aligned."""
    path = Path(path)
    if not path.exists():
        raise InputError(f"packet file not found: {path}")
    out: List[PacketLine] = []
    index = 0
    for raw in path.read_text(encoding="utf-8").splitlines():
        if not raw.strip():
            continue
        try:
            out.append(PacketLine(index, parse_packet(json.loads(raw))))
        except (ValueError, TypeError) as exc:
            out.append(PacketLine(index, None, str(exc)))
        index += 1
    return out


def packet_record(p: PacketHeader) -> dict:
    return {
        "src_ip": int_to_ip(p.src_ip), "src_port": p.src_port,
        "dst_ip": int_to_ip(p.dst_ip), "dst_port": p.dst_port,
        "proto": PROTO_NAMES.get(p.proto, p.proto),
    }


def write_packets(packets: Iterable[PacketHeader], path: Union[str, Path]) -> None:
    Path(path).write_text("".join(json.dumps(packet_record(p)) + "\n" for p in packets), encoding="utf-8")


def decision_record(index: int, decision: Optional[MatchDecision], hide_rule_index: bool = False,
                    error: Optional[str] = None) -> dict:
    if decision is None:
        return {"index": index, "error": error or "unparseable packet"}
    rec = {"index": index, "action": decision.action.kind}
    if decision.rule is not None and not hide_rule_index:
        rec["rule"] = decision.rule
    return rec


def write_decisions(records: Sequence[dict], path: Union[str, Path]) -> None:
    Path(path).write_text("".join(json.dumps(r, sort_keys=True) + "\n" for r in records), encoding="utf-8")


def load_acl(path: Union[str, Path]) -> List[AclRule]:
    path = Path(path)
    if not path.exists():
        raise InputError(f"ACL file not found: {path}")
    return parse_acl(path.read_text(encoding="utf-8"))


# ---- corpora

def _inside(kind: str, a: int, b: int, width: int, rng: RandomSource) -> int:
    if kind == "range":
        return a + rng.randbelow(b - a + 1)
    return (rng.randbits(width) & ~a) | b


def sample_inside(rule: AclRule, rng: RandomSource) -> PacketHeader:
    """A packet drawn from the rule's own match set."""
    sets = header_sets(rule)
    widths = {"src_ip": 32, "src_port": 16, "dst_ip": 32, "dst_port": 16}
    values = {h: _inside(*sets[h], w, rng) for h, w in widths.items()}
    kind, mask, value = sets["proto"]
    values["proto"] = value if mask else COMMON_PROTOS[rng.randbelow(len(COMMON_PROTOS))]
    return PacketHeader(**values)


def random_packet(rng: RandomSource) -> PacketHeader:
    return PacketHeader(
        src_ip=rng.randbits(32), src_port=rng.randbits(16), dst_ip=rng.randbits(32),
        dst_port=rng.randbits(16), proto=COMMON_PROTOS[rng.randbelow(len(COMMON_PROTOS))],
    )


def generate_packets(rules: Sequence[AclRule], count: int, rng: RandomSource, hit_ratio: float = 0.5) -> List[PacketHeader]:
    """Uniform packets mixed with packets drawn inside random rules, so first-match paths get exercised."""
    out = []
    for _ in range(count):
        if rules and rng.random() < hit_ratio:
            out.append(sample_inside(rules[rng.randbelow(len(rules))], rng))
        else:
            out.append(random_packet(rng))
    return out
