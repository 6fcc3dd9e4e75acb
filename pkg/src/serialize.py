# src/serialize.py
"""
FirewallFile ("sofa/1"): canonical JSON for obfuscated firewalls.

Big integers travel as base64 of their big-endian magnitude (at least one
byte). Keys are sorted and separators compact, so save(load(x)) == x for
canonical files. Each rule carries a sha256 digest of its own canonical
form; loading recomputes it and range-checks every encoding.
"""

from __future__ import annotations

import base64
import binascii
import hashlib
import json
from pathlib import Path
from typing import Any, Callable, Dict, List, Literal, Optional, Tuple, Union

import gmpy2
from pydantic import BaseModel, ValidationError

from .errors import FormatVersionError, InputError, IntegrityError, SofaError
from .ges_clt import CltPublicParams, CltZeroTest
from .ges_core import Encoding, GesInstance, GesParams, ZeroTestParam, backend_module, secret_types
from .ges_transparent import TransparentPublic
from .models import (
    Action, BasicRule, BlockingRule, DncRule, EncodingPairUnit, Field, FieldLayout, NaiveRule,
    ObfuscatedFirewall,
)

FORMAT = "sofa/1"

# Names that would betray plaintext rules or key material if they ever
# showed up in a file.
DENYLIST = frozenset({
    "v", "W", "wildcards", "E", "UE", "eta", "alpha", "rho", "primes", "small_primes",
    "z", "z_inv_powers", "z_powers", "crt_coeffs", "secret_key", "filters", "index_sets",
})


# ---- DTOs

class LayoutFieldDTO(BaseModel):
    name: str
    header: str
    shift: int
    width: int


class LayoutDTO(BaseModel):
    name: str
    fields: List[LayoutFieldDTO]


class InstanceDTO(BaseModel):
    backend: str
    lam: int
    kappa: int
    public: Dict[str, Union[int, str]]
    pzt: Optional[Dict[str, Union[int, str]]] = None
    units: Optional[List[List[str]]] = None
    units_digest: Optional[str] = None


class RuleDTO(BaseModel):
    action: str
    digest: Optional[str] = None
    units: Optional[List[List[str]]] = None
    indices: Optional[List[int]] = None
    tables: Optional[List[List[List[str]]]] = None
    final: Optional[List[str]] = None
    parts: Optional[List["RuleDTO"]] = None


class FirewallFile(BaseModel):
    format: str
    scheme: Literal["naive", "basic", "blocking", "dnc"]
    default_action: str
    mode: Optional[str] = None
    layout: Optional[LayoutDTO] = None
    inner: Optional[str] = None
    part_widths: List[int] = []
    width: int
    instances: List[InstanceDTO]
    rules: List[RuleDTO]


def schema_keys() -> set:
    """Every property name reachable from the FirewallFile schema."""
    keys: set = set()

    def walk(node: Any) -> None:
        if isinstance(node, dict):
            for k, v in node.items():
                if k == "properties" and isinstance(v, dict):
                    keys.update(v)
                walk(v)
        elif isinstance(node, list):
            for item in node:
                walk(item)

    walk(FirewallFile.model_json_schema())
    return keys


# ---- primitives

def b64_int(value: int) -> str:
    value = int(value)
    if value < 0:
        raise SofaError("negative integers are not serializable")
    return base64.b64encode(value.to_bytes(max(1, (value.bit_length() + 7) // 8), "big")).decode("ascii")


def int_b64(text: str) -> int:
    try:
        return int.from_bytes(base64.b64decode(text, validate=True), "big")
    except (binascii.Error, ValueError) as exc:
        raise IntegrityError(f"malformed integer blob: {exc}") from exc


def canonical_json(doc: Any) -> str:
    return json.dumps(doc, sort_keys=True, separators=(",", ":"))


def _digest(doc: Dict[str, Any]) -> str:
    return hashlib.sha256(canonical_json(doc).encode("utf-8")).hexdigest()


def _refuse_secrets(obj: Any) -> None:
    if isinstance(obj, secret_types()) or getattr(type(obj), "__secret__", False):
        raise SofaError(f"refusing to serialize secret object {type(obj).__name__}")


# ---- backend public data

def _transparent_public(inst: GesInstance) -> Tuple[Dict, Optional[Dict]]:
    return {"q": b64_int(inst.params.public_payload.q)}, None


def _clt_public(inst: GesInstance) -> Tuple[Dict, Optional[Dict]]:
    pub: CltPublicParams = inst.params.public_payload
    zt: CltZeroTest = inst.pzt.payload
    public = {
        "x0": b64_int(pub.x0), "t": pub.t, "eta_bits": pub.eta, "alpha_bits": pub.alpha_bits,
        "rho_bits": pub.rho_noise, "nu": pub.nu,
    }
    return public, {"pzt": b64_int(zt.pzt), "margin": zt.calibration_margin, "zero_bits": zt.zero_bits}


def _transparent_load(dto: InstanceDTO) -> Tuple[Any, Any]:
    return TransparentPublic(int_b64(str(dto.public["q"]))), None


def _clt_load(dto: InstanceDTO) -> Tuple[Any, Any]:
    p, z = dto.public, dto.pzt or {}
    try:
        public = CltPublicParams(
            x0=gmpy2.mpz(int_b64(str(p["x0"]))), t=int(p["t"]), eta=int(p["eta_bits"]),
            alpha_bits=int(p["alpha_bits"]), rho_noise=int(p["rho_bits"]), nu=int(p["nu"]), kappa=dto.kappa,
        )
        zt = CltZeroTest(pzt=gmpy2.mpz(int_b64(str(z["pzt"]))), calibration_margin=int(z["margin"]),
                         zero_bits=int(z["zero_bits"]))
    except KeyError as exc:
        raise IntegrityError(f"clt instance missing public field {exc}") from None
    if not 0 <= zt.pzt < public.x0:
        raise IntegrityError("zero-test parameter outside [0, x0)")
    return public, zt


PUBLIC_CODECS: Dict[str, Tuple[Callable, Callable]] = {
    "transparent": (_transparent_public, _transparent_load),
    "clt": (_clt_public, _clt_load),
}


# ---- firewall -> document

def _enc(e: Encoding) -> str:
    return b64_int(e.payload)


def _unit(u: EncodingPairUnit) -> List[str]:
    return [_enc(u.u0), _enc(u.v0), _enc(u.u1), _enc(u.v1)]


def _rule_doc(rule) -> Dict[str, Any]:
    _refuse_secrets(rule)
    doc: Dict[str, Any] = {"action": rule.action.kind}
    if isinstance(rule, NaiveRule):
        doc["units"] = [_unit(u) for u in rule.units]
    elif isinstance(rule, BasicRule):
        doc["indices"] = list(rule.indices)
    elif isinstance(rule, BlockingRule):
        doc["tables"] = [[[_enc(u), _enc(v)] for u, v in table] for table in rule.tables]
    elif isinstance(rule, DncRule):
        doc["parts"] = [_rule_doc(sub) for sub in rule.parts]
        return doc
    doc["final"] = [_enc(rule.final[0]), _enc(rule.final[1])]
    return doc


def firewall_to_dict(fw: ObfuscatedFirewall) -> Dict[str, Any]:
    instances = []
    for inst, units in zip(fw.instances, fw.units):
        _refuse_secrets(inst.params.public_payload)
        _refuse_secrets(inst.pzt.payload)
        public, pzt = PUBLIC_CODECS[inst.params.backend_id][0](inst)
        doc = {"backend": inst.params.backend_id, "lam": inst.params.lam, "kappa": inst.params.kappa, "public": public}
        if pzt is not None:
            doc["pzt"] = pzt
        if units:
            doc["units"] = [_unit(u) for u in units]
            doc["units_digest"] = _digest({"units": doc["units"]})
        instances.append(doc)
    rules = []
    for rule in fw.rules:
        doc = _rule_doc(rule)
        doc["digest"] = _digest(doc)
        rules.append(doc)
    out: Dict[str, Any] = {
        "format": FORMAT, "scheme": fw.scheme, "default_action": fw.default_action.kind,
        "width": fw.width, "part_widths": list(fw.part_widths), "instances": instances, "rules": rules,
    }
    if fw.mode is not None:
        out["mode"] = fw.mode
    if fw.inner is not None:
        out["inner"] = fw.inner
    if fw.layout is not None:
        out["layout"] = {"name": fw.layout.name, "fields": [
            {"name": f.name, "header": f.header, "shift": f.shift, "width": f.width} for f in fw.layout.fields]}
    leaked = _keys(out) & DENYLIST
    if leaked:
        raise SofaError(f"refusing to serialize denied keys {sorted(leaked)}")
    # validate through the schema so emitted files always load
    return FirewallFile.model_validate(out).model_dump(exclude_none=True)


def _keys(node: Any) -> set:
    if isinstance(node, dict):
        return set(node).union(*(_keys(v) for v in node.values())) if node else set()
    if isinstance(node, list):
        return set().union(*(_keys(v) for v in node)) if node else set()
    return set()


def dumps_firewall(fw: ObfuscatedFirewall) -> str:
    return canonical_json(firewall_to_dict(fw)) + "\n"


def save_firewall(fw: ObfuscatedFirewall, path: Union[str, Path]) -> int:
    text = dumps_firewall(fw)
    Path(path).write_text(text, encoding="utf-8")
    return len(text.encode("utf-8"))


# ---- document -> firewall

def _action(kind: str, where: str) -> Action:
    if kind not in ("permit", "deny"):
        raise IntegrityError(f"{where}: unknown action '{kind}'")
    return Action(kind, kind)


class _Loader:
    def __init__(self, params: GesParams, where: str):
        self.where = where
        self.bound = backend_module(params.backend_id).payload_bound(params)
        self.noise = backend_module(params.backend_id).fresh_noise(params)

    def enc(self, text: str) -> Encoding:
        try:
            value = int_b64(text)
        except IntegrityError as exc:
            raise IntegrityError(f"{self.where}: {exc}") from None
        if value >= self.bound:
            raise IntegrityError(f"{self.where}: encoding outside the backend range")
        return Encoding(1, value, self.noise)

    def pair(self, items: List[str]):
        if len(items) != 2:
            raise IntegrityError(f"{self.where}: expected an encoding pair")
        return self.enc(items[0]), self.enc(items[1])

    def unit(self, items: List[str]) -> EncodingPairUnit:
        if len(items) != 4:
            raise IntegrityError(f"{self.where}: expected a four-encoding unit")
        return EncodingPairUnit(*(self.enc(x) for x in items))


def _load_rule(dto: RuleDTO, scheme: str, fw_meta: Dict[str, Any], instances, units, where: str):
    action = _action(dto.action, where)
    if scheme == "dnc":
        widths = fw_meta["part_widths"]
        if not dto.parts or len(dto.parts) != len(widths):
            raise IntegrityError(f"{where}: expected {len(widths)} parts")
        subs = tuple(
            _load_rule(sub, fw_meta["inner"], {"width": w}, [instances[j]], [units[j]], f"{where} part {j}")
            for j, (sub, w) in enumerate(zip(dto.parts, widths))
        )
        return DncRule(subs, action)
    ld = _Loader(instances[0].params, where)
    if dto.final is None:
        raise IntegrityError(f"{where}: missing final pair")
    final = ld.pair(dto.final)
    width = fw_meta["width"]
    if scheme == "naive":
        if not dto.units or len(dto.units) != width:
            raise IntegrityError(f"{where}: expected {width} units")
        return NaiveRule(tuple(ld.unit(u) for u in dto.units), final, action)
    if scheme == "basic":
        if dto.indices is None or len(dto.indices) != width:
            raise IntegrityError(f"{where}: expected {width} indices")
        if any(not 0 <= j < len(units[0]) for j in dto.indices):
            raise IntegrityError(f"{where}: unit index out of range")
        return BasicRule(tuple(dto.indices), final, action)
    layout: FieldLayout = fw_meta["layout"]
    if dto.tables is None or len(dto.tables) != layout.k:
        raise IntegrityError(f"{where}: expected {layout.k} tables")
    tables = []
    for table, dom in zip(dto.tables, layout.domains):
        if len(table) != dom:
            raise IntegrityError(f"{where}: table size {len(table)} != field domain {dom}")
        tables.append(tuple(ld.pair(p) for p in table))
    return BlockingRule(tuple(tables), final, action)


def firewall_from_dict(doc: Dict[str, Any]) -> ObfuscatedFirewall:
    if not isinstance(doc, dict):
        raise InputError("firewall file must hold a JSON object")
    if doc.get("format") != FORMAT:
        raise FormatVersionError(f"unsupported firewall format '{doc.get('format')}' (expected {FORMAT})")
    try:
        ff = FirewallFile.model_validate(doc)
    except ValidationError as exc:
        raise InputError(f"invalid firewall file: {exc.error_count()} schema errors; first: {exc.errors()[0]['msg']}") from None

    expected = len(ff.part_widths) if ff.scheme == "dnc" else 1
    if len(ff.instances) != expected:
        raise IntegrityError(f"expected {expected} GES instances, found {len(ff.instances)}")
    if ff.scheme == "dnc" and (ff.inner not in ("naive", "basic") or sum(ff.part_widths) != ff.width):
        raise IntegrityError("dnc parts inconsistent with width or inner scheme")

    instances: List[GesInstance] = []
    units: List[Tuple[EncodingPairUnit, ...]] = []
    for j, dto in enumerate(ff.instances):
        if dto.backend not in PUBLIC_CODECS:
            raise InputError(f"instance {j}: unsupported backend '{dto.backend}'")
        public, zt = PUBLIC_CODECS[dto.backend][1](dto)
        params = GesParams(lam=dto.lam, kappa=dto.kappa, backend_id=dto.backend, public_payload=public)
        inst = GesInstance(params, ZeroTestParam(zt))
        instances.append(inst)
        if dto.units:
            if dto.units_digest != _digest({"units": dto.units}):
                raise IntegrityError(f"instance {j}: shared units digest mismatch")
            ld = _Loader(params, f"instance {j} units")
            units.append(tuple(ld.unit(u) for u in dto.units))
        else:
            units.append(())

    layout = None
    if ff.layout is not None:
        layout = FieldLayout(ff.layout.name, tuple(Field(f.name, f.header, f.shift, f.width) for f in ff.layout.fields))
    meta = {"width": ff.width, "part_widths": ff.part_widths, "inner": ff.inner, "layout": layout}
    if ff.scheme == "blocking" and layout is None:
        raise IntegrityError("blocking firewall without a layout")

    rules = []
    for idx, dto in enumerate(ff.rules):
        where = f"rule {idx}"
        body = dto.model_dump(exclude_none=True)
        claimed = body.pop("digest", None)
        if claimed != _digest(body):
            raise IntegrityError(f"{where}: digest mismatch (corrupted rule)")
        rules.append(_load_rule(dto, ff.scheme, meta, instances, units, where))

    return ObfuscatedFirewall(
        scheme=ff.scheme, instances=tuple(instances), units=tuple(units), rules=tuple(rules),
        default_action=_action(ff.default_action, "default_action"), mode=ff.mode, layout=layout,
        inner=ff.inner, part_widths=tuple(ff.part_widths), width=ff.width,
    )


def loads_firewall(text: str) -> ObfuscatedFirewall:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"firewall file is not JSON: {exc}") from None
    return firewall_from_dict(doc)


def load_firewall(path: Union[str, Path]) -> ObfuscatedFirewall:
    path = Path(path)
    if not path.exists():
        raise InputError(f"firewall file not found: {path}")
    return loads_firewall(path.read_text(encoding="utf-8"))


def public_summary(fw: ObfuscatedFirewall) -> Dict[str, Any]:
    """What a cloud operator sees about a firewall without its encodings."""
    out = {
        "scheme": fw.scheme, "rules": len(fw.rules), "default_action": fw.default_action.kind,
        "width": fw.width, "mode": fw.mode, "inner": fw.inner, "part_widths": list(fw.part_widths),
        "layout": fw.layout.name if fw.layout else None,
        "instances": [],
    }
    for inst in fw.instances:
        entry = {"backend": inst.params.backend_id, "kappa": inst.params.kappa}
        if inst.params.backend_id == "clt":
            entry.update(x0_bits=int(inst.params.public_payload.x0.bit_length()), nu=inst.params.public_payload.nu,
                         calibration_margin=inst.pzt.payload.calibration_margin)
        out["instances"].append(entry)
    return out
