from __future__ import annotations

from functools import lru_cache
from pathlib import Path
from typing import Any, Dict, List, Optional

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

from .analysis import LeakageQuery, leakage_monte_carlo, leakage_probability
from .config import get_settings
from .errors import InputError, IntegrityError
from .ges_core import RandomSource
from .loaders import decision_record, parse_packet
from .matcher import filter_packets
from .models import ObfuscatedFirewall
from .serialize import load_firewall, public_summary

# ---------- Pydantic DTOs ----------


class PacketDTO(BaseModel):
    src_ip: str = "0.0.0.0"
    src_port: int = 0
    dst_ip: str = "0.0.0.0"
    dst_port: int = 0
    proto: Any = 0


class FilterRequest(BaseModel):
    firewall: str = Field(..., description="Firewall file name inside the service's firewall directory.")
    packets: List[PacketDTO] = Field(default_factory=list)
    hide_rule_index: bool = Field(default=True, description="Omit matched rule indices from decisions.")


class DecisionDTO(BaseModel):
    index: int
    action: Optional[str] = None
    rule: Optional[int] = None
    error: Optional[str] = None


class FilterResponse(BaseModel):
    firewall: str
    decisions: List[DecisionDTO]


class FirewallInfo(BaseModel):
    scheme: str
    rules: int
    default_action: str
    width: int
    mode: Optional[str] = None
    layout: Optional[str] = None
    inner: Optional[str] = None
    part_widths: List[int] = []
    instances: List[Dict[str, Any]]


class LeakageRequest(BaseModel):
    M: int
    N: int
    w1: int
    w2: int
    n: int
    trials: Optional[int] = Field(default=None, description="Also run a Monte Carlo estimate with this many trials.")
    seed: int = 1


class LeakageResponse(BaseModel):
    probability: float
    estimate: Optional[float] = None
    stderr: Optional[float] = None
    trials: Optional[int] = None


# ---------- helpers ----------

def _firewall_path(name: str) -> Path:
    root = get_settings().firewall_dir.resolve()
    path = (root / name).resolve()
    if path.parent != root:
        raise HTTPException(status_code=400, detail="firewall must name a file in the firewall directory")
    if not path.is_file():
        raise HTTPException(status_code=404, detail=f"firewall '{name}' not found")
    return path


@lru_cache(maxsize=8)
def _cached_firewall(path: str, mtime: float) -> ObfuscatedFirewall:
    return load_firewall(path)


def _load(name: str) -> ObfuscatedFirewall:
    path = _firewall_path(name)
    try:
        return _cached_firewall(str(path), path.stat().st_mtime)
    except IntegrityError as exc:
        raise HTTPException(status_code=422, detail=str(exc)) from exc
    except InputError as exc:
        raise HTTPException(status_code=400, detail=str(exc)) from exc


# ---------- FastAPI application ----------

app = FastAPI(
    title="SOFA cloud filter",
    version="1.0.0",
    description="Filters packets against obfuscated firewalls; the service never sees plaintext rules.",
)


@app.get("/firewall", response_model=FirewallInfo)
def firewall_info(name: str) -> FirewallInfo:
    return FirewallInfo(**public_summary(_load(name)))


@app.post("/filter", response_model=FilterResponse)
def filter_endpoint(req: FilterRequest) -> FilterResponse:
    fw = _load(req.firewall)
    parsed, errors = [], {}
    for idx, dto in enumerate(req.packets):
        try:
            parsed.append((idx, parse_packet(dto.model_dump())))
        except ValueError as exc:
            errors[idx] = str(exc)
    try:
        decisions = filter_packets(fw, [p for _, p in parsed], workers=get_settings().workers)
    except InputError as exc:
        raise HTTPException(status_code=400, detail=str(exc)) from exc
    by_index = {idx: d for (idx, _), d in zip(parsed, decisions)}
    out = [
        DecisionDTO(**decision_record(idx, by_index.get(idx), req.hide_rule_index, errors.get(idx)))
        for idx in range(len(req.packets))
    ]
    return FilterResponse(firewall=req.firewall, decisions=out)


@app.post("/leakage", response_model=LeakageResponse)
def leakage(req: LeakageRequest) -> LeakageResponse:
    try:
        q = LeakageQuery(M=req.M, N=req.N, w1=req.w1, w2=req.w2, n=req.n)
        resp = LeakageResponse(probability=leakage_probability(q))
        if req.trials is not None:
            mc = leakage_monte_carlo(q, req.trials, RandomSource(req.seed))
            resp = LeakageResponse(probability=resp.probability, estimate=mc.estimate, stderr=mc.stderr, trials=mc.trials)
    except InputError as exc:
        raise HTTPException(status_code=400, detail=str(exc)) from exc
    return resp
