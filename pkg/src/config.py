# src/config.py
import os
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Any, Dict, Optional

import yaml
from dotenv import load_dotenv

ROOT = Path(__file__).resolve().parents[1]
ACL_ROOT = ROOT / "data" / "acls"
DEFAULT_PROFILE = ROOT / "data" / "profiles" / "clt_default.yaml"
FIREWALL_ROOT = ROOT / "data" / "firewalls"

# Built-in CLT schedule; the YAML profile and CLI flags override these.
CLT_DEFAULTS: Dict[str, int] = {
    "rho_noise": 16,
    "alpha_bits": 16,
    "nu": 24,
    "eta_floor": 160,
    "eta_slack": 32,
    "eta_step": 64,
    "t_floor": 8,
    "calibration_samples": 32,
    "min_margin": 8,
    "retry_budget": 3,
}


@dataclass(frozen=True)
class Settings:
    seed: int
    lam: int
    backend: str
    workers: int
    blocking_cap: int
    log_level: str
    clt_profile: Path
    firewall_dir: Path


@lru_cache(maxsize=1)
def get_settings() -> Settings:
    load_dotenv()
    return Settings(
        seed=int(os.getenv("SOFA_SEED", "1")),
        lam=int(os.getenv("SOFA_LAMBDA", "12")),
        backend=os.getenv("SOFA_BACKEND", "transparent"),
        workers=int(os.getenv("SOFA_WORKERS", "1")),
        blocking_cap=int(os.getenv("SOFA_BLOCKING_CAP", "4096")),
        log_level=os.getenv("SOFA_LOG_LEVEL", "WARNING").upper(),
        clt_profile=Path(os.getenv("SOFA_CLT_PROFILE", str(DEFAULT_PROFILE))),
        firewall_dir=Path(os.getenv("SOFA_FIREWALL_DIR", str(FIREWALL_ROOT))),
    )


def _safe_load(path: Path) -> Dict[str, Any]:
    if not path.exists():
        return {}
    return yaml.safe_load(path.read_text(encoding="utf-8")) or {}


def load_clt_profile(path: Optional[Path] = None, **overrides: Optional[int]) -> Dict[str, int]:
    """
    Resolve the CLT parameter schedule: built-in defaults, then the YAML
    profile (`clt:` mapping), then explicit non-None overrides.
    """
    profile = dict(CLT_DEFAULTS)
    doc = _safe_load(path or get_settings().clt_profile)
    for key, value in (doc.get("clt") or {}).items():
        if key in profile:
            profile[key] = int(value)
    for key, value in overrides.items():
        if value is not None:
            profile[key] = int(value)
    return profile
