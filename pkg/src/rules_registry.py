from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional

import yaml

from .config import ACL_ROOT
from .errors import InputError, SchemeConfigError
from .models import AclRule, Action
from .rules import ACTIONS, MODES, parse_acl, parse_layout


@dataclass(frozen=True)
class AclPack:
    pack_id: str
    rules: List[AclRule]
    default_action: Action
    mode: str
    layout: str
    description: str = ""


def _safe_load(path: Path) -> Dict:
    if not path.exists():
        return {}
    try:
        return yaml.safe_load(path.read_text(encoding="utf-8")) or {}
    except yaml.YAMLError as exc:
        raise InputError(f"{path}: {exc}") from exc


def _default_action(token: Optional[str]) -> Action:
    kind = ACTIONS.get((token or "deny").lower())
    if kind is None:
        raise InputError(f"unknown default action '{token}'")
    return Action(kind, token or "deny")


def load_pack(pack_dir: Path) -> AclPack:
    rules_path = pack_dir / "rules.acl"
    if not rules_path.exists():
        raise InputError(f"{pack_dir}: missing rules.acl")
    meta = _safe_load(pack_dir / "meta.yaml")
    meta = meta.get("meta", meta)
    mode = meta.get("mode", "standard")
    if mode not in MODES:
        raise InputError(f"{pack_dir}: unknown mode '{mode}'")
    layout = meta.get("layout", "octets")
    try:
        parse_layout(layout)
    except SchemeConfigError as exc:
        raise SchemeConfigError(f"{pack_dir}: {exc}") from exc
    return AclPack(
        pack_id=meta.get("pack_id") or pack_dir.name,
        rules=parse_acl(rules_path.read_text(encoding="utf-8")),
        default_action=_default_action(meta.get("default_action")),
        mode=mode,
        layout=layout,
        description=meta.get("description", ""),
    )


def load_all_packs(root: Path = ACL_ROOT) -> List[AclPack]:
    root = Path(root)
    if not root.is_dir():
        return []
    return [load_pack(d) for d in sorted(root.iterdir()) if d.is_dir() and (d / "rules.acl").exists()]


def resolve_pack(name_or_path: str, root: Path = ACL_ROOT) -> AclPack:
    """A pack directory, a pack name under `root`, or a bare .acl file (deny default, standard mode)."""
    path = Path(name_or_path)
    if path.is_dir():
        return load_pack(path)
    if path.is_file():
        meta_path = path.with_name("meta.yaml")
        if meta_path.exists() and path.name == "rules.acl":
            return load_pack(path.parent)
        return AclPack(path.stem, parse_acl(path.read_text(encoding="utf-8")), _default_action(None), "standard", "octets")
    candidate = Path(root) / name_or_path
    if candidate.is_dir():
        return load_pack(candidate)
    raise InputError(f"no ACL pack or file named '{name_or_path}'")
