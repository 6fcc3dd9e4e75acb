# src/render.py
from typing import Any, List, Optional

import pandas as pd

from .loaders import packet_record
from .models import MatchDecision
from .pipeline import VerifyResult
from .serialize import public_summary


def _cell(value: Any) -> str:
    text = "" if value is None else str(value)
    return (text or "-").replace("|", "\\|").replace("\n", "<br>")


def _decision(d: MatchDecision) -> str:
    return f"{d.action.kind} (rule {d.rule})" if d.rule is not None else f"{d.action.kind} (default)"


def _table(headers: List[str], rows: List[List[Any]]) -> List[str]:
    lines = ["| " + " | ".join(headers) + " |", "|" + "---|" * len(headers)]
    lines.extend("| " + " | ".join(_cell(c) for c in row) + " |" for row in rows)
    return lines


def render_verify_report(result: VerifyResult, fw=None, title: Optional[str] = None, max_rows: int = 50) -> str:
    lines = [f"# {title or 'Obfuscated firewall verification'}", ""]
    verdict = "PASS" if result.passed else "FAIL"
    lines.append(f"**Verdict:** {verdict} ({result.agree}/{result.total} decisions agree with the plaintext oracle)")
    lines.append(f"**Packets:** {result.source}")
    lines.append(f"**Filter time:** {result.seconds:.3f}s\n")

    if fw is not None:
        info = public_summary(fw)
        lines.append("## Firewall")
        lines += _table(["Scheme", "Rules", "Default", "Mode / layout", "Instances (kappa)"], [[
            info["scheme"], info["rules"], info["default_action"], info["mode"] or info["layout"],
            ", ".join(str(i["kappa"]) for i in info["instances"]),
        ]])
        lines.append("")

    margins = [m for m in result.margins if m is not None]
    if margins:
        lines.append("## Zero-test calibration")
        lines += _table(["Instance", "Margin (bits)"], [[i, m] for i, m in enumerate(result.margins)])
        lines.append("")

    lines.append("## Disagreements")
    if not result.disagreements:
        lines.append("None.")
    else:
        rows = []
        for d in result.disagreements[:max_rows]:
            rec = packet_record(d.packet)
            packet = f"{rec['src_ip']}:{rec['src_port']} -> {rec['dst_ip']}:{rec['dst_port']} {rec['proto']}"
            rows.append([d.index, packet, _decision(d.expected), _decision(d.observed)])
        lines += _table(["#", "Packet", "Oracle", "Obfuscated"], rows)
        if len(result.disagreements) > max_rows:
            lines.append(f"\n(+{len(result.disagreements) - max_rows} more)")
    return "\n".join(lines) + "\n"


def render_frame(df: pd.DataFrame, floatfmt: str = "{:.6f}") -> str:
    """Markdown table for a bench frame."""
    if df.empty:
        return "(no rows)\n"
    rows = [[floatfmt.format(v) if isinstance(v, float) else v for v in rec] for rec in df.itertuples(index=False)]
    return "\n".join(_table(list(df.columns), rows)) + "\n"
