"""Machine-readable run reports.

A report captures the command, content hashes of every input file, the
metric values, and wall-clock bounds. JSON rendering is canonical (sorted
keys) so identical runs produce identical bytes; markdown rendering is for
human eyes.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from datetime import datetime

from . import __version__ as _version
from .errors import MissingFileError

_DISPLAY_NAMES = {
    "chair_s": "CHAIR_s",
    "recall": "Recall",
    "recall_without_hallucination": "Recall_w/oH",
    "pacc": "PAcc",
    "acc": "Acc",
    "bleu_1": "BLEU-1",
    "bleu_2": "BLEU-2",
    "bleu_3": "BLEU-3",
    "bleu_4": "BLEU-4",
    "cider": "CIDEr",
}


def sha256_file(path: str) -> str:
    digest = hashlib.sha256()
    try:
        with open(path, "rb") as handle:
            for chunk in iter(lambda: handle.read(1 << 20), b""):
                digest.update(chunk)
    except FileNotFoundError as exc:
        raise MissingFileError(path) from exc
    return digest.hexdigest()


@dataclass
class Report:
    command: str
    inputs: dict[str, str]
    metrics: dict[str, float]
    started_at: datetime
    finished_at: datetime
    details: dict = field(default_factory=dict)
    tool_version: str = _version

    def to_dict(self) -> dict:
        payload = {
            "command": self.command,
            "inputs": dict(sorted(self.inputs.items())),
            "metrics": self.metrics,
            "started_at": self.started_at.isoformat(),
            "finished_at": self.finished_at.isoformat(),
            "tool_version": self.tool_version,
        }
        if self.details:
            payload["details"] = self.details
        return payload


def _metric_name(key: str) -> str:
    return _DISPLAY_NAMES.get(key, key)


def report_render(report: Report, fmt: str = "json") -> str:
    if fmt == "json":
        return json.dumps(report.to_dict(), sort_keys=True, ensure_ascii=False, indent=2) + "\n"
    if fmt == "markdown":
        lines = [
            f"# {report.command}",
            "",
            f"- tool version: {report.tool_version}",
            f"- started: {report.started_at.isoformat()}",
            f"- finished: {report.finished_at.isoformat()}",
            "",
        ]
        if report.inputs:
            lines.append("## Inputs")
            lines.append("")
            for path, digest in sorted(report.inputs.items()):
                lines.append(f"- `{path}` sha256 `{digest}`")
            lines.append("")
        lines.append("## Metrics")
        lines.append("")
        lines.append("| metric | value |")
        lines.append("| --- | --- |")
        for key, value in report.metrics.items():
            shown = f"{value:.6f}" if isinstance(value, float) else str(value)
            lines.append(f"| {_metric_name(key)} | {shown} |")
        lines.append("")
        return "\n".join(lines)
    raise ValueError(f"unknown report format: {fmt!r}")


def load_report(path: str) -> Report:
    try:
        with open(path, encoding="utf-8") as handle:
            payload = json.load(handle)
    except FileNotFoundError as exc:
        raise MissingFileError(path) from exc
    return Report(
        command=payload["command"],
        inputs=payload.get("inputs", {}),
        metrics=payload.get("metrics", {}),
        started_at=datetime.fromisoformat(payload["started_at"]),
        finished_at=datetime.fromisoformat(payload["finished_at"]),
        details=payload.get("details", {}),
        tool_version=payload.get("tool_version", _version),
    )
