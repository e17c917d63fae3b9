"""Canonical report JSON, atomic emission, diffing and the text summary."""
from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Any, Dict, List

import numpy as np

from core.errors import InvalidInputError
from core.models import ConvergenceStudy, SuiteReport
from data.io_utils import atomic_write_text, read_json, write_frame_csv
from verify.studies import study_to_frame

IGNORED_KEYS = frozenset({"wall_clock"})


def _plain(value: Any) -> Any:
    """JSON-ready copy: numpy scalars unwrapped, tuples as lists, non-finite floats as strings."""
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_plain(v) for v in value.tolist()]
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
    if isinstance(value, Path):
        return str(value)
    return value


def canonical_json(payload: Any) -> str:
    """Sorted keys, shortest round-trip floats, fixed indentation, trailing newline."""
    return json.dumps(_plain(payload), sort_keys=True, indent=2, allow_nan=False, ensure_ascii=False) + "\n"


def report_payload(report: SuiteReport) -> Dict[str, Any]:
    payload = report.model_dump(mode="python", by_alias=True)
    if payload.get("wall_clock") is None:
        payload.pop("wall_clock", None)
    return payload


def emit_report(report: SuiteReport, path: str | Path) -> Path:
    return atomic_write_text(path, canonical_json(report_payload(report)))


def emit_study(study: ConvergenceStudy, path: str | Path) -> Path:
    return atomic_write_text(path, canonical_json(study.model_dump(mode="python", by_alias=True)))


def emit_study_csv(study: ConvergenceStudy, path: str | Path) -> Path:
    return write_frame_csv(study_to_frame(study), path)


def load_report(path: str | Path) -> Dict[str, Any]:
    payload = read_json(path)
    if not isinstance(payload, dict) or "reports" not in payload:
        raise InvalidInputError(f"{path} is not a suite report")
    return payload


def diff_reports(left: Any, right: Any, prefix: str = "") -> List[str]:
    """Paths at which two report documents differ (timing ignored)."""
    if isinstance(left, dict) and isinstance(right, dict):
        out: List[str] = []
        for key in sorted(set(left) | set(right)):
            if key in IGNORED_KEYS:
                continue
            path = f"{prefix}.{key}" if prefix else key
            if key not in left or key not in right:
                out.append(path)
            else:
                out.extend(diff_reports(left[key], right[key], path))
        return out
    if isinstance(left, list) and isinstance(right, list):
        if len(left) != len(right):
            return [f"{prefix}[len]"]
        out = []
        for i, (a, b) in enumerate(zip(left, right)):
            out.extend(diff_reports(a, b, f"{prefix}[{i}]"))
        return out
    return [] if left == right else [prefix or "<root>"]


class SuiteSummary:
    def __init__(self, report: SuiteReport):
        self.report = report

    @property
    def refused(self) -> int:
        return sum(1 for r in self.report.reports if r.refused is not None)

    @property
    def errors(self) -> int:
        return sum(1 for r in self.report.reports if r.error is not None)

    @property
    def asymptotic(self) -> int:
        return sum(1 for r in self.report.reports if r.status == "defect-only")

    def summary(self) -> dict:
        return {
            "fixture": self.report.fixture,
            "seed": self.report.seed,
            "checks": len(self.report.reports),
            "exact_passes": self.report.exact_passes,
            "exact_failures": self.report.exact_failures,
            "asymptotic": self.asymptotic,
            "refused": self.refused,
            "errors": self.errors,
            "studies_passed": f"{sum(1 for s in self.report.studies if s.passed)}/{len(self.report.studies)}",
        }

    def to_text(self) -> str:
        lines = ["=== Verification Report ==="]
        for k, v in self.summary().items():
            lines.append(f"  {k}: {v}")
        lines.append("")
        lines.append(f"  {'Check':<34} {'Tier':<11} {'Status':<12} {'Defect':>12} {'Tolerance':>12}")
        for r in self.report.reports:
            lines.append(f"  {r.check_id:<34} {r.tier:<11} {r.status:<12} {r.max_defect:>12.3e} {r.tolerance + r.tail_bound:>12.3e}")
        for s in self.report.studies:
            defects = ", ".join(f"{d:.2e}" for d in s.defects)
            lines.append(f"  study {s.study_id:<28} order {s.fitted_order:6.2f}  {'pass' if s.passed else 'FAIL'}  [{defects}]")
        return "\n".join(lines)
