from __future__ import annotations

import datetime as _dt
import json
import os
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Literal, Optional

from svcva import __version__

Severity = Literal["error", "warning", "info"]

ISSUE = {
    "CONFIG_ERROR": "CONFIG_ERROR",
    "UNKNOWN_SET": "UNKNOWN_SET",
    "CORRELATION_DOMAIN": "CORRELATION_DOMAIN",
    "NUMERICAL_ERROR": "NUMERICAL_ERROR",
    "QUADRATURE_ERROR": "QUADRATURE_ERROR",
    "DEGENERATE_ESTIMATE": "DEGENERATE_ESTIMATE",
    "FELLER_CONDITION": "FELLER_CONDITION",
    "CVA_OUT_OF_BAND": "CVA_OUT_OF_BAND",
    "NEGATIVE_INTENSITY": "NEGATIVE_INTENSITY",
    "SECOND_ORDER_SKIPPED": "SECOND_ORDER_SKIPPED",
}

EXIT_OK = 0
EXIT_OTHER = 1
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

_CONFIG_CODES = {ISSUE["CONFIG_ERROR"], ISSUE["UNKNOWN_SET"], ISSUE["CORRELATION_DOMAIN"]}
_NUMERICAL_CODES = {
    ISSUE["NUMERICAL_ERROR"],
    ISSUE["QUADRATURE_ERROR"],
    ISSUE["DEGENERATE_ESTIMATE"],
}


@dataclass
class RunMeta:
    mode: Optional[str] = None
    pairing: Optional[str] = None
    sets: List[str] = field(default_factory=list)
    config_source: Optional[str] = None
    outputs: List[str] = field(default_factory=list)


@dataclass
class Provenance:
    tool_version: str = __version__
    git_rev: Optional[str] = None
    run_id: Optional[str] = None


@dataclass
class Issue:
    code: str
    severity: Severity = "error"
    detail: Optional[str] = None
    key: Optional[str] = None
    line: Optional[int] = None
    extra: Dict[str, Any] = field(default_factory=dict)


@dataclass
class RunReport:
    ok: bool
    started_at: str
    finished_at: str
    duration_sec: float

    run: RunMeta
    provenance: Provenance

    row_count: Optional[int] = None
    summary: Dict[str, Any] = field(default_factory=dict)
    metrics: Dict[str, Any] = field(default_factory=dict)
    errors: List[Issue] = field(default_factory=list)
    warnings: List[Issue] = field(default_factory=list)
    infos: List[Issue] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    def to_json(self, indent: Optional[int] = 2) -> str:
        return json.dumps(self.to_dict(), ensure_ascii=False, indent=indent)

    def write_json(self, path: str, indent: Optional[int] = 2) -> None:
        os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
        with open(path, "w", encoding="utf-8") as f:
            f.write(self.to_json(indent=indent))

    def severity_counts(self) -> Dict[str, int]:
        return {
            "errors": len(self.errors),
            "warnings": len(self.warnings),
            "infos": len(self.infos),
        }

    def exit_code(self) -> int:
        codes = {i.code for i in self.errors}
        if codes & _CONFIG_CODES:
            return EXIT_CONFIG
        if codes & _NUMERICAL_CODES:
            return EXIT_NUMERICAL
        return EXIT_OK if self.ok and not codes else EXIT_OTHER


# ---- Helpers ----------------------------------------------------------------
def now_iso() -> str:
    return (
        _dt.datetime.now(_dt.timezone.utc).replace(microsecond=0, tzinfo=None).isoformat()
        + "Z"
    )


def issue_from_exception(exc: BaseException) -> Dict[str, Any]:
    """Engine-result issue dict for an exception raised by a run."""
    from svcva.core.errors import (
        ConfigError,
        CorrelationDomainError,
        DegenerateError,
        DomainError,
        NumericalError,
        PairingError,
        QuadratureError,
        UnknownSetError,
    )

    if isinstance(exc, UnknownSetError):
        code = ISSUE["UNKNOWN_SET"]
    elif isinstance(exc, CorrelationDomainError):
        code = ISSUE["CORRELATION_DOMAIN"]
    elif isinstance(exc, (ConfigError, DomainError, PairingError)):
        code = ISSUE["CONFIG_ERROR"]
    elif isinstance(exc, QuadratureError):
        code = ISSUE["QUADRATURE_ERROR"]
    elif isinstance(exc, DegenerateError):
        code = ISSUE["DEGENERATE_ESTIMATE"]
    elif isinstance(exc, NumericalError):
        code = ISSUE["NUMERICAL_ERROR"]
    else:
        code = type(exc).__name__
    item: Dict[str, Any] = {"code": code, "detail": str(exc)}
    for attr in ("key", "line", "expected", "inequality"):
        v = getattr(exc, attr, None)
        if v is not None:
            item[attr] = v
    return item


def build_report(
    engine_result: Dict[str, Any],
    run_meta: Dict[str, Any],
    started_at: Optional[str] = None,
    provenance: Optional[Dict[str, Any]] = None,
) -> RunReport:
    """
    Normalize a sweep/sensitivity result into a stable RunReport.

    Expected engine_result keys:
      - ok: bool
      - errors, warnings, infos: List[Dict] with code/detail
      - metrics, summary: Dict
      - timing_sec: float
      - row_count: Optional[int]
    """
    started = started_at or now_iso()
    finished = now_iso()
    duration = float(engine_result.get("timing_sec") or 0.0)

    def _coerce_issues(items: List[Dict[str, Any]] | None, sev: Severity) -> List[Issue]:
        res = []
        for it in items or []:
            res.append(
                Issue(
                    code=str(it.get("code")),
                    severity=sev,
                    detail=it.get("detail"),
                    key=it.get("key"),
                    line=it.get("line"),
                    extra={
                        k: v for k, v in it.items() if k not in {"code", "detail", "key", "line"}
                    },
                )
            )
        return res

    errors = _coerce_issues(engine_result.get("errors"), "error")
    return RunReport(
        ok=bool(engine_result.get("ok", False)) and not errors,
        started_at=started,
        finished_at=finished,
        duration_sec=duration,
        run=RunMeta(**run_meta),
        provenance=Provenance(**(provenance or {})),
        row_count=engine_result.get("row_count"),
        summary=engine_result.get("summary") or {},
        metrics=engine_result.get("metrics") or {},
        errors=errors,
        warnings=_coerce_issues(engine_result.get("warnings"), "warning"),
        infos=_coerce_issues(engine_result.get("infos"), "info"),
    )


def render_text(report: RunReport) -> str:
    """Human-readable single-paragraph summary for CLI/stdout."""
    sev = report.severity_counts()
    status = "OK" if report.ok else "FAILED"
    mode = report.run.mode or "run"
    pairing = f" pairing={report.run.pairing}" if report.run.pairing else ""
    sets = f" sets={','.join(report.run.sets)}" if report.run.sets else ""
    rc = f" rows={report.row_count}" if report.row_count is not None else ""
    line1 = (
        f"[{status}] {mode}{pairing}{sets}{rc} "
        f"errors={sev['errors']} warnings={sev['warnings']} duration={report.duration_sec:.2f}s"
    )

    def _sample_issues(items: List[Issue], n: int = 3) -> List[str]:
        out = []
        for i in items[:n]:
            out.append(f"{i.code}({i.detail})" if i.detail else i.code)
        if len(items) > n:
            out.append(f"... +{len(items) - n} more")
        return out

    details = []
    if report.run.outputs:
        details.append("wrote: " + ", ".join(report.run.outputs))
    if report.errors:
        details.append("errors: " + "; ".join(_sample_issues(report.errors)))
    if report.warnings:
        details.append("warnings: " + "; ".join(_sample_issues(report.warnings)))
    return line1 + ("" if not details else "\n  " + "\n  ".join(details))
