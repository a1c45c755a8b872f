from __future__ import annotations

import logging
import os
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from typing import Any, Callable, Dict, List, Optional, Tuple

import pandas as pd

from svcva.adapters.black_adapter import PriceAndGreeks
from svcva.core.config import (
    ResolvedCase,
    RunConfig,
    config_items,
    format_value,
    resolve_cases,
)
from svcva.core.engine import (
    FirstOrderTerms,
    SecondOrderTerms,
    assemble_first_order,
    assemble_second_order,
    first_order_terms,
    price_and_greeks,
    second_order_terms,
)
from svcva.core.errors import ConfigError, NumericalError, UnsupportedPairingError
from svcva.core.montecarlo import run_monte_carlo
from svcva.core.parameter_sets import ParameterSetRegistry
from svcva.core.params import CorrelationTriple, validate_correlations

logger = logging.getLogger(__name__)

SWEEP_COLUMNS = ["rho", "cva_mc", "cva_mc_stderr", "cv_corr", "cva_first", "cva_second"]
SENSITIVITY_COLUMNS = [
    "model",
    "intensity_set",
    "parameter",
    "value",
    "rho",
    "cva0",
    "cva1",
    "cva_first",
]
FLOAT_FORMAT = "%.12g"

Progress = Callable[[int, str], None]


def _empty_result() -> Dict[str, Any]:
    return {"ok": True, "errors": [], "warnings": [], "infos": [], "metrics": {}}


def _with_context(e: NumericalError, case: ResolvedCase, rho: Optional[float]) -> NumericalError:
    where = f"{case.pairing.name} set={case.set_id}"
    if rho is not None:
        where += f" rho={rho:g}"
    return type(e)(f"{where}: {e}")


def _resolve(
    config: RunConfig, registry: Optional[ParameterSetRegistry], result: Dict[str, Any]
) -> List[ResolvedCase]:
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        cases = resolve_cases(config, registry)
    for w in caught:
        result["warnings"].append({"code": "FELLER_CONDITION", "detail": str(w.message)})
    return cases


def _band_warning(case: ResolvedCase, method: str, rho: float, total: float, u: float) -> Optional[dict]:
    if abs(rho) <= 0.5 and not (0.0 <= total <= u):
        return {
            "code": "CVA_OUT_OF_BAND",
            "detail": f"{case.pairing.name} set={case.set_id} {method} CVA {total:.6g} "
            f"at rho={rho:g} outside [0, {u:.6g}]",
        }
    return None


def output_path(base: Optional[str], set_id: str, n_sets: int) -> Optional[str]:
    """``{set}`` in ``base`` is replaced by the set id; otherwise a ``_<set>``
    suffix is added when the run has several sets."""
    if base is None:
        return None
    if "{set}" in base:
        return base.replace("{set}", set_id)
    if n_sets > 1:
        stem, ext = os.path.splitext(base)
        return f"{stem}_{set_id}{ext or '.csv'}"
    return base


def header_lines(config: RunConfig, extra: Optional[Dict[str, Any]] = None) -> str:
    items = list(config_items(config)) + list((extra or {}).items())
    return "".join(f"# {k}={format_value(v)}\n" for k, v in items)


def write_csv(frame: pd.DataFrame, path: str, header: str) -> None:
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(header)
        frame.to_csv(f, index=False, na_rep="", float_format=FLOAT_FORMAT, lineterminator="\n")


def frame_to_text(frame: pd.DataFrame, header: str) -> str:
    return header + frame.to_csv(
        index=False, na_rep="", float_format=FLOAT_FORMAT, lineterminator="\n"
    )


# ---- rho sweep --------------------------------------------------------------


def _sweep_case(
    config: RunConfig,
    case: ResolvedCase,
    result: Dict[str, Any],
    progress: Optional[Progress],
) -> pd.DataFrame:
    methods = set(config.sweep.methods)
    nu = config.sweep.nu
    quad = config.quad

    first: Optional[FirstOrderTerms] = None
    second: Optional[SecondOrderTerms] = None
    greeks: Optional[PriceAndGreeks] = None
    try:
        if methods & {"first", "second"}:
            greeks = price_and_greeks(case.pairing, case.state, case.eta, quad)
        if "first" in methods:
            first = first_order_terms(
                case.pairing,
                case.state,
                case.eta,
                nu,
                quad,
                price=greeks,
                hw_growth=config.sweep.hw_growth,  # type: ignore[arg-type]
                convention=config.sweep.convention,  # type: ignore[arg-type]
            )
        if "second" in methods:
            if nu != 0.0:
                result["infos"].append(
                    {"code": "SECOND_ORDER_SKIPPED", "detail": "second order needs nu = 0"}
                )
            else:
                try:
                    second = second_order_terms(
                        case.pairing,
                        case.state,
                        case.eta,
                        quad,
                        price=greeks,
                        reduced_moments=config.sweep.reduced_moments,
                        convention=config.sweep.convention,  # type: ignore[arg-type]
                    )
                except UnsupportedPairingError as e:
                    result["infos"].append({"code": "SECOND_ORDER_SKIPPED", "detail": str(e)})
    except NumericalError as e:
        raise _with_context(e, case, None) from e

    def cell(rho: float) -> Dict[str, Any]:
        row: Dict[str, Any] = {c: None for c in SWEEP_COLUMNS}
        row["rho"] = rho
        notes: List[dict] = []
        if first is not None:
            res = assemble_first_order(case.pairing, first, rho)
            row["cva_first"] = res.total
            w = _band_warning(case, "first-order", rho, res.total, res.price.u)
            if w:
                notes.append(w)
        if second is not None:
            res = assemble_second_order(case.pairing, second, rho)
            row["cva_second"] = res.total
            w = _band_warning(case, "second-order", rho, res.total, res.price.u)
            if w:
                notes.append(w)
        if "mc" in methods:
            corr = CorrelationTriple(eta=case.eta, rho=rho, nu=nu)
            try:
                est = run_monte_carlo(case.pairing, case.state, corr, config.mc, quad)
            except NumericalError as e:
                raise _with_context(e, case, rho) from e
            row["cva_mc"] = est.mean
            row["cva_mc_stderr"] = est.std_error
            row["cv_corr"] = est.cv_correlation
            if est.negative_fraction > 0.0:
                notes.append(
                    {
                        "code": "NEGATIVE_INTENSITY",
                        "detail": f"set={case.set_id} rho={rho:g}: "
                        f"{100.0 * est.negative_fraction:.2f}% of Vasicek paths below 0",
                    }
                )
        if progress is not None:
            progress(1, f"{case.set_id} rho={rho:g}")
        row["_notes"] = notes
        return row

    rhos = list(config.sweep.rho)
    if config.sweep.workers > 1 and len(rhos) > 1:
        with ThreadPoolExecutor(max_workers=config.sweep.workers) as pool:
            rows = list(pool.map(cell, rhos))
    else:
        rows = [cell(r) for r in rhos]

    for row in rows:
        result["warnings"].extend(row.pop("_notes"))
    frame = pd.DataFrame(rows, columns=SWEEP_COLUMNS)
    return frame.astype({c: "float64" for c in SWEEP_COLUMNS})


def run_rho_sweep(
    config: RunConfig,
    registry: Optional[ParameterSetRegistry] = None,
    progress: Optional[Progress] = None,
) -> Dict[str, Any]:
    """
    Evaluate every requested method on the rho grid, one CSV per intensity set.

    Returns an engine result dict (ok, errors, warnings, infos, metrics,
    row_count, timing_sec) with ``frames`` mapping set id to its table and
    ``outputs`` listing the files written.
    """
    t0 = time.time()
    result = _empty_result()
    cases = _resolve(config, registry, result)

    frames: Dict[str, pd.DataFrame] = {}
    outputs: List[str] = []
    headers: Dict[str, str] = {}
    for case in cases:
        frame = _sweep_case(config, case, result, progress)
        frames[case.set_id] = frame
        header = header_lines(
            config, {"run.pairing": case.pairing.name, "run.set": case.set_id}
        )
        headers[case.set_id] = header
        path = output_path(config.output.path, case.set_id, len(cases))
        if path:
            write_csv(frame, path, header)
            outputs.append(path)
            logger.info("wrote %s (%d rows)", path, len(frame))

    result["frames"] = frames
    result["headers"] = headers
    result["outputs"] = outputs
    result["row_count"] = int(sum(len(f) for f in frames.values()))
    result["summary"] = {
        "mode": "sweep",
        "pairing": cases[0].pairing.name if cases else None,
        "sets": [c.set_id for c in cases],
        "methods": list(config.sweep.methods),
        "rho_points": len(config.sweep.rho),
    }
    result["metrics"] = {"mc_paths": config.mc.n_paths, "mc_steps": config.mc.n_steps}
    result["timing_sec"] = time.time() - t0
    return result


# ---- sensitivity ------------------------------------------------------------


def _override(config: RunConfig, param: str, value: float) -> RunConfig:
    section, name = param.split(".", 1)
    current = getattr(config, section)
    return replace(config, **{section: replace(current, **{name: value})})


def run_sensitivity(
    config: RunConfig,
    registry: Optional[ParameterSetRegistry] = None,
    progress: Optional[Progress] = None,
) -> Dict[str, Any]:
    """First-order CVA across ``sensitivity.grid`` values of one parameter."""
    t0 = time.time()
    result = _empty_result()
    param = config.sensitivity.param
    if not param:
        raise ConfigError("a sensitivity run needs a parameter", key="sensitivity.param")

    rows: List[Dict[str, Any]] = []
    sets: List[str] = []
    for value in config.sensitivity.grid:
        cases = _resolve(_override(config, param, value), registry, result)
        for case in cases:
            if case.set_id not in sets:
                sets.append(case.set_id)
            try:
                terms = first_order_terms(
                    case.pairing,
                    case.state,
                    case.eta,
                    config.sweep.nu,
                    config.quad,
                    hw_growth=config.sweep.hw_growth,  # type: ignore[arg-type]
                    convention=config.sweep.convention,  # type: ignore[arg-type]
                )
            except NumericalError as e:
                raise _with_context(e, case, None) from e
            for rho in config.sensitivity.rho:
                validate_correlations(
                    CorrelationTriple(eta=case.eta, rho=rho, nu=config.sweep.nu)
                )
                res = assemble_first_order(case.pairing, terms, rho)
                rows.append(
                    {
                        "model": config.model.kind,
                        "intensity_set": case.set_id,
                        "parameter": param,
                        "value": value,
                        "rho": rho,
                        "cva0": res.cva0,
                        "cva1": res.cva1,
                        "cva_first": res.total,
                    }
                )
            if progress is not None:
                progress(1, f"{case.set_id} {param}={value:g}")

    # dedupe warnings repeated for every grid value
    seen: set[Tuple[str, str]] = set()
    unique = []
    for w in result["warnings"]:
        key = (w["code"], w["detail"])
        if key not in seen:
            seen.add(key)
            unique.append(w)
    result["warnings"] = unique

    frame = pd.DataFrame(rows, columns=SENSITIVITY_COLUMNS)
    order = {s: i for i, s in enumerate(sets)}
    frame = frame.sort_values(
        by=["intensity_set", "value", "rho"],
        key=lambda col: col.map(order) if col.name == "intensity_set" else col,
        kind="stable",
    ).reset_index(drop=True)

    header = header_lines(config, {"run.mode": "sensitivity"})
    outputs: List[str] = []
    if config.output.path:
        write_csv(frame, config.output.path, header)
        outputs.append(config.output.path)
        logger.info("wrote %s (%d rows)", config.output.path, len(frame))

    result["frames"] = {"sensitivity": frame}
    result["headers"] = {"sensitivity": header}
    result["outputs"] = outputs
    result["row_count"] = len(frame)
    result["summary"] = {
        "mode": "sensitivity",
        "parameter": param,
        "sets": sets,
        "grid_points": len(config.sensitivity.grid),
    }
    result["timing_sec"] = time.time() - t0
    return result
