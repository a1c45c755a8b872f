"""
Run configuration: flat ``key = value`` files with dotted keys, CLI flag
overrides, schema validation and the experiment catalogue.

    # Heston-CIR, T = 1/2
    model.kind = heston
    intensity.set = cir-1, cir-2, cir-3, cir-4
    market.T = 0.5
    sweep.rho = -0.9:0.9:0.15
"""

from __future__ import annotations

import json
import logging
import math
import os
from dataclasses import dataclass, field, fields, replace
from functools import lru_cache
from importlib.resources import files as pkg_files
from typing import Any, Dict, List, Mapping, Optional, Tuple

from jsonschema import Draft202012Validator

from svcva.core.errors import (
    ConfigError,
    CorrelationDomainError,
    DomainError,
    UnknownSetError,
)
from svcva.core.montecarlo import McConfig
from svcva.core.parameter_sets import ParameterSetRegistry
from svcva.core.params import (
    CorrelationTriple,
    IntensityParams,
    MarketState,
    ModelPairing,
    VolParams,
    validate_correlations,
)
from svcva.core.quadrature import QuadratureConfig

logger = logging.getLogger(__name__)

# dotted key -> value kind
KEYS: Dict[str, str] = {
    "model.kind": "string",
    "model.set": "string",
    "model.gamma": "number",
    "model.c": "number",
    "model.k": "number",
    "model.theta": "number",
    "model.b": "number",
    "model.eta": "number",
    "model.y": "number",
    "intensity.kind": "string",
    "intensity.set": "string_list",
    "intensity.lambda0": "number",
    "intensity.q": "number",
    "intensity.mu": "number",
    "intensity.sigma": "number",
    "market.T": "number",
    "market.t": "number",
    "market.s0": "number",
    "market.strike": "number",
    "market.strike_convention": "string",
    "sweep.rho": "grid",
    "sweep.nu": "number",
    "sweep.methods": "string_list",
    "sweep.hw_growth": "string",
    "sweep.convention": "string",
    "sweep.reduced_moments": "bool",
    "sweep.workers": "integer",
    "sensitivity.param": "string",
    "sensitivity.grid": "grid",
    "sensitivity.rho": "grid",
    "mc.paths": "integer",
    "mc.steps": "integer",
    "mc.seed": "integer",
    "mc.batch_size": "integer",
    "mc.workers": "integer",
    "mc.control": "string",
    "mc.pilot_paths": "integer",
    "mc.vol_scheme": "string",
    "mc.intensity_scheme": "string",
    "quad.dt": "number",
    "quad.upper_limit": "number",
    "quad.nodes": "integer",
    "quad.tol": "number",
    "output.path": "string",
}

_EXPECTED = {
    "number": "a real number",
    "integer": "an integer",
    "string": "a string",
    "bool": "true or false",
    "string_list": "a comma-separated list",
    "grid": "a:b:step or a comma-separated list of numbers",
}

DEFAULT_RHO: Tuple[float, ...] = (-0.75, -0.5, -0.25, 0.0, 0.25, 0.5, 0.75)
DEFAULT_VOL_SETS = {"sabr": "sabr-fit", "heston": "heston-fit", "hw": "hw-demo"}
DEFAULT_INTENSITY_SETS = {"vasicek": "vasicek-1", "cir": "cir-1"}
INLINE_KEYS = ("lambda0", "q", "mu", "sigma")


# ---- configuration tree -----------------------------------------------------


@dataclass(frozen=True)
class ModelConfig:
    kind: str
    set: Optional[str] = None
    gamma: Optional[float] = None
    c: Optional[float] = None
    k: Optional[float] = None
    theta: Optional[float] = None
    b: Optional[float] = None
    eta: Optional[float] = None
    y: Optional[float] = None


@dataclass(frozen=True)
class IntensityConfig:
    kind: Optional[str] = None
    set: Tuple[str, ...] = ()
    lambda0: Optional[float] = None
    q: Optional[float] = None
    mu: Optional[float] = None
    sigma: Optional[float] = None


@dataclass(frozen=True)
class MarketConfig:
    T: float
    t: float = 0.0
    s0: float = 1.0
    strike: Optional[float] = None
    strike_convention: str = "level"


@dataclass(frozen=True)
class SweepConfig:
    rho: Tuple[float, ...] = DEFAULT_RHO
    nu: float = 0.0
    methods: Tuple[str, ...] = ("mc", "first", "second")
    hw_growth: str = "median"
    convention: str = "ito"
    reduced_moments: bool = False
    workers: int = 1


@dataclass(frozen=True)
class SensitivityConfig:
    param: Optional[str] = None
    grid: Tuple[float, ...] = ()
    rho: Tuple[float, ...] = (0.5,)


@dataclass(frozen=True)
class OutputConfig:
    path: Optional[str] = None


@dataclass(frozen=True)
class RunConfig:
    model: ModelConfig
    market: MarketConfig
    intensity: IntensityConfig = field(default_factory=IntensityConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    sensitivity: SensitivityConfig = field(default_factory=SensitivityConfig)
    mc: McConfig = field(default_factory=McConfig)
    quad: QuadratureConfig = field(default_factory=QuadratureConfig)
    output: OutputConfig = field(default_factory=OutputConfig)
    source: Optional[str] = field(default=None, compare=False)

    @property
    def mode(self) -> str:
        return "sensitivity" if self.sensitivity.param else "sweep"


@dataclass(frozen=True)
class ResolvedCase:
    """One intensity set of a run, ready for the engine."""

    set_id: str
    pairing: ModelPairing
    state: MarketState
    eta: float


# ---- value parsing ----------------------------------------------------------


def parse_grid(text: str) -> Tuple[float, ...]:
    """``a:b:step`` (both ends included) or ``v1, v2, ...``."""
    s = text.strip()
    if ":" in s:
        parts = [p.strip() for p in s.split(":")]
        if len(parts) != 3:
            raise ValueError(f"grid '{text}' is not a:b:step")
        a, b, step = (float(p) for p in parts)
        if step <= 0.0 or b < a:
            raise ValueError(f"grid '{text}' needs a <= b and step > 0")
        n = int(math.floor((b - a) / step + 1e-9))
        return tuple(round(a + i * step, 12) + 0.0 for i in range(n + 1))
    vals = tuple(float(p) for p in s.split(",") if p.strip())
    if not vals:
        raise ValueError("empty grid")
    return vals


def _coerce(key: str, value: Any, line: Optional[int]) -> Any:
    kind = KEYS[key]
    try:
        if kind == "number":
            if isinstance(value, bool):
                raise ValueError
            return float(value)
        if kind == "integer":
            if isinstance(value, bool):
                raise ValueError
            if isinstance(value, str):
                f = float(value.strip())
                if not f.is_integer():
                    raise ValueError
                return int(f)
            if isinstance(value, float) and not value.is_integer():
                raise ValueError
            return int(value)
        if kind == "bool":
            if isinstance(value, bool):
                return value
            low = str(value).strip().lower()
            if low in ("true", "yes", "1", "on"):
                return True
            if low in ("false", "no", "0", "off"):
                return False
            raise ValueError
        if kind == "string_list":
            if isinstance(value, (list, tuple)):
                return [str(v).strip() for v in value]
            return [p.strip() for p in str(value).split(",") if p.strip()]
        if kind == "grid":
            if isinstance(value, (list, tuple)):
                return [float(v) for v in value]
            return list(parse_grid(str(value)))
        return str(value).strip()
    except (TypeError, ValueError) as e:
        detail = str(e) if str(e) else f"cannot read {value!r}"
        raise ConfigError(detail, key=key, expected=_EXPECTED[kind], line=line) from None


def read_config_text(text: str) -> Dict[str, Tuple[str, int]]:
    """``key -> (raw value, line number)`` from a flat config file."""
    out: Dict[str, Tuple[str, int]] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got '{line}'", line=lineno)
        key, value = (p.strip() for p in line.split("=", 1))
        if key not in KEYS:
            raise ConfigError("unknown key", key=key, line=lineno)
        if key in out:
            raise ConfigError(
                f"duplicate key (first set on line {out[key][1]})", key=key, line=lineno
            )
        out[key] = (value, lineno)
    return out


# ---- schema -----------------------------------------------------------------


def _schema_path() -> str:
    return str(pkg_files("svcva").joinpath("experiments", "run_config.schema.json"))


@lru_cache(maxsize=1)
def _validator() -> Draft202012Validator:
    with open(_schema_path(), "r", encoding="utf-8") as f:
        return Draft202012Validator(json.load(f))


def _expected_from(error: Any) -> Optional[str]:
    if error.validator == "enum":
        return "one of " + ", ".join(str(v) for v in error.validator_value)
    if error.validator == "type":
        return str(error.validator_value)
    if error.validator in ("exclusiveMinimum", "minimum"):
        return f"a value above {error.validator_value}"
    if error.validator in ("exclusiveMaximum", "maximum"):
        return f"a value below {error.validator_value}"
    return None


def _validate_document(doc: Dict[str, Any], lines: Dict[str, Optional[int]]) -> None:
    errors = sorted(
        _validator().iter_errors(doc),
        key=lambda e: ".".join(str(p) for p in e.absolute_path),
    )
    if not errors:
        return
    first = errors[0]
    path = [str(p) for p in first.absolute_path if not isinstance(p, int)]
    if first.validator in ("required", "dependentRequired") and isinstance(
        first.instance, dict
    ):
        wanted = first.validator_value
        if isinstance(wanted, dict):
            wanted = [w for deps in wanted.values() for w in deps]
        missing = [w for w in wanted if w not in first.instance]
        if missing:
            path = path + [missing[0]]
    if len(path) == 1:
        # a whole section is missing: name its first required key
        section = _validator().schema["properties"].get(path[0], {})
        required = section.get("required") or []
        if required:
            path.append(required[0])
    key = ".".join(path[:2]) if path else None
    raise ConfigError(
        first.message,
        key=key,
        expected=_expected_from(first),
        line=lines.get(key) if key else None,
    )


# ---- parse / serialize ------------------------------------------------------


def _section(doc: Dict[str, Any], name: str) -> Dict[str, Any]:
    return dict(doc.get(name) or {})


def _normalise_set_name(name: str, kind: Optional[str]) -> str:
    if kind and name.isdigit():
        return f"{kind}-{name}"
    return name


def parse_inline_set(text: str, kind: str) -> IntensityParams:
    """``lambda0=0.03;q=0.02;mu=0.161;sigma=0.08`` as intensity parameters."""
    vals: Dict[str, float] = {}
    for part in text.split(";"):
        if not part.strip():
            continue
        if "=" not in part:
            raise ConfigError(f"inline set part '{part}' is not name=value", key="intensity.set")
        name, raw = (p.strip() for p in part.split("=", 1))
        if name not in INLINE_KEYS:
            raise ConfigError(
                f"unknown inline parameter '{name}'",
                key="intensity.set",
                expected="one of " + ", ".join(INLINE_KEYS),
            )
        try:
            vals[name] = float(raw)
        except ValueError:
            raise ConfigError(
                f"inline parameter '{name}' is not a number", key="intensity.set"
            ) from None
    missing = [k for k in INLINE_KEYS if k not in vals]
    if missing:
        raise ConfigError(f"inline set misses {', '.join(missing)}", key="intensity.set")
    try:
        return IntensityParams(kind=kind, **vals)  # type: ignore[arg-type]
    except DomainError as e:
        raise ConfigError(str(e), key="intensity.set") from None


def _default_registry() -> ParameterSetRegistry:
    return ParameterSetRegistry()


def parse_config(
    text: Optional[str] = None,
    flags: Optional[Mapping[str, Any]] = None,
    source: Optional[str] = None,
    *,
    registry: Optional[ParameterSetRegistry] = None,
) -> RunConfig:
    """
    Build a RunConfig from config text and flag overrides (dotted keys).

    Parameter-set names are checked against ``registry`` and normalised
    (``3`` with a CIR intensity becomes ``cir-3``); every rho of the run is
    checked for admissibility against (eta, nu).
    """
    registry = registry or _default_registry()
    raw: Dict[str, Tuple[Any, Optional[int]]] = {}
    if text:
        raw.update(read_config_text(text))
    for key, value in (flags or {}).items():
        if value is None:
            continue
        if key not in KEYS:
            raise ConfigError("unknown key", key=key)
        raw[key] = (value, None)

    lines = {k: ln for k, (_, ln) in raw.items()}
    doc: Dict[str, Dict[str, Any]] = {}
    for key, (value, line) in raw.items():
        section, name = key.split(".", 1)
        doc.setdefault(section, {})[name] = _coerce(key, value, line)
    _validate_document(doc, lines)

    model_d = _section(doc, "model")
    kind = model_d["kind"]
    model_d.setdefault("set", DEFAULT_VOL_SETS[kind])
    vol_bundle = _load_set(registry, model_d["set"], "model.set", lines)
    if vol_bundle.kind != kind:
        raise ConfigError(
            f"set '{model_d['set']}' holds {vol_bundle.kind} parameters",
            key="model.set",
            expected=f"a {kind} parameter set",
            line=lines.get("model.set"),
        )
    model_d["set"] = vol_bundle.set_id
    model = ModelConfig(**model_d)

    intensity = _resolve_intensity(_section(doc, "intensity"), registry, lines)

    market = MarketConfig(**_section(doc, "market"))

    sweep_d = _section(doc, "sweep")
    for k in ("rho", "methods"):
        if k in sweep_d:
            sweep_d[k] = tuple(sweep_d[k])
    sweep = SweepConfig(**sweep_d)

    sens_d = _section(doc, "sensitivity")
    for k in ("grid", "rho"):
        if k in sens_d:
            sens_d[k] = tuple(sens_d[k])
    sensitivity = SensitivityConfig(**sens_d)

    try:
        mc = _mc_config(_section(doc, "mc"))
        quad = _quad_config(_section(doc, "quad"))
    except DomainError as e:
        raise ConfigError(str(e)) from None

    config = RunConfig(
        model=model,
        market=market,
        intensity=intensity,
        sweep=sweep,
        sensitivity=sensitivity,
        mc=mc,
        quad=quad,
        output=OutputConfig(**_section(doc, "output")),
        source=source,
    )

    eta = model.eta if model.eta is not None else vol_bundle.eta
    if eta is None:
        raise ConfigError(
            f"set '{model.set}' carries no eta; give model.eta", key="model.eta"
        )
    _check_rhos(config, float(eta), lines)
    return config


def _load_set(
    registry: ParameterSetRegistry, name: str, key: str, lines: Dict[str, Optional[int]]
) -> Any:
    try:
        return registry.load(name)
    except UnknownSetError as e:
        raise UnknownSetError(str(e), key=key, line=lines.get(key)) from None


def _resolve_intensity(
    d: Dict[str, Any], registry: ParameterSetRegistry, lines: Dict[str, Optional[int]]
) -> IntensityConfig:
    kind = d.get("kind")
    names = list(d.get("set") or [])
    if not names:
        if kind is None:
            raise ConfigError(
                "no intensity given",
                key="intensity.set",
                expected="intensity.set or intensity.kind",
            )
        names = [DEFAULT_INTENSITY_SETS[kind]]

    resolved: List[str] = []
    for name in names:
        if "=" in name:
            if kind is None:
                raise ConfigError(
                    "an inline set needs intensity.kind", key="intensity.kind"
                )
            parse_inline_set(name, kind)
            resolved.append(name)
            continue
        bundle = _load_set(
            registry, _normalise_set_name(name, kind), "intensity.set", lines
        )
        if bundle.intensity is None:
            raise ConfigError(
                f"set '{name}' is not an intensity set",
                key="intensity.set",
                line=lines.get("intensity.set"),
            )
        if kind is None:
            kind = bundle.intensity.kind
        elif bundle.intensity.kind != kind:
            raise ConfigError(
                f"set '{name}' is a {bundle.intensity.kind} set",
                key="intensity.set",
                expected=f"{kind} sets only",
                line=lines.get("intensity.set"),
            )
        resolved.append(bundle.set_id)

    d["kind"] = kind
    d["set"] = tuple(resolved)
    return IntensityConfig(**d)


def _mc_config(d: Dict[str, Any]) -> McConfig:
    rename = {"paths": "n_paths", "steps": "n_steps"}
    return McConfig(**{rename.get(k, k): v for k, v in d.items()})


def _quad_config(d: Dict[str, Any]) -> QuadratureConfig:
    rename = {"nodes": "n_nodes"}
    return QuadratureConfig(**{rename.get(k, k): v for k, v in d.items()})


def _check_rhos(config: RunConfig, eta: float, lines: Dict[str, Optional[int]]) -> None:
    nu = config.sweep.nu
    checks = [("sweep.rho", r) for r in config.sweep.rho]
    if config.mode == "sensitivity":
        checks += [("sensitivity.rho", r) for r in config.sensitivity.rho]
    for key, rho in checks:
        try:
            validate_correlations(CorrelationTriple(eta=eta, rho=rho, nu=nu))
        except CorrelationDomainError as e:
            raise CorrelationDomainError(
                f"rho={rho} with eta={eta}, nu={nu}",
                e.inequality,
                key=key,
                line=lines.get(key),
            ) from None


def format_value(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (list, tuple)):
        return ", ".join(format_value(v) for v in value)
    return str(value)


def config_items(config: RunConfig) -> List[Tuple[str, Any]]:
    """Every set key of ``config`` as (dotted key, value), in KEYS order."""
    sections: Dict[str, Dict[str, Any]] = {
        "model": {f.name: getattr(config.model, f.name) for f in fields(config.model)},
        "intensity": {
            f.name: getattr(config.intensity, f.name) for f in fields(config.intensity)
        },
        "market": {f.name: getattr(config.market, f.name) for f in fields(config.market)},
        "sweep": {f.name: getattr(config.sweep, f.name) for f in fields(config.sweep)},
        "sensitivity": {
            f.name: getattr(config.sensitivity, f.name)
            for f in fields(config.sensitivity)
        },
        "mc": {
            "paths": config.mc.n_paths,
            "steps": config.mc.n_steps,
            "seed": config.mc.seed,
            "batch_size": config.mc.batch_size,
            "workers": config.mc.workers,
            "control": config.mc.control,
            "pilot_paths": config.mc.pilot_paths,
            "vol_scheme": config.mc.vol_scheme,
            "intensity_scheme": config.mc.intensity_scheme,
        },
        "quad": {
            "dt": config.quad.dt,
            "upper_limit": config.quad.upper_limit,
            "nodes": config.quad.n_nodes,
            "tol": config.quad.tol,
        },
        "output": {"path": config.output.path},
    }
    items: List[Tuple[str, Any]] = []
    for key in KEYS:
        section, name = key.split(".", 1)
        value = sections[section].get(name)
        if value is None or value == ():
            continue
        items.append((key, value))
    return items


def serialize_config(config: RunConfig) -> str:
    """Normalised ``key = value`` text; parsing it gives back ``config``."""
    return "".join(f"{k} = {format_value(v)}\n" for k, v in config_items(config))


# ---- resolution -------------------------------------------------------------


def _apply_overrides(params: Any, overrides: Dict[str, Optional[float]]) -> Any:
    given = {k: v for k, v in overrides.items() if v is not None and hasattr(params, k)}
    return replace(params, **given) if given else params


def resolve_cases(
    config: RunConfig, registry: Optional[ParameterSetRegistry] = None
) -> List[ResolvedCase]:
    """One ResolvedCase per configured intensity set, overrides applied."""
    registry = registry or _default_registry()
    m = config.model
    vol_bundle = registry.load(m.set or DEFAULT_VOL_SETS[m.kind])
    try:
        vol: VolParams = _apply_overrides(
            vol_bundle.vol,
            {"gamma": m.gamma, "c": m.c, "k": m.k, "theta": m.theta, "b": m.b},
        )
    except DomainError as e:
        raise ConfigError(str(e), key="model") from None
    eta = m.eta if m.eta is not None else vol_bundle.eta
    y = m.y if m.y is not None else vol_bundle.y
    strike = config.market.strike if config.market.strike is not None else vol_bundle.strike
    if y is None or strike is None or eta is None:
        raise ConfigError(
            f"set '{vol_bundle.set_id}' lacks market data; give model.y, model.eta "
            "and market.strike"
        )

    try:
        state = MarketState.from_prices(
            s0=config.market.s0,
            strike=float(strike),
            y=float(y),
            T=config.market.T,
            t=config.market.t,
            strike_convention=config.market.strike_convention,  # type: ignore[arg-type]
        )
    except DomainError as e:
        raise ConfigError(str(e), key="market") from None

    i = config.intensity
    kind = i.kind or "cir"
    cases: List[ResolvedCase] = []
    for name in i.set:
        if "=" in name:
            lam = parse_inline_set(name, kind)
            set_id = "inline"
        else:
            bundle = registry.load(name)
            lam = bundle.intensity
            set_id = bundle.set_id
        try:
            lam = _apply_overrides(
                lam, {"lambda0": i.lambda0, "q": i.q, "mu": i.mu, "sigma": i.sigma}
            )
        except DomainError as e:
            raise ConfigError(str(e), key="intensity") from None
        pairing = ModelPairing(vol_model=m.kind, vol=vol, intensity=lam)  # type: ignore[arg-type]
        cases.append(ResolvedCase(set_id=set_id, pairing=pairing, state=state, eta=float(eta)))
    return cases


# ---- experiment catalogue ---------------------------------------------------


def experiments_dir() -> str:
    return str(pkg_files("svcva").joinpath("experiments"))


def _describe(path: str) -> str:
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            s = line.strip()
            if s.startswith("#"):
                return s.lstrip("#").strip()
            if s:
                break
    return ""


def list_experiments() -> List[Tuple[str, str]]:
    """(name, first comment line) of every shipped experiment, sorted by name."""
    d = experiments_dir()
    out = []
    for name in sorted(os.listdir(d)):
        if name.endswith(".cfg"):
            out.append((name[: -len(".cfg")], _describe(os.path.join(d, name))))
    return out


def load_experiment(name: str) -> Tuple[str, str]:
    """(text, path) of a shipped experiment."""
    path = os.path.join(experiments_dir(), f"{name}.cfg")
    if not os.path.exists(path):
        known = ", ".join(n for n, _ in list_experiments())
        raise ConfigError(f"unknown experiment '{name}'", expected=f"one of {known}")
    with open(path, "r", encoding="utf-8") as f:
        return f.read(), path
