from __future__ import annotations

import glob
import json
import logging
import os
from functools import lru_cache
from importlib.resources import files as pkg_files
from typing import Any, Dict, List, Optional, Tuple

from jsonschema import Draft202012Validator

from svcva.core.errors import ConfigError, UnknownSetError
from svcva.core.params import (
    HestonParams,
    HullWhiteParams,
    IntensityParams,
    ParameterBundle,
    SabrParams,
)

logger = logging.getLogger(__name__)

ENV_SETS_DIR = "SVCVA_PARAMETER_SETS_DIR"

BUILTIN_SET_IDS = (
    "vasicek-1",
    "vasicek-2",
    "cir-1",
    "cir-2",
    "cir-3",
    "cir-4",
    "heston-fit",
    "sabr-fit",
)


def _packaged_dir() -> List[str]:
    try:
        d = str(pkg_files("svcva").joinpath("parameter_sets"))
        return [d] if os.path.isdir(d) else []
    except Exception:
        return []


def default_search_dirs(cli_dirs: List[str] | None = None) -> List[str]:
    """CLI directories, then SVCVA_PARAMETER_SETS_DIR (':'-separated), then packaged."""
    env_dirs: List[str] = []
    env = os.getenv(ENV_SETS_DIR)
    if env:
        env_dirs = [p for p in env.split(":") if p.strip()]
    return [*(cli_dirs or []), *env_dirs, *_packaged_dir()]


class ParameterSetRegistry:
    """
    Finds, validates and loads parameter-set documents by id or alias.

    Resolution order per name: index.json entries (id, then aliases) across
    the search dirs, then a direct ``<set_id>.json`` file, then a scan of
    every JSON document in the search dirs. The first directory wins.
    """

    def __init__(
        self,
        search_dirs: List[str] | None = None,
        schema_path: str | None = None,
        *,
        packaged_only: bool = False,
    ):
        if packaged_only:
            self.search_dirs: List[str] = _packaged_dir()
        else:
            self.search_dirs = default_search_dirs(list(search_dirs or []))

        if schema_path is None:
            for d in _packaged_dir():
                schema_path = os.path.join(d, "parameter_set.schema.json")
        self.validator: Optional[Draft202012Validator] = None
        if schema_path and os.path.exists(schema_path):
            with open(schema_path, "r", encoding="utf-8") as f:
                self.validator = Draft202012Validator(json.load(f))

        self._indices: Dict[str, dict] = {}
        for d in self.search_dirs:
            idx = os.path.join(d, "index.json")
            if os.path.isdir(d) and os.path.exists(idx):
                try:
                    with open(idx, "r", encoding="utf-8") as f:
                        self._indices[d] = json.load(f)
                except (OSError, ValueError) as e:
                    logger.warning("unreadable parameter-set index %s: %s", idx, e)

    # ---------- internal helpers ----------

    def _iter_set_files(self) -> List[str]:
        out: List[str] = []
        seen: set[str] = set()
        for d in self.search_dirs:
            if not d or not os.path.isdir(d):
                continue
            for p in sorted(glob.glob(os.path.join(d, "*.json"))):
                name = os.path.basename(p).lower()
                if name == "index.json" or name.endswith(".schema.json"):
                    continue
                if p not in seen:
                    seen.add(p)
                    out.append(p)
        return out

    def _resolve_via_index(self, name: str) -> Optional[Tuple[str, dict]]:
        for d, idx in self._indices.items():
            entries = idx.get("sets", [])
            for e in entries:
                if e.get("set_id") == name:
                    path = os.path.join(d, e.get("path") or f"{name}.json")
                    if os.path.exists(path):
                        return path, e
            for e in entries:
                if name in (e.get("aliases") or []):
                    path = os.path.join(d, e.get("path") or "")
                    if os.path.exists(path):
                        return path, e
        return None

    def _resolve_direct_filename(self, name: str) -> Optional[str]:
        for d in self.search_dirs:
            if not d or not os.path.isdir(d):
                continue
            p = os.path.join(d, f"{name}.json")
            if os.path.exists(p):
                return p
        return None

    @staticmethod
    def _parse_json(path: str) -> Optional[dict]:
        try:
            with open(path, "r", encoding="utf-8") as f:
                obj = json.load(f)
        except (OSError, ValueError):
            return None
        return obj if isinstance(obj, dict) else None

    # ---------- public API ----------

    def resolve(self, name: str) -> str:
        """Return the canonical set id for ``name`` (an id or an alias)."""
        hit = self._resolve_via_index(name)
        if hit:
            return str(hit[1].get("set_id", name))
        return name

    def load_document(self, name: str) -> Dict[str, Any]:
        doc: Optional[dict] = None
        source: Optional[str] = None

        hit = self._resolve_via_index(name)
        if hit:
            source = hit[0]
            doc = self._parse_json(source)

        if doc is None:
            direct = self._resolve_direct_filename(name)
            if direct:
                obj = self._parse_json(direct)
                if obj and obj.get("set_id") == name:
                    doc, source = obj, direct

        if doc is None:
            for p in self._iter_set_files():
                obj = self._parse_json(p)
                if obj and obj.get("set_id") == name:
                    doc, source = obj, p
                    break

        if doc is None:
            raise UnknownSetError(
                f"parameter set '{name}' not found in: {self.search_dirs}",
                key="set",
            )

        if self.validator:
            errors = sorted(
                self.validator.iter_errors(doc),
                key=lambda e: ".".join(str(p) for p in e.absolute_path),
            )
            if errors:
                first = errors[0]
                where = ".".join(str(p) for p in first.absolute_path) or "<root>"
                raise ConfigError(
                    f"parameter set '{name}' ({source}) is invalid at {where}: "
                    f"{first.message}",
                    key=where,
                )

        doc["_source_path"] = source
        return doc

    def load(self, name: str) -> ParameterBundle:
        return bundle_from_document(self.load_document(name))

    def available(self) -> List[Tuple[str, str, str, str]]:
        """(set_id, kind, label, directory) for every indexed set, first match wins."""
        seen: set[str] = set()
        listed: List[Tuple[str, str, str, str]] = []
        for d, idx in self._indices.items():
            for e in idx.get("sets", []):
                sid = e.get("set_id")
                if not sid or sid in seen:
                    continue
                seen.add(sid)
                listed.append((sid, e.get("kind", ""), e.get("label", ""), d))
        return listed


def bundle_from_document(doc: Dict[str, Any]) -> ParameterBundle:
    kind = doc["kind"]
    p = doc["params"]
    market = doc.get("market") or {}
    common = dict(
        set_id=doc["set_id"],
        label=doc.get("label", doc["set_id"]),
        source_path=doc.get("_source_path"),
    )
    if kind in ("vasicek", "cir"):
        return ParameterBundle(
            kind="intensity",
            intensity=IntensityParams(
                kind=kind,
                lambda0=float(p["lambda0"]),
                q=float(p["q"]),
                mu=float(p["mu"]),
                sigma=float(p["sigma"]),
            ),
            **common,
        )
    vol: Any
    if kind == "sabr":
        vol = SabrParams(gamma=float(p["gamma"]), c=float(p["c"]))
    elif kind == "heston":
        vol = HestonParams(k=float(p["k"]), theta=float(p["theta"]), c=float(p["c"]))
    elif kind == "hw":
        vol = HullWhiteParams(b=float(p["b"]), c=float(p["c"]))
    else:
        raise ConfigError(f"unknown parameter-set kind '{kind}'", key="kind")
    return ParameterBundle(
        kind=kind,
        vol=vol,
        eta=market.get("eta"),
        y=market.get("y"),
        strike=market.get("strike"),
        **common,
    )


@lru_cache(maxsize=1)
def _packaged_registry() -> ParameterSetRegistry:
    return ParameterSetRegistry(packaged_only=True)


def builtin_parameter_set(name: str) -> ParameterBundle:
    """Load one of the packaged parameter sets of the study by id or alias."""
    reg = _packaged_registry()
    canonical = reg.resolve(name)
    if canonical not in BUILTIN_SET_IDS:
        raise UnknownSetError(
            f"unknown builtin parameter set '{name}'",
            key="set",
            expected="one of " + ", ".join(BUILTIN_SET_IDS),
        )
    return reg.load(canonical)
