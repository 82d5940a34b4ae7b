"""Declarative run configuration (TOML or JSON) with strict validation.

Top-level tables are named after the records they build:

    [ModelParams]          model coefficients and kinetics
    [RegularizationLevel]  alpha, delta, epsilon, k (single runs)
    [SweepPlan]            schedule (array of levels) and comparison_times
    [Domain]               shape, lengths (numbers or "pi", "2*pi", "pi/2"), oversample
    [SolverConfig]         integrator settings
    [InitialData]          preset and its parameters (bump_u, bump_v, bump_u2 sub-tables)
    [Conditions]           s_max and grid_points for the sampled F1 check
    [Diagnostics]          diffusion switch, eps = 0 permission, transform path, dissipation form
    [Output]               directory, deterministic, seed

Unknown tables or keys are rejected before anything is computed.
"""

from __future__ import annotations

import json
import math
import re
import sys
from dataclasses import dataclass, field, fields
from typing import Any, Optional

from .galerkin import SolverConfig
from .initial import Bump, InitialData
from .model import ModelParams, RegularizationLevel
from .spectral import Domain
from .sweeps import SweepPlan

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover - exercised on 3.10
    import tomli as tomllib
import tomli_w

__all__ = ["ConfigError", "RunConfig", "load_config", "parse_config", "dump_config"]


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending key or line."""


_LENGTH = re.compile(r"^\s*(?:(?P<num>[0-9.eE+-]+)\s*\*\s*)?pi(?:\s*/\s*(?P<den>[0-9.eE+-]+))?\s*$")


def parse_length(x) -> float:
    if isinstance(x, bool):
        raise ConfigError(f"invalid length {x!r}")
    if isinstance(x, (int, float)):
        return float(x)
    if isinstance(x, str):
        m = _LENGTH.match(x)
        if m:
            try:
                num = float(m.group("num")) if m.group("num") else 1.0
                den = float(m.group("den")) if m.group("den") else 1.0
            except ValueError as exc:
                raise ConfigError(f"invalid length {x!r}") from exc
            return num * math.pi / den
    raise ConfigError(f"invalid length {x!r}; use a number or an expression like 'pi', '2*pi', 'pi/2'")


@dataclass(frozen=True)
class Conditions:
    s_max: float = 1e6
    grid_points: int = 161


@dataclass(frozen=True)
class Diagnostics:
    diffusion: bool = True
    allow_zero_epsilon: bool = False
    transform: str = "matrix"
    dissipation_form: str = "eps_delta"

    def __post_init__(self):
        if self.transform not in ("matrix", "dct"):
            raise ValueError("transform must be 'matrix' or 'dct'")
        if self.dissipation_form not in ("eps_delta", "limit"):
            raise ValueError("dissipation_form must be 'eps_delta' or 'limit'")


@dataclass(frozen=True)
class Output:
    directory: str = "xdif-out"
    deterministic: bool = False
    seed: int = 0


@dataclass(frozen=True)
class RunConfig:
    params: ModelParams
    domain: Domain = field(default_factory=Domain)
    solver: SolverConfig = field(default_factory=SolverConfig)
    initial: InitialData = field(default_factory=InitialData)
    level: Optional[RegularizationLevel] = None
    sweep: Optional[SweepPlan] = None
    conditions: Conditions = field(default_factory=Conditions)
    diagnostics: Diagnostics = field(default_factory=Diagnostics)
    output: Output = field(default_factory=Output)

    def to_dict(self) -> dict:
        doc = {
            "ModelParams": self.params.to_dict(),
            "Domain": self.domain.to_dict(),
            "SolverConfig": self.solver.to_dict(),
            "InitialData": self.initial.to_dict(),
            "Conditions": _plain(self.conditions),
            "Diagnostics": _plain(self.diagnostics),
            "Output": _plain(self.output),
        }
        if self.level is not None:
            doc["RegularizationLevel"] = self.level.to_dict()
        if self.sweep is not None:
            doc["SweepPlan"] = {"schedule": [lv.to_dict() for lv in self.sweep.schedule],
                                "comparison_times": list(self.sweep.comparison_times)}
        return doc


def _plain(obj) -> dict:
    return {f.name: getattr(obj, f.name) for f in fields(obj)}


_TABLES = ("ModelParams", "RegularizationLevel", "SweepPlan", "Domain", "SolverConfig",
           "InitialData", "Conditions", "Diagnostics", "Output")


def _take(table: dict, name: str, allowed) -> dict:
    if not isinstance(table, dict):
        raise ConfigError(f"[{name}] must be a table")
    unknown = sorted(set(table) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown key(s) in [{name}]: {', '.join(unknown)}")
    return dict(table)


def _build(cls, table: dict, name: str, **convert):
    allowed = [f.name for f in fields(cls)]
    data = _take(table, name, allowed)
    for key, fn in convert.items():
        if key in data:
            data[key] = fn(data[key])
    try:
        return cls(**data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{name}] {exc}") from exc


def _bump(table, name):
    return _build(Bump, table, name, center=lambda c: tuple(parse_length(x) for x in (c if isinstance(c, list) else [c])))


def parse_config(doc: dict) -> RunConfig:
    """Validate a parsed TOML/JSON document and build a :class:`RunConfig`."""
    if not isinstance(doc, dict):
        raise ConfigError("configuration must be a table at top level")
    unknown = sorted(set(doc) - set(_TABLES))
    if unknown:
        raise ConfigError(f"unknown table(s): {', '.join(unknown)}")
    if "ModelParams" not in doc:
        raise ConfigError("missing [ModelParams] table")
    params = _build(ModelParams, doc["ModelParams"], "ModelParams")
    domain = _build(Domain, doc.get("Domain", {}), "Domain",
                    lengths=lambda ls: tuple(parse_length(x) for x in (ls if isinstance(ls, list) else [ls])))
    solver = _build(SolverConfig, doc.get("SolverConfig", {}), "SolverConfig",
                    output_times=lambda ts: tuple(float(t) for t in ts))

    init_tab = dict(doc.get("InitialData", {}))
    _take(init_tab, "InitialData", [f.name for f in fields(InitialData)])
    for key in ("bump_u", "bump_v", "bump_u2"):
        if key in init_tab:
            init_tab[key] = _bump(init_tab[key], f"InitialData.{key}")
    if "bump_u" not in init_tab and "bump_v" not in init_tab and domain.ndim == 2:
        mid = tuple(L / 2 for L in domain.lengths)
        init_tab.setdefault("bump_u", Bump(mid, 0.4, 1.0, 0.5))
        init_tab.setdefault("bump_v", Bump(tuple(0.3 * L for L in domain.lengths), 0.4, 0.8, 0.5))
    try:
        initial = InitialData(**init_tab)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[InitialData] {exc}") from exc

    level = None
    if "RegularizationLevel" in doc:
        level = _build(RegularizationLevel, doc["RegularizationLevel"], "RegularizationLevel")
    sweep = None
    if "SweepPlan" in doc:
        tab = _take(doc["SweepPlan"], "SweepPlan", ["schedule", "comparison_times"])
        sched = tab.get("schedule", [])
        if not isinstance(sched, list):
            raise ConfigError("[SweepPlan] schedule must be an array of tables")
        levels = tuple(_build(RegularizationLevel, s, f"SweepPlan.schedule[{i}]") for i, s in enumerate(sched))
        try:
            sweep = SweepPlan(params, solver, domain, levels, tuple(tab.get("comparison_times", [solver.t_end])), initial)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"[SweepPlan] {exc}") from exc

    conditions = _build(Conditions, doc.get("Conditions", {}), "Conditions")
    diagnostics = _build(Diagnostics, doc.get("Diagnostics", {}), "Diagnostics")
    output = _build(Output, doc.get("Output", {}), "Output")
    if level is not None:
        try:
            level.require_simulation(allow_zero_epsilon=diagnostics.allow_zero_epsilon)
        except ValueError as exc:
            raise ConfigError(f"[RegularizationLevel] {exc}") from exc
    return RunConfig(params, domain, solver, initial, level, sweep, conditions, diagnostics, output)


def load_config(path, fmt: Optional[str] = None) -> RunConfig:
    """Read ``path`` as TOML (default) or JSON (``fmt="json"`` or a .json suffix)."""
    path = str(path)
    if fmt is None:
        fmt = "json" if path.endswith(".json") else "toml"
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        if fmt == "json":
            doc = json.loads(raw.decode())
        elif fmt == "toml":
            doc = tomllib.loads(raw.decode())
        else:
            raise ConfigError(f"unknown config format {fmt!r}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    except UnicodeDecodeError as exc:
        raise ConfigError(f"{path}: not valid UTF-8") from exc
    return parse_config(doc)


def _strip_none(x: Any):
    if isinstance(x, dict):
        return {k: _strip_none(v) for k, v in x.items() if v is not None}
    if isinstance(x, list):
        return [_strip_none(v) for v in x]
    return x


def dump_config(cfg: RunConfig, fmt: str = "toml") -> str:
    doc = _strip_none(cfg.to_dict())
    if fmt == "json":
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"
    return tomli_w.dumps(doc)
