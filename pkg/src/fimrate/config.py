"""YAML run configuration with strict keys.

A config file has up to five top-level sections::

    scenario:   physical setup (ScenarioParams fields, units in key names)
    solver:     tolerances and iteration caps (SolverConfig fields)
    sweep:      axis, values, schemes, drops
    run:        scheme and drop index for a single solve
    output:     out_dir, per_drop_csv

Missing keys take their defaults.  Unknown keys, wrong types and invalid
values raise :class:`ConfigError` naming the key path and, where known, the
line in the file.
"""

from __future__ import annotations

import dataclasses
import re
import typing
from dataclasses import dataclass, field, replace
from pathlib import Path

import yaml

from .bca import SolverConfig
from .scenario import AXES, SCHEMES, ScenarioParams, SweepSpec

# set per scheme by the driver, not by the user
_SOLVER_INTERNAL = {"power_mode", "morph_enabled"}


class _Loader(yaml.SafeLoader):
    """Safe loader that also reads exponent floats without a dot (``1e-6``)."""


_Loader.add_implicit_resolver(
    "tag:yaml.org,2002:float",
    re.compile(r"""^[-+]?(?:\d+\.?\d*|\.\d+)[eE][-+]?\d+$"""),
    list("-+0123456789."),
)


class ConfigError(ValueError):
    """Invalid configuration; ``str()`` carries the key path and line."""


@dataclass
class SweepSection:
    axis: str = "p_max_dbm"
    values: list = field(default_factory=lambda: [10.0, 15.0, 20.0, 25.0, 30.0])
    schemes: list = field(default_factory=lambda: list(SCHEMES))
    drops: int = 20


@dataclass
class RunSection:
    scheme: str = "FIM-OPA"
    drop: int = 0


@dataclass
class OutputSection:
    out_dir: str = "results"
    per_drop_csv: bool = False


@dataclass
class RunConfig:
    scenario: ScenarioParams = field(default_factory=ScenarioParams)
    solver: SolverConfig = field(default_factory=SolverConfig)
    sweep: SweepSection = field(default_factory=SweepSection)
    run: RunSection = field(default_factory=RunSection)
    output: OutputSection = field(default_factory=OutputSection)

    def sweep_spec(self, drops: int | None = None) -> SweepSpec:
        s = self.sweep
        return SweepSpec(axis=s.axis, values=tuple(s.values), schemes=tuple(s.schemes),
                         drops=int(drops if drops is not None else s.drops))


_SECTIONS = {"scenario": ScenarioParams, "solver": SolverConfig, "sweep": SweepSection,
             "run": RunSection, "output": OutputSection}


def _key_lines(text: str) -> dict:
    """Map ``section.key`` paths to 1-based line numbers."""
    lines: dict = {}

    def walk(node, prefix):
        if isinstance(node, yaml.MappingNode):
            for k, v in node.value:
                path = f"{prefix}.{k.value}" if prefix else str(k.value)
                lines[path] = k.start_mark.line + 1
                walk(v, path)

    try:
        walk(yaml.compose(text, Loader=_Loader), "")
    except yaml.YAMLError:
        pass
    return lines


def _where(path: str, lines: dict) -> str:
    return f"{path} (line {lines[path]})" if path in lines else path


def _coerce(value, hint, path: str, lines: dict):
    args = typing.get_args(hint)
    if args and type(None) in args:
        if value is None:
            return None
        hint = next(a for a in args if a is not type(None))
    base = typing.get_origin(hint) or hint
    ok = True
    if base is bool:
        ok = isinstance(value, bool)
    elif base is int:
        ok = isinstance(value, int) and not isinstance(value, bool)
    elif base is float:
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
        value = float(value) if ok else value
    elif base is str:
        ok = isinstance(value, str)
    elif base is list:
        ok = isinstance(value, list)
    if not ok:
        raise ConfigError(f"{_where(path, lines)}: expected {getattr(base, '__name__', base)}, "
                          f"got {type(value).__name__} {value!r}")
    return value


def _build_section(name: str, raw, lines: dict):
    cls = _SECTIONS[name]
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError(f"{_where(name, lines)}: section must be a mapping")
    hints = typing.get_type_hints(cls)
    allowed = {f.name for f in dataclasses.fields(cls)}
    if cls is SolverConfig:
        allowed -= _SOLVER_INTERNAL
    kwargs = {}
    for key, value in raw.items():
        path = f"{name}.{key}"
        if key not in allowed:
            raise ConfigError(f"{_where(path, lines)}: unknown key; allowed keys are "
                              f"{sorted(allowed)}")
        kwargs[key] = _coerce(value, hints[key], path, lines)
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{_where(name, lines)}: {exc}") from exc


def parse_config(text: str, source: str = "<string>") -> RunConfig:
    """Parse YAML text into a validated :class:`RunConfig`."""
    try:
        data = yaml.load(text, Loader=_Loader)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        loc = f" line {mark.line + 1}, column {mark.column + 1}" if mark is not None else ""
        raise ConfigError(f"{source}:{loc} malformed YAML: {getattr(exc, 'problem', exc)}") from exc
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"{source}: top level must be a mapping of sections")
    lines = _key_lines(text)
    unknown = [k for k in data if k not in _SECTIONS]
    if unknown:
        raise ConfigError(f"{source}: {_where(str(unknown[0]), lines)}: unknown section; "
                          f"allowed sections are {sorted(_SECTIONS)}")
    sections = {name: _build_section(name, data.get(name), lines) for name in _SECTIONS}
    cfg = RunConfig(**sections)
    try:
        validate(cfg)
    except ConfigError as exc:
        raise ConfigError(f"{source}: {exc}") from exc
    return cfg


def load_config(path: str | Path | None) -> RunConfig:
    """Read a config file; ``None`` gives the defaults."""
    if path is None:
        return validate(RunConfig())
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    return parse_config(text, source=str(path))


def validate(cfg: RunConfig) -> RunConfig:
    """Cross-field checks that the dataclass constructors do not cover."""
    try:
        cfg.scenario.validate()
    except ValueError as exc:
        raise ConfigError(f"scenario: {exc}") from exc
    sc = cfg.scenario
    if sc.interference not in ("uatf", "error_only"):
        raise ConfigError(f"scenario.interference: must be 'uatf' or 'error_only', got {sc.interference!r}")
    if sc.n_x < 1 or sc.n_z < 1:
        raise ConfigError("scenario.n_x/n_z: must be >= 1")
    if sc.y_max_wavelengths < 0:
        raise ConfigError("scenario.y_max_wavelengths: must be non-negative")
    if sc.user_radius_m < 0 or (sc.user_radius_m > 0 and sc.user_radius_m >= sc.center_distance_m):
        raise ConfigError("scenario.user_radius_m: disk must lie strictly in front of the array")
    if sc.center_distance_m - sc.user_radius_m < 1.0:
        raise ConfigError("scenario.center_distance_m: users must stay beyond the 1 m reference distance")
    sw = cfg.sweep
    if sw.axis not in AXES:
        raise ConfigError(f"sweep.axis: must be one of {list(AXES)}, got {sw.axis!r}")
    if not sw.schemes:
        raise ConfigError("sweep.schemes: scheme list is empty")
    bad = [s for s in sw.schemes if s not in SCHEMES]
    if bad:
        raise ConfigError(f"sweep.schemes: unknown schemes {bad}; allowed {list(SCHEMES)}")
    if not sw.values:
        raise ConfigError("sweep.values: value list is empty")
    if sw.drops < 1:
        raise ConfigError("sweep.drops: must be >= 1")
    if cfg.run.scheme not in SCHEMES:
        raise ConfigError(f"run.scheme: must be one of {list(SCHEMES)}, got {cfg.run.scheme!r}")
    if cfg.run.drop < 0:
        raise ConfigError("run.drop: must be >= 0")
    return cfg


def with_overrides(cfg: RunConfig, drops: int | None = None, out_dir: str | None = None) -> RunConfig:
    """Apply command-line overrides on top of file values."""
    if drops is not None:
        if drops < 1:
            raise ConfigError("--drops must be >= 1")
        cfg = replace(cfg, sweep=replace(cfg.sweep, drops=int(drops)))
    if out_dir is not None:
        cfg = replace(cfg, output=replace(cfg.output, out_dir=str(out_dir)))
    return cfg


def to_dict(cfg: RunConfig, include_output: bool = False) -> dict:
    """Plain-data view for embedding in result files.

    The output section is left out by default so that results written to
    different directories stay byte-identical.
    """
    out = {}
    for name in _SECTIONS:
        if name == "output" and not include_output:
            continue
        d = dataclasses.asdict(getattr(cfg, name))
        if name == "solver":
            for k in _SOLVER_INTERNAL:
                d.pop(k, None)
        out[name] = d
    return out
