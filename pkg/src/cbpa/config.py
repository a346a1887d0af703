"""Run configuration: strict YAML schema built from the scenario config dataclasses."""

from __future__ import annotations

import copy
import dataclasses
import typing
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .simworld import ScenarioPack, WorldConfig
from .scenarios.ctf import CtfConfig, CtfPack
from .scenarios.hvu import HvuConfig, HvuPack, Intrusion
from .scenarios.seek_sample import SeekSampleConfig, SeekSamplePack
from .scenarios.transit import TransitConfig, TransitPack


class ConfigError(ValueError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path
        self.message = message


@dataclass(frozen=True)
class ScenarioSpec:
    """Schema entry for one scenario: its constants dataclass and extra pack options."""
    name: str
    config_cls: type
    pack_cls: type
    pack_options: dict                      # option -> default
    world_defaults: dict
    primary_metric: str
    lower_is_better: bool = True


SCENARIOS = {
    "transit": ScenarioSpec("transit", TransitConfig, TransitPack, {},
                            {"duration": 10.0}, "mean_final_distance"),
    "hvu": ScenarioSpec("hvu", HvuConfig, HvuPack,
                        {"n_vehicles": 7, "kappa0": None, "kappa_spread": 0.2, "intrusions": [],
                         "static_allocation": False, "settle_window": 30.0, "nod_enabled": True},
                        {"duration": 1800.0}, "final_burden_variance"),
    "ctf": ScenarioSpec("ctf", CtfConfig, CtfPack, {"nod_enabled": True},
                        {"duration": 600.0}, "net_score", lower_is_better=False),
    "seek_sample": ScenarioSpec("seek_sample", SeekSampleConfig, SeekSamplePack, {"allocation": True},
                                {"dt": 2.0, "opinion_substeps": 20, "duration": 1800.0}, "unsampled_pct"),
}

TOP_LEVEL = {"scenario", "seed", "record_every", "world", *SCENARIOS}


@dataclass
class RunConfig:
    scenario: str
    seed: int = 0
    record_every: int = 1
    world: WorldConfig = field(default_factory=WorldConfig)
    constants: object = None                # the scenario's config dataclass
    pack_options: dict = field(default_factory=dict)

    @property
    def spec(self) -> ScenarioSpec:
        return SCENARIOS[self.scenario]

    def build_pack(self) -> ScenarioPack:
        opts = dict(self.pack_options)
        if self.scenario == "hvu":
            opts["intrusions"] = [Intrusion(**i) for i in opts["intrusions"]]
        return self.spec.pack_cls(self.constants, **opts)

    def effective(self) -> dict:
        """Plain-data form with every default filled in; loading it back gives an equal config."""
        section = {f.name: _plain(getattr(self.constants, f.name)) for f in schema_fields(self.spec.config_cls)}
        section.update({k: _plain(v) for k, v in self.pack_options.items()})
        return {
            "scenario": self.scenario,
            "seed": self.seed,
            "record_every": self.record_every,
            "world": {f.name: getattr(self.world, f.name) for f in dataclasses.fields(WorldConfig)},
            self.scenario: section,
        }


def schema_fields(cls) -> list:
    """Dataclass fields settable from the config file; callables stay code-only."""
    hints = typing.get_type_hints(cls)
    return [f for f in dataclasses.fields(cls) if hints[f.name] is not typing.Callable]


def _plain(v):
    if isinstance(v, tuple):
        return [_plain(x) for x in v]
    if isinstance(v, list):
        return [_plain(x) for x in v]
    if isinstance(v, dict):
        return {k: _plain(x) for k, x in v.items()}
    return v


def _is_number(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _coerce(path: str, value, default, hint):
    """Check ``value`` against the type of its default and return the stored form."""
    if hint is bool or isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(path, f"expected a boolean, got {value!r}")
        return value
    if hint is int or (isinstance(default, int) and hint is not float):
        if not isinstance(value, int) or isinstance(value, bool):
            raise ConfigError(path, f"expected an integer, got {value!r}")
        return value
    if hint is float or isinstance(default, float):
        if not _is_number(value):
            raise ConfigError(path, f"expected a number, got {value!r}")
        return float(value)
    if hint is str or isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(path, f"expected a string, got {value!r}")
        return value
    if isinstance(default, tuple):
        if not isinstance(value, (list, tuple)) or len(value) != len(default) or not all(map(_is_number, value)):
            raise ConfigError(path, f"expected a list of {len(default)} numbers, got {value!r}")
        return tuple(float(x) for x in value)
    return value


def _error_path(section: str, cls, exc: Exception) -> str:
    """Key path for a dataclass validation error: the earliest field the message names."""
    msg = str(exc)
    hits = [(msg.find(f.name), f.name) for f in dataclasses.fields(cls) if f.name in msg]
    return f"{section}.{min(hits)[1]}" if hits else section


def _build_dataclass(path: str, cls, raw: dict, base: dict | None = None):
    raw = {} if raw is None else raw
    if not isinstance(raw, dict):
        raise ConfigError(path, "expected a mapping")
    fields = {f.name: f for f in schema_fields(cls)}
    hints = typing.get_type_hints(cls)
    kw = dict(base or {})
    for key, value in raw.items():
        if key not in fields:
            raise ConfigError(f"{path}.{key}", "unknown key")
        f = fields[key]
        default = f.default if f.default is not dataclasses.MISSING else f.default_factory()
        kw[key] = _coerce(f"{path}.{key}", value, default, hints[key])
    try:
        return cls(**kw)
    except (ValueError, TypeError) as exc:
        raise ConfigError(_error_path(path, cls, exc), str(exc)) from None


def _pack_options(path: str, spec: ScenarioSpec, raw: dict) -> dict:
    opts = copy.deepcopy(spec.pack_options)
    for key, value in raw.items():
        default = spec.pack_options[key]
        kp = f"{path}.{key}"
        if key == "intrusions":
            opts[key] = _intrusions(kp, value)
        elif key == "kappa0":
            if value is not None and (not isinstance(value, list) or not all(map(_is_number, value))):
                raise ConfigError(kp, "expected null or a list of numbers")
            if value is not None and any(not 0.0 <= x < 1.0 for x in value):
                raise ConfigError(kp, "battery fractions must lie in [0, 1)")
            opts[key] = None if value is None else [float(x) for x in value]
        else:
            opts[key] = _coerce(kp, value, default, None)
    if spec.name == "hvu":
        if opts["n_vehicles"] < 1:
            raise ConfigError(f"{path}.n_vehicles", "must be at least 1")
        if opts["kappa0"] is not None and len(opts["kappa0"]) != opts["n_vehicles"]:
            raise ConfigError(f"{path}.kappa0", "length must equal n_vehicles")
    return opts


def _intrusions(path: str, value) -> list:
    if not isinstance(value, list):
        raise ConfigError(path, "expected a list")
    out = []
    for j, item in enumerate(value):
        kp = f"{path}[{j}]"
        if not isinstance(item, dict):
            raise ConfigError(kp, "expected a mapping")
        for key in item:
            if key not in ("time", "start", "heading"):
                raise ConfigError(f"{kp}.{key}", "unknown key")
        if "time" not in item or "start" not in item:
            raise ConfigError(kp, "time and start are required")
        t = _coerce(f"{kp}.time", item["time"], 0.0, float)
        start = _coerce(f"{kp}.start", item["start"], (0.0, 0.0), None)
        heading = item.get("heading")
        if heading is not None:
            heading = _coerce(f"{kp}.heading", heading, 0.0, float)
        out.append({"time": t, "start": list(start), "heading": heading})
    return out


def parse_config(doc: dict) -> RunConfig:
    """Validate a config document (already parsed YAML) and fill defaults."""
    if not isinstance(doc, dict):
        raise ConfigError("", "config must be a mapping")
    for key in doc:
        if key not in TOP_LEVEL:
            raise ConfigError(str(key), "unknown key")
    name = doc.get("scenario")
    if name not in SCENARIOS:
        raise ConfigError("scenario", f"expected one of {sorted(SCENARIOS)}, got {name!r}")
    for other in SCENARIOS:
        if other != name and other in doc:
            raise ConfigError(other, f"section does not apply to scenario {name!r}")
    spec = SCENARIOS[name]
    seed = _coerce("seed", doc.get("seed", 0), 0, int)
    if seed < 0:
        raise ConfigError("seed", "must be nonnegative")
    record_every = _coerce("record_every", doc.get("record_every", 1), 1, int)
    if record_every < 1:
        raise ConfigError("record_every", "must be at least 1")
    world = _build_dataclass("world", WorldConfig, doc.get("world"), spec.world_defaults)
    section = doc.get(name) or {}
    if not isinstance(section, dict):
        raise ConfigError(name, "expected a mapping")
    const_keys = {f.name for f in schema_fields(spec.config_cls)}
    for key in section:
        if key not in const_keys and key not in spec.pack_options:
            raise ConfigError(f"{name}.{key}", "unknown key")
    constants = _build_dataclass(name, spec.config_cls, {k: v for k, v in section.items() if k in const_keys})
    opts = _pack_options(name, spec, {k: v for k, v in section.items() if k in spec.pack_options})
    return RunConfig(name, seed, record_every, world, constants, opts)


def load_config(path) -> RunConfig:
    text = Path(path).read_text()
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError("", f"not valid YAML: {exc}") from None
    return parse_config(doc)


def dump_config(cfg: RunConfig) -> str:
    return yaml.safe_dump(cfg.effective(), sort_keys=False)


def set_key(doc: dict, dotted: str, value) -> dict:
    """Copy of ``doc`` with ``dotted`` (e.g. ``seek_sample.eta10``) set to ``value``."""
    out = copy.deepcopy(doc)
    node = out
    parts = dotted.split(".")
    for p in parts[:-1]:
        node = node.setdefault(p, {})
        if not isinstance(node, dict):
            raise ConfigError(dotted, "path runs through a non-mapping value")
    node[parts[-1]] = value
    return out
