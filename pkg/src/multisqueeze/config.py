"""Experiment configuration: YAML file, JSON-schema validation, provenance hash.

A config file is a nested mapping; every section and key is optional and
falls back to the defaults below, but unknown keys are rejected so that a
typo in a physics parameter cannot pass silently.  Errors name the field
path and, when available, the line in the file.
"""
from __future__ import annotations

import hashlib
import json
import re
from dataclasses import asdict, dataclass, field, fields, replace

import jsonschema
import yaml

from .errors import ConfigurationError


@dataclass(frozen=True)
class GridConfig:
    theta_min: float = -30e-3
    theta_max: float = 30e-3
    n_points: int = 601


@dataclass(frozen=True)
class SqueezerConfig:
    gain_collinear: float = 1.1
    gain: float = 1.05
    sigma0: float = 1e-3
    c: float = 0.1
    q: float = 0.95


@dataclass(frozen=True)
class AmplifierConfig:
    gain: float = 4.0
    sigma0: float = 1e-3
    c: float = 0.1
    q: float = 0.95
    # solve r0 so that the on-axis amplified vacuum matches sinh²(gain)
    calibrate: bool = True


@dataclass(frozen=True)
class ModesConfig:
    simulate: int = 24
    keep: int = 12
    report: int = 8


@dataclass(frozen=True)
class LossConfig:
    eta_pre: float = 0.85
    eta_detect: float = 0.5


@dataclass(frozen=True)
class AcquisitionSection:
    n_frames: int = 1500
    seeds: tuple = (0, 1, 2, 3)
    pump_rel_std: float = 0.0
    shot_noise: bool = True
    subtract_shot_noise: bool = True


@dataclass(frozen=True)
class ReconstructionConfig:
    signs: str = "auto"
    vacuum_floor: float = 1e-6
    # CSV of a user-supplied overlap matrix (squeezer rows x amplifier columns)
    g_file: str | None = None


@dataclass(frozen=True)
class ScanConfig:
    n_phases: int = 200


@dataclass(frozen=True)
class ExperimentConfig:
    grid: GridConfig = field(default_factory=GridConfig)
    squeezer: SqueezerConfig = field(default_factory=SqueezerConfig)
    amplifier: AmplifierConfig = field(default_factory=AmplifierConfig)
    modes: ModesConfig = field(default_factory=ModesConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    acquisition: AcquisitionSection = field(default_factory=AcquisitionSection)
    reconstruction: ReconstructionConfig = field(default_factory=ReconstructionConfig)
    scan: ScanConfig = field(default_factory=ScanConfig)
    output_dir: str = "run"

    def to_dict(self) -> dict:
        out = asdict(self)
        out["acquisition"]["seeds"] = list(self.acquisition.seeds)
        return out

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=True)

    def config_hash(self) -> str:
        """SHA-256 of the canonical JSON form (independent of key order, formatting and output_dir)."""
        data = self.to_dict()
        del data["output_dir"]
        blob = json.dumps(data, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def with_seeds(self, seeds) -> "ExperimentConfig":
        return replace(self, acquisition=replace(self.acquisition, seeds=tuple(int(s) for s in seeds)))

    def with_output(self, path) -> "ExperimentConfig":
        return replace(self, output_dir=str(path))


_SECTIONS = {
    "grid": GridConfig,
    "squeezer": SqueezerConfig,
    "amplifier": AmplifierConfig,
    "modes": ModesConfig,
    "loss": LossConfig,
    "acquisition": AcquisitionSection,
    "reconstruction": ReconstructionConfig,
    "scan": ScanConfig,
}

_NUM = {"type": "number"}
_POS = {"type": "number", "exclusiveMinimum": 0}
_NONNEG = {"type": "number", "minimum": 0}
_FRACTION = {"type": "number", "exclusiveMinimum": 0, "maximum": 1}
_COUNT = {"type": "integer", "minimum": 1}


def _section(props: dict) -> dict:
    return {"type": "object", "additionalProperties": False, "properties": props}


SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "multisqueeze experiment",
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "grid": _section({"theta_min": _NUM, "theta_max": _NUM, "n_points": {"type": "integer", "minimum": 2}}),
        "squeezer": _section({"gain_collinear": _NONNEG, "gain": _NONNEG, "sigma0": _POS, "c": _NONNEG,
                              "q": _FRACTION}),
        "amplifier": _section({"gain": _NONNEG, "sigma0": _POS, "c": _NONNEG, "q": _FRACTION,
                               "calibrate": {"type": "boolean"}}),
        "modes": _section({"simulate": _COUNT, "keep": _COUNT, "report": _COUNT}),
        "loss": _section({"eta_pre": _FRACTION, "eta_detect": _FRACTION}),
        "acquisition": _section({
            "n_frames": {"type": "integer", "minimum": 2},
            "seeds": {"type": "array", "minItems": 1, "uniqueItems": True,
                      "items": {"type": "integer", "minimum": 0}},
            "pump_rel_std": _NONNEG,
            "shot_noise": {"type": "boolean"},
            "subtract_shot_noise": {"type": "boolean"},
        }),
        "reconstruction": _section({
            "signs": {"enum": ["auto", "clamp", "retrieve"]},
            "vacuum_floor": _POS,
            "g_file": {"type": ["string", "null"]},
        }),
        "scan": _section({"n_phases": _COUNT}),
        "output_dir": {"type": "string", "minLength": 1},
    },
}


class _Loader(yaml.SafeLoader):
    """Safe loader that also reads exponent floats without a dot, e.g. ``1e-6``."""


_Loader.add_implicit_resolver(
    "tag:yaml.org,2002:float",
    re.compile(r"^[-+]?(?:[0-9][0-9_]*)?(?:\.[0-9_]*)?[eE][-+]?[0-9]+$"),
    list("-+0123456789."),
)


def _line_of(node, path) -> int | None:
    """1-based line of the YAML node at ``path`` (None if it cannot be located)."""
    line = None
    for key in path:
        if isinstance(node, yaml.MappingNode):
            match = [(k, v) for k, v in node.value if k.value == key]
            if not match:
                break
            k, node = match[0]
            line = k.start_mark.line + 1
        elif isinstance(node, yaml.SequenceNode) and isinstance(key, int) and key < len(node.value):
            node = node.value[key]
            line = node.start_mark.line + 1
        else:
            break
    return line


def _fail(msg: str, path=(), root=None, source: str = "config"):
    where = ".".join(str(p) for p in path) or "<root>"
    line = _line_of(root, list(path)) if root is not None else None
    loc = f"{source}:{line}" if line else source
    raise ConfigurationError(f"{loc}: {where}: {msg}")


def _semantic_checks(cfg: ExperimentConfig, fail) -> None:
    if not cfg.grid.theta_min < cfg.grid.theta_max:
        fail("theta_min must be below theta_max", ("grid", "theta_min"))
    m = cfg.modes
    if m.keep > m.simulate:
        fail(f"cannot keep {m.keep} modes out of {m.simulate} simulated", ("modes", "keep"))
    if m.report > m.keep:
        fail(f"cannot report {m.report} modes when only {m.keep} are kept", ("modes", "report"))


def from_dict(data: dict | None, root=None, source: str = "config") -> ExperimentConfig:
    """Validate a plain mapping against ``SCHEMA`` and build the config."""
    data = {} if data is None else data

    def fail(msg, path=()):
        _fail(msg, path, root, source)

    errors = sorted(jsonschema.Draft202012Validator(SCHEMA).iter_errors(data), key=lambda e: list(e.path))
    if errors:
        err = errors[0]
        fail(err.message, tuple(err.path))
    kwargs = {}
    for name, cls in _SECTIONS.items():
        section = dict(data.get(name, {}))
        if name == "acquisition" and "seeds" in section:
            section["seeds"] = tuple(section["seeds"])
        for f in fields(cls):
            # YAML ints are fine where floats are expected; keep the field type stable for hashing
            if f.name in section and f.type == "float" and not isinstance(section[f.name], bool):
                section[f.name] = float(section[f.name])
        kwargs[name] = cls(**section)
    if "output_dir" in data:
        kwargs["output_dir"] = data["output_dir"]
    cfg = ExperimentConfig(**kwargs)
    _semantic_checks(cfg, fail)
    return cfg


def loads(text: str, source: str = "config") -> ExperimentConfig:
    try:
        root = yaml.compose(text, Loader=_Loader)
        data = yaml.load(text, Loader=_Loader)
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"{source}: not valid YAML ({exc})") from None
    if data is not None and not isinstance(data, dict):
        raise ConfigurationError(f"{source}: top level must be a mapping")
    return from_dict(data, root, source)


def load(path) -> ExperimentConfig:
    with open(path) as fh:
        text = fh.read()
    return loads(text, str(path))


def dump(cfg: ExperimentConfig, path) -> None:
    with open(path, "w") as fh:
        fh.write(cfg.to_yaml())
