"""Scenario files: flat ``key = value`` text with ``[section]`` headers.

Every key remembers the line it came from so validation errors point back
at the file. Unknown sections and keys are rejected.
"""

import itertools
import logging
import math
import re
from pathlib import Path
from typing import Dict, Iterable, List, Literal, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from .errors import ConfigError

logger = logging.getLogger(__name__)

# Default configuration values
DEFAULT_CONFIG = {
    "graph": {"source": "random", "probability": 0.5, "directed": False},
    "initial": {"mode": "component_scaled", "low": 0.0, "high": 1.0},
    "gains": {"criteria": "standard"},
    "quantizer": {"allow_insufficient_rate": False},
    "run": {"horizon": 1000, "seed": 0, "rate_tolerance": 0.001},
}

SECTION_ORDER = ("system", "graph", "initial", "gains", "quantizer", "run")

_ANGLE = re.compile(
    r"^\s*(?P<sign>-)?\s*(?:(?P<num>\d+(?:\.\d*)?)\s*\*?\s*)?pi\s*(?:/\s*(?P<den>\d+(?:\.\d*)?))?\s*$"
)

Entries = Dict[Tuple[str, str], Tuple[str, Optional[int]]]


def parse_angle(value: Union[str, float, int]) -> float:
    """Radians from a number or a ``k*pi/n`` expression."""
    if isinstance(value, (int, float)):
        return float(value)
    text = str(value).strip().lower()
    match = _ANGLE.match(text)
    if match:
        numerator = float(match.group("num")) if match.group("num") else 1.0
        denominator = float(match.group("den")) if match.group("den") else 1.0
        if denominator == 0:
            raise ValueError("angle denominator is zero")
        angle = numerator * math.pi / denominator
        return -angle if match.group("sign") else angle
    try:
        return float(text)
    except ValueError:
        raise ValueError(f"not an angle: {value!r}") from None


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class SystemSection(_Section):
    m: int = Field(ge=1)
    theta: float

    @field_validator("theta", mode="before")
    @classmethod
    def _angle(cls, value):
        return parse_angle(value)


class GraphSection(_Section):
    source: Literal["random", "file", "inline", "complete", "path", "cycle"] = DEFAULT_CONFIG["graph"]["source"]
    nodes: Optional[int] = Field(default=None, ge=1)
    probability: float = Field(default=DEFAULT_CONFIG["graph"]["probability"], gt=0.0, le=1.0)
    directed: bool = DEFAULT_CONFIG["graph"]["directed"]
    path: Optional[str] = None
    edges: Optional[str] = None
    seed: Optional[int] = None


class InitialSection(_Section):
    mode: Literal["component_scaled", "uniform"] = DEFAULT_CONFIG["initial"]["mode"]
    low: float = DEFAULT_CONFIG["initial"]["low"]
    high: float = DEFAULT_CONFIG["initial"]["high"]
    cstar: Optional[float] = Field(default=None, gt=0.0)
    cdeltastar: Optional[float] = Field(default=None, gt=0.0)


class GainsSection(_Section):
    h: Optional[float] = Field(default=None, gt=0.0)
    epsilon: Optional[float] = Field(default=None, gt=0.0, lt=4.0)
    criteria: Literal["standard", "strengthened"] = DEFAULT_CONFIG["gains"]["criteria"]
    p0: Optional[float] = Field(default=None, gt=0.0)


class QuantizerSection(_Section):
    levels: Optional[int] = Field(default=None, ge=1)
    levels_initial: Optional[int] = Field(default=None, ge=1)
    allow_insufficient_rate: bool = DEFAULT_CONFIG["quantizer"]["allow_insufficient_rate"]


class RunSection(_Section):
    horizon: int = Field(default=DEFAULT_CONFIG["run"]["horizon"], ge=1)
    seed: int = DEFAULT_CONFIG["run"]["seed"]
    rate_tolerance: float = Field(default=DEFAULT_CONFIG["run"]["rate_tolerance"], ge=0.0)


class ScenarioConfig(_Section):
    """Fully validated scenario."""
    system: SystemSection
    graph: GraphSection = GraphSection()
    initial: InitialSection = InitialSection()
    gains: GainsSection = GainsSection()
    quantizer: QuantizerSection = QuantizerSection()
    run: RunSection = RunSection()


def parse_entries(text: str, source: Optional[str] = None) -> Entries:
    """Collect (section, key) -> (raw value, line) pairs."""
    entries: Entries = {}
    section: Optional[str] = None
    for line_number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]") or len(line) < 3:
                raise ConfigError(f"malformed section header {raw.strip()!r}", line=line_number, source=source)
            section = line[1:-1].strip().lower()
            if section not in SECTION_ORDER:
                raise ConfigError(f"unknown section [{section}]", line=line_number, source=source)
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", line=line_number, source=source)
        if section is None:
            raise ConfigError("key outside of any [section]", line=line_number, source=source)
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError("empty key", line=line_number, source=source)
        if (section, key) in entries:
            raise ConfigError(f"duplicate key {section}.{key}", line=line_number, source=source)
        entries[(section, key)] = (value, line_number)
    return entries


def parse_override(override: str) -> Tuple[Tuple[str, str], str]:
    """Split ``section.key=value``."""
    if "=" not in override:
        raise ConfigError(f"override {override!r} is not of the form section.key=value", source="--set")
    name, value = (part.strip() for part in override.split("=", 1))
    if "." not in name:
        raise ConfigError(f"override key {name!r} must be section.key", source="--set")
    section, key = (part.strip().lower() for part in name.split(".", 1))
    if section not in SECTION_ORDER:
        raise ConfigError(f"unknown section [{section}] in override {override!r}", source="--set")
    return (section, key), value


def apply_overrides(entries: Entries, overrides: Iterable[str]) -> Entries:
    merged = dict(entries)
    for override in overrides:
        name, value = parse_override(override)
        merged[name] = (value, None)
    return merged


def validate_entries(entries: Entries, source: Optional[str] = None) -> ScenarioConfig:
    """Build the pydantic model, mapping the first validation error to its line."""
    data: Dict[str, Dict[str, str]] = {}
    for (section, key), (value, _) in entries.items():
        data.setdefault(section, {})[key] = value
    try:
        return ScenarioConfig.model_validate(data)
    except ValidationError as exc:
        error = exc.errors()[0]
        location = tuple(str(part) for part in error["loc"])
        name = ".".join(location)
        line = entries.get(location[:2], (None, None))[1] if len(location) >= 2 else None
        if error["type"] == "extra_forbidden":
            message = f"unknown key {name}"
        elif error["type"] == "missing":
            message = f"missing required key {name}"
        else:
            message = f"{name}: {error['msg']}"
        raise ConfigError(message, line=line, source=source) from None


def resolve_relative_paths(config: ScenarioConfig, base_dir: Union[str, Path]) -> ScenarioConfig:
    """Anchor a relative graph.path at base_dir so manifests rerun from any directory."""
    path = config.graph.path
    if path is None or Path(path).is_absolute():
        return config
    resolved = str((Path(base_dir) / path).resolve())
    return config.model_copy(update={"graph": config.graph.model_copy(update={"path": resolved})})


def load_config(path: Union[str, Path], overrides: Iterable[str] = ()) -> ScenarioConfig:
    """Read, override and validate a scenario file."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"config file not found: {path}")
    entries = parse_entries(path.read_text(), source=str(path))
    config = validate_entries(apply_overrides(entries, overrides), source=str(path))
    config = resolve_relative_paths(config, path.parent)
    logger.debug(f"Loaded config {path}")
    return config


def config_from_text(text: str, overrides: Iterable[str] = (), source: Optional[str] = None) -> ScenarioConfig:
    entries = parse_entries(text, source=source)
    return validate_entries(apply_overrides(entries, overrides), source=source)


def _render_value(value) -> str:
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, float):
        return repr(value)
    return str(value)


def render_config(config: ScenarioConfig, derived: Optional[Dict[str, object]] = None) -> str:
    """Scenario text that re-validates to the same config, derived values as comments."""
    lines: List[str] = []
    dumped = config.model_dump()
    for section in SECTION_ORDER:
        lines.append(f"[{section}]")
        for key, value in dumped[section].items():
            if value is None:
                continue
            lines.append(f"{key} = {_render_value(value)}")
        lines.append("")
    if derived:
        lines.append("# derived values (not read back)")
        for key, value in derived.items():
            lines.append(f"# {key} = {_render_value(value)}")
    return "\n".join(lines).rstrip() + "\n"


def parse_grid(text: str, source: Optional[str] = None) -> List[Dict[str, str]]:
    """Cartesian product of ``section.key = v1, v2, ...`` lines as override lists."""
    axes: List[Tuple[str, List[str]]] = []
    for line_number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'section.key = v1, v2', got {raw.strip()!r}", line=line_number, source=source)
        name, values = (part.strip() for part in line.split("=", 1))
        if "." not in name:
            raise ConfigError(f"grid key {name!r} must be section.key", line=line_number, source=source)
        choices = [value.strip() for value in values.split(",") if value.strip()]
        if not choices:
            raise ConfigError(f"grid key {name} has no values", line=line_number, source=source)
        axes.append((name, choices))
    if not axes:
        return [{}]
    names = [name for name, _ in axes]
    return [dict(zip(names, combination)) for combination in itertools.product(*(choices for _, choices in axes))]
