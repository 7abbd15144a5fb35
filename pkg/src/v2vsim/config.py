"""Plain-text ``key = value`` files and the run configuration built from them.

Every configuration file used by the simulator shares one syntax::

    # comment
    key = value

Keys are case-insensitive. Relative paths are resolved against the directory
of the file that mentions them.
"""

from __future__ import annotations

import configparser
import os
from dataclasses import dataclass, field, replace
from pathlib import Path

from .errors import ConfigError

_SECTION = "v2vsim"


def parse_kv(text: str, source: str = "<string>") -> dict[str, str]:
    parser = configparser.ConfigParser(
        interpolation=None, comment_prefixes=("#", ";"), inline_comment_prefixes=("#",)
    )
    try:
        parser.read_string(f"[{_SECTION}]\n{text}", source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from exc
    return dict(parser.items(_SECTION))


def read_kv(path) -> dict[str, str]:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc.strerror}") from exc
    return parse_kv(text, source=str(path))


def get_float(values: dict, key: str, default=None) -> float:
    raw = values.get(key)
    if raw is None or raw == "":
        if default is None:
            raise ConfigError(f"missing required key {key!r}")
        return default
    try:
        return float(raw)
    except ValueError:
        raise ConfigError(f"key {key!r}: expected a number, got {raw!r}") from None


def get_int(values: dict, key: str, default=None) -> int:
    raw = values.get(key)
    if raw is None or raw == "":
        if default is None:
            raise ConfigError(f"missing required key {key!r}")
        return default
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"key {key!r}: expected an integer, got {raw!r}") from None


def get_floats(values: dict, key: str, default=None) -> tuple[float, ...]:
    raw = values.get(key)
    if raw is None or raw == "":
        if default is None:
            raise ConfigError(f"missing required key {key!r}")
        return tuple(default)
    try:
        return tuple(float(part) for part in raw.replace(",", " ").split())
    except ValueError:
        raise ConfigError(f"key {key!r}: expected numbers, got {raw!r}") from None


@dataclass(frozen=True)
class RunConfig:
    """Everything a CLI run needs. Paths are already resolved."""

    trace_fcd: Path | None = None
    trace_csv: Path | None = None
    synth: Path | None = None
    seed: int = 0
    classes: frozenset = frozenset({"bus"})
    r_p_m: float = 300.0
    r_max_m: float = 1000.0
    degree_cap: int = 4
    hist_bins: int = 10
    vehicle_params: Path | None = None
    road_profile: Path | None = None
    fuel_map: Path | None = None
    speed_csv: Path | None = None
    out: Path = Path("out")
    dt: float | None = None
    crs_note: str | None = None
    source: Path | None = field(default=None, compare=False)

    def __post_init__(self):
        if not 0 <= self.seed < 2**64:
            raise ConfigError(f"seed must be an unsigned 64-bit integer, got {self.seed}")
        if self.dt is not None and not self.dt > 0:
            raise ConfigError(f"dt must be positive, got {self.dt}")

    def with_overrides(self, **overrides) -> RunConfig:
        return replace(self, **{k: v for k, v in overrides.items() if v is not None})

    def describe(self) -> dict:
        """JSON-friendly view written alongside run outputs.

        The output directory is left out so that a run's artifacts do not
        depend on where they were written.
        """
        out = {}
        for name in self.__dataclass_fields__:
            if name in ("source", "out"):
                continue
            value = getattr(self, name)
            if isinstance(value, Path):
                value = str(value)
            elif isinstance(value, frozenset):
                value = sorted(value)
            out[name] = value
        return out


_PATH_KEYS = ("trace_fcd", "trace_csv", "synth", "vehicle_params", "road_profile",
              "fuel_map", "speed_csv", "out")


def load_run_config(path) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    values = read_kv(path)
    base = path.parent
    known = set(RunConfig.__dataclass_fields__) - {"source"}
    unknown = sorted(set(values) - known)
    if unknown:
        raise ConfigError(f"{path}: unknown keys {', '.join(unknown)}")

    kwargs = {}
    for key in _PATH_KEYS:
        if values.get(key):
            kwargs[key] = Path(os.path.normpath(base / values[key]))
    if "seed" in values:
        kwargs["seed"] = get_int(values, "seed")
    if "classes" in values:
        kwargs["classes"] = frozenset(c.strip() for c in values["classes"].replace(",", " ").split())
    for key in ("r_p_m", "r_max_m", "dt"):
        if key in values:
            kwargs[key] = get_float(values, key)
    for key in ("degree_cap", "hist_bins"):
        if key in values:
            kwargs[key] = get_int(values, key)
    if values.get("crs_note"):
        kwargs["crs_note"] = values["crs_note"]
    sources = [k for k in ("trace_fcd", "trace_csv", "synth") if k in kwargs]
    if len(sources) > 1:
        raise ConfigError(f"{path}: give only one of trace_fcd, trace_csv, synth")
    return RunConfig(source=path, **kwargs)
