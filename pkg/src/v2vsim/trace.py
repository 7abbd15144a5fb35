"""Mobility traces: SUMO FCD ingestion, CSV traces and a synthetic generator.

A trace is held as a :class:`Timeline` of :class:`Snapshot` objects, one per
sampled instant, in the trace's native sampling. Nothing is interpolated.
"""

from __future__ import annotations

import csv
import math
import statistics
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable
from xml.parsers import expat
from xml.sax.saxutils import quoteattr

import numpy as np

from .config import get_float, get_floats, get_int, read_kv
from .errors import (
    ConfigError,
    TraceAttributeError,
    TraceParseError,
    TraceStructureError,
    UnknownVehicleError,
)


class VehicleClass(str, Enum):
    BUS = "bus"
    PRIVATE = "private"
    OTHER = "other"


# (substring of the FCD ``type`` attribute, class); first match wins
DEFAULT_CLASS_RULES: tuple[tuple[str, VehicleClass], ...] = (("bus", VehicleClass.BUS),)


def classify(vehicle_type: str | None, rules=DEFAULT_CLASS_RULES,
             fallback: VehicleClass = VehicleClass.PRIVATE) -> VehicleClass:
    if vehicle_type:
        lowered = vehicle_type.lower()
        for needle, cls in rules:
            if needle.lower() in lowered:
                return VehicleClass(cls)
    return fallback


@dataclass(frozen=True, slots=True)
class VehicleState:
    vehicle_id: str
    pos_x: float
    pos_y: float
    speed: float
    vehicle_class: VehicleClass = VehicleClass.PRIVATE
    vehicle_type: str | None = None

    def __post_init__(self):
        if not self.vehicle_id:
            raise TraceAttributeError("vehicle_id must be non-empty")
        if not self.speed >= 0:
            raise TraceAttributeError(f"vehicle {self.vehicle_id!r}: negative speed {self.speed}")


@dataclass(frozen=True)
class Snapshot:
    time: float
    states: tuple[VehicleState, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "states", tuple(self.states))
        seen = set()
        for s in self.states:
            if s.vehicle_id in seen:
                raise TraceStructureError(
                    f"duplicate vehicle id {s.vehicle_id!r} at time {self.time}")
            seen.add(s.vehicle_id)

    @property
    def ids(self) -> list[str]:
        return [s.vehicle_id for s in self.states]

    def by_id(self) -> dict[str, VehicleState]:
        return {s.vehicle_id: s for s in self.states}


@dataclass(frozen=True)
class Timeline:
    """Time-ordered snapshots. ``step`` is the median gap between snapshots."""

    snapshots: tuple[Snapshot, ...]
    step: float = field(default=1.0)

    def __post_init__(self):
        object.__setattr__(self, "snapshots", tuple(self.snapshots))
        if not self.step > 0:
            raise TraceStructureError(f"timeline step must be positive, got {self.step}")
        for a, b in zip(self.snapshots, self.snapshots[1:]):
            if not b.time > a.time:
                raise TraceStructureError(
                    f"snapshot times must increase strictly: {a.time} then {b.time}")

    @classmethod
    def from_snapshots(cls, snapshots: Iterable[Snapshot], default_step: float = 1.0) -> Timeline:
        snapshots = tuple(snapshots)
        for a, b in zip(snapshots, snapshots[1:]):
            if not b.time > a.time:
                raise TraceStructureError(
                    f"snapshot times must increase strictly: {a.time} then {b.time}")
        gaps = [b.time - a.time for a, b in zip(snapshots, snapshots[1:])]
        step = statistics.median(gaps) if gaps else default_step
        return cls(snapshots, step)

    def __len__(self):
        return len(self.snapshots)

    def __iter__(self):
        return iter(self.snapshots)

    @property
    def times(self) -> list[float]:
        return [s.time for s in self.snapshots]

    def at(self, time: float) -> Snapshot:
        """Latest snapshot taken at or before ``time``."""
        idx = int(np.searchsorted(self.times, time, side="right")) - 1
        if idx < 0:
            raise KeyError(f"time {time} precedes the first snapshot")
        return self.snapshots[idx]

    def class_counts(self) -> dict[VehicleClass, int]:
        """Number of distinct vehicles per class over the whole timeline."""
        seen: dict[str, VehicleClass] = {}
        for snap in self.snapshots:
            for s in snap.states:
                seen.setdefault(s.vehicle_id, s.vehicle_class)
        counts: dict[VehicleClass, int] = {}
        for cls in seen.values():
            counts[cls] = counts.get(cls, 0) + 1
        return counts


def filter_class(timeline: Timeline, classes) -> Timeline:
    wanted = {VehicleClass(c) for c in classes}
    snaps = tuple(
        Snapshot(s.time, tuple(v for v in s.states if v.vehicle_class in wanted))
        for s in timeline.snapshots
    )
    return Timeline(snaps, timeline.step)


def vehicle_series(timeline: Timeline, vehicle_id: str) -> tuple[np.ndarray, np.ndarray]:
    """Sample times and speeds of one vehicle, in timeline order."""
    times, speeds = [], []
    for snap in timeline.snapshots:
        for s in snap.states:
            if s.vehicle_id == vehicle_id:
                times.append(snap.time)
                speeds.append(s.speed)
                break
    if not times:
        raise UnknownVehicleError(f"vehicle {vehicle_id!r} does not appear in the trace")
    return np.asarray(times, dtype=float), np.asarray(speeds, dtype=float)


# --- FCD XML -----------------------------------------------------------------

_REQUIRED = ("id", "x", "y", "speed")


class _FcdHandler:
    def __init__(self, parser, rules):
        self.parser = parser
        self.rules = rules
        self.stack: list[str] = []
        self.snapshots: list[Snapshot] = []
        self.current_time: float | None = None
        self.current: list[VehicleState] = []
        self.current_ids: set[str] = set()

    def where(self):
        return f"line {self.parser.CurrentLineNumber}"

    def start(self, name, attrs):
        depth = len(self.stack)
        self.stack.append(name)
        if depth == 0:
            if name != "fcd-export":
                raise TraceStructureError(f"root element must be <fcd-export>, got <{name}>")
        elif depth == 1 and name == "timestep":
            if "time" not in attrs:
                raise TraceAttributeError(f"<timestep> at {self.where()} lacks attribute 'time'")
            t = self._number(attrs["time"], "time", "timestep")
            if self.snapshots and not t > self.snapshots[-1].time:
                raise TraceStructureError(
                    f"<timestep time={attrs['time']!r}> at {self.where()} does not follow "
                    f"previous time {self.snapshots[-1].time}")
            self.current_time = t
            self.current = []
            self.current_ids = set()
        elif depth == 2 and name == "vehicle" and self.stack[1] == "timestep":
            self.current.append(self._vehicle(attrs))

    def end(self, name):
        self.stack.pop()
        if name == "timestep" and len(self.stack) == 1:
            self.snapshots.append(Snapshot(self.current_time, tuple(self.current)))
            self.current_time = None

    def _number(self, raw, attr, element):
        try:
            value = float(raw)
        except ValueError:
            raise TraceAttributeError(
                f"<{element}> at {self.where()}: attribute {attr!r}={raw!r} is not a number"
            ) from None
        if not math.isfinite(value):
            raise TraceAttributeError(
                f"<{element}> at {self.where()}: attribute {attr!r}={raw!r} is not finite")
        return value

    def _vehicle(self, attrs):
        missing = [a for a in _REQUIRED if a not in attrs]
        if missing:
            ident = attrs.get("id", "?")
            raise TraceAttributeError(
                f"<vehicle id={ident!r}> at {self.where()} (timestep {self.current_time}) "
                f"lacks attribute(s) {', '.join(missing)}")
        vid = attrs["id"]
        if vid in self.current_ids:
            raise TraceStructureError(
                f"duplicate <vehicle id={vid!r}> at {self.where()} (timestep {self.current_time})")
        self.current_ids.add(vid)
        speed = self._number(attrs["speed"], "speed", "vehicle")
        if speed < 0:
            raise TraceAttributeError(f"<vehicle id={vid!r}> at {self.where()}: negative speed")
        vtype = attrs.get("type")
        return VehicleState(
            vid,
            self._number(attrs["x"], "x", "vehicle"),
            self._number(attrs["y"], "y", "vehicle"),
            speed,
            classify(vtype, self.rules),
            vtype,
        )


def parse_fcd(stream, class_rules=DEFAULT_CLASS_RULES, default_step: float = 1.0) -> Timeline:
    """Parse a SUMO ``fcd-export`` document from a text or binary stream."""
    parser = expat.ParserCreate()
    handler = _FcdHandler(parser, class_rules)
    parser.StartElementHandler = handler.start
    parser.EndElementHandler = handler.end
    try:
        while True:
            chunk = stream.read(1 << 16)
            if not chunk:
                break
            parser.Parse(chunk, False)
        parser.Parse(b"", True)
    except expat.ExpatError as exc:
        raise TraceParseError(
            f"malformed FCD XML: {expat.errors.messages[exc.code]}"
            + (f" inside <{handler.stack[-1]}>" if handler.stack else ""),
            exc.lineno, exc.offset + 1,
        ) from None
    return Timeline.from_snapshots(handler.snapshots, default_step)


def write_fcd(timeline: Timeline, sink) -> None:
    """Serialize to FCD XML. Floats use ``repr`` so re-parsing is exact."""
    sink.write('<?xml version="1.0" encoding="UTF-8"?>\n<fcd-export>\n')
    for snap in timeline.snapshots:
        if not snap.states:
            sink.write(f'    <timestep time="{snap.time!r}"/>\n')
            continue
        sink.write(f'    <timestep time="{snap.time!r}">\n')
        for s in snap.states:
            type_attr = f" type={quoteattr(s.vehicle_type)}" if s.vehicle_type is not None else ""
            sink.write(
                f'        <vehicle id={quoteattr(s.vehicle_id)} x="{s.pos_x!r}" '
                f'y="{s.pos_y!r}" speed="{s.speed!r}"{type_attr}/>\n')
        sink.write("    </timestep>\n")
    sink.write("</fcd-export>\n")


# --- CSV traces --------------------------------------------------------------

CSV_HEADER = ("time", "id", "x", "y", "speed", "type")


def read_csv_trace(stream, class_rules=DEFAULT_CLASS_RULES, default_step: float = 1.0) -> Timeline:
    """Read a ``time,id,x,y,speed,type`` table; rows sharing a time form a snapshot."""
    reader = csv.DictReader(stream)
    if reader.fieldnames is None:
        raise TraceParseError("empty CSV trace")
    missing = [c for c in CSV_HEADER[:5] if c not in reader.fieldnames]
    if missing:
        raise TraceParseError(f"CSV trace header lacks column(s) {', '.join(missing)}", 1, 1)

    snapshots: list[Snapshot] = []
    rows: list[VehicleState] = []
    current: float | None = None
    for lineno, row in enumerate(reader, start=2):
        try:
            t = float(row["time"])
            x, y, speed = float(row["x"]), float(row["y"]), float(row["speed"])
        except (TypeError, ValueError):
            raise TraceAttributeError(f"CSV trace line {lineno}: non-numeric field in {row}") from None
        if current is None or t != current:
            if current is not None:
                if not t > current:
                    raise TraceStructureError(
                        f"CSV trace line {lineno}: time {t} does not follow {current}")
                snapshots.append(Snapshot(current, tuple(rows)))
            current, rows = t, []
        vtype = row.get("type") or None
        try:
            rows.append(VehicleState(row["id"], x, y, speed, classify(vtype, class_rules), vtype))
        except TraceAttributeError as exc:
            raise TraceAttributeError(f"CSV trace line {lineno}: {exc}") from None
    if current is not None:
        snapshots.append(Snapshot(current, tuple(rows)))
    return Timeline.from_snapshots(snapshots, default_step)


def write_csv_trace(timeline: Timeline, sink) -> None:
    writer = csv.writer(sink, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for snap in timeline.snapshots:
        for s in snap.states:
            writer.writerow([repr(snap.time), s.vehicle_id, repr(s.pos_x), repr(s.pos_y),
                             repr(s.speed), s.vehicle_type or ""])


# --- synthetic traces --------------------------------------------------------

@dataclass(frozen=True)
class SynthConfig:
    """Synthetic scenario: ``n_vehicles`` primary movers plus optional background traffic.

    With ``n_routes > 0`` the primary movers are spread round-robin over that
    many closed waypoint loops (bus lines); otherwise they follow random
    waypoints. ``n_private`` background vehicles always use random waypoints.
    Snapshots are taken at ``k * step`` for ``k < round(duration / step)``.
    """

    n_vehicles: int
    duration: float
    step: float = 1.0
    bbox: tuple[float, float, float, float] = (0.0, 0.0, 5000.0, 5000.0)
    speed_min: float = 5.0
    speed_max: float = 15.0
    n_routes: int = 0
    waypoints_per_route: int = 6
    n_private: int = 0
    vehicle_type: str = "bus"
    private_type: str = "passenger"

    def __post_init__(self):
        if self.n_vehicles <= 0:
            raise ConfigError(f"n_vehicles must be positive, got {self.n_vehicles}")
        if not self.duration > 0:
            raise ConfigError(f"duration must be positive, got {self.duration}")
        if not self.step > 0:
            raise ConfigError(f"step must be positive, got {self.step}")
        if self.n_private < 0 or self.n_routes < 0:
            raise ConfigError("n_private and n_routes must be non-negative")
        if self.n_routes > 0 and self.waypoints_per_route < 2:
            raise ConfigError("waypoints_per_route must be at least 2")
        if not (0 <= self.speed_min <= self.speed_max and self.speed_max > 0):
            raise ConfigError(
                f"need 0 <= speed_min <= speed_max and speed_max > 0, "
                f"got {self.speed_min}, {self.speed_max}")
        xmin, ymin, xmax, ymax = self.bbox
        if not (xmax > xmin and ymax > ymin):
            raise ConfigError(f"degenerate bounding box {self.bbox}")
        if self.n_snapshots < 1:
            raise ConfigError("duration shorter than half a step yields no snapshots")

    @property
    def n_snapshots(self) -> int:
        return int(round(self.duration / self.step))

    @classmethod
    def from_mapping(cls, values: dict) -> SynthConfig:
        bbox = get_floats(values, "bbox", cls.bbox)
        if len(bbox) != 4:
            raise ConfigError(f"bbox needs 4 numbers (xmin ymin xmax ymax), got {len(bbox)}")
        return cls(
            n_vehicles=get_int(values, "n_vehicles"),
            duration=get_float(values, "duration"),
            step=get_float(values, "step", cls.step),
            bbox=bbox,
            speed_min=get_float(values, "speed_min", cls.speed_min),
            speed_max=get_float(values, "speed_max", cls.speed_max),
            n_routes=get_int(values, "n_routes", cls.n_routes),
            waypoints_per_route=get_int(values, "waypoints_per_route", cls.waypoints_per_route),
            n_private=get_int(values, "n_private", cls.n_private),
            vehicle_type=values.get("vehicle_type") or cls.vehicle_type,
            private_type=values.get("private_type") or cls.private_type,
        )

    @classmethod
    def from_file(cls, path) -> SynthConfig:
        return cls.from_mapping(read_kv(path))


class _Mover:
    """Point moving along a waypoint sequence at piecewise-constant speed."""

    def __init__(self, rng, bbox, speed_range, waypoints=None, start_leg=0, start_frac=0.0):
        self.rng = rng
        self.bbox = bbox
        self.speed_range = speed_range
        self.waypoints = waypoints
        if waypoints is None:
            self.x, self.y = self._random_point()
            self.target = self._random_point()
        else:
            self.leg = start_leg % len(waypoints)
            (ax, ay), (bx, by) = waypoints[self.leg], waypoints[(self.leg + 1) % len(waypoints)]
            self.x, self.y = ax + (bx - ax) * start_frac, ay + (by - ay) * start_frac
            self.target = (bx, by)
        self.speed = self._draw_speed()

    def _random_point(self):
        xmin, ymin, xmax, ymax = self.bbox
        u = self.rng.random(2)
        return xmin + (xmax - xmin) * float(u[0]), ymin + (ymax - ymin) * float(u[1])

    def _draw_speed(self):
        lo, hi = self.speed_range
        return float(self.rng.uniform(lo, hi)) if hi > lo else float(lo)

    def _next_target(self):
        if self.waypoints is None:
            self.target = self._random_point()
        else:
            self.leg = (self.leg + 1) % len(self.waypoints)
            self.target = self.waypoints[(self.leg + 1) % len(self.waypoints)]
        self.speed = self._draw_speed()

    def advance(self, dt):
        remaining = dt
        for _ in range(10_000):
            if remaining <= 0:
                break
            tx, ty = self.target
            dist = math.hypot(tx - self.x, ty - self.y)
            if dist == 0.0:
                self._next_target()
                continue
            if self.speed == 0.0:
                break
            need = dist / self.speed
            if need > remaining:
                f = remaining * self.speed / dist
                self.x += (tx - self.x) * f
                self.y += (ty - self.y) * f
                break
            self.x, self.y = tx, ty
            remaining -= need
            self._next_target()
        xmin, ymin, xmax, ymax = self.bbox
        self.x = min(max(self.x, xmin), xmax)
        self.y = min(max(self.y, ymin), ymax)


def synth_trace(config: SynthConfig, seed: int) -> Timeline:
    """Deterministic synthetic trace for a given ``(config, seed)``."""
    root = np.random.SeedSequence(seed)
    route_seq, *vehicle_seqs = root.spawn(1 + config.n_vehicles + config.n_private)
    route_rng = np.random.default_rng(route_seq)
    xmin, ymin, xmax, ymax = config.bbox
    routes = [
        [(float(route_rng.uniform(xmin, xmax)), float(route_rng.uniform(ymin, ymax)))
         for _ in range(config.waypoints_per_route)]
        for _ in range(config.n_routes)
    ]

    speed_range = (config.speed_min, config.speed_max)
    movers: list[tuple[str, str, _Mover]] = []
    for k in range(config.n_vehicles):
        rng = np.random.default_rng(vehicle_seqs[k])
        if routes:
            r = k % len(routes)
            mover = _Mover(rng, config.bbox, speed_range, routes[r],
                           int(rng.integers(len(routes[r]))), float(rng.uniform()))
            vid = f"bus_r{r:02d}_{k // len(routes):03d}"
        else:
            mover = _Mover(rng, config.bbox, speed_range)
            vid = f"veh{k:04d}"
        movers.append((vid, config.vehicle_type, mover))
    for k in range(config.n_private):
        rng = np.random.default_rng(vehicle_seqs[config.n_vehicles + k])
        movers.append((f"car{k:05d}", config.private_type, _Mover(rng, config.bbox, speed_range)))

    snapshots = []
    for i in range(config.n_snapshots):
        if i:
            for _, _, m in movers:
                m.advance(config.step)
        states = tuple(
            VehicleState(vid, m.x, m.y, m.speed, classify(vtype), vtype)
            for vid, vtype, m in movers
        )
        snapshots.append(Snapshot(i * config.step, states))
    return Timeline.from_snapshots(snapshots, default_step=config.step)

