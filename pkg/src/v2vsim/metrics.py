"""Per-snapshot topology metrics and file exports (CSV, GeoJSON)."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .dynamics import FuelResult
from .errors import ConsistencyError
from .routing import reachability_ratio
from .topology import SpanningForest, TopologyConfig
from .trace import Snapshot


@dataclass(frozen=True)
class SnapshotMetrics:
    time: float
    vehicles: int
    edges: int
    components: int
    long_links: int
    reachability: float
    total_length: float
    histogram: tuple[int, ...]


@dataclass(frozen=True)
class TopologyMetrics:
    rows: tuple[SnapshotMetrics, ...]
    bin_edges: tuple[float, ...]
    aggregates: dict | None = field(default=None, compare=False)

    def series(self, name: str) -> list:
        return [getattr(r, name) for r in self.rows]


_AGGREGATED = ("vehicles", "edges", "components", "long_links", "reachability", "total_length")


def snapshot_metrics(time: float, forest: SpanningForest, bin_edges) -> SnapshotMetrics:
    lengths = [e.length for e in forest.edges]
    hist, _ = np.histogram(lengths, bins=bin_edges)
    return SnapshotMetrics(
        time=float(time),
        vehicles=len(forest.vertices),
        edges=len(forest.edges),
        components=len(forest.components),
        long_links=forest.long_links,
        reachability=reachability_ratio(forest),
        total_length=forest.total_length,
        histogram=tuple(int(h) for h in hist),
    )


def summarize(forests: Iterable[tuple[float, SpanningForest]], cfg: TopologyConfig,
              bins: int = 10) -> TopologyMetrics:
    """Fold a forest sequence into per-snapshot rows plus run-wide means and maxima.

    Link lengths are histogrammed over ``[0, r_max]`` in ``bins`` equal bins.
    """
    bin_edges = np.linspace(0.0, cfg.r_max, bins + 1)
    rows = tuple(snapshot_metrics(t, f, bin_edges) for t, f in forests)
    aggregates = None
    if rows:
        aggregates = {"snapshots": len(rows)}
        for name in _AGGREGATED:
            values = np.array([getattr(r, name) for r in rows], dtype=float)
            aggregates[f"mean_{name}"] = float(values.mean())
            aggregates[f"max_{name}"] = float(values.max())
        aggregates["min_reachability"] = float(min(r.reachability for r in rows))
    return TopologyMetrics(rows, tuple(bin_edges.tolist()), aggregates)


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def metrics_header(metrics: TopologyMetrics) -> list[str]:
    n_bins = len(metrics.bin_edges) - 1
    return ["time", "vehicles", "edges", "components", "long_links", "reachability",
            "total_length_m", *(f"hist_{i}" for i in range(n_bins))]


FUEL_HEADER = ["time", "speed", "accel", "F_t", "F_hydr", "F_a", "F_r", "F_g",
               "T_ice", "omega_ice", "rate_g_s", "clamped"]


def export_csv(data: TopologyMetrics | FuelResult, sink) -> None:
    """Header plus one row per snapshot (metrics) or per sample (fuel trace)."""
    writer = csv.writer(sink, lineterminator="\n")
    if isinstance(data, TopologyMetrics):
        writer.writerow(metrics_header(data))
        for r in data.rows:
            writer.writerow([_fmt(r.time), r.vehicles, r.edges, r.components, r.long_links,
                             _fmt(r.reachability), _fmt(r.total_length), *r.histogram])
    elif isinstance(data, FuelResult):
        f = data.forces
        writer.writerow(FUEL_HEADER)
        columns = (f.time, f.speed, f.accel, f.F_t, f.F_hydr, f.F_a, f.F_r, f.F_g,
                   data.torque, data.omega, data.rate)
        for k in range(len(f)):
            writer.writerow([_fmt(col[k]) for col in columns] + [_fmt(bool(data.clamped[k]))])
    else:
        raise TypeError(f"cannot export {type(data).__name__} as CSV")


def read_metrics_csv(stream) -> list[dict]:
    out = []
    for row in csv.DictReader(stream):
        out.append({k: (float(v) if k in ("time", "reachability", "total_length_m") else int(v))
                    for k, v in row.items()})
    return out


def read_fuel_csv(stream) -> dict[str, np.ndarray]:
    rows = list(csv.DictReader(stream))
    return {name: np.array([float(r[name]) for r in rows]) for name in FUEL_HEADER}


def geojson_features(snapshot: Snapshot, forest: SpanningForest) -> list[dict]:
    states = snapshot.by_id()
    missing = [v for v in forest.vertices if v not in states]
    if missing:
        raise ConsistencyError(
            f"forest vertices not in snapshot at time {snapshot.time}: {', '.join(missing[:5])}")
    features = [
        {
            "type": "Feature",
            "geometry": {"type": "Point", "coordinates": [s.pos_x, s.pos_y]},
            "properties": {"id": s.vehicle_id, "class": s.vehicle_class.value, "speed": s.speed},
        }
        for s in snapshot.states
    ]
    for e in forest.edges:
        a, b = states[e.u], states[e.v]
        features.append({
            "type": "Feature",
            "geometry": {"type": "LineString",
                         "coordinates": [[a.pos_x, a.pos_y], [b.pos_x, b.pos_y]]},
            "properties": {"u": e.u, "v": e.v, "length_m": e.length, "kind": e.kind.value},
        })
    return features


def export_geojson(snapshot: Snapshot, forest: SpanningForest, sink,
                   crs_note: str | None = None) -> None:
    """Write one snapshot as a GeoJSON FeatureCollection.

    Coordinates are the trace's planar metres, copied verbatim. ``crs_note``
    names the source projection when known; it is a foreign member, since
    planar metres are not WGS84.
    """
    doc = {"type": "FeatureCollection", "time": snapshot.time}
    if crs_note:
        doc["crs_note"] = crs_note
    doc["features"] = geojson_features(snapshot, forest)
    json.dump(doc, sink, indent=1)
    sink.write("\n")
