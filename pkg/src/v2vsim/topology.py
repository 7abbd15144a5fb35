"""Per-snapshot V2V link structure.

Candidate links are all vehicle pairs within the hard radio range. Links up
to the proximity threshold are *short*; the rest are *long* and only used when
nothing shorter can join the same two groups. The chosen structure is a
degree-capped spanning forest built greedily in ascending link length.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

from .config import get_float, get_int
from .errors import ConfigError
from .trace import Snapshot, Timeline


class LinkKind(str, Enum):
    SHORT = "short"
    LONG = "long"


@dataclass(frozen=True)
class TopologyConfig:
    r_p: float = 300.0
    r_max: float = 1000.0
    degree_cap: int = 4

    def __post_init__(self):
        if not 0 < self.r_p <= self.r_max:
            raise ConfigError(f"need 0 < r_p <= r_max, got r_p={self.r_p}, r_max={self.r_max}")
        if int(self.degree_cap) != self.degree_cap or self.degree_cap < 1:
            raise ConfigError(f"degree_cap must be a positive integer, got {self.degree_cap}")

    @classmethod
    def from_mapping(cls, values: dict) -> TopologyConfig:
        return cls(
            r_p=get_float(values, "r_p_m", cls.r_p),
            r_max=get_float(values, "r_max_m", cls.r_max),
            degree_cap=get_int(values, "degree_cap", cls.degree_cap),
        )


@dataclass(frozen=True, eq=False)
class DistanceMatrix:
    ids: tuple[str, ...]
    d: np.ndarray

    def __len__(self):
        return len(self.ids)

    def between(self, u: str, v: str) -> float:
        index = {vid: i for i, vid in enumerate(self.ids)}
        return float(self.d[index[u], index[v]])


@dataclass(frozen=True, order=True, slots=True)
class CandidateEdge:
    # field order gives the (length, u, v) tie-break as the natural sort order
    length: float
    u: str
    v: str
    kind: LinkKind

    @classmethod
    def make(cls, a: str, b: str, length: float, r_p: float) -> CandidateEdge:
        u, v = (a, b) if a < b else (b, a)
        return cls(float(length), u, v, LinkKind.SHORT if length <= r_p else LinkKind.LONG)

    @property
    def key(self) -> tuple[str, str]:
        return (self.u, self.v)

    def as_dict(self) -> dict:
        return {"u": self.u, "v": self.v, "length_m": self.length, "kind": self.kind.value}


def distance_matrix(snapshot: Snapshot) -> DistanceMatrix:
    states = sorted(snapshot.states, key=lambda s: s.vehicle_id)
    ids = tuple(s.vehicle_id for s in states)
    if not states:
        return DistanceMatrix(ids, np.zeros((0, 0)))
    xy = np.array([(s.pos_x, s.pos_y) for s in states], dtype=float)
    diff = xy[:, None, :] - xy[None, :, :]
    d = np.hypot(diff[..., 0], diff[..., 1])
    return DistanceMatrix(ids, d)


def candidate_links(m: DistanceMatrix, cfg: TopologyConfig) -> list[CandidateEdge]:
    """All distinct-vehicle pairs with length <= r_max, sorted by (length, u, v).

    Distinct vehicles at the same position get a zero-length short link.
    """
    n = len(m.ids)
    if n < 2:
        return []
    iu, ju = np.triu_indices(n, k=1)
    lengths = m.d[iu, ju]
    keep = lengths <= cfg.r_max
    ids = m.ids
    # ids are sorted, so ids[i] < ids[j] for i < j
    edges = [
        CandidateEdge(length, ids[i], ids[j], LinkKind.SHORT if length <= cfg.r_p else LinkKind.LONG)
        for i, j, length in zip(iu[keep].tolist(), ju[keep].tolist(), lengths[keep].tolist())
    ]
    edges.sort()
    return edges


class UnionFind:
    def __init__(self, items=()):
        self.parent = {k: k for k in items}
        self.size = {k: 1 for k in self.parent}

    def add(self, k):
        if k not in self.parent:
            self.parent[k] = k
            self.size[k] = 1

    def find(self, k):
        parent = self.parent
        root = k
        while parent[root] != root:
            root = parent[root]
        while parent[k] != root:
            parent[k], k = root, parent[k]
        return root

    def union(self, a, b) -> bool:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        if self.size[ra] < self.size[rb]:
            ra, rb = rb, ra
        self.parent[rb] = ra
        self.size[ra] += self.size[rb]
        return True

    def groups(self) -> list[tuple]:
        out: dict = {}
        for k in self.parent:
            out.setdefault(self.find(k), []).append(k)
        return [tuple(sorted(g)) for g in out.values()]


@dataclass(frozen=True)
class SpanningForest:
    """Chosen links plus the vehicle partition they induce.

    ``edges`` are in selection order, which is ascending (length, u, v).
    ``components`` are sorted tuples of ids, ordered by their smallest id.
    """

    vertices: tuple[str, ...]
    edges: tuple[CandidateEdge, ...]
    components: tuple[tuple[str, ...], ...]

    def degree(self) -> dict[str, int]:
        deg = {v: 0 for v in self.vertices}
        for e in self.edges:
            deg[e.u] += 1
            deg[e.v] += 1
        return deg

    def adjacency(self) -> dict[str, list[tuple[str, float]]]:
        adj: dict[str, list[tuple[str, float]]] = {v: [] for v in self.vertices}
        for e in self.edges:
            adj[e.u].append((e.v, e.length))
            adj[e.v].append((e.u, e.length))
        for nbrs in adj.values():
            nbrs.sort()
        return adj

    def component_of(self) -> dict[str, int]:
        return {v: i for i, comp in enumerate(self.components) for v in comp}

    @property
    def total_length(self) -> float:
        return math.fsum(e.length for e in self.edges)

    @property
    def long_links(self) -> int:
        return sum(1 for e in self.edges if e.kind is LinkKind.LONG)

    def as_dict(self, time: float | None = None) -> dict:
        out = {} if time is None else {"time": time}
        out["edges"] = [e.as_dict() for e in self.edges]
        out["components"] = [list(c) for c in self.components]
        return out

    @classmethod
    def from_dict(cls, obj: dict) -> SpanningForest:
        edges = tuple(
            CandidateEdge(float(e["length_m"]), e["u"], e["v"], LinkKind(e["kind"]))
            for e in obj["edges"]
        )
        components = tuple(tuple(c) for c in obj["components"])
        vertices = tuple(sorted(v for c in components for v in c))
        return cls(vertices, edges, components)


def _sorted_components(groups: Iterable[tuple]) -> tuple[tuple[str, ...], ...]:
    return tuple(sorted(groups, key=lambda g: g[0]))


def spanning_forest(edges: Iterable[CandidateEdge], vertices: Sequence[str],
                    cfg: TopologyConfig) -> SpanningForest:
    """Greedy degree-capped spanning forest (Kruskal order, union-find cycle test).

    An edge is rejected if it closes a cycle or if either endpoint already has
    ``cfg.degree_cap`` links. The result is maximal: every rejected edge still
    fails one of those tests at the end, since components only merge and
    degrees only grow.
    """
    vertices = tuple(sorted(set(vertices)))
    uf = UnionFind(vertices)
    degree = dict.fromkeys(vertices, 0)
    cap = cfg.degree_cap
    chosen = []
    target = len(vertices) - 1
    for e in sorted(edges):
        if degree[e.u] >= cap or degree[e.v] >= cap:
            continue
        if not uf.union(e.u, e.v):
            continue
        degree[e.u] += 1
        degree[e.v] += 1
        chosen.append(e)
        if len(chosen) == target:
            break
    return SpanningForest(vertices, tuple(chosen), _sorted_components(uf.groups()))


def snapshot_forest(snapshot: Snapshot, cfg: TopologyConfig) -> SpanningForest:
    m = distance_matrix(snapshot)
    return spanning_forest(candidate_links(m, cfg), m.ids, cfg)


def evolve(timeline: Timeline, cfg: TopologyConfig) -> list[tuple[float, SpanningForest]]:
    """One independently built forest per snapshot, in time order."""
    return [(snap.time, snapshot_forest(snap, cfg)) for snap in timeline.snapshots]


def candidate_components(edges: Iterable[CandidateEdge], vertices: Sequence[str]):
    """Connected components of the full candidate graph."""
    uf = UnionFind(vertices)
    for e in edges:
        uf.union(e.u, e.v)
    return _sorted_components(uf.groups())


def write_forests_jsonl(forests: Iterable[tuple[float, SpanningForest]], sink) -> None:
    for time, forest in forests:
        sink.write(json.dumps(forest.as_dict(time), separators=(",", ":")))
        sink.write("\n")


def read_forests_jsonl(stream) -> list[tuple[float, SpanningForest]]:
    out = []
    for line in stream:
        line = line.strip()
        if line:
            obj = json.loads(line)
            out.append((float(obj["time"]), SpanningForest.from_dict(obj)))
    return out
