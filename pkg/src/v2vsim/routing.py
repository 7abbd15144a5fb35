"""Source-to-sink routing over one snapshot's spanning forest.

Delivery is instantaneous inside a connected component; there is no
carry-forward between snapshots. On a forest the route, when it exists, is
the unique tree path.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from enum import Enum

from .errors import UnknownVehicleError
from .topology import SpanningForest


class RouteStatus(str, Enum):
    DELIVERED = "delivered"
    UNREACHABLE = "unreachable"


@dataclass(frozen=True)
class RouteResult:
    status: RouteStatus
    path: tuple[str, ...] = field(default=())
    path_length: float = 0.0

    @property
    def hops(self) -> int:
        return max(len(self.path) - 1, 0)

    @property
    def delivered(self) -> bool:
        return self.status is RouteStatus.DELIVERED

    def as_dict(self) -> dict:
        return {
            "status": self.status.value,
            "path": list(self.path),
            "hops": self.hops,
            "path_length_m": self.path_length,
        }


def route(forest: SpanningForest, src: str, dst: str) -> RouteResult:
    adj = forest.adjacency()
    for vid in (src, dst):
        if vid not in adj:
            raise UnknownVehicleError(f"vehicle {vid!r} is not in this snapshot")
    if src == dst:
        return RouteResult(RouteStatus.DELIVERED, (src,), 0.0)

    prev: dict[str, tuple[str, float] | None] = {src: None}
    queue = deque([src])
    while queue:
        node = queue.popleft()
        if node == dst:
            break
        for nbr, length in adj[node]:
            if nbr not in prev:
                prev[nbr] = (node, length)
                queue.append(nbr)
    if dst not in prev:
        return RouteResult(RouteStatus.UNREACHABLE)

    path, lengths = [dst], []
    node = dst
    while prev[node] is not None:
        node, length = prev[node]
        path.append(node)
        lengths.append(length)
    path.reverse()
    return RouteResult(RouteStatus.DELIVERED, tuple(path), math.fsum(lengths))


def reachability_ratio(forest: SpanningForest) -> float:
    """Share of ordered vehicle pairs that can reach each other; 1.0 below two vehicles."""
    n = len(forest.vertices)
    if n < 2:
        return 1.0
    reachable = sum(len(c) * (len(c) - 1) for c in forest.components)
    return reachable / (n * (n - 1))
