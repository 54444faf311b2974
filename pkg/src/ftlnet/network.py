"""Road networks, origin-destination paths and path coordinates.

A network is a directed graph whose arcs are roads and whose nodes are
junctions. Vehicles and densities live on *paths*: origin-to-destination
road sequences, each treated as one uninterrupted road with its own
arc-length coordinate.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass, field
from typing import Hashable, Iterable, Mapping, Sequence

RoadId = Hashable


class NetworkError(ValueError):
    """Raised for malformed networks, paths or turning coefficients."""


@dataclass(frozen=True)
class Junction:
    id: Hashable
    inc: frozenset
    out: frozenset


@dataclass(frozen=True)
class RoadNetwork:
    """Directed road graph.

    Args:
        roads: mapping road id -> length in meters.
        junctions: junction records; every road must leave exactly one
            junction and enter exactly one junction.
    """

    roads: Mapping[RoadId, float]
    junctions: tuple[Junction, ...]
    _head: dict = field(init=False, repr=False, compare=False)
    _tail: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "roads", dict(self.roads))
        head, tail = {}, {}
        seen_ids = set()
        for j in self.junctions:
            if j.id in seen_ids:
                raise NetworkError(f"duplicate junction id {j.id!r}")
            seen_ids.add(j.id)
            if j.inc & j.out:
                raise NetworkError(f"junction {j.id!r}: inc and out sets overlap")
            for r in j.inc | j.out:
                if r not in self.roads:
                    raise NetworkError(f"junction {j.id!r} references unknown road {r!r}")
            for r in j.out:
                if r in tail:
                    raise NetworkError(f"road {r!r} leaves more than one junction")
                tail[r] = j.id
            for r in j.inc:
                if r in head:
                    raise NetworkError(f"road {r!r} enters more than one junction")
                head[r] = j.id
        for r, length in self.roads.items():
            if not length > 0:
                raise NetworkError(f"road {r!r} has non-positive length {length}")
            if r not in tail:
                raise NetworkError(f"road {r!r} does not leave any junction")
            if r not in head:
                raise NetworkError(f"road {r!r} does not enter any junction")
        object.__setattr__(self, "_head", head)
        object.__setattr__(self, "_tail", tail)

    @classmethod
    def from_lists(cls, roads: Iterable[tuple[RoadId, float]],
                   junctions: Iterable[tuple[Hashable, Iterable[RoadId], Iterable[RoadId]]]):
        return cls(dict(roads),
                   tuple(Junction(jid, frozenset(inc), frozenset(out)) for jid, inc, out in junctions))

    @property
    def origins(self) -> list:
        return [j.id for j in self.junctions if not j.inc]

    @property
    def destinations(self) -> list:
        return [j.id for j in self.junctions if not j.out]

    def junction(self, jid) -> Junction:
        for j in self.junctions:
            if j.id == jid:
                return j
        raise KeyError(jid)

    def end_junction(self, road: RoadId) -> Junction:
        """Junction the road flows into."""
        return self.junction(self._head[road])

    def start_junction(self, road: RoadId) -> Junction:
        return self.junction(self._tail[road])

    def successors(self, road: RoadId) -> list:
        return sorted(self.end_junction(road).out)

    def length(self, road: RoadId) -> float:
        return self.roads[road]


@dataclass(frozen=True)
class Path:
    """An origin-destination road sequence with cumulative offsets."""

    id: int
    roads: tuple
    offsets: tuple[float, ...]
    lengths: tuple[float, ...]

    @property
    def total_length(self) -> float:
        return self.offsets[-1] + self.lengths[-1]

    def __contains__(self, road) -> bool:
        return road in self.roads

    def index(self, road) -> int:
        try:
            return self.roads.index(road)
        except ValueError:
            raise NetworkError(f"road {road!r} is not on path {self.id} {list(self.roads)}") from None


def make_path(net: RoadNetwork, pid: int, roads: Sequence[RoadId]) -> Path:
    roads = tuple(roads)
    for a, b in zip(roads, roads[1:]):
        if b not in net.end_junction(a).out:
            raise NetworkError(f"roads {a!r} and {b!r} are not connected")
    if len(set(roads)) != len(roads):
        raise NetworkError(f"road repeated in path {list(roads)}")
    lengths = tuple(float(net.length(r)) for r in roads)
    offsets, acc = [], 0.0
    for length in lengths:
        offsets.append(acc)
        acc += length
    return Path(pid, roads, tuple(offsets), lengths)


def enumerate_paths(net: RoadNetwork) -> list[Path]:
    """All simple directed paths from every origin to every destination.

    Paths are ordered lexicographically on their road sequence and numbered
    in that order. Cyclic networks are rejected since the path set would be
    infinite.
    """
    if not net.origins:
        raise NetworkError("network has no origin junction")
    if not net.destinations:
        raise NetworkError("network has no destination junction")
    _check_acyclic(net)

    found = []

    def walk(prefix):
        last = prefix[-1]
        nxt = net.successors(last)
        if not nxt:
            found.append(tuple(prefix))
            return
        for b in nxt:
            walk(prefix + [b])

    for jid in net.origins:
        for r in sorted(net.junction(jid).out):
            walk([r])
    found.sort()
    return [make_path(net, pid, roads) for pid, roads in enumerate(found)]


def _check_acyclic(net: RoadNetwork) -> None:
    # iterative three-colour DFS over roads
    state = {r: 0 for r in net.roads}
    for start in net.roads:
        if state[start]:
            continue
        stack = [(start, iter(net.successors(start)))]
        state[start] = 1
        while stack:
            road, it = stack[-1]
            for b in it:
                if state[b] == 1:
                    raise NetworkError(f"cycle detected through road {b!r}")
                if state[b] == 0:
                    state[b] = 1
                    stack.append((b, iter(net.successors(b))))
                    break
            else:
                state[road] = 2
                stack.pop()


def to_path_coordinate(path: Path, road: RoadId, local_pos: float) -> float:
    k = path.index(road)
    if not 0.0 <= local_pos <= path.lengths[k]:
        raise NetworkError(f"position {local_pos} outside road {road!r} of length {path.lengths[k]}")
    return path.offsets[k] + local_pos


def from_path_coordinate(path: Path, s: float) -> tuple[RoadId, float]:
    """Inverse of `to_path_coordinate`.

    A coordinate exactly on a road boundary belongs to the downstream road,
    except the path end, which stays on the last road.
    """
    if not 0.0 <= s <= path.total_length:
        raise NetworkError(f"path coordinate {s} outside [0, {path.total_length}]")
    k = bisect.bisect_right(path.offsets, s) - 1
    return path.roads[k], s - path.offsets[k]


def cells_per_road(net: RoadNetwork, dx: float) -> dict:
    return {r: _ncells(length, dx, r) for r, length in net.roads.items()}


def shared_cells(path_a: Path, path_b: Path, dx: float) -> list[tuple[int, int]]:
    """Index pairs of grid cells lying on roads common to both paths."""
    for path in (path_a, path_b):
        for length, road in zip(path.lengths, path.roads):
            _ncells(length, dx, road)
    pairs = []
    for ka, road in enumerate(path_a.roads):
        if road not in path_b.roads:
            continue
        kb = path_b.index(road)
        n = _ncells(path_a.lengths[ka], dx, road)
        start_a = round(path_a.offsets[ka] / dx)
        start_b = round(path_b.offsets[kb] / dx)
        pairs.extend((start_a + c, start_b + c) for c in range(n))
    return pairs


def _ncells(length: float, dx: float, road) -> int:
    n = round(length / dx)
    if n < 1 or abs(n * dx - length) > 1e-9 * max(length, 1.0):
        raise NetworkError(f"grid spacing {dx} does not divide length {length} of road {road!r}")
    return n


class TurningCoefficients:
    """Distribution coefficients P[a -> b] at junctions.

    Junctions with a single outgoing road need no entries; their coefficient
    is implicitly 1.
    """

    def __init__(self, coefficients: Mapping[tuple[RoadId, RoadId], float] | None = None):
        self.coefficients = dict(coefficients or {})

    def __repr__(self):
        return f"TurningCoefficients({self.coefficients!r})"

    def __eq__(self, other):
        return isinstance(other, TurningCoefficients) and self.coefficients == other.coefficients

    def validate(self, net: RoadNetwork, tol: float = 1e-12) -> None:
        for (a, b), p in self.coefficients.items():
            if a not in net.roads or b not in net.roads:
                raise NetworkError(f"turning coefficient {a!r}->{b!r} references unknown road")
            if b not in net.end_junction(a).out:
                raise NetworkError(f"turning coefficient {a!r}->{b!r}: roads do not meet at a junction")
            if not 0.0 <= p <= 1.0:
                raise NetworkError(f"turning coefficient {a!r}->{b!r} = {p} outside [0, 1]")
        for a in net.roads:
            outs = net.successors(a)
            if len(outs) < 2:
                continue
            total = sum(self.coefficients.get((a, b), 0.0) for b in outs)
            if abs(total - 1.0) > tol:
                raise NetworkError(f"turning coefficients out of road {a!r} sum to {total}, not 1")

    def probability(self, net: RoadNetwork, a: RoadId, b: RoadId) -> float:
        outs = net.successors(a)
        if b not in outs:
            return 0.0
        if len(outs) == 1:
            return self.coefficients.get((a, b), 1.0)
        return self.coefficients.get((a, b), 0.0)

    @property
    def is_stochastic(self) -> bool:
        return any(0.0 < p < 1.0 for p in self.coefficients.values())


def path_split_weights(net: RoadNetwork, paths: Sequence[Path], turning: TurningCoefficients,
                       road: RoadId) -> dict[int, float]:
    """Share of the traffic on `road` committed to each path through it.

    The share is the product of turning coefficients at the junctions ahead
    of the road along the path. Traffic on a road reachable through several
    distinct upstream road sequences cannot be attributed to a population
    from turning data alone, so such roads raise.
    """
    through = [p for p in paths if road in p]
    prefixes = {p.roads[:p.index(road)] for p in through}
    if len(prefixes) > 1:
        raise NetworkError(
            f"road {road!r} is reached by {len(prefixes)} distinct upstream routes; "
            "initial traffic on it cannot be split into path populations")
    weights = {}
    for p in through:
        k = p.index(road)
        w = 1.0
        for a, b in zip(p.roads[k:], p.roads[k + 1:]):
            w *= turning.probability(net, a, b)
        weights[p.id] = w
    total = sum(weights.values())
    if abs(total - 1.0) > 1e-12:
        raise NetworkError(f"path weights on road {road!r} sum to {total}, not 1")
    return weights
