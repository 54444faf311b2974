"""Follow-the-leader dynamics on a road network.

Every vehicle owns a complete origin-destination path chosen at seeding
time and is tracked by its arc-length coordinate ``s`` along that path. The
vehicle in front is the nearest vehicle, of any population, located ahead on
the remaining roads of the path; the gap to it is a plain difference of path
coordinates, which automatically sums the rest of the current road, any empty
roads in between, and the leader's progress on its own road.

Overlap near junctions is tolerated: a vehicle whose gap drops to the vehicle
length or below simply stops.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping, NamedTuple, Sequence

import numpy as np

from .density import PiecewiseConstant, discretize, vehicle_count
from .network import NetworkError, Path, RoadNetwork, TurningCoefficients

log = logging.getLogger(__name__)


def velocity_w(gap, ell: float, v_max: float = 1.0):
    """Greenshields car-following speed ``v_max * (1 - ell / gap)``."""
    gap = np.asarray(gap, dtype=float)
    if np.any(gap <= 0):
        raise ValueError("gap must be positive")
    out = v_max * (1.0 - ell / gap)
    return float(out) if out.ndim == 0 else out


def velocity_w_star(gap, ell: float, v_max: float = 1.0):
    """Speed extended to overlapping vehicles: zero whenever ``gap <= ell``."""
    gap = np.asarray(gap, dtype=float)
    if np.any(gap < 0):
        raise ValueError(f"negative gap {gap.min()}: vehicle state is corrupted")
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(gap <= ell, 0.0, v_max * (1.0 - ell / np.where(gap > 0, gap, 1.0)))
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class MicroParams:
    """Microscopic run parameters.

    ``ell`` is the vehicle length; the vehicle count follows from the initial
    mass at seeding time and the total length is ``n * ell``.
    """

    ell: float
    dt: float
    v_max: float = 1.0
    seed: int = 0
    adaptive: bool = False
    strict_mass: bool = False

    def __post_init__(self):
        if not self.ell > 0:
            raise ValueError("ell must be positive")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.v_max > 0:
            raise ValueError("v_max must be positive")


@dataclass(frozen=True)
class Vehicle:
    label: int
    path_id: int
    s: float
    active: bool


class Topology:
    """Integer lookup tables for a network and its path set."""

    def __init__(self, net: RoadNetwork, paths: Sequence[Path]):
        self.net = net
        self.paths = tuple(paths)
        self.road_ids = sorted(net.roads)
        self.road_index = {r: i for i, r in enumerate(self.road_ids)}
        self.road_length = np.array([float(net.roads[r]) for r in self.road_ids])
        width = max(len(p.roads) for p in self.paths)
        self.path_len = np.array([len(p.roads) for p in self.paths])
        self.roads = np.full((len(self.paths), width), -1, dtype=np.int64)
        self.offsets = np.full((len(self.paths), width), np.inf)
        for p in self.paths:
            self.roads[p.id, :len(p.roads)] = [self.road_index[r] for r in p.roads]
            self.offsets[p.id, :len(p.roads)] = p.offsets
        self.total = np.array([p.total_length for p in self.paths])
        self.by_roads = {p.roads: p.id for p in self.paths}
        # start of the following road; +inf past the last road of a path
        self.next_offset = np.full((len(self.paths), width), np.inf)
        self.next_offset[:, :-1] = self.offsets[:, 1:]

    def locate(self, path_id, s):
        """Road-index, position-in-path and road-local position for path coordinates.

        A coordinate on a road boundary belongs to the downstream road; the
        path end stays on the last road.
        """
        k = np.sum(self.offsets[path_id] <= s[:, None], axis=1) - 1
        k = np.minimum(k, self.path_len[path_id] - 1)
        g = self.roads[path_id, k]
        return g, k, s - self.offsets[path_id, k]

    def advance(self, path_id, k, s):
        """Update path-road indices ``k`` after coordinates moved forward to ``s``."""
        k = k.copy()
        while True:
            crossed = s >= self.next_offset[path_id, k]
            if not np.any(crossed):
                return k
            k[crossed] += 1


@dataclass(frozen=True)
class MicroState:
    """Whole vehicle population; vehicle index equals its label."""

    params: MicroParams
    topo: Topology
    path_id: np.ndarray
    s: np.ndarray
    active: np.ndarray
    t: float = 0.0
    steps: int = 0
    entries: np.ndarray = field(default=None)
    seeding_adjustment: Mapping = field(default_factory=dict)
    k: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.entries is None:
            object.__setattr__(self, "entries", np.zeros(len(self.topo.road_ids), dtype=np.int64))
        if self.k is None:
            s = np.minimum(self.s, self.topo.total[self.path_id])
            object.__setattr__(self, "k", self.topo.locate(self.path_id, s)[1])

    @property
    def n(self) -> int:
        return len(self.s)

    @property
    def total_length(self) -> float:
        return self.n * self.params.ell

    @property
    def n_active(self) -> int:
        return int(np.count_nonzero(self.active))

    @property
    def n_arrived(self) -> int:
        return self.n - self.n_active

    def vehicle(self, i: int) -> Vehicle:
        return Vehicle(i, int(self.path_id[i]), float(self.s[i]), bool(self.active[i]))

    def vehicles(self) -> list[Vehicle]:
        return [self.vehicle(i) for i in range(self.n)]

    def road_positions(self):
        """(vehicle indices, road ids, road-local positions) of active vehicles."""
        idx = np.flatnonzero(self.active)
        g, y = self.road_local(idx)
        roads = [self.topo.road_ids[j] for j in g]
        return idx, roads, y

    def road_local(self, idx):
        """Road indices and road-local positions of the vehicles ``idx``."""
        pid, k = self.path_id[idx], self.k[idx]
        return self.topo.roads[pid, k], self.s[idx] - self.topo.offsets[pid, k]

    def entered(self, road) -> int:
        """Vehicles that crossed a junction onto ``road`` since seeding."""
        return int(self.entries[self.topo.road_index[road]])


class FollowStructure(NamedTuple):
    """Per-vehicle view of the state at one instant (arrays indexed by label).

    ``next`` is -1 for leaders and inactive vehicles; ``gap`` is NaN there.
    """

    next: np.ndarray
    gap: np.ndarray
    road: np.ndarray
    local: np.ndarray


def follow_structure(state: MicroState) -> FollowStructure:
    topo = state.topo
    n = state.n
    nxt = np.full(n, -1, dtype=np.int64)
    gap = np.full(n, np.nan)
    road = np.full(n, -1, dtype=np.int64)
    local = np.full(n, np.nan)
    idx = np.flatnonzero(state.active)
    if len(idx) == 0:
        return FollowStructure(nxt, gap, road, local)
    g, y = state.road_local(idx)
    road[idx], local[idx] = g, y

    # same-position ties: the larger label is in front
    order = np.lexsort((y, g))  # stable, and idx is increasing
    og, oy, oi = g[order], y[order], idx[order]
    same = og[1:] == og[:-1]
    nxt[oi[:-1][same]] = oi[1:][same]
    gap[oi[:-1][same]] = oy[1:][same] - oy[:-1][same]

    # the front vehicle of each road looks ahead along its own path
    starts = np.flatnonzero(np.concatenate([[True], ~same]))
    ends = np.concatenate([starts[1:] - 1, [len(order) - 1]])
    rear_vehicle = np.full(len(topo.road_ids), -1, dtype=np.int64)
    rear_pos = np.zeros(len(topo.road_ids))
    rear_vehicle[og[starts]] = oi[starts]
    rear_pos[og[starts]] = oy[starts]
    kk = state.k
    for e in ends:
        f = oi[e]
        p = state.path_id[f]
        acc = topo.road_length[og[e]] - oy[e]
        for r in topo.roads[p, kk[f] + 1:topo.path_len[p]]:
            if rear_vehicle[r] >= 0:
                nxt[f] = rear_vehicle[r]
                gap[f] = acc + rear_pos[r]
                break
            acc += topo.road_length[r]
    return FollowStructure(nxt, gap, road, local)


def find_next(state: MicroState, i: int, structure: FollowStructure | None = None):
    """Label of the vehicle in front of ``i``, or None for a leader."""
    if not state.active[i]:
        raise ValueError(f"vehicle {i} is not active")
    structure = structure or follow_structure(state)
    j = int(structure.next[i])
    return None if j < 0 else j


def gap(state: MicroState, i: int, structure: FollowStructure | None = None) -> float:
    """Distance along ``i``'s path to the vehicle in front."""
    structure = structure or follow_structure(state)
    if find_next(state, i, structure) is None:
        raise ValueError(f"vehicle {i} is a leader and has no gap")
    return float(structure.gap[i])


def cfl_timestep(state: MicroState, structure: FollowStructure | None = None) -> float:
    """Largest step keeping every follower behind the vehicle in front.

    Followers at or below one vehicle length stand still and impose nothing.
    """
    structure = structure or follow_structure(state)
    d = structure.gap[structure.next >= 0]
    d = d[d > state.params.ell]
    if len(d) == 0:
        return math.inf
    return float(np.min(d * d / (d - state.params.ell))) / state.params.v_max


def velocities(state: MicroState, structure: FollowStructure) -> np.ndarray:
    p = state.params
    v = np.zeros(state.n)
    follower = structure.next >= 0
    leader = state.active & ~follower
    v[leader] = p.v_max
    v[follower] = velocity_w_star(structure.gap[follower], p.ell, p.v_max)
    return v


def step(state: MicroState, dt: float | None = None,
         structure: FollowStructure | None = None) -> MicroState:
    """One explicit Euler step with all gaps frozen at the start of the step.

    Vehicles reaching the end of their path leave the network.
    """
    dt = state.params.dt if dt is None else dt
    structure = structure or follow_structure(state)
    topo = state.topo
    v = velocities(state, structure)
    s = state.s + dt * v
    active = state.active.copy()
    idx = np.flatnonzero(active)
    pid = state.path_id[idx]
    arrived = s[idx] >= topo.total[pid]
    active[idx[arrived]] = False

    # junction crossings, counted per entered road
    entries = state.entries.copy()
    k_old = state.k[idx]
    k_new = topo.advance(pid, k_old, s[idx])
    k_new = np.minimum(k_new, topo.path_len[pid] - 1)
    moved = k_new > k_old
    if np.any(moved):
        for d in range(1, int(np.max(k_new - k_old)) + 1):
            m = moved & (k_new - k_old >= d)
            np.add.at(entries, topo.roads[pid[m], k_old[m] + d], 1)
    k = state.k.copy()
    k[idx] = k_new
    return replace(state, s=s, active=active, t=state.t + dt, steps=state.steps + 1,
                   entries=entries, k=k)


Observer = Callable[[MicroState, FollowStructure], None]


def simulate(state: MicroState, final_time: float, observers: Sequence[Observer] = (),
             snapshot_times: Sequence[float] = (), on_snapshot=None) -> MicroState:
    """Advance to ``final_time``.

    Observers see every state (with its follow structure) from the initial one
    to the final one. With ``params.adaptive`` the step is 0.9 of the current
    CFL bound, capped by ``params.dt``; the last step is shortened to land on
    ``final_time``.
    """
    p = state.params
    snaps = sorted(t for t in snapshot_times if 0 <= t <= final_time)
    structure = follow_structure(state)
    bound = cfl_timestep(state, structure)
    if not p.adaptive and p.dt >= bound:
        log.warning("dt=%g is not below the initial CFL bound %g; vehicles may collide",
                    p.dt, bound)
    t0 = state.t
    while True:
        for obs in observers:
            obs(state, structure)
        while snaps and snaps[0] <= state.t + 1e-9 * p.dt:
            if on_snapshot is not None:
                on_snapshot(snaps[0], state)
            snaps.pop(0)
        remaining = final_time - state.t
        if remaining <= 1e-9 * p.dt:
            break
        if p.adaptive:
            h = min(p.dt, 0.9 * cfl_timestep(state, structure), remaining)
        else:
            h = min(p.dt, remaining)
        state = step(state, h, structure)
        if not p.adaptive and remaining > p.dt:
            # avoid drift from repeated float addition
            state = replace(state, t=t0 + state.steps * p.dt)
        structure = follow_structure(state)
    return state


def seed_vehicles(net: RoadNetwork, paths: Sequence[Path],
                  initial_density: Mapping[object, PiecewiseConstant],
                  turning: TurningCoefficients, params: MicroParams) -> MicroState:
    """Place vehicles road by road and give each a complete path.

    Positions come from `discretize` applied to each road's density (in
    road-local coordinates). Each vehicle's remaining route is drawn by
    chaining turning coefficients junction by junction with a generator seeded
    from ``params.seed``. Roads are processed in sorted order and labels grow
    from rear to front on every road.
    """
    turning.validate(net)
    topo = Topology(net, paths)
    rng = np.random.default_rng(params.seed)
    all_pid, all_s, adjust = [], [], {}
    for road in topo.road_ids:
        dens = initial_density.get(road)
        if dens is None or dens.mass == 0:
            continue
        length = net.roads[road]
        if dens.edges[0] < 0 or dens.edges[-1] > length + 1e-9 * length:
            raise NetworkError(f"initial density on road {road!r} extends outside [0, {length}]")
        count = vehicle_count(dens.mass, params.ell, strict=params.strict_mass, where=road)
        if count == 0:
            adjust[road] = -dens.mass
            continue
        adjust[road] = count * params.ell - dens.mass
        y = discretize(dens, params.ell, count)
        pid = _sample_paths(net, topo, road, count, turning, rng)
        offs = topo.offsets[pid, [topo.paths[q].index(road) for q in pid]]
        all_pid.append(pid)
        all_s.append(offs + y)
    for road, a in adjust.items():
        if a != 0:
            log.info("road %r: seeded mass adjusted by %+.6g to a multiple of ell", road, a)
    if all_pid:
        pid = np.concatenate(all_pid).astype(np.int64)
        s = np.concatenate(all_s)
    else:
        pid, s = np.empty(0, dtype=np.int64), np.empty(0)
    return MicroState(params, topo, pid, s, np.ones(len(s), dtype=bool),
                      seeding_adjustment=adjust)


def _sample_paths(net, topo, road, count, turning, rng) -> np.ndarray:
    through = [p for p in topo.paths if road in p]
    prefixes = {p.roads[:p.index(road)] for p in through}
    if len(prefixes) != 1:
        raise NetworkError(
            f"road {road!r} is reached by {len(prefixes)} distinct upstream routes; "
            "vehicles seeded on it cannot be assigned a population")
    prefix = prefixes.pop()
    out = np.empty(count, dtype=np.int64)
    pending = [((road,), np.arange(count))]
    while pending:
        chain, idx = pending.pop(0)
        outs = net.successors(chain[-1])
        if not outs:
            out[idx] = topo.by_roads[prefix + chain]
            continue
        if len(outs) == 1:
            pending.append((chain + (outs[0],), idx))
            continue
        prob = np.array([turning.probability(net, chain[-1], b) for b in outs])
        pick = np.searchsorted(np.cumsum(prob), rng.random(len(idx)), side="right")
        pick = np.minimum(pick, len(outs) - 1)
        for c, b in enumerate(outs):
            sel = idx[pick == c]
            if len(sel):
                pending.append((chain + (b,), sel))
    return out


class OverlapMonitor:
    """Observer tracking vehicles closer than one vehicle length to the one in front.

    Overlap is expected only in the last ``ell`` of a road entering a
    junction or the first ``dt * v_max`` of a road leaving one, and at most
    as many vehicles per junction as the junction has incoming roads. Anything
    else is recorded in ``violations``.
    """

    def __init__(self, net: RoadNetwork):
        self.net = net
        self.max_count = 0
        self.max_per_junction: dict = {}
        self.violations: list = []
        self.checked = 0

    def __call__(self, state: MicroState, structure: FollowStructure) -> None:
        p = state.params
        self.checked += 1
        ov = np.flatnonzero((structure.next >= 0) & (structure.gap < p.ell))
        self.max_count = max(self.max_count, len(ov))
        if len(ov) == 0:
            return
        per_junction: dict = {}
        for i in ov:
            road = state.topo.road_ids[structure.road[i]]
            y = structure.local[i]
            length = self.net.roads[road]
            end, start = self.net.end_junction(road), self.net.start_junction(road)
            if end.out and y > length - p.ell:
                j = end
            elif start.inc and y < p.dt * p.v_max:
                j = start
            else:
                self.violations.append((state.t, int(i), road, float(y), "outside junction zone"))
                continue
            per_junction[j.id] = per_junction.get(j.id, 0) + 1
        for jid, count in per_junction.items():
            self.max_per_junction[jid] = max(self.max_per_junction.get(jid, 0), count)
            if count > len(self.net.junction(jid).inc):
                self.violations.append((state.t, -1, jid, float(count), "too many overlapping"))
