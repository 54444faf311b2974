"""Multi-path LWR model solved with a Godunov-based finite volume scheme.

One partial density per path (population). Each population is advected with
the velocity of the *total* density at the same physical cell, so paths
sharing a road interact there and junctions need no separate solver.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np

from .network import (NetworkError, Path, RoadNetwork, TurningCoefficients, cells_per_road,
                      path_split_weights)


@dataclass(frozen=True)
class FundamentalDiagram:
    """Greenshields diagram ``f(rho) = v_max * rho * (1 - rho)``."""

    v_max: float = 1.0

    @property
    def sigma(self) -> float:
        """Critical density, the argmax of f."""
        return 0.5

    def v(self, rho):
        return self.v_max * (1.0 - np.asarray(rho, dtype=float))

    def v_star(self, rho):
        rho = np.asarray(rho, dtype=float)
        return np.where(rho >= 1.0, 0.0, self.v(np.minimum(rho, 1.0)))

    def f(self, rho):
        rho = np.asarray(rho, dtype=float)
        return rho * self.v(rho)

    @property
    def capacity(self) -> float:
        return float(self.f(self.sigma))

    @property
    def max_wave_speed(self) -> float:
        return self.v_max


def godunov_flux(rho_minus, rho_plus, fd: FundamentalDiagram = FundamentalDiagram()):
    """Godunov interface flux for a concave diagram; works elementwise on arrays."""
    a = np.asarray(rho_minus, dtype=float)
    b = np.asarray(rho_plus, dtype=float)
    if np.any((a < 0) | (a > 1)) or np.any((b < 0) | (b > 1)):
        raise ValueError("densities must lie in [0, 1]")
    out = _godunov(a, b, fd)
    return float(out) if out.ndim == 0 else out


def _godunov(a, b, fd):
    # min(demand(a), supply(b)) is the same four-branch flux for concave f
    sig = fd.sigma
    demand = np.where(a < sig, fd.f(a), fd.capacity)
    supply = np.where(b > sig, fd.f(b), fd.capacity)
    return np.minimum(demand, supply)


class CFLError(ValueError):
    pass


class MacroGrid:
    """Cell layout shared by all populations.

    Path cells are stored back to back in one flat array; ``phys`` maps each
    path cell to the physical road cell it lies on, so the total density is a
    bincount over ``phys``.
    """

    def __init__(self, net: RoadNetwork, paths: Sequence[Path], dx: float):
        self.net = net
        self.paths = tuple(paths)
        self.dx = float(dx)
        self.ncells = cells_per_road(net, dx)
        self.road_ids = sorted(net.roads)
        self.road_start = {}
        acc = 0
        for r in self.road_ids:
            self.road_start[r] = acc
            acc += self.ncells[r]
        self.nphys = acc
        phys, block = [], []
        for p in self.paths:
            start = sum(len(x) for x in phys)
            cells = np.concatenate([self.road_start[r] + np.arange(self.ncells[r]) for r in p.roads])
            phys.append(cells)
            block.append((start, start + len(cells)))
        self.phys = np.concatenate(phys)
        self.block = block
        n = len(self.phys)
        self.first = np.zeros(n, dtype=bool)
        self.last = np.zeros(n, dtype=bool)
        for a, b in block:
            self.first[a] = True
            self.last[b - 1] = True
        self.downstream = np.where(self.last, 0, np.arange(n) + 1)

    def path_slice(self, pid: int) -> slice:
        a, b = self.block[pid]
        return slice(a, b)

    def road_slice(self, road) -> slice:
        a = self.road_start[road]
        return slice(a, a + self.ncells[road])

    def total(self, mu: np.ndarray) -> np.ndarray:
        """Total density on every physical cell."""
        return np.bincount(self.phys, weights=mu, minlength=self.nphys)


@dataclass(frozen=True)
class MacroState:
    """Partial densities of every population on the shared grid."""

    grid: MacroGrid
    fd: FundamentalDiagram
    mu: np.ndarray
    dt: float
    t: float = 0.0
    steps: int = 0
    outflow: float = 0.0
    cfl_factor: float = field(default=0.9, repr=False)

    def __post_init__(self):
        limit = self.cfl_factor * self.grid.dx / self.fd.max_wave_speed
        if self.dt > limit * (1 + 1e-12):
            raise CFLError(f"macro dt={self.dt} exceeds the CFL limit {limit:g} "
                           f"(dx={self.grid.dx}, v_max={self.fd.v_max})")

    def path_density(self, pid: int) -> np.ndarray:
        return self.mu[self.grid.path_slice(pid)]

    def omega(self, pid: int) -> np.ndarray:
        """Total density seen along path ``pid``."""
        return self.grid.total(self.mu)[self.grid.phys[self.grid.path_slice(pid)]]

    @property
    def mass(self) -> float:
        return float(np.sum(self.mu) * self.grid.dx)


def step_multipath(state: MacroState, dt: float | None = None) -> MacroState:
    """One step of the multi-path Godunov scheme.

    Each population's outgoing interface flux is its share mu/omega of the
    Godunov flux of the total density; a zero total density carries zero flux.
    Ghost cells of zero density sit before every path origin and after every
    path destination.
    """
    dt = state.dt if dt is None else dt
    grid, mu = state.grid, state.mu
    omega_phys = grid.total(mu)
    omega = omega_phys[grid.phys]
    omega_down = np.where(grid.last, 0.0, omega[grid.downstream])
    g = _godunov(np.clip(omega, 0.0, 1.0), np.clip(omega_down, 0.0, 1.0), state.fd)
    with np.errstate(divide="ignore", invalid="ignore"):
        share = np.where(omega > 0, mu / np.where(omega > 0, omega, 1.0), 0.0)
    flux_out = share * g
    flux_in = np.concatenate([[0.0], flux_out[:-1]])
    flux_in[grid.first] = 0.0
    new = mu - dt / grid.dx * (flux_out - flux_in)
    out = float(np.sum(flux_out[grid.last])) * dt
    return replace(state, mu=new, t=state.t + dt, steps=state.steps + 1,
                   outflow=state.outflow + out)


def split_initial(grid: MacroGrid, total: Mapping[object, np.ndarray],
                  turning: TurningCoefficients, fd: FundamentalDiagram, dt: float) -> MacroState:
    """Partial densities from per-road total densities.

    On every road the total is shared among the paths through it in
    proportion to the product of turning coefficients ahead of the road.
    """
    turning.validate(grid.net)
    mu = np.zeros(len(grid.phys))
    for road in grid.road_ids:
        values = np.asarray(total.get(road, np.zeros(grid.ncells[road])), dtype=float)
        if values.shape != (grid.ncells[road],):
            raise NetworkError(f"road {road!r}: expected {grid.ncells[road]} cell values")
        if np.any(values < 0) or np.any(values > 1):
            raise ValueError(f"road {road!r}: total density outside [0, 1]")
        if not np.any(values):
            continue
        weights = path_split_weights(grid.net, grid.paths, turning, road)
        for pid, w in weights.items():
            p = grid.paths[pid]
            k = p.index(road)
            start = grid.block[pid][0] + round(p.offsets[k] / grid.dx)
            mu[start:start + grid.ncells[road]] = w * values
    return MacroState(grid, fd, mu, dt)


def total_density_per_road(state: MacroState) -> dict:
    """Road id -> total density on that road's cells."""
    omega = state.grid.total(state.mu)
    return {r: omega[state.grid.road_slice(r)].copy() for r in state.grid.road_ids}


def simulate(state: MacroState, final_time: float, observers=(), snapshot_times=(),
             on_snapshot=None) -> MacroState:
    """Step to ``final_time``, shortening the last step to land on it."""
    snaps = sorted(t for t in snapshot_times if 0 <= t <= final_time)
    t0, dt = state.t, state.dt
    while True:
        for obs in observers:
            obs(state)
        while snaps and snaps[0] <= state.t + 1e-9 * dt:
            if on_snapshot is not None:
                on_snapshot(snaps[0], state)
            snaps.pop(0)
        remaining = final_time - state.t
        if remaining <= 1e-9 * dt:
            return state
        h = min(dt, remaining)
        state = step_multipath(state, h)
        if remaining > dt:
            state = replace(state, t=t0 + state.steps * dt)
