"""Moving between vehicles and densities, and measuring the difference.

Grid profiles are per road: ``DensityProfile`` holds cell values of one road
on a uniform grid. `psi_average` turns a vehicle population into such
profiles by counting vehicle lengths per cell.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np

from .density import PiecewiseConstant, antidiscretize, discretize
from .micro import MicroState
from .network import RoadNetwork, cells_per_road

__all__ = ["DensityProfile", "antidiscretize_C", "discretize_E", "psi_average", "l1_distance",
           "network_l1", "write_profiles", "read_profiles"]

discretize_E = discretize
antidiscretize_C = antidiscretize


@dataclass(frozen=True)
class DensityProfile:
    road_id: object
    dx: float
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if np.any(values < 0):
            raise ValueError(f"negative density on road {self.road_id!r}")
        object.__setattr__(self, "values", values)

    @property
    def length(self) -> float:
        return len(self.values) * self.dx

    @property
    def x_left(self) -> np.ndarray:
        return self.dx * np.arange(len(self.values))

    @property
    def mass(self) -> float:
        return float(np.sum(self.values) * self.dx)


def psi_average(state: MicroState, net: RoadNetwork, dx: float) -> dict:
    """Vehicle length per cell divided by the cell length, road by road.

    Cells are half-open ``[x_k, x_{k+1})`` in road-local coordinates. A vehicle
    sitting exactly at the end of a destination road is counted in the last
    cell.
    """
    ncells = cells_per_road(net, dx)
    topo = state.topo
    idx = np.flatnonzero(state.active)
    g, y = state.road_local(idx)
    out = {}
    for j, r in enumerate(topo.road_ids):
        k = np.floor(y[g == j] / dx).astype(np.int64)
        k = np.minimum(k, ncells[r] - 1)
        counts = np.bincount(k, minlength=ncells[r])
        out[r] = DensityProfile(r, dx, state.params.ell / dx * counts)
    return out


def l1_distance(a: DensityProfile, b: DensityProfile) -> float:
    if a.road_id != b.road_id or len(a.values) != len(b.values) or not np.isclose(a.dx, b.dx):
        raise ValueError(f"profiles on different grids: {a.road_id!r}/{len(a.values)}/{a.dx} "
                         f"vs {b.road_id!r}/{len(b.values)}/{b.dx}")
    return float(np.sum(np.abs(a.values - b.values)) * a.dx)


def network_l1(a: Mapping[object, DensityProfile], b: Mapping[object, DensityProfile]) -> dict:
    """Per-road L1 distances plus their sum under the key ``"total"``."""
    if set(a) != set(b):
        raise ValueError("profile sets cover different roads")
    out = {r: l1_distance(a[r], b[r]) for r in sorted(a)}
    out["total"] = sum(out.values())
    return out


def profiles_from_arrays(arrays: Mapping[object, np.ndarray], dx: float) -> dict:
    return {r: DensityProfile(r, dx, np.clip(v, 0.0, None)) for r, v in arrays.items()}


def write_profiles(path, profiles: Iterable[DensityProfile]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["road_id", "cell_index", "x_left", "density"])
        for prof in sorted(profiles, key=lambda p: p.road_id):
            for k, (x, v) in enumerate(zip(prof.x_left, prof.values)):
                w.writerow([prof.road_id, k, f"{x:.12g}", f"{v:.12g}"])


def read_profiles(path, dx: float | None = None, road_type=int) -> dict:
    """Inverse of `write_profiles`; ``dx`` is inferred unless a road has one cell."""
    rows = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            r = road_type(row["road_id"])
            rows.setdefault(r, []).append((int(row["cell_index"]), float(row["x_left"]),
                                           float(row["density"])))
    out = {}
    for r, items in rows.items():
        items.sort()
        h = dx if dx is not None else items[1][1] - items[0][1]
        out[r] = DensityProfile(r, h, np.array([v for _, _, v in items]))
    return out


def profile_of(density: PiecewiseConstant, road, length: float, dx: float) -> DensityProfile:
    """Exact cell averages of a piecewise-constant road density."""
    n = round(length / dx)
    return DensityProfile(road, dx, density.cell_averages(0.0, dx, n))
