"""Micro, macro, comparison and convergence runs driven by a config."""

from __future__ import annotations

import csv
import json
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path as FsPath

import numpy as np

from . import bridge, macro, micro
from .config import ExperimentConfig

log = logging.getLogger(__name__)


@dataclass
class MicroResult:
    profiles: dict
    state: micro.MicroState
    summary: dict


@dataclass
class MacroResult:
    profiles: dict
    state: macro.MacroState
    summary: dict
    history: dict = field(default_factory=dict)


class TrajectoryWriter:
    """Observer writing ``step,time,label,path_id,path_coordinate,active`` rows."""

    def __init__(self, path, every: int = 1):
        self.fh = open(path, "w", newline="")
        self.w = csv.writer(self.fh)
        self.w.writerow(["step", "time", "label", "path_id", "path_coordinate", "active"])
        self.every = every

    def __call__(self, state, structure):
        if state.steps % self.every:
            return
        for i in range(state.n):
            self.w.writerow([state.steps, f"{state.t:.12g}", i, int(state.path_id[i]),
                             f"{state.s[i]:.12g}", int(state.active[i])])

    def close(self):
        self.fh.close()


class _CountCheck:
    def __init__(self, n):
        self.n = n
        self.ok = True

    def __call__(self, state, structure):
        if state.n_active + state.n_arrived != self.n:
            self.ok = False


def seed(config: ExperimentConfig, ell=None, dt=None, seed=None) -> micro.MicroState:
    net = config.network()
    return micro.seed_vehicles(net, config.paths(), config.densities(),
                               config.turning_coefficients(), config.micro_params(ell, dt, seed))


def run_micro(config: ExperimentConfig, out_dir=None, ell=None, dt=None, seed_override=None,
              trajectories: bool = False, extra_observers=()) -> MicroResult:
    """Seed vehicles, step to the final time and average them on the macro grid."""
    net = config.network()
    dx = config.dx
    state0 = seed(config, ell, dt, seed_override)
    monitor = micro.OverlapMonitor(net)
    counts = _CountCheck(state0.n)
    observers = [monitor, counts, *extra_observers]
    writer = None
    if out_dir is not None:
        out_dir = FsPath(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        if trajectories:
            writer = TrajectoryWriter(out_dir / "trajectories.csv")
            observers.append(writer)

    def snap(t, st):
        if out_dir is not None:
            bridge.write_profiles(out_dir / f"micro_profile_t{t:g}.csv",
                                  bridge.psi_average(st, net, dx).values())

    start = time.perf_counter()
    try:
        state = micro.simulate(state0, config.final_time, observers,
                               config.snapshots, on_snapshot=snap)
    finally:
        if writer is not None:
            writer.close()
    wall = time.perf_counter() - start
    profiles = bridge.psi_average(state, net, dx)
    summary = {
        "name": config.name,
        "ell": state.params.ell,
        "dt": state.params.dt,
        "seed": state.params.seed,
        "vehicles": state.n,
        "total_length": state.total_length,
        "active": state.n_active,
        "arrived": state.n_arrived,
        "count_conserved": counts.ok,
        "entries": {str(r): state.entered(r) for r in state.topo.road_ids},
        "max_overlap": monitor.max_count,
        "max_overlap_per_junction": {str(k): v for k, v in monitor.max_per_junction.items()},
        "overlap_violations": len(monitor.violations),
        "seeding_adjustment": {str(k): v for k, v in state0.seeding_adjustment.items()},
        "steps": state.steps,
        "final_time": state.t,
        "wall_time": wall,
    }
    if out_dir is not None:
        bridge.write_profiles(out_dir / "micro_profile.csv", profiles.values())
        (out_dir / "micro_summary.json").write_text(json.dumps(summary, indent=2))
    return MicroResult(profiles, state, summary)


def initial_macro(config: ExperimentConfig) -> macro.MacroState:
    net, dx = config.network(), config.dx
    grid = macro.MacroGrid(net, config.paths(), dx)
    dens = config.densities()
    total = {r: dens[r].cell_averages(0.0, dx, grid.ncells[r]) for r in dens}
    return macro.split_initial(grid, total, config.turning_coefficients(),
                               config.fundamental_diagram(), config.macro.dt)


def run_macro(config: ExperimentConfig, out_dir=None) -> MacroResult:
    """Split the initial totals into populations and run the multi-path scheme."""
    state0 = initial_macro(config)
    dx = config.dx
    m0 = state0.mass
    hist = {"mass_drift": 0.0, "omega_max": 0.0, "omega_min": 0.0, "mu_min": 0.0}

    def check(st):
        omega = st.grid.total(st.mu)
        drift = abs(st.mass + st.outflow - m0) / max(m0, 1e-300)
        hist["mass_drift"] = max(hist["mass_drift"], drift)
        hist["omega_max"] = max(hist["omega_max"], float(omega.max(initial=0.0)))
        hist["omega_min"] = min(hist["omega_min"], float(omega.min(initial=0.0)))
        hist["mu_min"] = min(hist["mu_min"], float(st.mu.min(initial=0.0)))

    if out_dir is not None:
        out_dir = FsPath(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)

    def snap(t, st):
        if out_dir is not None:
            arrays = macro.total_density_per_road(st)
            bridge.write_profiles(out_dir / f"macro_profile_t{t:g}.csv",
                                  bridge.profiles_from_arrays(arrays, dx).values())

    start = time.perf_counter()
    state = macro.simulate(state0, config.final_time, [check], config.snapshots, snap)
    wall = time.perf_counter() - start
    profiles = bridge.profiles_from_arrays(macro.total_density_per_road(state), dx)
    summary = {
        "name": config.name,
        "dx": dx,
        "dt": state.dt,
        "paths": [list(p.roads) for p in state.grid.paths],
        "initial_mass": m0,
        "final_mass": state.mass,
        "outflow": state.outflow,
        "max_relative_mass_drift": hist["mass_drift"],
        "max_total_density": hist["omega_max"],
        "min_total_density": hist["omega_min"],
        "min_partial_density": hist["mu_min"],
        "steps": state.steps,
        "final_time": state.t,
        "wall_time": wall,
    }
    if out_dir is not None:
        bridge.write_profiles(out_dir / "macro_profile.csv", profiles.values())
        (out_dir / "macro_summary.json").write_text(json.dumps(summary, indent=2))
    return MacroResult(profiles, state, summary, hist)


def run_compare(config: ExperimentConfig, out_dir=None, ell=None, dt=None, seed_override=None,
                macro_result: MacroResult | None = None) -> dict:
    """Per-road L1 distance between the micro average and the macro total density."""
    mic = run_micro(config, out_dir, ell, dt, seed_override)
    mac = macro_result or run_macro(config, out_dir)
    table = bridge.network_l1(mic.profiles, mac.profiles)
    if out_dir is not None:
        with open(FsPath(out_dir) / "compare.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["road_id", "L1"])
            for r, v in table.items():
                w.writerow([r, f"{v:.12g}"])
    return table


def _compare_task(args):
    config, ell, dt, s, mac = args
    return run_compare(config, None, ell, dt, s, mac)["total"]


def run_convergence(config: ExperimentConfig, ladder=None, seeds: int | None = None,
                    out_dir=None, workers: int = 1) -> list[dict]:
    """Network L1 error for every rung of a (ell, dt) ladder.

    Networks with random turning use ``seeds`` replicas per rung (16 unless
    configured); deterministic networks use one.
    """
    ladder = list(ladder if ladder is not None else config.ladder)
    if not ladder:
        raise ValueError("convergence ladder is empty")
    if seeds is None:
        seeds = config.seeds if config.seeds is not None else (16 if config.stochastic else 1)
    if not config.stochastic:
        seeds = 1
    mac = run_macro(config)
    tasks = [(config, ell, dt, config.micro.seed + k, mac) for ell, dt in ladder
             for k in range(seeds)]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            totals = list(pool.map(_compare_task, tasks))
    else:
        totals = [_compare_task(t) for t in tasks]
    rows = []
    for i, (ell, dt) in enumerate(ladder):
        vals = np.array(totals[i * seeds:(i + 1) * seeds])
        rows.append({"ell_n": ell, "dt": dt, "seeds": seeds, "mean_L1": float(vals.mean()),
                     "std_L1": float(vals.std(ddof=1)) if seeds > 1 else 0.0})
    if out_dir is not None:
        out_dir = FsPath(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        with open(out_dir / "convergence.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["ell_n", "dt", "seeds", "mean_L1", "std_L1"])
            for row in rows:
                w.writerow([f"{row['ell_n']:g}", f"{row['dt']:g}", row["seeds"],
                            f"{row['mean_L1']:.12g}", f"{row['std_L1']:.12g}"])
    return rows


def default_workers() -> int:
    return max(1, min(os.cpu_count() or 1, 8))
