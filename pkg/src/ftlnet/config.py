"""Experiment configuration files.

A config is a YAML mapping::

    name: merge
    mode: compare                 # run-micro | run-macro | compare | converge
    final_time: 3000
    v_max: 1.0
    network:
      roads: {1: 4000, 2: 4000, 3: 4000}
      junctions:
        - {id: o1, inc: [], out: [1]}
        - {id: o2, inc: [], out: [2]}
        - {id: J, inc: [1, 2], out: [3]}
        - {id: d3, inc: [3], out: []}
    turning: []                   # list of {from: a, to: b, p: P[a->b]}
    initial_density:              # road -> list of [start, end, value]
      1: [[0, 4000, 0.5]]
      2: [[0, 4000, 0.3]]
    micro: {ell: 1.0, dt: 0.2, seed: 0, adaptive_cfl: false, strict_mass: false}
    macro: {cells_per_road: 100, dt: 10.0}
    convergence: {ladder: [[3, 3], [1, 0.2]], seeds: 16}
    snapshots: []
    output_dir: out/merge

``micro`` accepts ``n`` (total vehicle count) instead of ``ell``; ``macro``
accepts ``dx`` instead of ``cells_per_road``.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from pathlib import Path as FsPath
from typing import Any

import yaml

from .density import PiecewiseConstant
from .macro import FundamentalDiagram
from .micro import MicroParams
from .network import RoadNetwork, TurningCoefficients, enumerate_paths

MODES = ("run-micro", "run-macro", "compare", "converge")


class ConfigError(ValueError):
    pass


@dataclass
class MicroConfig:
    dt: float
    ell: float | None = None
    n: int | None = None
    seed: int = 0
    adaptive_cfl: bool = False
    strict_mass: bool = False


@dataclass
class MacroConfig:
    dt: float
    dx: float | None = None
    cells_per_road: int | None = None


@dataclass
class ExperimentConfig:
    name: str
    roads: dict
    junctions: list
    initial_density: dict
    final_time: float
    micro: MicroConfig
    macro: MacroConfig
    turning: dict = field(default_factory=dict)
    v_max: float = 1.0
    mode: str = "compare"
    ladder: list = field(default_factory=list)
    seeds: int | None = None
    snapshots: list = field(default_factory=list)
    output_dir: str = "out"

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}; expected one of {MODES}")
        if not self.final_time >= 0:
            raise ConfigError("final_time must be nonnegative")
        if not self.v_max > 0:
            raise ConfigError("v_max must be positive")
        for r in self.initial_density:
            if r not in self.roads:
                raise ConfigError(f"initial density given for unknown road {r!r}")
        for a, b in self.turning:
            if a not in self.roads or b not in self.roads:
                raise ConfigError(f"turning coefficient {a!r}->{b!r} references unknown road")
        if (self.micro.ell is None) == (self.micro.n is None):
            raise ConfigError("micro section needs exactly one of 'ell' or 'n'")
        if self.micro.ell is not None and not self.micro.ell > 0:
            raise ConfigError("micro.ell must be positive")
        if self.micro.n is not None and not self.micro.n > 0:
            raise ConfigError("micro.n must be positive")
        if not self.micro.dt > 0 or not self.macro.dt > 0:
            raise ConfigError("time steps must be positive")
        if (self.macro.dx is None) == (self.macro.cells_per_road is None):
            raise ConfigError("macro section needs exactly one of 'dx' or 'cells_per_road'")
        if self.macro.cells_per_road is not None and len(set(self.roads.values())) > 1:
            raise ConfigError("cells_per_road needs equal road lengths; give macro.dx instead")
        for ell, dt in self.ladder:
            if not ell > 0 or not dt > 0:
                raise ConfigError(f"bad ladder rung ({ell}, {dt})")
        if self.seeds is not None and self.seeds < 1:
            raise ConfigError("seeds must be at least 1")

    # --- derived objects -------------------------------------------------

    def network(self) -> RoadNetwork:
        return RoadNetwork.from_lists(self.roads.items(), self.junctions)

    def paths(self):
        return enumerate_paths(self.network())

    def turning_coefficients(self) -> TurningCoefficients:
        return TurningCoefficients(self.turning)

    def densities(self) -> dict:
        return {r: PiecewiseConstant.from_segments(segs) for r, segs in self.initial_density.items()
                if segs}

    @property
    def dx(self) -> float:
        if self.macro.dx is not None:
            return float(self.macro.dx)
        return float(next(iter(self.roads.values()))) / self.macro.cells_per_road

    @property
    def initial_mass(self) -> float:
        return sum(d.mass for d in self.densities().values())

    def fundamental_diagram(self) -> FundamentalDiagram:
        return FundamentalDiagram(self.v_max)

    def micro_params(self, ell: float | None = None, dt: float | None = None,
                     seed: int | None = None) -> MicroParams:
        if ell is None:
            ell = self.micro.ell if self.micro.ell is not None else self.initial_mass / self.micro.n
        return MicroParams(ell=float(ell), dt=float(dt if dt is not None else self.micro.dt),
                           v_max=self.v_max, seed=self.micro.seed if seed is None else seed,
                           adaptive=self.micro.adaptive_cfl, strict_mass=self.micro.strict_mass)

    @property
    def stochastic(self) -> bool:
        return self.turning_coefficients().is_stochastic

    # --- (de)serialization -------------------------------------------------

    def to_dict(self) -> dict:
        micro = {k: v for k, v in asdict(self.micro).items() if v is not None}
        macro = {k: v for k, v in asdict(self.macro).items() if v is not None}
        out = {
            "name": self.name,
            "mode": self.mode,
            "final_time": self.final_time,
            "v_max": self.v_max,
            "network": {
                "roads": dict(self.roads),
                "junctions": [{"id": j, "inc": list(inc), "out": list(out)}
                              for j, inc, out in self.junctions],
            },
            "turning": [{"from": a, "to": b, "p": p} for (a, b), p in self.turning.items()],
            "initial_density": {r: [list(s) for s in segs]
                                for r, segs in self.initial_density.items()},
            "micro": micro,
            "macro": macro,
            "snapshots": list(self.snapshots),
            "output_dir": self.output_dir,
        }
        if self.ladder or self.seeds is not None:
            conv: dict[str, Any] = {"ladder": [list(r) for r in self.ladder]}
            if self.seeds is not None:
                conv["seeds"] = self.seeds
            out["convergence"] = conv
        return out

    def dump(self, path) -> None:
        with open(path, "w") as fh:
            yaml.safe_dump(self.to_dict(), fh, sort_keys=False)


def from_dict(data: dict) -> ExperimentConfig:
    try:
        net = data["network"]
        roads = {r: float(length) for r, length in net["roads"].items()}
        junctions = [(j["id"], list(j.get("inc", [])), list(j.get("out", [])))
                     for j in net["junctions"]]
        turning = {(t["from"], t["to"]): float(t["p"]) for t in data.get("turning") or []}
        initial = {r: [tuple(float(x) for x in seg) for seg in segs]
                   for r, segs in (data.get("initial_density") or {}).items()}
        micro = MicroConfig(**data["micro"])
        macro = MacroConfig(**data["macro"])
        conv = data.get("convergence") or {}
        return ExperimentConfig(
            name=str(data.get("name", "experiment")),
            roads=roads,
            junctions=junctions,
            initial_density=initial,
            final_time=float(data["final_time"]),
            micro=micro,
            macro=macro,
            turning=turning,
            v_max=float(data.get("v_max", 1.0)),
            mode=data.get("mode", "compare"),
            ladder=[tuple(float(x) for x in rung) for rung in conv.get("ladder", [])],
            seeds=conv.get("seeds"),
            snapshots=[float(t) for t in data.get("snapshots") or []],
            output_dir=str(data.get("output_dir", "out")),
        )
    except KeyError as exc:
        raise ConfigError(f"missing config key {exc}") from None
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def load(path) -> ExperimentConfig:
    with open(path) as fh:
        data = yaml.safe_load(fh)
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a mapping at top level")
    return from_dict(data)


def bundled(name: str) -> FsPath:
    """Path of a config shipped with the package (``merge``, ``diverge``, ``cross2x2``...)."""
    path = FsPath(__file__).parent / "configs" / f"{name}.yaml"
    if not path.exists():
        raise ConfigError(f"no bundled config named {name!r}")
    return path
