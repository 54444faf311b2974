"""Piecewise-constant densities and the discretize / antidiscretize pair.

`discretize` places vehicles so that consecutive vehicles enclose exactly one
vehicle length of mass; `antidiscretize` turns ordered positions back into
the density ell / gap on each inter-vehicle interval.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class MassError(ValueError):
    """Density mass is not an integer multiple of the vehicle length."""

    def __init__(self, mass, ell, remainder, where=""):
        self.mass, self.ell, self.remainder = mass, ell, remainder
        loc = f" on road {where!r}" if where != "" else ""
        super().__init__(f"mass {mass!r}{loc} is not a multiple of ell={ell!r} "
                         f"(remainder {remainder!r})")


@dataclass(frozen=True)
class PiecewiseConstant:
    """Density taking value ``values[j]`` on ``[edges[j], edges[j+1])``, zero elsewhere."""

    edges: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        edges = np.asarray(self.edges, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if edges.ndim != 1 or values.shape != (max(len(edges) - 1, 0),):
            raise ValueError("need len(edges) == len(values) + 1")
        if np.any(np.diff(edges) < 0):
            raise ValueError("edges must be non-decreasing")
        if np.any(values < 0):
            raise ValueError("density must be nonnegative")
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "values", values)

    @classmethod
    def constant(cls, value: float, start: float, end: float) -> "PiecewiseConstant":
        return cls(np.array([start, end]), np.array([value]))

    @classmethod
    def from_segments(cls, segments) -> "PiecewiseConstant":
        """Build from ``(start, end, value)`` triples; gaps between segments are zero."""
        segments = sorted(segments)
        edges, values = [], []
        for start, end, value in segments:
            if end <= start:
                raise ValueError(f"empty segment [{start}, {end})")
            if edges and start < edges[-1]:
                raise ValueError("segments overlap")
            if edges and start > edges[-1]:
                values.append(0.0)
                edges.append(start)
            if not edges:
                edges.append(start)
            values.append(value)
            edges.append(end)
        return cls(np.array(edges, dtype=float), np.array(values, dtype=float))

    @property
    def mass(self) -> float:
        return float(np.sum(self.values * np.diff(self.edges)))

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if len(self.values) == 0:
            return np.zeros_like(x)
        j = np.searchsorted(self.edges, x, side="right") - 1
        inside = (j >= 0) & (j < len(self.values))
        return np.where(inside, self.values[np.clip(j, 0, len(self.values) - 1)], 0.0)

    def cell_averages(self, x0: float, dx: float, ncells: int) -> np.ndarray:
        """Exact averages over ``[x0 + k dx, x0 + (k+1) dx)``."""
        grid = x0 + dx * np.arange(ncells + 1)
        return np.diff(self._cumulative(grid)) / dx

    def _cumulative(self, x):
        cum = np.concatenate([[0.0], np.cumsum(self.values * np.diff(self.edges))])
        x = np.clip(np.asarray(x, dtype=float), self.edges[0], self.edges[-1])
        j = np.clip(np.searchsorted(self.edges, x, side="right") - 1, 0, len(self.values) - 1)
        return cum[j] + self.values[j] * (x - self.edges[j])


def vehicle_count(mass: float, ell: float, strict: bool = True, where="") -> int:
    """Number of vehicles carrying ``mass``; rounds to the nearest integer unless strict."""
    ratio = mass / ell
    n = int(round(ratio))
    if strict and abs(ratio - n) > 1e-9 * max(1.0, ratio):
        raise MassError(mass, ell, mass - n * ell, where)
    return n


def discretize(density: PiecewiseConstant, ell: float, count: int | None = None) -> np.ndarray:
    """Vehicle positions partitioning the density into slices of mass ``ell``.

    The front vehicle sits at the right end of the support. Walking leftwards,
    each vehicle is placed at the largest z leaving exactly ``ell`` of mass
    between it and the vehicle ahead. With ``count`` given, that many vehicles
    are placed (for callers that already rounded the mass); otherwise the mass
    must be an exact multiple of ``ell``.

    Returns:
        increasing positions, length ``count``.
    """
    if ell <= 0:
        raise ValueError("ell must be positive")
    if count is None:
        count = vehicle_count(density.mass, ell, strict=True)
    if count == 0:
        return np.empty(0)
    pos = density.values > 0
    if not np.any(pos):
        raise ValueError("cannot place vehicles on an empty density")
    left = density.edges[:-1][pos]
    right = density.edges[1:][pos]
    vals = density.values[pos]
    seg_mass = vals * (right - left)
    # mass lying to the right of each positive segment's right / left edge
    beyond = np.concatenate([np.cumsum(seg_mass[::-1])[::-1][1:], [0.0]])
    upper = beyond + seg_mass
    # k-th vehicle from the front encloses k*ell of mass to its right
    target = ell * np.arange(count)
    if target[-1] > upper[0] + 1e-9 * ell:
        raise MassError(density.mass, ell, density.mass - count * ell)
    # largest z wins: take the rightmost segment whose left edge still has
    # at least the target mass to its right
    j = np.searchsorted(-upper, -target, side="right") - 1
    j = np.clip(j, 0, len(vals) - 1)
    y = right[j] - (target - beyond[j]) / vals[j]
    return y[::-1].copy()


def antidiscretize(positions, ell: float) -> PiecewiseConstant:
    """Density ell/gap on each ``[y_i, y_{i+1})``."""
    y = np.asarray(positions, dtype=float)
    if len(y) < 2:
        return PiecewiseConstant(np.array(y[:1] if len(y) else [0.0]), np.empty(0))
    gaps = np.diff(y)
    if np.any(gaps <= 0):
        raise ValueError("positions must be strictly increasing")
    return PiecewiseConstant(y, ell / gaps)
