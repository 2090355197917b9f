"""Mission geometry and the flight-time model.

Waypoints are 1-indexed along the flight path: ``wp_1`` is take-off,
``wp_N`` is landing and ``wp_2 .. wp_{N-1}`` are the points of interest.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence


@dataclass(frozen=True)
class Waypoint:
    index: int
    x: float
    y: float


def distance(a: Waypoint, b: Waypoint) -> float:
    """Planar Euclidean distance in meters."""
    return math.hypot(a.x - b.x, a.y - b.y)


@dataclass(frozen=True)
class TimingParams:
    sense_t: float = 1.0
    proc_t: float = 10.0
    act_t: float = 10.0
    cruise_speed: float = 4.0
    takeoff_t: float = 8.0
    land_t: float = 12.0
    # extra delay charged when the drone reverses toward the previous point
    turnaround_t: float = 0.0

    def __post_init__(self):
        for name in ("sense_t", "proc_t", "act_t", "cruise_speed", "takeoff_t", "land_t"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be strictly positive, got {getattr(self, name)!r}")
        if self.turnaround_t < 0:
            raise ValueError("turnaround_t must be non-negative")

    def to_dict(self) -> dict:
        return {
            "sense_t": self.sense_t,
            "proc_t": self.proc_t,
            "act_t": self.act_t,
            "cruise_speed": self.cruise_speed,
            "takeoff_t": self.takeoff_t,
            "land_t": self.land_t,
            "turnaround_t": self.turnaround_t,
        }


@dataclass(frozen=True)
class GridSpec:
    """Rectangular grid of points of interest visited in serpentine order.

    Row ``r`` sits at ``y = origin_y + r * spacing``; even rows are flown in
    increasing x, odd rows in decreasing x.
    """

    rows: int = 9
    cols: int = 9
    spacing: float = 50.0
    origin_x: float = 0.0
    origin_y: float = 0.0

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise ValueError("grid needs at least one row and one column")
        if not self.spacing > 0:
            raise ValueError("grid spacing must be positive")

    @property
    def size(self) -> int:
        return self.rows * self.cols

    def cells(self) -> list[tuple[int, int]]:
        """(row, col) pairs in visiting order."""
        out = []
        for r in range(self.rows):
            cols = range(self.cols) if r % 2 == 0 else range(self.cols - 1, -1, -1)
            out.extend((r, c) for c in cols)
        return out

    def coords(self, row: int, col: int) -> tuple[float, float]:
        return (self.origin_x + col * self.spacing, self.origin_y + row * self.spacing)

    def cell_of(self, x: float, y: float, tol: float = 1e-6) -> tuple[int, int]:
        """Inverse of :meth:`coords`; raises ``ValueError`` for off-grid points."""
        c = (x - self.origin_x) / self.spacing
        r = (y - self.origin_y) / self.spacing
        rc, cc = round(r), round(c)
        if abs(r - rc) > tol or abs(c - cc) > tol or not (0 <= rc < self.rows and 0 <= cc < self.cols):
            raise ValueError(f"point ({x}, {y}) is not on the grid")
        return int(rc), int(cc)

    def to_dict(self) -> dict:
        return {
            "rows": self.rows,
            "cols": self.cols,
            "spacing": self.spacing,
            "origin": [self.origin_x, self.origin_y],
        }


@dataclass(frozen=True)
class MissionPlan:
    waypoints: tuple[Waypoint, ...]

    def __post_init__(self):
        n = len(self.waypoints)
        if n < 3:
            raise ValueError(f"a mission needs at least 3 waypoints, got {n}")
        for k, wp in enumerate(self.waypoints, start=1):
            if wp.index != k:
                raise ValueError(f"waypoint indices must be contiguous from 1; position {k} has index {wp.index}")

    @classmethod
    def from_coords(cls, coords: Iterable[Sequence[float]]) -> "MissionPlan":
        return cls(tuple(Waypoint(k, float(x), float(y)) for k, (x, y) in enumerate(coords, start=1)))

    @classmethod
    def from_grid(cls, grid: GridSpec, home: Sequence[float] = (-50.0, 0.0)) -> "MissionPlan":
        """Take off from ``home``, sweep the grid, land back at ``home``."""
        pts = [tuple(home)] + [grid.coords(r, c) for r, c in grid.cells()] + [tuple(home)]
        return cls.from_coords(pts)

    @property
    def n(self) -> int:
        return len(self.waypoints)

    @property
    def poi_indices(self) -> range:
        return range(2, self.n)

    @property
    def n_poi(self) -> int:
        return self.n - 2

    def __getitem__(self, index: int) -> Waypoint:
        if not 1 <= index <= self.n:
            raise IndexError(f"waypoint index {index} outside 1..{self.n}")
        return self.waypoints[index - 1]

    def to_dict(self) -> dict:
        return {"waypoints": [[wp.x, wp.y] for wp in self.waypoints]}


@dataclass
class FlightModel:
    """Leg times between waypoints of one plan under constant cruise speed."""

    plan: MissionPlan
    params: TimingParams = field(default_factory=TimingParams)

    def _check(self, i: int) -> None:
        if not 1 <= i <= self.plan.n:
            raise ValueError(f"waypoint index {i} outside 1..{self.plan.n}")

    def cruise_time(self, i: int, j: int) -> float:
        self._check(i)
        self._check(j)
        return distance(self.plan[i], self.plan[j]) / self.params.cruise_speed

    def fly_time(self, i: int, j: int) -> float:
        self._check(i)
        self._check(j)
        if i == j:
            raise ValueError("fly_time needs two distinct waypoints")
        if i == 1 and j == self.plan.n:
            raise ValueError("a leg cannot be both take-off and landing leg")
        t = self.cruise_time(i, j)
        if i == 1:
            return t + self.params.takeoff_t
        if j == self.plan.n:
            return t + self.params.land_t
        return t

    def return_time(self, i: int, proc_t: float | None = None) -> float:
        """Time to fly back to ``wp_i`` from where the drone is when the result arrives.

        The drone left ``wp_i`` toward ``wp_{i+1}`` right after sensing and
        covers ``cruise_speed * proc_t`` meters, capped at the leg length.
        """
        self._check(i)
        if i >= self.plan.n:
            raise ValueError(f"waypoint {i} has no successor")
        if proc_t is None:
            proc_t = self.params.proc_t
        v = self.params.cruise_speed
        travelled = min(v * proc_t, distance(self.plan[i], self.plan[i + 1]))
        if travelled <= 0:
            return 0.0
        return travelled / v + self.params.turnaround_t

    def return_times(self, proc_t: float | None = None) -> list[float]:
        """retT for every point of interest, in visiting order."""
        return [self.return_time(i, proc_t) for i in self.plan.poi_indices]
