"""Synthetic grid-road traffic, trace CSV I/O and neighbour queries."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, fields
from typing import Iterable, Mapping

import numpy as np

from .grouping import VehicleSnapshot
from .kernels import neighbor_counts

TRACE_COLUMNS = ("time_s", "vehicle_id", "x_m", "y_m", "speed_mps", "remaining_m", "road_id")
LANE_WIDTH = 3.5
SLOT_LENGTH = 7.5  # bumper-to-bumper spacing used for the capacity check


class MobilityError(ValueError):
    pass


class TraceFormatError(MobilityError):
    pass


@dataclass(frozen=True)
class WorldConfig:
    area_width_m: float = 2000.0
    area_height_m: float = 1600.0
    roads_x: int = 5  # vertical roads
    roads_y: int = 5  # horizontal roads
    lanes_per_road: int = 2
    vehicles: int = 100
    communication_range_m: float = 150.0
    step_s: float = 1.0
    duration_s: float = 10.0
    speed_min_mps: float = 8.0
    speed_max_mps: float = 22.0
    speed_jitter_mps: float = 1.0
    route_min_m: float = 500.0
    route_max_m: float = 3000.0
    seed: int = 0

    def __post_init__(self):
        if self.communication_range_m <= 0:
            raise MobilityError("communication range must be positive")
        if self.roads_x < 2 or self.roads_y < 2:
            raise MobilityError("need at least two roads per axis")
        if self.lanes_per_road < 1:
            raise MobilityError("need at least one lane")
        if not 0 <= self.speed_min_mps <= self.speed_max_mps:
            raise MobilityError("speed bounds must satisfy 0 <= min <= max")
        if self.step_s <= 0 or self.duration_s < 0:
            raise MobilityError("step must be positive and duration non-negative")
        if not 0 < self.route_min_m <= self.route_max_m:
            raise MobilityError("route bounds must satisfy 0 < min <= max")
        if self.vehicles < 0:
            raise MobilityError("vehicle count must be non-negative")

    @property
    def xs(self) -> np.ndarray:
        m = self.area_width_m / 10
        return np.linspace(m, self.area_width_m - m, self.roads_x)

    @property
    def ys(self) -> np.ndarray:
        m = self.area_height_m / 10
        return np.linspace(m, self.area_height_m - m, self.roads_y)

    @property
    def capacity(self) -> int:
        xs, ys = self.xs, self.ys
        length = self.roads_y * (xs[-1] - xs[0]) + self.roads_x * (ys[-1] - ys[0])
        return int(length * self.lanes_per_road // SLOT_LENGTH)

    @classmethod
    def from_mapping(cls, values: Mapping[str, str | float | int], **overrides) -> "WorldConfig":
        kinds = {f.name: f.type for f in fields(cls)}
        kw = {}
        for k, v in {**values, **overrides}.items():
            if k not in kinds or v is None:
                continue
            kw[k] = int(v) if kinds[k] in ("int", int) else float(v)
        return cls(**kw)


def read_config(path) -> dict[str, str]:
    """Flat ``key = value`` file; ``#`` starts a comment."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for n, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise MobilityError(f"{path}:{n}: expected key = value")
            k, v = (t.strip() for t in line.split("=", 1))
            out[k] = v
    return out


@dataclass(frozen=True)
class TraceFrame:
    time: float
    vehicles: tuple[VehicleSnapshot, ...]

    def __post_init__(self):
        ids = [v.vehicle_id for v in self.vehicles]
        if len(set(ids)) != len(ids):
            raise MobilityError(f"duplicate vehicle ids in frame t={self.time}")

    def by_id(self) -> dict[int, VehicleSnapshot]:
        return {v.vehicle_id: v for v in self.vehicles}

    def positions(self) -> np.ndarray:
        return np.array([(v.x, v.y) for v in self.vehicles], dtype=float).reshape(-1, 2)


# --- road movement ----------------------------------------------------------------


@dataclass
class _Car:
    vid: int
    horizontal: bool  # travelling along a horizontal road
    line: int  # index of the road it is on
    u: float  # coordinate along the road axis
    d: int  # +1 / -1
    lane_off: float
    speed: float
    remaining: float


class _Roads:
    def __init__(self, cfg: WorldConfig):
        self.xs = cfg.xs
        self.ys = cfg.ys

    def along(self, car: _Car) -> np.ndarray:
        # grid coordinates crossed along the car's axis
        return self.xs if car.horizontal else self.ys

    def position(self, car: _Car) -> tuple[float, float]:
        if car.horizontal:
            return float(car.u), float(self.ys[car.line] + car.lane_off)
        return float(self.xs[car.line] + car.lane_off), float(car.u)

    def road_id(self, car: _Car) -> str:
        g = self.along(car)
        k = int(np.clip(np.searchsorted(g, car.u, side="right") - 1, 0, len(g) - 2))
        if car.d < 0 and k > 0 and math.isclose(car.u, g[k]):
            k -= 1
        return f"{'H' if car.horizontal else 'V'}{car.line}:{k}"

    def advance(self, car: _Car, dist: float, rng: np.random.Generator) -> None:
        eps = 1e-9
        while dist > eps:
            g = self.along(car)
            idx = np.searchsorted(g, car.u + car.d * eps, side="right" if car.d > 0 else "left")
            idx = idx if car.d > 0 else idx - 1
            nxt = g[min(max(idx, 0), len(g) - 1)]
            gap = abs(nxt - car.u)
            if gap > dist:
                car.u += car.d * dist
                return
            car.u = float(nxt)
            dist -= gap
            self._turn(car, int(np.flatnonzero(np.isclose(g, nxt))[0]), rng)

    def _turn(self, car: _Car, at: int, rng: np.random.Generator) -> None:
        g = self.along(car)
        cross = self.ys if car.horizontal else self.xs
        options = []
        if 0 <= at + car.d < len(g):
            options.append("straight")
        options += [s for s in ("left", "right") if 0 <= car.line + (1 if s == "left" else -1) < len(cross)]
        choice = options[rng.integers(len(options))] if options else "back"
        if choice == "straight":
            return
        if choice == "back":
            car.d = -car.d
            return
        # switch axes: the intersection becomes the position on the crossing road
        new_d = 1 if choice == "left" else -1
        car.u, car.line = float(cross[car.line]), at
        car.horizontal = not car.horizontal
        car.d = new_d


def generate_world(cfg: WorldConfig) -> list[TraceFrame]:
    """Frames at ``t = 0, dt, ..., duration`` for ``cfg.vehicles`` cars."""
    if cfg.vehicles > cfg.capacity:
        raise MobilityError(f"{cfg.vehicles} vehicles exceed road capacity {cfg.capacity}")
    rng = np.random.default_rng(cfg.seed)
    roads = _Roads(cfg)
    lanes = cfg.lanes_per_road
    offsets = [(i - (lanes - 1) / 2) * LANE_WIDTH for i in range(lanes)]
    cars = []
    for vid in range(cfg.vehicles):
        horizontal = bool(rng.integers(2))
        line = int(rng.integers(cfg.roads_y if horizontal else cfg.roads_x))
        g = roads.xs if horizontal else roads.ys
        cars.append(_Car(
            vid, horizontal, line, float(rng.uniform(g[0], g[-1])), int(rng.choice((-1, 1))),
            offsets[int(rng.integers(lanes))],
            float(rng.uniform(cfg.speed_min_mps, cfg.speed_max_mps)),
            float(rng.uniform(cfg.route_min_m, cfg.route_max_m)),
        ))
    steps = int(round(cfg.duration_s / cfg.step_s))
    frames = []
    for n in range(steps + 1):
        t = round(n * cfg.step_s, 9)
        snaps = []
        for c in cars:
            x, y = roads.position(c)
            snaps.append(VehicleSnapshot(c.vid, x, y, c.speed, c.remaining, roads.road_id(c)))
        frames.append(TraceFrame(t, tuple(snaps)))
        if n == steps:
            break
        for c in cars:
            dist = c.speed * cfg.step_s
            roads.advance(c, dist, rng)
            c.remaining -= dist
            if c.remaining <= 0:
                c.remaining = float(rng.uniform(cfg.route_min_m, cfg.route_max_m))
            jitter = rng.normal(0.0, cfg.speed_jitter_mps) if cfg.speed_jitter_mps > 0 else 0.0
            c.speed = float(np.clip(c.speed + jitter, cfg.speed_min_mps, cfg.speed_max_mps))
    return frames


# --- trace files ----------------------------------------------------------------


def write_trace(frames: Iterable[TraceFrame], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(TRACE_COLUMNS)
        for f in frames:
            for v in f.vehicles:
                w.writerow([repr(float(f.time)), v.vehicle_id, repr(float(v.x)), repr(float(v.y)),
                            repr(float(v.speed)), repr(float(v.remaining)), v.road_id])


def load_trace(path) -> list[TraceFrame]:
    """Parse a snapshot CSV into frames grouped by ``time_s``."""
    frames: list[TraceFrame] = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in TRACE_COLUMNS if c not in header]
        if missing:
            raise TraceFormatError(f"{path}: missing columns {missing}")
        cur_t, cur = None, []
        for row in reader:
            line = reader.line_num
            try:
                t = float(row["time_s"])
                snap = VehicleSnapshot(
                    int(row["vehicle_id"]), float(row["x_m"]), float(row["y_m"]),
                    float(row["speed_mps"]), float(row["remaining_m"]), row["road_id"] or "",
                )
            except (TypeError, ValueError) as exc:
                raise TraceFormatError(f"{path}:{line}: {exc}") from None
            if cur_t is not None and t != cur_t:
                if t < cur_t:
                    raise TraceFormatError(f"{path}:{line}: time {t} goes backwards from {cur_t}")
                frames.append(_frame(cur_t, cur, path, line))
                cur = []
            cur_t = t
            cur.append(snap)
        if cur_t is not None:
            frames.append(_frame(cur_t, cur, path, reader.line_num))
    return frames


def _frame(t, snaps, path, line) -> TraceFrame:
    try:
        return TraceFrame(t, tuple(snaps))
    except MobilityError as exc:
        raise TraceFormatError(f"{path}:{line}: {exc}") from None


# --- queries ----------------------------------------------------------------------


def neighbors(frame: TraceFrame, vehicle_id: int, S: float) -> tuple[int, list[tuple[int, float]]]:
    """Count and ``(id, distance)`` list of vehicles within ``S`` of one vehicle."""
    me = frame.by_id().get(vehicle_id)
    if me is None:
        raise MobilityError(f"vehicle {vehicle_id} not in frame t={frame.time}")
    out = []
    for v in frame.vehicles:
        if v.vehicle_id == vehicle_id:
            continue
        d = math.hypot(v.x - me.x, v.y - me.y)
        if d <= S:
            out.append((v.vehicle_id, d))
    out.sort(key=lambda t: (t[1], t[0]))
    return len(out), out


def neighbor_count_array(frame: TraceFrame, S: float) -> np.ndarray:
    """Neighbour counts for every vehicle in frame order (spatial-grid kernel)."""
    return neighbor_counts(frame.positions(), S)


__all__ = [
    "MobilityError", "TRACE_COLUMNS", "TraceFormatError", "TraceFrame", "WorldConfig",
    "generate_world", "load_trace", "neighbor_count_array", "neighbors", "read_config",
    "write_trace",
]
