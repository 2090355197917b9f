"""Event-probability schedules over the grid and replayable event traces.

Probabilities are handled internally as integer multiples of 0.05 so that
pattern construction is exact; they are converted to floats only when a
:class:`StateSequence` is materialized.
"""
from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .geometry import GridSpec, Waypoint

UNIT = 0.05  # resolution of every probability produced here
LOW = 4  # 0.2
HIGH = 16  # 0.8
RATE_STEP = {"fast": 2, "slow": 1}
DEFAULT_CYCLES = {"A": 2, "B": 4}

MASK64 = (1 << 64) - 1


class SplitMix64:
    """SplitMix64 generator (Steele, Lea & Flood; the seeding generator of xoshiro).

    Reference: seed 0 yields 0xE220A8397B1DCDAF, 0x6E789E6AA1B965F4, 0x06C45D188009454F.
    """

    def __init__(self, seed: int):
        self.state = seed & MASK64

    def next_u64(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
        return z ^ (z >> 31)

    def random(self) -> float:
        """Uniform double in [0, 1) from the top 53 bits."""
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))


def ring_index(wp: Waypoint, grid: GridSpec) -> int:
    """Chebyshev ring of ``wp`` around the grid center (0 = center)."""
    r, c = grid.cell_of(wp.x, wp.y)
    return ring_of_cell(r, c, grid)


def ring_of_cell(r: int, c: int, grid: GridSpec) -> int:
    dr = abs(2 * r - (grid.rows - 1))
    dc = abs(2 * c - (grid.cols - 1))
    return max(dr, dc) // 2


def n_rings(grid: GridSpec) -> int:
    return ring_of_cell(0, 0, grid) + 1


@dataclass
class StateSequence:
    """Per-mission event probabilities; ``probs[m, k]`` is for the k-th point in visiting order."""

    probs: np.ndarray
    pattern: str
    rate: str
    cycles: int
    grid: GridSpec
    rings: np.ndarray = field(repr=False)

    @property
    def n_states(self) -> int:
        return self.probs.shape[0]

    @property
    def n_points(self) -> int:
        return self.probs.shape[1]

    def describe(self) -> dict:
        return {
            "pattern": self.pattern,
            "rate": self.rate,
            "cycles": self.cycles,
            "grid": self.grid.to_dict(),
            "rings": self.rings.tolist(),
            "states": [[round(float(p), 4) for p in row] for row in self.probs],
        }

    @property
    def sequence_id(self) -> str:
        """Digest binding traces to this exact sequence."""
        blob = json.dumps(self.describe(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def to_json(self, path: str | os.PathLike) -> None:
        Path(path).write_text(json.dumps(self.describe(), indent=1))


def _ramp(t: int, start: int, n_steps: int) -> int:
    return min(max(t - start, 0), n_steps)


def _pattern_cycle(pattern: str, R: int, step: int, stagger: int) -> list[list[int]]:
    """Ring-level states (in units of 0.05) for one StateL -> StateL cycle at the fast rate."""
    n_steps = (HIGH - LOW) // step
    span = (R - 1) * stagger + n_steps
    states = []
    if pattern == "A":
        # rise center -> periphery, fall periphery -> center
        for t in range(span + 1):
            states.append([LOW + step * _ramp(t, k * stagger, n_steps) for k in range(R)])
        for t in range(1, span + 1):
            states.append([HIGH - step * _ramp(t, (R - 1 - k) * stagger, n_steps) for k in range(R)])
    elif pattern == "B":
        # abrupt rise center -> periphery, gradual fall center -> periphery
        for t in range(R + 1):
            states.append([HIGH if t >= k + 1 else LOW for k in range(R)])
        for t in range(1, span + 1):
            states.append([HIGH - step * _ramp(t, k * stagger, n_steps) for k in range(R)])
    else:
        raise ValueError(f"unknown pattern {pattern!r}")
    return states


def _slow_down(states: list[list[int]], step: int) -> list[list[int]]:
    """Insert a midpoint state between every pair that has a gradual (one-step) change."""
    out = [states[0]]
    for prev, cur in zip(states, states[1:]):
        if any(abs(b - a) == step for a, b in zip(prev, cur)):
            out.append([(a + b) // 2 if abs(b - a) == step else a for a, b in zip(prev, cur)])
        out.append(cur)
    return out


def build_sequence(
    pattern: str,
    rate: str,
    cycles: int | None = None,
    grid: GridSpec | None = None,
    stagger: int = 1,
) -> StateSequence:
    """Build the per-mission probability states for a pattern/rate combination."""
    pattern = pattern.upper()
    if rate not in RATE_STEP:
        raise ValueError(f"unknown rate {rate!r}; expected 'fast' or 'slow'")
    if cycles is None:
        cycles = DEFAULT_CYCLES.get(pattern, 1)
    if cycles < 1:
        raise ValueError("cycles must be >= 1")
    grid = grid or GridSpec()
    R = n_rings(grid)

    fast_step = RATE_STEP["fast"]
    cycle = _pattern_cycle(pattern, R, fast_step, stagger)
    if rate == "slow":
        cycle = _slow_down(cycle, fast_step)

    ring_states = list(cycle)
    for _ in range(cycles - 1):
        ring_states.extend(cycle[1:])

    rings = np.array([ring_of_cell(r, c, grid) for r, c in grid.cells()], dtype=np.int64)
    levels = np.asarray(ring_states, dtype=np.int64)[:, rings]
    probs = np.round(levels * UNIT, 10)
    return StateSequence(probs=probs, pattern=pattern, rate=rate, cycles=cycles, grid=grid, rings=rings)


@dataclass
class EventTrace:
    events: np.ndarray  # bool, (missions, points)
    seed: int
    sequence_id: str
    pattern: str = ""
    rate: str = ""
    cycles: int = 0
    grid_dims: tuple[int, int] = (0, 0)

    @property
    def n_missions(self) -> int:
        return self.events.shape[0]

    @property
    def n_points(self) -> int:
        return self.events.shape[1]

    def checksum(self) -> str:
        h = hashlib.sha256()
        h.update(self.sequence_id.encode())
        h.update(np.packbits(self.events.astype(np.uint8), axis=None).tobytes())
        h.update(repr(self.events.shape).encode())
        return h.hexdigest()[:16]

    def __eq__(self, other):
        if not isinstance(other, EventTrace):
            return NotImplemented
        return (
            self.seed == other.seed
            and self.sequence_id == other.sequence_id
            and self.pattern == other.pattern
            and self.rate == other.rate
            and self.cycles == other.cycles
            and tuple(self.grid_dims) == tuple(other.grid_dims)
            and self.events.shape == other.events.shape
            and bool(np.array_equal(self.events, other.events))
        )


def sample_trace(seq: StateSequence, seed: int) -> EventTrace:
    """Draw event outcomes row by row, point by point, from one SplitMix64 stream."""
    rng = SplitMix64(seed)
    events = np.zeros(seq.probs.shape, dtype=bool)
    for m in range(seq.n_states):
        row = seq.probs[m]
        for k in range(seq.n_points):
            events[m, k] = rng.random() < row[k]
    return EventTrace(
        events=events,
        seed=seed & MASK64,
        sequence_id=seq.sequence_id,
        pattern=seq.pattern,
        rate=seq.rate,
        cycles=seq.cycles,
        grid_dims=(seq.grid.rows, seq.grid.cols),
    )


# ---------------------------------------------------------------- trace files

TRACE_MAGIC = "staygo-trace 1"
_HEADER_KEYS = ("pattern", "rate", "cycles", "grid", "seed", "sequence-id", "states", "points")


class TraceFormatError(ValueError):
    """Malformed trace file; ``offset`` is the byte position of the offending data."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


class TraceDimensionError(TraceFormatError):
    pass


def format_trace(trace: EventTrace) -> str:
    rows, cols = trace.grid_dims
    lines = [
        TRACE_MAGIC,
        f"pattern {trace.pattern}",
        f"rate {trace.rate}",
        f"cycles {trace.cycles}",
        f"grid {rows} {cols}",
        f"seed {trace.seed}",
        f"sequence-id {trace.sequence_id}",
        f"states {trace.n_missions}",
        f"points {trace.n_points}",
        "---",
    ]
    lines.extend("".join("1" if e else "0" for e in row) for row in trace.events)
    return "\n".join(lines) + "\n"


def save_trace(trace: EventTrace, path: str | os.PathLike) -> None:
    Path(path).write_bytes(format_trace(trace).encode("ascii"))


def parse_trace(data: bytes) -> EventTrace:
    if not data.endswith(b"\n"):
        raise TraceFormatError("file does not end with a newline (truncated?)", len(data))
    lines = []
    offset = 0
    for raw in data[:-1].split(b"\n"):
        lines.append((offset, raw))
        offset += len(raw) + 1

    it = iter(lines)

    def next_line(what: str) -> tuple[int, str]:
        try:
            off, raw = next(it)
        except StopIteration:
            raise TraceFormatError(f"unexpected end of file while reading {what}", len(data)) from None
        try:
            return off, raw.decode("ascii")
        except UnicodeDecodeError:
            raise TraceFormatError(f"non-ASCII bytes in {what}", off) from None

    off, magic = next_line("magic line")
    if magic != TRACE_MAGIC:
        raise TraceFormatError(f"bad magic line {magic!r}", off)

    header: dict[str, str] = {}
    offsets: dict[str, int] = {}
    for key in _HEADER_KEYS:
        off, line = next_line(f"header field {key!r}")
        name, _, value = line.partition(" ")
        if name != key or not value:
            raise TraceFormatError(f"expected header field {key!r}, found {line!r}", off)
        header[key] = value
        offsets[key] = off
    off, sep = next_line("header separator")
    if sep != "---":
        raise TraceFormatError(f"expected '---' separator, found {sep!r}", off)

    def as_int(key: str) -> int:
        try:
            return int(header[key])
        except ValueError:
            raise TraceFormatError(f"header field {key!r} is not an integer", offsets[key]) from None

    n_states, n_points = as_int("states"), as_int("points")
    cycles, seed = as_int("cycles"), as_int("seed")
    try:
        rows, cols = (int(v) for v in header["grid"].split())
    except ValueError:
        raise TraceFormatError("grid header must be two integers", offsets["grid"]) from None
    if n_states < 0 or n_points < 0:
        raise TraceFormatError("negative dimensions", offsets["states"])

    events = np.zeros((n_states, n_points), dtype=bool)
    m = 0
    for off, raw in it:
        if m >= n_states:
            raise TraceDimensionError(f"more than the declared {n_states} event rows", off)
        if len(raw) != n_points:
            raise TraceDimensionError(f"row {m} has {len(raw)} entries, expected {n_points}", off)
        for pos, ch in enumerate(raw):
            if ch not in b"01":
                raise TraceFormatError(f"invalid character {chr(ch)!r} in row {m}", off + pos)
        events[m] = np.frombuffer(raw, dtype=np.uint8) == ord("1")
        m += 1
    if m != n_states:
        raise TraceDimensionError(f"declared {n_states}x{n_points} but found {m} rows", len(data))

    return EventTrace(
        events=events,
        seed=seed,
        sequence_id=header["sequence-id"],
        pattern=header["pattern"],
        rate=header["rate"],
        cycles=cycles,
        grid_dims=(rows, cols),
    )


def load_trace(path: str | os.PathLike, sequence: StateSequence | None = None) -> EventTrace:
    """Read a trace file; if ``sequence`` is given, check the trace belongs to it."""
    trace = parse_trace(Path(path).read_bytes())
    if sequence is not None:
        check_trace_matches(trace, sequence)
    return trace


def check_trace_matches(trace: EventTrace, sequence: StateSequence) -> None:
    if trace.events.shape != sequence.probs.shape:
        raise TraceDimensionError(
            f"trace is {trace.events.shape[0]}x{trace.events.shape[1]} but the sequence is "
            f"{sequence.n_states}x{sequence.n_points}",
            0,
        )
    if trace.sequence_id != sequence.sequence_id:
        raise ValueError(f"trace belongs to sequence {trace.sequence_id}, not {sequence.sequence_id}")

