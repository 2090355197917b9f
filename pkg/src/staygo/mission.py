"""Mission execution: the drone control loop played out on a simulated clock."""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Sequence

from .geometry import FlightModel, MissionPlan, TimingParams
from .methods import GO, STAY, DecisionMethod


class ContractViolation(RuntimeError):
    """A decision method was driven, or answered, outside its lifecycle contract."""


def visit_time(d: int, e: int, proc_t: float, act_t: float, sense_t: float, ret_t: float) -> float:
    """Time attributed to one point of interest on top of the flight legs."""
    if d == STAY:
        return sense_t + proc_t + e * act_t
    if d == GO:
        return sense_t + e * (proc_t + ret_t + act_t)
    raise ValueError(f"decision must be 0 (stay) or 1 (go), got {d!r}")


def closed_form_mission_time(model: FlightModel, decisions: Sequence[int], events: Sequence[int]) -> float:
    """Sum of all leg times plus all visit times for given decision/event vectors."""
    plan, p = model.plan, model.params
    if len(decisions) != plan.n_poi or len(events) != plan.n_poi:
        raise ValueError("decision and event vectors must cover every point of interest")
    legs = sum(model.fly_time(i, i + 1) for i in range(1, plan.n))
    visits = sum(
        visit_time(d, e, p.proc_t, p.act_t, p.sense_t, model.return_time(i, p.proc_t))
        for i, d, e in zip(plan.poi_indices, decisions, events)
    )
    return legs + visits


def plan_digest(plan: MissionPlan) -> str:
    return hashlib.sha256(json.dumps(plan.to_dict()).encode()).hexdigest()[:16]


@dataclass
class MissionRecord:
    mission_index: int
    decisions: list[int]
    events: list[int]
    visit_times: list[float]
    mission_time: float
    plan_id: str = ""
    # per point: arrival, sensed, result, departure (absent in strict-formula mode)
    timestamps: list[dict] = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(
            {
                "mission_index": self.mission_index,
                "plan_id": self.plan_id,
                "decisions": self.decisions,
                "events": self.events,
                "visit_times": self.visit_times,
                "mission_time": self.mission_time,
                "timestamps": self.timestamps,
            },
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> "MissionRecord":
        d = json.loads(text)
        return cls(
            mission_index=d["mission_index"],
            decisions=list(d["decisions"]),
            events=list(d["events"]),
            visit_times=list(d["visit_times"]),
            mission_time=d["mission_time"],
            plan_id=d.get("plan_id", ""),
            timestamps=list(d.get("timestamps", [])),
        )


def opposite_decisions(record: MissionRecord, reference: MissionRecord) -> int:
    if record.plan_id != reference.plan_id or len(record.decisions) != len(reference.decisions):
        raise ValueError("records do not cover the same mission plan")
    if record.mission_index != reference.mission_index:
        raise ValueError("records are for different missions")
    return sum(a != b for a, b in zip(record.decisions, reference.decisions))


class LifecycleGuard:
    """Forwards calls to a method while enforcing the begin/decide/feedback/end order."""

    def __init__(self, method: DecisionMethod, plan: MissionPlan):
        self.method = method
        self.plan = plan
        self._phase = "idle"
        self._next = 2

    def _fail(self, msg: str):
        raise ContractViolation(f"{self.method.name}: {msg}")

    def mission_begin(self):
        if self._phase != "idle":
            self._fail(f"mission_begin called during phase {self._phase!r}")
        self.method.mission_begin(self.plan)
        self._phase, self._next = "decide", 2

    def decide(self, i: int, proc_t: float) -> int:
        if self._phase != "decide" or i != self._next:
            self._fail(f"decide({i}) out of order (expected phase 'decide' for point {self._next}, in {self._phase!r})")
        d = self.method.decide(i, proc_t)
        if d not in (STAY, GO):
            self._fail(f"decide({i}) returned {d!r}, expected 0 or 1")
        self._phase = "feedback"
        return int(d)

    def feedback(self, i: int, d: int, e: int):
        if self._phase != "feedback" or i != self._next:
            self._fail(f"feedback({i}) out of order")
        self.method.feedback(i, d, e)
        self._next += 1
        self._phase = "decide" if self._next <= self.plan.n - 1 else "end"

    def mission_end(self):
        if self._phase != "end":
            self._fail(f"mission_end called during phase {self._phase!r}")
        self.method.mission_end()
        self._phase = "idle"


class Autopilot:
    """Straight-line motion at cruise speed; the clock is owned by the caller."""

    def __init__(self, params: TimingParams, x: float, y: float):
        self.v = params.cruise_speed
        self.x0, self.y0 = x, y
        self.tx, self.ty = x, y
        self.t0 = 0.0
        self.t_arrive = 0.0

    def position(self, t: float) -> tuple[float, float]:
        span = self.t_arrive - self.t0
        if t >= self.t_arrive or span <= 0:
            return self.tx, self.ty
        f = (t - self.t0) / span
        return self.x0 + (self.tx - self.x0) * f, self.y0 + (self.ty - self.y0) * f

    def goto(self, x: float, y: float, now: float, extra: float = 0.0) -> None:
        cx, cy = self.position(now)
        self.x0, self.y0, self.tx, self.ty = cx, cy, x, y
        self.t0 = now
        self.t_arrive = now + extra + math.hypot(x - cx, y - cy) / self.v

    def wait_to_arrive(self, now: float) -> float:
        return max(now, self.t_arrive)


def run_mission(
    plan: MissionPlan,
    method: DecisionMethod,
    events: Sequence[int],
    model: FlightModel,
    mission_index: int = 0,
    strict_formula: bool = False,
) -> MissionRecord:
    """Fly one mission, asking ``method`` for a stay/go decision at each point of interest.

    ``events[k]`` is the outcome of the computation at the k-th point of
    interest (waypoint ``k + 2``).
    """
    if len(events) != plan.n_poi:
        raise ValueError(f"event row has {len(events)} entries, plan has {plan.n_poi} points of interest")
    if model.plan != plan:
        raise ValueError("flight model belongs to a different plan")
    p = model.params
    guard = LifecycleGuard(method, plan)
    events = [int(bool(e)) for e in events]
    decisions: list[int] = []

    if strict_formula:
        guard.mission_begin()
        for i, e in zip(plan.poi_indices, events):
            d = guard.decide(i, p.proc_t)
            guard.feedback(i, d, e)
            decisions.append(d)
        guard.mission_end()
        visits = [
            visit_time(d, e, p.proc_t, p.act_t, p.sense_t, model.return_time(i, p.proc_t))
            for i, d, e in zip(plan.poi_indices, decisions, events)
        ]
        total = closed_form_mission_time(model, decisions, events)
        return MissionRecord(mission_index, decisions, events, visits, total, plan_digest(plan))

    home = plan[1]
    ap = Autopilot(p, home.x, home.y)
    stamps: list[dict] = []
    arrivals: list[float] = []

    guard.mission_begin()
    clock = p.takeoff_t
    ap.goto(plan[2].x, plan[2].y, clock)
    for i, e in zip(plan.poi_indices, events):
        here, nxt = plan[i], plan[i + 1]
        clock = ap.wait_to_arrive(clock)
        arrival = clock
        clock += p.sense_t
        sensed = clock
        result_at = sensed + p.proc_t
        d = guard.decide(i, p.proc_t)
        departure = None
        if d == GO:
            ap.goto(nxt.x, nxt.y, clock)
            departure = clock
        clock = max(clock, result_at)
        guard.feedback(i, d, e)
        if e:
            if d == GO:
                ap.goto(here.x, here.y, clock, extra=p.turnaround_t)
                clock = ap.wait_to_arrive(clock)
            clock += p.act_t
        if d == STAY or e:
            ap.goto(nxt.x, nxt.y, clock)
            departure = clock
        decisions.append(d)
        arrivals.append(arrival)
        stamps.append({"arrival": arrival, "sensed": sensed, "result": result_at, "departure": departure})
    clock = ap.wait_to_arrive(clock)
    clock += p.land_t
    guard.mission_end()

    ends = arrivals[1:] + [clock]
    visits = [end - start - model.fly_time(i, i + 1) for i, start, end in zip(plan.poi_indices, arrivals, ends)]
    return MissionRecord(mission_index, decisions, events, visits, clock, plan_digest(plan), stamps)
