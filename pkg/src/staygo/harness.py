"""Scenario runs, per-mission metrics and their summaries."""
from __future__ import annotations

import csv
import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from statistics import median
from typing import Callable, Iterable

import numpy as np

from .events import (
    DEFAULT_CYCLES,
    EventTrace,
    StateSequence,
    build_sequence,
    check_trace_matches,
    load_trace,
    sample_trace,
    save_trace,
)
from .geometry import FlightModel, GridSpec, MissionPlan, TimingParams
from .methods import DecisionMethod, Knowledgeable, Perceptron, Regression, TwoBit
from .mission import opposite_decisions, run_mission
from .rl.agent import DQNMethod, TrainSchedule

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
REFERENCE = "knowledgeable"
QUANTILE_NOTE = "quantiles: linear interpolation between closest ranks"


class ScenarioError(ValueError):
    """Invalid scenario configuration."""


@dataclass
class MethodSpec:
    name: str
    params: dict = field(default_factory=dict)


@dataclass
class Scenario:
    name: str = "scenario"
    grid: GridSpec = field(default_factory=GridSpec)
    home: tuple[float, float] = (-50.0, 0.0)
    pattern: str = "A"
    rate: str = "fast"
    cycles: int | None = None
    stagger: int = 1
    timing: TimingParams = field(default_factory=TimingParams)
    methods: list[MethodSpec] = field(default_factory=lambda: [MethodSpec("perceptron")])
    seeds: list[int] = field(default_factory=lambda: [1])
    timesteps: int = 20000
    strict_formula: bool = False

    def __post_init__(self):
        self.pattern = self.pattern.upper()
        if self.pattern not in DEFAULT_CYCLES:
            raise ScenarioError(f"unknown pattern {self.pattern!r}")
        if self.rate not in ("fast", "slow"):
            raise ScenarioError(f"unknown rate {self.rate!r}")
        if self.cycles is None:
            self.cycles = DEFAULT_CYCLES[self.pattern]
        if not self.methods:
            raise ScenarioError("a scenario needs at least one method")
        if not self.seeds:
            raise ScenarioError("a scenario needs at least one seed")
        for m in self.methods:
            if m.name not in METHOD_FACTORIES:
                raise ScenarioError(f"unknown method {m.name!r}; choose from {sorted(METHOD_FACTORIES)}")
        if self.timesteps < 0:
            raise ScenarioError("timesteps must be >= 0")

    @property
    def method_names(self) -> list[str]:
        """Reference method first, then the configured ones in order."""
        names = [REFERENCE]
        names += [m.name for m in self.methods if m.name != REFERENCE]
        return names

    def method_params(self, name: str) -> dict:
        for m in self.methods:
            if m.name == name:
                return dict(m.params)
        return {}

    def plan(self) -> MissionPlan:
        return MissionPlan.from_grid(self.grid, self.home)

    def sequence(self) -> StateSequence:
        return build_sequence(self.pattern, self.rate, self.cycles, self.grid, self.stagger)

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "name": self.name,
            "grid": self.grid.to_dict(),
            "home": list(self.home),
            "pattern": self.pattern,
            "rate": self.rate,
            "cycles": self.cycles,
            "stagger": self.stagger,
            "timing": self.timing.to_dict(),
            "methods": [{"name": m.name, "params": m.params} for m in self.methods],
            "seeds": list(self.seeds),
            "timesteps": self.timesteps,
            "strict_formula": self.strict_formula,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Scenario":
        if d.get("schema_version") != SCHEMA_VERSION:
            raise ScenarioError(f"unsupported scenario schema_version {d.get('schema_version')!r}")
        known = {"schema_version", "name", "grid", "home", "pattern", "rate", "cycles", "stagger",
                 "timing", "methods", "seeds", "timesteps", "strict_formula"}
        extra = set(d) - known
        if extra:
            raise ScenarioError(f"unknown scenario fields: {sorted(extra)}")
        try:
            g = d.get("grid", {})
            origin = g.get("origin", [0.0, 0.0])
            grid = GridSpec(int(g.get("rows", 9)), int(g.get("cols", 9)), float(g.get("spacing", 50.0)),
                            float(origin[0]), float(origin[1]))
            timing = TimingParams(**d.get("timing", {}))
            methods = []
            for m in d.get("methods", ["perceptron"]):
                if isinstance(m, str):
                    methods.append(MethodSpec(m))
                else:
                    methods.append(MethodSpec(m["name"], dict(m.get("params", {}))))
            return cls(
                name=str(d.get("name", "scenario")),
                grid=grid,
                home=tuple(float(v) for v in d.get("home", (-50.0, 0.0))),
                pattern=str(d.get("pattern", "A")),
                rate=str(d.get("rate", "fast")),
                cycles=d.get("cycles"),
                stagger=int(d.get("stagger", 1)),
                timing=timing,
                methods=methods,
                seeds=[int(s) for s in d.get("seeds", [1])],
                timesteps=int(d.get("timesteps", 20000)),
                strict_formula=bool(d.get("strict_formula", False)),
            )
        except ScenarioError:
            raise
        except (TypeError, ValueError, KeyError, IndexError) as exc:
            raise ScenarioError(f"bad scenario: {exc}") from exc

    @classmethod
    def load(cls, path: str | os.PathLike) -> "Scenario":
        try:
            d = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ScenarioError(f"{path}: {exc}") from exc
        return cls.from_dict(d)


def _make_dqn(model, seq, seed, params, scenario):
    params = dict(params)
    params.setdefault("timesteps", scenario.timesteps)
    try:
        schedule = TrainSchedule(**params)
    except TypeError as exc:
        raise ScenarioError(f"bad dqn parameters: {exc}") from exc
    return DQNMethod(model, schedule, seed=seed)


def _simple(cls):
    def make(model, seq, seed, params, scenario):
        try:
            return cls(model, **params)
        except TypeError as exc:
            raise ScenarioError(f"bad {cls.name} parameters: {exc}") from exc
    return make


METHOD_FACTORIES: dict[str, Callable[..., DecisionMethod]] = {
    "knowledgeable": lambda model, seq, seed, params, scenario: Knowledgeable(model, seq.probs),
    "twobit": _simple(TwoBit),
    "regression": _simple(Regression),
    "perceptron": _simple(Perceptron),
    "dqn": _make_dqn,
}


@dataclass(frozen=True)
class ResultRow:
    scenario: str
    seed: int
    mission: int
    method: str
    mission_time: float
    opposite: int
    relative_increase: float
    trace_checksum: str


COLUMNS = ["scenario", "seed", "mission", "method", "mission_time", "opposite_decisions",
           "relative_increase", "trace_checksum"]


@dataclass
class ResultTable:
    rows: list[ResultRow] = field(default_factory=list)

    def sort(self) -> None:
        self.rows.sort(key=lambda r: (r.seed, r.mission, r.method))

    @property
    def methods(self) -> list[str]:
        return sorted({r.method for r in self.rows})

    @property
    def missions(self) -> list[int]:
        return sorted({r.mission for r in self.rows})

    def to_csv(self, path: str | os.PathLike) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(COLUMNS)
            for r in self.rows:
                w.writerow([r.scenario, r.seed, r.mission, r.method, repr(r.mission_time), r.opposite,
                            repr(r.relative_increase), r.trace_checksum])

    @classmethod
    def from_csv(cls, path: str | os.PathLike) -> "ResultTable":
        with open(path, newline="") as fh:
            rd = csv.reader(fh)
            header = next(rd, None)
            if header != COLUMNS:
                raise ValueError(f"{path}: unexpected header {header}")
            rows = [
                ResultRow(s, int(seed), int(m), meth, float(t), int(o), float(ri), ck)
                for s, seed, m, meth, t, o, ri, ck in rd
            ]
        return cls(rows)

    def seed_averaged(self) -> dict[str, dict[str, list[float]]]:
        """Per method: missions and the seed-mean of each metric, ordered by mission."""
        acc: dict[tuple[str, int], list[ResultRow]] = {}
        for r in self.rows:
            acc.setdefault((r.method, r.mission), []).append(r)
        out: dict[str, dict[str, list[float]]] = {}
        for (meth, m), rows in sorted(acc.items()):
            d = out.setdefault(meth, {"mission": [], "relative_increase": [], "opposite_decisions": [], "n": []})
            d["mission"].append(m)
            d["relative_increase"].append(float(np.mean([r.relative_increase for r in rows])))
            d["opposite_decisions"].append(float(np.mean([r.opposite for r in rows])))
            d["n"].append(len(rows))
        return out


def scenario_traces(scenario: Scenario, seq: StateSequence, trace_dir: str | os.PathLike | None) -> dict[int, EventTrace]:
    """Load each seed's trace from ``trace_dir`` if present, else sample (and store) it."""
    traces = {}
    for seed in scenario.seeds:
        path = Path(trace_dir) / trace_filename(scenario, seed) if trace_dir else None
        if path is not None and path.exists():
            trace = load_trace(path)
            check_trace_matches(trace, seq)
        else:
            trace = sample_trace(seq, seed)
            if path is not None:
                path.parent.mkdir(parents=True, exist_ok=True)
                save_trace(trace, path)
        traces[seed] = trace
    return traces


def trace_filename(scenario: Scenario, seed: int) -> str:
    return f"trace_{scenario.pattern}_{scenario.rate}_c{scenario.cycles}_seed{seed}.txt"


def run_scenario(
    scenario: Scenario,
    trace_dir: str | os.PathLike | None = None,
    record_hook: Callable | None = None,
) -> ResultTable:
    """Replay one shared event trace per seed through every method.

    ``record_hook(seed, method_name, record)`` is called for each mission record.
    """
    plan = scenario.plan()
    model = FlightModel(plan, scenario.timing)
    seq = scenario.sequence()
    if seq.n_points != plan.n_poi:
        raise ScenarioError("sequence and plan disagree on the number of points")
    traces = scenario_traces(scenario, seq, trace_dir)
    table = ResultTable()
    for seed in scenario.seeds:
        trace = traces[seed]
        checksum = trace.checksum()
        reference = None
        for name in scenario.method_names:
            method = METHOD_FACTORIES[name](model, seq, seed, scenario.method_params(name), scenario)
            log.info("scenario %s seed %d method %s", scenario.name, seed, name)
            records = []
            for m in range(trace.n_missions):
                rec = run_mission(plan, method, trace.events[m], model, m, scenario.strict_formula)
                records.append(rec)
                if record_hook is not None:
                    record_hook(seed, name, rec)
            if name == REFERENCE:
                reference = records
            for rec, ref in zip(records, reference):
                table.rows.append(ResultRow(
                    scenario.name, seed, rec.mission_index, name, rec.mission_time,
                    opposite_decisions(rec, ref),
                    (rec.mission_time - ref.mission_time) / ref.mission_time,
                    checksum,
                ))
    table.sort()
    return table


def summarize(table: ResultTable, skip_first: int = 1) -> dict[str, dict | None]:
    """Max/median of seed-averaged per-mission metrics, ignoring the first mission(s).

    A method whose missions are all excluded maps to ``None`` (no data).
    """
    if not table.rows:
        raise ValueError("cannot summarize an empty result table")
    first = min(table.missions) + skip_first
    out: dict[str, dict | None] = {}
    for meth, series in table.seed_averaged().items():
        keep = [k for k, m in enumerate(series["mission"]) if m >= first]
        if not keep:
            out[meth] = None
            continue
        out[meth] = {}
        for metric in ("relative_increase", "opposite_decisions"):
            vals = [series[metric][k] for k in keep]
            out[meth][metric] = {"max": max(vals), "median": median(vals)}
    return out


def write_summary(summary: dict, path: str | os.PathLike) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["method", "max_relative_increase", "median_relative_increase",
                    "max_opposite_decisions", "median_opposite_decisions"])
        for meth in sorted(summary):
            s = summary[meth]
            if s is None:
                w.writerow([meth, "no data", "no data", "no data", "no data"])
            else:
                ri, od = s["relative_increase"], s["opposite_decisions"]
                w.writerow([meth, repr(ri["max"]), repr(ri["median"]), repr(od["max"]), repr(od["median"])])


def box_summary(values: Iterable[float]) -> dict[str, float]:
    """Five-number box summary with Tukey (1.5 IQR) whiskers clipped to the data."""
    v = np.sort(np.asarray(list(values), dtype=float))
    if v.size == 0:
        raise ValueError("no values")
    q1, q2, q3 = np.quantile(v, [0.25, 0.5, 0.75], method="linear")
    iqr = q3 - q1
    lo = v[v >= q1 - 1.5 * iqr].min()
    hi = v[v <= q3 + 1.5 * iqr].max()
    return {"whisker_low": float(lo), "q1": float(q1), "median": float(q2), "q3": float(q3),
            "whisker_high": float(hi), "mean": float(v.mean()), "n": int(v.size)}


def emit_plot_data(table: ResultTable, out_dir: str | os.PathLike, skip_first: int = 1) -> list[Path]:
    """Write per-mission series and box summaries, one file per metric per method."""
    if not table.rows:
        raise ValueError("cannot emit plot data for an empty result table")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    first = min(table.missions) + skip_first
    averaged = table.seed_averaged()
    written = []
    for meth, series in averaged.items():
        for metric in ("relative_increase", "opposite_decisions"):
            path = out / f"series_{meth}_{metric}.csv"
            with open(path, "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["mission", f"mean_{metric}", "n_seeds"])
                for m, val, n in zip(series["mission"], series[metric], series["n"]):
                    w.writerow([m, repr(val), n])
            written.append(path)

            per_run = [getattr(r, "opposite" if metric == "opposite_decisions" else metric)
                       for r in table.rows if r.method == meth and r.mission >= first]
            by_mission = [v for m, v in zip(series["mission"], series[metric]) if m >= first]
            path = out / f"box_{meth}_{metric}.csv"
            with open(path, "w", newline="") as fh:
                fh.write(f"# {QUANTILE_NOTE}; missions before {first} excluded\n")
                w = csv.writer(fh, lineterminator="\n")
                keys = ["whisker_low", "q1", "median", "q3", "whisker_high", "mean", "n"]
                w.writerow(["aggregation"] + keys)
                for label, vals in (("seed_mean_per_mission", by_mission), ("all_runs", per_run)):
                    if vals:
                        b = box_summary(vals)
                        w.writerow([label] + [repr(b[k]) if k != "n" else b[k] for k in keys])
                    else:
                        w.writerow([label] + ["no data"] * len(keys))
            written.append(path)
    return written
