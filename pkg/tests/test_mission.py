import numpy as np
import pytest

from staygo.geometry import FlightModel, GridSpec, MissionPlan, TimingParams
from staygo.methods import GO, STAY, DecisionMethod, Perceptron, TwoBit
from staygo.mission import (
    ContractViolation,
    MissionRecord,
    closed_form_mission_time,
    opposite_decisions,
    run_mission,
    visit_time,
)

PARAMS = TimingParams(sense_t=1, proc_t=10, act_t=10, cruise_speed=4, takeoff_t=8, land_t=12)
ONE_POI = MissionPlan.from_coords([(0, 0), (50, 0), (100, 0)])
GRID_PLAN = MissionPlan.from_grid(GridSpec())


class Scripted(DecisionMethod):
    name = "scripted"

    def __init__(self, model, decisions):
        super().__init__(model)
        self.decisions = list(decisions)

    def decide(self, i, proc_t):
        return self.decisions[self._k(i)]


def test_visit_time_examples():
    assert visit_time(STAY, 0, 10, 10, 1, 10) == pytest.approx(11.0, abs=1e-9)
    assert visit_time(GO, 0, 10, 10, 1, 10) == pytest.approx(1.0, abs=1e-9)
    assert visit_time(GO, 1, 10, 10, 1, 10) == pytest.approx(31.0, abs=1e-9)
    assert visit_time(STAY, 1, 10, 10, 1, 10) == pytest.approx(21.0, abs=1e-9)
    with pytest.raises(ValueError):
        visit_time(2, 0, 10, 10, 1, 10)


@pytest.mark.parametrize("d,e,want", [(STAY, 0, 56.0), (GO, 0, 46.0), (GO, 1, 76.0), (STAY, 1, 66.0)])
@pytest.mark.parametrize("strict", [False, True])
def test_single_point_missions(d, e, want, strict):
    model = FlightModel(ONE_POI, PARAMS)
    rec = run_mission(ONE_POI, Scripted(model, [d]), [e], model, strict_formula=strict)
    assert rec.mission_time == pytest.approx(want, abs=1e-9)
    assert closed_form_mission_time(model, [d], [e]) == pytest.approx(want, abs=1e-9)


def test_timeline_matches_closed_form_on_grid():
    model = FlightModel(GRID_PLAN, PARAMS)
    rng = np.random.default_rng(2024)
    for _ in range(200):
        d = rng.integers(0, 2, 81).tolist()
        e = rng.integers(0, 2, 81).tolist()
        rec = run_mission(GRID_PLAN, Scripted(model, d), e, model)
        assert abs(rec.mission_time - closed_form_mission_time(model, d, e)) <= 1e-9
        assert min(rec.visit_times) >= PARAMS.sense_t - 1e-9
        for v, di, ei in zip(rec.visit_times, d, e):
            if di == GO and ei == 0:
                assert v == pytest.approx(PARAMS.sense_t, abs=1e-9)


def test_hover_when_result_is_late():
    # 50 m legs at 4 m/s take 12.5 s; a 20 s computation outlasts the leg
    params = TimingParams(proc_t=20, act_t=10)
    model = FlightModel(ONE_POI, params)
    timeline = run_mission(ONE_POI, Scripted(model, [GO]), [0], model)
    formula = run_mission(ONE_POI, Scripted(model, [GO]), [0], model, strict_formula=True)
    assert timeline.mission_time > formula.mission_time
    # hovering at the next waypoint until the result arrives
    assert timeline.mission_time == pytest.approx(8 + 12.5 + 1 + 20 + 12, abs=1e-9)


def test_all_stay_time_is_method_independent():
    model = FlightModel(GRID_PLAN, PARAMS)
    e = np.random.default_rng(1).integers(0, 2, 81).tolist()
    a = run_mission(GRID_PLAN, Scripted(model, [STAY] * 81), e, model)
    b = run_mission(GRID_PLAN, TwoBit(model), e, model)  # first mission: stay everywhere
    c = run_mission(GRID_PLAN, Perceptron(model), e, model)
    assert a.mission_time == b.mission_time == c.mission_time


def test_replay_is_byte_identical():
    model = FlightModel(GRID_PLAN, PARAMS)
    rng = np.random.default_rng(7)
    rows = rng.integers(0, 2, (4, 81))
    outs = []
    for _ in range(2):
        p = Perceptron(model)
        outs.append([run_mission(GRID_PLAN, p, r, model, m).to_json() for m, r in enumerate(rows)])
    assert outs[0] == outs[1]


def test_record_json_round_trip():
    model = FlightModel(ONE_POI, PARAMS)
    rec = run_mission(ONE_POI, Scripted(model, [GO]), [1], model, 3)
    back = MissionRecord.from_json(rec.to_json())
    assert back == rec
    assert rec.timestamps[0]["arrival"] == pytest.approx(20.5)
    assert rec.timestamps[0]["result"] == pytest.approx(31.5)


def test_opposite_decisions():
    model = FlightModel(GRID_PLAN, PARAMS)
    e = [0] * 81
    base = run_mission(GRID_PLAN, Scripted(model, [STAY] * 81), e, model)
    inv = run_mission(GRID_PLAN, Scripted(model, [GO] * 81), e, model)
    three = [STAY] * 81
    for k in (0, 40, 80):
        three[k] = GO
    part = run_mission(GRID_PLAN, Scripted(model, three), e, model)
    assert opposite_decisions(base, base) == 0
    assert opposite_decisions(inv, base) == 81
    assert opposite_decisions(part, base) == 3
    other = FlightModel(ONE_POI, PARAMS)
    small = run_mission(ONE_POI, Scripted(other, [GO]), [0], other)
    with pytest.raises(ValueError):
        opposite_decisions(small, base)
    later = run_mission(GRID_PLAN, Scripted(model, [STAY] * 81), e, model, mission_index=1)
    with pytest.raises(ValueError):
        opposite_decisions(later, base)


class BadAnswer(Scripted):
    def decide(self, i, proc_t):
        return 7


class RefusesFeedback(Scripted):
    """Raises from inside feedback."""

    def feedback(self, i, d, e):
        raise ContractViolation("feedback refused")


def test_contract_violations():
    model = FlightModel(ONE_POI, PARAMS)
    with pytest.raises(ContractViolation, match="expected 0 or 1"):
        run_mission(ONE_POI, BadAnswer(model, [GO]), [0], model)
    with pytest.raises(ContractViolation):
        run_mission(ONE_POI, RefusesFeedback(model, [GO]), [0], model)


def test_guard_rejects_out_of_order_calls():
    from staygo.mission import LifecycleGuard

    model = FlightModel(GRID_PLAN, PARAMS)
    g = LifecycleGuard(Scripted(model, [STAY] * 81), GRID_PLAN)
    with pytest.raises(ContractViolation):
        g.decide(2, 10)
    g.mission_begin()
    with pytest.raises(ContractViolation):
        g.decide(3, 10)
    g.decide(2, 10)
    with pytest.raises(ContractViolation):
        g.decide(2, 10)
    with pytest.raises(ContractViolation):
        g.mission_end()


def test_event_row_length_checked():
    model = FlightModel(GRID_PLAN, PARAMS)
    with pytest.raises(ValueError):
        run_mission(GRID_PLAN, Scripted(model, [STAY] * 81), [0] * 80, model)
