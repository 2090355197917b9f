"""Stay-or-go decision methods.

Every method follows the same lifecycle, driven by the mission program:
``mission_begin(plan)`` once, then for each point of interest in visiting
order ``decide(i, proc_t)`` followed by ``feedback(i, decision, event)``,
and finally ``mission_end()``. Point indices are waypoint indices
(``2 .. N-1``).
"""
from __future__ import annotations

import json
import os
from collections import deque
from pathlib import Path
from typing import Sequence

import numpy as np

from .geometry import FlightModel, MissionPlan, distance

STAY = 0
GO = 1

STATE_FORMAT = "staygo-method-state"
STATE_VERSION = 1


def knowledgeable_decide(p: float, proc_t: float, ret_t: float) -> int:
    """Stay iff the expected loss of going is at least the expected loss of staying."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"probability {p} outside [0, 1]")
    return STAY if p * ret_t >= (1.0 - p) * proc_t else GO


class DecisionMethod:
    name = "base"

    def __init__(self, model: FlightModel):
        self.model = model
        self.ret_t = model.return_times()
        self.mission = -1  # index of the current (or last) mission, 0-based

    def _k(self, i: int) -> int:
        if not 2 <= i <= self.model.plan.n - 1:
            raise ValueError(f"{i} is not a point of interest (2..{self.model.plan.n - 1})")
        return i - 2

    def mission_begin(self, plan: MissionPlan) -> None:
        if plan != self.model.plan:
            raise ValueError("method was configured for a different mission plan")
        self.mission += 1

    def decide(self, i: int, proc_t: float) -> int:
        raise NotImplementedError

    def feedback(self, i: int, decision: int, event: int) -> None:
        pass

    def mission_end(self) -> None:
        pass

    # persistence -------------------------------------------------------
    def params(self) -> dict:
        return {}

    def state_dict(self) -> dict:
        return {"mission": self.mission}

    def load_state_dict(self, state: dict) -> None:
        self.mission = int(state["mission"])


class Knowledgeable(DecisionMethod):
    """Reference policy that reads the true event probability of the current mission."""

    name = "knowledgeable"

    def __init__(self, model: FlightModel, probabilities: np.ndarray):
        super().__init__(model)
        self._probs = np.asarray(probabilities, dtype=float)
        if self._probs.ndim != 2 or self._probs.shape[1] != model.plan.n_poi:
            raise ValueError("probabilities must be (missions, points of interest)")

    @property
    def current(self) -> np.ndarray:
        return self._probs[self.mission]

    def decide(self, i, proc_t):
        k = self._k(i)
        ret_t = self.model.return_time(i, proc_t)
        return knowledgeable_decide(float(self._probs[self.mission, k]), proc_t, ret_t)


class TwoBit(DecisionMethod):
    """One 2-bit saturating counter per point; the high bit predicts go."""

    name = "twobit"

    def __init__(self, model: FlightModel, initial: int = 0b01):
        super().__init__(model)
        if not 0 <= initial <= 3:
            raise ValueError("counter value must be in 0..3")
        self.initial = initial
        self.counters = [initial] * model.plan.n_poi

    def decide(self, i, proc_t=None):
        return GO if self.counters[self._k(i)] & 0b10 else STAY

    def feedback(self, i, decision, event):
        k = self._k(i)
        self.counters[k] = twobit_next(self.counters[k], event)

    def params(self):
        return {"initial": self.initial}

    def state_dict(self):
        return {**super().state_dict(), "counters": list(self.counters)}

    def load_state_dict(self, state):
        super().load_state_dict(state)
        self.counters = [int(c) for c in state["counters"]]


def twobit_next(counter: int, event: int) -> int:
    """No event pushes toward go (up), an event toward stay (down)."""
    return max(counter - 1, 0) if event else min(counter + 1, 3)


class Regression(DecisionMethod):
    """Linear trend of past outcomes with a memory reset on repeated surprises.

    The probability estimate is a least-squares line through the remembered
    outcomes (0/1, against mission index), evaluated at the current mission and
    clamped to [0, 1]. Memory is unbounded unless ``window`` is given. When the
    last ``anomaly_k`` outcomes all contradict the decision the estimate
    implied, the point's memory is wiped.
    """

    name = "regression"

    def __init__(self, model: FlightModel, window: int | None = None, anomaly_k: int = 3):
        super().__init__(model)
        if (window is not None and window < 1) or anomaly_k < 1:
            raise ValueError("window and anomaly_k must be positive")
        self.window = window
        self.anomaly_k = anomaly_k
        self.history: list[deque] = [deque(maxlen=window) for _ in range(model.plan.n_poi)]
        self._implied: list[int | None] = [None] * model.plan.n_poi

    def estimate(self, i: int, mission: int | None = None) -> float | None:
        """Current probability estimate for point ``i``; ``None`` with no memory."""
        hist = self.history[self._k(i)]
        if not hist:
            return None
        m = self.mission if mission is None else mission
        return regression_estimate([h[0] for h in hist], [h[1] for h in hist], m)

    def decide(self, i, proc_t):
        k = self._k(i)
        p = self.estimate(i)
        if p is None:
            d = STAY
        else:
            d = knowledgeable_decide(p, proc_t, self.model.return_time(i, proc_t))
        self._implied[k] = d
        return d

    def feedback(self, i, decision, event):
        k = self._k(i)
        implied = self._implied[k]
        hist = self.history[k]
        hist.append((self.mission, int(event)))
        if implied is None or len(hist) < self.anomaly_k:
            return
        # a stay is contradicted by a quiet point, a go by an event
        wrong = 0 if implied == STAY else 1
        if all(h[1] == wrong for h in list(hist)[-self.anomaly_k:]):
            self.reset(i)

    def reset(self, i: int) -> None:
        self.history[self._k(i)].clear()

    def params(self):
        return {"window": self.window, "anomaly_k": self.anomaly_k}

    def state_dict(self):
        return {**super().state_dict(), "history": [[list(h) for h in hist] for hist in self.history]}

    def load_state_dict(self, state):
        super().load_state_dict(state)
        self.history = [deque((tuple(h) for h in hist), maxlen=self.window) for hist in state["history"]]


def regression_estimate(missions: Sequence[int], outcomes: Sequence[int], at: int) -> float:
    x = np.asarray(missions, dtype=float)
    y = np.asarray(outcomes, dtype=float)
    if len(x) == 1 or np.ptp(x) == 0:
        p = float(y.mean())
    else:
        xm, ym = x.mean(), y.mean()
        slope = float(np.dot(x - xm, y - ym) / np.dot(x - xm, x - xm))
        p = float(ym + slope * (at - xm))
    return min(max(p, 0.0), 1.0)


def perceptron_output(
    histories: Sequence[Sequence[int]],
    weights: np.ndarray,
    bias: float,
    proc_t: float,
    ret_t: float,
) -> float:
    """Weighted vote of neighbor outcomes.

    ``histories[j][h]`` is +1 (event) or -1 (no event) for the ``h+1``-th most
    recent mission at neighbor ``j``; missing slots count as 0. Outcomes that
    argue for going are scaled by ``proc_t`` and those that argue for staying
    by ``ret_t``.
    """
    H = weights.shape[1]
    x = np.zeros(weights.shape)
    for j, hist in enumerate(histories):
        n = min(len(hist), H)
        x[j, :n] = hist[:n]
    q = np.where(x < 0, proc_t, ret_t)
    return float(bias + np.sum(x * q * weights))


class Perceptron(DecisionMethod):
    """Per-point perceptron over the recent outcomes of nearby points."""

    name = "perceptron"

    def __init__(
        self,
        model: FlightModel,
        bias: float = 0.001,
        radius: float = 150.0,
        history: int = 2,
        learning_rate: float = 0.1,
        multi_pass: bool = False,
    ):
        super().__init__(model)
        self.bias = bias
        self.radius = radius
        self.H = history
        self.eta = learning_rate
        self.multi_pass = multi_pass
        plan = model.plan
        pois = [plan[i] for i in plan.poi_indices]
        self.neighbors = [
            [j for j, b in enumerate(pois) if distance(a, b) < radius] for a in pois
        ]
        # multi-pass training compares older pairs, so keep more history around
        self.keep = 2 * self.H - 1 if multi_pass else self.H
        self.outcomes: list[list[int]] = [[] for _ in pois]
        self.weights = [np.ones((len(nb), self.H)) for nb in self.neighbors]
        self._pending: dict[int, int] = {}

    def retrain(self) -> None:
        for k, nb in enumerate(self.neighbors):
            w = np.ones((len(nb), self.H))
            own = self.outcomes[k]
            passes = self.H if self.multi_pass else 1
            for lag in range(passes):
                if len(own) <= lag:
                    break
                ref = own[lag]
                for jj, j in enumerate(nb):
                    hist = self.outcomes[j]
                    for h in range(self.H):
                        if h + lag < len(hist):
                            w[jj, h] += self.eta if hist[h + lag] == ref else -self.eta
            self.weights[k] = w

    def mission_begin(self, plan):
        super().mission_begin(plan)
        self._pending = {}
        self.retrain()

    def output(self, i: int, proc_t: float) -> float:
        k = self._k(i)
        hists = [self.outcomes[j][: self.H] for j in self.neighbors[k]]
        return perceptron_output(hists, self.weights[k], self.bias, proc_t, self.model.return_time(i, proc_t))

    def decide(self, i, proc_t):
        return STAY if self.output(i, proc_t) > 0 else GO

    def feedback(self, i, decision, event):
        self._pending[self._k(i)] = 1 if event else -1

    def mission_end(self):
        for k, x in self._pending.items():
            self.outcomes[k].insert(0, x)
            del self.outcomes[k][self.keep:]
        self._pending = {}

    def params(self):
        return {
            "bias": self.bias,
            "radius": self.radius,
            "history": self.H,
            "learning_rate": self.eta,
            "multi_pass": self.multi_pass,
        }

    def state_dict(self):
        return {
            **super().state_dict(),
            "outcomes": [list(o) for o in self.outcomes],
            "weights": [w.tolist() for w in self.weights],
        }

    def load_state_dict(self, state):
        super().load_state_dict(state)
        self.outcomes = [[int(x) for x in o] for o in state["outcomes"]]
        self.weights = [np.asarray(w, dtype=float).reshape(len(nb), self.H) for w, nb in zip(state["weights"], self.neighbors)]


def save_method_state(method: DecisionMethod, path: str | os.PathLike) -> None:
    doc = {
        "format": STATE_FORMAT,
        "version": STATE_VERSION,
        "method": method.name,
        "params": method.params(),
        "state": method.state_dict(),
    }
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True))


def load_method_state(method: DecisionMethod, path: str | os.PathLike) -> DecisionMethod:
    """Restore ``method`` in place from a file written by :func:`save_method_state`."""
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != STATE_FORMAT:
        raise ValueError(f"{path} is not a method state file")
    if doc.get("version") != STATE_VERSION:
        raise ValueError(f"unsupported state version {doc.get('version')}")
    if doc.get("method") != method.name:
        raise ValueError(f"state is for method {doc.get('method')!r}, not {method.name!r}")
    if doc.get("params") != method.params():
        raise ValueError("state was saved with different method parameters")
    method.load_state_dict(doc["state"])
    return method
