"""Stay-or-go decision methods for data-driven drone missions, with a replay benchmark harness."""
from .geometry import FlightModel, GridSpec, MissionPlan, TimingParams, Waypoint, distance
from .methods import GO, STAY, Knowledgeable, Perceptron, Regression, TwoBit, knowledgeable_decide

__version__ = "0.1.0"
