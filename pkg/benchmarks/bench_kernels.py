"""Time the compiled and pure-Python DQN kernels side by side.

    python benchmarks/bench_kernels.py [--steps 5000] [--repeat 3]
"""
import argparse
import timeit

import numpy as np

from staygo.geometry import FlightModel, GridSpec, MissionPlan
from staygo.rl import DQNAgent, TrainSchedule, agent as agent_mod, retrain_after_mission
from staygo.rl import _kernels_py

try:
    from staygo.rl import _kernels_cy
except ImportError:
    _kernels_cy = None


def bench_backend(k, steps: int, repeat: int) -> dict[str, float]:
    rng = np.random.default_rng(0)
    sizes = (81, 64, 64, 2)
    theta = rng.normal(0, 0.1, k.n_params(sizes))
    obs = rng.integers(0, 81, 32).astype(np.int32)
    act = rng.integers(0, 2, 32).astype(np.int32)
    y = rng.normal(0, 5, 32)
    grad = np.zeros_like(theta)
    m, v = np.zeros_like(theta), np.zeros_like(theta)

    out = {}
    n = 2000
    out["loss_and_grad (us)"] = min(timeit.repeat(lambda: k.loss_and_grad(theta, sizes, obs, act, y),
                                                  number=n, repeat=repeat)) / n * 1e6
    out["adam_update (us)"] = min(timeit.repeat(lambda: k.adam_update(theta, grad, m, v, 1, 1e-4, 0.9, 0.999, 1e-8),
                                                number=n, repeat=repeat)) / n * 1e6

    model = FlightModel(MissionPlan.from_grid(GridSpec()))
    events = rng.integers(0, 2, 81).tolist()
    saved = agent_mod.kernels
    agent_mod.kernels = k
    try:
        def retrain():
            a = DQNAgent(81, TrainSchedule(timesteps=steps), seed=1)
            retrain_after_mission(a, events, model)

        out[f"retrain {steps} steps (s)"] = min(timeit.repeat(retrain, number=1, repeat=repeat))
    finally:
        agent_mod.kernels = saved
    return out


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--steps", type=int, default=5000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    backends = [_kernels_py] + ([_kernels_cy] if _kernels_cy is not None else [])
    results = {k.NAME: bench_backend(k, args.steps, args.repeat) for k in backends}
    rows = list(next(iter(results.values())))
    names = list(results)
    print(f"{'kernel':<26}" + "".join(f"{n:>12}" for n in names) + ("     speedup" if len(names) > 1 else ""))
    for r in rows:
        vals = [results[n][r] for n in names]
        line = f"{r:<26}" + "".join(f"{x:>12.4g}" for x in vals)
        if len(vals) > 1:
            line += f"{vals[0] / vals[1]:>11.1f}x"
        print(line)
    if _kernels_cy is None:
        print("compiled extension not built; only the pure-Python kernels were timed")


if __name__ == "__main__":
    main()
