"""Compare the compiled search kernel against the pure-Python twin.

Run:  python benchmarks/bench_kernels.py
"""

import time

import numpy as np

from protosynth import _engine_py
from protosynth.model import (
    Crash,
    Scenario,
    Setting,
    consensus_spec,
    encode_state_space,
)
from protosynth.policy import MlpPolicy
from protosynth.scenarios import final_phase
from protosynth.search import (
    ProtocolConfig,
    _kernel,
    kernel_name,
    policy_priors,
    scenario_move,
)

CASES = [
    ("con-2-1", Setting(n=2, r=2, f=1, k=2), Scenario(init=(5, 6))),
    ("con-3-2", Setting(n=3, r=3, f=2, k=2),
     Scenario(init=(5, 6, 5), crashes=(Crash(1, 2, frozenset({0})),))),
    ("con-4-1", Setting(n=4, r=2, f=1, k=2), Scenario(init=(5, 6, 5, 6))),
]


def run_case(engine, ctx, setting, scenario, iterations, repeats=3):
    config = ProtocolConfig.initial(scenario, setting)
    move = scenario_move(scenario, 1)
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        engine.simulate_counts(ctx, 1, list(config.states), list(config.crashed),
                               config.budget, 0, list(scenario.init), iterations,
                               list(move[0]), list(move[1]))
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    spec = consensus_spec()
    print("active kernel: %s" % kernel_name())
    print("%-10s %-10s %-12s %-12s %-8s" % ("case", "iters", "python_s", "cython_s", "speedup"))
    for name, setting, scenario in CASES:
        space = encode_state_space(spec, setting.k)
        phase = final_phase(setting)
        policy = MlpPolicy(setting, space, rng=np.random.default_rng(0))
        priors = policy_priors(policy, setting, space)
        iterations = setting.r * setting.n * 1000
        args = dict(n=setting.n, r=setting.r, d=space.d, k=space.k, x=space.x,
                    lost=space.lost, first_init=space.initial_ids.start, spec_kind=0,
                    min_crash_round=phase.min_crash_round(setting), c_puct=1.5,
                    priors=[list(map(float, p)) for p in priors],
                    frozen_choice=[-1] * len(priors))
        t_py = run_case(_engine_py, _engine_py.EngineCtx(**args), setting, scenario, iterations)
        if _kernel is _engine_py:
            print("%-10s %-10d %-12.3f %-12s %-8s" % (name, iterations, t_py, "n/a", "n/a"))
            continue
        t_cy = run_case(_kernel, _kernel.EngineCtx(**args), setting, scenario, iterations)
        print("%-10s %-10d %-12.3f %-12.3f %.1fx" % (name, iterations, t_py, t_cy, t_py / t_cy))


if __name__ == "__main__":
    main()
