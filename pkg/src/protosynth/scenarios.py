"""Scenario enumeration and sampling under the guided-curriculum phases.

Phase q (0 <= q < r) confines crash rounds to the last q+1 rounds and
restricts initial states to those forcing a definite decision; phase r allows
crashes everywhere with definite inits; phase r+1 relaxes the inits too.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations, product

import numpy as np

from .model import Crash, ProtocolSpec, Scenario, Setting, StateSpace
from .properties import definite_decision

FAILED_SCENARIO_BIAS = 0.7  # 70/30 split between failed replays and fresh draws


@dataclass(frozen=True)
class Phase:
    phase_id: int

    def min_crash_round(self, setting: Setting) -> int:
        if self.phase_id >= setting.r:
            return 1
        return setting.r - self.phase_id

    def restrict_inits(self, setting: Setting) -> bool:
        return self.phase_id <= setting.r

    def allow_losses(self, setting: Setting) -> bool:
        return setting.f > 0

    def is_final(self, setting: Setting) -> bool:
        return self.phase_id >= setting.r + 1


def final_phase(setting: Setting) -> Phase:
    return Phase(setting.r + 1)


def phase_inits(setting: Setting, spec: ProtocolSpec, space: StateSpace, phase: Phase) -> list[tuple[int, ...]]:
    inits = list(product(space.initial_ids, repeat=setting.n))
    if phase.restrict_inits(setting):
        allow = phase.allow_losses(setting)
        inits = [v for v in inits if definite_decision(spec, space, v, allow) is not None]
    return inits


def round_crash_options(setting: Setting, proc: int, min_round: int) -> list[Crash]:
    """All single-process crash patterns with crash round >= min_round."""
    others = [q for q in range(setting.n) if q != proc]
    opts = []
    for t in range(min_round, setting.r + 1):
        for size in range(len(others) + 1):
            for sub in combinations(others, size):
                opts.append(Crash(proc, t, frozenset(sub)))
    return opts


def enumerate_loss_patterns(setting: Setting, phase: Phase) -> list[tuple[Crash, ...]]:
    """All crash sets of size <= f with phase-legal rounds and every delivery
    subset, including the no-crash pattern."""
    min_round = phase.min_crash_round(setting)
    patterns: list[tuple[Crash, ...]] = []
    for size in range(setting.f + 1):
        for procs in combinations(range(setting.n), size):
            per_proc = [round_crash_options(setting, p, min_round) for p in procs]
            for combo in product(*per_proc):
                patterns.append(tuple(combo))
    return patterns


def enumerate_scenarios(setting: Setting, spec: ProtocolSpec, space: StateSpace, phase: Phase) -> list[Scenario]:
    """Cross product of phase-allowed init vectors with all loss patterns."""
    inits = phase_inits(setting, spec, space, phase)
    patterns = enumerate_loss_patterns(setting, phase)
    return [Scenario(init=init, crashes=crashes) for init in inits for crashes in patterns]


def sample_scenario(
    scenarios: list[Scenario], failed: list[Scenario], rng: np.random.Generator
) -> Scenario:
    """Draw from the failed pool with probability 0.7 when it is nonempty,
    otherwise uniformly from the phase's scenario list."""
    u = rng.random()
    if u < 1.0 - FAILED_SCENARIO_BIAS or not failed:
        return scenarios[rng.integers(len(scenarios))]
    return failed[rng.integers(len(failed))]
