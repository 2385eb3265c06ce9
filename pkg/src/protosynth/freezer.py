"""DFS stack of pinned transitions.

Freezing pins one input key to one output and removes it from exploration;
the stack of pins is backtracked LIFO when a scenario becomes unwinnable.
`scenario_solvable` is the exhaustive completion oracle that makes the
unfreeze trigger accurate: it asks whether any assignment of the unfrozen
keys reachable under a fixed scenario still earns reward +1.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .model import (
    ProtocolSpec,
    Scenario,
    Setting,
    StateSpace,
    TransitionKey,
)
from .policy import TrainingBuffer
from .properties import check_outcome, definite_decision
from .simulator import UNDECIDED

P_MIN = 0.2
DIFF_MAX = 0.1
FREEZE_INTERVAL = 5  # episodes between ambiguity freezes


class NoDefiniteScenario(ValueError):
    """No uniform no-loss scenario forces a decision; group freezing impossible."""


class TooLarge(ValueError):
    """Reachable unfrozen key count exceeds the oracle bound."""


@dataclass
class FreezeEntry:
    key: TransitionKey
    current: int
    tried: set[int] = field(default_factory=set)
    origin: str = "ambiguity"  # or "group"

    def __post_init__(self):
        self.tried.add(self.current)


class FreezeList:
    """Stack of frozen transitions with O(1) key lookup."""

    def __init__(self):
        self._stack: list[FreezeEntry] = []

    def __len__(self):
        return len(self._stack)

    def __iter__(self):
        return iter(self._stack)

    def __contains__(self, key: TransitionKey):
        return any(e.key == key for e in self._stack)

    def entry(self, key: TransitionKey) -> Optional[FreezeEntry]:
        for e in self._stack:
            if e.key == key:
                return e
        return None

    def push(self, entry: FreezeEntry) -> None:
        if self.entry(entry.key) is not None:
            raise ValueError("key already frozen")
        self._stack.append(entry)

    def by_key(self) -> dict[TransitionKey, int]:
        return {e.key: e.current for e in self._stack}

    def pop_activated_lifo(self, activated: set[TransitionKey]) -> Optional[FreezeEntry]:
        for i in range(len(self._stack) - 1, -1, -1):
            if self._stack[i].key in activated:
                return self._stack.pop(i)
        return None


def group_freeze(spec: ProtocolSpec, setting: Setting, space: StateSpace) -> FreezeList:
    """Pin the full execution path of the lexicographically smallest uniform,
    no-loss scenario with a forced decision: one key per round, internals
    collapsed to the first internal state, last round to the forced decision."""
    chosen = None
    for init_id in space.initial_ids:
        init = (init_id,) * setting.n
        dec = definite_decision(spec, space, init, allow_losses=False)
        if dec is not None:
            chosen = (init_id, dec)
            break
    if chosen is None:
        raise NoDefiniteScenario("no uniform no-loss scenario has a definite decision")
    init_id, decision = chosen
    int_a = space.d
    fl = FreezeList()
    m = setting.n - 1
    for t in range(1, setting.r + 1):
        own = init_id if t == 1 else int_a
        key = TransitionKey(t, own, (own,) * m)
        out = decision if t == setting.r else int_a
        fl.push(FreezeEntry(key=key, current=out, origin="group"))
    return fl


def is_ambiguous(dist: np.ndarray, p_min: float = P_MIN, diff_max: float = DIFF_MAX) -> bool:
    """At least two outputs above p_min whose probabilities differ by at most
    diff_max."""
    big = sorted((p for p in dist if p >= p_min), reverse=True)
    return any(big[i] - big[i + 1] <= diff_max for i in range(len(big) - 1))


def determine_freezing(
    buffer: TrainingBuffer,
    freeze_list: FreezeList,
    space: StateSpace,
    setting: Setting,
    episode: int,
    last_freeze_episode: int,
) -> Optional[FreezeEntry]:
    """Freeze at most one ambiguous key per call, at most once per
    FREEZE_INTERVAL episodes. Ambiguity is judged on the buffer-averaged
    target per key. Candidates are sorted later-round first, then by fewer
    lost messages in the key. Returns the new entry, if any."""
    if episode - last_freeze_episode < FREEZE_INTERVAL:
        return None
    averaged = buffer.mean_by_key()
    candidates = []
    for key, dist in averaged.items():
        if freeze_list.entry(key) is not None:
            continue
        if is_ambiguous(dist):
            candidates.append(key)
    if not candidates:
        return None
    candidates.sort(key=lambda k: (-k.round, k.lost_count(space), k))
    key = candidates[0]
    dist = averaged[key]
    choice = int(np.argmax(dist))  # ties resolve to the lowest output id
    legal = space.legal_outputs(key.round, setting.r)
    entry = FreezeEntry(key=key, current=legal[choice], origin="ambiguity")
    freeze_list.push(entry)
    return entry


def determine_unfreeze(
    reward: int,
    activated: list[TransitionKey],
    freeze_list: FreezeList,
    setting: Setting,
    space: StateSpace,
    spec: ProtocolSpec,
    scenario: Scenario,
    oracle_enabled: bool = True,
    oracle_bound: int = 24,
) -> list[tuple[str, FreezeEntry]]:
    """DFS backtrack: on a dead end, pop activated entries LIFO; the first
    with an untried legal output is re-frozen to the smallest untried one,
    fully-explored entries are discarded. Returns the (action, entry) log."""
    events: list[tuple[str, FreezeEntry]] = []
    activated_set = {k for k in activated if k in freeze_list}
    if reward >= 0 or not activated_set:
        return events
    if oracle_enabled:
        try:
            if scenario_solvable(freeze_list, scenario, setting, spec, space, bound=oracle_bound):
                return events  # a completion still exists; keep the pins
        except TooLarge:
            pass  # fall back to reward-only triggering
    while True:
        entry = freeze_list.pop_activated_lifo(activated_set)
        if entry is None:
            return events
        legal = space.legal_outputs(entry.key.round, setting.r)
        untried = [o for o in legal if o not in entry.tried]
        if untried:
            entry.current = untried[0]
            entry.tried.add(entry.current)
            freeze_list.push(entry)
            events.append(("refreeze", entry))
            return events
        events.append(("discard", entry))


def scenario_solvable(
    freeze_list: FreezeList,
    scenario: Scenario,
    setting: Setting,
    spec: ProtocolSpec,
    space: StateSpace,
    bound: int = 24,
) -> bool:
    """Exhaustive completion with the adversary fixed to `scenario`: does some
    assignment of reachable unfrozen keys yield reward +1?"""
    frozen = freeze_list.by_key()
    assignment: dict[TransitionKey, int] = {}
    crash_round = {c.proc: c.round for c in scenario.crashes}
    seen_unfrozen: set[TransitionKey] = set()

    def run_round(t: int, states: list[int], any_loss: bool) -> bool:
        if t > setting.r:
            decisions = {p: states[p] for p in range(setting.n) if p not in crash_round}
            verdict = check_outcome(spec, space, scenario.init, any_loss, decisions)
            return verdict.ok
        computing = [p for p in range(setting.n) if crash_round.get(p, setting.r + 1) > t]
        keys = []
        loss_here = False
        for p in computing:
            vec = []
            for q in range(setting.n):
                if q == p:
                    continue
                cq = crash_round.get(q)
                lost = cq is not None and (
                    t > cq or (t == cq and p not in scenario.crash_of(q).delivered_to)
                )
                vec.append(space.lost if lost else states[q])
            if space.lost in vec:
                loss_here = True
            keys.append((p, TransitionKey(t, states[p], tuple(vec))))
        distinct = sorted({k for _, k in keys})

        def assign(i: int) -> bool:
            if i == len(distinct):
                new_states = list(states)
                for p, k in keys:
                    new_states[p] = assignment[k] if k in assignment else frozen[k]
                return run_round(t + 1, new_states, any_loss or loss_here)
            k = distinct[i]
            if k in frozen or k in assignment:
                return assign(i + 1)
            seen_unfrozen.add(k)
            if len(seen_unfrozen) > bound:
                raise TooLarge("reachable unfrozen keys exceed oracle bound %d" % bound)
            for out in space.legal_outputs(t, setting.r):
                assignment[k] = out
                if assign(i + 1):
                    del assignment[k]
                    return True
            del assignment[k]
            return False

        return assign(0)

    return run_round(1, list(scenario.init), False)
