"""Deterministic synchronous-round execution of a state machine under one
scenario. Pure: callers may run many simulations in parallel on shared inputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from .model import Scenario, Setting, StateMachine, StateSpace, TransitionKey, message_lost

UNDECIDED = -1


@dataclass
class ExecutionTrace:
    """Full record of one run: per-round broadcasts, received vectors, and
    outputs, plus the alive sets and final decisions."""

    setting: Setting
    scenario: Scenario
    # per round (index t-1), per process: state broadcast at the start of round t
    sent: list[list[int]] = field(default_factory=list)
    # per round, per process: received vector (None for processes not computing)
    received: list[list[Optional[list[int]]]] = field(default_factory=list)
    # per round, per process: computed output (None if not computing, UNDECIDED on missing key)
    outputs: list[list[Optional[int]]] = field(default_factory=list)
    alive: list[list[int]] = field(default_factory=list)
    # decision id or UNDECIDED, per never-crashing process; crashed procs absent
    decisions: dict[int, int] = field(default_factory=dict)
    keys_in_order: list[TransitionKey] = field(default_factory=list)

    def any_loss(self, space: StateSpace) -> bool:
        """True iff some computing process observed the lost sentinel."""
        return any(
            space.lost in vec
            for round_vecs in self.received
            for vec in round_vecs
            if vec is not None
        )


def run(machine: StateMachine, scenario: Scenario, setting: Setting, space: StateSpace) -> ExecutionTrace:
    """Execute `machine` under `scenario` for r synchronous rounds.

    A process crashing in round t broadcasts (subject to its delivery set) but
    does not compute a round-t transition. A missing transition yields
    UNDECIDED for that process and truncates its execution: it stops
    broadcasting but still counts against the decision properties.
    """
    n, r = setting.n, setting.r
    trace = ExecutionTrace(setting=setting, scenario=scenario)
    states = list(scenario.init)
    truncated = [False] * n
    crash_round = {c.proc: c.round for c in scenario.crashes}

    for t in range(1, r + 1):
        computing = [p for p in range(n) if crash_round.get(p, r + 1) > t and not truncated[p]]
        alive = [p for p in range(n) if crash_round.get(p, r + 1) > t]
        sent = list(states)
        recv_round: list[Optional[list[int]]] = [None] * n
        out_round: list[Optional[int]] = [None] * n
        for p in computing:
            vec = []
            for q in range(n):
                if q == p:
                    continue
                if truncated[q] or message_lost(scenario, q, p, t):
                    vec.append(space.lost)
                else:
                    vec.append(states[q])
            recv_round[p] = vec
            key = TransitionKey(t, states[p], tuple(vec))
            trace.keys_in_order.append(key)
            out = machine.transitions.get(key)
            if out is None:
                truncated[p] = True
                out_round[p] = UNDECIDED
            else:
                out_round[p] = out
        for p in computing:
            if not truncated[p]:
                states[p] = out_round[p]
        trace.sent.append(sent)
        trace.received.append(recv_round)
        trace.outputs.append(out_round)
        trace.alive.append(alive)

    for p in range(n):
        if p not in crash_round:
            trace.decisions[p] = UNDECIDED if truncated[p] else states[p]
    return trace


def format_trace(trace: ExecutionTrace, space: StateSpace) -> str:
    """One line per round per computing process, e.g.
    `r=1 p=2 sent=init:0 recv=[init:0,LOST] -> internal:b`."""
    lines = []
    for t in range(1, trace.setting.r + 1):
        for p in range(trace.setting.n):
            vec = trace.received[t - 1][p]
            if vec is None:
                continue
            out = trace.outputs[t - 1][p]
            out_label = "UNDECIDED" if out == UNDECIDED else space.label(out)
            lines.append(
                "r=%d p=%d sent=%s recv=[%s] -> %s"
                % (t, p, space.label(trace.sent[t - 1][p]), ",".join(space.label(s) for s in vec), out_label)
            )
    return "\n".join(lines)
