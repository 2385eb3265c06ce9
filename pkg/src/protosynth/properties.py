"""Correctness properties, rewards, decision-definiteness, and the two
built-in reference protocols.

Consensus and atomic commit share P1 (agreement) and P4 (termination) but
differ in their validity rules: atomic commit's all-commit rule additionally
requires that no message was lost, and any initial abort (even from a process
that crashed before sending anything) forces a global abort.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

from .model import (
    ProtocolSpec,
    PropertySet,
    Scenario,
    Setting,
    StateMachine,
    StateSpace,
    TransitionKey,
    enumerate_input_keys,
)
from .simulator import UNDECIDED, ExecutionTrace


class SettingMismatch(ValueError):
    """Builtin protocol requested for the wrong property set."""


@dataclass(frozen=True)
class PropertyVerdict:
    reward: int  # +1 or -1
    violations: tuple[tuple[str, tuple[int, ...]], ...]  # (property id, witnesses)

    @property
    def ok(self) -> bool:
        return self.reward > 0


def check_outcome(
    spec: ProtocolSpec,
    space: StateSpace,
    init: Sequence[int],
    any_loss: bool,
    decisions: dict[int, int],
) -> PropertyVerdict:
    """Evaluate P1..P4 on a finished execution's outcome.

    `decisions` maps each never-crashing process to a decision id or
    UNDECIDED. Antecedents quantify over all processes' initial states;
    consequents only over the alive processes.
    """
    violations: list[tuple[str, tuple[int, ...]]] = []
    decided = {p: d for p, d in decisions.items() if d != UNDECIDED}

    undecided = tuple(p for p, d in decisions.items() if d == UNDECIDED)
    if undecided:
        violations.append(("P4", undecided))

    if len(set(decided.values())) > 1:
        procs = sorted(decided)
        p = procs[0]
        q = next(q for q in procs if decided[q] != decided[p])
        violations.append(("P1", (p, q)))

    if spec.property_set is PropertySet.CONSENSUS:
        first_init = space.initial_ids.start
        if len(set(init)) == 1:
            forced = init[0] - first_init  # matching decision id by index
            bad = tuple(p for p, d in decided.items() if d != forced)
            if bad:
                violations.append(("P3" if forced == 0 else "P2", bad))
    else:
        abort_init = space.initial_ids.start
        commit_init = abort_init + 1
        abort_dec, commit_dec = 0, 1
        if all(s == commit_init for s in init) and not any_loss:
            bad = tuple(p for p, d in decided.items() if d != commit_dec)
            if bad:
                violations.append(("P2", bad))
        if any(s == abort_init for s in init):
            bad = tuple(p for p, d in decided.items() if d != abort_dec)
            if bad:
                violations.append(("P3", bad))

    reward = -1 if violations else 1
    return PropertyVerdict(reward=reward, violations=tuple(violations))


def evaluate(spec: ProtocolSpec, scenario: Scenario, trace: ExecutionTrace, space: StateSpace) -> PropertyVerdict:
    """Evaluate the property set on a simulated trace."""
    return check_outcome(spec, space, scenario.init, trace.any_loss(space), trace.decisions)


def definite_decision(
    spec: ProtocolSpec, space: StateSpace, init: Sequence[int], allow_losses: bool
) -> Optional[int]:
    """The unique decision id forced by the properties for every scenario with
    this init vector (losses permitted iff allow_losses), or None."""
    if spec.property_set is PropertySet.CONSENSUS:
        if len(set(init)) == 1:
            return init[0] - space.initial_ids.start
        return None
    abort_init = space.initial_ids.start
    if any(s == abort_init for s in init):
        return 0
    if not allow_losses:
        return 1
    return None  # a crash may legitimately force abort


def builtin_floodset(setting: Setting, space: StateSpace, spec: ProtocolSpec) -> StateMachine:
    """Two-internal-state FloodSet reduction for consensus.

    internal:a tracks "a 0 was seen"; the last round decides 0 iff any
    non-lost input indicates 0, else 1.
    """
    if spec.property_set is not PropertySet.CONSENSUS:
        raise SettingMismatch("floodset builtin requires a consensus spec")
    if space.k < 2 or setting.r < setting.f + 1:
        raise SettingMismatch("floodset needs k >= 2 and r >= f+1")
    zero_init = space.initial_ids.start
    int_a, int_b = space.d, space.d + 1
    transitions = {}
    for key in enumerate_input_keys(setting, space):
        marker = zero_init if key.round == 1 else int_a
        seen_zero = key.own == marker or any(s == marker for s in key.others)
        if key.round == setting.r:
            transitions[key] = 0 if seen_zero else 1
        else:
            transitions[key] = int_a if seen_zero else int_b
    return StateMachine(spec_name=spec.name, setting=setting, transitions=transitions)


def builtin_atomic_commit(setting: Setting, space: StateSpace, spec: ProtocolSpec) -> StateMachine:
    """Generalized commit protocol: a lost message counts as abort in the
    first round and is ignored afterwards."""
    if spec.property_set is not PropertySet.ATOMIC_COMMIT:
        raise SettingMismatch("atomic-commit builtin requires an atomic-commit spec")
    if space.k < 2 or setting.r < setting.f + 1:
        raise SettingMismatch("atomic commit builtin needs k >= 2 and r >= f+1")
    commit_init = space.initial_ids.start + 1
    int_a, int_b = space.d, space.d + 1
    transitions = {}
    for key in enumerate_input_keys(setting, space):
        inputs = (key.own,) + key.others
        if key.round == 1:
            good = all(s == commit_init for s in inputs)  # any loss or abort breaks it
        else:
            good = all(s == int_a for s in inputs if s != space.lost)
        if key.round == setting.r:
            transitions[key] = 1 if good else 0
        else:
            transitions[key] = int_a if good else int_b
    return StateMachine(spec_name=spec.name, setting=setting, transitions=transitions)
