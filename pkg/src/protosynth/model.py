"""Core domain types: protocol specs, settings, state encoding, transition keys,
state machines, and scenarios.

All types are immutable value objects and safe to share across workers.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional


class PropertySet(Enum):
    CONSENSUS = "consensus"
    ATOMIC_COMMIT = "atomic_commit"


class SpecError(ValueError):
    """Malformed protocol spec or setting."""


@dataclass(frozen=True)
class ProtocolSpec:
    """A target protocol: initial states, decision states, and which family of
    correctness properties applies.

    For atomic commit the label order is semantic: initial_states[0] is the
    abort intent and decision_states[0] the abort decision. For consensus,
    initial_states[i] matches decision_states[i].
    """

    name: str
    initial_states: tuple[str, ...]
    decision_states: tuple[str, ...]
    property_set: PropertySet

    def __post_init__(self):
        if len(self.initial_states) < 1 or len(self.decision_states) < 1:
            raise SpecError("need at least one initial and one decision state")
        labels = list(self.initial_states) + list(self.decision_states)
        if len(set(labels)) != len(labels):
            raise SpecError("state labels must be unique and I/D disjoint")


@dataclass(frozen=True)
class Setting:
    """Problem size: processes, rounds, crash budget, internal-state count."""

    n: int
    r: int
    f: int
    k: int
    use_proc_id: bool = False

    def __post_init__(self):
        if self.n < 2:
            raise SpecError("need at least two processes")
        if self.r < 1:
            raise SpecError("need at least one round")
        if not (0 <= self.f <= self.n - 1):
            raise SpecError("crash budget must be in [0, n-1]")
        if self.k < 1:
            raise SpecError("need at least one internal state")


@dataclass(frozen=True)
class StateSpace:
    """Dense integer coding of the state alphabet.

    Decisions get ids 0..d-1, internals d..d+k-1, the lost sentinel d+k,
    and initials d+k+1..d+k+x.
    """

    d: int
    k: int
    x: int
    labels: tuple[str, ...]  # label for every id, lost included

    @property
    def lost(self) -> int:
        return self.d + self.k

    @property
    def alphabet_size(self) -> int:
        return self.d + self.k + self.x + 1

    @property
    def decision_ids(self) -> range:
        return range(0, self.d)

    @property
    def internal_ids(self) -> range:
        return range(self.d, self.d + self.k)

    @property
    def initial_ids(self) -> range:
        return range(self.d + self.k + 1, self.d + self.k + 1 + self.x)

    def is_decision(self, s: int) -> bool:
        return 0 <= s < self.d

    def is_internal(self, s: int) -> bool:
        return self.d <= s < self.d + self.k

    def is_initial(self, s: int) -> bool:
        return self.d + self.k + 1 <= s < self.alphabet_size

    def label(self, s: int) -> str:
        return self.labels[s]

    def id_of(self, label: str) -> int:
        return self.labels.index(label)

    def legal_outputs(self, round_: int, r: int) -> list[int]:
        """Outputs allowed for a transition at `round_` of an r-round protocol:
        internal states before the last round, decision states in it."""
        if round_ == r:
            return list(self.decision_ids)
        return list(self.internal_ids)


def encode_state_space(spec: ProtocolSpec, k: int) -> StateSpace:
    """Assign integer ids to the state alphabet of `spec` with k internals."""
    if k < 1:
        raise SpecError("k must be >= 1")
    internals = tuple("internal:%s" % chr(ord("a") + i) for i in range(k))
    labels = tuple(spec.decision_states) + internals + ("LOST",) + tuple(spec.initial_states)
    return StateSpace(d=len(spec.decision_states), k=k, x=len(spec.initial_states), labels=labels)


@dataclass(frozen=True, order=True)
class TransitionKey:
    """One input to the state machine: round, own state, and the states
    received from the other processes in ascending sender order (self skipped).
    proc_id is present only when the setting distinguishes processes."""

    round: int
    own: int
    others: tuple[int, ...]
    proc_id: Optional[int] = None

    def lost_count(self, space: StateSpace) -> int:
        return sum(1 for s in self.others if s == space.lost)


def key_is_valid(key: TransitionKey, setting: Setting, space: StateSpace) -> bool:
    if not (1 <= key.round <= setting.r) or len(key.others) != setting.n - 1:
        return False
    if (key.proc_id is not None) != setting.use_proc_id:
        return False
    if key.round == 1:
        return space.is_initial(key.own) and all(
            space.is_initial(s) or s == space.lost for s in key.others
        )
    return space.is_internal(key.own) and all(
        space.is_internal(s) or s == space.lost for s in key.others
    )


def enumerate_input_keys(setting: Setting, space: StateSpace) -> list[TransitionKey]:
    """All transition keys reachable in principle, in canonical index order.

    Count is x*(x+1)^(n-1) + (r-1)*k*(k+1)^(n-1); requires use_proc_id=False.
    """
    if setting.use_proc_id:
        raise SpecError("key enumeration assumes process ids are disabled")
    keys = []
    m = setting.n - 1
    for round_ in range(1, setting.r + 1):
        if round_ == 1:
            owns = list(space.initial_ids)
            syms = list(space.initial_ids) + [space.lost]
        else:
            owns = list(space.internal_ids)
            syms = list(space.internal_ids) + [space.lost]
        for own in owns:
            for others in _product(syms, m):
                keys.append(TransitionKey(round_, own, others))
    return keys


def _product(syms: list[int], m: int) -> list[tuple[int, ...]]:
    out = [()]
    for _ in range(m):
        out = [t + (s,) for t in out for s in syms]
    return out


def key_index(key: TransitionKey, setting: Setting, space: StateSpace) -> int:
    """Position of `key` in enumerate_input_keys order (mixed-radix decode)."""
    m = setting.n - 1
    if key.round == 1:
        base = space.x + 1
        own_digit = key.own - space.initial_ids.start
        offset = 0
        first = space.initial_ids.start
    else:
        base = space.k + 1
        own_digit = key.own - space.d
        offset = space.x * (space.x + 1) ** m + (key.round - 2) * space.k * (space.k + 1) ** m
        first = space.d
    idx = own_digit
    for s in key.others:
        digit = base - 1 if s == space.lost else s - first
        idx = idx * base + digit
    return offset + idx


def consensus_spec() -> ProtocolSpec:
    return ProtocolSpec(
        name="consensus",
        initial_states=("init:0", "init:1"),
        decision_states=("decision:0", "decision:1"),
        property_set=PropertySet.CONSENSUS,
    )


def atomic_commit_spec() -> ProtocolSpec:
    return ProtocolSpec(
        name="atomic_commit",
        initial_states=("init:abort", "init:commit"),
        decision_states=("decision:abort", "decision:commit"),
        property_set=PropertySet.ATOMIC_COMMIT,
    )


SPECS = {"consensus": consensus_spec, "atomic_commit": atomic_commit_spec}


@dataclass(frozen=True)
class Crash:
    """One crash: the process, the round it crashes in, and which other
    processes still receive its crash-round broadcast."""

    proc: int
    round: int
    delivered_to: frozenset[int]


@dataclass(frozen=True)
class Scenario:
    """One adversary choice: initial states plus the full loss pattern,
    expressed as per-process crashes."""

    init: tuple[int, ...]
    crashes: tuple[Crash, ...] = ()

    def crash_of(self, proc: int) -> Optional[Crash]:
        for c in self.crashes:
            if c.proc == proc:
                return c
        return None

    def sort_key(self):
        return (self.init, tuple((c.proc, c.round, tuple(sorted(c.delivered_to))) for c in self.crashes))


def scenario_is_valid(sc: Scenario, setting: Setting, space: StateSpace) -> bool:
    if len(sc.init) != setting.n or not all(space.is_initial(s) for s in sc.init):
        return False
    if len(sc.crashes) > setting.f:
        return False
    procs = [c.proc for c in sc.crashes]
    if len(set(procs)) != len(procs):
        return False
    for c in sc.crashes:
        if not (0 <= c.proc < setting.n) or not (1 <= c.round <= setting.r):
            return False
        if not c.delivered_to <= (set(range(setting.n)) - {c.proc}):
            return False
    return True


def message_lost(sc: Scenario, sender: int, receiver: int, round_: int) -> bool:
    """Derived Loss predicate. Self-messages are never lost."""
    if sender == receiver:
        return False
    c = sc.crash_of(sender)
    if c is None:
        return False
    if round_ > c.round:
        return True
    if round_ == c.round:
        return receiver not in c.delivered_to
    return False


# ---------------------------------------------------------------------------
# JSON wire formats


@dataclass(frozen=True)
class StateMachine:
    """A (possibly partial) transition table plus its provenance metadata."""

    spec_name: str
    setting: Setting
    transitions: dict[TransitionKey, int] = field(default_factory=dict)

    def __hash__(self):
        return hash((self.spec_name, self.setting, tuple(sorted((k, v) for k, v in self.transitions.items()))))


def machine_to_json(machine: StateMachine, space: StateSpace) -> str:
    s = machine.setting
    doc = {
        "spec": machine.spec_name,
        "setting": {"n": s.n, "r": s.r, "f": s.f, "k": s.k, "use_proc_id": s.use_proc_id},
        "legend": {str(i): space.label(i) for i in range(space.alphabet_size)},
        "transitions": [
            {"round": k.round, "own": k.own, "others": list(k.others), "out": v}
            for k, v in sorted(machine.transitions.items())
        ],
    }
    return json.dumps(doc, indent=2)


def machine_from_json(text: str) -> StateMachine:
    doc = json.loads(text)
    s = doc["setting"]
    setting = Setting(n=s["n"], r=s["r"], f=s["f"], k=s["k"], use_proc_id=s.get("use_proc_id", False))
    transitions = {
        TransitionKey(t["round"], t["own"], tuple(t["others"])): t["out"]
        for t in doc["transitions"]
    }
    return StateMachine(spec_name=doc["spec"], setting=setting, transitions=transitions)


def scenario_to_json(sc: Scenario) -> str:
    return json.dumps(
        {
            "init": list(sc.init),
            "crashes": [
                {"proc": c.proc, "round": c.round, "delivered_to": sorted(c.delivered_to)}
                for c in sc.crashes
            ],
        }
    )


def scenario_from_json(text: str) -> Scenario:
    doc = json.loads(text)
    return Scenario(
        init=tuple(doc["init"]),
        crashes=tuple(
            Crash(c["proc"], c["round"], frozenset(c["delivered_to"])) for c in doc["crashes"]
        ),
    )
