"""Exhaustive bounded model checking: simulate every scenario of a phase and
collect the violating ones as replayable counterexamples."""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .model import (
    PropertySet,
    ProtocolSpec,
    Scenario,
    Setting,
    StateMachine,
    StateSpace,
    enumerate_input_keys,
)
from .properties import evaluate
from .scenarios import Phase, enumerate_scenarios
from .search import _kernel
from .simulator import run


@dataclass(frozen=True)
class Counterexample:
    scenario: Scenario
    violations: tuple[str, ...]


def check_scenario(
    machine: StateMachine, scenario: Scenario, setting: Setting, spec: ProtocolSpec, space: StateSpace
) -> tuple[str, ...]:
    """Violated property ids for one scenario (empty tuple = pass)."""
    trace = run(machine, scenario, setting, space)
    verdict = evaluate(spec, scenario, trace, space)
    return tuple(v for v, _ in verdict.violations)


def _failing_indices(
    machine: StateMachine,
    setting: Setting,
    spec: ProtocolSpec,
    space: StateSpace,
    scenarios: list[Scenario],
):
    """Indices of failing scenarios via the kernel's bulk checker, or None
    when the machine falls outside its fast path (partial transition table,
    process-id-dependent keys)."""
    if setting.use_proc_id or setting.n > 16:
        return None
    keys = enumerate_input_keys(setting, space)
    if len(machine.transitions) < len(keys):
        return None
    ctx = _kernel.EngineCtx(
        n=setting.n,
        r=setting.r,
        d=space.d,
        k=space.k,
        x=space.x,
        lost=space.lost,
        first_init=space.initial_ids.start,
        spec_kind=0 if spec.property_set is PropertySet.CONSENSUS else 1,
        min_crash_round=1,
        c_puct=1.5,
        priors=[],
        frozen_choice=[],
    )
    trans = [0] * len(keys)
    for key in keys:
        out = machine.transitions.get(key)
        if out is None:
            return None
        trans[ctx.key_index(key.round, key.own, list(key.others))] = out
    encoded = [
        (
            sc.init,
            tuple(c.proc for c in sc.crashes),
            tuple(c.round for c in sc.crashes),
            tuple(sum(1 << q for q in c.delivered_to) for c in sc.crashes),
        )
        for sc in scenarios
    ]
    return _kernel.check_scenarios(ctx, trans, encoded)


def validate(
    machine: StateMachine,
    setting: Setting,
    spec: ProtocolSpec,
    space: StateSpace,
    phase: Phase,
    workers: int = 1,
) -> list[Counterexample]:
    """Run every scenario of `phase` and return the failures in enumeration
    order. Results are identical for serial and parallel execution."""
    scenarios = enumerate_scenarios(setting, spec, space, phase)
    bad = _failing_indices(machine, setting, spec, space, scenarios)
    if bad is not None:
        return [
            Counterexample(
                scenario=scenarios[i],
                violations=check_scenario(machine, scenarios[i], setting, spec, space),
            )
            for i in bad
        ]
    if workers <= 1:
        results = [check_scenario(machine, sc, setting, spec, space) for sc in scenarios]
    else:
        chunks = np.array_split(np.arange(len(scenarios)), workers)
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [
                pool.submit(_check_chunk, machine, [scenarios[i] for i in chunk], setting, spec, space)
                for chunk in chunks
                if len(chunk)
            ]
            results = [v for fut in futures for v in fut.result()]
    return [
        Counterexample(scenario=sc, violations=v)
        for sc, v in zip(scenarios, results)
        if v
    ]


def _check_chunk(machine, scenarios, setting, spec, space):
    return [check_scenario(machine, sc, setting, spec, space) for sc in scenarios]


def extract_machine(
    policy,
    frozen_by_key: dict,
    setting: Setting,
    space: StateSpace,
    spec_name: str,
) -> StateMachine:
    """Inference machine: frozen overrides where present, else the policy's
    argmax output (ties to the lowest id)."""
    keys = enumerate_input_keys(setting, space)
    if hasattr(policy, "predict_many"):
        dists = policy.predict_many(keys)
    else:
        dists = [policy.predict(k) for k in keys]
    transitions = {}
    for key, dist in zip(keys, dists):
        legal = space.legal_outputs(key.round, setting.r)
        out = frozen_by_key.get(key)
        if out is None:
            out = legal[int(np.argmax(dist))]
        transitions[key] = out
    return StateMachine(spec_name=spec_name, setting=setting, transitions=transitions)


def reachable_keys(
    machine: StateMachine, setting: Setting, spec: ProtocolSpec, space: StateSpace, phase: Phase
) -> set:
    """Keys actually looked up while simulating every scenario of the phase."""
    seen = set()
    for sc in enumerate_scenarios(setting, spec, space, phase):
        trace = run(machine, sc, setting, space)
        seen.update(trace.keys_in_order)
    return seen
