"""Synthesis of synchronous crash-tolerant protocol state machines from
correctness properties, via adversarial tree search with transition freezing
and exhaustive bounded checking."""

from .model import (
    Crash,
    ProtocolSpec,
    PropertySet,
    Scenario,
    Setting,
    SpecError,
    StateMachine,
    StateSpace,
    TransitionKey,
    atomic_commit_spec,
    consensus_spec,
    encode_state_space,
    machine_from_json,
    machine_to_json,
    scenario_from_json,
    scenario_to_json,
)
from .orchestrator import RunConfig, SynthesisResult, synthesize
from .properties import builtin_atomic_commit, builtin_floodset, evaluate
from .scenarios import Phase, enumerate_scenarios, final_phase
from .search import kernel_name, run_mcts
from .simulator import ExecutionTrace, run
from .verifier import Counterexample, validate

__version__ = "0.1.0"

__all__ = [
    "Crash",
    "ProtocolSpec",
    "PropertySet",
    "Scenario",
    "Setting",
    "SpecError",
    "StateMachine",
    "StateSpace",
    "TransitionKey",
    "atomic_commit_spec",
    "consensus_spec",
    "encode_state_space",
    "machine_from_json",
    "machine_to_json",
    "scenario_from_json",
    "scenario_to_json",
    "RunConfig",
    "SynthesisResult",
    "synthesize",
    "builtin_atomic_commit",
    "builtin_floodset",
    "evaluate",
    "Phase",
    "enumerate_scenarios",
    "final_phase",
    "kernel_name",
    "run_mcts",
    "ExecutionTrace",
    "run",
    "Counterexample",
    "validate",
    "__version__",
]
