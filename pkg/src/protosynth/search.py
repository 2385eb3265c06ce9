"""Adversarial tree search over interleaved loss-choice and transition-choice
layers.

The hot iteration loop lives in a compiled kernel (`protosynth._kernel`,
built from Cython) with a pure-Python twin (`protosynth._engine_py`). The two
are exchangeable and bit-identical; set PROTOSYNTH_PURE=1 to force the
fallback. `kernel_name()` reports which one is active.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, replace
from math import sqrt
from typing import Optional, Sequence

import numpy as np

from . import _engine_py
from ._engine_py import ATOMIC_COMMIT, CONSENSUS
from .model import (
    ProtocolSpec,
    PropertySet,
    Scenario,
    Setting,
    StateSpace,
    TransitionKey,
    enumerate_input_keys,
)
from .scenarios import Phase

if os.environ.get("PROTOSYNTH_PURE") == "1":
    _kernel = _engine_py
else:
    try:
        from . import _kernel  # type: ignore[no-redef]
    except ImportError:
        _kernel = _engine_py


EngineCtx = _kernel.EngineCtx


def kernel_name() -> str:
    return "cython" if _kernel is not _engine_py else "python"


def ucb_score(q: float, p: float, n_sa: int, n_sum: int, c_puct: float) -> float:
    """Edge score: exploitation plus prior-scaled exploration."""
    return q + c_puct * p * sqrt(n_sum) / (1 + n_sa)


def default_budget(setting: Setting) -> int:
    return setting.r * setting.n * 1000


@dataclass(frozen=True)
class ProtocolConfig:
    """Execution state at a round boundary."""

    round: int
    states: tuple[int, ...]
    crashed: tuple[bool, ...]
    budget: int
    any_loss: bool

    @classmethod
    def initial(cls, scenario: Scenario, setting: Setting) -> "ProtocolConfig":
        return cls(
            round=1,
            states=tuple(scenario.init),
            crashed=(False,) * setting.n,
            budget=setting.f,
            any_loss=False,
        )


def build_ctx(
    setting: Setting,
    space: StateSpace,
    spec: ProtocolSpec,
    phase: Phase,
    priors: Sequence[np.ndarray],
    frozen_by_index: Sequence[int],
    c_puct: float = 1.5,
) -> EngineCtx:
    """Assemble the engine context. `priors` and `frozen_by_index` are in
    canonical key-index order; frozen entries hold output ids or -1."""
    frozen_choice = []
    keys = enumerate_input_keys(setting, space)
    for key, out in zip(keys, frozen_by_index):
        if out < 0:
            frozen_choice.append(-1)
        else:
            frozen_choice.append(out if key.round == setting.r else out - space.d)
    return EngineCtx(
        n=setting.n,
        r=setting.r,
        d=space.d,
        k=space.k,
        x=space.x,
        lost=space.lost,
        first_init=space.initial_ids.start,
        spec_kind=CONSENSUS if spec.property_set is PropertySet.CONSENSUS else ATOMIC_COMMIT,
        min_crash_round=phase.min_crash_round(setting),
        c_puct=c_puct,
        priors=[list(map(float, p)) for p in priors],
        frozen_choice=frozen_choice,
    )


def policy_priors(policy, setting: Setting, space: StateSpace) -> list[np.ndarray]:
    keys = enumerate_input_keys(setting, space)
    if hasattr(policy, "predict_many"):
        return policy.predict_many(keys)
    return [policy.predict(k) for k in keys]


def frozen_index_array(
    frozen_by_key: dict[TransitionKey, int], setting: Setting, space: StateSpace
) -> list[int]:
    return [frozen_by_key.get(k, -1) for k in enumerate_input_keys(setting, space)]


def scenario_move(scenario: Scenario, round_: int) -> tuple[tuple[int, ...], tuple[int, ...]]:
    """The scenario's loss edge for one round, in engine encoding."""
    crashes = sorted((c for c in scenario.crashes if c.round == round_), key=lambda c: c.proc)
    procs = tuple(c.proc for c in crashes)
    masks = tuple(sum(1 << q for q in c.delivered_to) for c in crashes)
    return procs, masks


@dataclass
class RoundDecision:
    """Per distinct input key at one round: the searched distribution over
    legal outputs and the output actually applied."""

    key: TransitionKey
    distribution: np.ndarray
    applied: int
    frozen: bool


def simulate(
    ctx: EngineCtx,
    config: ProtocolConfig,
    init: Sequence[int],
    iterations: int,
    target_move: tuple[tuple[int, ...], tuple[int, ...]],
):
    """One search from `config` to protocol termination. Returns raw visit
    counts per distinct key under the targeted loss edge plus root stats."""
    return _kernel.simulate_counts(
        ctx,
        config.round,
        list(config.states),
        list(config.crashed),
        config.budget,
        int(config.any_loss),
        list(init),
        iterations,
        list(target_move[0]),
        list(target_move[1]),
    )


def root_best_response(root_stats) -> float:
    """Protocol-perspective value of the adversary's best-looking reply."""
    _, n, w = root_stats
    values = [-w[i] / n[i] for i in range(len(n)) if n[i] > 0]
    return min(values) if values else 0.0


def index_to_key(idx: int, setting: Setting, space: StateSpace) -> TransitionKey:
    m = setting.n - 1
    round1 = space.x * (space.x + 1) ** m
    per_round = space.k * (space.k + 1) ** m
    if idx < round1:
        round_, base, first, lost_digit = 1, space.x + 1, space.initial_ids.start, space.x
    else:
        idx -= round1
        round_ = 2 + idx // per_round
        idx %= per_round
        base, first, lost_digit = space.k + 1, space.d, space.k
    digits = []
    for _ in range(m):
        digits.append(idx % base)
        idx //= base
    digits.reverse()
    own = first + idx
    others = tuple(space.lost if dg == lost_digit else first + dg for dg in digits)
    return TransitionKey(round_, own, others)


def run_mcts(
    scenario: Scenario,
    policy,
    frozen_by_key: dict[TransitionKey, int],
    phase: Phase,
    setting: Setting,
    space: StateSpace,
    spec: ProtocolSpec,
    rng: np.random.Generator,
    iterations: Optional[int] = None,
    c_puct: float = 1.5,
    argmax_select: bool = False,
) -> tuple[list[tuple[TransitionKey, np.ndarray]], int, list[TransitionKey]]:
    """Episode-level search: one `simulate` per round along the scenario's
    actual losses, sampling the applied output per key from visit counts.

    Returns (training pairs, terminal reward, activated frozen keys).
    """
    iterations = default_budget(setting) if iterations is None else iterations
    priors = policy_priors(policy, setting, space)
    frozen_idx = frozen_index_array(frozen_by_key, setting, space)
    ctx = build_ctx(setting, space, spec, phase, priors, frozen_idx, c_puct)
    config = ProtocolConfig.initial(scenario, setting)
    pairs: list[tuple[TransitionKey, np.ndarray]] = []
    activated: list[TransitionKey] = []

    for t in range(1, setting.r + 1):
        move = scenario_move(scenario, t)
        counts, chain_keys, _ = simulate(ctx, config, scenario.init, iterations, move)
        outputs_by_index: dict[int, int] = {}
        for kk in chain_keys:
            key = index_to_key(kk, setting, space)
            legal = space.legal_outputs(t, setting.r)
            fr = ctx.frozen_choice[kk]
            if fr >= 0:
                dist = np.zeros(len(legal))
                dist[fr] = 1.0
                choice = fr
                activated.append(key)
            else:
                visits = np.asarray(counts[kk], dtype=np.float64)
                total = visits.sum()
                dist = visits / total if total > 0 else np.asarray(priors[kk], dtype=np.float64)
                if argmax_select:
                    choice = int(np.argmax(dist))
                else:
                    choice = int(rng.choice(len(legal), p=dist / dist.sum()))
            pairs.append((key, dist))
            outputs_by_index[kk] = legal[choice]
        config = advance(ctx, config, move, outputs_by_index)

    reward = _kernel.evaluate_outcome(
        ctx, list(scenario.init), list(config.states), list(config.crashed), int(config.any_loss)
    )
    return pairs, reward, activated


def advance(
    ctx: EngineCtx,
    config: ProtocolConfig,
    move: tuple[tuple[int, ...], tuple[int, ...]],
    outputs_by_index: dict[int, int],
) -> ProtocolConfig:
    """Apply one round: the given loss edge plus chosen outputs per key."""
    procs, masks = move
    crashing = set(procs)
    t = config.round
    states = list(config.states)
    crashed = list(config.crashed)
    any_loss = config.any_loss
    new_states = list(states)
    for p in range(ctx.n):
        if crashed[p] or p in crashing:
            continue
        vec = []
        for q in range(ctx.n):
            if q == p:
                continue
            if crashed[q] or (q in crashing and not (masks[procs.index(q)] >> p & 1)):
                vec.append(ctx.lost)
            else:
                vec.append(states[q])
        if ctx.lost in vec:
            any_loss = True
        new_states[p] = outputs_by_index[ctx.key_index(t, states[p], vec)]
    for p in crashing:
        crashed[p] = True
    return ProtocolConfig(
        round=t + 1,
        states=tuple(new_states),
        crashed=tuple(crashed),
        budget=config.budget - len(procs),
        any_loss=any_loss,
    )
