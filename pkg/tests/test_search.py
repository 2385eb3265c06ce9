"""Search tests: the edge-score formula, engine parity, frozen bypass, and
exact agreement with a brute-force game solver where the tree is shallow."""

import numpy as np
import pytest

from protosynth import _engine_py
from protosynth.model import (
    Crash,
    Scenario,
    Setting,
    consensus_spec,
    encode_state_space,
    enumerate_input_keys,
    key_index,
)
from protosynth.policy import MlpPolicy
from protosynth.properties import builtin_floodset, evaluate
from protosynth.scenarios import Phase, enumerate_loss_patterns, final_phase
from protosynth.search import (
    ProtocolConfig,
    _kernel,
    build_ctx,
    default_budget,
    frozen_index_array,
    index_to_key,
    kernel_name,
    policy_priors,
    root_best_response,
    run_mcts,
    scenario_move,
    simulate,
    ucb_score,
)
from protosynth.simulator import run

CON = consensus_spec()
SP = encode_state_space(CON, 2)


class TestUcbScore:
    def test_zero_visits_zero_sum(self):
        assert ucb_score(0.0, 0.5, 0, 0, 1.0) == 0.0

    def test_hand_value(self):
        # 0.5 + 1.5 * 0.25 * sqrt(16)/(1+3) = 0.875
        assert abs(ucb_score(0.5, 0.25, 3, 16, 1.5) - 0.875) < 1e-12

    def test_zero_prior_reduces_to_q(self):
        for n_sa, n_sum in [(0, 5), (3, 100), (7, 7)]:
            assert ucb_score(0.3, 0.0, n_sa, n_sum, 2.0) == 0.3

    def test_more_visits_lower_exploration(self):
        a = ucb_score(0.0, 0.5, 1, 100, 1.5)
        b = ucb_score(0.0, 0.5, 10, 100, 1.5)
        assert a > b


def test_default_budget():
    assert default_budget(Setting(n=3, r=3, f=2, k=2)) == 9000
    assert default_budget(Setting(n=2, r=2, f=1, k=2)) == 4000


def test_index_to_key_roundtrip():
    for n, r, k in [(2, 2, 2), (3, 3, 2), (3, 2, 3)]:
        setting = Setting(n=n, r=r, f=1, k=k)
        space = encode_state_space(CON, k)
        for i, key in enumerate(enumerate_input_keys(setting, space)):
            assert index_to_key(i, setting, space) == key
            assert key_index(key, setting, space) == i


def freeze_machine(machine, setting, space):
    return {k: v for k, v in machine.transitions.items()}


def brute_force_minimax(machine, init, setting, space):
    """Exact game value of a fully fixed machine: the adversary picks the loss
    pattern, the machine plays itself out."""
    worst = 1
    for pattern in enumerate_loss_patterns(setting, final_phase(setting)):
        sc = Scenario(init=init, crashes=pattern)
        trace = run(machine, sc, setting, space)
        worst = min(worst, evaluate(CON, sc, trace, space).reward)
    return worst


class TestRunMcts:
    def setup_method(self):
        self.setting = Setting(n=2, r=2, f=1, k=2)
        self.phase = final_phase(self.setting)
        self.rng = np.random.default_rng(0)
        self.policy = MlpPolicy(self.setting, SP, rng=np.random.default_rng(0))

    def test_fully_frozen_correct_machine(self):
        machine = builtin_floodset(self.setting, SP, CON)
        frozen = freeze_machine(machine, self.setting, SP)
        for sc in [Scenario(init=(5, 6)),
                   Scenario(init=(5, 5), crashes=(Crash(1, 1, frozenset()),))]:
            pairs, reward, activated = run_mcts(
                sc, self.policy, frozen, self.phase, self.setting, SP, CON, self.rng)
            assert reward == 1
            for key, dist in pairs:
                assert dist.max() == 1.0 and dist.sum() == 1.0
            assert all(k in frozen for k in activated) and activated

    def test_frozen_path_contradicting_forced_decision(self):
        # uniform init:0 with no losses forces decision:0; freeze the path to
        # decision:1 instead and the playout must lose
        frozen = dict(builtin_floodset(self.setting, SP, CON).transitions)
        frozen[_key(1, 5, (5,))] = 2
        frozen[_key(2, 2, (2,))] = 1
        _, reward, _ = run_mcts(Scenario(init=(5, 5)), self.policy, frozen,
                                self.phase, self.setting, SP, CON, self.rng)
        assert reward == -1

    def test_pair_count_is_distinct_keys_per_round(self):
        # no crashes, uniform init: one distinct key per round
        pairs, _, _ = run_mcts(Scenario(init=(5, 5)), self.policy, {}, self.phase,
                               self.setting, SP, CON, self.rng)
        assert len(pairs) == self.setting.r
        # mixed init: two distinct round-1 keys
        pairs, _, _ = run_mcts(Scenario(init=(5, 6)), self.policy, {}, self.phase,
                               self.setting, SP, CON, self.rng)
        assert len([p for p in pairs if p[0].round == 1]) == 2

    def test_distributions_are_valid(self):
        pairs, _, _ = run_mcts(Scenario(init=(5, 6)), self.policy, {}, self.phase,
                               self.setting, SP, CON, self.rng, iterations=500)
        for key, dist in pairs:
            assert len(dist) == len(SP.legal_outputs(key.round, self.setting.r))
            assert abs(dist.sum() - 1.0) < 1e-9 and dist.min() >= 0


def _key(round_, own, others):
    from protosynth.model import TransitionKey
    return TransitionKey(round_, own, others)


class TestMinimaxAgreement:
    """With r=1 every root edge ends at a terminal once the machine is frozen,
    so the root's best response equals exact minimax for any machine."""

    def test_single_round_machines(self):
        setting = Setting(n=2, r=1, f=1, k=2)
        phase = final_phase(setting)
        policy = MlpPolicy(setting, SP, rng=np.random.default_rng(1))
        rng = np.random.default_rng(2)
        keys = enumerate_input_keys(setting, SP)
        from protosynth.model import StateMachine
        for trial in range(8):
            transitions = {k: int(rng.integers(2)) for k in keys}
            machine = StateMachine("consensus", setting, transitions)
            frozen = dict(transitions)
            for init in [(5, 5), (5, 6), (6, 6)]:
                sc = Scenario(init=init)
                priors = policy_priors(policy, setting, SP)
                ctx = build_ctx(setting, SP, CON, phase, priors,
                                frozen_index_array(frozen, setting, SP))
                config = ProtocolConfig.initial(sc, setting)
                _, _, root_stats = simulate(ctx, config, init, 300, scenario_move(sc, 1))
                got = root_best_response(root_stats)
                want = brute_force_minimax(machine, init, setting, SP)
                assert got == want

    def test_correct_machine_value_is_plus_one(self):
        setting = Setting(n=2, r=2, f=1, k=2)
        phase = final_phase(setting)
        machine = builtin_floodset(setting, SP, CON)
        policy = MlpPolicy(setting, SP, rng=np.random.default_rng(3))
        frozen = dict(machine.transitions)
        sc = Scenario(init=(5, 6))
        priors = policy_priors(policy, setting, SP)
        ctx = build_ctx(setting, SP, CON, phase, priors,
                        frozen_index_array(frozen, setting, SP))
        config = ProtocolConfig.initial(sc, setting)
        _, _, root_stats = simulate(ctx, config, sc.init, 2000, scenario_move(sc, 1))
        assert root_best_response(root_stats) == 1.0
        assert brute_force_minimax(machine, sc.init, setting, SP) == 1


class TestAdversaryMoves:
    def test_no_budget_single_move(self):
        ctx = build_ctx(Setting(n=2, r=2, f=1, k=2), SP, CON, final_phase(Setting(n=2, r=2, f=1, k=2)),
                        [[0.5, 0.5]] * 12, [-1] * 12)
        assert _engine_py.enumerate_moves(ctx, 1, [False, False], 0) == [((), ())]

    def test_phase_restricts_rounds(self):
        setting = Setting(n=2, r=2, f=1, k=2)
        ctx = build_ctx(setting, SP, CON, Phase(0), [[0.5, 0.5]] * 12, [-1] * 12)
        # phase 0 confines crashes to round 2: round 1 has only the no-loss move
        assert _engine_py.enumerate_moves(ctx, 1, [False, False], 1) == [((), ())]
        assert len(_engine_py.enumerate_moves(ctx, 2, [False, False], 1)) == 5

    def test_move_count_matches_loss_patterns_per_round(self):
        setting = Setting(n=3, r=2, f=2, k=2)
        ctx = build_ctx(setting, SP, CON, final_phase(setting),
                        [[0.5, 0.5]] * 30, [-1] * 30)
        moves = _engine_py.enumerate_moves(ctx, 1, [False, False, False], 2)
        # 1 no-loss + 3 single crashers x 4 masks + 3 pairs x 16 mask combos
        assert len(moves) == 1 + 12 + 48
        assert len(set(moves)) == len(moves)


@pytest.mark.skipif(kernel_name() != "cython", reason="compiled kernel not built")
class TestEngineParity:
    def test_bit_identical_statistics(self):
        setting = Setting(n=3, r=2, f=2, k=2)
        phase = final_phase(setting)
        policy = MlpPolicy(setting, SP, rng=np.random.default_rng(5))
        priors = policy_priors(policy, setting, SP)
        fidx = frozen_index_array({}, setting, SP)
        args = dict(n=setting.n, r=setting.r, d=SP.d, k=SP.k, x=SP.x, lost=SP.lost,
                    first_init=SP.initial_ids.start, spec_kind=0,
                    min_crash_round=phase.min_crash_round(setting), c_puct=1.5,
                    priors=[list(map(float, p)) for p in priors],
                    frozen_choice=[-1] * len(priors))
        ctx_py = _engine_py.EngineCtx(**args)
        ctx_cy = _kernel.EngineCtx(**args)
        scenarios = [
            Scenario(init=(5, 6, 5)),
            Scenario(init=(5, 5, 6), crashes=(Crash(2, 1, frozenset({0})),)),
            Scenario(init=(6, 6, 6), crashes=(Crash(0, 1, frozenset()), Crash(1, 2, frozenset({2})))),
        ]
        for sc in scenarios:
            cfg = ProtocolConfig.initial(sc, setting)
            move = scenario_move(sc, 1)
            a = _engine_py.simulate_counts(ctx_py, 1, list(cfg.states), list(cfg.crashed),
                                           cfg.budget, 0, list(sc.init), 3000,
                                           list(move[0]), list(move[1]))
            b = _kernel.simulate_counts(ctx_cy, 1, list(cfg.states), list(cfg.crashed),
                                        cfg.budget, 0, list(sc.init), 3000,
                                        list(move[0]), list(move[1]))
            assert a[0] == b[0]          # visit counts
            assert a[1] == b[1]          # chain keys
            assert a[2][1] == b[2][1]    # root N
            assert a[2][2] == b[2][2]    # root W, bit-identical doubles

    def test_evaluate_outcome_parity(self):
        args = dict(n=2, r=2, d=2, k=2, x=2, lost=4, first_init=5, spec_kind=1,
                    min_crash_round=1, c_puct=1.5, priors=[], frozen_choice=[])
        ctx_py = _engine_py.EngineCtx(**args)
        ctx_cy = _kernel.EngineCtx(**args)
        for init in [[5, 5], [5, 6], [6, 6]]:
            for states in [[0, 0], [1, 1], [0, 1]]:
                for crashed in [[False, False], [True, False]]:
                    for any_loss in (0, 1):
                        assert (_engine_py.evaluate_outcome(ctx_py, init, states, crashed, any_loss)
                                == _kernel.evaluate_outcome(ctx_cy, init, states, crashed, any_loss))
