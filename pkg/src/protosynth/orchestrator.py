"""The outer synthesis loop: episodes of scenario search, freezing, training,
exhaustive validation, and phase advancement; plus the benchmark harness
comparing the three search modes."""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .freezer import (
    FreezeList,
    determine_freezing,
    determine_unfreeze,
    group_freeze,
)
from .model import SPECS, Setting, StateMachine, encode_state_space
from .policy import MlpPolicy, TabularPolicy, TrainingBuffer
from .scenarios import Phase, enumerate_scenarios, final_phase, sample_scenario
from .search import run_mcts
from .verifier import extract_machine, validate

MODES = ("mcts", "mcts_dfs", "ggms")


def default_time_limit(n: int) -> float:
    """Desk-scale timeouts: 1 h for n=2, 4 h for n=3, 24 h beyond."""
    return {2: 3600.0, 3: 14400.0}.get(n, 86400.0)


@dataclass
class RunConfig:
    protocol: str  # "consensus" | "atomic_commit"
    setting: Setting
    mode: str = "ggms"
    seed: int = 0
    time_limit: Optional[float] = None
    episode_scenarios: int = 100
    mcts_iterations: Optional[int] = None  # default r*n*1000
    c_puct: float = 1.5
    epochs: int = 10
    batch_size: int = 32
    lr: float = 0.001
    buffer_capacity: int = 20000
    policy_kind: str = "mlp"  # "mlp" | "tabular"
    oracle_enabled: bool = True
    oracle_bound: int = 24
    argmax_select: bool = False
    workers: int = 1
    max_episodes: Optional[int] = None
    machine_out: Optional[str] = None
    log_out: Optional[str] = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError("mode must be one of %s" % (MODES,))
        if self.protocol not in SPECS:
            raise ValueError("unknown protocol %r" % self.protocol)


@dataclass
class EpisodeLog:
    episode: int
    phase: int
    counterexamples: int
    freezes: int
    unfreezes: int
    buffer_size: int
    seconds: float


@dataclass
class SynthesisResult:
    status: str  # "verified" | "timeout"
    machine: StateMachine
    episodes: list[EpisodeLog] = field(default_factory=list)
    freeze_events: list[tuple[int, str, str, int]] = field(default_factory=list)
    wall_time: float = 0.0


def synthesize(config: RunConfig) -> SynthesisResult:
    """Run one synthesis attempt to verification or timeout."""
    spec = SPECS[config.protocol]()
    setting = config.setting
    space = encode_state_space(spec, setting.k)
    rng = np.random.default_rng(config.seed)
    if config.policy_kind == "mlp":
        policy = MlpPolicy(setting, space, rng=rng)
    else:
        policy = TabularPolicy(setting, space)
    buffer = TrainingBuffer(capacity=config.buffer_capacity)
    time_limit = config.time_limit if config.time_limit is not None else default_time_limit(setting.n)

    if config.mode == "ggms":
        freeze_list = group_freeze(spec, setting, space)
        phase = Phase(0)
    else:
        freeze_list = FreezeList()
        phase = final_phase(setting)

    scenario_cache: dict[int, list] = {}

    def phase_scenarios(ph: Phase):
        if ph.phase_id not in scenario_cache:
            scenario_cache[ph.phase_id] = enumerate_scenarios(setting, spec, space, ph)
        return scenario_cache[ph.phase_id]

    failed: list = []
    episodes: list[EpisodeLog] = []
    freeze_events: list[tuple[int, str, str, int]] = []
    best: tuple[int, Optional[StateMachine]] = (1 << 30, None)
    last_freeze_episode = -10**9
    episode = 0
    start = time.monotonic()
    status = "timeout"
    machine = None

    while True:
        ep_start = time.monotonic()
        freezes = unfreezes = 0
        for _ in range(config.episode_scenarios):
            scenario = sample_scenario(phase_scenarios(phase), failed, rng)
            pairs, reward, activated = run_mcts(
                scenario,
                policy,
                freeze_list.by_key(),
                phase,
                setting,
                space,
                spec,
                rng,
                iterations=config.mcts_iterations,
                c_puct=config.c_puct,
                argmax_select=config.argmax_select,
            )
            buffer.extend(pairs)
            if config.mode != "mcts":
                events = determine_unfreeze(
                    reward,
                    activated,
                    freeze_list,
                    setting,
                    space,
                    spec,
                    scenario,
                    oracle_enabled=config.oracle_enabled,
                    oracle_bound=config.oracle_bound,
                )
                for action, entry in events:
                    unfreezes += 1
                    freeze_events.append((episode, action, str(entry.key), entry.current))
        if config.mode != "mcts":
            entry = determine_freezing(
                buffer, freeze_list, space, setting, episode, last_freeze_episode
            )
            if entry is not None:
                freezes += 1
                last_freeze_episode = episode
                freeze_events.append((episode, "freeze", str(entry.key), entry.current))
        policy.train(buffer, epochs=config.epochs, batch_size=config.batch_size,
                     lr=config.lr, rng=rng)
        machine = extract_machine(policy, freeze_list.by_key(), setting, space, spec.name)
        cexs = validate(machine, setting, spec, space, phase, workers=config.workers)
        failed = [c.scenario for c in cexs]
        episodes.append(
            EpisodeLog(
                episode=episode,
                phase=phase.phase_id,
                counterexamples=len(cexs),
                freezes=freezes,
                unfreezes=unfreezes,
                buffer_size=len(buffer),
                seconds=time.monotonic() - ep_start,
            )
        )
        if len(cexs) < best[0]:
            best = (len(cexs), machine)
        if not cexs:
            if phase.is_final(setting):
                status = "verified"
                break
            phase = Phase(phase.phase_id + 1)
        episode += 1
        if time.monotonic() - start > time_limit:
            break
        if config.max_episodes is not None and episode >= config.max_episodes:
            break

    wall = time.monotonic() - start
    result_machine = machine if status == "verified" else (best[1] or machine)
    result = SynthesisResult(
        status=status,
        machine=result_machine,
        episodes=episodes,
        freeze_events=freeze_events,
        wall_time=wall,
    )
    if config.log_out:
        write_log(config.log_out, result)
    return result


def write_log(path: str, result: SynthesisResult) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["episode", "phase", "counterexamples", "freezes", "unfreezes",
                    "buffer_size", "seconds"])
        for ep in result.episodes:
            w.writerow([ep.episode, ep.phase, ep.counterexamples, ep.freezes,
                        ep.unfreezes, ep.buffer_size, "%.3f" % ep.seconds])
    if result.freeze_events:
        with open(path + ".events.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["episode", "action", "key", "output"])
            for row in result.freeze_events:
                w.writerow(row)


def bench(configs: list[RunConfig], repeats: int) -> list[dict]:
    """Run each config `repeats` times with distinct seeds; report success
    counts and wall-time stats of the successful runs."""
    table = []
    for cfg in configs:
        times = []
        successes = 0
        for i in range(repeats):
            run_cfg = RunConfig(**{**cfg.__dict__, "seed": cfg.seed + i,
                                   "machine_out": None, "log_out": None})
            result = synthesize(run_cfg)
            if result.status == "verified":
                successes += 1
                times.append(result.wall_time)
        table.append(
            {
                "protocol": cfg.protocol,
                "n": cfg.setting.n,
                "f": cfg.setting.f,
                "r": cfg.setting.r,
                "mode": cfg.mode,
                "runs": repeats,
                "successes": successes,
                "avg_s": float(np.mean(times)) if times else None,
                "min_s": float(np.min(times)) if times else None,
                "max_s": float(np.max(times)) if times else None,
            }
        )
    return table


def format_bench_table(table: list[dict]) -> str:
    header = "%-14s %-3s %-3s %-3s %-8s %-9s %-9s %-9s %-9s" % (
        "protocol", "n", "f", "r", "mode", "success", "avg_s", "min_s", "max_s")
    lines = [header, "-" * len(header)]
    for row in table:
        fmt = lambda v: "-" if v is None else "%.1f" % v
        lines.append(
            "%-14s %-3d %-3d %-3d %-8s %3d/%-5d %-9s %-9s %-9s"
            % (row["protocol"], row["n"], row["f"], row["r"], row["mode"],
               row["successes"], row["runs"], fmt(row["avg_s"]), fmt(row["min_s"]),
               fmt(row["max_s"]))
        )
    return "\n".join(lines)
