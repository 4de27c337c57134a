"""Quantitative analyses over completed experiments.

All functions are pure readers of an ExperimentResult (freshly run or
reloaded from an artifact): per-generation resource averages, cross-run
SEM, donation matrices with population slots, survivor differentials,
punishment frequency, and the engine-simulated theoretical bound.
"""

from __future__ import annotations

import statistics
from dataclasses import dataclass, field

from .agents import AgentProfile
from .core import AgentId, GameConfig
from .dsl import parse_strategy
from .evolution import EngineServices, ExperimentConfig, ExperimentResult, run_generation


@dataclass
class GenerationStats:
    generation: int
    mean_final_resources: float
    donation_fractions: dict  # AgentId -> mean donation fraction
    mean_donation_fraction: float
    survivor_differential: float
    punishment_frequency: float | None


def average_final_resources(result: ExperimentResult) -> list:
    """Per generation: mean over agents of the mean-of-two-runs final
    balance."""

    out = []
    for record in result.generations:
        scores = record.scores.values()
        out.append(sum(s.mean for s in scores) / len(record.scores))
    return out


def sem_across_runs(series_list) -> list:
    """Per-generation (mean, sem) across several runs' series. SEM uses
    the sample standard deviation (n-1) over sqrt(n)."""

    if len(series_list) < 2:
        raise ValueError("SEM needs at least 2 runs")
    lengths = {len(s) for s in series_list}
    if len(lengths) != 1:
        raise ValueError("series differ in length")
    out = []
    for values in zip(*series_list):
        mean = statistics.mean(values)
        sem = statistics.stdev(values) / (len(values) ** 0.5)
        out.append((mean, sem))
    return out


def _agent_fractions(record) -> dict:
    """Mean donation fraction per agent over both games of a generation."""

    sums: dict = {}
    counts: dict = {}
    for state in record.transcripts:
        for ev in state.history:
            sums[ev.donor] = sums.get(ev.donor, 0.0) + ev.fraction
            counts[ev.donor] = counts.get(ev.donor, 0) + 1
    return {a: sums[a] / counts[a] for a in sums}


@dataclass
class DonationMatrix:
    agents: list  # row order: by slot, then by first generation active
    slots: dict  # AgentId -> population slot (1-based)
    generations: list
    cells: dict  # AgentId -> {generation: fraction}
    per_generation_mean: list
    mean_generation_change: float


def _assign_slots(result: ExperimentResult) -> dict:
    """Population slots: generation-1 agents take slots in id order; each
    new agent fills a slot freed by a non-survivor."""

    slots: dict = {}
    for i, profile in enumerate(sorted((p for p in result.generations[0].population), key=lambda p: p.id.member)):
        slots[profile.id] = i + 1
    for record in result.generations[:-1]:
        freed = sorted(
            slots[a] for a in (set(p.id for p in record.population) - set(record.survivors))
        )
        newcomers = sorted((a for a, _parents in record.offspring), key=lambda a: a.member)
        for slot, agent in zip(freed, newcomers):
            slots[agent] = slot
    return slots


def donation_matrix(result: ExperimentResult) -> DonationMatrix:
    generations = [r.generation for r in result.generations]
    cells: dict = {}
    per_gen_mean = []
    for record in result.generations:
        fractions = _agent_fractions(record)
        per_gen_mean.append(sum(fractions.values()) / len(fractions))
        for agent, value in fractions.items():
            cells.setdefault(agent, {})[record.generation] = value
    slots = _assign_slots(result)
    agents = sorted(cells, key=lambda a: (slots[a], min(cells[a])))
    if len(per_gen_mean) > 1:
        diffs = [b - a for a, b in zip(per_gen_mean, per_gen_mean[1:])]
        mean_change = sum(diffs) / len(diffs)
    else:
        mean_change = 0.0
    return DonationMatrix(
        agents=agents,
        slots=slots,
        generations=generations,
        cells=cells,
        per_generation_mean=per_gen_mean,
        mean_generation_change=mean_change,
    )


def survivor_differential(result: ExperimentResult) -> list:
    """Per generation: (mean donation fraction of survivors - mean of
    non-survivors) / population mean; 0 when the population mean is 0."""

    out = []
    for record in result.generations:
        fractions = _agent_fractions(record)
        survivors = set(record.survivors)
        in_group = [fractions[a] for a in fractions if a in survivors]
        out_group = [fractions[a] for a in fractions if a not in survivors]
        population_mean = sum(fractions.values()) / len(fractions)
        if population_mean == 0 or not in_group or not out_group:
            out.append(0.0)
            continue
        diff = sum(in_group) / len(in_group) - sum(out_group) / len(out_group)
        out.append(diff / population_mean)
    return out


def _encounters(result: ExperimentResult):
    for record in result.generations:
        for state in record.transcripts:
            yield from state.history


def punishment_frequency(result: ExperimentResult) -> float:
    """Fraction of encounters in which the donor spent on punishment."""

    if not result.config.game.punishment_enabled:
        raise ValueError("punishment is disabled for this run")
    events = list(_encounters(result))
    punished = sum(1 for ev in events if ev.punishment_spend > 0)
    return punished / len(events)


def per_generation_punishment(result: ExperimentResult) -> list:
    out = []
    for record in result.generations:
        events = [ev for state in record.transcripts for ev in state.history]
        out.append(sum(1 for ev in events if ev.punishment_spend > 0) / len(events))
    return out


def generation_stats(result: ExperimentResult) -> list:
    averages = average_final_resources(result)
    differentials = survivor_differential(result)
    punishment = (
        per_generation_punishment(result)
        if result.config.game.punishment_enabled
        else [None] * len(result.generations)
    )
    stats = []
    for record, avg, diff, pf in zip(result.generations, averages, differentials, punishment):
        fractions = _agent_fractions(record)
        stats.append(
            GenerationStats(
                generation=record.generation,
                mean_final_resources=avg,
                donation_fractions=fractions,
                mean_donation_fraction=sum(fractions.values()) / len(fractions),
                survivor_differential=diff,
                punishment_frequency=pf,
            )
        )
    return stats


def max_average_resources(config: GameConfig) -> float:
    """Average final resources under the all-100%-donation policy,
    obtained by running the actual engine for one generation rather than
    from a closed form."""

    program = parse_strategy("init 100%")
    population = [
        AgentProfile(
            id=AgentId(1, i),
            strategy_text=program.to_source(),
            backend="scripted",
            program=program,
        )
        for i in range(1, config.population_size + 1)
    ]
    cfg = ExperimentConfig(game=config, generations=1, backend="scripted", master_seed=0)
    record = run_generation(population, cfg, 1, EngineServices())
    return sum(s.mean for s in record.scores.values()) / len(record.scores)
