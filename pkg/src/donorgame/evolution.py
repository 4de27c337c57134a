"""Generational loop: paired games, selection, transmission, lineage.

Each generation plays the game twice on the same pairing design with
roles swapped (resources and traces reset between games), so every agent
is a final-round recipient exactly once. Survivors are the top half by
mean final score across both runs; new agents are initialized with the
survivors' strategies as advice and take over the open population slots.
With mock or scripted backends the whole experiment is a pure function
of its configuration.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from .agents import AgentProfile, Decision, DonationContext, decide, extract_strategy_sentence
from .core import (
    AgentId,
    GameConfig,
    GameState,
    advance_round,
    apply_donation,
    apply_punishment,
    build_trace,
    init_game,
)
import re as _re

from .dsl import corpus_source, parse_strategy, perturb_program
from .gateway import Gateway, make_request
from .prompts import render_strategy_prompt, render_system_prompt
from .scheduling import Schedule, make_schedule, swap_roles
from .seeds import derive_rng, derive_seed


@dataclass(frozen=True)
class ProviderSettings:
    endpoint: str = ""
    model: str = ""
    key_env: str = "PROVIDER_KEY"
    temperature: float = 0.8
    max_tokens: int = 600
    input_price: float = 0.0
    output_price: float = 0.0
    requests_per_minute: float | None = None


@dataclass(frozen=True)
class ExperimentConfig:
    game: GameConfig = field(default_factory=GameConfig)
    generations: int = 10
    runs_per_game: int = 2  # protocol constant: paired role-swapped games
    master_seed: int = 0
    backend: str = "mock"
    scripted_strategy: str = "full_donor"
    scripted_mutation: float = 0.05
    provider: ProviderSettings = field(default_factory=ProviderSettings)

    def __post_init__(self):
        if self.generations < 1:
            raise ValueError("generations must be >= 1")
        if self.runs_per_game != 2:
            raise ValueError("runs_per_game is fixed at 2 by the selection protocol")
        if self.backend not in ("mock", "scripted", "llm"):
            raise ValueError(f"unknown backend {self.backend!r}")


def resolve_strategy_source(value: str) -> str:
    """A scripted-strategy setting is either a bundled corpus name or an
    inline program source."""

    if _re.fullmatch(r"[a-z0-9_]+", value):
        return corpus_source(value)
    return value


@dataclass(frozen=True)
class ScoreTriple:
    run1: float
    run2: float
    mean: float


@dataclass
class GenerationRecord:
    generation: int
    population: list
    schedule_pair: tuple
    transcripts: tuple  # final GameStates of the two runs
    scores: dict  # AgentId -> ScoreTriple
    survivors: list  # ordered by descending score
    offspring: list = field(default_factory=list)  # (AgentId, advice ids) for the next generation


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    generations: list = field(default_factory=list)


class _NullEmitter:
    def __call__(self, event: dict) -> None:
        pass


@dataclass
class EngineServices:
    """Run-scoped collaborators: completion gateway (None for scripted),
    event sink for persistence, and per-generation progress callback."""

    gateway: Gateway | None = None
    emit: object = field(default_factory=_NullEmitter)
    progress: object = None


def _sorted_ids(scores: dict) -> list:
    return sorted(scores, key=lambda a: (-scores[a].mean, -scores[a].run1, str(a)))


def select_survivors(scores: dict, fraction: float = 0.5) -> list:
    """Top `fraction` of agents by mean score across both runs, ordered
    by descending score. Ties break on the run-1 score, then on the
    lexicographic agent id."""

    if len(scores) % 2 != 0:
        raise ValueError("population must be even")
    count = round(len(scores) * fraction)
    return _sorted_ids(scores)[:count]


def run_game(
    population: list,
    schedule: Schedule,
    cfg: ExperimentConfig,
    services: EngineServices,
    generation: int,
    game_index: int,
) -> GameState:
    """Play every scheduled round once; decisions within a round are made
    from the start-of-round state and applied together."""

    profiles = {p.id: p for p in population}
    state = init_game(cfg.game, [p.id for p in population])
    system_text = render_system_prompt(cfg.game)
    services.emit(
        {
            "type": "game_start",
            "generation": generation,
            "game": game_index,
            "group_a": [str(a) for a in schedule.group_a],
            "group_b": [str(b) for b in schedule.group_b],
            "rounds": [
                [[str(d), str(r)] for d, r in matching] for matching in schedule.rounds
            ],
        }
    )
    for matching in schedule.rounds:
        staged = []
        for donor, recipient in matching:
            trace = build_trace(state.history, recipient, state.round, cfg.game.trace_depth)
            ctx = DonationContext(
                donor=profiles[donor],
                recipient=recipient,
                recipient_resources=state.balances[recipient],
                donor_resources=state.balances[donor],
                round=state.round,
                generation=generation,
                trace=trace,
                punishment_enabled=cfg.game.punishment_enabled,
                punishment_multiplier=cfg.game.punishment_multiplier,
            )
            jitter_rng = derive_rng(
                cfg.master_seed, "jitter", generation, game_index, state.round, str(donor)
            )
            decision = decide(
                ctx, system_text=system_text, gateway=services.gateway, jitter_rng=jitter_rng
            )
            staged.append((donor, recipient, trace, decision))
        for donor, recipient, trace, decision in staged:
            donor_before = state.balances[donor]
            recipient_before = state.balances[recipient]
            state = apply_donation(state, donor, recipient, decision.donation)
            if decision.punishment_spend > 0:
                state = apply_punishment(state, donor, recipient, decision.punishment_spend)
            services.emit(
                {
                    "type": "decision",
                    "generation": generation,
                    "game": game_index,
                    "round": state.round,
                    "donor": str(donor),
                    "recipient": str(recipient),
                    "donor_before": donor_before,
                    "recipient_before": recipient_before,
                    "donation": decision.donation,
                    "punishment_spend": decision.punishment_spend,
                    "fraction": state.history[-1].fraction,
                    "clamped": decision.clamped,
                    "parse_failed": decision.parse_failed,
                    "request_id": decision.request_id,
                    "raw_response": decision.raw_response or None,
                    "trace": [
                        [e.round, str(e.actor), str(e.actor_recipient), e.fraction, e.punished]
                        for e in trace
                    ],
                }
            )
        services.emit(
            {
                "type": "round_end",
                "generation": generation,
                "game": game_index,
                "round": state.round,
                "balances": {str(a): v for a, v in sorted(state.balances.items(), key=lambda kv: str(kv[0]))},
            }
        )
        state = advance_round(state)
    services.emit(
        {
            "type": "game_end",
            "generation": generation,
            "game": game_index,
            "finals": {str(a): v for a, v in sorted(state.balances.items(), key=lambda kv: str(kv[0]))},
        }
    )
    return state


def run_generation(
    population: list,
    cfg: ExperimentConfig,
    generation: int,
    services: EngineServices,
) -> GenerationRecord:
    schedule = make_schedule(
        [p.id for p in population],
        cfg.game.rounds,
        derive_seed(cfg.master_seed, "schedule", generation),
    )
    swapped = swap_roles(schedule)
    first = run_game(population, schedule, cfg, services, generation, game_index=1)
    second = run_game(population, swapped, cfg, services, generation, game_index=2)
    scores = {
        p.id: ScoreTriple(
            run1=first.balances[p.id],
            run2=second.balances[p.id],
            mean=(first.balances[p.id] + second.balances[p.id]) / 2.0,
        )
        for p in population
    }
    survivors = select_survivors(scores)
    return GenerationRecord(
        generation=generation,
        population=list(population),
        schedule_pair=(schedule, swapped),
        transcripts=(first, second),
        scores=scores,
        survivors=survivors,
    )


def _elicit_strategy(
    agent_id: AgentId,
    generation: int,
    advice: list,
    cfg: ExperimentConfig,
    services: EngineServices,
) -> tuple:
    prompt = render_strategy_prompt(
        agent_id, generation, advice, trace_depth=cfg.game.trace_depth
    )
    req = make_request(
        render_system_prompt(cfg.game),
        prompt,
        generation=generation,
        round=0,
        agent=str(agent_id),
        provider_tag=services.gateway.provider_tag,
        temperature=services.gateway.temperature,
        max_tokens=services.gateway.max_tokens,
    )
    raw = services.gateway.complete(req)
    return extract_strategy_sentence(raw), raw, req.request_id


def spawn_offspring(
    survivors: list,
    count: int,
    generation: int,
    cfg: ExperimentConfig,
    services: EngineServices,
    parent_ids: tuple,
) -> list:
    """New agents for `generation`, advised by the previous generation's
    survivors (a list of (strategy_text, mean score), best first)."""

    if generation < 2:
        raise ValueError("offspring exist only from generation 2 onward")
    offspring = []
    for index in range(1, count + 1):
        agent_id = AgentId(generation, index)
        if cfg.backend == "scripted":
            rng = derive_rng(cfg.master_seed, "mutation", generation, index)
            source, _score = survivors[rng.randrange(len(survivors))]
            program = parse_strategy(source)
            if cfg.scripted_mutation > 0:
                program = perturb_program(program, rng, cfg.scripted_mutation)
            text = program.to_source()
            profile = AgentProfile(id=agent_id, strategy_text=text, backend="scripted", program=program)
            raw, request_id = None, None
        else:
            text, raw, request_id = _elicit_strategy(agent_id, generation, survivors, cfg, services)
            profile = AgentProfile(id=agent_id, strategy_text=text, backend=cfg.backend)
        services.emit(
            {
                "type": "strategy",
                "generation": generation,
                "agent": str(agent_id),
                "parents": [str(p) for p in parent_ids],
                "request_id": request_id,
                "raw_response": raw,
                "strategy_text": profile.strategy_text,
            }
        )
        offspring.append(profile)
    return offspring


def _initial_population(cfg: ExperimentConfig, services: EngineServices) -> list:
    population = []
    for index in range(1, cfg.game.population_size + 1):
        agent_id = AgentId(1, index)
        if cfg.backend == "scripted":
            program = parse_strategy(resolve_strategy_source(cfg.scripted_strategy))
            profile = AgentProfile(
                id=agent_id,
                strategy_text=program.to_source(),
                backend="scripted",
                program=program,
            )
            raw, request_id = None, None
        else:
            text, raw, request_id = _elicit_strategy(agent_id, 1, [], cfg, services)
            profile = AgentProfile(id=agent_id, strategy_text=text, backend=cfg.backend)
        services.emit(
            {
                "type": "strategy",
                "generation": 1,
                "agent": str(agent_id),
                "parents": [],
                "request_id": request_id,
                "raw_response": raw,
                "strategy_text": profile.strategy_text,
            }
        )
        population.append(profile)
    return population


def run_experiment(
    cfg: ExperimentConfig,
    services: EngineServices | None = None,
    *,
    start_generation: int = 1,
    resume_survivors: tuple | None = None,
    usage_snapshot_fn=None,
    stop_after: int | None = None,
) -> ExperimentResult:
    """Run (or continue) the full generational loop.

    Resuming passes `start_generation` > 1 plus `resume_survivors`, a
    (survivor profiles, advice) pair from the checkpoint; the offspring
    for the resumed generation are then spawned exactly as an
    uninterrupted run would have. `stop_after` ends the run early after
    that generation completes, leaving a resumable artifact.
    """

    services = services or EngineServices()
    result = ExperimentResult(config=cfg)
    if start_generation == 1:
        population = _initial_population(cfg, services)
    else:
        if resume_survivors is None:
            raise ValueError("resuming requires the checkpointed survivors")
        survivor_profiles, advice = resume_survivors
        offspring = spawn_offspring(
            advice,
            cfg.game.population_size - len(survivor_profiles),
            start_generation,
            cfg,
            services,
            parent_ids=tuple(p.id for p in survivor_profiles),
        )
        population = list(survivor_profiles) + offspring

    for generation in range(start_generation, cfg.generations + 1):
        record = run_generation(population, cfg, generation, services)
        result.generations.append(record)
        services.emit(
            {
                "type": "generation_end",
                "generation": generation,
                "scores": {
                    str(a): [s.run1, s.run2, s.mean]
                    for a, s in sorted(record.scores.items(), key=lambda kv: str(kv[0]))
                },
                "survivors": [str(a) for a in record.survivors],
                "usage": usage_snapshot_fn() if usage_snapshot_fn else None,
            }
        )
        if services.progress is not None:
            services.progress(record)
        if generation == cfg.generations or (stop_after is not None and generation >= stop_after):
            break
        profiles = {p.id: p for p in population}
        advice = [
            (profiles[a].strategy_text, record.scores[a].mean) for a in record.survivors
        ]
        offspring = spawn_offspring(
            advice,
            cfg.game.population_size - len(record.survivors),
            generation + 1,
            cfg,
            services,
            parent_ids=tuple(record.survivors),
        )
        record.offspring = [(p.id, tuple(record.survivors)) for p in offspring]
        population = [profiles[a] for a in record.survivors] + offspring
    return result
