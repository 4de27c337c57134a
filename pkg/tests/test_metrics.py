import pytest

from donorgame.agents import AgentProfile
from donorgame.core import AgentId, DonationEvent, GameConfig, GameState
from donorgame.evolution import (
    EngineServices,
    ExperimentConfig,
    ExperimentResult,
    GenerationRecord,
    ScoreTriple,
    run_experiment,
)
from donorgame.gateway import Gateway, MockProvider, UsageLedger
from donorgame.metrics import (
    average_final_resources,
    donation_matrix,
    generation_stats,
    max_average_resources,
    punishment_frequency,
    sem_across_runs,
    survivor_differential,
)


def scripted_result(strategy="init 100%", generations=1, **game_kwargs):
    cfg = ExperimentConfig(
        game=GameConfig(**game_kwargs),
        generations=generations,
        backend="scripted",
        scripted_strategy=strategy,
        scripted_mutation=0.0,
        master_seed=3,
    )
    return run_experiment(cfg)


def mock_result(generations=3, seed=8, **game_kwargs):
    cfg = ExperimentConfig(
        game=GameConfig(**game_kwargs), generations=generations, backend="mock", master_seed=seed
    )
    gateway = Gateway(MockProvider(seed=seed), provider_tag="mock", usage=UsageLedger())
    return run_experiment(cfg, EngineServices(gateway=gateway))


def fixture_result(fraction_by_agent, survivors, punished_flags=None, population_size=4):
    """Handcrafted single-generation result: one event per agent with the
    given donation fraction (and optional punishment spends)."""

    cfg = ExperimentConfig(
        game=GameConfig(
            population_size=population_size,
            rounds=2,
            punishment_enabled=punished_flags is not None,
        ),
        generations=1,
        backend="scripted",
        master_seed=0,
    )
    agents = list(fraction_by_agent)
    punished_flags = punished_flags or {}
    events = []
    for i, agent in enumerate(agents):
        recipient = agents[(i + 1) % len(agents)]
        events.append(
            DonationEvent(
                round=1,
                donor=agent,
                recipient=recipient,
                amount=10.0 * fraction_by_agent[agent],
                donor_resources_before=10.0,
                fraction=fraction_by_agent[agent],
                punishment_spend=1.0 if punished_flags.get(agent) else 0.0,
            )
        )
    state = GameState(config=cfg.game, round=2, balances={a: 10.0 for a in agents}, history=tuple(events))
    profiles = [
        AgentProfile(id=a, strategy_text="x", backend="mock") for a in agents
    ]
    scores = {a: ScoreTriple(10.0, 10.0, 10.0) for a in agents}
    record = GenerationRecord(
        generation=1,
        population=profiles,
        schedule_pair=(None, None),
        transcripts=(state, state),
        scores=scores,
        survivors=list(survivors),
    )
    return ExperimentResult(config=cfg, generations=[record])


A1, A2, A3, A4 = (AgentId(1, i) for i in range(1, 5))


class TestAverageFinalResources:
    def test_all_full_donors(self):
        assert average_final_resources(scripted_result()) == [30720.0]

    def test_all_free_riders(self):
        result = scripted_result("init 0%", generations=3)
        assert average_final_resources(result) == [10.0, 10.0, 10.0]

    def test_tiny_fixture_hand_computed(self):
        # 4 agents, 2 rounds, everyone donates 50%:
        # round 1: donors 10 -> 5, recipients 10 + 2*5 = 20
        # round 2: donors 20 -> 10, recipients 5 + 2*10 = 25
        # finals 25/25/10/10 in each run -> average 17.5
        result = scripted_result("init 50%; later 50%", population_size=4, rounds=2)
        assert average_final_resources(result) == [pytest.approx(17.5)]


class TestSem:
    def test_reference_pair(self):
        assert sem_across_runs([[10.0], [20.0]]) == [(15.0, 5.0)]

    def test_identical_runs_have_zero_sem(self):
        series = [[10.0, 20.0]] * 3
        assert sem_across_runs(series) == [(10.0, 0.0), (20.0, 0.0)]

    def test_requires_two_runs(self):
        with pytest.raises(ValueError):
            sem_across_runs([[10.0]])

    def test_five_runs_match_independent_recompute(self):
        series = [[float(10 * (i + 1) + g) for g in range(4)] for i in range(5)]
        got = sem_across_runs(series)
        for g in range(4):
            values = [series[i][g] for i in range(5)]
            mean = sum(values) / 5
            var = sum((v - mean) ** 2 for v in values) / 4
            sem = (var ** 0.5) / 5 ** 0.5
            assert got[g][0] == pytest.approx(mean)
            assert got[g][1] == pytest.approx(sem)


class TestDonationMatrix:
    def test_full_donors_all_cells_one(self):
        matrix = donation_matrix(scripted_result(generations=2))
        for agent in matrix.agents:
            for value in matrix.cells[agent].values():
                assert value == 1.0

    def test_constant_half_donors(self):
        matrix = donation_matrix(scripted_result("init 50%; later 50%", generations=3))
        for agent in matrix.agents:
            for value in matrix.cells[agent].values():
                assert value == pytest.approx(0.5)
        assert matrix.mean_generation_change == pytest.approx(0.0)

    def test_declining_fixture_has_negative_change(self):
        # handcrafted generations whose population-mean fraction falls by
        # exactly 0.1 per generation
        records = []
        cfg = ExperimentConfig(
            game=GameConfig(population_size=4, rounds=2),
            generations=3,
            backend="scripted",
            master_seed=0,
        )
        agents = [A1, A2, A3, A4]
        for g, level in enumerate([0.6, 0.5, 0.4], start=1):
            events = tuple(
                DonationEvent(
                    round=1,
                    donor=a,
                    recipient=agents[(i + 1) % 4],
                    amount=10.0 * level,
                    donor_resources_before=10.0,
                    fraction=level,
                )
                for i, a in enumerate(agents)
            )
            state = GameState(config=cfg.game, round=2, balances={a: 10.0 for a in agents}, history=events)
            records.append(
                GenerationRecord(
                    generation=g,
                    population=[AgentProfile(id=a, strategy_text="x", backend="mock") for a in agents],
                    schedule_pair=(None, None),
                    transcripts=(state, state),
                    scores={a: ScoreTriple(10.0, 10.0, 10.0) for a in agents},
                    survivors=agents[:2],
                    offspring=[],
                )
            )
        matrix = donation_matrix(ExperimentResult(config=cfg, generations=records))
        assert matrix.per_generation_mean == [pytest.approx(0.6), pytest.approx(0.5), pytest.approx(0.4)]
        assert matrix.mean_generation_change == pytest.approx(-0.1)

    def test_absent_agents_marked_empty(self):
        result = mock_result(generations=3)
        matrix = donation_matrix(result)
        newcomers = [a for a in matrix.agents if a.generation == 3]
        assert newcomers
        for agent in newcomers:
            assert 1 not in matrix.cells[agent]
            assert 2 not in matrix.cells[agent]

    def test_slots_reuse_freed_rows(self):
        result = mock_result(generations=4)
        matrix = donation_matrix(result)
        assert sorted(set(matrix.slots.values())) == list(range(1, 13))
        for record, nxt in zip(result.generations, result.generations[1:]):
            dead = {p.id for p in record.population} - set(record.survivors)
            newcomer = {p.id for p in nxt.population} - {p.id for p in record.population}
            assert sorted(matrix.slots[a] for a in dead) == sorted(matrix.slots[a] for a in newcomer)

    def test_cells_match_raw_transcripts(self):
        result = mock_result(generations=2)
        matrix = donation_matrix(result)
        for record in result.generations:
            sums, counts = {}, {}
            for state in record.transcripts:
                for ev in state.history:
                    sums[ev.donor] = sums.get(ev.donor, 0.0) + ev.fraction
                    counts[ev.donor] = counts.get(ev.donor, 0) + 1
            for agent, total in sums.items():
                assert abs(matrix.cells[agent][record.generation] - total / counts[agent]) <= 1e-9


class TestSurvivorDifferential:
    def test_identical_population_is_zero(self):
        result = scripted_result("init 50%; later 50%")
        assert survivor_differential(result) == [0.0]

    def test_reference_fixture(self):
        result = fixture_result(
            {A1: 0.6, A2: 0.6, A3: 0.4, A4: 0.4}, survivors=[A1, A2]
        )
        assert survivor_differential(result) == [pytest.approx((0.6 - 0.4) / 0.5)]

    def test_zero_population_mean_convention(self):
        result = fixture_result({A1: 0.0, A2: 0.0, A3: 0.0, A4: 0.0}, survivors=[A1, A2])
        assert survivor_differential(result) == [0.0]

    def test_invariant_under_uniform_rescaling(self):
        base = {A1: 0.6, A2: 0.5, A3: 0.4, A4: 0.1}
        one = survivor_differential(fixture_result(base, survivors=[A1, A2]))[0]
        scaled = {a: v * 0.5 for a, v in base.items()}
        two = survivor_differential(fixture_result(scaled, survivors=[A1, A2]))[0]
        assert one == pytest.approx(two)


class TestPunishmentFrequency:
    def test_disabled_is_error(self):
        with pytest.raises(ValueError):
            punishment_frequency(scripted_result())

    def test_zero_when_no_punishments(self):
        result = scripted_result("init 50%; later 50%", punishment_enabled=True)
        assert punishment_frequency(result) == 0.0

    def test_one_in_seven(self):
        agents = [AgentId(1, i) for i in range(1, 8)]
        fractions = {a: 0.5 for a in agents}
        flags = {agents[0]: True}
        result = fixture_result(fractions, survivors=agents[:3], punished_flags=flags, population_size=8)
        # the fixture duplicates one game as both transcripts: 14 encounters, 2 punished
        freq = punishment_frequency(result)
        assert freq == pytest.approx(1 / 7)
        assert round(100 * freq, 2) == 14.29

    def test_every_encounter_punished(self):
        result = fixture_result(
            {A1: 0.5, A2: 0.5, A3: 0.5, A4: 0.5},
            survivors=[A1, A2],
            punished_flags={A1: True, A2: True, A3: True, A4: True},
        )
        assert punishment_frequency(result) == 1.0


class TestMaxAverageResources:
    def test_default_config_bound(self):
        assert max_average_resources(GameConfig()) == 30720.0

    def test_multiplier_one_conserves(self):
        assert max_average_resources(GameConfig(donation_multiplier=1.0)) == 10.0

    def test_multiplier_three_regression_value(self):
        assert max_average_resources(GameConfig(donation_multiplier=3.0)) == 3542940.0

    def test_mock_runs_respect_bounds(self):
        result = mock_result(generations=3)
        bound = max_average_resources(GameConfig())
        for value in average_final_resources(result):
            assert 10.0 <= value <= bound


class TestGenerationStats:
    def test_fields_consistent(self):
        result = mock_result(generations=2)
        stats = generation_stats(result)
        assert [s.generation for s in stats] == [1, 2]
        for st in stats:
            assert st.punishment_frequency is None
            assert 0.0 <= st.mean_donation_fraction <= 1.0
            assert st.donation_fractions

    def test_punishment_column_populated_when_enabled(self):
        result = mock_result(generations=2, punishment_enabled=True)
        for st in generation_stats(result):
            assert st.punishment_frequency is not None
