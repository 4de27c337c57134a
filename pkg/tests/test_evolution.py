import random

import pytest

from donorgame.agents import AgentProfile
from donorgame.core import AgentId, GameConfig
from donorgame.dsl import parse_strategy
from donorgame.evolution import (
    EngineServices,
    ExperimentConfig,
    ScoreTriple,
    run_experiment,
    run_generation,
    select_survivors,
    spawn_offspring,
)
from donorgame.gateway import Gateway, MockProvider, UsageLedger


def scripted_cfg(strategy="full_donor", generations=1, mutation=0.0, **game_kwargs):
    return ExperimentConfig(
        game=GameConfig(**game_kwargs),
        generations=generations,
        backend="scripted",
        scripted_strategy=strategy,
        scripted_mutation=mutation,
        master_seed=13,
    )


def mock_services(seed=0):
    usage = UsageLedger()
    gateway = Gateway(MockProvider(seed=seed), provider_tag="mock", usage=usage)
    return EngineServices(gateway=gateway), usage


def scripted_population(source, n=12):
    program = parse_strategy(source)
    return [
        AgentProfile(id=AgentId(1, i), strategy_text=program.to_source(), backend="scripted", program=program)
        for i in range(1, n + 1)
    ]


class TestSelectSurvivors:
    def scores(self, means, run1=None):
        ids = [AgentId(1, i) for i in range(1, len(means) + 1)]
        run1 = run1 or means
        return {
            a: ScoreTriple(run1=r1, run2=2 * m - r1, mean=m)
            for a, m, r1 in zip(ids, means, run1)
        }

    def test_distinct_scores_take_top_half(self):
        scores = self.scores([10, 40, 20, 60, 50, 30, 80, 70, 90, 100, 110, 120])
        survivors = select_survivors(scores)
        assert [scores[a].mean for a in survivors] == [120, 110, 100, 90, 80, 70]

    def test_all_equal_takes_lexicographically_smallest(self):
        scores = self.scores([5.0] * 12)
        survivors = select_survivors(scores)
        assert [str(a) for a in survivors] == ["1_1", "1_10", "1_11", "1_12", "1_2", "1_3"]

    def test_tie_straddling_cut_decided_by_run1(self):
        means = [1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 50, 50]
        run1 = [1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 60, 40]
        scores = self.scores(means, run1)
        # agents 11 and 12 tie on the mean; the higher-run1 one ranks first
        survivors = select_survivors(scores)
        assert str(survivors[0]) == "1_11"
        assert str(survivors[1]) == "1_12"

    def test_matches_brute_force_comparator(self):
        rng = random.Random(99)
        for _ in range(300):
            ids = [AgentId(1, i) for i in range(1, 13)]
            scores = {}
            for a in ids:
                r1 = rng.choice([0.0, 10.0, 20.0, 30.0])
                r2 = rng.choice([0.0, 10.0, 20.0, 30.0])
                scores[a] = ScoreTriple(run1=r1, run2=r2, mean=(r1 + r2) / 2)
            expected = sorted(
                ids, key=lambda a: (-scores[a].mean, -scores[a].run1, str(a))
            )[:6]
            assert select_survivors(scores) == expected

    def test_odd_population_rejected(self):
        scores = {AgentId(1, i): ScoreTriple(1, 1, 1) for i in range(1, 4)}
        with pytest.raises(ValueError):
            select_survivors(scores)


class TestRunGeneration:
    def test_full_donors_hit_bound(self):
        record = run_generation(scripted_population("init 100%"), scripted_cfg(), 1, EngineServices())
        means = [s.mean for s in record.scores.values()]
        assert sum(means) / len(means) == 30720.0

    def test_free_riders_keep_endowment(self):
        record = run_generation(scripted_population("init 0%"), scripted_cfg(), 1, EngineServices())
        assert all(s.run1 == 10.0 and s.run2 == 10.0 and s.mean == 10.0 for s in record.scores.values())

    def test_each_agent_final_round_recipient_once(self):
        record = run_generation(scripted_population("init 50%"), scripted_cfg(), 1, EngineServices())
        first, second = record.schedule_pair
        finals = [r for _, r in first.rounds[-1]] + [r for _, r in second.rounds[-1]]
        assert sorted(map(str, finals)) == sorted(str(p.id) for p in record.population)

    def test_resources_reset_between_games(self):
        record = run_generation(scripted_population("init 50%"), scripted_cfg(), 1, EngineServices())
        for state in record.transcripts:
            for ev in state.history:
                if ev.round == 1:
                    assert ev.donor_resources_before == 10.0

    def test_survivor_count_is_half(self):
        record = run_generation(scripted_population("init 50%"), scripted_cfg(), 1, EngineServices())
        assert len(record.survivors) == 6


class TestSpawnOffspring:
    def advice(self):
        return [(f"init {40 + i}%", 100.0 - i) for i in range(6)]

    def test_naming_scheme(self):
        cfg = scripted_cfg(mutation=0.05)
        out = spawn_offspring(self.advice(), 6, 4, cfg, EngineServices(), parent_ids=())
        assert [str(p.id) for p in out] == ["4_1", "4_2", "4_3", "4_4", "4_5", "4_6"]

    def test_scripted_perturbation_stays_in_unit_interval(self):
        cfg = scripted_cfg(mutation=0.05)
        advice = [("init 2%", 10.0), ("init 99%", 9.0)]
        for gen in range(2, 30):
            for p in spawn_offspring(advice, 6, gen, cfg, EngineServices(), parent_ids=()):
                assert 0.0 <= p.program.initial_fraction <= 1.0

    def test_zero_mutation_copies_exactly(self):
        cfg = scripted_cfg(mutation=0.0)
        out = spawn_offspring([("init 100%", 1.0)], 6, 2, cfg, EngineServices(), parent_ids=())
        assert all(p.strategy_text == "init 100%" for p in out)

    def test_generation_one_rejected(self):
        with pytest.raises(ValueError):
            spawn_offspring(self.advice(), 6, 1, scripted_cfg(), EngineServices(), parent_ids=())

    def test_mock_offspring_prompt_lists_all_survivors(self):
        cfg = ExperimentConfig(game=GameConfig(), generations=2, backend="mock", master_seed=5)
        services, _usage = mock_services()
        captured = []
        services.gateway.log_sink = captured.append
        advice = [(f"My strategy will be plan {i}.", float(100 - i)) for i in range(6)]
        spawn_offspring(advice, 6, 2, cfg, services, parent_ids=())
        prompts = [r["user_text"] for r in captured if r["status"] == "ok"]
        assert len(prompts) == 6
        for text, score in advice:
            assert all(f'"{text}" (final score: {score:.2f})' in p for p in prompts)


class TestRunExperiment:
    def test_full_donor_fixed_point_across_generations(self):
        cfg = scripted_cfg(generations=10)
        result = run_experiment(cfg)
        for record in result.generations:
            means = [s.mean for s in record.scores.values()]
            assert sum(means) / len(means) == 30720.0

    def test_sixty_six_agents_over_ten_generations(self):
        cfg = ExperimentConfig(game=GameConfig(), generations=10, backend="mock", master_seed=1)
        services, _ = mock_services(1)
        result = run_experiment(cfg, services)
        seen = {str(p.id) for record in result.generations for p in record.population}
        assert len(seen) == 12 + 9 * 6

    def test_population_size_constant(self):
        cfg = ExperimentConfig(game=GameConfig(), generations=5, backend="mock", master_seed=2)
        services, _ = mock_services(2)
        result = run_experiment(cfg, services)
        assert all(len(r.population) == 12 for r in result.generations)

    def test_lineage_closure(self):
        cfg = ExperimentConfig(game=GameConfig(), generations=5, backend="mock", master_seed=3)
        services, _ = mock_services(3)
        result = run_experiment(cfg, services)
        for prev, nxt in zip(result.generations, result.generations[1:]):
            survivor_ids = set(prev.survivors)
            newcomer_ids = {p.id for p in nxt.population} - {p.id for p in prev.population}
            assert {a for a, _ in prev.offspring} == newcomer_ids
            for _agent, parents in prev.offspring:
                assert set(parents) == survivor_ids
            assert {p.id for p in nxt.population} == survivor_ids | newcomer_ids

    def test_deterministic_given_seed(self):
        cfg = ExperimentConfig(game=GameConfig(), generations=3, backend="mock", master_seed=4)
        services_a, _ = mock_services(4)
        services_b, _ = mock_services(4)
        a = run_experiment(cfg, services_a)
        b = run_experiment(cfg, services_b)
        for x, y in zip(a.generations, b.generations):
            assert x.scores == y.scores and x.survivors == y.survivors

    def test_mock_seed_comes_from_master_seed(self):
        cfg5 = ExperimentConfig(game=GameConfig(), generations=1, backend="mock", master_seed=5)
        cfg6 = ExperimentConfig(game=GameConfig(), generations=1, backend="mock", master_seed=6)
        services5, _ = mock_services(5)
        services6, _ = mock_services(6)
        a = run_experiment(cfg5, services5)
        b = run_experiment(cfg6, services6)
        assert a.generations[0].scores != b.generations[0].scores

    def test_stop_after_leaves_partial_result(self):
        cfg = scripted_cfg(generations=10)
        result = run_experiment(cfg, stop_after=4)
        assert len(result.generations) == 4

    def test_runs_per_game_fixed(self):
        with pytest.raises(ValueError):
            ExperimentConfig(game=GameConfig(), runs_per_game=3)
