import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from edca.analyzer import analyze
from edca.dataset import SyntheticSpec, generate_synthetic, split_holdout
from edca.evolution import (ADD, REMOVE, REPLACE, EvaluatedIndividual, GAConfig, SearchError,
                            crossover, dr_one_point, evolve, genome_violations, init_population,
                            mutate, mutate_index_gene, random_genome, random_search, repair,
                            tournament_select)
from edca.metrics import DRMode, dr_mode
from edca.space import ConfiguredStep, StepId


class Constant:
    def __init__(self, value=0.3):
        self.value = value

    def __call__(self, genome, seed):
        return self.value, False


class DataPenalty:
    """Deterministic stand-in: fitness grows with the data a genome keeps."""

    def __call__(self, genome, seed):
        n = 0.5 if genome.is_gene is None else len(genome.is_gene) / 400
        f = 0.5 if genome.fs_gene is None else len(genome.fs_gene) / 30
        return min(1.0, n * f + (seed % 7) * 1e-3), False


def ind(fitness, i, genome=None):
    return EvaluatedIndividual(genome, fitness, False, i)


def cfg(**kw):
    base = dict(parallel_jobs=1, time_budget_seconds=None)
    base.update(kw)
    return GAConfig(**base)


@pytest.fixture(scope="module")
def bp():
    ds = generate_synthetic(SyntheticSpec(n_rows=200, n_noise=2), seed=0)
    return analyze(ds)


def changed_slots(a, b):
    sa, sb = a.slots(), b.slots()
    return [k for k in sa if sa[k] != sb[k]]


def test_config_validation():
    with pytest.raises(ValueError):
        GAConfig(p_crossover=1.5)
    with pytest.raises(ValueError):
        GAConfig(population_size=1, elitism=1)
    with pytest.raises(ValueError):
        GAConfig(max_change_fraction=0)
    assert GAConfig.from_dict(GAConfig(seed=4).to_dict()) == GAConfig(seed=4)
    with pytest.raises(ValueError):
        GAConfig.from_dict({"bogus": 1})


def test_defaults():
    c = GAConfig()
    assert (c.population_size, c.p_crossover, c.p_mutation, c.elitism, c.tournament_size,
            c.patience, c.max_change_fraction, c.time_budget_seconds, c.parallel_jobs) == \
        (50, 0.7, 0.3, 1, 3, 5, 0.10, 900.0, 5)


def test_init_switches(bp, rng):
    off = init_population(bp, cfg(p_dr_gene_init=0.0), rng)
    assert all(dr_mode(g) is DRMode.NONE for g in off)
    on = init_population(bp, cfg(p_dr_gene_init=1.0), rng)
    assert all(dr_mode(g) is DRMode.IS_FS for g in on)
    assert all(not genome_violations(g, bp) for g in off + on)


def test_init_presence_frequency(bp, rng):
    c = cfg()
    hits = sum(random_genome(bp, c, rng).is_gene is not None for _ in range(10_000))
    assert abs(hits / 10_000 - 0.5) < 0.02


def test_init_sizes_within_bounds(bp, rng):
    for g in init_population(bp, cfg(p_dr_gene_init=1.0, population_size=200), rng):
        assert math.ceil(0.1 * bp.max_instances) <= len(g.is_gene) <= bp.max_instances
        assert math.ceil(0.1 * bp.max_features) <= len(g.fs_gene) <= bp.max_features


def test_tournament_rules(rng):
    pop = [ind(f, i) for i, f in enumerate([0.5, 0.2, 0.9, 0.2, 0.7])]
    assert tournament_select(pop, len(pop), rng).eval_index == 1
    tie = [ind(0.4, 0), ind(0.4, 1)]
    assert all(tournament_select(tie, 2, rng).eval_index == 0 for _ in range(20))
    picks = np.bincount([tournament_select(pop, 1, rng).eval_index for _ in range(5000)], minlength=5)
    assert np.all(np.abs(picks / 5000 - 0.2) < 0.03)


def test_dr_one_point_example():
    # child2 = dedupe({3, 4} | {3, 4}): duplicates collapse instead of growing the gene
    c1, c2 = dr_one_point((1, 2, 3, 4), (3, 4, 5, 6), 2)
    assert c1 == (1, 2, 5, 6) and c2 == (3, 4)


def test_crossover_absent_genes_inherited(bp, rng):
    c = cfg(p_dr_gene_init=0.0)
    a, b = init_population(bp, c, rng)[:2]
    c1, c2 = crossover(a, b, rng, bp)
    assert c1.is_gene is None and c2.is_gene is None


def test_crossover_identical_parents(bp, rng):
    a = random_genome(bp, cfg(p_dr_gene_init=1.0), rng)
    c1, c2 = crossover(a, a, rng, bp)
    assert c1 == a and c2 == a


def test_crossover_one_parent_carries(bp, rng):
    c = cfg(p_dr_gene_init=1.0)
    a = random_genome(bp, c, rng)
    b = random_genome(bp, c, rng).replace_slot("fs", None)
    c1, c2 = crossover(a, b, rng)
    assert c1.fs_gene == a.fs_gene and c2.fs_gene is None


def test_mutate_index_gene_ops(rng):
    gene = tuple(range(0, 200, 2))
    assert len(mutate_index_gene(gene, 200, REMOVE, 0.10, rng)) == 80
    assert len(mutate_index_gene(gene, 200, ADD, 0.10, rng)) == 120
    rep = mutate_index_gene(gene, 200, REPLACE, 0.10, rng)
    assert len(rep) == 100 and len(set(rep) - set(gene)) == 20
    full = tuple(range(50))
    assert mutate_index_gene(full, 50, ADD, 0.1, rng) == full


def test_repair_examples(bp, rng):
    g = random_genome(bp, cfg(p_dr_gene_init=1.0), rng)
    labels = bp.instance_labels
    two = tuple(int(i) for i in np.flatnonzero(labels != 2)[:20])
    fixed = repair(g.replace_slot("is", two), bp, rng)
    assert np.sum(labels[list(fixed.is_gene)] == 2) == 1 and len(fixed.is_gene) == 21
    assert len(repair(g.replace_slot("fs", ()), bp, rng).fs_gene) == 1
    assert repair(g, bp, rng) is g


def test_repair_clamps_hyperparameters(bp, rng):
    g = random_genome(bp, cfg(), rng)
    wild = ConfiguredStep(StepId.MODEL, "knn", {"k": 999, "weights": "bogus"})
    fixed = repair(g.replace_slot("model", wild), bp, rng).model_gene
    assert fixed.hyperparameters == {"k": 25, "weights": "uniform"}
    unknown = ConfiguredStep(StepId.MODEL, "svm", {})
    assert not genome_violations(repair(g.replace_slot("model", unknown), bp, rng), bp)


@given(st.integers(0, 2**32 - 1), st.booleans())
def test_variation_keeps_invariants(bp, seed, auto_dr):
    rng = np.random.default_rng(seed)
    c = cfg(auto_dr=auto_dr, p_dr_gene_init=0.5 if auto_dr else 1.0)
    a, b = random_genome(bp, c, rng), random_genome(bp, c, rng)
    for child in crossover(a, b, rng, bp):
        assert not genome_violations(child, bp)
        m = mutate(child, bp, c, rng)
        assert not genome_violations(m, bp)
        assert len(changed_slots(child, m)) <= 1
        if not auto_dr:
            assert m.is_gene is not None and m.fs_gene is not None


def test_evaluation_budget_three_generations(bp):
    r = evolve(bp, None, None, cfg(max_evaluations=150), evaluator=DataPenalty())
    assert len(r.history) == 3 and r.total_evaluations == 150
    assert r.pipelines_fitted == 50 + 49 + 49


def test_truncated_final_generation(bp):
    r = evolve(bp, None, None, cfg(max_evaluations=120), evaluator=DataPenalty())
    assert [h.evaluations for h in r.history] == [50, 100, 120]


def test_first_restart_at_generation_six(bp):
    r = evolve(bp, None, None, cfg(max_evaluations=50 * 12), evaluator=Constant())
    first = next(h.generation for h in r.history if h.restarts > 0)
    assert first == 6 and r.restarts == 2


def test_history_non_increasing(bp):
    r = evolve(bp, None, None, cfg(max_evaluations=400, patience=2, seed=3), evaluator=DataPenalty())
    best = [h.best_fitness for h in r.history]
    assert all(b <= a for a, b in zip(best, best[1:]))
    assert r.best.fitness == best[-1]


def test_deterministic_and_schedule_independent(bp):
    c = cfg(max_evaluations=120, population_size=20, seed=8)
    a = evolve(bp, None, None, c, evaluator=DataPenalty())
    b = evolve(bp, None, None, c, evaluator=DataPenalty())
    p = evolve(bp, None, None, cfg(max_evaluations=120, population_size=20, seed=8, parallel_jobs=2),
               evaluator=DataPenalty())
    for other in (b, p):
        assert other.best == a.best and other.history == a.history


def test_zero_budget_is_error(bp):
    with pytest.raises(SearchError):
        evolve(bp, None, None, cfg(max_evaluations=0), evaluator=Constant())
    with pytest.raises(SearchError):
        random_search(bp, None, None, cfg(max_evaluations=0), evaluator=Constant())


def test_small_budget_single_generation(bp):
    r = evolve(bp, None, None, cfg(max_evaluations=7), evaluator=DataPenalty())
    assert r.total_evaluations == 7 and len(r.history) == 1


def test_time_budget_stops_between_generations(bp):
    r = evolve(bp, None, None, cfg(time_budget_seconds=0.0), evaluator=Constant())
    assert len(r.history) == 1 and r.total_evaluations == 50


def test_random_search_single_and_deterministic(bp):
    one = random_search(bp, None, None, cfg(max_evaluations=1), evaluator=DataPenalty())
    g = random_genome(bp, cfg(), np.random.default_rng(cfg().seed))
    assert one.best.genome == g and one.total_evaluations == 1
    a = random_search(bp, None, None, cfg(max_evaluations=90), evaluator=DataPenalty())
    b = random_search(bp, None, None, cfg(max_evaluations=90), evaluator=DataPenalty())
    assert a.best == b.best and a.history == b.history


@pytest.mark.slow
def test_real_search_beats_coin_flip():
    ds = generate_synthetic(SyntheticSpec(n_rows=200), seed=1)
    sp = split_holdout(ds, 0.25, seed=0)
    train, val = ds.take(sp.train_indices), ds.take(sp.val_indices)
    b = analyze(train)
    for search in (evolve, random_search):
        r = search(b, train, val, cfg(max_evaluations=200))
        assert r.best.fitness < 0.5
        assert not genome_violations(r.best.genome, b)
