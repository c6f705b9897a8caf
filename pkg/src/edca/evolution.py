"""Genetic search over pipeline genomes.

Variation works on three kinds of gene: index-set genes for instance and
feature selection (IS/FS), configured preprocessing genes, and the model
gene. Data-reduction (DR) genes may be switched on and off by mutation, so the
search also decides whether to reduce instances, features, both or neither.
"""

from __future__ import annotations

import logging
import math
import multiprocessing as mp
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from typing import Callable, Sequence

import numpy as np

from .analyzer import Blueprint, StepSpec
from .dataset import Dataset
from .metrics import DRMode, dr_mode, fitness_from_mcc, mcc_score
from .pipeline import Genome, PipelineFailure, fit_pipeline
from .space import ConfiguredStep
from .seeds import derive_seed

log = logging.getLogger(__name__)

IMPROVEMENT_EPS = 1e-12


class SearchError(RuntimeError):
    """The search finished without a single completed evaluation."""


@dataclass
class GAConfig:
    population_size: int = 50
    p_crossover: float = 0.7
    p_mutation: float = 0.3
    tournament_size: int = 3
    elitism: int = 1
    patience: int = 5
    max_change_fraction: float = 0.10
    time_budget_seconds: float | None = 900.0
    max_evaluations: int | None = None
    auto_dr: bool = True
    use_is: bool = True
    use_fs: bool = True
    p_dr_gene_init: float = 0.5
    min_dr_fraction: float = 0.10
    parallel_jobs: int = 5
    seed: int = 0

    def __post_init__(self):
        for name in ("p_crossover", "p_mutation", "p_dr_gene_init"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {v}")
        if not 0 <= self.elitism < self.population_size:
            raise ValueError("need population_size > elitism >= 0")
        if self.tournament_size < 1:
            raise ValueError("tournament_size must be >= 1")
        if not 0.0 < self.max_change_fraction <= 1.0:
            raise ValueError("max_change_fraction must be in (0, 1]")
        if not 0.0 < self.min_dr_fraction <= 1.0:
            raise ValueError("min_dr_fraction must be in (0, 1]")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if self.max_evaluations is not None and self.max_evaluations < 0:
            raise ValueError("max_evaluations must be non-negative")
        if self.parallel_jobs < 1:
            raise ValueError("parallel_jobs must be >= 1")

    @classmethod
    def from_dict(cls, d: dict) -> "GAConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown GA config keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class EvaluatedIndividual:
    genome: Genome
    fitness: float
    failure: bool
    eval_index: int
    seed: int = 0

    @property
    def key(self) -> tuple[float, int]:
        return (self.fitness, self.eval_index)


@dataclass
class GenerationStats:
    generation: int
    best_fitness: float
    mean_fitness: float
    restarts: int
    evaluations: int


@dataclass
class SearchResult:
    best: EvaluatedIndividual
    history: list[GenerationStats]
    total_evaluations: int
    pipelines_fitted: int
    restarts: int
    wall_time: float
    failures: int = 0

    @property
    def dr_mode(self) -> DRMode:
        return dr_mode(self.best.genome)


# ---------------------------------------------------------------------------
# genome sampling


def _at_least(fraction: float, size: int) -> int:
    return max(1, math.ceil(fraction * size - 1e-9))


def random_is_gene(bp: Blueprint, rng: np.random.Generator, min_fraction: float = 0.10) -> tuple[int, ...]:
    """Instance gene of uniform size, holding at least one row of every class."""
    n = bp.max_instances
    low = min(n, max(bp.min_instances(), _at_least(min_fraction, n)))
    size = int(rng.integers(low, n + 1))
    labels = bp.instance_labels
    chosen = [int(rng.choice(np.flatnonzero(labels == c))) for c in np.unique(labels)]
    rest = np.setdiff1d(np.arange(n), chosen)
    extra = rng.choice(rest, size=max(0, size - len(chosen)), replace=False)
    return tuple(sorted(chosen + [int(i) for i in extra]))


def random_fs_gene(bp: Blueprint, rng: np.random.Generator, min_fraction: float = 0.10) -> tuple[int, ...]:
    m = bp.max_features
    size = int(rng.integers(min(m, _at_least(min_fraction, m)), m + 1))
    return tuple(sorted(int(i) for i in rng.choice(m, size=size, replace=False)))


def random_step_gene(spec: StepSpec, rng: np.random.Generator) -> ConfiguredStep:
    opt = spec.options[int(rng.integers(len(spec.options)))]
    return ConfiguredStep(spec.step_id, opt.name, opt.sample_hyperparameters(rng))


def random_genome(bp: Blueprint, cfg: GAConfig, rng: np.random.Generator) -> Genome:
    def present(enabled: bool) -> bool:
        draw = rng.random()
        return enabled and (not cfg.auto_dr or draw < cfg.p_dr_gene_init)

    has_is, has_fs = present(cfg.use_is), present(cfg.use_fs)
    is_gene = random_is_gene(bp, rng, cfg.min_dr_fraction) if has_is else None
    fs_gene = random_fs_gene(bp, rng, cfg.min_dr_fraction) if has_fs else None
    preps = tuple(random_step_gene(s, rng) for s in bp.prep_steps)
    return Genome(is_gene, fs_gene, preps, random_step_gene(bp.model_step, rng))


def init_population(bp: Blueprint, cfg: GAConfig, rng: np.random.Generator) -> list[Genome]:
    if bp.max_features == 0:
        raise ValueError("blueprint has no features")
    return [random_genome(bp, cfg, rng) for _ in range(cfg.population_size)]


# ---------------------------------------------------------------------------
# repair


def _repair_step(gene: ConfiguredStep | None, spec: StepSpec, rng: np.random.Generator) -> ConfiguredStep:
    if gene is None or gene.step_id is not spec.step_id:
        return random_step_gene(spec, rng)
    opt = spec.option(gene.method)
    if opt is None:
        return random_step_gene(spec, rng)
    hp = opt.clamp_hyperparameters(gene.hyperparameters)
    return gene if hp == gene.hyperparameters else ConfiguredStep(gene.step_id, gene.method, hp)


def repair(g: Genome, bp: Blueprint, rng: np.random.Generator) -> Genome:
    """Restore genome invariants after variation; valid genomes come back unchanged."""
    is_gene = g.is_gene
    if is_gene is not None:
        n = bp.max_instances
        keep = {i for i in is_gene if 0 <= i < n}
        labels = bp.instance_labels
        covered = {int(labels[i]) for i in keep}
        for c in np.unique(labels):
            if int(c) not in covered:
                keep.add(int(rng.choice(np.flatnonzero(labels == c))))
        short = bp.min_instances() - len(keep)
        if short > 0:
            unused = np.setdiff1d(np.arange(n), np.fromiter(keep, dtype=np.int64, count=len(keep)))
            keep.update(int(i) for i in rng.choice(unused, size=short, replace=False))
        is_gene = tuple(sorted(keep))

    fs_gene = g.fs_gene
    if fs_gene is not None:
        keep = {i for i in fs_gene if 0 <= i < bp.max_features}
        if not keep:
            keep = {int(rng.integers(bp.max_features))}
        fs_gene = tuple(sorted(keep))

    by_id = {p.step_id: p for p in g.prep_genes}
    preps = tuple(_repair_step(by_id.get(s.step_id), s, rng) for s in bp.prep_steps)
    model = _repair_step(g.model_gene, bp.model_step, rng)
    out = Genome(is_gene, fs_gene, preps, model)
    return g if out == g else out


def genome_violations(g: Genome, bp: Blueprint) -> list[str]:
    """Every broken genome invariant, as readable strings (empty when valid)."""
    problems = []
    if g.is_gene is not None:
        s = g.is_gene
        if list(s) != sorted(set(s)):
            problems.append("is_gene not sorted/unique")
        if s and (s[0] < 0 or s[-1] >= bp.max_instances):
            problems.append("is_gene index out of range")
        if len(s) < bp.min_instances():
            problems.append("is_gene below minimum size")
        if set(np.unique(bp.instance_labels[list(s)]).tolist()) != set(np.unique(bp.instance_labels).tolist()):
            problems.append("is_gene misses a class")
    if g.fs_gene is not None:
        s = g.fs_gene
        if list(s) != sorted(set(s)):
            problems.append("fs_gene not sorted/unique")
        if not s:
            problems.append("fs_gene empty")
        elif s[0] < 0 or s[-1] >= bp.max_features:
            problems.append("fs_gene index out of range")
    specs = bp.prep_steps
    if [p.step_id for p in g.prep_genes] != [s.step_id for s in specs]:
        problems.append("prep genes do not match blueprint")
    else:
        for gene, spec in zip(g.prep_genes, specs):
            opt = spec.option(gene.method)
            if opt is None or not opt.contains(gene.hyperparameters):
                problems.append(f"{gene.step_id.value} gene outside its space")
    opt = bp.model_step.option(g.model_gene.method)
    if opt is None or not opt.contains(g.model_gene.hyperparameters):
        problems.append("model gene outside its space")
    return problems


# ---------------------------------------------------------------------------
# variation


def dr_one_point(a: Sequence[int], b: Sequence[int], cut: int) -> tuple[tuple[int, ...], tuple[int, ...]]:
    """One-point crossover of two sorted index sets; duplicates are dropped."""
    a, b = sorted(a), sorted(b)
    c1 = tuple(sorted(set(a[:cut]) | set(b[cut:])))
    c2 = tuple(sorted(set(b[:cut]) | set(a[cut:])))
    return c1, c2


def crossover(p1: Genome, p2: Genome, rng: np.random.Generator,
              bp: Blueprint | None = None) -> tuple[Genome, Genome]:
    """Uniform swap of non-DR genes plus gene-level one-point crossover of DR genes.

    A DR slot is crossed only when both parents carry it; otherwise each child
    inherits its own parent's slot as is. With ``bp`` the children are repaired.
    """
    preps1, preps2 = [], []
    for a, b in zip(p1.prep_genes, p2.prep_genes):
        if rng.random() < 0.5:
            a, b = b, a
        preps1.append(a)
        preps2.append(b)
    m1, m2 = p1.model_gene, p2.model_gene
    if rng.random() < 0.5:
        m1, m2 = m2, m1

    def dr(a, b):
        if a is None or b is None:
            return a, b
        cut = int(rng.integers(0, min(len(a), len(b)) + 1))
        return dr_one_point(a, b, cut)

    is1, is2 = dr(p1.is_gene, p2.is_gene)
    fs1, fs2 = dr(p1.fs_gene, p2.fs_gene)
    c1 = Genome(is1, fs1, tuple(preps1), m1)
    c2 = Genome(is2, fs2, tuple(preps2), m2)
    if bp is not None:
        c1, c2 = repair(c1, bp, rng), repair(c2, bp, rng)
    return c1, c2


REPLACE, ADD, REMOVE = "replace", "add", "remove"
DR_OPS = (REPLACE, ADD, REMOVE)


def change_count(theta: float, max_size: int) -> int:
    return max(1, math.ceil(theta * max_size - 1e-9))


def mutate_index_gene(gene: Sequence[int], max_size: int, op: str, theta: float,
                      rng: np.random.Generator) -> tuple[int, ...]:
    """Replace, add or remove ``ceil(theta * max_size)`` indices of a DR gene."""
    count = change_count(theta, max_size)
    cur = np.array(sorted(gene), dtype=np.int64)
    unused = np.setdiff1d(np.arange(max_size), cur)
    if op == REPLACE:
        k = min(count, len(cur), len(unused))
        drop = rng.choice(len(cur), size=k, replace=False)
        add = rng.choice(unused, size=k, replace=False)
        new = np.concatenate([np.delete(cur, drop), add])
    elif op == ADD:
        k = min(count, len(unused))
        new = np.concatenate([cur, rng.choice(unused, size=k, replace=False)])
    elif op == REMOVE:
        k = min(count, len(cur))
        new = np.delete(cur, rng.choice(len(cur), size=k, replace=False))
    else:
        raise ValueError(f"unknown DR operation {op!r}")
    return tuple(sorted(int(i) for i in new))


def mutable_slots(g: Genome, cfg: GAConfig) -> list[str]:
    slots = []
    if cfg.use_is:
        slots.append("is")
    if cfg.use_fs:
        slots.append("fs")
    slots.extend(p.step_id.value for p in g.prep_genes)
    slots.append("model")
    return slots


def mutate(g: Genome, bp: Blueprint, cfg: GAConfig, rng: np.random.Generator) -> Genome:
    """Change exactly one gene slot, then repair.

    DR slot present: with auto-DR on, half the time the gene is deleted;
    otherwise one of replace/add/remove is applied with theta drawn from
    (0, max_change_fraction]. DR slot absent: a fresh gene is added.
    Other slots: half the time a new method with new hyperparameters, else new
    hyperparameters for the current method.
    """
    slots = mutable_slots(g, cfg)
    slot = slots[int(rng.integers(len(slots)))]
    current = g.slots()[slot]
    if slot in ("is", "fs"):
        max_size = bp.max_instances if slot == "is" else bp.max_features
        if current is None:
            fresh = random_is_gene if slot == "is" else random_fs_gene
            new = fresh(bp, rng, cfg.min_dr_fraction)
        elif cfg.auto_dr and rng.random() < 0.5:
            new = None
        else:
            op = DR_OPS[int(rng.integers(3))]
            theta = cfg.max_change_fraction * (1.0 - rng.random())
            new = mutate_index_gene(current, max_size, op, theta, rng)
    else:
        spec = bp.model_step if slot == "model" else next(s for s in bp.prep_steps if s.step_id.value == slot)
        if rng.random() < 0.5:
            new = random_step_gene(spec, rng)
        else:
            opt = spec.option(current.method)
            new = ConfiguredStep(current.step_id, current.method, opt.sample_hyperparameters(rng))
    return repair(g.replace_slot(slot, new), bp, rng)


def tournament_select(pop: Sequence[EvaluatedIndividual], size: int,
                      rng: np.random.Generator) -> EvaluatedIndividual:
    """Fittest of ``size`` distinct random members; ties go to the earlier evaluation."""
    k = min(size, len(pop))
    picks = rng.choice(len(pop), size=k, replace=False)
    return min((pop[int(i)] for i in picks), key=lambda ind: ind.key)


# ---------------------------------------------------------------------------
# evaluation


class PipelineEvaluator:
    """Fitness of a genome: (1 - validation MCC) / 2, or 1.0 when fitting fails."""

    def __init__(self, blueprint: Blueprint, train: Dataset, val: Dataset):
        self.blueprint = blueprint
        self.train = train
        self.val = val

    def __call__(self, genome: Genome, seed: int) -> tuple[float, bool]:
        try:
            fp = fit_pipeline(genome, self.blueprint, self.train, seed=seed)
            pred = fp.predict(self.val)
        except PipelineFailure as exc:
            log.debug("pipeline failed: %s", exc)
            return 1.0, True
        return fitness_from_mcc(mcc_score(self.val.target, pred, self.blueprint.n_classes)), False


Evaluator = Callable[[Genome, int], "tuple[float, bool]"]

_WORKER_EVALUATOR: Evaluator | None = None


def _init_worker(evaluator: Evaluator) -> None:
    global _WORKER_EVALUATOR
    _WORKER_EVALUATOR = evaluator


def _worker_eval(job: tuple[Genome, int]) -> tuple[float, bool]:
    return _WORKER_EVALUATOR(*job)


class _Pool:
    """Serial or process-parallel map over (genome, seed) jobs, order-preserving."""

    def __init__(self, evaluator: Evaluator, jobs: int):
        self.evaluator = evaluator
        self.jobs = jobs
        self.ex = None

    def __enter__(self):
        if self.jobs > 1:
            self.ex = ProcessPoolExecutor(self.jobs, mp_context=mp.get_context("fork"),
                                          initializer=_init_worker, initargs=(self.evaluator,))
        return self

    def __exit__(self, *exc):
        if self.ex is not None:
            self.ex.shutdown()

    def map(self, jobs: list[tuple[Genome, int]]) -> list[tuple[float, bool]]:
        if self.ex is None:
            return [self.evaluator(g, s) for g, s in jobs]
        return list(self.ex.map(_worker_eval, jobs))


class _Budget:
    def __init__(self, cfg: GAConfig):
        self.cfg = cfg
        self.start = time.monotonic()
        self.used = 0

    def elapsed(self) -> float:
        return time.monotonic() - self.start

    def remaining(self) -> int | None:
        if self.cfg.max_evaluations is None:
            return None
        return self.cfg.max_evaluations - self.used

    def out_of_time(self) -> bool:
        t = self.cfg.time_budget_seconds
        return t is not None and self.elapsed() >= t

    def exhausted(self) -> bool:
        rem = self.remaining()
        return (rem is not None and rem <= 0) or self.out_of_time()


def _score(pool: _Pool, genomes: list[Genome], cfg: GAConfig, generation: int,
           first_slot: int, first_index: int) -> list[EvaluatedIndividual]:
    # seeds depend only on (run seed, generation, slot): schedule-independent
    jobs = [(g, derive_seed(cfg.seed, generation, first_slot + i)) for i, g in enumerate(genomes)]
    out = []
    for i, (g, (fit, failed)) in enumerate(zip(genomes, pool.map(jobs))):
        out.append(EvaluatedIndividual(g, 1.0 if failed else float(fit), bool(failed),
                                       first_index + i, jobs[i][1]))
    return out


def evolve(blueprint: Blueprint, train: Dataset | None, val: Dataset | None, cfg: GAConfig,
           evaluator: Evaluator | None = None) -> SearchResult:
    """Generational GA with tournament selection, elitism and patience restarts.

    Every generation holds ``population_size`` individuals: the elites carried
    over (their stored fitness is reused, never recomputed) plus fresh offspring.
    ``total_evaluations`` counts individuals scored per generation, elites
    included; ``pipelines_fitted`` counts actual fits. The time budget is
    checked between generations only.
    """
    evaluator = evaluator or PipelineEvaluator(blueprint, train, val)
    rng = np.random.default_rng(cfg.seed)
    budget = _Budget(cfg)
    history: list[GenerationStats] = []
    restarts = stall = fitted = failures = 0
    best_so_far = math.inf
    next_index = 0
    carried: list[EvaluatedIndividual] = []
    pending = init_population(blueprint, cfg, rng)
    generation = 0
    population: list[EvaluatedIndividual] = []

    with _Pool(evaluator, cfg.parallel_jobs) as pool:
        while True:
            generation += 1
            rem = budget.remaining()
            size = cfg.population_size if rem is None else min(cfg.population_size, rem)
            n_new = size - len(carried)
            if n_new <= 0:
                break
            new = _score(pool, pending[:n_new], cfg, generation, len(carried), next_index)
            next_index += len(new)
            fitted += len(new)
            failures += sum(ind.failure for ind in new)
            population = carried + new
            budget.used += len(population)

            best = min(population, key=lambda ind: ind.key)
            if best.fitness < best_so_far - IMPROVEMENT_EPS:
                best_so_far = best.fitness
                stall = 0
            else:
                stall += 1
            done = budget.exhausted()
            restart = not done and stall >= cfg.patience
            if restart:
                restarts += 1
                stall = 0
            history.append(GenerationStats(generation, best.fitness,
                                           float(np.mean([i.fitness for i in population])),
                                           restarts, budget.used))
            if done:
                break

            carried = sorted(population, key=lambda ind: ind.key)[: cfg.elitism]
            n_children = cfg.population_size - len(carried)
            if restart:
                log.info("generation %d: no improvement for %d generations, restarting",
                         generation, cfg.patience)
                pending = [random_genome(blueprint, cfg, rng) for _ in range(n_children)]
            else:
                pending = _offspring(population, n_children, blueprint, cfg, rng)

    if not population:
        raise SearchError("no evaluation completed within the budget")
    best = min(population, key=lambda ind: ind.key)
    return SearchResult(best, history, budget.used, fitted, restarts, budget.elapsed(), failures)


def _offspring(pop: list[EvaluatedIndividual], n: int, bp: Blueprint, cfg: GAConfig,
               rng: np.random.Generator) -> list[Genome]:
    children: list[Genome] = []
    while len(children) < n:
        p1 = tournament_select(pop, cfg.tournament_size, rng).genome
        p2 = tournament_select(pop, cfg.tournament_size, rng).genome
        if rng.random() < cfg.p_crossover:
            c1, c2 = crossover(p1, p2, rng, bp)
        else:
            c1, c2 = p1, p2
        for c in (c1, c2):
            if rng.random() < cfg.p_mutation:
                c = mutate(c, bp, cfg, rng)
            children.append(repair(c, bp, rng))
    return children[:n]


def random_search(blueprint: Blueprint, train: Dataset | None, val: Dataset | None, cfg: GAConfig,
                  evaluator: Evaluator | None = None) -> SearchResult:
    """Baseline: i.i.d. genomes sampled like the GA's initial population."""
    evaluator = evaluator or PipelineEvaluator(blueprint, train, val)
    rng = np.random.default_rng(cfg.seed)
    budget = _Budget(cfg)
    history: list[GenerationStats] = []
    best: EvaluatedIndividual | None = None
    failures = 0
    batch = 0
    with _Pool(evaluator, cfg.parallel_jobs) as pool:
        while batch == 0 or not budget.exhausted():
            rem = budget.remaining()
            size = cfg.population_size if rem is None else min(cfg.population_size, rem)
            if size <= 0:
                break
            batch += 1
            genomes = [random_genome(blueprint, cfg, rng) for _ in range(size)]
            scored = _score(pool, genomes, cfg, batch, 0, budget.used)
            budget.used += len(scored)
            failures += sum(ind.failure for ind in scored)
            cand = min(scored, key=lambda ind: ind.key)
            if best is None or cand.key < best.key:
                best = cand
            history.append(GenerationStats(batch, best.fitness,
                                           float(np.mean([i.fitness for i in scored])), 0, budget.used))
    if best is None:
        raise SearchError("no evaluation completed within the budget")
    return SearchResult(best, history, budget.used, budget.used, 0, budget.elapsed(), failures)
