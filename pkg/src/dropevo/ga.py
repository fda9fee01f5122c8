"""Generational genetic algorithm over 4-locus real genomes.

Default parameters: 21 generations, population 25, 15 carry-overs, per-locus
mutation rate 0.3 with N(0, 0.1^2) additive noise, single-point crossover,
fitness-proportional parent selection and inverse-fitness culling, both at
selective pressure 1. With these defaults one run evaluates exactly
25 + 20 * 10 = 225 distinct recipes.

Order of events each generation is cull-then-birth (cull 25 -> 15 survivors,
then add 10 evaluated children); birth-then-cull is available behind
``GAConfig.birth_before_cull`` for comparison.
"""

from __future__ import annotations

import csv
import io
import json
import statistics
from dataclasses import dataclass, field, replace

import numpy as np

from .formulation import GENOME_LENGTH, normalize

RNG_ALGORITHM = "numpy.random.Generator(PCG64)"

# Added to fitness before exponentiation so zero-fitness individuals keep
# finite selection and death weights.
FITNESS_EPS = 1e-9


class GAError(ValueError):
    pass


class PopulationTooSmall(GAError):
    pass


class WrongReplicateCount(GAError):
    pass


class EvaluationError(RuntimeError):
    """Wraps an evaluator failure with the offending recipe attached."""

    def __init__(self, recipe, cause):
        super().__init__(f"evaluator failed for recipe {list(recipe)}: {cause}")
        self.recipe = tuple(recipe)
        self.__cause__ = cause


@dataclass(frozen=True)
class GAConfig:
    generations: int = 21
    genome_length: int = GENOME_LENGTH
    population_size: int = 25
    carry_overs: int = 15
    per_locus_mutation_rate: float = 0.3
    mutation_sd: float = 0.1
    selective_pressure: float = 1.0
    replicates_per_recipe: int = 3
    runs: int = 3
    rng_seed: int = 0
    birth_before_cull: bool = False

    def __post_init__(self):
        if not (1 <= self.carry_overs < self.population_size):
            raise GAError("carry_overs must satisfy 1 <= carry_overs < population_size")
        for name in ("generations", "genome_length", "population_size",
                     "replicates_per_recipe", "runs"):
            if getattr(self, name) < 1:
                raise GAError(f"{name} must be >= 1")
        if not 0.0 <= self.per_locus_mutation_rate <= 1.0:
            raise GAError("per_locus_mutation_rate must lie in [0, 1]")

    @property
    def recipes_per_run(self) -> int:
        children = self.population_size - self.carry_overs
        return self.population_size + (self.generations - 1) * children


@dataclass
class Individual:
    genome: np.ndarray
    id: int
    generation_born: int
    parent_ids: tuple[int, ...] = ()
    fitness: float | None = None
    replicates: tuple[float, ...] = ()

    def set_fitness(self, replicates, fitness):
        if self.fitness is not None:
            raise GAError(f"fitness of individual {self.id} is already set")
        if fitness < 0:
            raise GAError("fitness must be >= 0")
        self.replicates = tuple(float(r) for r in replicates)
        self.fitness = float(fitness)


@dataclass
class GAHistory:
    """Per-generation population snapshots for one GA run."""

    run: int
    config: GAConfig
    generations: list[list[Individual]] = field(default_factory=list)

    @property
    def distinct_recipes(self) -> int:
        return len({ind.id for gen in self.generations for ind in gen})

    def generation_fitnesses(self) -> list[list[float]]:
        return [[ind.fitness for ind in gen] for gen in self.generations]


def init_population(cfg: GAConfig, rng: np.random.Generator,
                    id_start: int = 0) -> list[Individual]:
    """Uniform random population on [0, 1]^genome_length."""
    return [
        Individual(genome=rng.uniform(0.0, 1.0, cfg.genome_length),
                   id=id_start + i, generation_born=1)
        for i in range(cfg.population_size)
    ]


def mutate(genome: np.ndarray, rate: float, sd: float,
           rng: np.random.Generator) -> np.ndarray:
    """Per-locus Bernoulli(rate) selection, additive N(0, sd^2) noise,
    clamped back to [0, 1]."""
    g = np.array(genome, dtype=float, copy=True)
    hit = rng.random(g.shape) < rate
    g[hit] += rng.normal(0.0, sd, int(hit.sum()))
    return np.clip(g, 0.0, 1.0)


def crossover(p1: np.ndarray, p2: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Single-point recombination; the cut is uniform over interior points
    and shared by both parents."""
    n = len(p1)
    cut = int(rng.integers(1, n))
    return np.concatenate([p1[:cut], p2[cut:]])


def _weights(pop, pressure: float, inverse: bool) -> np.ndarray:
    f = np.array([ind.fitness for ind in pop], dtype=float) + FITNESS_EPS
    exponent = -pressure if inverse else pressure
    w = f ** exponent
    return w / w.sum()


def select_parents(pop: list[Individual], pressure: float,
                   rng: np.random.Generator) -> tuple[Individual, Individual]:
    """Two distinct parents, drawn without replacement with probability
    proportional to (fitness + eps)^pressure."""
    if len(pop) < 2:
        raise PopulationTooSmall("need at least 2 individuals to breed")
    first = rng.choice(len(pop), p=_weights(pop, pressure, inverse=False))
    rest = [ind for i, ind in enumerate(pop) if i != first]
    second = rng.choice(len(rest), p=_weights(rest, pressure, inverse=False))
    return pop[int(first)], rest[int(second)]


def cull(pop: list[Individual], survivors: int, pressure: float,
         rng: np.random.Generator) -> list[Individual]:
    """Remove individuals one at a time with probability proportional to
    (fitness + eps)^(-pressure) until `survivors` remain."""
    alive = list(pop)
    while len(alive) > survivors:
        victim = int(rng.choice(len(alive), p=_weights(alive, pressure, inverse=True)))
        del alive[victim]
    return alive


def aggregate_fitness(replicates, expected: int = 3) -> float:
    """Per-recipe score: min(mean, median) of the replicate fitnesses."""
    reps = [float(r) for r in replicates]
    if len(reps) != expected:
        raise WrongReplicateCount(f"expected {expected} replicates, got {len(reps)}")
    if any(r < 0 for r in reps):
        raise GAError("replicate fitnesses must be >= 0")
    return min(statistics.fmean(reps), statistics.median(reps))


def replicate_seed(master_seed: int, run: int, recipe_id: int, replicate: int) -> np.random.SeedSequence:
    """Deterministic per-replicate RNG stream, independent of evaluation order."""
    return np.random.SeedSequence(entropy=master_seed,
                                  spawn_key=(run, recipe_id, replicate))


def _evaluate(ind: Individual, cfg: GAConfig, evaluator) -> None:
    recipe = normalize(ind.genome).proportions
    try:
        reps = evaluator(recipe, ind.id)
    except Exception as exc:  # noqa: BLE001 - context is attached and re-raised
        raise EvaluationError(recipe, exc) from exc
    ind.set_fitness(reps, aggregate_fitness(reps, cfg.replicates_per_recipe))


def run_ga(cfg: GAConfig, evaluator, run: int = 0,
           rng: np.random.Generator | None = None,
           evaluate_batch=None) -> GAHistory:
    """Run one GA optimization.

    evaluator(proportions, individual_id) must return the
    replicates_per_recipe raw fitness values for that recipe.
    evaluate_batch, if given, receives a list of unevaluated Individuals and
    may evaluate them concurrently via _evaluate-equivalent semantics; results
    must not depend on evaluation order.
    """
    if rng is None:
        rng = np.random.default_rng(
            np.random.SeedSequence(entropy=cfg.rng_seed, spawn_key=(run,)))
    if evaluate_batch is None:
        def evaluate_batch(batch):
            for ind in batch:
                _evaluate(ind, cfg, evaluator)

    history = GAHistory(run=run, config=cfg)
    next_id = run * 10_000_000
    pop = init_population(cfg, rng, id_start=next_id)
    next_id += len(pop)
    evaluate_batch(pop)
    history.generations.append(list(pop))

    n_children = cfg.population_size - cfg.carry_overs
    for gen in range(2, cfg.generations + 1):
        if cfg.birth_before_cull:
            parents_pool = list(pop)
        else:
            pop = cull(pop, cfg.carry_overs, cfg.selective_pressure, rng)
            parents_pool = list(pop)
        children = []
        for _ in range(n_children):
            p1, p2 = select_parents(parents_pool, cfg.selective_pressure, rng)
            genome = crossover(p1.genome, p2.genome, rng)
            genome = mutate(genome, cfg.per_locus_mutation_rate, cfg.mutation_sd, rng)
            children.append(Individual(genome=genome, id=next_id, generation_born=gen,
                                       parent_ids=(p1.id, p2.id)))
            next_id += 1
        evaluate_batch(children)
        pop = pop + children
        if cfg.birth_before_cull:
            pop = cull(pop, cfg.population_size, cfg.selective_pressure, rng)
        history.generations.append(list(pop))
    return history


# ---------------------------------------------------------------------------
# Serialization

HISTORY_FIELDS = ["run", "generation", "individual_id", "parent_ids",
                  "locus1", "locus2", "locus3", "locus4",
                  "replicate1", "replicate2", "replicate3", "fitness"]


def history_to_csv(history: GAHistory) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(HISTORY_FIELDS)
    for gen_index, gen in enumerate(history.generations, start=1):
        for ind in gen:
            reps = list(ind.replicates) + [""] * (3 - len(ind.replicates))
            writer.writerow([history.run, gen_index, ind.id,
                             ";".join(str(p) for p in ind.parent_ids),
                             *(repr(float(x)) for x in ind.genome),
                             *(repr(float(r)) if r != "" else "" for r in reps[:3]),
                             repr(ind.fitness)])
    return buf.getvalue()


def history_from_csv(text: str) -> dict:
    """Parse a history CSV into {generation: [(id, loci, fitness)]} plus run id.

    Round-trips enough structure for landscape fitting and trajectory
    statistics; Individual objects are not reconstructed.
    """
    rows = list(csv.DictReader(io.StringIO(text)))
    generations: dict[int, list] = {}
    for row in rows:
        loci = tuple(float(row[f"locus{k}"]) for k in range(1, 5))
        generations.setdefault(int(row["generation"]), []).append(
            (int(row["individual_id"]), loci, float(row["fitness"])))
    return {"run": int(rows[0]["run"]) if rows else 0, "generations": generations}


def run_manifest(cfg: GAConfig) -> dict:
    return {
        "config": {k: getattr(cfg, k) for k in cfg.__dataclass_fields__},
        "seed": cfg.rng_seed,
        "rng": RNG_ALGORITHM,
    }


def with_seed(cfg: GAConfig, seed: int) -> GAConfig:
    return replace(cfg, rng_seed=seed)


def config_from_dict(d: dict) -> GAConfig:
    allowed = set(GAConfig.__dataclass_fields__)
    unknown = set(d) - allowed
    if unknown:
        raise GAError(f"unknown GA config fields: {sorted(unknown)}")
    return GAConfig(**d)


def manifest_json(manifest: dict) -> str:
    return json.dumps(manifest, indent=2, sort_keys=True) + "\n"
