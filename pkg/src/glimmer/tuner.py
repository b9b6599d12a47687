"""Genetic algorithm over the two loss-region weights.

Each individual is a (w_hypo, w_hyper) pair inside [1, 10]. Fitness is the
validation RMSE of a model trained with those weights (lower is better).
Every generation keeps the best half as parents and fills the other half
with children: the coordinate-wise mean of two random parents plus
Gaussian noise, clipped back into bounds. Because parents survive, the
best fitness never gets worse.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np

from .data import Thresholds, chronological_split
from .errors import GlimmerError
from .evaluation import rmse
from .forecaster import GlucoseForecaster
from .losses import LossWeights
from .network import ArchConfig, TrainConfig
from .pool import indexed_map
from .scaling import WindowScaler
from . import network


@dataclass(frozen=True)
class GaConfig:
    population: int = 20
    generations: int = 25
    bounds: tuple[float, float] = (1.0, 10.0)
    mutation_std: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.population < 2 or self.population % 2 != 0:
            raise ValueError(f"population must be even and >= 2, got {self.population}")
        if self.generations < 1:
            raise ValueError(f"generations must be >= 1, got {self.generations}")
        if not (self.bounds[0] < self.bounds[1]):
            raise ValueError(f"bounds must satisfy low < high, got {self.bounds}")
        if self.mutation_std <= 0.0:
            raise ValueError(f"mutation_std must be > 0, got {self.mutation_std}")


@dataclass(frozen=True)
class Individual:
    w_hypo: float
    w_hyper: float
    fitness: float | None = None


@dataclass(frozen=True)
class GenerationLog:
    generation: int
    best_w_hypo: float
    best_w_hyper: float
    best_fitness: float
    mean_fitness: float


GA_LOG_HEADER = ("generation", "best_w_hypo", "best_w_hyper", "best_fitness", "mean_fitness")


def init_population(cfg: GaConfig, rng: np.random.Generator) -> list[Individual]:
    """Population of ``cfg.population`` pairs drawn uniformly inside the bounds."""
    lo, hi = cfg.bounds
    return [
        Individual(float(rng.uniform(lo, hi)), float(rng.uniform(lo, hi)))
        for _ in range(cfg.population)
    ]


def select_parents(population: Sequence[Individual]) -> list[Individual]:
    """Best half by ascending fitness; ties keep the earlier index."""
    for ind in population:
        if ind.fitness is None:
            raise GlimmerError("cannot select parents: unevaluated individual in population")
    ranked = sorted(enumerate(population), key=lambda pair: (pair[1].fitness, pair[0]))
    return [ind for _, ind in ranked[: len(population) // 2]]


def breed(
    parents: Sequence[Individual],
    rng: np.random.Generator,
    cfg: GaConfig,
    noise_hook: Callable[[], np.ndarray] | None = None,
) -> list[Individual]:
    """population/2 children: mean of two distinct random parents plus noise, clipped.

    ``noise_hook`` replaces the Gaussian draw in tests (e.g. zero noise).
    """
    if len(parents) < 2:
        raise GlimmerError(f"breeding needs at least 2 parents, got {len(parents)}")
    lo, hi = cfg.bounds
    children = []
    for _ in range(cfg.population // 2):
        i, j = rng.choice(len(parents), size=2, replace=False)
        mean = np.array(
            [
                (parents[i].w_hypo + parents[j].w_hypo) / 2.0,
                (parents[i].w_hyper + parents[j].w_hyper) / 2.0,
            ]
        )
        noise = noise_hook() if noise_hook is not None else rng.normal(0.0, cfg.mutation_std, 2)
        child = np.clip(mean + noise, lo, hi)
        children.append(Individual(float(child[0]), float(child[1])))
    return children


def _evaluate_all(
    population: list[Individual], fitness_fn: Callable[[Individual], float]
) -> list[Individual]:
    """Fill in missing fitness values; failures become +inf (individual culled).

    Evaluations may run on a bounded thread pool (GLIMMER_THREADS); results
    are written back in index order so the run is deterministic regardless
    of scheduling.
    """

    def safe_fitness(ind: Individual) -> float:
        try:
            return float(fitness_fn(ind))
        except GlimmerError:
            return math.inf

    todo = [i for i, ind in enumerate(population) if ind.fitness is None]
    values = indexed_map(lambda i: safe_fitness(population[i]), todo)
    out = list(population)
    for i, value in zip(todo, values):
        out[i] = replace(population[i], fitness=value)
    return out


def run_ga(
    cfg: GaConfig,
    fitness_fn: Callable[[Individual], float],
    noise_hook: Callable[[], np.ndarray] | None = None,
) -> tuple[Individual, list[GenerationLog]]:
    """Evolve for ``cfg.generations`` and return the best individual ever evaluated.

    The log has one row per generation with the best-so-far pair and the
    mean fitness of the current population. Elitism (parents survive) makes
    the best-fitness trace non-increasing.
    """
    rng = np.random.default_rng(cfg.seed)
    population = init_population(cfg, rng)
    log: list[GenerationLog] = []
    best: Individual | None = None
    for generation in range(cfg.generations):
        population = _evaluate_all(population, fitness_fn)
        gen_best = min(population, key=lambda ind: ind.fitness)
        if best is None or gen_best.fitness < best.fitness:
            best = gen_best
        finite = [ind.fitness for ind in population if math.isfinite(ind.fitness)]
        mean_fitness = float(np.mean(finite)) if finite else math.inf
        log.append(
            GenerationLog(generation, best.w_hypo, best.w_hyper, best.fitness, mean_fitness)
        )
        parents = select_parents(population)
        children = breed(parents, rng, cfg, noise_hook=noise_hook)
        population = parents + children
    return best, log


def average_weights(per_patient_best: Sequence[Individual]) -> tuple[float, float]:
    """Coordinate-wise mean of per-patient optima (the deployable shared pair)."""
    if len(per_patient_best) == 0:
        raise ValueError("cannot average an empty collection of weight pairs")
    return (
        float(np.mean([ind.w_hypo for ind in per_patient_best])),
        float(np.mean([ind.w_hyper for ind in per_patient_best])),
    )


def quadratic_surrogate(
    center: tuple[float, float] = (3.0, 2.0),
) -> Callable[[Individual], float]:
    """Analytic stand-in fitness for harness tests: squared distance to ``center``."""

    def fitness(ind: Individual) -> float:
        return (ind.w_hypo - center[0]) ** 2 + (ind.w_hyper - center[1]) ** 2

    return fitness


def make_training_fitness(
    train_x: np.ndarray,
    train_y: np.ndarray,
    val_x: np.ndarray,
    val_y: np.ndarray,
    arch: ArchConfig,
    train_cfg: TrainConfig,
) -> Callable[[Individual], float]:
    """Real fitness: train with the individual's weights, score validation RMSE.

    Every call is a pure function of (individual, train_cfg.seed, data), so
    evaluations can run concurrently and re-runs reproduce exactly. Inputs
    must already be normalized. Training failures surface as GlimmerError
    and are mapped to +inf by the GA loop.
    """
    thresholds = train_cfg.thresholds

    def fitness(ind: Individual) -> float:
        cfg = replace(
            train_cfg,
            loss_mode="weighted",
            loss_weights=LossWeights(hypo=ind.w_hypo, hyper=ind.w_hyper),
        )
        result = network.train(train_x, train_y, val_x, val_y, arch, cfg)
        pred = network.predict_batched(result.params, val_x)
        return rmse(val_y.ravel(), pred.ravel())

    return fitness


def tune_weights(
    forecaster: GlucoseForecaster,
    X: np.ndarray,
    y: np.ndarray,
    ga_cfg: GaConfig,
    fitness_epochs: int = 5,
    thresholds: Thresholds = Thresholds(),
) -> tuple[Individual, list[GenerationLog]]:
    """Search (w_hypo, w_hyper) for one patient's windows.

    Splits (X, y) chronologically by the forecaster's val_fraction, fits the
    scaler on the training part, and runs the GA with a reduced-epoch
    training budget per fitness evaluation.
    """
    X_train, X_val = chronological_split(np.asarray(X, dtype=np.float64), 1.0 - forecaster.val_fraction)
    y_train, y_val = chronological_split(np.asarray(y, dtype=np.float64), 1.0 - forecaster.val_fraction)
    scaler = WindowScaler().fit(X_train)
    arch = forecaster._arch(X_train.shape[1], X_train.shape[2], y_train.shape[1])
    train_cfg = replace(forecaster._train_config(), epochs=fitness_epochs, thresholds=thresholds)
    fitness = make_training_fitness(
        scaler.transform(X_train), y_train, scaler.transform(X_val), y_val, arch, train_cfg
    )
    return run_ga(ga_cfg, fitness)
