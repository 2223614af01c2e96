"""Hybrid invasive weed optimization / differential evolution over codebooks.

Each individual is a beamforming codebook, an ``(nt, m2)`` complex matrix
with unit-norm columns, scored by the Monte-Carlo mean utility on a fixed
training batch. One generation runs:

1. reproduction: fitter individuals seed more offspring;
2. spatial dispersion: offspring are complex-Gaussian perturbations of the
   parent, with a spread that shrinks over the generations;
3. competitive exclusion: parents and offspring are ranked, the best ``w``
   survive;
4. DE/best/1 mutation, column-wise crossover and greedy selection.

Offspring and trial codebooks that break the QoS constraint are discarded.
Every stochastic operator draws from its own :class:`RngStream` keyed by
(operator, generation, individual), so results do not depend on scheduling.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .codebook import BeamSet, PowerSet
from .ee_model import EeConstants, UtilityCase
from .errors import ContractViolation
from .evaluator import ChannelBatch, population_stats
from .linalg_channel import RngStream, complex_gaussian, normalize_columns, random_unit_vectors

log = logging.getLogger(__name__)

_INIT, _DISPERSE, _DE = 0, 1, 2


@dataclass(frozen=True)
class IwoDeParams:
    w: int = 10
    t_max: int = 400
    s_max: int = 20
    s_min: int = 10
    gamma: float = 2.5
    mu_ini: float = 0.25
    mu_end: float = 0.00125
    f0: float = 0.9
    cr: float = 0.9
    max_feasibility_retries: int = 20

    def __post_init__(self):
        if self.w < 4:
            raise ContractViolation("population size w must be >= 4 for DE/best/1")
        if self.t_max < 1:
            raise ContractViolation("t_max must be >= 1")
        if not self.s_max >= self.s_min >= 0:
            raise ContractViolation("need s_max >= s_min >= 0")
        if not self.mu_ini >= self.mu_end > 0:
            raise ContractViolation("need mu_ini >= mu_end > 0")
        if not 0 <= self.cr <= 1:
            raise ContractViolation("cr must lie in [0, 1]")
        if not self.f0 > 0:
            raise ContractViolation("f0 must be > 0")
        if self.max_feasibility_retries < 0:
            raise ContractViolation("max_feasibility_retries must be >= 0")

    @classmethod
    def for_antennas(cls, nt: int, **overrides) -> "IwoDeParams":
        """Default settings with the dispersion range scaled to ``nt`` antennas."""
        base = dict(mu_ini=1.0 / nt, mu_end=1.0 / (200 * nt))
        base.update(overrides)
        return cls(**base)


@dataclass(eq=False)
class Individual:
    omega: np.ndarray
    fitness_value: float
    feasible: bool
    case2_benefit: float = math.nan


@dataclass(frozen=True)
class GenerationTrace:
    generation: int
    best_fitness: float
    mean_fitness: float
    mu_t: float


@dataclass
class Problem:
    """Everything a fitness evaluation needs, bound to one training batch."""

    case: UtilityCase
    batch: ChannelBatch
    powers: PowerSet
    k: EeConstants
    r0: float = 0.0
    evaluations: int = field(default=0, init=False)

    def score(self, omegas: np.ndarray) -> list[Individual]:
        """Evaluate a stack ``(s, nt, m2)`` of codebooks."""
        if omegas.shape[0] == 0:
            return []
        u, v2 = population_stats(self.case, self.batch.channels, omegas, self.powers.levels, self.k)
        self.evaluations += omegas.shape[0]
        return [Individual(omegas[i], float(u[i]), bool(v2[i] >= self.r0), float(v2[i]))
                for i in range(omegas.shape[0])]


@dataclass
class OptimizeResult:
    beams: BeamSet
    trace: list[GenerationTrace]
    best: Individual
    evaluations: int

    def __iter__(self):
        # unpacks as (beams, trace)
        return iter((self.beams, self.trace))


def _resample_until_feasible(problem: Problem, draw, count: int, retries: int) -> list[Individual]:
    """Draw ``count`` candidates, redrawing infeasible ones up to ``retries`` times.

    Returns feasible candidates plus, for slots that never became feasible,
    the last infeasible draw (callers decide whether to keep those).
    """
    slots = list(range(count))
    done: dict[int, Individual] = {}
    for attempt in range(retries + 1):
        if not slots:
            break
        cands = problem.score(np.stack([draw() for _ in slots]))
        pending = []
        for slot, ind in zip(slots, cands):
            done[slot] = ind
            if not ind.feasible and attempt < retries:
                pending.append(slot)
        slots = pending
    return [done[s] for s in range(count)]


def init_population(params: IwoDeParams, nt: int, m2: int, rng: RngStream, problem: Problem) -> list[Individual]:
    """``w`` random codebooks with i.i.d. uniform-on-sphere columns.

    Each individual is redrawn until it meets the QoS constraint, at most
    ``max_feasibility_retries`` times; after that it is kept and flagged
    infeasible.
    """
    if m2 < 1:
        raise ContractViolation("m2 must be >= 1")
    pop = []
    for idx in range(params.w):
        gen = rng.child(_INIT, idx).generator()
        pop += _resample_until_feasible(
            problem, lambda: random_unit_vectors(gen, nt, m2), 1, params.max_feasibility_retries)
    return pop


def offspring_count(fitness_k: float, fitness_min: float, fitness_max: float, params: IwoDeParams) -> int:
    """Offspring budget, linear in the normalized fitness and floored."""
    if fitness_max < fitness_min:
        raise ContractViolation("fitness_max must be >= fitness_min")
    if fitness_max == fitness_min:
        ratio = 1.0
    else:
        ratio = (fitness_k - fitness_min) / (fitness_max - fitness_min)
    return int(math.floor(ratio * (params.s_max - params.s_min) + params.s_min))


def dispersion_std(t: int, params: IwoDeParams) -> float:
    """Per-component perturbation std at generation ``t``, decaying from
    ``mu_ini`` to ``mu_end`` with the nonlinear index ``gamma``."""
    if not 0 <= t <= params.t_max:
        raise ContractViolation(f"generation {t} outside [0, {params.t_max}]")
    frac = (params.t_max - t) / params.t_max
    return frac**params.gamma * (params.mu_ini - params.mu_end) + params.mu_end


def dispersion_noise(shape, mu_t: float, gen: np.random.Generator) -> np.ndarray:
    """Complex noise whose real and imaginary parts are i.i.d. N(0, mu_t^2)."""
    noise = gen.standard_normal((*shape, 2)) * mu_t
    return noise[..., 0] + 1j * noise[..., 1]


def perturb(omega: np.ndarray, mu_t: float, gen: np.random.Generator) -> np.ndarray:
    """Add dispersion noise to ``omega`` and renormalize each column."""
    return normalize_columns(omega + dispersion_noise(omega.shape, mu_t, gen))


def disperse(parent: Individual, mu_t: float, count: int, problem: Problem, params: IwoDeParams,
             rng: RngStream) -> list[Individual]:
    """Scatter ``count`` feasible offspring around ``parent``.

    Infeasible draws are redrawn up to ``max_feasibility_retries`` times and
    dropped if still infeasible, so fewer than ``count`` may come back.
    """
    if count < 0:
        raise ContractViolation("count must be >= 0")
    gen = rng.generator()
    kids = _resample_until_feasible(
        problem, lambda: perturb(parent.omega, mu_t, gen), count, params.max_feasibility_retries)
    return [kid for kid in kids if kid.feasible]


def competitive_exclusion(pool: list[Individual], w: int) -> list[Individual]:
    """Keep the ``w`` fittest feasible individuals, best first.

    If fewer than ``w`` are feasible the remainder is padded with the best
    infeasible ones. The sort is stable, so ties keep their input order.
    """
    if not pool:
        raise ContractViolation("competitive exclusion needs a non-empty pool")
    ranked = sorted(pool, key=lambda ind: (not ind.feasible, -ind.fitness_value))
    return ranked[:w]


def crossover(parent: np.ndarray, mutant: np.ndarray, cr: float, gen: np.random.Generator):
    """Column-wise binomial crossover.

    Column ``l`` comes from the mutant when ``y_l <= cr`` or ``l`` is the
    forced index; otherwise from the parent. Returns the (not yet
    normalized) trial and the boolean mask of mutant columns.
    """
    m2 = parent.shape[1]
    forced = gen.integers(m2)
    mask = gen.random(m2) <= cr
    mask[forced] = True
    return np.where(mask[None, :], mutant, parent), mask


def _pick_pair(k: int, w: int, gen: np.random.Generator) -> tuple[int, int]:
    # two distinct indices from {1, ..., w-1} \ {k}; index 0 is the best
    choices = [i for i in range(1, w) if i != k]
    a, b = gen.choice(len(choices), size=2, replace=False)
    return choices[a], choices[b]


def _safe_normalize(trial: np.ndarray, fallback: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(trial, axis=0)
    bad = ~(norms > 0)
    if np.any(bad):
        trial = trial.copy()
        trial[:, bad] = fallback[:, bad]
        norms = np.where(bad, 1.0, norms)
    return trial / norms[None, :]


def de_step(pool: list[Individual], problem: Problem, params: IwoDeParams, rng: RngStream) -> list[Individual]:
    """DE/best/1 mutation, column crossover and greedy selection.

    ``pool`` must be sorted best first. A trial replaces its parent only if
    it is QoS-feasible and strictly fitter.
    """
    w = len(pool)
    if w < 4:
        raise ContractViolation(f"DE needs a pool of at least 4 individuals, got {w}")
    best = pool[0].omega
    trials = []
    for k, phi in enumerate(pool):
        gen = rng.child(k).generator()
        a, b = _pick_pair(k, w, gen)
        mutant = best + params.f0 * (pool[a].omega - pool[b].omega)
        trial, _ = crossover(phi.omega, mutant, params.cr, gen)
        trials.append(_safe_normalize(trial, phi.omega))
    scored = problem.score(np.stack(trials))
    out = []
    for phi, cand in zip(pool, scored):
        better = cand.feasible and cand.fitness_value > phi.fitness_value
        out.append(cand if better else phi)
    return out


def optimize(case: UtilityCase, batch: ChannelBatch, powers: PowerSet, b2: int, params: IwoDeParams,
             k: EeConstants, rng: RngStream, r0: float = 0.0) -> OptimizeResult:
    """Search a ``2**b2``-beam codebook maximizing the mean utility on ``batch``.

    Returns the best feasible codebook seen (the best infeasible one if no
    feasible codebook was ever found) and a per-generation trace whose
    ``best_fitness`` is the best of the surviving population.
    """
    if b2 < 0:
        raise ContractViolation("b2 must be >= 0")
    m2 = 1 << b2
    problem = Problem(case, batch, powers, k, r0)
    pop = init_population(params, batch.nt, m2, rng, problem)
    best = competitive_exclusion(pop, 1)[0]
    trace = []
    for t in range(params.t_max):
        mu_t = dispersion_std(t, params)
        breeders = [ind for ind in pop if ind.feasible] or pop
        fits = [ind.fitness_value for ind in breeders]
        f_min, f_max = min(fits), max(fits)
        breeder_ids = {id(ind) for ind in breeders}
        offspring = []
        for idx, parent in enumerate(pop):
            if id(parent) not in breeder_ids:
                continue
            n_kids = offspring_count(parent.fitness_value, f_min, f_max, params)
            offspring += disperse(parent, mu_t, n_kids, problem, params, rng.child(_DISPERSE, t, idx))
        pool = competitive_exclusion(pop + offspring, params.w)
        if len(pool) < 4:
            # too few survivors to form DE triplets; keep the survivors as they are
            pop = pool
        else:
            pop = de_step(pool, problem, params, rng.child(_DE, t))
        gen_best = competitive_exclusion(pop, 1)[0]
        if (gen_best.feasible, gen_best.fitness_value) > (best.feasible, best.fitness_value):
            best = gen_best
        trace.append(GenerationTrace(t, gen_best.fitness_value,
                                     math.fsum(ind.fitness_value for ind in pop) / len(pop), mu_t))
        log.debug("generation %d best %.6g mu %.3g", t, best.fitness_value, mu_t)
    return OptimizeResult(BeamSet(normalize_columns(best.omega)), trace, best, problem.evaluations)


def random_search(problem: Problem, nt: int, m2: int, n_samples: int, rng: RngStream, chunk: int = 256) -> Individual:
    """Best of ``n_samples`` random codebooks (baseline for the optimizer)."""
    gen = rng.generator()
    best: Optional[Individual] = None
    left = n_samples
    while left > 0:
        size = min(chunk, left)
        stack = normalize_columns(complex_gaussian(gen, (size, nt, m2)))
        for ind in problem.score(stack):
            if best is None or (ind.feasible, ind.fitness_value) > (best.feasible, best.fitness_value):
                best = ind
        left -= size
    return best

