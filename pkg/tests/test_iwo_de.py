import numpy as np
import pytest

from conftest import random_unit
from eedset.codebook import BeamSet, uniform_power_grid
from eedset.ee_model import EeConstants, UtilityCase
from eedset.errors import ContractViolation
from eedset.evaluator import ChannelBatch, fitness
from eedset.iwo_de import (Individual, IwoDeParams, Problem, competitive_exclusion, crossover, de_step,
                           disperse, dispersion_noise, dispersion_std, init_population, offspring_count, optimize, perturb,
                           random_search)
from eedset.linalg_channel import RngStream

II = UtilityCase.CASE_II


@pytest.fixture
def problem(k):
    batch = ChannelBatch.sample(200, 1, 4, RngStream(5, 1))
    return Problem(II, batch, uniform_power_grid(3, 1.0), k, r0=0.0)


def test_params_defaults_and_validation():
    p = IwoDeParams.for_antennas(4)
    assert (p.w, p.t_max, p.s_max, p.s_min, p.gamma, p.f0, p.cr) == (10, 400, 20, 10, 2.5, 0.9, 0.9)
    assert p.mu_ini == 0.25 and p.mu_end == 0.00125
    for bad in (dict(w=3), dict(s_min=30), dict(mu_end=0.0), dict(cr=1.5), dict(f0=0.0)):
        with pytest.raises(ContractViolation):
            IwoDeParams(**bad)


def test_offspring_count_examples():
    p = IwoDeParams()
    assert offspring_count(1.0, 0.0, 1.0, p) == 20
    assert offspring_count(0.0, 0.0, 1.0, p) == 10
    assert offspring_count(0.5, 0.0, 1.0, p) == 15
    assert offspring_count(3.0, 3.0, 3.0, p) == 20
    counts = [offspring_count(f, 0.0, 1.0, p) for f in np.linspace(0, 1, 101)]
    assert min(counts) >= 10 and max(counts) <= 20
    with pytest.raises(ContractViolation):
        offspring_count(0.5, 1.0, 0.0, p)


def test_dispersion_schedule():
    p = IwoDeParams.for_antennas(4)
    assert dispersion_std(0, p) == 0.25
    assert dispersion_std(p.t_max, p) == pytest.approx(0.00125, rel=1e-15)
    assert dispersion_std(200, p) == pytest.approx(0.5**2.5 * (0.25 - 0.00125) + 0.00125, rel=1e-15)
    assert dispersion_std(200, p) == pytest.approx(0.04523, abs=1e-5)
    mus = [dispersion_std(t, p) for t in range(p.t_max + 1)]
    assert all(a >= b for a, b in zip(mus, mus[1:]))
    with pytest.raises(ContractViolation):
        dispersion_std(p.t_max + 1, p)


def test_init_population(problem):
    params = IwoDeParams.for_antennas(4, t_max=5)
    pop = init_population(params, 4, 8, RngStream(1), problem)
    assert len(pop) == 10
    for ind in pop:
        assert ind.omega.shape == (4, 8)
        assert np.allclose(np.linalg.norm(ind.omega, axis=0), 1, atol=1e-9)
    again = init_population(params, 4, 8, RngStream(1), problem)
    assert all(np.array_equal(a.omega, b.omega) for a, b in zip(pop, again))


def test_perturbation_std():
    mu = 0.03
    z = dispersion_noise((100_000,), mu, np.random.default_rng(0))
    assert abs(z.real.std() / mu - 1) < 0.02 and abs(z.imag.std() / mu - 1) < 0.02
    assert abs(np.corrcoef(z.real, z.imag)[0, 1]) < 0.01
    out = perturb(random_unit(np.random.default_rng(1), 4, 8), mu, np.random.default_rng(2))
    assert np.allclose(np.linalg.norm(out, axis=0), 1, atol=1e-12)


def test_disperse_offspring(problem):
    params = IwoDeParams.for_antennas(4)
    om = random_unit(np.random.default_rng(0), 4, 8)
    parent = problem.score(om[None])[0]
    kids = disperse(parent, 0.1, 15, problem, params, RngStream(2))
    assert len(kids) == 15
    for kid in kids:
        assert np.allclose(np.linalg.norm(kid.omega, axis=0), 1, atol=1e-9)
    close = disperse(parent, 1e-9, 3, problem, params, RngStream(3))
    for kid in close:
        assert abs(kid.fitness_value - parent.fitness_value) < 1e-6 * max(1.0, parent.fitness_value) + 1e-6
    assert disperse(parent, 0.1, 0, problem, params, RngStream(3)) == []


def test_infeasible_offspring_are_dropped(k):
    batch = ChannelBatch.sample(50, 1, 4, RngStream(5, 1))
    strict = Problem(II, batch, uniform_power_grid(3, 1.0), k, r0=k.r0_raw + 1)
    params = IwoDeParams.for_antennas(4, max_feasibility_retries=2)
    parent = strict.score(random_unit(np.random.default_rng(0), 4, 2)[None])[0]
    assert disperse(parent, 0.1, 5, strict, params, RngStream(1)) == []


def _ind(f, feasible=True):
    return Individual(np.eye(2, dtype=complex), f, feasible)


def test_competitive_exclusion_oracle():
    gen = np.random.default_rng(0)
    for _ in range(100):
        fits = gen.normal(size=gen.integers(1, 40))
        feas = gen.random(fits.size) < 0.8
        pool = [_ind(f, ok) for f, ok in zip(fits, feas)]
        got = [(i.feasible, i.fitness_value) for i in competitive_exclusion(pool, 10)]
        want = sorted(((ok, f) for f, ok in zip(fits, feas)), key=lambda t: (not t[0], -t[1]))[:10]
        assert got == want
    sorted_pool = [_ind(f) for f in (5.0, 4.0, 3.0)]
    assert competitive_exclusion(sorted_pool, 3) == sorted_pool
    with pytest.raises(ContractViolation):
        competitive_exclusion([], 3)


def test_crossover_rules():
    gen = np.random.default_rng(0)
    parent = np.zeros((3, 8), dtype=complex)
    mutant = np.ones((3, 8), dtype=complex)
    trial, mask = crossover(parent, mutant, 0.0, gen)
    assert mask.sum() == 1 and np.count_nonzero(np.any(trial != parent, axis=0)) == 1
    trial, mask = crossover(parent, mutant, 1.0, gen)
    assert mask.all() and np.array_equal(trial, mutant)


def test_de_step_elitism(problem):
    params = IwoDeParams.for_antennas(4)
    for run in range(50):
        pop = init_population(params, 4, 4, RngStream(run), problem)
        pool = competitive_exclusion(pop, params.w)
        out = de_step(pool, problem, params, RngStream(run, 9))
        assert max(i.fitness_value for i in out) >= pool[0].fitness_value
        for a, b in zip(pool, out):
            assert b.fitness_value >= a.fitness_value
    with pytest.raises(ContractViolation):
        de_step(pool[:3], problem, params, RngStream(0))


def test_de_step_cr_one_uses_normalized_mutant(problem):
    params = IwoDeParams.for_antennas(4, cr=1.0)
    pool = competitive_exclusion(init_population(params, 4, 2, RngStream(4), problem), params.w)
    out = de_step(pool, problem, params, RngStream(4, 1))
    for ind in out:
        assert np.allclose(np.linalg.norm(ind.omega, axis=0), 1, atol=1e-9)


def test_optimize_trace_and_determinism(problem, k):
    params = IwoDeParams.for_antennas(4, t_max=15)
    a = optimize(II, problem.batch, problem.powers, 2, params, k, RngStream(3))
    b = optimize(II, problem.batch, problem.powers, 2, params, k, RngStream(3))
    assert np.array_equal(a.beams.omega, b.beams.omega)
    assert len(a.trace) == 15
    best = [t.best_fitness for t in a.trace]
    assert all(x <= y for x, y in zip(best, best[1:]))
    assert a.best.fitness_value == pytest.approx(fitness(II, problem.batch, problem.powers, a.beams, k), rel=1e-12)
    beams, trace = a
    assert beams is a.beams and trace is a.trace


def test_optimize_degenerate_search_space(k):
    batch = ChannelBatch.sample(30, 1, 1, RngStream(2))
    params = IwoDeParams.for_antennas(1, t_max=3)
    res = optimize(II, batch, uniform_power_grid(2, 1.0), 0, params, k, RngStream(1))
    assert res.beams.omega.shape == (1, 1)
    assert abs(abs(res.beams.omega[0, 0]) - 1) < 1e-12
    assert res.best.fitness_value == fitness(II, batch, uniform_power_grid(2, 1.0), res.beams, k)


def test_optimize_beats_random_search_small(k):
    batch = ChannelBatch.sample(50, 1, 2, RngStream(8, 1))
    powers = uniform_power_grid(3, 1.0)
    res = optimize(II, batch, powers, 1, IwoDeParams.for_antennas(2, t_max=100), k, RngStream(8, 3))
    rs = random_search(Problem(II, batch, powers, k), 2, 2, 10_000, RngStream(8, 4))
    assert res.best.fitness_value >= rs.fitness_value


def test_feasibility_flags_respect_r0(k):
    batch = ChannelBatch.sample(100, 1, 4, RngStream(8, 1))
    res = optimize(II, batch, uniform_power_grid(3, 1.0), 2, IwoDeParams.for_antennas(4, t_max=5), k,
                   RngStream(1), r0=3e5)
    assert res.best.feasible and res.best.case2_benefit >= 3e5
