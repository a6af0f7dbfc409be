"""Distributional tests for the jump drivers.

The closed-form characteristic function is checked against direct numerical
integration of the marginal density before anything else relies on it; the
samplers (exact increments, truncated jump events, compound Poisson) are
then tested against that oracle, against closed-form masses and means, and
against each other.
"""

from __future__ import annotations

import math

import numpy as np
import pytest
from scipy import integrate, special, stats

from folevy import (CompoundPoisson, GammaSubordinator, IncrementSeries,
                    RngStream, TruncatedMeasure, characteristic_function,
                    circle_law_distance, marginal_samples, sample_increments,
                    sample_jump_events, truncate_gamma)
from folevy.drivers import make_step_sampler

SEED = 20260816


def _cf_by_density_quadrature(rate, u, t):
    # E[exp(i*u*Y)] for Y with the Gamma(shape=t, rate) marginal density,
    # integrated directly; independent of the closed form under test
    dens = stats.gamma(a=t, scale=1.0 / rate).pdf
    re = integrate.quad(lambda y: math.cos(u * y) * dens(y), 0.0, np.inf,
                        limit=400)[0]
    im = integrate.quad(lambda y: math.sin(u * y) * dens(y), 0.0, np.inf,
                        limit=400)[0]
    return complex(re, im)


def _assert_close(value, target, tol, label=""):
    gap = abs(value - target)
    assert gap <= tol, f"{label} gap {gap:.3e} exceeds {tol:.1e}"


# ---------------------------------------------------------------------------
# characteristic function
# ---------------------------------------------------------------------------

def test_characteristic_function_matches_density_quadrature():
    cases = [(1.0, 0.5, 1.0), (1.0, 1.0, 1.0), (1.0, 2.0, 1.0),
             (1.0, 4.0, 1.0), (1.0, 2.0, 0.5), (1.0, 2.0, 3.0),
             (2.5, 1.7, 2.0)]
    for rate, u, t in cases:
        spec = GammaSubordinator(rate)
        _assert_close(characteristic_function(spec, u, t),
                      _cf_by_density_quadrature(rate, u, t), 1e-9,
                      f"cf({rate=}, {u=}, {t=})")


def test_characteristic_function_frozen_values():
    spec = GammaSubordinator(1.0)
    _assert_close(characteristic_function(spec, 0.0, 5.0), 1.0, 1e-15, "u=0")
    _assert_close(characteristic_function(spec, 1.0, 1.0),
                  complex(0.5, 0.5), 1e-12, "u=1")
    _assert_close(characteristic_function(spec, 2.0, 1.0),
                  complex(0.2, 0.4), 1e-12, "u=2")
    _assert_close(characteristic_function(spec, 4.0, 1.0),
                  complex(1.0 / 17.0, 4.0 / 17.0), 1e-12, "u=4")
    # cos^2 z = (1 + Re e^{2iz}) / 2, so E[cos^2 Z_1] = 0.6 at rate 1
    cos2 = 0.5 * (1.0 + characteristic_function(spec, 2.0, 1.0).real)
    _assert_close(cos2, 0.6, 1e-12, "E[cos^2 Z_1]")


def test_characteristic_function_array_input():
    spec = GammaSubordinator(1.3)
    u = np.array([0.0, 1.0, 2.5, -1.5])
    vals = characteristic_function(spec, u, 2.0)
    assert vals.shape == u.shape
    for uu, val in zip(u, vals):
        _assert_close(val, characteristic_function(spec, float(uu), 2.0),
                      1e-14, f"array u={uu}")


def test_characteristic_function_modulus_bounded():
    spec = GammaSubordinator(0.7)
    u = np.linspace(-8.0, 8.0, 33)
    assert np.all(np.abs(characteristic_function(spec, u, 2.5)) <= 1 + 1e-12)
    with pytest.raises(ValueError):
        characteristic_function(spec, 1.0, -0.5)


# ---------------------------------------------------------------------------
# closed-form measure quantities, with quadrature cross-checks
# ---------------------------------------------------------------------------

def test_tail_mass_matches_quadrature():
    spec = GammaSubordinator(1.0)
    for cutoff in (0.05, 0.1, 1.0):
        by_quad = integrate.quad(lambda y: math.exp(-y) / y, cutoff, np.inf,
                                 limit=200)[0]
        _assert_close(spec.tail_mass(cutoff), by_quad, 1e-10,
                      f"tail mass {cutoff=}")
        _assert_close(spec.tail_mass(cutoff), special.exp1(cutoff), 1e-13)
    with pytest.raises(ValueError):
        spec.tail_mass(0.0)


def test_mean_below_matches_quadrature():
    spec = GammaSubordinator(1.0)
    # y * density = exp(-y), an exact antiderivative, so both routes agree
    for cutoff in (0.05, 0.1, 0.5):
        by_quad = integrate.quad(lambda y: y * math.exp(-y) / y, 0.0, cutoff)[0]
        _assert_close(spec.mean_below(cutoff), by_quad, 1e-12)
    _assert_close(spec.mean_below(0.1), 1.0 - math.exp(-0.1), 1e-15)
    spec2 = GammaSubordinator(2.0)
    _assert_close(spec2.mean_below(0.1), (1.0 - math.exp(-0.2)) / 2.0, 1e-15)


def test_gamma_spec_validation():
    with pytest.raises(ValueError):
        GammaSubordinator(0.0)
    with pytest.raises(ValueError):
        GammaSubordinator(-1.0)
    # exponential moments of order at or above the rate do not exist
    with pytest.raises(ValueError):
        GammaSubordinator(1.0, exp_moment_order=1.0)
    with pytest.raises(ValueError):
        GammaSubordinator(1.0, exp_moment_order=1.5)
    spec = GammaSubordinator(1.0)
    assert spec.exp_moment_order == 0.5


# ---------------------------------------------------------------------------
# exact-increment sampling
# ---------------------------------------------------------------------------

def test_increment_sums_follow_gamma_law():
    # increments over [k, k+1) summed in blocks of 16 sub-steps are unit-time
    # marginals; the KS test against the marginal law must not reject
    n_paths, per = 10_000, 16
    grid = np.arange(n_paths * per + 1) / per
    spec = GammaSubordinator(1.0)
    series = sample_increments(spec, grid, RngStream(SEED, 1))
    sums = series.increments[:, 0].reshape(n_paths, per).sum(axis=1)
    assert np.all(series.increments >= 0)
    pvalue = stats.kstest(sums, stats.gamma(a=1.0, scale=1.0).cdf).pvalue
    assert pvalue > 0.01, f"KS rejected the unit-time marginal law: p={pvalue:.4f}"


def test_increment_mean_matches_density_mean():
    grid = np.arange(0.0, 1001.0)
    spec = GammaSubordinator(1.0)
    series = sample_increments(spec, grid, RngStream(SEED, 2))
    dens = stats.gamma(a=1.0, scale=1.0).pdf
    mean_oracle = integrate.quad(lambda y: y * dens(y), 0.0, np.inf)[0]
    sample_mean = float(series.increments.mean())
    se = float(series.increments.std(ddof=1) / math.sqrt(len(series.increments)))
    _assert_close(sample_mean, mean_oracle, 3 * se, "unit increment mean")


def test_zero_length_horizon_gives_empty_series():
    spec = GammaSubordinator(1.0)
    series = sample_increments(spec, np.array([0.0]), RngStream(SEED, 3))
    assert series.increments.shape[0] == 0


def test_increments_bitwise_reproducible():
    spec = GammaSubordinator(1.0)
    grid = np.linspace(0.0, 5.0, 51)
    a = sample_increments(spec, grid, RngStream(SEED, 7))
    b = sample_increments(spec, grid, RngStream(SEED, 7))
    c = sample_increments(spec, grid, RngStream(SEED, 8))
    assert np.array_equal(a.increments, b.increments)
    assert not np.array_equal(a.increments, c.increments)


def test_grid_validation():
    spec = GammaSubordinator(1.0)
    rng = RngStream(SEED, 4)
    with pytest.raises(ValueError):
        sample_increments(spec, np.array([0.0, 2.0, 1.0]), rng)
    with pytest.raises(ValueError):
        sample_increments(spec, np.array([1.0, 2.0]), rng)
    with pytest.raises(ValueError):
        IncrementSeries(np.array([0.0, 1.0]), np.zeros((3, 1)))


# ---------------------------------------------------------------------------
# truncated measure and jump decomposition
# ---------------------------------------------------------------------------

def test_truncate_gamma_closed_forms():
    spec = GammaSubordinator(1.0)
    trunc = truncate_gamma(spec, 0.1)
    _assert_close(trunc.restricted_mass, special.exp1(0.1), 1e-12)
    _assert_close(trunc.compensator, 1.0 - math.exp(-0.1), 1e-12)
    # value quoted to five digits: (1 - e^{-0.1}) / 1
    _assert_close(trunc.compensator, 0.09516, 1e-5)
    with pytest.raises(ValueError):
        truncate_gamma(spec, 0.0)


def test_truncated_measure_generic_matches_gamma_tables():
    spec = GammaSubordinator(1.0)
    exact = truncate_gamma(spec, 0.1)
    generic = TruncatedMeasure(density=spec.levy_density, cutoff=0.1,
                               exp_moment_order=0.5, support=(0.0, np.inf))
    _assert_close(generic.restricted_mass, exact.restricted_mass, 1e-6)
    _assert_close(generic.compensator, exact.compensator, 1e-8)
    mean_exact = math.exp(-0.1) / exact.restricted_mass
    sizes = generic.sample_sizes(RngStream(SEED, 5).generator(), 20_000)
    se = sizes.std(ddof=1) / math.sqrt(len(sizes))
    assert np.all(sizes >= 0.1 * (1 - 1e-9))
    _assert_close(sizes.mean(), mean_exact, 4 * se, "generic restricted mean")


def test_truncated_sampler_mean_and_support():
    trunc = truncate_gamma(GammaSubordinator(1.0), 0.05)
    sizes = trunc.sample_sizes(RngStream(SEED, 6).generator(), 20_000)
    assert np.all(sizes >= 0.05 * (1 - 1e-9))
    mean_exact = math.exp(-0.05) / trunc.restricted_mass
    se = sizes.std(ddof=1) / math.sqrt(len(sizes))
    _assert_close(sizes.mean(), mean_exact, 4 * se, "restricted mean")


def test_truncated_measure_validation():
    spec = GammaSubordinator(1.0)
    with pytest.raises(ValueError):
        TruncatedMeasure(density=spec.levy_density, cutoff=-0.1)
    with pytest.raises(ValueError):
        # support entirely below the cutoff carries no mass
        TruncatedMeasure(density=lambda y: 1.0, cutoff=2.0, support=(0.0, 1.0))


def test_jump_events_exceed_cutoff():
    trunc = truncate_gamma(GammaSubordinator(1.0), 0.1)
    events = sample_jump_events(trunc, 40.0, RngStream(SEED, 9))
    assert np.all(events.sizes > 0.1 * (1 - 1e-9))
    assert np.all(np.diff(events.times) >= 0)
    assert np.all((events.times >= 0) & (events.times <= 40.0))
    lam = trunc.restricted_mass * 40.0
    assert abs(len(events.times) - lam) <= 5 * math.sqrt(lam)


def test_gamma_events_require_truncation():
    with pytest.raises(ValueError, match="truncate"):
        sample_jump_events(GammaSubordinator(1.0), 1.0, RngStream(SEED, 10))


def test_increments_aggregate_the_event_set():
    # same stream: the aggregated increments must reproduce the event sum
    # plus compensator drift exactly
    trunc = truncate_gamma(GammaSubordinator(1.0), 0.05)
    grid = np.linspace(0.0, 8.0, 33)
    rng = RngStream(SEED, 11)
    series = sample_increments(trunc, grid, rng)
    events = sample_jump_events(trunc, 8.0, rng)
    assert series.large_jumps is not None
    assert len(series.large_jumps) == len(events.times)
    total = float(series.increments.sum())
    expected = float(events.sizes.sum()) + trunc.compensator * 8.0
    _assert_close(total, expected, 1e-12 * max(1.0, abs(expected)))


def test_decomposition_displacement_matches_exact_mean():
    # total displacement of the jump decomposition over [0, T] agrees with
    # the exact-mode mean T/rate within Monte Carlo error
    spec = GammaSubordinator(1.0)
    trunc = truncate_gamma(spec, 0.01)
    horizon, n_paths = 50.0, 200
    totals = np.empty(n_paths)
    for k in range(n_paths):
        ev = sample_jump_events(trunc, horizon, RngStream(SEED, 100 + k))
        totals[k] = ev.sizes.sum() + trunc.compensator * horizon
    se = totals.std(ddof=1) / math.sqrt(n_paths)
    _assert_close(totals.mean(), horizon / spec.rate, 3 * se,
                  "decomposition displacement")


def test_empirical_cf_within_mc_bound():
    spec = GammaSubordinator(1.0)
    n = 100_000
    samples = marginal_samples(spec, 1.0, n, RngStream(SEED, 12))
    bound = 3.0 / math.sqrt(n)
    for u in (1.0, 2.0, 4.0):
        emp = np.exp(1j * u * samples).mean()
        _assert_close(emp, characteristic_function(spec, u, 1.0), bound,
                      f"empirical cf u={u}")


def test_step_sampler_matches_increment_law():
    spec = GammaSubordinator(2.0)
    h, n = 0.25, 20_000
    draw = make_step_sampler(spec, h)
    steps = draw(RngStream(SEED, 13).generator(), n)[:, 0]
    se = steps.std(ddof=1) / math.sqrt(n)
    _assert_close(steps.mean(), h / spec.rate, 4 * se, "gamma step mean")

    trunc = truncate_gamma(GammaSubordinator(1.0), 0.02)
    draw_t = make_step_sampler(trunc, h)
    steps_t = draw_t(RngStream(SEED, 14).generator(), n)[:, 0]
    # mean of jumps above the cutoff plus compensator drift is the full mean
    se_t = steps_t.std(ddof=1) / math.sqrt(n)
    _assert_close(steps_t.mean(), h * 1.0, 4 * se_t, "truncated step mean")
    with pytest.raises(ValueError):
        make_step_sampler(spec, 0.0)


# ---------------------------------------------------------------------------
# compound Poisson
# ---------------------------------------------------------------------------

def _unit_exp_sampler(gen, n):
    return gen.exponential(1.0, size=n).reshape(n, 1)


def test_compound_poisson_cf_matches_analytic():
    spec = CompoundPoisson(intensity=3.0, jump_sampler=_unit_exp_sampler,
                           jump_density=lambda y: math.exp(-y) if y > 0 else 0.0,
                           exp_moment_order=0.5, support=(0.0, np.inf))
    for u in (0.5, 1.0, 2.0):
        psi = 3.0 * (1.0 / (1.0 - 1j * u) - 1.0)
        _assert_close(characteristic_function(spec, u, 1.5),
                      np.exp(1.5 * psi), 1e-8, f"cp cf u={u}")


def test_compound_poisson_samples_match_cf():
    spec = CompoundPoisson(intensity=3.0, jump_sampler=_unit_exp_sampler,
                           jump_density=lambda y: math.exp(-y) if y > 0 else 0.0,
                           exp_moment_order=0.5, support=(0.0, np.inf))
    n = 30_000
    samples = marginal_samples(spec, 1.0, n, RngStream(SEED, 15))
    emp = np.exp(1j * 1.0 * samples).mean()
    _assert_close(emp, characteristic_function(spec, 1.0, 1.0),
                  3.0 / math.sqrt(n), "cp empirical cf")


def test_compound_poisson_validation():
    with pytest.raises(ValueError):
        CompoundPoisson(intensity=0.0, jump_sampler=_unit_exp_sampler)
    with pytest.raises(ValueError):
        # order 2 exponential moment of a rate-1 exponential diverges
        CompoundPoisson(intensity=1.0, jump_sampler=_unit_exp_sampler,
                        jump_density=lambda y: math.exp(-y) if y > 0 else 0.0,
                        exp_moment_order=2.0, support=(0.0, np.inf))


# ---------------------------------------------------------------------------
# equidistribution of the wrapped marginal
# ---------------------------------------------------------------------------

def test_circle_law_distance_decays():
    spec = GammaSubordinator(1.0)
    assert circle_law_distance(spec, 0.0, 500, RngStream(SEED, 16)) == 1.0
    d = [circle_law_distance(spec, t, 4000, RngStream(SEED, 17))
         for t in (1.0, 10.0, 100.0)]
    assert d[0] > d[1] > d[2], f"distances not decreasing: {d}"
    far = circle_law_distance(spec, 200.0, 100_000, RngStream(SEED, 18))
    assert far < 0.02, f"wrapped law still far from uniform: {far:.4f}"
    with pytest.raises(ValueError):
        circle_law_distance(spec, 1.0, 50, RngStream(SEED, 19))
