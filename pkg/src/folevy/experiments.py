"""Ensemble experiments around the averaging principle.

Four studies: the sup-distance between the rescaled transversal path and
the averaged flow across perturbation sizes, the probability of leaving
the domain before the averaged near-exit time, the linear scaling of
coupled transversal deviations, and the agreement of the two jump
discretizations on one shared jump set.  All of them run deterministic
per-path rng streams, so results depend on the master seed and path count
but not on threading or block layout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from ._parallel import map_blocks
from .averaging import (AveragedField, AveragedSolution, fit_loglog, lp_moment,
                        solve_averaged_ode)
from .drivers import GammaSubordinator, sample_jump_events, truncate_gamma
from .errors import ConfigError
from .geometry import FoliatedChart, VectorFieldSet, dpi_k
from .marcus import (IntegratorConfig, _drift_rk4, _make_drift,
                     integrate_grid_ensemble, jump_flow, resolve_grid)
from .rng import path_streams
from .tables import write_csv

_ZERO_FLOOR = 1e-14

OBSERVABLES = {
    "radial": lambda x: np.hypot(x[..., 0], x[..., 1]),
    "vertical": lambda x: x[..., 2],
}


def projected_perturbation(chart: FoliatedChart, fields: VectorFieldSet,
                           component: int):
    """Observable x -> dPi(K)(x)[component], the integrand whose leaf
    average drives the transversal motion."""

    def psi(x):
        return dpi_k(chart, fields, x)[..., component]

    return psi


def _resolve_observable(observable):
    if callable(observable):
        return getattr(observable, "__name__", "custom"), observable
    if observable in OBSERVABLES:
        return observable, OBSERVABLES[observable]
    raise ConfigError(f"unknown observable {observable!r}; choose from "
                      f"{sorted(OBSERVABLES)} or pass a callable")


def _check_eps_list(epsilons):
    epsilons = [float(e) for e in epsilons]
    if not epsilons:
        raise ValueError("need at least one eps value")
    for e in epsilons:
        if not (0 < e <= 1):
            raise ValueError(f"eps values must lie in (0, 1], got {e}")
    return epsilons


def _nonincreasing_in_eps(epsilons, values, slack):
    """True when values ordered by decreasing eps never rise by more than
    one standard error."""
    order = np.argsort(epsilons)[::-1]
    v, s = np.asarray(values)[order], np.asarray(slack)[order]
    return bool(np.all(v[1:] <= v[:-1] + s[:-1]))


# ---------------------------------------------------------------------------
# transversal comparison
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ComparisonResult:
    epsilons: np.ndarray
    horizons: np.ndarray        # comparison times on the averaged clock
    p: float
    n_paths: int
    sup_norm: np.ndarray        # (n_eps, n_horizons)
    sup_norm_se: np.ndarray
    sup_radial: np.ndarray
    sup_radial_se: np.ndarray
    sup_vertical: np.ndarray
    sup_vertical_se: np.ndarray
    solution: AveragedSolution

    def summary(self):
        return {
            "epsilons": self.epsilons,
            "horizons": self.horizons,
            "p": self.p,
            "n_paths": self.n_paths,
            "sup_norm": self.sup_norm,
            "sup_norm_se": self.sup_norm_se,
            "sup_radial": self.sup_radial,
            "sup_radial_se": self.sup_radial_se,
            "sup_vertical": self.sup_vertical,
            "sup_vertical_se": self.sup_vertical_se,
            "boundary_time": self.solution.boundary_time,
            "monotone_in_eps": _nonincreasing_in_eps(
                self.epsilons, self.sup_norm[:, -1], self.sup_norm_se[:, -1]),
        }


def comparison_to_csv(result: ComparisonResult, path):
    rows = []
    for i, eps in enumerate(result.epsilons):
        for j, s in enumerate(result.horizons):
            rows.append((eps, s, result.p, result.sup_norm[i, j],
                         result.sup_norm_se[i, j], result.n_paths))
    return write_csv(path, ["epsilon", "t", "p", "sup_lp", "std_error", "n_paths"],
                     rows)


def transversal_comparison(fields: VectorFieldSet, chart: FoliatedChart, driver,
                           avg: AveragedField, x0, epsilons, horizon: float,
                           p: float = 2, n_paths: int = 200, horizons=None,
                           master_seed: int = 0, stream_base: int = 0,
                           cfg: IntegratorConfig = None, threads: int = 1,
                           ode_step: float = 1e-3) -> ComparisonResult:
    """L^p size of sup_{s<=t} |Pi(X^eps_{s/eps}) - w(s)| per eps and t.

    Paths run to horizon/eps on their own clock; the averaged solution is
    read at the rescaled grid times.  The running sup (euclidean, radial
    and vertical parts) stops accumulating at a path's exit time.  The
    horizon must end strictly before the averaged path reaches the
    transversal boundary; otherwise the comparison window is ill posed and
    a ConfigError is raised.
    """
    epsilons = _check_eps_list(epsilons)
    if not (horizon > 0):
        raise ValueError("horizon must be positive")
    if p < 1:
        raise ValueError("p must be at least 1")
    if n_paths < 2:
        raise ValueError("n_paths must be at least 2")
    if cfg is None:
        cfg = IntegratorConfig()
    x0 = np.asarray(x0, dtype=float)
    sol = solve_averaged_ode(avg, chart.vertical_projection(x0), horizon, ode_step)
    if sol.boundary_time is not None and sol.boundary_time <= horizon:
        raise ConfigError(
            f"averaged path reaches the transversal boundary at "
            f"s={sol.boundary_time:.6g}; pick a horizon below that")
    if horizons is None:
        horizons = [horizon]
    horizons = sorted(float(s) for s in horizons)
    for s in horizons:
        if not (0 < s <= horizon):
            raise ValueError("comparison times must lie in (0, horizon]")
    n_h = len(horizons)
    shape = (len(epsilons), n_h)
    out = {name: np.zeros(shape) for name in
           ("sup_norm", "sup_norm_se", "sup_radial", "sup_radial_se",
            "sup_vertical", "sup_vertical_se")}

    for i, eps in enumerate(epsilons):
        path_horizon = horizon / eps
        n_steps, h = resolve_grid(cfg, eps, path_horizon)
        tgrid = np.arange(n_steps + 1) * h
        w = sol.interp(np.minimum(eps * tgrid, horizon))
        wr, wz = w[:, 0], w[:, 1]
        snap_idx = np.clip(np.rint(np.asarray(horizons) / (eps * h)).astype(int),
                           0, n_steps)

        def run_block(a, b):
            m = b - a
            streams = path_streams(master_seed, stream_base + a, m)
            sup = np.zeros((3, m))
            prev_active = np.ones(m, dtype=bool)
            snaps = np.empty((n_h, 3, m))

            def observe(k, t, states, active):
                dr = np.abs(np.hypot(states[:, 0], states[:, 1]) - wr[k])
                dz = np.abs(states[:, 2] - wz[k])
                dn = np.hypot(dr, dz)
                live = prev_active
                np.maximum(sup[0], np.where(live, dn, 0.0), out=sup[0])
                np.maximum(sup[1], np.where(live, dr, 0.0), out=sup[1])
                np.maximum(sup[2], np.where(live, dz, 0.0), out=sup[2])
                prev_active[:] = active
                for j in np.nonzero(snap_idx == k)[0]:
                    snaps[j] = sup

            integrate_grid_ensemble(fields, driver, x0, path_horizon, eps, cfg,
                                    streams, contains=chart.contains,
                                    on_step=observe)
            return snaps

        snaps = np.concatenate(map_blocks(run_block, n_paths, threads), axis=2)
        for j in range(n_h):
            for c, name in enumerate(("sup_norm", "sup_radial", "sup_vertical")):
                val, se = lp_moment(snaps[j, c], p)
                out[name][i, j] = val
                out[name + "_se"][i, j] = se

    return ComparisonResult(np.asarray(epsilons), np.asarray(horizons), p,
                            n_paths, out["sup_norm"], out["sup_norm_se"],
                            out["sup_radial"], out["sup_radial_se"],
                            out["sup_vertical"], out["sup_vertical_se"], sol)


# ---------------------------------------------------------------------------
# exit probabilities near the averaged boundary time
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ExitProbabilityResult:
    epsilons: np.ndarray
    probabilities: np.ndarray
    std_errors: np.ndarray
    gamma: float
    t_gamma: float
    n_paths: int

    def summary(self):
        return {
            "epsilons": self.epsilons,
            "probabilities": self.probabilities,
            "std_errors": self.std_errors,
            "gamma": self.gamma,
            "t_gamma": self.t_gamma,
            "n_paths": self.n_paths,
            "nonincreasing_in_eps": _nonincreasing_in_eps(
                self.epsilons, self.probabilities, self.std_errors),
        }


def exit_to_csv(result: ExitProbabilityResult, path):
    rows = [(eps, result.t_gamma, result.gamma, pr, se, result.n_paths)
            for eps, pr, se in zip(result.epsilons, result.probabilities,
                                   result.std_errors)]
    return write_csv(path, ["epsilon", "t_gamma", "gamma", "probability",
                            "std_error", "n_paths"], rows)


def exit_probability(fields: VectorFieldSet, chart: FoliatedChart, driver,
                     avg: AveragedField, x0, epsilons, gamma: float,
                     n_paths: int = 200, master_seed: int = 0,
                     stream_base: int = 0, cfg: IntegratorConfig = None,
                     threads: int = 1, ode_step: float = 1e-3,
                     search_horizon: float = 50.0) -> ExitProbabilityResult:
    """Fraction of paths leaving the domain before the averaged path comes
    within gamma of the boundary (path clock: t_gamma / eps).

    The averaged flow is solved until it exits or the search horizon runs
    out; if its boundary gap never drops to gamma there is no near-exit
    time to compare against and a ConfigError is raised.  A start already
    within gamma gives t_gamma = 0 and zero probabilities: there is no
    time window in which to exit.
    """
    epsilons = _check_eps_list(epsilons)
    if not (gamma > 0):
        raise ValueError("gamma must be positive")
    if n_paths < 2:
        raise ValueError("n_paths must be at least 2")
    if cfg is None:
        cfg = IntegratorConfig()
    x0 = np.asarray(x0, dtype=float)
    sol = solve_averaged_ode(avg, chart.vertical_projection(x0), search_horizon,
                             ode_step)
    t_gamma = sol.time_to_margin(gamma)
    if t_gamma is None:
        raise ConfigError(
            f"averaged path keeps a boundary gap above gamma={gamma:g} over "
            f"the whole search horizon {search_horizon:g}; no near-exit time")
    n_eps = len(epsilons)
    if t_gamma == 0.0:
        zeros = np.zeros(n_eps)
        return ExitProbabilityResult(np.asarray(epsilons), zeros, zeros.copy(),
                                     gamma, 0.0, n_paths)

    probs = np.zeros(n_eps)
    ses = np.zeros(n_eps)
    for i, eps in enumerate(epsilons):
        path_horizon = t_gamma / eps

        def run_block(a, b):
            streams = path_streams(master_seed, stream_base + a, b - a)
            res = integrate_grid_ensemble(fields, driver, x0, path_horizon, eps,
                                          cfg, streams, contains=chart.contains)
            return np.isfinite(res.exit_times)

        exited = np.concatenate(map_blocks(run_block, n_paths, threads))
        pr = float(np.mean(exited))
        probs[i] = pr
        ses[i] = math.sqrt(pr * (1.0 - pr) / n_paths)
    return ExitProbabilityResult(np.asarray(epsilons), probs, ses, gamma,
                                 float(t_gamma), n_paths)


# ---------------------------------------------------------------------------
# deviation scaling in eps
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DeviationResult:
    epsilons: np.ndarray
    values: np.ndarray
    std_errors: np.ndarray
    exponent: Optional[float]
    constant: Optional[float]
    observable: str
    horizon: float
    p: float
    n_paths: int
    identically_zero: bool = False

    def summary(self):
        return {
            "epsilons": self.epsilons,
            "values": self.values,
            "std_errors": self.std_errors,
            "exponent": self.exponent,
            "constant": self.constant,
            "observable": self.observable,
            "horizon": self.horizon,
            "p": self.p,
            "n_paths": self.n_paths,
            "identically_zero": self.identically_zero,
            "linear_in_eps": (None if self.exponent is None
                              else bool(abs(self.exponent - 1.0) <= 0.15)),
        }


def deviation_to_csv(result: DeviationResult, path):
    rows = [(eps, result.horizon, result.p, val, se, result.n_paths)
            for eps, val, se in zip(result.epsilons, result.values,
                                    result.std_errors)]
    return write_csv(path, ["epsilon", "t", "p", "sup_lp", "std_error",
                            "n_paths"], rows)


def deviation_scaling(fields: VectorFieldSet, chart: FoliatedChart, driver,
                      x0, epsilons, horizon: float, observable="radial",
                      p: float = 2, n_paths: int = 200, master_seed: int = 0,
                      stream_base: int = 0, cfg: IntegratorConfig = None,
                      threads: int = 1) -> DeviationResult:
    """Growth in eps of sup_{t<=T & exit} |psi(X^eps_t) - psi(X^0_t)|.

    Perturbed and unperturbed paths share every driver increment (one
    coupled run per path), the horizon is fixed path time, and the sup
    stops at the perturbed path's exit.  A log-log fit across eps reports
    the scaling exponent; identically vanishing deviations (observable
    insensitive to the perturbation) report no exponent and set the
    identically_zero flag.
    """
    name, func = _resolve_observable(observable)
    epsilons = _check_eps_list(epsilons)
    if not (horizon > 0):
        raise ValueError("horizon must be positive")
    if n_paths < 2:
        raise ValueError("n_paths must be at least 2")
    if cfg is None:
        cfg = IntegratorConfig()
    x0 = np.asarray(x0, dtype=float)
    values = np.zeros(len(epsilons))
    ses = np.zeros(len(epsilons))
    for i, eps in enumerate(epsilons):

        def run_block(a, b):
            m = b - a
            streams = path_streams(master_seed, stream_base + a, m)
            sup = np.zeros(m)
            prev_active = np.ones(m, dtype=bool)

            def observe(k, t, states, states_pair, active):
                dev = np.abs(func(states) - func(states_pair))
                np.maximum(sup, np.where(prev_active, dev, 0.0), out=sup)
                prev_active[:] = active

            integrate_grid_ensemble(fields, driver, x0, horizon, eps, cfg,
                                    streams, contains=chart.contains,
                                    pair_eps=0.0, on_step_pair=observe)
            return sup

        sups = np.concatenate(map_blocks(run_block, n_paths, threads))
        values[i], ses[i] = lp_moment(sups, p)

    if np.all(values <= _ZERO_FLOOR):
        return DeviationResult(np.asarray(epsilons), values, ses, None, None,
                               name, horizon, p, n_paths, identically_zero=True)
    exponent, constant = fit_loglog(epsilons, values)
    return DeviationResult(np.asarray(epsilons), values, ses, exponent,
                           constant, name, horizon, p, n_paths)


# ---------------------------------------------------------------------------
# coupling of the two jump discretizations
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SchemeAgreementResult:
    cutoffs: np.ndarray
    steps: np.ndarray
    l2_gaps: np.ndarray
    std_errors: np.ndarray
    ratios: np.ndarray
    eps: float
    horizon: float
    n_paths: int

    def summary(self):
        return {
            "cutoffs": self.cutoffs,
            "steps": self.steps,
            "l2_gaps": self.l2_gaps,
            "std_errors": self.std_errors,
            "ratios": self.ratios,
            "eps": self.eps,
            "horizon": self.horizon,
            "n_paths": self.n_paths,
        }


def _sum_per_step(grid, times, sizes):
    inc = np.zeros((len(grid) - 1, sizes.shape[1]))
    if len(times):
        idx = np.clip(np.searchsorted(grid, times, side="right") - 1,
                      0, len(grid) - 2)
        np.add.at(inc, idx, sizes)
    return inc


def _endpoint_with_events(fields, x0, times, sizes, comp, horizon, eps, cfg, h):
    """Drift between and across the given jump times, jumps applied exactly."""
    drift = _make_drift(fields, eps, comp)
    n = max(1, int(math.ceil(horizon / h - 1e-12)))
    grid = np.arange(n + 1) * (horizon / n)
    grid[-1] = horizon
    t_all = np.concatenate([grid, times])
    jump_of = np.concatenate([np.full(len(grid), -1), np.arange(len(times))])
    order = np.argsort(t_all, kind="stable")
    state = np.asarray(x0, dtype=float).copy()
    comp_sum = np.zeros_like(state)
    t_prev = 0.0
    for pos in order:
        t = t_all[pos]
        dt = t - t_prev
        if drift is not None and dt > 0:
            _drift_rk4(drift, state, comp_sum, dt)
        j = jump_of[pos]
        if j >= 0:
            pre = state.copy()
            state = np.asarray(jump_flow(fields, state, sizes[j], cfg),
                               dtype=float)
            comp_sum = np.where(state == pre, comp_sum, 0.0)
        t_prev = t
    return state


def _endpoint_with_grid(fields, x0, increments, comp, h, eps, cfg):
    drift = _make_drift(fields, eps, comp)
    strang = cfg.splitting == "strang"
    state = np.asarray(x0, dtype=float).copy()
    comp_sum = np.zeros_like(state)
    for inc in increments:
        if strang and drift is not None:
            _drift_rk4(drift, state, comp_sum, 0.5 * h)
        pre = state.copy()
        state = np.asarray(jump_flow(fields, state, inc, cfg), dtype=float)
        comp_sum = np.where(state == pre, comp_sum, 0.0)
        if drift is not None:
            _drift_rk4(drift, state, comp_sum, 0.5 * h if strang else h)
    return state


def scheme_agreement(fields: VectorFieldSet, chart: FoliatedChart,
                     driver: GammaSubordinator, x0, horizon: float = 2.0,
                     eps: float = 0.5,
                     levels=((0.08, 0.04), (0.04, 0.02), (0.02, 0.01)),
                     base_cutoff: float = 0.002, n_paths: int = 128,
                     master_seed: int = 0, stream_base: int = 0,
                     cfg: IntegratorConfig = None,
                     threads: int = 1) -> SchemeAgreementResult:
    """Endpoint gap between the two discretizations on one shared jump set.

    Per path, one jump set is sampled at the fine base cutoff.  At each
    (cutoff, step) level the event scheme keeps only jumps above the level
    cutoff (mean of the rest as transported drift) while the grid scheme
    sums the full set per step and carries the base compensator; both see
    the exact same randomness, so the L2 endpoint gap isolates the
    discretization error and should shrink roughly in half per halving.
    """
    if not isinstance(driver, GammaSubordinator):
        raise ConfigError("scheme agreement needs the Gamma driver "
                          "(closed-form small-jump means per cutoff)")
    if cfg is None:
        cfg = IntegratorConfig()
    if not (0 < eps <= 1):
        raise ValueError("eps must lie in (0, 1]")
    levels = [(float(c), float(h)) for c, h in levels]
    for c, h in levels:
        if not (c > base_cutoff):
            raise ValueError("level cutoffs must exceed the base cutoff")
        if not (h > 0):
            raise ValueError("level steps must be positive")
    if n_paths < 2:
        raise ValueError("n_paths must be at least 2")
    base = truncate_gamma(driver, base_cutoff)
    comp_base = np.array([base.compensator])

    def run_block(a, b):
        streams = path_streams(master_seed, stream_base + a, b - a)
        gaps = np.empty((len(levels), b - a))
        for ip, stream in enumerate(streams):
            events = sample_jump_events(base, horizon, stream)
            for il, (cutoff, h) in enumerate(levels):
                keep = events.sizes[:, 0] > cutoff
                comp_level = np.array([driver.mean_below(cutoff)])
                x_events = _endpoint_with_events(
                    fields, x0, events.times[keep], events.sizes[keep],
                    comp_level, horizon, eps, cfg, h)
                n = max(1, int(math.ceil(horizon / h - 1e-12)))
                grid = np.arange(n + 1) * (horizon / n)
                grid[-1] = horizon
                inc = _sum_per_step(grid, events.times, events.sizes)
                x_grid = _endpoint_with_grid(fields, x0, inc, comp_base,
                                             horizon / n, eps, cfg)
                gaps[il, ip] = float(np.linalg.norm(x_events - x_grid))
        return gaps

    gaps = np.concatenate(map_blocks(run_block, n_paths, threads), axis=1)
    l2 = np.zeros(len(levels))
    ses = np.zeros(len(levels))
    for il in range(len(levels)):
        l2[il], ses[il] = lp_moment(gaps[il], 2)
    ratios = l2[1:] / l2[:-1]
    return SchemeAgreementResult(np.array([c for c, _ in levels]),
                                 np.array([h for _, h in levels]),
                                 l2, ses, ratios, eps, float(horizon), n_paths)
