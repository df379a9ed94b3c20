"""Fixed-interval estimation of time-constant noise variances.

The cost of a variance vector is the negative log predictive likelihood
of the whole observation window under an APF run with that fixed sigma,
approximated by the filter's accumulated per-observation terms.  Every
cost evaluation reuses one master seed (common random numbers), so the
optimizer sees a deterministic surface and reruns are bit-identical.

Minimization is a multi-start bounded Nelder-Mead in log-variance
coordinates: derivative-free because the cost comes from a stochastic
simulation, log-scale because optimized variances span orders of
magnitude, and positivity falls out of the parameterization.

``scenario`` is duck-typed; it must provide ``jump_dist()``,
``assim_observation_model()``, ``initial_particles(rng, n)``,
``n_particles`` and ``sigma0()`` (see :class:`flowsense.config.Scenario`).
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize
from scipy.stats import qmc

from .apf import DegeneracyError, run_apf

__all__ = [
    "IntervalCostEvaluation",
    "StartResult",
    "OptimizerReport",
    "OptimizationError",
    "interval_cost",
    "optimize_interval",
]

DEFAULT_BOUNDS = (1e-6, 10.0)
DEFAULT_MAX_EVALS = 200
DEFAULT_XTOL_LOG = 1e-3


class OptimizationError(RuntimeError):
    """Every start of the variance search was infeasible."""

    def __init__(self, message, starts=None):
        super().__init__(message)
        self.starts = starts or []


@dataclass
class IntervalCostEvaluation:
    """One deterministic evaluation of the window cost at a sigma."""
    sigma: np.ndarray
    cost: float
    seed: int
    per_step_terms: np.ndarray
    degenerate_step: int = None


@dataclass
class StartResult:
    start_sigma: np.ndarray
    final_sigma: np.ndarray
    final_cost: float
    evaluations: int
    eval_log: list  # [(sigma array, cost), ...] in evaluation order


@dataclass
class OptimizerReport:
    best_sigma: np.ndarray
    best_cost: float
    starts: list
    bounds: tuple
    seed: int


def interval_cost(sigma, observations, scenario, n_particles=None, seed=0):
    """Window cost: minus the summed predictive log-likelihood terms.

    Runs the full APF with the given constant sigma from a generator
    freshly seeded with ``seed``; identical (sigma, seed) pairs give
    bit-identical costs.  Every observation in the window contributes one
    term (the first one's term is a sigma-independent constant, so the
    minimizer is unaffected by its inclusion).  Filter degeneracy maps to
    an infinite cost with the failing step recorded.
    """
    sigma = np.asarray(sigma, dtype=float)
    if np.any(sigma <= 0.0):
        raise ValueError("interval cost requires strictly positive sigma")
    if len(observations) == 0:
        raise ValueError("observation window is empty")
    n = n_particles if n_particles is not None else scenario.n_particles
    rng = np.random.default_rng(seed)
    init = scenario.initial_particles(rng, n)
    obs_model = scenario.assim_observation_model()
    dist = scenario.jump_dist()
    try:
        result = run_apf(observations, obs_model, dist,
                         lambda k, state, y, r: sigma, init, rng,
                         method=getattr(scenario, "resampling",
                                        "multinomial"))
    except DegeneracyError as err:
        return IntervalCostEvaluation(sigma, np.inf, seed,
                                      np.asarray([]),
                                      degenerate_step=err.step)
    terms = result.log_predictive_terms
    return IntervalCostEvaluation(sigma, float(-np.sum(terms)), seed, terms)


def _space_filling_starts(bounds_log, n, seed):
    sampler = qmc.LatinHypercube(d=bounds_log.shape[0], seed=seed)
    unit = sampler.random(n)
    return qmc.scale(unit, bounds_log[:, 0], bounds_log[:, 1])


def optimize_interval(observations, scenario, bounds=DEFAULT_BOUNDS,
                      n_starts=3, seed=0, n_particles=None,
                      initial_sigma=None, max_evals=DEFAULT_MAX_EVALS,
                      xtol_log=DEFAULT_XTOL_LOG, cost_fn=None, threads=1):
    """Multi-start bounded simplex search over log-variances.

    The first start is the configured initial sigma; the remaining
    ``n_starts - 1`` are a seeded space-filling design in log space.
    ``cost_fn(sigma) -> float`` overrides the default window cost (test
    hook for synthetic surfaces).
    """
    lo, hi = bounds
    if lo < 0.0 or hi <= lo:
        raise ValueError("bounds must satisfy 0 <= lo < hi")
    lo = max(lo, 1e-300)
    r = scenario.n_zones if hasattr(scenario, "n_zones") else \
        len(scenario.sigma0())
    bounds_log = np.log(np.asarray([[lo, hi]] * r))
    if cost_fn is None:
        def cost_fn(s):
            return interval_cost(s, observations, scenario,
                                 n_particles=n_particles, seed=seed).cost

    start0 = np.asarray(initial_sigma if initial_sigma is not None
                        else scenario.sigma0(), dtype=float)
    starts = [np.clip(np.log(start0), bounds_log[:, 0], bounds_log[:, 1])]
    if n_starts > 1:
        starts.extend(_space_filling_starts(bounds_log, n_starts - 1, seed))

    def run_start(x0):
        eval_log = []

        def wrapped(x):
            sigma = np.exp(np.clip(x, bounds_log[:, 0], bounds_log[:, 1]))
            cost = cost_fn(sigma)
            eval_log.append((sigma, float(cost)))
            return cost

        res = minimize(wrapped, x0, method="Nelder-Mead",
                       bounds=[tuple(b) for b in bounds_log],
                       options={"xatol": xtol_log, "fatol": 1e-6,
                                "maxfev": max_evals})
        final_sigma = np.exp(np.clip(res.x, bounds_log[:, 0],
                                     bounds_log[:, 1]))
        return StartResult(np.exp(np.asarray(x0)), final_sigma,
                           float(res.fun), len(eval_log), eval_log)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run_start, starts))
    else:
        results = [run_start(x0) for x0 in starts]

    feasible = [s for s in results if np.isfinite(s.final_cost)]
    if not feasible:
        raise OptimizationError(
            "all optimizer starts were infeasible "
            f"({[s.final_cost for s in results]})", starts=results)
    best = min(feasible, key=lambda s: s.final_cost)
    return OptimizerReport(best.final_sigma, best.final_cost, results,
                           (lo, hi), seed)
