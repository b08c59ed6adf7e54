"""
Dependent Gamma Process prior on a piecewise-constant baseline hazard.

Prior chain (shape-rate Gammas, s_v = b * lambda_star_v so that E[lambda_0v] = lambda_star_v):
    lambda_1 ~ Gam(s_1, b)
    c_v ~ Exp(mean xi)
    u_v | lambda_v, c_v ~ Pois(c_v lambda_v)
    lambda_{v+1} | u_v, c_v ~ Gam(s_{v+1} + u_v, b + c_v)
"""
import math

import numpy as np
import pandas as pd
from scipy.special import gammaln, logsumexp
from scipy.stats import poisson

from edpcea.models.hazard_state_model import HazardState, MHTuner
from edpcea.utils.errors import ConfigError, NumericError
from edpcea.utils.likelihood_util import interval_exposure, interval_index
from edpcea.utils.logger import get_logger

GRID_PADDING = 1e-6
DEFAULT_GRID_CAP = 10000
MAX_DEFAULT_INTERVALS = 50
LAMBDA_STAR_FAMILIES = ("exponential", "weibull")
_TINY = np.finfo(float).tiny

logger = get_logger()


def build_grid(dataset, V):
    """Equal-width grid whose last end sits just above the largest observed time."""
    if V is None or int(V) != V or V < 2:
        raise ConfigError(f"need at least 2 grid intervals, got {V}", key="V")
    t = dataset.t if hasattr(dataset, "t") else np.asarray(dataset, dtype=float)
    tau_max = float(np.max(t)) * (1.0 + GRID_PADDING)
    return tau_max * np.arange(1, int(V) + 1) / int(V)


def default_interval_count(dataset):
    distinct = len(np.unique(dataset.t[dataset.delta == 1]))
    return max(2, min(MAX_DEFAULT_INTERVALS, distinct))


def empirical_exponential_rate(dataset):
    return float(dataset.delta.sum()) / float(dataset.t.sum())


def lambda_star(family, params, taus):
    """
    Average rate of the centring hazard over each grid interval,
    (Lambda*(tau_v) - Lambda*(tau_{v-1})) / Delta.
    """
    taus = np.asarray(taus, dtype=float)
    lo = np.concatenate([[0.0], taus[:-1]])
    params = list(params or [])
    if family == "exponential":
        if len(params) != 1 or params[0] <= 0:
            raise ConfigError(f"exponential centring needs [rate > 0], got {params}", key="lambda_star_params")
        cumulative = lambda t: params[0] * t
    elif family == "weibull":
        if len(params) != 2 or min(params) <= 0:
            raise ConfigError(f"weibull centring needs [shape > 0, scale > 0], got {params}",
                              key="lambda_star_params")
        shape, scale = params
        cumulative = lambda t: (t / scale) ** shape
    else:
        raise ConfigError(f"unknown family '{family}', expected one of {LAMBDA_STAR_FAMILIES}",
                          key="lambda_star_family")
    rates = (cumulative(taus) - cumulative(lo)) / (taus - lo)
    # keeps Gamma shapes positive when a Weibull hazard starts at zero
    return np.maximum(rates, _TINY)


def init_hazard_state(taus, b, xi, family="exponential", params=None):
    """Prior-mean start: lambda at lambda_star, u at 0, c at its prior mean."""
    if b <= 0:
        raise ConfigError(f"b must be > 0, got {b}", key="b")
    if xi <= 0:
        raise ConfigError(f"xi must be > 0, got {xi}", key="xi")
    star = lambda_star(family, params, taus)
    V = len(taus)
    return HazardState(taus, star.copy(), np.zeros(V, dtype=np.int64), np.full(V, float(xi)), b, xi, star,
                       family, params)


class GridExposure:
    """
    Data summaries the hazard update needs, fixed for a dataset and grid.

    Attributes:
        exposure (np.ndarray): (n, V) time each subject spends in each interval.
        index (np.ndarray): (n,) interval holding each subject's observed time.
        deaths (np.ndarray): (V,) death count per interval.
    """

    def __init__(self, dataset, taus):
        self.taus = np.asarray(taus, dtype=float)
        if dataset is None:
            V = len(self.taus)
            self.exposure = np.zeros((0, V))
            self.index = np.zeros(0, dtype=np.int64)
            self.deaths = np.zeros(V, dtype=np.int64)
            return
        if np.max(dataset.t) > self.taus[-1]:
            raise ConfigError("hazard grid does not cover the observed times", key="V")
        self.exposure = interval_exposure(dataset.t, self.taus)
        self.index = interval_index(dataset.t, self.taus)
        self.deaths = np.bincount(self.index[dataset.delta == 1], minlength=len(self.taus)).astype(np.int64)

    @classmethod
    def empty(cls, taus):
        """No subjects: the hazard updates reduce to the prior."""
        return cls(None, taus)

    def at_risk_sums(self, etas):
        """sum_i exp(eta_i) Delta_v(T_i) for each interval."""
        if len(self.exposure) == 0:
            return np.zeros(len(self.taus))
        return self.exposure.T @ np.exp(etas)


def gamma_draw(rng, shape, rate):
    """Gamma(shape, rate) draw that stays strictly positive for tiny shapes."""
    if shape <= 0 or rate <= 0 or not (math.isfinite(shape) and math.isfinite(rate)):
        raise NumericError(f"invalid Gamma parameters shape={shape}, rate={rate}")
    if shape >= 1.0:
        return max(rng.gamma(shape, 1.0 / rate), _TINY)
    # G = G' * U^(1/a) with G' ~ Gam(a + 1), evaluated on the log scale
    log_draw = math.log(rng.gamma(shape + 1.0, 1.0)) + math.log(rng.random() or _TINY) / shape - math.log(rate)
    return max(math.exp(log_draw), _TINY)


def _log_c_target(c, state):
    """Unnormalised log conditional of c_v for v < V."""
    lam, u = state.lambdas, state.u
    shape_next = state.prior_shape[1:]
    return (u[:-1] * np.log(c) - (lam[:-1] + lam[1:] + 1.0 / state.xi) * c
            + (shape_next + u[:-1]) * np.log(state.b + c))


def update_c(state, tuner, rng):
    """
    Update the latent c chain in place.
    v < V: one log-scale random-walk Metropolis step per coordinate (conditionally independent);
    v = V: exact draw from Gam(u_V + 1, lambda_V + 1/xi).
    """
    V = state.V
    if V > 1:
        current = state.c[:-1]
        step = tuner.sds[: V - 1] * rng.standard_normal(V - 1)
        proposal = current * np.exp(step)
        log_ratio = _log_c_target(proposal, state) - _log_c_target(current, state) + step
        accept = np.log(rng.random(V - 1)) < log_ratio
        state.c[:-1] = np.where(accept, proposal, current)
        for idx, ok in enumerate(accept):
            tuner.record(idx, bool(ok))
    state.c[-1] = gamma_draw(rng, state.u[-1] + 1.0, state.lambdas[-1] + 1.0 / state.xi)
    return state.c


def u_log_pmf(state, grid_cap=DEFAULT_GRID_CAP):
    """
    Normalised log pmf of u_v over {0..grid_cap} for each v < V, shape (V-1, grid_cap+1).
    """
    grid = np.arange(grid_cap + 1)
    lam, c = state.lambdas, state.c[:-1]
    shape_next = state.prior_shape[1:]
    with np.errstate(divide="ignore", invalid="ignore"):
        log_base = np.log(c) + np.log(lam[:-1]) + np.log(lam[1:]) + np.log(state.b + c)
        log_terms = np.where(grid[None, :] == 0, 0.0, grid[None, :] * log_base[:, None])
    log_terms = log_terms - gammaln(grid + 1.0)[None, :] - gammaln(shape_next[:, None] + grid[None, :])
    norm = logsumexp(log_terms, axis=1)
    if not np.all(np.isfinite(norm)):
        raise NumericError("u conditional has no finite mass", state=state.dump())
    return log_terms - norm[:, None]


def update_u(state, rng, grid_cap=DEFAULT_GRID_CAP):
    """
    Update the latent u chain in place.
    v < V: exact grid sampling over {0..grid_cap}; v = V: Pois(c_V lambda_V).
    """
    if grid_cap < 1:
        raise ConfigError(f"grid_cap must be >= 1, got {grid_cap}", key="grid_cap")
    V = state.V
    if V > 1:
        cdf = np.cumsum(np.exp(u_log_pmf(state, grid_cap)), axis=1)
        draws = rng.random(V - 1) * cdf[:, -1]
        state.u[:-1] = np.minimum((cdf < draws[:, None]).sum(axis=1), grid_cap)
    state.u[-1] = rng.poisson(state.c[-1] * state.lambdas[-1])
    return state.u


def lambda_conditionals(state, etas, exposure):
    """Shape and rate of each lambda_0v full conditional."""
    shapes = state.prior_shape + exposure.deaths + state.u
    rates = state.b + state.c + exposure.at_risk_sums(etas)
    shapes[1:] += state.u[:-1]
    rates[1:] += state.c[:-1]
    return shapes, rates


def update_lambda(state, etas, exposure, rng):
    """Draw every lambda_0v from its conjugate Gamma conditional; given u and c they are independent."""
    shapes, rates = lambda_conditionals(state, etas, exposure)
    if np.any(shapes <= 0) or np.any(rates <= 0) or not np.all(np.isfinite(rates)):
        raise NumericError("nonpositive Gamma parameters in hazard update", state=state.dump())
    for v in range(state.V):
        state.lambdas[v] = gamma_draw(rng, shapes[v], rates[v])
    return state.lambdas


def update_hazard(state, etas, exposure, tuner, rng, grid_cap=DEFAULT_GRID_CAP):
    """One full Gamma Process cycle: c, then u, then lambda."""
    update_c(state, tuner, rng)
    update_u(state, rng, grid_cap)
    update_lambda(state, etas, exposure, rng)
    return state


def tune(tuner, rates=None):
    """
    Multiplicatively nudge each proposal scale toward the 0.234 acceptance target.
    No-op once the tuner is frozen.
    """
    if tuner.frozen:
        return tuner.sds
    if rates is None:
        rates = tuner.window_rates()
    rates = np.asarray(rates, dtype=float)
    factor = np.ones_like(tuner.sds)
    factor[rates > MHTuner.TARGET] = math.exp(MHTuner.STEP)
    factor[rates < MHTuner.TARGET] = math.exp(-MHTuner.STEP)
    tuner.sds = tuner.sds * factor
    tuner.reset_window()
    return tuner.sds


def prior_predictive_draws(family, params, b, xi, taus, count, rng):
    """
    Forward-simulate hazard paths from the dependent Gamma Process prior.

    Returns:
        np.ndarray (count, V) of interval rates
    """
    star = lambda_star(family, params, taus)
    shapes = b * star
    V = len(taus)
    paths = np.empty((count, V))
    for path in range(count):
        lam = gamma_draw(rng, shapes[0], b)
        paths[path, 0] = lam
        for v in range(1, V):
            c = rng.exponential(xi)
            u = rng.poisson(c * lam)
            lam = gamma_draw(rng, shapes[v] + u, b + c)
            paths[path, v] = lam
    return paths


def hazard_paths_frame(taus, paths):
    """Step-function rows (path_id, t, lambda) with both interval ends per step."""
    taus = np.asarray(taus, dtype=float)
    lo = np.concatenate([[0.0], taus[:-1]])
    rows = []
    for path_id, path in enumerate(paths):
        for v, rate in enumerate(path):
            rows.append((path_id, lo[v], rate))
            rows.append((path_id, taus[v], rate))
    return pd.DataFrame(rows, columns=["path_id", "t", "lambda"])


def log_prior(state):
    """Joint log prior density of (lambda, u, c) under the dependent Gamma Process."""
    shapes = state.prior_shape
    lam, u, c = state.lambdas, state.u, state.c
    b = state.b

    def log_gamma_pdf(x, shape, rate):
        return shape * np.log(rate) - gammaln(shape) + (shape - 1.0) * np.log(x) - rate * x

    value = log_gamma_pdf(lam[0], shapes[0], b)
    value += np.sum(log_gamma_pdf(lam[1:], shapes[1:] + u[:-1], b + c[:-1]))
    value += np.sum(poisson.logpmf(u, c * lam))
    value += np.sum(-np.log(state.xi) - c / state.xi)
    return float(value)


def hazard_summary(lambda_draws, taus):
    """Per-interval posterior mean and 95% interval of the baseline hazard rates."""
    lambda_draws = np.asarray(lambda_draws, dtype=float)
    taus = np.asarray(taus, dtype=float)
    return pd.DataFrame({
        "v": np.arange(1, len(taus) + 1),
        "tau_lo": np.concatenate([[0.0], taus[:-1]]),
        "tau_hi": taus,
        "lambda_mean": lambda_draws.mean(axis=0),
        "lambda_lo95": np.quantile(lambda_draws, 0.025, axis=0),
        "lambda_hi95": np.quantile(lambda_draws, 0.975, axis=0),
    })
