"""
Posterior g-computation of cost-effectiveness estimands.

For every retained draw each subject's contrast uses that subject's own cluster
parameters under both arms, with all expectations restricted to the grid horizon
tau_V. Marginal value is MV = kappa * T - Y and Psi = sum_i p_i Psi_i with
Bayesian-bootstrap weights p ~ Dir(1/n, ..., 1/n).
"""
import math
import warnings

import numpy as np
import pandas as pd
from scipy.integrate import IntegrationWarning, quad
from scipy.special import logsumexp

from edpcea.models.estimand_model import CEACurve, EstimandSummary, GcompDraw, IcerResult
from edpcea.utils.diagnostics_util import effective_sample_size
from edpcea.utils.errors import NumericError, ValidationError
from edpcea.utils.logger import get_logger

ICER_TOLERANCE = 1e-8
_TINY = np.finfo(float).tiny

logger = get_logger()


def _interval_terms(etas, hazard):
    """
    Rates h (n, V), survival at each interval start S_lo (n, V) and at tau_V (n,).
    """
    width = hazard.width
    rates = hazard.lambdas[None, :] * np.exp(np.atleast_1d(etas))[:, None]
    cum_end = np.cumsum(rates * width, axis=1)
    cum_start = np.concatenate([np.zeros((rates.shape[0], 1)), cum_end[:, :-1]], axis=1)
    return rates, np.exp(-cum_start), np.exp(-cum_end[:, -1])


def _expm1_ratio(r, width):
    """(exp(r * width) - 1) / r, equal to width at r = 0."""
    r = np.asarray(r, dtype=float)
    safe = np.where(r == 0, 1.0, r)
    return np.where(r == 0, width, np.expm1(r * width) / safe)


def restricted_mean_survival(etas, hazard):
    """E[min(T, tau_V)] under the step hazard lambda_0v * exp(eta)."""
    rates, s_lo, _ = _interval_terms(etas, hazard)
    return np.sum(s_lo * _expm1_ratio(-rates, hazard.width), axis=1)


def lognormal_expected_cost(etas, beta_t, offsets, phis, hazard):
    """
    E[Y] with log Y | T ~ N(beta_t * T + offset, phi), T truncated at tau_V:
    exact interval integrals of E[Y | T = t] f(t) plus the point mass S(tau_V) at tau_V.
    """
    rates, s_lo, s_end = _interval_terms(etas, hazard)
    beta_t = np.asarray(beta_t, dtype=float)[:, None]
    level = (np.asarray(offsets, dtype=float) + 0.5 * np.asarray(phis, dtype=float))[:, None]
    lo = hazard.tau_lo[None, :]
    inner = rates * s_lo * np.exp(level + beta_t * lo) * _expm1_ratio(beta_t - rates, hazard.width)
    boundary = s_end * np.exp(level[:, 0] + beta_t[:, 0] * hazard.tau_max)
    value = inner.sum(axis=1) + boundary
    if not np.all(np.isfinite(value)):
        raise NumericError("log-normal expected cost overflowed", state={"beta_t": beta_t[:, 0].tolist()})
    return value


def _lognormal_expected_cost_quadrature(eta, beta_t, offset, phi, hazard):
    rates, s_lo, s_end = _interval_terms(np.array([eta]), hazard)
    total = float(s_end[0] * math.exp(offset + 0.5 * phi + beta_t * hazard.tau_max))
    for v, (lo, hi) in enumerate(zip(hazard.tau_lo, hazard.taus)):
        h, s = rates[0, v], s_lo[0, v]

        def integrand(t):
            return math.exp(offset + 0.5 * phi + beta_t * t) * h * s * math.exp(-h * (t - lo))

        with warnings.catch_warnings():
            warnings.simplefilter("error", IntegrationWarning)
            try:
                value, err = quad(integrand, lo, hi)
            except IntegrationWarning as e:
                raise NumericError(f"quadrature did not converge on interval {v + 1}: {e}")
        total += value
    return total


def expected_mv(a, l, omega, theta, hazard, kappa, cost_model="gaussian", add_intercept=False, method="closed"):
    """
    kappa * E[T ^ tau_V | a, l] - E[Y | a, l] for one covariate profile.

    Args:
        a: Treatment arm, 0 or 1.
        l: Confounders in dataset order (with the constant first when add_intercept is set).
        omega (CostParams), theta (SurvParams), hazard (HazardState)
        method: 'closed' (exact interval integrals) or 'quadrature' (log-normal only).
    """
    l = np.asarray(l, dtype=float)
    surv_l = l[1:] if add_intercept else l
    eta = float(np.concatenate([[a], surv_l]) @ theta.theta)
    offset = float(np.concatenate([[a], l]) @ omega.beta_x)
    mean_t = float(restricted_mean_survival(np.array([eta]), hazard)[0])
    if cost_model == "gaussian":
        mean_y = omega.beta_t * mean_t + offset
    elif cost_model == "lognormal":
        if method == "quadrature":
            mean_y = _lognormal_expected_cost_quadrature(eta, omega.beta_t, offset, omega.phi, hazard)
        else:
            mean_y = float(lognormal_expected_cost(np.array([eta]), [omega.beta_t], [offset], [omega.phi],
                                                   hazard)[0])
    else:
        raise ValidationError(f"unknown cost model '{cost_model}'", field="cost_model")
    return kappa * mean_t - mean_y


def arm_expectations(dataset, betas, phis, thetas, hazard, a):
    """Per-subject E[T ^ tau_V] and E[Y] with every subject set to arm a."""
    etas = np.einsum("ij,ij->i", dataset.surv_design(a), thetas)
    offsets = np.einsum("ij,ij->i", dataset.cost_design(a)[:, 1:], betas[:, 1:])
    mean_t = restricted_mean_survival(etas, hazard)
    if dataset.cost_model == "lognormal":
        mean_y = lognormal_expected_cost(etas, betas[:, 0], offsets, phis, hazard)
    else:
        mean_y = betas[:, 0] * mean_t + offsets
    return mean_t, mean_y


def draw_bootstrap_weights(n, rng):
    """
    One Dir(1/n, ..., 1/n) draw. Gamma(1/n) variates are formed on the log scale
    (G = G' U^n with G' ~ Gam(1 + 1/n)) so large n cannot underflow to all zeros.
    """
    if n < 1:
        raise ValidationError(f"need n >= 1, got {n}", field="n")
    if n == 1:
        return np.ones(1)
    shape = 1.0 / n
    log_g = np.log(rng.gamma(shape + 1.0, 1.0, size=n)) + np.log(np.maximum(rng.random(n), _TINY)) / shape
    weights = np.exp(log_g - logsumexp(log_g))
    return weights / weights.sum()


def draw_rng(seed, chain, iteration):
    """Bootstrap RNG of one draw; independent of processing order."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(chain), int(iteration)]))


def psi_draw(record, hazard, dataset, kappa, rng=None, weights=None):
    """
    Standardized NMB draw from one posterior draw.

    Args:
        record: DrawRecord carrying the EDP state.
        hazard: HazardState of the same draw.
        weights: Fixed weights instead of a bootstrap draw.

    Returns:
        GcompDraw
    """
    edp = record.edp
    betas, phis, thetas = edp.subject_betas(), edp.subject_phis(), edp.subject_thetas()
    t1, y1 = arm_expectations(dataset, betas, phis, thetas, hazard, 1)
    t0, y0 = arm_expectations(dataset, betas, phis, thetas, hazard, 0)
    if weights is None:
        weights = draw_bootstrap_weights(dataset.n, rng)
    return GcompDraw(record.chain, record.iteration, kappa, weights, t1 - t0, y1 - y0)


def gcomp_store(store, kappa, seed=None):
    """
    psi_draw for every record of a DrawStore; attaches each draw's output to its record.

    Returns:
        list[GcompDraw]
    """
    dataset = store.dataset()
    seed = store.meta["config"]["seed"] if seed is None else seed
    draws = []
    for record in store.records:
        gdraw = psi_draw(record, store.hazard(record), dataset, kappa,
                         draw_rng(seed, record.chain, record.iteration))
        record.gcomp = gdraw.to_dict()
        draws.append(gdraw)
    logger.info(f"g-computation over {len(draws)} draws at kappa={kappa}")
    return draws


def summarize_nmb(values):
    """Posterior mean and 2.5%/97.5% linear-interpolation quantiles."""
    values = np.asarray(values, dtype=float)
    if len(values) < 2:
        raise ValidationError(f"need at least 2 draws, got {len(values)}", field="draws")
    lo, hi = np.quantile(values, [0.025, 0.975])
    return EstimandSummary(values.mean(), lo, hi, len(values), effective_sample_size(values))


def psi_values(gdraws, kappa):
    return np.array([g.psi_at(kappa) for g in gdraws])


def ceac(gdraws, kappa_grid):
    """Fraction of positive Psi draws at each kappa."""
    probs = [float(np.mean(psi_values(gdraws, kappa) > 0)) for kappa in kappa_grid]
    return CEACurve(kappa_grid, probs)


def icer(gdraws, tolerance=ICER_TOLERANCE):
    """Per-draw ratio of weighted cost difference to weighted survival difference."""
    delta_t = np.array([g.weighted_delta_t for g in gdraws])
    delta_y = np.array([g.weighted_delta_y for g in gdraws])
    flagged = np.abs(delta_t) < tolerance
    ratios = np.full(len(gdraws), np.nan)
    ratios[~flagged] = delta_y[~flagged] / delta_t[~flagged]
    summary = summarize_nmb(ratios[~flagged]) if np.count_nonzero(~flagged) >= 2 else None
    if flagged.any():
        logger.warning(f"ICER: {int(flagged.sum())} of {len(gdraws)} draws have |dT| < {tolerance} and are excluded")
    return IcerResult(ratios, flagged, summary)


def ite_summary(gdraws, kappa):
    """Per-subject posterior mean and 95% interval of Psi_i."""
    matrix = np.array([g.psi_i_at(kappa) for g in gdraws])
    lo, hi = np.quantile(matrix, [0.025, 0.975], axis=0)
    return pd.DataFrame({
        "i": np.arange(matrix.shape[1]),
        "mean": matrix.mean(axis=0),
        "lo95": lo,
        "hi95": hi,
    })


def sample_event_times(etas, hazard, rng):
    """Inverse-transform draws of T; the last rate continues past tau_V."""
    rates, _, _ = _interval_terms(etas, hazard)
    cum_end = np.cumsum(rates * hazard.width, axis=1)
    target = rng.exponential(1.0, size=len(rates))
    v = np.minimum((cum_end < target[:, None]).sum(axis=1), hazard.V - 1)
    cum_start = np.where(v > 0, cum_end[np.arange(len(v)), np.maximum(v - 1, 0)], 0.0)
    return hazard.tau_lo[v] + (target - cum_start) / rates[np.arange(len(v)), v]


def posterior_predictive(store, dataset, rng):
    """
    One predictive (T, Y) per subject per draw, under the observed arm and confounders.

    Returns:
        DataFrame (chain, iteration, i, a, log_t, y, l1..lq)
    """
    frames = []
    for record in store.records:
        hazard = store.hazard(record)
        edp = record.edp
        betas, phis = edp.subject_betas(), edp.subject_phis()
        etas = np.einsum("ij,ij->i", dataset.surv_design(), edp.subject_thetas())
        t = sample_event_times(etas, hazard, rng)
        mean = betas[:, 0] * t + np.einsum("ij,ij->i", dataset.cost_design()[:, 1:], betas[:, 1:])
        y = mean + np.sqrt(phis) * rng.standard_normal(dataset.n)
        if dataset.cost_model == "lognormal":
            y = np.exp(y)
        frame = pd.DataFrame({
            "chain": record.chain,
            "iteration": record.iteration,
            "i": np.arange(dataset.n),
            "a": dataset.a,
            "log_t": np.log(t),
            "y": y,
        })
        for idx, name in enumerate(dataset.confounder_names()):
            frame[name] = dataset.l[:, idx]
        frames.append(frame)
    return pd.concat(frames, ignore_index=True)
