"""
Local-model log-likelihood kernels: Gaussian / log-normal cost given time and covariates,
and the piecewise-constant proportional-hazards survival model.

Coefficient layouts are fixed: cost beta is (T | A | L...), survival theta is (A | L...).
Everything is evaluated on the log scale.
"""
import math

import numpy as np
from scipy.stats import norm

from edpcea.utils.errors import DomainError, NumericError, ValidationError

LOG_2PI = math.log(2.0 * math.pi)


def _check_finite(value, what):
    if not np.all(np.isfinite(value)):
        raise NumericError(f"non-finite {what}: {value}")
    return value


def cost_loglik(y, t, a, l, omega, model="gaussian"):
    """Log-density of cost y under N((t,a,l)'beta, phi) or its log-normal analogue."""
    x = np.concatenate([[t, a], np.asarray(l, dtype=float)])
    mean = float(x @ omega.beta)
    if model == "gaussian":
        value = norm.logpdf(y, loc=mean, scale=math.sqrt(omega.phi))
    elif model == "lognormal":
        if y <= 0:
            raise DomainError(f"log-normal cost requires y > 0, got {y}")
        log_y = math.log(y)
        value = norm.logpdf(log_y, loc=mean, scale=math.sqrt(omega.phi)) - log_y
    else:
        raise ValidationError(f"unknown cost model '{model}'", field="cost_model")
    return float(_check_finite(value, "cost log-density"))


def interval_exposure(t, taus):
    """
    Matrix of Delta_v(t): time spent in each grid interval up to t.

    Args:
        t: scalar or array of times (n,)
        taus: right interval ends (V,)

    Returns:
        array (n, V)
    """
    t = np.atleast_1d(np.asarray(t, dtype=float))
    taus = np.asarray(taus, dtype=float)
    lo = np.concatenate([[0.0], taus[:-1]])
    return np.clip(t[:, None] - lo[None, :], 0.0, taus - lo)


def interval_index(t, taus):
    """0-based index v with tau_{v-1} < t <= tau_v."""
    return np.searchsorted(np.asarray(taus, dtype=float), np.asarray(t, dtype=float), side="left")


def _check_domain(t, hazard):
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0):
        raise DomainError(f"time must be >= 0, got {t}")
    if np.any(t_arr > hazard.tau_max):
        raise DomainError(f"time {t} lies beyond the hazard grid end {hazard.tau_max}")


def baseline_cumulative_hazard(t, hazard):
    """Lambda_0(t) for each t, shape (n,)."""
    _check_domain(t, hazard)
    return interval_exposure(t, hazard.taus) @ hazard.lambdas


def cumulative_hazard(t, eta, hazard):
    """Lambda(t) = sum_v lambda_0v exp(eta) Delta_v(t)."""
    _check_domain(t, hazard)
    base = float(interval_exposure(t, hazard.taus)[0] @ hazard.lambdas)
    return base * math.exp(eta)


def surv_loglik(t, delta, eta, hazard):
    """delta * (log lambda_0(t) + eta) - Lambda(t)."""
    value = -cumulative_hazard(t, eta, hazard)
    if delta == 1:
        v = int(interval_index(t, hazard.taus))
        value += math.log(hazard.lambdas[v]) + eta
    return float(_check_finite(value, "survival log-density"))


def surv_covariates(subject, add_intercept=False):
    l = subject.l[1:] if add_intercept else subject.l
    return np.concatenate([[subject.a], np.asarray(l, dtype=float)])


def joint_loglik(subject, omega, theta, hazard, model="gaussian", add_intercept=False):
    """Cost log-density given time plus the censored-survival log-likelihood."""
    eta = float(surv_covariates(subject, add_intercept) @ theta.theta)
    return (cost_loglik(subject.y, subject.t, subject.a, subject.l, omega, model)
            + surv_loglik(subject.t, subject.delta, eta, hazard))


# Vectorised forms used inside the sampler.

def gaussian_loglik_matrix(response, design, betas, phis):
    """
    Gaussian log-density of each response under each parameter set.

    Args:
        response: (n,) cost on the Gaussian scale
        design: (n, p) rows (t, a, l)
        betas: (J, p)
        phis: (J,)

    Returns:
        (n, J)
    """
    resid = response[:, None] - design @ np.asarray(betas).T
    return -0.5 * (LOG_2PI + np.log(phis)[None, :] + resid ** 2 / phis[None, :])


def ph_loglik_matrix(delta, log_base_rate, base_cumhaz, surv_x, thetas):
    """
    Proportional-hazards log-likelihood of each subject under each theta.

    Args:
        delta: (n,) event indicators
        log_base_rate: (n,) log lambda_0 at each subject's time
        base_cumhaz: (n,) Lambda_0 at each subject's time
        surv_x: (n, r) rows (a, l)
        thetas: (K, r)

    Returns:
        (n, K)
    """
    eta = surv_x @ np.asarray(thetas).T
    return delta[:, None] * (log_base_rate[:, None] + eta) - base_cumhaz[:, None] * np.exp(eta)
