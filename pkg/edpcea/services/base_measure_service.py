"""
Empirical-Bayes construction of the EDP base measure G_0.

null  - zero centers; beta_v = nu_omega * s2 / var(x_v) and theta_v = nu_theta / var(x_v),
        i.e. nu times the variance of a unit-scale effect on cost and on the log hazard
user  - centers supplied in the run configuration, null-mode variances
ols   - cost center and variances from a least-squares fit of cost on (t, a, l);
        survival center user-supplied or zero
"""
import numpy as np

from edpcea.models.edp_state_model import BaseMeasure
from edpcea.utils.errors import ConfigError
from edpcea.utils.logger import get_logger

CENTERING_MODES = ("null", "user", "ols")
# floor on OLS standard errors so noiseless fits still give a proper base
MIN_OLS_VARIANCE = 1e-8

logger = get_logger()


def _column_variances(design):
    """Sample variance per column; constant columns count as variance 1."""
    if design.shape[0] < 2:
        return np.ones(design.shape[1])
    var = design.var(axis=0, ddof=1)
    return np.where(var > 0, var, 1.0)


def _response_variance(response):
    if len(response) < 2:
        return 1.0
    var = float(np.var(response, ddof=1))
    return var if var > 0 else 1.0


def ols_fit(response, design):
    """
    Least-squares coefficients and squared standard errors.

    Returns:
        (beta_hat, se2) or None when the design is rank deficient
    """
    n, p = design.shape
    if n <= p or np.linalg.matrix_rank(design) < p:
        return None
    beta_hat, _, _, _ = np.linalg.lstsq(design, response, rcond=None)
    resid = response - design @ beta_hat
    sigma2 = float(resid @ resid) / (n - p)
    se2 = sigma2 * np.diag(np.linalg.inv(design.T @ design))
    return beta_hat, se2


def _check_center(values, size, key):
    if values is None:
        return None
    values = np.asarray(values, dtype=float)
    if values.shape != (size,):
        raise ConfigError(f"expected {size} values, got {values.tolist()}", key=key)
    return values


def build_base_measure(dataset, nu_theta=4.0, nu_omega=4.0, a_0=3.0, centering=None,
                       beta_center=None, theta_center=None):
    """
    Build G_0 for a dataset.

    Args:
        dataset: Dataset being fitted.
        nu_theta, nu_omega: Variance inflation of the survival / cost bases, > 0.
        a_0: Inverse-Gamma shape on phi, > 0.
        centering: 'null' (default), 'user' or 'ols'.
        beta_center, theta_center: Centers for 'user' mode (theta_center also used by 'ols').

    Returns:
        BaseMeasure
    """
    centering = centering or "null"
    if centering not in CENTERING_MODES:
        raise ConfigError(f"unknown centering '{centering}', expected one of {CENTERING_MODES}", key="centering")
    if nu_theta <= 0:
        raise ConfigError(f"must be > 0, got {nu_theta}", key="nu_theta")
    if nu_omega <= 0:
        raise ConfigError(f"must be > 0, got {nu_omega}", key="nu_omega")
    if a_0 <= 0:
        raise ConfigError(f"must be > 0, got {a_0}", key="a_0")

    response = dataset.cost_response
    cost_x = dataset.cost_design()
    surv_x = dataset.surv_design()
    s2 = _response_variance(response)

    beta_c = np.zeros(dataset.cost_dim)
    beta_v = nu_omega * s2 / _column_variances(cost_x)
    theta_c = np.zeros(dataset.surv_dim)
    theta_v = nu_theta / _column_variances(surv_x)

    if centering == "user":
        user_beta = _check_center(beta_center, dataset.cost_dim, "beta_center")
        user_theta = _check_center(theta_center, dataset.surv_dim, "theta_center")
        if user_beta is None and user_theta is None:
            raise ConfigError("user centering needs beta_center and/or theta_center", key="centering")
        if user_beta is not None:
            beta_c = user_beta
        if user_theta is not None:
            theta_c = user_theta
    elif centering == "ols":
        fit = ols_fit(response, cost_x)
        if fit is None:
            logger.warning("OLS design is singular; falling back to null centering")
            centering = "null"
        else:
            beta_c = fit[0]
            beta_v = nu_omega * np.maximum(fit[1], MIN_OLS_VARIANCE)
        user_theta = _check_center(theta_center, dataset.surv_dim, "theta_center")
        if user_theta is not None:
            theta_c = user_theta

    base = BaseMeasure(theta_c, theta_v, beta_c, beta_v, a_0, s2 * (a_0 + 1.0), centering)
    logger.info(f"Built base measure ({centering}): beta_center={beta_c.tolist()}, "
                f"phi ~ IG({a_0}, {base.phi_scale:.6g})")
    return base
