"""
Enriched Dirichlet Process mixture sampler for joint cost-survival data.

One sweep: memberships (Neal's algorithm 8 with one auxiliary per "new" option),
then cluster parameters, then the baseline hazard, then the concentrations.
"""
import copy
import math
from concurrent.futures import ProcessPoolExecutor

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import gammaln

from edpcea.models.draw_model import DrawRecord, DrawStore
from edpcea.models.edp_state_model import EDPState
from edpcea.models.hazard_state_model import MHTuner
from edpcea.services.base_measure_service import build_base_measure
from edpcea.services.gamma_process_service import (GridExposure, build_grid, default_interval_count,
                                                   empirical_exponential_rate, init_hazard_state, tune,
                                                   update_hazard)
from edpcea.utils.errors import ConfigError, InvariantError, NumericError
from edpcea.utils.likelihood_util import LOG_2PI
from edpcea.utils.logger import get_logger

# Gam(1, 1) on both concentrations
ALPHA_PRIOR_SHAPE = 1.0
ALPHA_PRIOR_RATE = 1.0
C_INITIAL_SD = 1.0
THETA_INITIAL_SD = 0.5
ALPHA_INITIAL_SD = 0.5

logger = get_logger()


class SubjectData:
    """Per-subject arrays read by the sweep; hazard-dependent columns are refreshed each iteration."""

    def __init__(self, dataset, exposure: GridExposure):
        self.n = dataset.n
        self.response = np.asarray(dataset.cost_response, dtype=float)
        self.cost_x = dataset.cost_design()
        self.surv_x = dataset.surv_design()
        self.delta = dataset.delta.astype(float)
        self.exposure = exposure
        self.base_cumhaz = np.zeros(self.n)
        self.log_base_rate = np.zeros(self.n)

    def refresh_hazard(self, hazard):
        self.base_cumhaz = self.exposure.exposure @ hazard.lambdas
        self.log_base_rate = np.log(hazard.lambdas[self.exposure.index])


def _gaussian_logpdf(y, mean, var):
    return -0.5 * (LOG_2PI + np.log(var) + (y - mean) ** 2 / var)


def _sample_log_weights(log_weights, rng):
    top = np.max(log_weights)
    if not np.isfinite(top):
        raise NumericError(f"membership weights have no finite entry: {log_weights.tolist()}")
    weights = np.exp(log_weights - top)
    cumulative = np.cumsum(weights)
    idx = int(np.searchsorted(cumulative, rng.random() * cumulative[-1], side="right"))
    return min(idx, len(weights) - 1)


def membership_log_weights(state, data, i, new_thetas, new_beta, new_phi, new_theta):
    """
    Unnormalised log weights for placing subject i (already removed) into each option.

    Options are ordered: every occupied (j, k); then "new k" inside each occupied j
    (aligned with state.active_omega()); then one "new (j, k)".

    Returns:
        (log_weights, ks, parents, js)
    """
    js = state.active_omega()
    ks = state.active_theta()
    parents = state.sub_parent[ks]
    y = data.response[i]
    xc = data.cost_x[i]
    xs = data.surv_x[i]
    d, lbr, cumhaz = data.delta[i], data.log_base_rate[i], data.base_cumhaz[i]

    def surv(thetas):
        eta = thetas @ xs
        return d * (lbr + eta) - cumhaz * np.exp(eta)

    cost_ll = _gaussian_logpdf(y, state.betas[js] @ xc, state.phis[js])
    n_j = state.n_j[js].astype(float)
    pos = np.searchsorted(js, parents)
    with np.errstate(divide="ignore"):
        log_denom = np.log(n_j + state.alpha_theta)
        existing = (np.log(n_j[pos]) + np.log(state.n_jk[ks]) - log_denom[pos]
                    + cost_ll[pos] + surv(state.thetas[ks]))
        new_k = np.log(n_j) + np.log(float(state.alpha_theta)) - log_denom + cost_ll + surv(new_thetas)
        new_jk = float(np.log(float(state.alpha_omega)))
    new_jk += float(_gaussian_logpdf(y, float(new_beta @ xc), new_phi)) + float(surv(new_theta[None, :])[0])
    return np.concatenate([existing, new_k, [new_jk]]), ks, parents, js


def update_memberships(state, data, base, rng):
    """
    One ascending-order scan over subjects. Emptied clusters are deleted; a removed
    singleton's parameters serve as the auxiliary of the option it vacated.
    """
    for i in range(data.n):
        j0, k0, omega_emptied, theta_emptied = state.remove(i)
        old_beta, old_phi = state.betas[j0].copy(), float(state.phis[j0])
        old_theta = state.thetas[k0].copy()

        js = state.active_omega()
        new_thetas = base.draw_thetas(rng, len(js))
        if theta_emptied and not omega_emptied:
            new_thetas[int(np.searchsorted(js, j0))] = old_theta
        if omega_emptied:
            new_beta, new_phi, new_theta = old_beta, old_phi, old_theta
        else:
            new_beta = base.draw_betas(rng, 1)[0]
            new_phi = float(base.draw_phis(rng, 1)[0])
            new_theta = base.draw_thetas(rng, 1)[0]

        log_weights, ks, parents, js = membership_log_weights(state, data, i, new_thetas, new_beta, new_phi,
                                                              new_theta)
        choice = _sample_log_weights(log_weights, rng)
        if choice < len(ks):
            j, k = int(parents[choice]), int(ks[choice])
        elif choice < len(ks) + len(js):
            j = int(js[choice - len(ks)])
            k = state.open_theta(j, new_thetas[choice - len(ks)])
        else:
            j = state.open_omega(new_beta, new_phi)
            k = state.open_theta(j, new_theta)
        state.add(i, j, k)
    state.check_bookkeeping()
    return state


def draw_cost_params(response, design, base, phi, rng):
    """
    Gibbs pair for one omega cluster: beta | phi ~ Normal, then phi | beta ~ IG.
    With no rows both draws come from the base measure.
    """
    prior_prec = 1.0 / base.beta_var
    precision = np.diag(prior_prec) + design.T @ design / phi
    rhs = base.beta_center * prior_prec + design.T @ response / phi
    try:
        chol = np.linalg.cholesky(precision)
    except np.linalg.LinAlgError:
        raise NumericError("cost posterior precision is not positive definite", state={"phi": phi})
    mean = solve_triangular(chol.T, solve_triangular(chol, rhs, lower=True), lower=False)
    beta = mean + solve_triangular(chol.T, rng.standard_normal(len(mean)), lower=False)
    resid = response - design @ beta
    shape = base.phi_shape + 0.5 * len(response)
    scale = base.phi_scale + 0.5 * float(resid @ resid)
    new_phi = scale / rng.gamma(shape, 1.0)
    if not (np.all(np.isfinite(beta)) and math.isfinite(new_phi) and new_phi > 0):
        raise NumericError("non-finite cost parameter draw", state={"beta": beta.tolist(), "phi": new_phi})
    return beta, new_phi


def theta_log_target(theta, surv_x, delta, base_cumhaz, base):
    """Log conditional of theta for one subcluster, up to a constant."""
    eta = surv_x @ theta
    return float(base.theta_log_density(theta) + np.sum(delta * eta - base_cumhaz * np.exp(eta)))


def theta_mh_step(theta, surv_x, delta, base_cumhaz, base, tuner, rng):
    """
    One coordinatewise random-walk Metropolis pass. Proposal scales shrink
    with 1/sqrt(cluster size) so one tuner serves every subcluster.
    """
    theta = np.array(theta, dtype=float)
    scale = 1.0 / math.sqrt(max(len(delta), 1))
    eta = surv_x @ theta
    current = theta_log_target(theta, surv_x, delta, base_cumhaz, base)
    for d in range(len(theta)):
        step = tuner.sds[d] * scale * rng.standard_normal()
        proposal = theta.copy()
        proposal[d] += step
        eta_prop = eta + surv_x[:, d] * step
        target = float(base.theta_log_density(proposal)
                       + np.sum(delta * eta_prop - base_cumhaz * np.exp(eta_prop)))
        accepted = math.log(rng.random() or np.finfo(float).tiny) < target - current
        tuner.record(d, accepted)
        if accepted:
            theta, eta, current = proposal, eta_prop, target
    return theta


def update_cluster_params(state, data, base, tuner, rng):
    """Exact conjugate draws for every omega cluster, one MH pass for every theta subcluster."""
    for j in state.active_omega():
        members = state.assign_j == j
        if not members.any():
            raise InvariantError(f"parameter update requested for empty omega cluster {j}")
        state.betas[j], state.phis[j] = draw_cost_params(data.response[members], data.cost_x[members], base,
                                                         state.phis[j], rng)
    for k in state.active_theta():
        members = state.assign_k == k
        if not members.any():
            raise InvariantError(f"parameter update requested for empty theta subcluster {k}")
        state.thetas[k] = theta_mh_step(state.thetas[k], data.surv_x[members], data.delta[members],
                                        data.base_cumhaz[members], base, tuner, rng)
    return state


def alpha_omega_log_conditional(alpha, J, n):
    """log p(alpha_omega | J, n) up to a constant: Gam(1,1) prior x alpha^J Gamma(alpha)/Gamma(alpha+n)."""
    alpha = np.asarray(alpha, dtype=float)
    return ((ALPHA_PRIOR_SHAPE - 1.0) * np.log(alpha) - ALPHA_PRIOR_RATE * alpha
            + J * np.log(alpha) + gammaln(alpha) - gammaln(alpha + n))


def alpha_theta_log_conditional(alpha, K_per_omega, n_per_omega):
    """log p(alpha_theta | K_j, n_j) up to a constant."""
    alpha = np.asarray(alpha, dtype=float)
    value = (ALPHA_PRIOR_SHAPE - 1.0) * np.log(alpha) - ALPHA_PRIOR_RATE * alpha
    for K, n in zip(K_per_omega, n_per_omega):
        value = value + K * np.log(alpha) + gammaln(alpha) - gammaln(alpha + n)
    return value


def draw_alpha_omega(alpha, J, n, rng):
    """Escobar-West auxiliary-variable draw."""
    if n == 0 or J == 0:
        return rng.gamma(ALPHA_PRIOR_SHAPE, 1.0 / ALPHA_PRIOR_RATE)
    eta = rng.beta(alpha + 1.0, n)
    rate = ALPHA_PRIOR_RATE - math.log(eta)
    odds = (ALPHA_PRIOR_SHAPE + J - 1.0) / (n * rate)
    shape = ALPHA_PRIOR_SHAPE + J if rng.random() < odds / (1.0 + odds) else ALPHA_PRIOR_SHAPE + J - 1.0
    return max(rng.gamma(shape, 1.0 / rate), np.finfo(float).tiny)


def draw_alpha_theta(alpha, K_per_omega, n_per_omega, tuner, rng):
    """Random-walk MH on log alpha_theta (Jacobian included)."""
    proposal = alpha * math.exp(tuner.sds[0] * rng.standard_normal())
    log_ratio = (alpha_theta_log_conditional(proposal, K_per_omega, n_per_omega) + math.log(proposal)
                 - alpha_theta_log_conditional(alpha, K_per_omega, n_per_omega) - math.log(alpha))
    accepted = math.log(rng.random() or np.finfo(float).tiny) < float(log_ratio)
    tuner.record(0, accepted)
    return proposal if accepted else alpha


def update_concentrations(state, rng, tuner):
    js = state.active_omega()
    state.alpha_omega = draw_alpha_omega(state.alpha_omega, len(js), state.n, rng)
    state.alpha_theta = draw_alpha_theta(state.alpha_theta, state.K_per_omega(), state.n_j[js], tuner, rng)
    return state.alpha_omega, state.alpha_theta


def prior_edp_draws(alpha_omega, alpha_theta, base, count, rng):
    """
    Parameters of `count` subjects seated by the nested Chinese restaurant process.

    Returns:
        dict with assign (count, 2), beta (count, p), phi (count,), theta (count, r)
    """
    if alpha_omega <= 0 or alpha_theta < 0:
        raise ConfigError("prior EDP draws need alpha_omega > 0 and alpha_theta >= 0", key="alpha")
    omega_sizes, omega_params = [], []
    sub_sizes, sub_params = [], []
    assign = np.zeros((count, 2), dtype=np.int64)
    for i in range(count):
        weights = np.array(omega_sizes + [alpha_omega], dtype=float)
        j = int(np.searchsorted(np.cumsum(weights), rng.random() * weights.sum(), side="right"))
        j = min(j, len(weights) - 1)
        if j == len(omega_sizes):
            omega_sizes.append(0)
            omega_params.append((base.draw_betas(rng, 1)[0], float(base.draw_phis(rng, 1)[0])))
            sub_sizes.append([])
            sub_params.append([])
            k = 0
        else:
            inner = np.array(sub_sizes[j] + [alpha_theta], dtype=float)
            k = int(np.searchsorted(np.cumsum(inner), rng.random() * inner.sum(), side="right"))
            k = min(k, len(inner) - 1)
        if k == len(sub_sizes[j]):
            sub_sizes[j].append(0)
            sub_params[j].append(base.draw_thetas(rng, 1)[0])
        omega_sizes[j] += 1
        sub_sizes[j][k] += 1
        assign[i] = (j, k)
    return {
        "assign": assign,
        "beta": np.array([omega_params[j][0] for j, _ in assign]).reshape(count, base.cost_dim),
        "phi": np.array([omega_params[j][1] for j, _ in assign]),
        "theta": np.array([sub_params[j][k] for j, k in assign]).reshape(count, base.surv_dim),
    }


def prepare_run(dataset, config):
    """Validate a run and build the hazard start, base measure and draw-store header."""
    dataset.check_fittable()
    if config.burnin >= config.iters:
        raise ConfigError(f"burnin ({config.burnin}) must be < iters ({config.iters})", key="burnin")
    if config.thin < 1:
        raise ConfigError(f"must be >= 1, got {config.thin}", key="thin")
    V = config.V if config.V is not None else default_interval_count(dataset)
    taus = build_grid(dataset, V)
    params = config.lambda_star_params
    if params is None:
        if config.lambda_star_family != "exponential":
            raise ConfigError(f"{config.lambda_star_family} centring needs explicit parameters",
                              key="lambda_star_params")
        params = [empirical_exponential_rate(dataset)]
    hazard = init_hazard_state(taus, config.b, config.xi, config.lambda_star_family, params)
    base = build_base_measure(dataset, config.nu_theta, config.nu_omega, config.a_0, config.centering,
                              config.beta_center, config.theta_center)
    meta = {
        "type": "header",
        "config": config.to_dict(),
        "fingerprint": config.fingerprint(),
        "n": dataset.n,
        "cost_model": dataset.cost_model,
        "add_intercept": dataset.add_intercept,
        "cost_dim": dataset.cost_dim,
        "surv_dim": dataset.surv_dim,
        "taus": hazard.taus.tolist(),
        "b": hazard.b,
        "xi": hazard.xi,
        "lambda_star": hazard.lambda_star.tolist(),
        "lambda_star_family": hazard.lambda_star_family,
        "lambda_star_params": [float(p) for p in params],
        "base": base.to_dict(),
        "chains": [0],
        "data": DrawStore.dataset_meta(dataset),
    }
    return hazard, base, meta


def _acceptance(c_tuner, theta_tuner, alpha_tuner):
    return {
        "c": c_tuner.to_dict()["acceptance"],
        "theta": theta_tuner.to_dict()["acceptance"],
        "alpha_theta": alpha_tuner.to_dict()["acceptance"][0],
    }


def run_mcmc(dataset, config, chain=0):
    """
    Run one chain.

    Retains sweep m when m >= burnin and (m - burnin) % thin == 0. Proposal scales
    adapt during burn-in and are frozen afterwards.

    Returns:
        DrawStore
    """
    hazard, base, meta = prepare_run(dataset, config)
    meta["chains"] = [chain]
    rng = np.random.default_rng(np.random.SeedSequence([int(config.seed), int(chain)]))
    exposure = GridExposure(dataset, hazard.taus)
    data = SubjectData(dataset, exposure)
    state = EDPState.single_cluster(dataset.n, base, rng)

    c_tuner = MHTuner(hazard.V - 1, C_INITIAL_SD, config.tune_window)
    theta_tuner = MHTuner(dataset.surv_dim, THETA_INITIAL_SD, config.tune_window)
    alpha_tuner = MHTuner(1, ALPHA_INITIAL_SD, config.tune_window)
    tuners = (c_tuner, theta_tuner, alpha_tuner)
    if config.burnin == 0:
        for tuner in tuners:
            tuner.freeze()

    logger.info(f"Chain {chain}: n={dataset.n}, V={hazard.V}, iters={config.iters}, burnin={config.burnin}, "
                f"thin={config.thin}, seed={config.seed}")
    records = []
    for m in range(config.iters):
        data.refresh_hazard(hazard)
        update_memberships(state, data, base, rng)
        update_cluster_params(state, data, base, theta_tuner, rng)
        etas = np.einsum("ij,ij->i", data.surv_x, state.subject_thetas())
        update_hazard(hazard, etas, exposure, c_tuner, rng, config.grid_cap)
        hazard.validate()
        update_concentrations(state, rng, alpha_tuner)

        if m < config.burnin:
            for tuner in tuners:
                if tuner.window_full():
                    tune(tuner)
            if m == config.burnin - 1:
                for tuner in tuners:
                    tuner.freeze()
                logger.info(f"Chain {chain}: burn-in done, c sds={np.round(c_tuner.sds, 4).tolist()}, "
                            f"theta sds={np.round(theta_tuner.sds, 4).tolist()}")
        elif (m - config.burnin) % config.thin == 0:
            records.append(DrawRecord(chain, m, copy.deepcopy(state), hazard.lambdas.copy(), hazard.u.copy(),
                                      hazard.c.copy(), _acceptance(*tuners)))

        if config.log_every and (m + 1) % config.log_every == 0:
            logger.info(f"Chain {chain}: sweep {m + 1}/{config.iters}, J={state.J}, "
                        f"subclusters={len(state.active_theta())}, alpha_omega={state.alpha_omega:.4g}, "
                        f"alpha_theta={state.alpha_theta:.4g}")

    logger.info(f"Chain {chain}: kept {len(records)} draws, acceptance {_acceptance(*tuners)}")
    return DrawStore(meta, records)


def run_chains(dataset, config, workers=1):
    """Independent chains, in worker processes when workers > 1; output does not depend on workers."""
    chains = list(range(int(config.chains)))
    if workers > 1 and len(chains) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(chains))) as pool:
            stores = list(pool.map(run_mcmc, [dataset] * len(chains), [config] * len(chains), chains))
    else:
        stores = [run_mcmc(dataset, config, chain) for chain in chains]
    return DrawStore.concat(stores)
