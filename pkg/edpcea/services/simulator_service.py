"""
Simulation benchmark for joint cost-survival data with a latent two-group structure.

Per subject:
    c ~ Ber(p_c), L ~ N(0, 1), A ~ Ber(expit(0.1 L))
    eta = (1 - 2c) L + (hazard effect) c A
    D = (-log Z * exp(-eta))^(1/shape), C drawn the same way independently
    censored iff C < D and Z' < p_delta: (T, delta) = (C, 0), else (D, 1)
    Y ~ N(5 + 5c + 0.1 L + (cost effect) A + T, 0.5^2)
"""
import os

import numpy as np
import pandas as pd
from scipy.special import expit

from edpcea.models.subject_model import Dataset, Subject
from edpcea.utils.errors import ValidationError
from edpcea.utils.logger import get_logger

MIN_ORACLE_REPS = 10 ** 6
ORACLE_CHUNK = 10 ** 6
COST_NOISE_SD = 0.5

logger = get_logger()


class DGPConfig:
    """
    Attributes:
        n (int): Subjects, >= 1.
        p_c (float): Probability of the latent effect-modifying group.
        p_delta (float): Thinning probability applied to censoring.
        kappa (float): Willingness-to-pay used by the oracle.
        seed (int)
        weibull_shape (float): Shape of the Weibull-PH event and censoring times.
        treatment_cost_effect (float): Cost shift of treatment.
        treatment_hazard_effect (float): Log hazard ratio of treatment in the latent group.
    """

    def __init__(self, n=1000, p_c=0.5, p_delta=0.1, kappa=1.0, seed=1, weibull_shape=10.0,
                 treatment_cost_effect=-3.0, treatment_hazard_effect=2.0):
        self.n = int(n)
        self.p_c = float(p_c)
        self.p_delta = float(p_delta)
        self.kappa = float(kappa)
        self.seed = int(seed)
        self.weibull_shape = float(weibull_shape)
        self.treatment_cost_effect = float(treatment_cost_effect)
        self.treatment_hazard_effect = float(treatment_hazard_effect)
        self.validate()

    def validate(self):
        if self.n < 1:
            raise ValidationError(f"n must be >= 1, got {self.n}", field="n")
        for name in ("p_c", "p_delta"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValidationError(f"must lie in [0, 1], got {value}", field=name)
        if self.weibull_shape <= 0:
            raise ValidationError(f"must be > 0, got {self.weibull_shape}", field="weibull_shape")

    def replace(self, **changes):
        values = self.to_dict()
        values.update(changes)
        return DGPConfig(**values)

    def to_dict(self):
        return {
            "n": self.n,
            "p_c": self.p_c,
            "p_delta": self.p_delta,
            "kappa": self.kappa,
            "seed": self.seed,
            "weibull_shape": self.weibull_shape,
            "treatment_cost_effect": self.treatment_cost_effect,
            "treatment_hazard_effect": self.treatment_hazard_effect,
        }


# joint structure x censoring level
SETTINGS = {
    "parametric_low": {"p_c": 0.0, "p_delta": 0.1},
    "parametric_high": {"p_c": 0.0, "p_delta": 0.4},
    "bimodal_low": {"p_c": 0.5, "p_delta": 0.1},
    "bimodal_high": {"p_c": 0.5, "p_delta": 0.4},
}


def setting_config(name, n=1000, seed=1, kappa=1.0):
    if name not in SETTINGS:
        raise ValidationError(f"unknown setting '{name}', expected one of {list(SETTINGS)}", field="setting")
    return DGPConfig(n=n, seed=seed, kappa=kappa, **SETTINGS[name])


def weibull_ph_times(eta, uniforms, shape):
    """Inverse transform of S(t) = exp(-t^shape e^eta)."""
    return (-np.log(uniforms) * np.exp(-eta)) ** (1.0 / shape)


def linear_predictor(c, L, A, config):
    return (1.0 - 2.0 * c) * L + config.treatment_hazard_effect * c * A


def cost_mean(c, L, A, T, config):
    return 5.0 + 5.0 * c + 0.1 * L + config.treatment_cost_effect * A + T


def _open_uniforms(rng, size):
    # (0, 1) excluding 0 so log stays finite
    return 1.0 - rng.random(size)


def simulate(config: DGPConfig):
    """
    Returns:
        (Dataset with one confounder, truth DataFrame with columns i, c, D, C)
    """
    rng = np.random.default_rng(config.seed)
    n = config.n
    c = (rng.random(n) < config.p_c).astype(int)
    L = rng.standard_normal(n)
    A = (rng.random(n) < expit(0.1 * L)).astype(int)
    eta = linear_predictor(c, L, A, config)
    D = weibull_ph_times(eta, _open_uniforms(rng, n), config.weibull_shape)
    C = weibull_ph_times(eta, _open_uniforms(rng, n), config.weibull_shape)
    thin = rng.random(n) < config.p_delta
    censored = (C < D) & thin
    T = np.where(censored, C, D)
    delta = (~censored).astype(int)
    Y = cost_mean(c, L, A, T, config) + COST_NOISE_SD * rng.standard_normal(n)

    subjects = [Subject(Y[i], T[i], delta[i], A[i], (L[i],)) for i in range(n)]
    dataset = Dataset(subjects)
    truth = pd.DataFrame({"i": np.arange(n), "c": c, "D": D, "C": C})
    logger.info(f"Simulated n={n} (p_c={config.p_c}, p_delta={config.p_delta}, seed={config.seed}): "
                f"censored {float(censored.mean()):.3f}")
    return dataset, truth


def write_truth(truth: pd.DataFrame, path):
    dir_path = os.path.dirname(str(path))
    if dir_path:
        os.makedirs(dir_path, exist_ok=True)
    truth.to_csv(path, index=False, float_format="%.17g", lineterminator="\n")


def oracle_truth(config: DGPConfig, reps=MIN_ORACLE_REPS, kappa=None, enforce_min=True):
    """
    Monte-Carlo potential outcomes without censoring, both arms per simulated subject
    with common random numbers.

    Returns:
        dict psi, psi_se, mean_t1, mean_t0, mean_y1, mean_y0 (each mean with an _se)
    """
    if enforce_min and reps < MIN_ORACLE_REPS:
        raise ValidationError(f"oracle needs at least {MIN_ORACLE_REPS} replicates, got {reps}", field="reps")
    kappa = config.kappa if kappa is None else float(kappa)
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 0x0AC1E]))
    sums = {key: np.zeros(2) for key in ("psi", "t1", "t0", "y1", "y0")}
    remaining = int(reps)
    while remaining > 0:
        size = min(ORACLE_CHUNK, remaining)
        c = (rng.random(size) < config.p_c).astype(int)
        L = rng.standard_normal(size)
        uniforms = _open_uniforms(rng, size)
        noise = COST_NOISE_SD * rng.standard_normal(size)
        outcomes = {}
        for a in (0, 1):
            A = np.full(size, a)
            T = weibull_ph_times(linear_predictor(c, L, A, config), uniforms, config.weibull_shape)
            outcomes[f"t{a}"] = T
            outcomes[f"y{a}"] = cost_mean(c, L, A, T, config) + noise
        outcomes["psi"] = kappa * (outcomes["t1"] - outcomes["t0"]) - (outcomes["y1"] - outcomes["y0"])
        for key, values in outcomes.items():
            sums[key] += (values.sum(), np.square(values).sum())
        remaining -= size

    result = {}
    for key, (total, total_sq) in sums.items():
        mean = total / reps
        var = max(total_sq / reps - mean ** 2, 0.0)
        name = key if key == "psi" else f"mean_{key}"
        result[name] = float(mean)
        result[f"{name}_se"] = float(np.sqrt(var / reps))
    return result
