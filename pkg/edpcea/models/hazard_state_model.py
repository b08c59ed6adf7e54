from typing import Optional, Sequence

import numpy as np

from edpcea.utils.errors import InvariantError


class HazardState:
    """
    Piecewise-constant baseline hazard under the dependent Gamma Process prior.

    Attributes:
        taus (np.ndarray): Right interval ends 0 < tau_1 < ... < tau_V, equally spaced.
        lambdas (np.ndarray): Hazard rate lambda_0v > 0 on (tau_{v-1}, tau_v].
        u (np.ndarray): Latent Poisson chain, nonnegative integers.
        c (np.ndarray): Latent positive chain.
        b (float): Dispersion; prior lambda_0v ~ Gam(shape=b * lambda_star_v, rate=b).
        xi (float): Mean of the exponential prior on each c_v.
        lambda_star (np.ndarray): Prior mean rate per interval.
        lambda_star_family (str): Family lambda_star was built from.
        lambda_star_params (list[float]): Parameters of that family.
    """

    def __init__(self, taus, lambdas, u, c, b, xi, lambda_star,
                 lambda_star_family="exponential", lambda_star_params: Optional[Sequence[float]] = None):
        self.taus = np.asarray(taus, dtype=float)
        self.lambdas = np.asarray(lambdas, dtype=float).copy()
        self.u = np.asarray(u, dtype=np.int64).copy()
        self.c = np.asarray(c, dtype=float).copy()
        self.b = float(b)
        self.xi = float(xi)
        self.lambda_star = np.asarray(lambda_star, dtype=float)
        self.lambda_star_family = lambda_star_family
        self.lambda_star_params = list(lambda_star_params or [])

    @property
    def V(self):
        return len(self.taus)

    @property
    def width(self):
        return float(self.taus[0])

    @property
    def tau_max(self):
        return float(self.taus[-1])

    @property
    def tau_lo(self):
        return np.concatenate([[0.0], self.taus[:-1]])

    @property
    def prior_shape(self):
        return self.b * self.lambda_star

    def validate(self):
        if np.any(np.diff(self.taus) <= 0) or self.taus[0] <= 0:
            raise InvariantError("hazard grid must be strictly increasing and positive")
        if np.any(self.lambdas <= 0) or not np.all(np.isfinite(self.lambdas)):
            raise InvariantError(f"hazard rates must be positive, got {self.lambdas.tolist()}")
        if np.any(self.c <= 0) or not np.all(np.isfinite(self.c)):
            raise InvariantError(f"latent c must be positive, got {self.c.tolist()}")
        if np.any(self.u < 0):
            raise InvariantError(f"latent u must be nonnegative, got {self.u.tolist()}")

    def copy(self):
        return HazardState(self.taus, self.lambdas, self.u, self.c, self.b, self.xi, self.lambda_star,
                           self.lambda_star_family, self.lambda_star_params)

    def dump(self):
        """Small state dict for error messages."""
        return {
            "lambdas": self.lambdas.tolist(),
            "u": self.u.tolist(),
            "c": self.c.tolist(),
            "b": self.b,
            "xi": self.xi,
        }

    def to_dict(self):
        return {
            "taus": self.taus.tolist(),
            "lambdas": self.lambdas.tolist(),
            "u": self.u.tolist(),
            "c": self.c.tolist(),
            "b": self.b,
            "xi": self.xi,
            "lambda_star": self.lambda_star.tolist(),
            "lambda_star_family": self.lambda_star_family,
            "lambda_star_params": self.lambda_star_params,
        }

    @classmethod
    def from_dict(cls, data):
        return cls(data["taus"], data["lambdas"], data["u"], data["c"], data["b"], data["xi"],
                   data["lambda_star"], data.get("lambda_star_family", "exponential"),
                   data.get("lambda_star_params"))


class MHTuner:
    """
    Per-coordinate random-walk proposal scales with windowed acceptance bookkeeping.
    Scales adapt only while not frozen; totals after freezing give post-burn-in rates.
    """
    TARGET = 0.234
    STEP = 0.1

    def __init__(self, size, initial_sd=1.0, window=50):
        if window < 1:
            raise ValueError("adaptation window must be >= 1")
        self.sds = np.full(size, float(initial_sd))
        self.window = int(window)
        self.frozen = False
        self.window_accepted = np.zeros(size, dtype=np.int64)
        self.window_proposed = np.zeros(size, dtype=np.int64)
        self.total_accepted = np.zeros(size, dtype=np.int64)
        self.total_proposed = np.zeros(size, dtype=np.int64)

    def __len__(self):
        return len(self.sds)

    def record(self, idx, accepted):
        self.window_proposed[idx] += 1
        self.total_proposed[idx] += 1
        if accepted:
            self.window_accepted[idx] += 1
            self.total_accepted[idx] += 1

    def window_full(self):
        return bool(np.any(self.window_proposed >= self.window))

    def window_rates(self):
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(self.window_proposed > 0, self.window_accepted / np.maximum(self.window_proposed, 1), np.nan)

    def acceptance_rates(self):
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(self.total_proposed > 0, self.total_accepted / np.maximum(self.total_proposed, 1), np.nan)

    def reset_window(self):
        self.window_accepted[:] = 0
        self.window_proposed[:] = 0

    def freeze(self):
        """Stop adapting and restart the acceptance totals."""
        self.frozen = True
        self.reset_window()
        self.total_accepted[:] = 0
        self.total_proposed[:] = 0

    def to_dict(self):
        return {"sds": self.sds.tolist(), "acceptance": [None if np.isnan(r) else float(r) for r in self.acceptance_rates()]}
