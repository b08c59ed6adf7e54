import math

import numpy as np

from edpcea.utils.errors import ValidationError

class CostParams:
    """
    Cost-model parameters omega = (beta, phi).

    Attributes:
        beta (np.ndarray): Coefficients ordered (T | A | L...), length 2 + q.
        phi (float): Variance (Gaussian) or log-scale variance (log-normal), > 0.
    """
    __slots__ = ("beta", "phi")

    def __init__(self, beta, phi):
        self.beta = np.asarray(beta, dtype=float)
        self.phi = float(phi)
        if not (math.isfinite(self.phi) and self.phi > 0):
            raise ValidationError(f"phi must be > 0, got {self.phi}", field="phi")
        if not np.all(np.isfinite(self.beta)):
            raise ValidationError("beta must be finite", field="beta")

    @property
    def beta_t(self):
        return float(self.beta[0])

    @property
    def beta_x(self):
        """Coefficients on (A, L...)."""
        return self.beta[1:]

    def to_dict(self):
        return {"beta": self.beta.tolist(), "phi": self.phi}

    @classmethod
    def from_dict(cls, data):
        return cls(data["beta"], data["phi"])

    def __repr__(self):
        return f"CostParams(beta={self.beta.tolist()}, phi={self.phi})"

class SurvParams:
    """
    Log-hazard-ratio coefficients theta ordered (A | L...).
    """
    __slots__ = ("theta",)

    def __init__(self, theta):
        self.theta = np.asarray(theta, dtype=float)
        if not np.all(np.isfinite(self.theta)):
            raise ValidationError("theta must be finite", field="theta")

    def to_dict(self):
        return {"theta": self.theta.tolist()}

    @classmethod
    def from_dict(cls, data):
        return cls(data["theta"])

    def __repr__(self):
        return f"SurvParams(theta={self.theta.tolist()})"
