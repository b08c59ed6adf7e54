import math
from typing import Dict, List, Optional

import numpy as np

from edpcea.utils.errors import ValidationError


class GcompDraw:
    """
    g-computation output of one posterior draw.

    Net monetary benefit is affine in kappa, so the draw keeps the per-subject
    arm contrasts and evaluates Psi at any willingness-to-pay on demand.

    Attributes:
        chain (int), iteration (int): Source draw.
        kappa (float): Willingness-to-pay the draw was requested at.
        weights (np.ndarray): Bayesian-bootstrap weights, nonnegative, summing to 1.
        delta_t (np.ndarray): E[T^1 ^ tau] - E[T^0 ^ tau] per subject.
        delta_y (np.ndarray): E[Y^1] - E[Y^0] per subject.
    """

    WEIGHT_TOLERANCE = 1e-12

    def __init__(self, chain, iteration, kappa, weights, delta_t, delta_y):
        self.chain = int(chain)
        self.iteration = int(iteration)
        self.kappa = float(kappa)
        self.weights = np.asarray(weights, dtype=float)
        self.delta_t = np.asarray(delta_t, dtype=float)
        self.delta_y = np.asarray(delta_y, dtype=float)
        if np.any(self.weights < 0) or abs(self.weights.sum() - 1.0) > self.WEIGHT_TOLERANCE:
            raise ValidationError("bootstrap weights must be nonnegative and sum to 1", field="weights")

    def psi_i_at(self, kappa):
        return kappa * self.delta_t - self.delta_y

    def psi_at(self, kappa):
        return float(self.weights @ self.psi_i_at(kappa))

    @property
    def psi_i(self):
        return self.psi_i_at(self.kappa)

    @property
    def psi(self):
        return self.psi_at(self.kappa)

    @property
    def weighted_delta_t(self):
        return float(self.weights @ self.delta_t)

    @property
    def weighted_delta_y(self):
        return float(self.weights @ self.delta_y)

    def to_dict(self):
        return {
            "weights": self.weights.tolist(),
            "dT": self.delta_t.tolist(),
            "dY": self.delta_y.tolist(),
        }

    @classmethod
    def from_record(cls, record, kappa):
        if record.gcomp is None:
            raise ValidationError(f"draw {record.chain}:{record.iteration} has no g-computation output")
        data = record.gcomp
        return cls(record.chain, record.iteration, kappa, data["weights"], data["dT"], data["dY"])


class CEACurve:
    """Posterior probability that NMB > 0 at each willingness-to-pay."""

    def __init__(self, kappas, probs):
        self.kappas = [float(k) for k in kappas]
        self.probs = [float(p) for p in probs]

    def __len__(self):
        return len(self.kappas)

    def rows(self):
        return list(zip(self.kappas, self.probs))


class EstimandSummary:
    """Posterior mean and equal-tailed 95% credible interval of a scalar estimand."""

    def __init__(self, mean, lo95, hi95, draws, ess=None):
        self.mean = float(mean)
        self.lo95 = float(lo95)
        self.hi95 = float(hi95)
        self.draws = int(draws)
        self.ess = None if ess is None or (isinstance(ess, float) and math.isnan(ess)) else float(ess)

    @property
    def width(self):
        return self.hi95 - self.lo95

    def covers(self, value):
        return self.lo95 <= value <= self.hi95

    def to_dict(self):
        return {"mean": self.mean, "lo95": self.lo95, "hi95": self.hi95, "draws": self.draws, "ess": self.ess}


class IcerResult:
    """
    Per-draw ICER with near-zero survival differences flagged.

    Attributes:
        ratios (np.ndarray): Delta Y / Delta T per draw, NaN where flagged.
        flagged (np.ndarray): True where |Delta T| < the tolerance.
        summary (EstimandSummary | None): Over the unflagged draws, when at least two remain.
    """

    def __init__(self, ratios, flagged, summary: Optional[EstimandSummary]):
        self.ratios = np.asarray(ratios, dtype=float)
        self.flagged = np.asarray(flagged, dtype=bool)
        self.summary = summary

    @property
    def n_flagged(self):
        return int(self.flagged.sum())


class EvalReport:
    """
    Frequentist operating characteristics per simulation setting.

    rows: one dict per setting with keys setting, replicates, excluded, psi_true,
    psi_true_se, rel_bias, abs_rel_bias, coverage, width, exclusion_flag.
    """

    def __init__(self, rows: List[Dict], fingerprint: str):
        self.rows = rows
        self.fingerprint = fingerprint
        for row in rows:
            if row.get("coverage") is not None and not 0.0 <= row["coverage"] <= 1.0:
                raise ValidationError(f"coverage out of range in setting {row['setting']}")
            if row.get("width") is not None and row["width"] < 0:
                raise ValidationError(f"negative interval width in setting {row['setting']}")

    def to_dict(self):
        return {"fingerprint": self.fingerprint, "rows": self.rows}
