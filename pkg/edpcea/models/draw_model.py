from typing import Dict, List, Optional

import numpy as np

from edpcea.models.edp_state_model import EDPState
from edpcea.models.hazard_state_model import HazardState
from edpcea.models.subject_model import Dataset, Subject


class DrawRecord:
    """
    One retained MCMC iteration.

    Attributes:
        chain (int): Chain id.
        iteration (int): Sweep index within the chain, 0-based.
        edp (EDPState): Assignments, cluster tables and concentrations.
        lambdas, u, c (np.ndarray): Gamma Process state.
        acceptance (dict): Post-burn-in acceptance rates so far, keyed 'c', 'theta', 'alpha_theta'.
        gcomp (dict | None): Per-subject arm contrasts dT, dY and bootstrap weights, added by estimation.
    """

    def __init__(self, chain, iteration, edp: EDPState, lambdas, u, c, acceptance=None, gcomp=None):
        self.chain = int(chain)
        self.iteration = int(iteration)
        self.edp = edp
        self.lambdas = np.asarray(lambdas, dtype=float)
        self.u = np.asarray(u, dtype=np.int64)
        self.c = np.asarray(c, dtype=float)
        self.acceptance = acceptance or {}
        self.gcomp: Optional[Dict] = gcomp

    def assignments(self):
        """(n, 2) array of (j, k) per subject."""
        return np.column_stack([self.edp.assign_j, self.edp.assign_k])

    def to_dict(self):
        data = {
            "type": "draw",
            "chain": self.chain,
            "iteration": self.iteration,
            **self.edp.to_dict(),
            "lambdas": self.lambdas.tolist(),
            "u": self.u.tolist(),
            "c": self.c.tolist(),
            "acceptance": self.acceptance,
        }
        if self.gcomp is not None:
            data["gcomp"] = self.gcomp
        return data

    @classmethod
    def from_dict(cls, data):
        return cls(data["chain"], data["iteration"], EDPState.from_dict(data), data["lambdas"], data["u"],
                   data["c"], data.get("acceptance"), data.get("gcomp"))


class DrawStore:
    """
    Retained draws of one or more chains plus the run header they share.

    The header carries the effective config, the hazard grid and prior constants,
    the base measure and the fitted data, so estimation needs nothing else.
    """

    def __init__(self, meta: Dict, records: List[DrawRecord]):
        self.meta = meta
        self.records = list(records)

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def __getitem__(self, idx):
        return self.records[idx]

    @property
    def taus(self):
        return np.asarray(self.meta["taus"], dtype=float)

    @property
    def n(self):
        return int(self.meta["n"])

    def hazard(self, record: DrawRecord) -> HazardState:
        return HazardState(self.taus, record.lambdas, record.u, record.c, self.meta["b"], self.meta["xi"],
                           self.meta["lambda_star"], self.meta["lambda_star_family"],
                           self.meta["lambda_star_params"])

    def dataset(self) -> Dataset:
        """Rebuild the fitted dataset from the header (raw confounders, intercept re-added)."""
        data = self.meta["data"]
        subjects = [Subject(y, t, d, a, l) for y, t, d, a, l in
                    zip(data["y"], data["t"], data["delta"], data["a"], data["l"])]
        return Dataset(subjects, cost_model=self.meta["cost_model"], add_intercept=self.meta["add_intercept"])

    def lambda_matrix(self):
        return np.array([r.lambdas for r in self.records])

    def has_gcomp(self):
        return bool(self.records) and all(r.gcomp is not None for r in self.records)

    @staticmethod
    def dataset_meta(dataset: Dataset):
        subjects = dataset.raw_subjects()
        return {
            "y": [s.y for s in subjects],
            "t": [s.t for s in subjects],
            "delta": [s.delta for s in subjects],
            "a": [s.a for s in subjects],
            "l": [list(s.l) for s in subjects],
        }

    @classmethod
    def concat(cls, stores):
        """Join chains run under one header, ordered by chain then iteration."""
        stores = list(stores)
        records = [r for s in stores for r in s.records]
        records.sort(key=lambda r: (r.chain, r.iteration))
        meta = dict(stores[0].meta)
        meta["chains"] = sorted({r.chain for r in records})
        return cls(meta, records)
