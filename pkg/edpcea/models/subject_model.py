import math
from typing import List, Sequence

import numpy as np

from edpcea.utils.errors import ValidationError

COST_MODELS = ("gaussian", "lognormal")


class Subject:
    """
    One observed subject of a cost-effectiveness study.

    Attributes:
        y (float): Accumulated cost up to the observed time.
        t (float): Observed (possibly censored) time, > 0.
        delta (int): 1 if t is a death, 0 if censored.
        a (int): Treatment arm, 0 or 1.
        l (tuple[float]): Confounders, binary ones coded 0/1.
    """
    __slots__ = ("y", "t", "delta", "a", "l")

    def __init__(self, y, t, delta, a, l):
        self.y = float(y)
        self.t = float(t)
        self.delta = int(delta)
        self.a = int(a)
        self.l = tuple(float(v) for v in l)

    def validate(self, cost_model="gaussian", row=None):
        if not math.isfinite(self.y):
            raise ValidationError("cost must be finite", row=row, field="y")
        if not (math.isfinite(self.t) and self.t > 0):
            raise ValidationError(f"time must be > 0, got {self.t}", row=row, field="t")
        if self.delta not in (0, 1):
            raise ValidationError(f"event indicator must be 0 or 1, got {self.delta}", row=row, field="delta")
        if self.a not in (0, 1):
            raise ValidationError(f"treatment must be 0 or 1, got {self.a}", row=row, field="a")
        for idx, value in enumerate(self.l, start=1):
            if not math.isfinite(value):
                raise ValidationError("confounder must be finite", row=row, field=f"l{idx}")
        if cost_model == "lognormal" and self.y <= 0:
            raise ValidationError(f"log-normal cost model requires y > 0, got {self.y}", row=row, field="y")

    def __eq__(self, other):
        if not isinstance(other, Subject):
            return NotImplemented
        return (self.y, self.t, self.delta, self.a, self.l) == (other.y, other.t, other.delta, other.a, other.l)

    def __repr__(self):
        return f"Subject(y={self.y!r}, t={self.t!r}, delta={self.delta}, a={self.a}, l={self.l!r})"

    def to_dict(self):
        return {"y": self.y, "t": self.t, "delta": self.delta, "a": self.a, "l": list(self.l)}


class Dataset:
    """
    Immutable ordered collection of subjects. Subject index i is the input row order
    and identifies the subject everywhere downstream.

    Attributes:
        subjects (list[Subject])
        q (int): Confounder count (including the constant column when add_intercept is set).
        n (int): Subject count.
        cost_model (str): 'gaussian' or 'lognormal'.
        add_intercept (bool): Whether l[0] is a constant 1 column.
    """

    def __init__(self, subjects: Sequence[Subject], cost_model: str = "gaussian",
                 add_intercept: bool = False):
        if cost_model not in COST_MODELS:
            raise ValidationError(f"unknown cost model '{cost_model}'", field="cost_model")
        subjects = list(subjects)
        if add_intercept:
            subjects = [Subject(s.y, s.t, s.delta, s.a, (1.0,) + s.l) for s in subjects]
        self.cost_model = cost_model
        self.add_intercept = add_intercept
        self.subjects: List[Subject] = subjects
        self.n = len(subjects)
        self.q = len(subjects[0].l) if subjects else 0

        for row, subject in enumerate(subjects, start=1):
            if len(subject.l) != self.q:
                raise ValidationError(f"expected {self.q} confounders, got {len(subject.l)}", row=row, field="l")
            subject.validate(cost_model, row=row)

        self._freeze_arrays()

    def check_fittable(self):
        """Dataset-level invariants a model fit needs; rows are validated on construction."""
        if self.n < 2:
            raise ValidationError(f"need at least 2 subjects, got {self.n}", field="n")
        arms = {s.a for s in self.subjects}
        if arms != {0, 1}:
            raise ValidationError("need at least one subject in each treatment arm", field="a")
        if not any(s.delta == 1 for s in self.subjects):
            raise ValidationError("need at least one observed death", field="delta")

    def _freeze_arrays(self):
        self.y = np.array([s.y for s in self.subjects], dtype=float)
        self.t = np.array([s.t for s in self.subjects], dtype=float)
        self.delta = np.array([s.delta for s in self.subjects], dtype=int)
        self.a = np.array([s.a for s in self.subjects], dtype=int)
        self.l = np.array([s.l for s in self.subjects], dtype=float).reshape(self.n, self.q)
        for arr in (self.y, self.t, self.delta, self.a, self.l):
            arr.setflags(write=False)

    @property
    def cost_response(self):
        """Cost on the scale the local model is Gaussian on."""
        return np.log(self.y) if self.cost_model == "lognormal" else self.y

    @property
    def cost_dim(self):
        return 2 + self.q

    @property
    def surv_dim(self):
        return 1 + self.q - (1 if self.add_intercept else 0)

    def cost_design(self, a=None):
        """Rows (t, a, l) in the canonical coefficient order."""
        arm = self.a if a is None else np.full(self.n, a)
        return np.column_stack([self.t, arm, self.l])

    def surv_design(self, a=None):
        """Rows (a, l); a constant intercept column is left to the baseline hazard."""
        arm = self.a if a is None else np.full(self.n, a)
        l = self.l[:, 1:] if self.add_intercept else self.l
        return np.column_stack([arm, l])

    def confounder_names(self):
        names = [f"l{i}" for i in range(1, self.q + 1)]
        if self.add_intercept:
            names = ["intercept"] + [f"l{i}" for i in range(1, self.q)]
        return names

    def raw_subjects(self):
        """Subjects as read, without the prepended intercept column."""
        if not self.add_intercept:
            return list(self.subjects)
        return [Subject(s.y, s.t, s.delta, s.a, s.l[1:]) for s in self.subjects]

    def __len__(self):
        return self.n

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (self.cost_model == other.cost_model and self.add_intercept == other.add_intercept
                and self.subjects == other.subjects)

    def summary(self):
        return {
            "n": self.n,
            "q": self.q,
            "cost_model": self.cost_model,
            "events": int(self.delta.sum()),
            "censored": int(self.n - self.delta.sum()),
            "treated": int(self.a.sum()),
            "mean_cost": float(self.y.mean()),
            "mean_time": float(self.t.mean()),
            "max_time": float(self.t.max()),
        }
