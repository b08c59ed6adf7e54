from typing import Dict, Tuple

import numpy as np

from edpcea.models.params_model import CostParams, SurvParams
from edpcea.utils.errors import InvariantError


class BaseMeasure:
    """
    Product base measure G_0 = G_0omega x G_0theta.

    Attributes:
        theta_center (np.ndarray): Mean of the Gaussian base on theta, length r.
        theta_var (np.ndarray): Diagonal variances of that base, > 0.
        beta_center (np.ndarray): Mean of the Gaussian base on beta, length p.
        beta_var (np.ndarray): Diagonal variances of that base, > 0.
        phi_shape (float): Inverse-Gamma shape a_0 on phi.
        phi_scale (float): Inverse-Gamma scale on phi.
        centering (str): Mode the centers came from ('null', 'user', 'ols').
    """

    def __init__(self, theta_center, theta_var, beta_center, beta_var, phi_shape, phi_scale, centering="null"):
        self.theta_center = np.asarray(theta_center, dtype=float)
        self.theta_var = np.asarray(theta_var, dtype=float)
        self.beta_center = np.asarray(beta_center, dtype=float)
        self.beta_var = np.asarray(beta_var, dtype=float)
        self.phi_shape = float(phi_shape)
        self.phi_scale = float(phi_scale)
        self.centering = centering
        self.validate()

    def validate(self):
        if self.theta_center.shape != self.theta_var.shape or self.beta_center.shape != self.beta_var.shape:
            raise InvariantError("base-measure centers and variances must have matching shapes")
        if np.any(self.theta_var <= 0) or np.any(self.beta_var <= 0):
            raise InvariantError("base-measure variances must be positive")
        if self.phi_shape <= 0 or self.phi_scale <= 0:
            raise InvariantError("inverse-Gamma base needs positive shape and scale")

    @property
    def cost_dim(self):
        return len(self.beta_center)

    @property
    def surv_dim(self):
        return len(self.theta_center)

    def phi_mean(self):
        return self.phi_scale / (self.phi_shape - 1.0) if self.phi_shape > 1 else float("inf")

    def draw_betas(self, rng, count):
        return self.beta_center + np.sqrt(self.beta_var) * rng.standard_normal((count, self.cost_dim))

    def draw_phis(self, rng, count):
        return self.phi_scale / rng.gamma(self.phi_shape, 1.0, size=count)

    def draw_thetas(self, rng, count):
        return self.theta_center + np.sqrt(self.theta_var) * rng.standard_normal((count, self.surv_dim))

    def theta_log_density(self, theta):
        """Unnormalised Gaussian log-density of theta (last axis)."""
        return -0.5 * np.sum((np.asarray(theta) - self.theta_center) ** 2 / self.theta_var, axis=-1)

    def to_dict(self):
        return {
            "theta_center": self.theta_center.tolist(),
            "theta_var": self.theta_var.tolist(),
            "beta_center": self.beta_center.tolist(),
            "beta_var": self.beta_var.tolist(),
            "phi_shape": self.phi_shape,
            "phi_scale": self.phi_scale,
            "centering": self.centering,
        }

    @classmethod
    def from_dict(cls, data):
        return cls(data["theta_center"], data["theta_var"], data["beta_center"], data["beta_var"],
                   data["phi_shape"], data["phi_scale"], data.get("centering", "null"))


class EDPState:
    """
    Nested partition of the subjects plus the cluster parameter tables.

    Omega clusters and theta subclusters live in arenas indexed by integer ids.
    A slot is occupied while its count is positive; emptied slots are reused,
    lowest id first. A theta id is global, its parent omega id is kept in sub_parent.

    Attributes:
        assign_j (np.ndarray): (n,) omega-cluster id of each subject.
        assign_k (np.ndarray): (n,) theta-subcluster id of each subject.
        betas (np.ndarray): (capJ, p) cost coefficients per omega slot.
        phis (np.ndarray): (capJ,) cost variances per omega slot.
        n_j (np.ndarray): (capJ,) omega occupancy.
        thetas (np.ndarray): (capK, r) survival coefficients per theta slot.
        sub_parent (np.ndarray): (capK,) omega id owning each theta slot, -1 when free.
        n_jk (np.ndarray): (capK,) theta occupancy.
        alpha_omega (float), alpha_theta (float): Concentrations.
    """

    def __init__(self, n, cost_dim, surv_dim, capacity=8):
        capacity = max(1, int(capacity))
        self.n = int(n)
        self.assign_j = np.zeros(self.n, dtype=np.int64)
        self.assign_k = np.zeros(self.n, dtype=np.int64)
        self.betas = np.zeros((capacity, cost_dim))
        self.phis = np.ones(capacity)
        self.n_j = np.zeros(capacity, dtype=np.int64)
        self.thetas = np.zeros((capacity, surv_dim))
        self.sub_parent = np.full(capacity, -1, dtype=np.int64)
        self.n_jk = np.zeros(capacity, dtype=np.int64)
        self.alpha_omega = 1.0
        self.alpha_theta = 1.0

    @classmethod
    def single_cluster(cls, n, base, rng, alpha_omega=1.0, alpha_theta=1.0):
        """Every subject in one (j, k) cluster whose parameters are a G_0 draw."""
        state = cls(n, base.cost_dim, base.surv_dim)
        j = state.open_omega(base.draw_betas(rng, 1)[0], base.draw_phis(rng, 1)[0])
        k = state.open_theta(j, base.draw_thetas(rng, 1)[0])
        for i in range(n):
            state.add(i, j, k)
        state.alpha_omega = float(alpha_omega)
        state.alpha_theta = float(alpha_theta)
        return state

    # arena management

    def _grow_omega(self):
        cap = len(self.n_j)
        self.betas = np.vstack([self.betas, np.zeros_like(self.betas)])
        self.phis = np.concatenate([self.phis, np.ones(cap)])
        self.n_j = np.concatenate([self.n_j, np.zeros(cap, dtype=np.int64)])

    def _grow_theta(self):
        cap = len(self.n_jk)
        self.thetas = np.vstack([self.thetas, np.zeros_like(self.thetas)])
        self.sub_parent = np.concatenate([self.sub_parent, np.full(cap, -1, dtype=np.int64)])
        self.n_jk = np.concatenate([self.n_jk, np.zeros(cap, dtype=np.int64)])

    def open_omega(self, beta, phi):
        """Claim the lowest free omega slot; it counts as occupied once a subject is added."""
        free = np.flatnonzero(self.n_j == 0)
        if len(free) == 0:
            self._grow_omega()
            free = np.flatnonzero(self.n_j == 0)
        j = int(free[0])
        self.betas[j] = beta
        self.phis[j] = phi
        return j

    def open_theta(self, j, theta):
        free = np.flatnonzero(self.n_jk == 0)
        if len(free) == 0:
            self._grow_theta()
            free = np.flatnonzero(self.n_jk == 0)
        k = int(free[0])
        self.thetas[k] = theta
        self.sub_parent[k] = j
        return k

    def add(self, i, j, k):
        if self.sub_parent[k] != j:
            raise InvariantError(f"theta subcluster {k} does not belong to omega cluster {j}")
        self.assign_j[i] = j
        self.assign_k[i] = k
        self.n_j[j] += 1
        self.n_jk[k] += 1

    def remove(self, i):
        """
        Take subject i out of its cluster, freeing slots that empty.

        Returns:
            (j, k, omega_emptied, theta_emptied)
        """
        j, k = int(self.assign_j[i]), int(self.assign_k[i])
        self.n_j[j] -= 1
        self.n_jk[k] -= 1
        theta_emptied = self.n_jk[k] == 0
        if theta_emptied:
            self.sub_parent[k] = -1
        self.assign_j[i] = -1
        self.assign_k[i] = -1
        return j, k, bool(self.n_j[j] == 0), bool(theta_emptied)

    # views

    def active_omega(self):
        return np.flatnonzero(self.n_j > 0)

    def active_theta(self):
        return np.flatnonzero(self.n_jk > 0)

    @property
    def J(self):
        return int(np.count_nonzero(self.n_j))

    def K_per_omega(self):
        """Number of occupied theta subclusters of each occupied omega cluster, aligned with active_omega()."""
        parents = self.sub_parent[self.active_theta()]
        return np.array([np.count_nonzero(parents == j) for j in self.active_omega()], dtype=np.int64)

    def subject_betas(self):
        return self.betas[self.assign_j]

    def subject_phis(self):
        return self.phis[self.assign_j]

    def subject_thetas(self):
        return self.thetas[self.assign_k]

    def omega_table(self) -> Dict[int, CostParams]:
        return {int(j): CostParams(self.betas[j], self.phis[j]) for j in self.active_omega()}

    def theta_table(self) -> Dict[Tuple[int, int], SurvParams]:
        return {(int(self.sub_parent[k]), int(k)): SurvParams(self.thetas[k]) for k in self.active_theta()}

    def check_bookkeeping(self):
        """Occupancy counts must equal a recount from the assignments."""
        if np.any(self.assign_j < 0) or np.any(self.assign_k < 0):
            raise InvariantError("unassigned subject after a sweep")
        n_j = np.bincount(self.assign_j, minlength=len(self.n_j))
        n_jk = np.bincount(self.assign_k, minlength=len(self.n_jk))
        if not np.array_equal(n_j, self.n_j) or not np.array_equal(n_jk, self.n_jk):
            raise InvariantError("cluster counts disagree with a recount from assignments")
        if not np.array_equal(self.sub_parent[self.assign_k], self.assign_j):
            raise InvariantError("a subject's subcluster is not nested in its omega cluster")
        active_k = self.active_theta()
        if np.any(self.n_j[self.sub_parent[active_k]] == 0):
            raise InvariantError("occupied subcluster under an empty omega cluster")
        if int(self.n_j.sum()) != self.n:
            raise InvariantError(f"omega counts sum to {int(self.n_j.sum())}, expected {self.n}")

    def to_dict(self):
        return {
            "assign": np.column_stack([self.assign_j, self.assign_k]).tolist(),
            "omega": [{"j": int(j), "beta": self.betas[j].tolist(), "phi": float(self.phis[j])}
                      for j in self.active_omega()],
            "theta": [{"j": int(self.sub_parent[k]), "k": int(k), "theta": self.thetas[k].tolist()}
                      for k in self.active_theta()],
            "alpha_omega": self.alpha_omega,
            "alpha_theta": self.alpha_theta,
        }

    @classmethod
    def from_dict(cls, data):
        assign = np.asarray(data["assign"], dtype=np.int64).reshape(-1, 2)
        omega, theta = data["omega"], data["theta"]
        cost_dim = len(omega[0]["beta"]) if omega else 0
        surv_dim = len(theta[0]["theta"]) if theta else 0
        cap_j = max([o["j"] for o in omega] + [0]) + 1
        cap_k = max([t["k"] for t in theta] + [0]) + 1
        state = cls(len(assign), cost_dim, surv_dim, capacity=max(cap_j, cap_k))
        for entry in omega:
            state.betas[entry["j"]] = entry["beta"]
            state.phis[entry["j"]] = entry["phi"]
        for entry in theta:
            state.thetas[entry["k"]] = entry["theta"]
            state.sub_parent[entry["k"]] = entry["j"]
        state.assign_j = assign[:, 0].copy()
        state.assign_k = assign[:, 1].copy()
        state.n_j = np.bincount(state.assign_j, minlength=len(state.n_j)).astype(np.int64)
        state.n_jk = np.bincount(state.assign_k, minlength=len(state.n_jk)).astype(np.int64)
        state.alpha_omega = float(data["alpha_omega"])
        state.alpha_theta = float(data["alpha_theta"])
        return state
