import hashlib
import json
import os
from typing import Any, Dict, Optional

import yaml

from edpcea.utils.errors import ConfigError

WORKERS_ENV = "EDPCEA_WORKERS"


class RunConfig:
    """
    Flat run configuration. Class attributes are the documented defaults;
    a YAML file and then CLI overrides replace them per instance.
    """
    # sampler
    iters = 2000
    burnin = 1000
    thin = 2
    seed = 1
    chains = 1

    # Gamma Process hazard
    V = None
    b = 1e-6
    xi = 0.001
    lambda_star_family = "exponential"
    lambda_star_params = None
    grid_cap = 10000
    tune_window = 50

    # base measure
    nu_theta = 4.0
    nu_omega = 4.0
    a_0 = 3.0
    centering = None
    beta_center = None
    theta_center = None

    # data and estimands
    cost_model = "gaussian"
    add_intercept = False
    kappa_grid = [0.0, 0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 1.75, 2.0]
    kappa = 1.0
    threshold = 0.5

    log_every = 100

    _INT_KEYS = ("iters", "burnin", "thin", "seed", "chains", "V", "grid_cap", "tune_window", "log_every")
    _FLOAT_KEYS = ("b", "xi", "nu_theta", "nu_omega", "a_0", "kappa", "threshold")
    _LIST_KEYS = ("lambda_star_params", "beta_center", "theta_center", "kappa_grid")

    @classmethod
    def keys(cls):
        return [k for k, v in vars(cls).items()
                if not k.startswith("_") and not callable(v) and not isinstance(v, (classmethod, staticmethod))]

    def __init__(self, **values):
        for key in self.keys():
            default = getattr(type(self), key)
            setattr(self, key, list(default) if isinstance(default, list) else default)
        self.update(values)

    @classmethod
    def load(cls, path: Optional[str] = None, overrides: Optional[Dict[str, Any]] = None):
        """Defaults, then the YAML file (if any), then overrides whose value is not None."""
        values = {}
        if path:
            if not os.path.exists(path):
                raise ConfigError(f"config file not found: {path}")
            try:
                with open(path, "r", encoding="utf-8") as f:
                    data = yaml.safe_load(f)
            except yaml.YAMLError as e:
                raise ConfigError(f"cannot parse {path}: {e}")
            if data is None:
                data = {}
            if not isinstance(data, dict):
                raise ConfigError(f"{path} must hold a flat key: value mapping")
            values.update(data)
        values.update({k: v for k, v in (overrides or {}).items() if v is not None})
        return cls(**values)

    def update(self, values: Dict[str, Any]):
        known = set(self.keys())
        for key, value in values.items():
            if key not in known:
                raise ConfigError("unknown key", key=key)
            setattr(self, key, self._coerce(key, value))
        self.validate()
        return self

    def set_pairs(self, pairs):
        """Apply 'key=value' strings; values are parsed as YAML scalars or lists."""
        updates = {}
        for pair in pairs or []:
            if "=" not in pair:
                raise ConfigError(f"expected key=value, got '{pair}'")
            key, raw = pair.split("=", 1)
            try:
                updates[key.strip()] = yaml.safe_load(raw)
            except yaml.YAMLError as e:
                raise ConfigError(f"cannot parse value '{raw}': {e}", key=key.strip())
        return self.update(updates)

    def _coerce(self, key, value):
        if value is None:
            return None
        try:
            if key in self._INT_KEYS:
                if isinstance(value, bool) or float(value) != int(float(value)):
                    raise ValueError
                return int(float(value))
            if key in self._FLOAT_KEYS:
                return float(value)
            if key in self._LIST_KEYS:
                if isinstance(value, (int, float)):
                    value = [value]
                return [float(v) for v in value]
            if key == "add_intercept":
                if not isinstance(value, bool):
                    raise ValueError
                return value
        except (TypeError, ValueError):
            raise ConfigError(f"invalid value {value!r}", key=key)
        return value

    def validate(self):
        if self.iters < 1:
            raise ConfigError(f"must be >= 1, got {self.iters}", key="iters")
        if self.burnin < 0:
            raise ConfigError(f"must be >= 0, got {self.burnin}", key="burnin")
        if self.burnin >= self.iters:
            raise ConfigError(f"burnin ({self.burnin}) must be < iters ({self.iters})", key="burnin")
        if self.thin < 1:
            raise ConfigError(f"must be >= 1, got {self.thin}", key="thin")
        if self.chains < 1:
            raise ConfigError(f"must be >= 1, got {self.chains}", key="chains")
        if self.V is not None and self.V < 2:
            raise ConfigError(f"must be >= 2, got {self.V}", key="V")
        for key in ("b", "xi", "nu_theta", "nu_omega", "a_0"):
            if getattr(self, key) <= 0:
                raise ConfigError(f"must be > 0, got {getattr(self, key)}", key=key)
        if self.lambda_star_family not in ("exponential", "weibull"):
            raise ConfigError(f"unknown family '{self.lambda_star_family}'", key="lambda_star_family")
        if self.centering not in (None, "null", "user", "ols"):
            raise ConfigError(f"unknown centering '{self.centering}'", key="centering")
        if self.cost_model not in ("gaussian", "lognormal"):
            raise ConfigError(f"unknown cost model '{self.cost_model}'", key="cost_model")
        if not self.kappa_grid:
            raise ConfigError("needs at least one value", key="kappa_grid")
        if not 0.0 <= self.threshold < 1.0:
            raise ConfigError(f"must lie in [0, 1), got {self.threshold}", key="threshold")
        if self.grid_cap < 1:
            raise ConfigError(f"must be >= 1, got {self.grid_cap}", key="grid_cap")
        if self.tune_window < 1:
            raise ConfigError(f"must be >= 1, got {self.tune_window}", key="tune_window")

    def to_dict(self):
        return {key: getattr(self, key) for key in self.keys()}

    def fingerprint(self):
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]

    def __repr__(self):
        return f"RunConfig({self.to_dict()})"


def workers_from_env(default=1):
    raw = os.environ.get(WORKERS_ENV)
    if not raw:
        return default
    try:
        workers = int(raw)
    except ValueError:
        raise ConfigError(f"{WORKERS_ENV} must be an integer, got '{raw}'")
    return max(1, workers)
