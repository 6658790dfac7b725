"""Simulation designs with known conditional quantiles, and the RMISE metric."""

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import ConfigError, DomainError, ShapeError

# Wichura (1988), algorithm AS 241 (PPND16): relative accuracy about 1e-16.
_A = (3.3871328727963666080e0, 1.3314166789178437745e2, 1.9715909503065514427e3, 1.3731693765509461125e4,
      4.5921953931549871457e4, 6.7265770927008700853e4, 3.3430575583588128105e4, 2.5090809287301226727e3)
_B = (1.0, 4.2313330701600911252e1, 6.8718700749205790830e2, 5.3941960214247511077e3,
      2.1213794301586595867e4, 3.9307895800092710610e4, 2.8729085735721942674e4, 5.2264952788528545610e3)
_C = (1.42343711074968357734e0, 4.63033784615654529590e0, 5.76949722146069140550e0, 3.64784832476320460504e0,
      1.27045825245236838258e0, 2.41780725177450611770e-1, 2.27238449892691845833e-2, 7.74545014278341407640e-4)
_D = (1.0, 2.05319162663775882187e0, 1.67638483018380384940e0, 6.89767334985100004550e-1,
      1.48103976427480074590e-1, 1.51986665636164571966e-2, 5.47593808499534494600e-4, 1.05075007164441684324e-9)
_E = (6.65790464350110377720e0, 5.46378491116411436990e0, 1.78482653991729133580e0, 2.96560571828504891230e-1,
      2.65321895265761230930e-2, 1.24266094738807843860e-3, 2.71155556874348757815e-5, 2.01033439929228813265e-7)
_F = (1.0, 5.99832206555887937690e-1, 1.36929880922735805310e-1, 1.48753612908506148525e-2,
      7.86869131145613259100e-4, 1.84631831751005468180e-5, 1.42151175831644588870e-7, 2.04426310338993978564e-15)


def _poly(coef, x):
    out = np.zeros_like(x)
    for c in reversed(coef):
        out = out * x + c
    return out


def std_normal_quantile(tau):
    """Inverse standard normal CDF."""
    p = np.asarray(tau, dtype=float)
    if np.any(~(p > 0)) or np.any(~(p < 1)):
        raise DomainError(f"normal quantile needs 0 < tau < 1, got {tau!r}")
    q = p - 0.5
    out = np.empty_like(q)
    central = np.abs(q) <= 0.425
    r = 0.180625 - q[central] ** 2
    out[central] = q[central] * _poly(_A, r) / _poly(_B, r)
    tail = ~central
    r = np.sqrt(-np.log(np.minimum(p[tail], 1.0 - p[tail])))
    near = r <= 5.0
    x = np.where(near, _poly(_C, r - 1.6) / _poly(_D, r - 1.6), _poly(_E, r - 5.0) / _poly(_F, r - 5.0))
    out[tail] = np.where(q[tail] < 0, -x, x)
    return float(out) if out.ndim == 0 else out


def _design2_intercept(t):
    return np.sign(0.5 - t) * np.log(1.0 - 2.0 * np.abs(0.5 - t))


def _wave(x):
    return 0.5 + 2.0 * x + np.sin(2.0 * np.pi * x - 0.5)


def _const(c):
    return lambda t: np.full_like(np.asarray(t, dtype=float), c)


# Quantile-coefficient designs: Y = b0(U) + sum_j X_j b_j(U), X_j ~ U(-1, 1).
_COEFFICIENTS = {
    1: (lambda t: np.log(t / (1.0 - t)), _const(2.0)),
    2: (_design2_intercept, lambda t: 2.0 * t),
    3: (std_normal_quantile, lambda t: 2.0 * np.minimum(t - 0.5, 0.0)),
    4: (
        lambda t: 2.0 * std_normal_quantile(t),
        lambda t: 2.0 * np.minimum(t - 0.5, 0.0),
        lambda t: 2.0 * t,
        _const(2.0),
        _const(1.0),
        _const(0.0),
    ),
}

# Location-scale designs: Y = f(X) + g(X) eps, X ~ U(0, 1), eps ~ N(0, 1).
_LOCATION_SCALE = {
    5: (_wave, lambda x: np.ones_like(x)),
    6: (lambda x: 3.0 * x, _wave),
}


@dataclass(frozen=True)
class TrueQuantileOracle:
    fn: Callable

    def __call__(self, tau, X):
        return self.fn(tau, X)


@dataclass(frozen=True)
class SimulationDesign:
    id: int
    n: int = 100
    coefficients: Optional[tuple] = None
    location: Optional[Callable] = None
    scale: Optional[Callable] = None

    @property
    def num_covariates(self):
        return len(self.coefficients) - 1 if self.coefficients else 1

    @property
    def covariate_bounds(self):
        return (-1.0, 1.0) if self.coefficients else (0.0, 1.0)

    def quantile(self, tau, X):
        """True conditional tau-quantile at each row of ``X``."""
        X = np.asarray(X, dtype=float).reshape(-1, self.num_covariates)
        if self.coefficients:
            b = [f(np.asarray(tau, dtype=float)) for f in self.coefficients]
            return b[0] + sum(X[:, j] * b[j + 1] for j in range(self.num_covariates))
        x = X[:, 0]
        return self.location(x) + self.scale(x) * std_normal_quantile(tau)

    def oracle(self):
        return TrueQuantileOracle(self.quantile)

    def draw_response(self, X, rng):
        X = np.asarray(X, dtype=float).reshape(-1, self.num_covariates)
        n = X.shape[0]
        if self.coefficients:
            u = rng.random(n)
            b = [f(u) for f in self.coefficients]
            return b[0] + sum(X[:, j] * b[j + 1] for j in range(self.num_covariates))
        x = X[:, 0]
        g = self.scale(x)
        if np.any(g < 0):
            raise DomainError(f"design {self.id}: negative scale at generated covariates")
        return self.location(x) + g * rng.standard_normal(n)


def get_design(design_id, n=100):
    design_id = int(design_id)
    if design_id in _COEFFICIENTS:
        return SimulationDesign(id=design_id, n=n, coefficients=_COEFFICIENTS[design_id])
    if design_id in _LOCATION_SCALE:
        f, g = _LOCATION_SCALE[design_id]
        return SimulationDesign(id=design_id, n=n, location=f, scale=g)
    raise ConfigError(f"unknown design {design_id}; expected 1-6")


def generate(design, seed):
    """Draw one data set. Returns ``(X, y, oracle)`` with X of shape (n, k)."""
    if not isinstance(design, SimulationDesign):
        design = get_design(design)
    rng = np.random.default_rng(seed)
    lo, hi = design.covariate_bounds
    X = rng.uniform(lo, hi, size=(design.n, design.num_covariates))
    y = design.draw_response(X, rng)
    return X, y, design.oracle()


def rmise(estimates, truth):
    """Root mean squared difference between estimated and true quantiles over the points."""
    est = np.asarray(estimates, dtype=float).reshape(-1)
    tru = np.asarray(truth, dtype=float).reshape(-1)
    if est.shape != tru.shape:
        raise ShapeError(f"{est.size} estimates for {tru.size} true values")
    return float(np.sqrt(np.mean((tru - est) ** 2)))
