"""Asymmetric Laplace primitives: check loss, log-likelihood, quantile function."""

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, ShapeError


def _require_level(value, name="tau"):
    arr = np.asarray(value, dtype=float)
    if np.any(~(arr > 0.0)) or np.any(~(arr < 1.0)):
        raise DomainError(f"{name} must lie strictly inside (0, 1), got {value!r}")
    return arr


@dataclass(frozen=True)
class AldParams:
    mu: float
    sigma: float
    p: float

    def __post_init__(self):
        if not self.sigma > 0:
            raise DomainError(f"sigma must be positive, got {self.sigma!r}")
        _require_level(self.p, "p")


def check_function(u, tau):
    """Koenker-Bassett check loss ``u * (tau - 1{u < 0})``.

    Works elementwise on arrays; returns a float for scalar input.
    """
    tau = _require_level(tau)
    u = np.asarray(u, dtype=float)
    out = u * (tau - (u < 0))
    return float(out) if out.ndim == 0 else out


def ald_log_likelihood(y, mu, sigma, p):
    """Log of the ALD(p) working likelihood for residual scale ``sigma``.

    Parameters
    ----------
    y, mu : array_like
        Responses and their locations, same length.
    sigma : float
        Scale, strictly positive.
    p : float
        Skewness / target quantile level in (0, 1).
    """
    y = np.atleast_1d(np.asarray(y, dtype=float))
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    if y.shape != mu.shape:
        raise ShapeError(f"y and mu differ in shape: {y.shape} vs {mu.shape}")
    if not sigma > 0:
        raise DomainError(f"sigma must be positive, got {sigma!r}")
    _require_level(p, "p")
    n = y.size
    u = (y - mu) / sigma
    loss = np.sum(u * (p - (u < 0)))
    return float(n * np.log(p * (1.0 - p) / sigma) - loss)


def _ald_quantile(mu, sigma, p, tau):
    # Broadcasting core shared with the induced-quantile code; no validation.
    # The tie tau == p goes to the lower branch, where both logs vanish.
    lower = tau <= p
    with np.errstate(divide="ignore", invalid="ignore"):
        lo = np.log(tau / p) / (1.0 - p)
        hi = -np.log((1.0 - tau) / (1.0 - p)) / p
    return mu + sigma * np.where(lower, lo, hi)


def quantile_offset(p, tau):
    """Standardised ALD(0, 1, p) quantile at level ``tau``.

    The quantile of ALD(mu, sigma, p) is ``mu + sigma * quantile_offset(p, tau)``.
    """
    return _ald_quantile(0.0, 1.0, np.asarray(p, dtype=float), np.asarray(tau, dtype=float))


def ald_quantile(params, tau):
    """Quantile function of ``ALD(params.mu, params.sigma, params.p)`` at ``tau``."""
    tau = _require_level(tau)
    out = _ald_quantile(params.mu, params.sigma, params.p, tau)
    return float(out) if np.ndim(out) == 0 else out
