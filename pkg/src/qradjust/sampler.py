"""Gibbs sampler for Bayesian quantile regression with an ALD(p) likelihood.

Uses the exponential-normal mixture of the asymmetric Laplace error
(Kozumi & Kobayashi, 2011)::

    y_i = x_i' beta + theta * v_i + psi * sqrt(sigma * v_i) * z_i
    v_i ~ Exp(mean sigma),  z_i ~ N(0, 1)

with theta = (1 - 2p) / (p (1 - p)) and psi^2 = 2 / (p (1 - p)). All three
full conditionals are standard: 1/v_i is inverse Gaussian, beta is normal and
sigma is inverse gamma.

Several quantile levels are sampled in lock step as one batch, which keeps
the per-iteration numpy overhead independent of the number of levels. Every
level still draws its random variates from its own generator, so a level's
chain does not depend on which other levels share the batch.
"""

import csv
import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError, DomainError, FitError

logger = logging.getLogger(__name__)

# Bounds on the per-chunk buffer of pre-generated variates.
_CHUNK = 256
_CHUNK_ELEMENTS = 2_000_000


@dataclass(frozen=True)
class SamplerConfig:
    total_draws: int = 31500
    burn_in: int = 1500
    thin: int = 30
    seed: int = 0
    prior_beta_sd: float = 100.0
    prior_sigma_shape: float = 0.01
    prior_sigma_rate: float = 0.01

    def __post_init__(self):
        if self.total_draws < 1 or self.thin < 1 or self.burn_in < 0:
            raise ConfigError("total_draws and thin must be positive, burn_in nonnegative")
        if self.burn_in >= self.total_draws:
            raise ConfigError("burn_in must be smaller than total_draws")
        if self.retained < 2:
            raise ConfigError("configuration retains fewer than 2 draws")
        if min(self.prior_beta_sd, self.prior_sigma_shape, self.prior_sigma_rate) <= 0:
            raise ConfigError("prior hyperparameters must be positive")

    @property
    def retained(self):
        return (self.total_draws - self.burn_in) // self.thin


@dataclass(frozen=True)
class PosteriorDraws:
    """Retained draws of one ALD(p) fit: ``beta`` is T x k, ``sigma`` has length T."""

    p: float
    beta: np.ndarray
    sigma: np.ndarray
    design_ref: str = "design"
    level_index: int = field(default=0, compare=False)

    def __post_init__(self):
        beta = np.array(self.beta, dtype=float, ndmin=2)
        sigma = np.array(self.sigma, dtype=float).reshape(-1)
        if beta.shape[0] != sigma.shape[0]:
            raise DataError("beta and sigma disagree on the number of draws")
        if np.any(sigma < 0) or not np.all(np.isfinite(sigma)):
            raise DataError("sigma draws must be finite and nonnegative")
        beta.flags.writeable = False
        sigma.flags.writeable = False
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "sigma", sigma)

    @property
    def T(self):
        return self.sigma.shape[0]

    @property
    def k(self):
        return self.beta.shape[1]


def level_streams(seed, level_index):
    """Generators for the fit at position ``level_index`` of a grid.

    One child stream per kind of variate, so the values a chain sees do not
    depend on how many iterations are generated at a time.
    """
    root = np.random.SeedSequence(seed, spawn_key=(level_index,))
    return tuple(np.random.Generator(np.random.PCG64(child)) for child in root.spawn(4))


def _check_inputs(y, X):
    y = np.asarray(y, dtype=float).reshape(-1)
    X = np.asarray(getattr(X, "values", X), dtype=float)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise DataError(f"design has shape {X.shape} but y has length {y.shape[0]}")
    if not np.all(np.isfinite(y)):
        raise DataError(f"non-finite response at row {int(np.flatnonzero(~np.isfinite(y))[0])}")
    if not np.all(np.isfinite(X)):
        raise DataError("non-finite entry in the design matrix")
    if np.linalg.matrix_rank(X) < X.shape[1]:
        raise FitError(f"design matrix is rank deficient (rank < {X.shape[1]})")
    return y, X


def _inverse_gaussian(mean, shape, normal, uniform):
    # Michael, Schucany & Haas transform. The smaller root is written in a
    # cancellation-free form so that very large means stay accurate.
    chi = normal * normal
    my = mean * chi
    root = 2.0 * shape * mean / (2.0 * shape + my + np.sqrt(my * (4.0 * shape + my)))
    with np.errstate(over="ignore"):
        # the branch not selected by np.where may overflow harmlessly
        return np.where(uniform * (mean + root) <= mean, root, mean * mean / root)


def _run_batch(y, X, levels, rngs, cfg):
    n, k = X.shape
    P = len(levels)
    p = np.asarray(levels, dtype=float)
    theta = (1.0 - 2.0 * p) / (p * (1.0 - p))
    psi2 = 2.0 / (p * (1.0 - p))
    prior_prec = np.eye(k) / cfg.prior_beta_sd**2
    shape = cfg.prior_sigma_shape + 1.5 * n
    XT = X.T
    # row-wise outer products; one GEMM then gives every level's X'WX
    XX = (X[:, :, None] * X[:, None, :]).reshape(n, k * k)

    # start from least squares with the residual p-quantile absorbed into sigma
    beta0 = np.linalg.lstsq(X, y, rcond=None)[0]
    resid = y - X @ beta0
    beta = np.tile(beta0, (P, 1))
    sigma = np.array([max(np.mean(resid * (q - (resid < 0))), 1e-8) for q in p])

    T = cfg.retained
    out_beta = np.empty((P, T, k))
    out_sigma = np.empty((P, T))
    stored = 0
    it = 0
    while it < cfg.total_draws:
        m = min(_CHUNK, max(1, _CHUNK_ELEMENTS // (P * n)), cfg.total_draws - it)
        z_v = np.empty((m, P, n))
        u_v = np.empty((m, P, n))
        z_b = np.empty((m, P, k))
        g_s = np.empty((m, P))
        for j, (r_norm, r_unif, r_beta, r_gamma) in enumerate(rngs):
            z_v[:, j] = r_norm.standard_normal((m, n))
            u_v[:, j] = r_unif.random((m, n))
            z_b[:, j] = r_beta.standard_normal((m, k))
            g_s[:, j] = r_gamma.standard_gamma(shape, m)
        for s in range(m):
            # Stacked (P, 1, n) products run one identical BLAS call per level,
            # keeping each chain bit-identical to a fit of that level alone.
            # latent mixing variables, drawn through their reciprocals
            e = y - (beta[:, None, :] @ XT)[:, 0, :]
            scale = psi2[:, None] * sigma[:, None]
            lam = theta[:, None] ** 2 / scale + 2.0 / sigma[:, None]
            delta = np.maximum(np.abs(e) / np.sqrt(scale), 1e-150)
            inv_v = _inverse_gaussian(np.sqrt(lam) / delta, lam, z_v[s], u_v[s])
            v = 1.0 / inv_v

            # coefficients
            w = inv_v / scale
            prec = (w[:, None, :] @ XX).reshape(P, k, k) + prior_prec
            rhs = (((y - theta[:, None] * v) * w)[:, None, :] @ X)[:, 0, :]
            # prec^{-1} (rhs + L z) = mean + L^{-T} z, with L L' = prec
            chol = np.linalg.cholesky(prec)
            beta = np.linalg.solve(prec, rhs[:, :, None] + chol @ z_b[s][:, :, None])[:, :, 0]

            # scale
            e = y - (beta[:, None, :] @ XT)[:, 0, :] - theta[:, None] * v
            rate = cfg.prior_sigma_rate + v.sum(axis=1) + (e * e / (2.0 * psi2[:, None] * v)).sum(axis=1)
            sigma = rate / g_s[s]

            it += 1
            if it > cfg.burn_in and (it - cfg.burn_in) % cfg.thin == 0 and stored < T:
                out_beta[:, stored] = beta
                out_sigma[:, stored] = sigma
                stored += 1
    if not (np.all(np.isfinite(out_beta)) and np.all(np.isfinite(out_sigma))):
        raise FitError("sampler produced non-finite draws")
    return out_beta, out_sigma


def _validate_grid(levels):
    levels = np.asarray(levels, dtype=float).reshape(-1)
    if levels.size == 0:
        raise ConfigError("quantile grid is empty")
    if np.any(levels <= 0) or np.any(levels >= 1):
        raise DomainError("quantile levels must lie strictly inside (0, 1)")
    if np.any(np.diff(levels) <= 0):
        raise ConfigError("quantile grid must be strictly increasing")
    return levels


def fit_ald_regression(y, X, p, cfg, level_index=0):
    """Posterior draws of (beta, sigma) for a single ALD(p) regression.

    ``level_index`` selects the random stream; it is the position of ``p``
    in a grid so that a single fit reproduces the matching batched fit.
    """
    return fit_all_levels(y, X, [p], cfg, first_index=level_index)[0]


def fit_all_levels(y, X, grid, cfg, first_index=0):
    """Fit one ALD(p) regression per level of ``grid``.

    ``grid`` may be a plain sequence or a ``QuantileLevelGrid``. Level ``j``
    samples from the stream derived from ``(cfg.seed, first_index + j)``.
    """
    levels = _validate_grid(getattr(grid, "levels", grid))
    ref = getattr(X, "ref", "design")
    y, Xv = _check_inputs(y, X)
    rngs = [level_streams(cfg.seed, first_index + j) for j in range(levels.size)]
    try:
        beta, sigma = _run_batch(y, Xv, levels, rngs, cfg)
    except np.linalg.LinAlgError as exc:
        raise FitError(f"linear algebra failure while sampling levels {levels.tolist()}: {exc}") from exc
    except FitError as exc:
        raise FitError(f"{exc} (levels {levels.tolist()})") from exc
    return [
        PosteriorDraws(p=float(q), beta=beta[j], sigma=sigma[j], design_ref=ref, level_index=first_index + j)
        for j, q in enumerate(levels)
    ]


def write_draws_csv(path, draws):
    """Write retained draws as ``t,beta_0,...,beta_{k-1},sigma``."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t"] + [f"beta_{j}" for j in range(draws.k)] + ["sigma"])
        for t in range(draws.T):
            writer.writerow([t] + [repr(float(b)) for b in draws.beta[t]] + [repr(float(draws.sigma[t]))])


def read_draws_csv(path, p, design_ref="design"):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[0] != "t" or header[-1] != "sigma":
            raise DataError(f"{path}: unexpected draw file header {header}")
        rows = [[float(c) for c in row] for row in reader if row]
    arr = np.asarray(rows, dtype=float)
    return PosteriorDraws(p=float(p), beta=arr[:, 1:-1], sigma=arr[:, -1], design_ref=design_ref)
