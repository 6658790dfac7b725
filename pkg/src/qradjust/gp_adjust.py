"""Stage two: Gaussian-process adjustment across quantile levels.

For a target level tau and evaluation point x, the induced posterior means
of all P source models are treated as noisy observations of a GP over the
quantile level with a squared exponential kernel. The adjusted estimate is
the GP predictive mean at p = tau; the bandwidth is the smallest one that
leaves no crossing anywhere on the (tau, x) lattice.
"""

import logging
import math
from collections import namedtuple
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import lapack

from .errors import ConfigError, NumericalError
from .induced import InducedQuantileStats

logger = logging.getLogger(__name__)

MODES = ("gpr", "lgpr")
CROSSING_TOL = 1e-10
FULL_SAMPLE_CAP = 5000

Violation = namedtuple("Violation", "x_id tau_lo tau_hi gap")


@dataclass(frozen=True)
class GpConfig:
    """Hyperparameters of the adjustment GP.

    ``jitter`` and ``noise_floor`` are relative to ``sigma_k_sq``: the solve
    adds ``jitter * sigma_k_sq`` to the diagonal and every noise variance is
    floored at ``noise_floor * sigma_k_sq``.
    """

    sigma_k_sq: float = 100.0
    bandwidth: float = 0.1
    mode: str = "gpr"
    jitter: float = 1e-10
    noise_floor: float = 1e-12

    def __post_init__(self):
        if not self.sigma_k_sq > 0:
            raise ConfigError("sigma_k_sq must be positive")
        if not self.bandwidth > 0:
            raise ConfigError("bandwidth must be positive")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.jitter < 0 or self.noise_floor < 0:
            raise ConfigError("jitter and noise_floor must be nonnegative")

    def with_bandwidth(self, b):
        return replace(self, bandwidth=float(b))


@dataclass(frozen=True)
class AdjustedQuantileSurface:
    """Adjusted estimates on the (tau, x) lattice; arrays are (n_tau, n_x)."""

    taus: np.ndarray
    x_ids: np.ndarray
    values: np.ndarray
    variances: np.ndarray
    standard: np.ndarray
    bandwidth: float
    mode: str
    noise_equalized: bool = False
    probes: tuple = field(default=(), compare=False)


def se_kernel(p, p_prime, cfg):
    p = np.asarray(p, dtype=float)
    p_prime = np.asarray(p_prime, dtype=float)
    out = cfg.sigma_k_sq * np.exp(-((p - p_prime) ** 2) / (2.0 * cfg.bandwidth**2))
    return float(out) if out.ndim == 0 else out


def kernel_matrix(levels, cfg):
    levels = np.asarray(levels, dtype=float)
    return se_kernel(levels[:, None], levels[None, :], cfg)


def _noise(variance, T, cfg):
    return np.maximum(np.asarray(variance, dtype=float) / T, cfg.noise_floor * cfg.sigma_k_sq)


def _spd_solve(K, diag, rhs):
    """Solve (K + diag(diag)) w = rhs with a Cholesky-based LAPACK driver."""
    A = K.copy()
    A.flat[:: A.shape[0] + 1] += diag
    _, w, info = lapack.dposv(A, rhs, lower=1, overwrite_a=1, overwrite_b=0)
    if info != 0:
        raise NumericalError(f"kernel system is not positive definite (LAPACK info={info})")
    return w


def gp_predict(stats, cfg, noise=None):
    """Adjusted mean, predictive variance and pooling weights at one (tau, x).

    Returns ``(mu_star, sigma_star_sq, weights)``. ``noise`` overrides the
    per-source noise variances ``variance / T`` (the LGPR mode passes the
    x-averaged values here).
    """
    levels = np.asarray(stats.levels, dtype=float)
    target = stats.target_index()
    K = kernel_matrix(levels, cfg)
    k_tau = se_kernel(levels, stats.tau, cfg)
    d = _noise(stats.variance, stats.T, cfg) if noise is None else np.asarray(noise, dtype=float)
    w = _spd_solve(K, d + cfg.jitter * cfg.sigma_k_sq, k_tau)
    mu = float(w @ np.asarray(stats.mean, dtype=float))
    var = float(cfg.sigma_k_sq - w @ k_tau + stats.variance[target])
    return mu, var, w


def gp_predict_full_sample(induced_draws, levels, tau, cfg):
    """Reference GP fitted to every induced draw instead of the per-model means.

    ``induced_draws`` is P x T. Each draw gets its model's sample variance
    as noise, and the kernel couples draws only through their source level.
    Intended as an oracle on small problems; refuses P*T above 5000.
    """
    q = np.asarray(induced_draws, dtype=float)
    levels = np.asarray(levels, dtype=float)
    P, T = q.shape
    if P * T > FULL_SAMPLE_CAP:
        raise ConfigError(f"full-sample GP refused for P*T = {P * T} > {FULL_SAMPLE_CAP}")
    if T < 2:
        raise ConfigError("full-sample GP needs at least two draws per model")
    target = int(np.flatnonzero(np.abs(levels - tau) <= 1e-9)[0])
    var = q.var(axis=1, ddof=1)
    # noise and jitter scaled by T so that the reduced model is matched exactly
    d = np.maximum(var, cfg.noise_floor * cfg.sigma_k_sq * T) + cfg.jitter * cfg.sigma_k_sq * T
    src = np.repeat(levels, T)
    K = kernel_matrix(src, cfg)
    k_tau = se_kernel(src, tau, cfg)
    w = _spd_solve(K, np.repeat(d, T), k_tau)
    mu = float(w @ q.reshape(-1))
    sigma_sq = float(cfg.sigma_k_sq - w @ k_tau + var[target])
    return mu, sigma_sq


def lgpr_average_covariance(stats):
    """Mean over evaluation points of the noise diagonals, for one target level.

    Accepts a sequence of ``InducedQuantileStats`` (noise ``variance / T``)
    or an (n_x, P) array of diagonals.
    """
    if len(stats) and isinstance(stats[0], InducedQuantileStats):
        diag = np.array([np.asarray(s.variance, dtype=float) / s.T for s in stats])
    else:
        diag = np.atleast_2d(np.asarray(stats, dtype=float))
    if diag.shape[0] < 1:
        raise ConfigError("need at least one evaluation point")
    return diag.mean(axis=0)


def detect_crossing(surface, taus=None, x_ids=None, tol=CROSSING_TOL):
    """Adjacent-level pairs whose estimate decreases by more than ``tol``.

    ``surface`` is an ``AdjustedQuantileSurface`` or an array with one row
    per level and one column per evaluation point (a 1-D array is a single
    point).
    """
    if isinstance(surface, AdjustedQuantileSurface):
        values, taus, x_ids = surface.values, surface.taus, surface.x_ids
    else:
        values = np.asarray(surface, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
    n_tau, n_x = values.shape
    taus = np.arange(n_tau) if taus is None else np.asarray(taus)
    x_ids = np.arange(n_x) if x_ids is None else np.asarray(x_ids)
    gaps = values[:-1] - values[1:]
    j, i = np.nonzero(gaps > tol)
    order = np.lexsort((j, i))
    return [Violation(int(x_ids[i[o]]), float(taus[j[o]]), float(taus[j[o] + 1]), float(gaps[j[o], i[o]])) for o in order]


def _crosses(column, tol):
    return bool(np.any(column[:-1] - column[1:] > tol))


def _crosses_anywhere(values, tol):
    return bool(np.any(values[:-1] - values[1:] > tol))


class _SurfaceEvaluator:
    """Evaluates adjusted surfaces of one induced-statistics table at many bandwidths."""

    def __init__(self, table, cfg, equalize_noise=False):
        self.table = table
        self.cfg = cfg
        self.levels = np.asarray(table.levels, dtype=float)
        self.taus = np.asarray(table.taus, dtype=float)
        self.target = np.array([int(np.flatnonzero(np.abs(self.levels - t) <= 1e-9)[0]) for t in self.taus])
        noise = _noise(table.variance, table.T, cfg)
        if equalize_noise:
            # one common noise level per point: all weights equal as b grows
            noise = np.broadcast_to(noise.mean(axis=(0, 2))[None, :, None], noise.shape)
        if cfg.mode == "lgpr":
            noise = np.broadcast_to(noise.mean(axis=1, keepdims=True), noise.shape)
        self.noise = noise + cfg.jitter * cfg.sigma_k_sq
        n_tau, n_x, _ = table.mean.shape
        self.target_var = table.variance[np.arange(n_tau), :, self.target]
        self.hot = []

    def _point(self, K, Kt, i):
        n_tau = self.taus.size
        col = np.empty(n_tau)
        var = np.empty(n_tau)
        for a in range(n_tau):
            w = _spd_solve(K, self.noise[a, i], Kt[a])
            col[a] = w @ self.table.mean[a, i]
            var[a] = self.cfg.sigma_k_sq - w @ Kt[a]
        return col, var

    def evaluate(self, b, stop_on_crossing=False, tol=CROSSING_TOL):
        """Surface at bandwidth ``b``; returns (values, prior-part variances, crossed).

        With ``stop_on_crossing`` the GPR path returns as soon as one point
        crosses, leaving the unvisited columns as NaN.
        """
        cfg = self.cfg.with_bandwidth(b)
        K = kernel_matrix(self.levels, cfg)
        Kt = se_kernel(self.taus[:, None], self.levels[None, :], cfg)  # (n_tau, P)
        n_tau, n_x, _ = self.table.mean.shape
        if self.cfg.mode == "lgpr":
            W = np.array([_spd_solve(K, self.noise[a, 0], Kt[a]) for a in range(n_tau)])
            values = np.einsum("ap,aip->ai", W, self.table.mean)
            var = np.broadcast_to((self.cfg.sigma_k_sq - np.einsum("ap,ap->a", W, Kt))[:, None], (n_tau, n_x))
            crossed = _crosses_anywhere(values, tol)
            return values, var.copy(), crossed
        values = np.full((n_tau, n_x), np.nan)
        var = np.full((n_tau, n_x), np.nan)
        seen = set()
        order = [i for i in self.hot if i < n_x] + list(range(n_x))
        crossed = False
        for i in order:
            if i in seen:
                continue
            seen.add(i)
            values[:, i], var[:, i] = self._point(K, Kt, i)
            if _crosses(values[:, i], tol):
                crossed = True
                if i in self.hot:
                    self.hot.remove(i)
                self.hot.insert(0, i)
                del self.hot[32:]
                if stop_on_crossing:
                    return values, var, True
        return values, var, crossed


def _build_surface(ev, b, values, prior_var, probes=(), equalized=False, x_ids=None):
    table = ev.table
    n_x = table.mean.shape[1]
    return AdjustedQuantileSurface(
        taus=np.asarray(table.taus, dtype=float).copy(),
        x_ids=np.arange(n_x) if x_ids is None else np.asarray(x_ids),
        values=values,
        variances=prior_var + ev.target_var,
        standard=table.standard_surface(),
        bandwidth=float(b),
        mode=ev.cfg.mode,
        noise_equalized=equalized,
        probes=tuple(probes),
    )


def adjust_surface(table, cfg, x_ids=None, equalize_noise=False):
    """Adjusted surface at the fixed bandwidth ``cfg.bandwidth``."""
    ev = _SurfaceEvaluator(table, cfg, equalize_noise=equalize_noise)
    values, var, _ = ev.evaluate(cfg.bandwidth)
    return _build_surface(ev, cfg.bandwidth, values, var, equalized=equalize_noise, x_ids=x_ids)


def _search(ev, b0, growth, rtol, cap, tol):
    """Returns (b_min or None, probes, surface at b_min)."""
    probes = []
    last_ok = {}

    def crosses(b):
        values, var, c = ev.evaluate(b, stop_on_crossing=True, tol=tol)
        probes.append((float(b), c))
        if not c:
            # a non-crossing probe has visited every point; keep it for the result
            last_ok[float(b)] = (values, var)
        return c

    if not crosses(b0):
        return b0, probes, last_ok[float(b0)]
    lo, hi = b0, None
    b = b0
    while hi is None:
        b = min(b * growth, cap)
        if crosses(b):
            lo = b
            if b >= cap:
                return None, probes, None
        else:
            hi = b
    while hi - lo > rtol * hi:
        mid = math.sqrt(lo * hi)
        if crosses(mid):
            lo = mid
        else:
            hi = mid
    return hi, probes, last_ok[float(hi)]


def search_min_bandwidth(
    table,
    cfg=None,
    b0=1e-3,
    growth=1.1,
    rtol=1e-2,
    cap=1e6,
    tol=CROSSING_TOL,
    x_ids=None,
    allow_equalized_fallback=True,
):
    """Smallest bandwidth whose adjusted surface has no crossing.

    A geometric ramp from ``b0`` finds a non-crossing bandwidth, then
    bisection on log b shrinks the bracket to relative width ``rtol``. Every
    probe is checked directly rather than assuming crossing is monotone in b.
    Returns ``(b_min, surface)``.

    If no bandwidth up to ``cap`` works (possible when noise variances differ
    across source models, since the large-b weights are then inverse-noise
    rather than equal) and ``allow_equalized_fallback`` is set, the search is
    repeated with one common noise level per evaluation point; the returned
    surface is flagged ``noise_equalized``.
    """
    cfg = GpConfig() if cfg is None else cfg
    taus, levels = np.asarray(table.taus), np.asarray(table.levels)
    if taus.shape != levels.shape or not np.allclose(taus, levels, atol=1e-9):
        raise ConfigError("bandwidth search needs target levels equal to the source levels")
    ev = _SurfaceEvaluator(table, cfg)
    b_min, probes, result = _search(ev, b0, growth, rtol, cap, tol)
    equalized = False
    if b_min is None and allow_equalized_fallback:
        logger.warning("no non-crossing bandwidth up to %g; retrying with equalized noise", cap)
        ev = _SurfaceEvaluator(table, cfg, equalize_noise=True)
        b_min, more, result = _search(ev, b0, growth, rtol, cap, tol)
        probes += more
        equalized = True
    if b_min is None:
        raise NumericalError(f"no non-crossing bandwidth found up to {cap}; last probes {probes[-3:]}")
    values, var = result
    if not np.all(np.isfinite(values)) or _crosses_anywhere(values, tol):
        raise NumericalError(f"surface at b={b_min} is incomplete or crosses")
    return b_min, _build_surface(ev, b_min, values, var, probes, equalized, x_ids)
