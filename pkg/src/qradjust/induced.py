"""Induced quantiles: what each fitted ALD(p) model implies about level tau.

For a draw (beta, sigma) of the ALD(p) fit, the induced tau-quantile at a
basis row x is ``x'beta + sigma * c(p, tau)`` with ``c`` the standardised ALD
quantile. Stage two only needs the mean and variance over draws of these
values, so the draws themselves are never stored.
"""

import csv
import warnings
from dataclasses import dataclass

import numpy as np

from .ald import quantile_offset
from .errors import ConfigError, DomainError, ShapeError


@dataclass(frozen=True)
class QuantileLevelGrid:
    levels: np.ndarray

    def __post_init__(self):
        levels = np.array(self.levels, dtype=float).reshape(-1)
        if levels.size == 0:
            raise ConfigError("quantile grid is empty")
        if not (levels[0] > 0 and levels[-1] < 1):
            raise DomainError("quantile levels must lie strictly inside (0, 1)")
        if np.any(np.diff(levels) <= 0):
            raise ConfigError("quantile levels must be strictly increasing")
        levels.flags.writeable = False
        object.__setattr__(self, "levels", levels)

    def __len__(self):
        return self.levels.size

    def __iter__(self):
        return iter(self.levels.tolist())

    def index_of(self, tau, atol=1e-9):
        hits = np.flatnonzero(np.abs(self.levels - tau) <= atol)
        if hits.size == 0:
            raise ConfigError(f"level {tau} is not on the grid")
        return int(hits[0])

    @classmethod
    def from_range(cls, start, stop, step):
        """Inclusive arithmetic grid, rounded to kill float drift (0.05:0.95:0.01 has 91 levels)."""
        if not step > 0:
            raise ConfigError(f"grid step must be positive, got {step}")
        count = int(round((stop - start) / step)) + 1
        if count < 1:
            raise ConfigError(f"empty grid {start}:{stop}:{step}")
        return cls(np.round(start + step * np.arange(count), 12))

    @classmethod
    def parse(cls, text):
        """``start:stop:step`` or a comma-separated list of levels."""
        text = str(text).strip()
        parts = text.split(":") if ":" in text else [t for t in text.split(",") if t.strip()]
        try:
            values = [float(t) for t in parts]
        except ValueError as exc:
            raise ConfigError(f"cannot parse quantile grid {text!r}") from exc
        if ":" in text:
            if len(values) != 3:
                raise ConfigError(f"range grid needs start:stop:step, got {text!r}")
            return cls.from_range(*values)
        return cls(values)


@dataclass(frozen=True)
class InducedQuantileStats:
    """Mean and variance over draws of the induced tau-quantile, one entry per source level."""

    tau: float
    x_id: int
    levels: np.ndarray
    mean: np.ndarray
    variance: np.ndarray
    T: int

    @property
    def P(self):
        return len(self.levels)

    def target_index(self, atol=1e-9):
        hits = np.flatnonzero(np.abs(np.asarray(self.levels) - self.tau) <= atol)
        if hits.size == 0:
            raise ConfigError(f"target level {self.tau} has no matching source model")
        return int(hits[0])


@dataclass(frozen=True)
class InducedStatsTable:
    """Induced statistics over a whole (tau, x) lattice.

    ``mean`` and ``variance`` have shape (n_tau, n_x, P): target level,
    evaluation point, source level.
    """

    taus: np.ndarray
    levels: np.ndarray
    mean: np.ndarray
    variance: np.ndarray
    T: int

    @property
    def n_points(self):
        return self.mean.shape[1]

    def at(self, i_tau, i_x):
        return InducedQuantileStats(
            tau=float(self.taus[i_tau]),
            x_id=int(i_x),
            levels=self.levels,
            mean=self.mean[i_tau, i_x],
            variance=self.variance[i_tau, i_x],
            T=self.T,
        )

    def standard_surface(self):
        """Matched-model estimates: entry (j, i) uses source level equal to tau_j."""
        idx = [int(np.flatnonzero(np.abs(self.levels - t) <= 1e-9)[0]) for t in self.taus]
        return self.mean[np.arange(len(self.taus)), :, idx]


def _row(x_row, k):
    x_row = np.asarray(x_row, dtype=float).reshape(-1)
    if x_row.size != k:
        raise ShapeError(f"basis row has {x_row.size} entries, draws have {k} coefficients")
    return x_row


def induced_quantile_draws(draws, tau, x_row):
    """Induced tau-quantile for every retained draw of one ALD(p) fit."""
    x_row = _row(x_row, draws.k)
    if not 0 < tau < 1:
        raise DomainError(f"tau must lie in (0, 1), got {tau}")
    mu = draws.beta @ x_row
    return mu + draws.sigma * quantile_offset(draws.p, tau)


def induced_stats(all_draws, tau, x_row, x_id=0):
    if not all_draws:
        raise ConfigError("no posterior draws supplied")
    T = all_draws[0].T
    if any(d.T != T for d in all_draws):
        raise ConfigError("posterior draws disagree on the number of retained draws")
    if any(d.k != all_draws[0].k for d in all_draws):
        raise ConfigError("posterior draws disagree on the design width")
    means = np.empty(len(all_draws))
    variances = np.empty(len(all_draws))
    for j, d in enumerate(all_draws):
        q = induced_quantile_draws(d, tau, x_row)
        means[j] = q.mean()
        variances[j] = q.var(ddof=1)
    return InducedQuantileStats(
        tau=float(tau),
        x_id=int(x_id),
        levels=np.array([d.p for d in all_draws]),
        mean=means,
        variance=variances,
        T=T,
    )


def standard_estimate(draws, tau, x_row):
    """Posterior mean of the tau-quantile under one fit, normally the one with p == tau."""
    if abs(tau - draws.p) > 1e-9:
        warnings.warn(
            f"standard estimate at tau={tau} from the ALD({draws.p}) fit; expected matching levels",
            stacklevel=2,
        )
    return float(induced_quantile_draws(draws, tau, x_row).mean())


def induced_stats_table(all_draws, X_eval, taus=None):
    """Induced means and variances for every target level and evaluation row.

    Uses mean(mu + c sigma) = mean(mu) + c mean(sigma) and the matching
    variance expansion, so each source model costs one pass over its draws
    regardless of how many target levels are requested.
    """
    if not all_draws:
        raise ConfigError("no posterior draws supplied")
    T = all_draws[0].T
    if any(d.T != T for d in all_draws):
        raise ConfigError("posterior draws disagree on the number of retained draws")
    X_eval = np.asarray(getattr(X_eval, "values", X_eval), dtype=float)
    if X_eval.ndim != 2 or X_eval.shape[1] != all_draws[0].k:
        raise ShapeError(f"evaluation rows have shape {X_eval.shape}, draws have {all_draws[0].k} coefficients")
    levels = np.array([d.p for d in all_draws])
    taus = levels if taus is None else np.asarray(taus, dtype=float)
    n_tau, n_x, P = taus.size, X_eval.shape[0], levels.size
    mean = np.empty((n_tau, n_x, P))
    variance = np.empty((n_tau, n_x, P))
    for j, d in enumerate(all_draws):
        mu = X_eval @ d.beta.T  # (n_x, T)
        mu_bar = mu.mean(axis=1)
        mu_c = mu - mu_bar[:, None]
        s_bar = d.sigma.mean()
        s_c = d.sigma - s_bar
        var_mu = np.einsum("it,it->i", mu_c, mu_c) / (T - 1)
        cov_ms = mu_c @ s_c / (T - 1)
        var_s = s_c @ s_c / (T - 1)
        c = quantile_offset(d.p, taus)[:, None]
        mean[:, :, j] = mu_bar[None, :] + c * s_bar
        variance[:, :, j] = np.maximum(var_mu[None, :] + 2.0 * c * cov_ms[None, :] + c * c * var_s, 0.0)
    taus = taus.copy()
    return InducedStatsTable(taus=taus, levels=levels, mean=mean, variance=variance, T=T)


def write_induced_csv(path, table, x_ids=None):
    """Write ``tau,x_id,p,mean,variance,T`` rows (17 significant digits)."""
    n_tau, n_x, P = table.mean.shape
    x_ids = np.arange(n_x) if x_ids is None else np.asarray(x_ids)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["tau", "x_id", "p", "mean", "variance", "T"])
        for a in range(n_tau):
            tau = f"{table.taus[a]:.17g}"
            for i in range(n_x):
                m = table.mean[a, i]
                v = table.variance[a, i]
                for j in range(P):
                    w.writerow([tau, int(x_ids[i]), f"{table.levels[j]:.17g}", f"{m[j]:.17g}", f"{v[j]:.17g}", table.T])


def read_induced_csv(path):
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    taus = np.unique(data[:, 0])
    x_ids = np.unique(data[:, 1]).astype(int)
    levels = np.unique(data[:, 2])
    n_tau, n_x, P = taus.size, x_ids.size, levels.size
    if data.shape[0] != n_tau * n_x * P:
        raise ConfigError(f"{path}: incomplete induced statistics lattice")
    order = np.lexsort((data[:, 2], data[:, 1], data[:, 0]))
    data = data[order]
    T = np.unique(data[:, 5])
    if T.size != 1:
        raise ConfigError(f"{path}: inconsistent draw counts {T.tolist()}")
    return InducedStatsTable(
        taus=taus,
        levels=levels,
        mean=data[:, 3].reshape(n_tau, n_x, P),
        variance=data[:, 4].reshape(n_tau, n_x, P),
        T=int(T[0]),
    ), x_ids
