"""Synthetic induced-statistics tables for stage-two tests."""

import numpy as np

from qradjust import InducedStatsTable
from qradjust.ald import quantile_offset


def synthetic_table(rng, P=91, n_x=100, T=1000, jitter=0.05, adversarial=False, levels=None):
    """Induced means built from ALD(p) fits whose locations wobble across p.

    Each source level has location ``a + b x + z_p + e_p(x)`` and a scale; the
    wobble ``e`` makes neighbouring matched estimates cross. With
    ``adversarial`` the wobble is large and the posterior variances span
    several orders of magnitude across levels.
    """
    levels = np.round(np.linspace(0.05, 0.95, P), 12) if levels is None else np.asarray(levels)
    P = levels.size
    x = rng.uniform(-1, 1, n_x)
    base = np.quantile(rng.normal(size=20000), levels)
    wobble = jitter * (5.0 if adversarial else 1.0)
    loc = base[None, :] + 0.5 * x[:, None] + wobble * rng.normal(size=(n_x, P)) + wobble * rng.normal(size=P)
    scale = rng.uniform(0.2, 0.6, P)
    c = quantile_offset(levels[None, :], levels[:, None])  # (tau, p)
    mean = loc[None, :, :] + scale[None, None, :] * c[:, None, :]
    if adversarial:
        var_p = 10.0 ** rng.uniform(-4, 1, P)
    else:
        var_p = rng.uniform(0.01, 0.05, P)
    variance = var_p[None, None, :] * (1 + c[:, None, :] ** 2) * rng.uniform(0.5, 1.5, size=(1, n_x, 1))
    return InducedStatsTable(taus=levels.copy(), levels=levels.copy(), mean=mean, variance=variance, T=T)


def monotone_table(rng, P=11, n_x=5, T=100):
    """Induced table whose matched estimates are strictly increasing in tau."""
    levels = np.round(np.linspace(0.1, 0.9, P), 12)
    base = np.sort(rng.normal(size=P)) + np.arange(P)
    mean = np.broadcast_to(base[None, None, :], (P, n_x, P)).copy()
    mean += rng.normal(size=(P, n_x, P)) * 0.01
    idx = np.arange(P)
    mean[idx, :, idx] = base[:, None] + rng.uniform(0, 0.1, n_x)[None, :]
    variance = rng.uniform(0.1, 1.0, size=(P, n_x, P))
    return InducedStatsTable(taus=levels.copy(), levels=levels.copy(), mean=mean, variance=variance, T=T)
