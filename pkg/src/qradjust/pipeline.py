"""Glue between the two stages, shared by the CLI and the simulation study."""

from dataclasses import dataclass, replace

import numpy as np

from .basis import build_design, eval_basis
from .gp_adjust import GpConfig, adjust_surface, detect_crossing, search_min_bandwidth
from .induced import QuantileLevelGrid, induced_stats_table
from .sampler import fit_all_levels
from .simulate import generate, get_design, rmise


def default_mode(spec):
    """LGPR keeps linear and polynomial fits interpretable; splines use GPR."""
    return "gpr" if spec.kind == "cubic_spline" else "lgpr"


@dataclass
class TwoStageFit:
    grid: QuantileLevelGrid
    design: object
    draws: list
    table: object
    surface: object

    @property
    def standard(self):
        return self.table.standard_surface()


def fit_stage_one(X_raw, y, spec, grid, sampler_cfg, eval_raw=None):
    design = build_design(X_raw, spec)
    draws = fit_all_levels(y, design, grid, sampler_cfg)
    rows = design.values if eval_raw is None else eval_basis(eval_raw, spec, design.covariate_range)
    table = induced_stats_table(draws, rows)
    return design, draws, table


def adjust(table, gp_cfg, fixed_b=None, x_ids=None):
    if fixed_b is not None:
        return adjust_surface(table, gp_cfg.with_bandwidth(fixed_b), x_ids=x_ids)
    _, surface = search_min_bandwidth(table, gp_cfg, x_ids=x_ids)
    return surface


def fit_two_stage(X_raw, y, spec, grid, sampler_cfg, gp_cfg=None, fixed_b=None):
    if gp_cfg is None:
        gp_cfg = GpConfig(mode=default_mode(spec))
    design, draws, table = fit_stage_one(X_raw, y, spec, grid, sampler_cfg)
    surface = adjust(table, gp_cfg, fixed_b)
    return TwoStageFit(grid=grid, design=design, draws=draws, table=table, surface=surface)


def replicate_seeds(seed, replicates):
    """(data seed, sampler seed) pairs, one per replicate, derived from one user seed."""
    children = np.random.SeedSequence(seed).spawn(replicates)
    return [tuple(int(s) for s in child.generate_state(2)) for child in children]


def run_replicate(design_id, n, spec, grid, sampler_cfg, gp_cfg, data_seed, sampler_seed, fixed_b=None):
    """One simulated data set through both stages, scored against the true quantiles."""
    design = get_design(design_id, n=n)
    X, y, oracle = generate(design, data_seed)
    cfg = replace(sampler_cfg, seed=sampler_seed)
    fit = fit_two_stage(X, y, spec, grid, cfg, gp_cfg, fixed_b)
    std = fit.standard
    adj = fit.surface.values
    truth = np.array([oracle(t, X) for t in grid.levels])
    return {
        "taus": grid.levels.copy(),
        "rmise_standard": np.array([rmise(std[a], truth[a]) for a in range(len(grid))]),
        "rmise_adjusted": np.array([rmise(adj[a], truth[a]) for a in range(len(grid))]),
        "crossings_standard": len(detect_crossing(std)),
        "crossings_adjusted": len(detect_crossing(fit.surface)),
        "bandwidth": fit.surface.bandwidth,
        "noise_equalized": fit.surface.noise_equalized,
        "data_seed": data_seed,
        "sampler_seed": sampler_seed,
    }
