"""Command line interface: ``qradjust {fit,adjust,simulate,evaluate}``.

Configuration comes from a flat JSON file (``--config``); command line flags
override its keys. Exit codes: 0 success, 2 configuration error, 3 data
error, 4 numerical failure.
"""

import argparse
import csv
import json
import logging
import os
import sys
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import __version__
from .basis import BasisSpec
from .errors import ConfigError, DataError, QRAdjustError
from .gp_adjust import GpConfig, detect_crossing
from .induced import QuantileLevelGrid, read_induced_csv, write_induced_csv
from .pipeline import adjust, default_mode, fit_stage_one, replicate_seeds, run_replicate
from .sampler import SamplerConfig, write_draws_csv
from .simulate import generate, get_design, rmise

logger = logging.getLogger("qradjust")

DEFAULTS = {
    "input": None,
    "response": None,
    "design": None,
    "n": 100,
    "replicates": 1,
    "basis": "linear",
    "include_intercept": True,
    "grid": "0.05:0.95:0.01",
    "total_draws": 31500,
    "burn_in": 1500,
    "thin": 30,
    "prior_beta_sd": 100.0,
    "prior_sigma_shape": 0.01,
    "prior_sigma_rate": 0.01,
    "mode": None,
    "sigma_k_sq": 100.0,
    "fixed_b": None,
    "eval_grid": 0,
    "out": "qradjust-out",
    "seed": 0,
    "jobs": 1,
    "surface": None,
    "curve_taus": None,
    "export_data": False,
}

FIT_MANIFEST = "fit_manifest.json"
RUN_MANIFEST = "run_manifest.json"


def _num(v):
    return f"{float(v):.17g}"


def _atomic_write_text(path, text):
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-")
    with os.fdopen(fd, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


def write_manifest(path, payload):
    _atomic_write_text(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")


def load_config(args):
    cfg = dict(DEFAULTS)
    if args.config:
        try:
            with open(args.config) as fh:
                loaded = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(loaded, dict):
            raise ConfigError("config file must hold a JSON object")
        unknown = set(loaded) - set(DEFAULTS)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        cfg.update(loaded)
    for key in DEFAULTS:
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    return cfg


def sampler_config(cfg):
    return SamplerConfig(
        total_draws=int(cfg["total_draws"]),
        burn_in=int(cfg["burn_in"]),
        thin=int(cfg["thin"]),
        seed=int(cfg["seed"]),
        prior_beta_sd=float(cfg["prior_beta_sd"]),
        prior_sigma_shape=float(cfg["prior_sigma_shape"]),
        prior_sigma_rate=float(cfg["prior_sigma_rate"]),
    )


def basis_spec(cfg):
    return BasisSpec.parse(cfg["basis"], include_intercept=bool(cfg["include_intercept"]))


def gp_config(cfg, spec):
    mode = (cfg["mode"] or default_mode(spec)).lower()
    return GpConfig(sigma_k_sq=float(cfg["sigma_k_sq"]), mode=mode)


def read_table_csv(path, response=None):
    """Read a numeric CSV with a header; returns (covariate names, X, response name, y)."""
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise ConfigError(f"cannot read input {path}: {exc}") from exc
    if len(rows) < 2:
        raise DataError(f"{path}: need a header row and at least one data row")
    header = [h.strip() for h in rows[0]]
    data = []
    for r, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise DataError(f"{path}: line {r} has {len(row)} fields, header has {len(header)}")
        vals = []
        for c, cell in enumerate(row):
            try:
                vals.append(float(cell))
            except ValueError:
                raise DataError(f"{path}: non-numeric value {cell!r} at line {r}, column {header[c]!r}") from None
        data.append(vals)
    data = np.asarray(data, dtype=float)
    if response is None:
        ridx = len(header) - 1
    elif str(response) in header:
        ridx = header.index(str(response))
    else:
        try:
            ridx = int(response)
        except ValueError:
            raise ConfigError(f"response column {response!r} not in header {header}") from None
    if not 0 <= ridx < len(header):
        raise ConfigError(f"response column index {ridx} out of range")
    cols = [j for j in range(len(header)) if j != ridx]
    if not cols:
        raise DataError(f"{path}: no covariate columns")
    return [header[j] for j in cols], data[:, cols], header[ridx], data[:, ridx]


def _evaluation_points(X_raw, spec, n_grid):
    if not n_grid:
        return X_raw
    if X_raw.shape[1] != 1:
        raise ConfigError("eval_grid is only supported for a single covariate")
    grid = np.linspace(X_raw[:, 0].min(), X_raw[:, 0].max(), int(n_grid))[:, None]
    return np.vstack([X_raw, grid])


def write_surface_csv(path, taus, x_ids, columns):
    """Long-format surface: ``x_id,tau,<columns...>`` with (n_tau, n_x) arrays."""
    names = list(columns)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x_id", "tau"] + names)
        for i, xid in enumerate(x_ids):
            for a, tau in enumerate(taus):
                w.writerow([int(xid), _num(tau)] + [_num(columns[c][a, i]) for c in names])


def read_surface_csv(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [r for r in reader if r]
    data = np.asarray(rows, dtype=float)
    x_ids = np.unique(data[:, 0]).astype(int)
    taus = np.unique(data[:, 1])
    out = {}
    order = np.lexsort((data[:, 1], data[:, 0]))
    data = data[order]
    for c, name in enumerate(header[2:], start=2):
        out[name] = data[:, c].reshape(x_ids.size, taus.size).T
    return taus, x_ids, out


def write_crossings_csv(path, violations):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x_id", "tau_lo", "tau_hi", "gap"])
        for v in violations:
            w.writerow([v.x_id, _num(v.tau_lo), _num(v.tau_hi), _num(v.gap)])


def _read_points(out):
    path = os.path.join(out, "points.csv")
    with open(path, newline="") as fh:
        header = next(csv.reader(fh))
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return header[1:], data[:, 0].astype(int), data[:, 1:]


def write_curves_csv(path, surface, out, curve_taus=None):
    """Plot-ready long table: covariates joined to both surfaces at the requested levels."""
    names, ids, X = _read_points(out)
    lookup = dict(zip(ids.tolist(), X))
    taus = surface.taus
    keep = np.arange(taus.size)
    if curve_taus:
        wanted = QuantileLevelGrid.parse(curve_taus).levels
        keep = np.array([QuantileLevelGrid(taus).index_of(t) for t in wanted])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["tau", "x_id"] + names + ["q_standard", "q_adjusted"])
        for a in keep:
            for i, xid in enumerate(surface.x_ids):
                w.writerow(
                    [_num(taus[a]), int(xid)]
                    + [_num(v) for v in lookup[int(xid)]]
                    + [_num(surface.standard[a, i]), _num(surface.values[a, i])]
                )


def cmd_fit(cfg):
    t0 = time.perf_counter()
    if not cfg["input"]:
        raise ConfigError("fit needs an input CSV (--input or config key 'input')")
    out = cfg["out"]
    os.makedirs(os.path.join(out, "draws"), exist_ok=True)
    names, X_raw, yname, y = read_table_csv(cfg["input"], cfg["response"])
    spec = basis_spec(cfg)
    grid = QuantileLevelGrid.parse(cfg["grid"])
    scfg = sampler_config(cfg)
    eval_raw = _evaluation_points(X_raw, spec, cfg["eval_grid"])
    design, draws, table = fit_stage_one(X_raw, y, spec, grid, scfg, eval_raw)
    t_fit = time.perf_counter()
    draw_files = []
    for j, d in enumerate(draws):
        name = os.path.join("draws", f"level_{j:03d}.csv")
        write_draws_csv(os.path.join(out, name), d)
        draw_files.append({"p": d.p, "file": name})
    x_ids = np.arange(eval_raw.shape[0])
    with open(os.path.join(out, "points.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x_id"] + names)
        for i in x_ids:
            w.writerow([int(i)] + [_num(v) for v in eval_raw[i]])
    write_induced_csv(os.path.join(out, "induced_stats.csv"), table, x_ids)
    std = table.standard_surface()
    write_surface_csv(os.path.join(out, "standard_surface.csv"), grid.levels, x_ids, {"q_standard": std})
    violations = detect_crossing(std, grid.levels, x_ids)
    write_crossings_csv(os.path.join(out, "crossings_standard.csv"), violations)
    manifest = {
        "command": "fit",
        "version": __version__,
        "seed": scfg.seed,
        "config": cfg,
        "covariates": names,
        "response": yname,
        "n": int(y.size),
        "n_points": int(x_ids.size),
        "basis_columns": design.cols,
        "covariate_range": [list(r) for r in design.covariate_range],
        "grid": grid.levels.tolist(),
        "retained_draws": scfg.retained,
        "draw_files": draw_files,
        "crossings_standard": len(violations),
        "timings": {"fit_seconds": t_fit - t0, "total_seconds": time.perf_counter() - t0},
    }
    write_manifest(os.path.join(out, FIT_MANIFEST), manifest)
    print(f"fitted {len(grid)} levels on n={y.size}; standard surface has {len(violations)} crossings")
    return 0


def cmd_adjust(cfg):
    t0 = time.perf_counter()
    out = cfg["out"]
    try:
        with open(os.path.join(out, FIT_MANIFEST)) as fh:
            fit_manifest = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"no stage-1 artifacts in {out}: {exc}") from exc
    table, x_ids = read_induced_csv(os.path.join(out, "induced_stats.csv"))
    fitted_grid = np.asarray(fit_manifest["grid"], dtype=float)
    if not (table.levels.size == fitted_grid.size and np.allclose(table.levels, fitted_grid, atol=1e-12)):
        raise ConfigError("induced statistics do not match the fitted grid")
    if cfg.get("_grid_given"):
        requested = QuantileLevelGrid.parse(cfg["grid"]).levels
        if requested.size != fitted_grid.size or not np.allclose(requested, fitted_grid, atol=1e-9):
            raise ConfigError("requested grid differs from the grid used in stage 1")
    spec = BasisSpec.parse(fit_manifest["config"]["basis"])
    gcfg = gp_config(cfg, spec)
    std = table.standard_surface()
    before = detect_crossing(std, table.taus, x_ids)
    fixed_b = None if cfg["fixed_b"] is None else float(cfg["fixed_b"])
    surface = adjust(table, gcfg, fixed_b=fixed_b, x_ids=x_ids)
    after = detect_crossing(surface)
    write_surface_csv(
        os.path.join(out, "adjusted_surface.csv"),
        surface.taus,
        surface.x_ids,
        {"q_adjusted": surface.values, "q_standard": surface.standard, "sigma_star_sq": surface.variances},
    )
    write_crossings_csv(os.path.join(out, "crossings_adjusted.csv"), after)
    write_curves_csv(os.path.join(out, "curves.csv"), surface, out, cfg["curve_taus"])
    manifest = {
        "command": "adjust",
        "version": __version__,
        "seed": fit_manifest.get("seed"),
        "config": {k: v for k, v in cfg.items() if not k.startswith("_")},
        "fit_config": fit_manifest["config"],
        "mode": surface.mode,
        "bandwidth": surface.bandwidth,
        "bandwidth_searched": fixed_b is None,
        "noise_equalized": surface.noise_equalized,
        "sigma_k_sq": gcfg.sigma_k_sq,
        "crossings_before": len(before),
        "crossings_after": len(after),
        "probes": [list(p) for p in surface.probes],
        "timings": {"adjust_seconds": time.perf_counter() - t0},
    }
    write_manifest(os.path.join(out, RUN_MANIFEST), manifest)
    print(f"mode={surface.mode} b={surface.bandwidth:.6g}; crossings {len(before)} -> {len(after)}")
    return 0


def _replicate_job(args):
    return run_replicate(*args)


def cmd_simulate(cfg):
    t0 = time.perf_counter()
    if cfg["design"] is None:
        raise ConfigError("simulate needs --design")
    R = int(cfg["replicates"])
    if R < 1:
        raise ConfigError("replicates must be >= 1")
    design_id = int(cfg["design"])
    get_design(design_id)
    out = cfg["out"]
    os.makedirs(out, exist_ok=True)
    spec = basis_spec(cfg)
    grid = QuantileLevelGrid.parse(cfg["grid"])
    scfg = sampler_config(cfg)
    gcfg = gp_config(cfg, spec)
    fixed_b = None if cfg["fixed_b"] is None else float(cfg["fixed_b"])
    seeds = replicate_seeds(int(cfg["seed"]), R)
    jobs = [(design_id, int(cfg["n"]), spec, grid, scfg, gcfg, ds, ss, fixed_b) for ds, ss in seeds]
    if int(cfg["jobs"]) > 1:
        with ProcessPoolExecutor(max_workers=int(cfg["jobs"])) as pool:
            results = list(pool.map(_replicate_job, jobs))
    else:
        results = [_replicate_job(j) for j in jobs]
    if cfg["export_data"]:
        design = get_design(design_id, n=int(cfg["n"]))
        for r, (ds, _) in enumerate(seeds):
            X, y, _ = generate(design, ds)
            header = ",".join([f"x_{j + 1}" for j in range(X.shape[1])] + ["y"])
            np.savetxt(os.path.join(out, f"data_{r:03d}.csv"), np.column_stack([X, y]), delimiter=",",
                       header=header, comments="", fmt="%.17g")
    adj_name = f"rmise_{gcfg.mode}"
    with open(os.path.join(out, "replicates.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["replicate", "tau", "method", "rmise", "crossed", "bandwidth"])
        for r, res in enumerate(results):
            for a, tau in enumerate(res["taus"]):
                w.writerow([r, _num(tau), "standard", _num(res["rmise_standard"][a]), int(res["crossings_standard"] > 0), ""])
                w.writerow([r, _num(tau), gcfg.mode, _num(res["rmise_adjusted"][a]), int(res["crossings_adjusted"] > 0), _num(res["bandwidth"])])
    std = np.array([r["rmise_standard"] for r in results])
    adj = np.array([r["rmise_adjusted"] for r in results])
    crossed_std = np.mean([r["crossings_standard"] > 0 for r in results])
    crossed_adj = np.mean([r["crossings_adjusted"] > 0 for r in results])
    with open(os.path.join(out, "summary.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["tau", "rmise_standard", adj_name, "crossing_frequency_standard", f"crossing_frequency_{gcfg.mode}"])
        for a, tau in enumerate(grid.levels):
            w.writerow([_num(tau), _num(std[:, a].mean()), _num(adj[:, a].mean()), _num(crossed_std), _num(crossed_adj)])
    manifest = {
        "command": "simulate",
        "version": __version__,
        "seed": int(cfg["seed"]),
        "config": cfg,
        "design": design_id,
        "replicates": R,
        "mode": gcfg.mode,
        "bandwidths": [r["bandwidth"] for r in results],
        "noise_equalized": [r["noise_equalized"] for r in results],
        "replicate_seeds": [[r["data_seed"], r["sampler_seed"]] for r in results],
        "crossings_before": [r["crossings_standard"] for r in results],
        "crossings_after": [r["crossings_adjusted"] for r in results],
        "crossing_frequency_standard": float(crossed_std),
        "crossing_frequency_adjusted": float(crossed_adj),
        "timings": {"total_seconds": time.perf_counter() - t0},
    }
    write_manifest(os.path.join(out, RUN_MANIFEST), manifest)
    print(
        f"design {design_id}, {R} replicates: crossing {crossed_std:.0%} before, {crossed_adj:.0%} after; "
        f"mean RMISE standard {std.mean():.5f}, {gcfg.mode} {adj.mean():.5f}"
    )
    return 0


def cmd_evaluate(cfg):
    out = cfg["out"]
    path = cfg["surface"] or os.path.join(out, "adjusted_surface.csv")
    try:
        taus, x_ids, cols = read_surface_csv(path)
    except OSError as exc:
        raise ConfigError(f"cannot read surface {path}: {exc}") from exc
    report = {}
    for name in ("q_standard", "q_adjusted"):
        if name in cols:
            report[name] = len(detect_crossing(cols[name], taus, x_ids))
    rows = []
    if cfg["design"] is not None:
        _, ids, X = _read_points(os.path.dirname(os.path.abspath(path)))
        lookup = dict(zip(ids.tolist(), X))
        X_eval = np.array([lookup[int(i)] for i in x_ids])
        design = get_design(int(cfg["design"]))
        present = [n for n in ("q_standard", "q_adjusted") if n in cols]
        truth = np.array([design.quantile(t, X_eval) for t in taus])
        for a, tau in enumerate(taus):
            rows.append([tau] + [rmise(cols[n][a], truth[a]) for n in present])
        with open(os.path.join(out, "evaluation.csv"), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["tau"] + [f"rmise_{n[2:]}" for n in present])
            for r in rows:
                w.writerow([_num(v) for v in r])
        write_surface_csv(os.path.join(out, "true_surface.csv"), taus, x_ids, {"q_true": truth})
    for name, count in report.items():
        print(f"{name}: {count} crossings")
    if rows:
        means = np.mean(np.array(rows)[:, 1:], axis=0)
        print("mean RMISE: " + ", ".join(f"{m:.6f}" for m in means))
    return 0


COMMANDS = {"fit": cmd_fit, "adjust": cmd_adjust, "simulate": cmd_simulate, "evaluate": cmd_evaluate}


def build_parser():
    parser = argparse.ArgumentParser(prog="qradjust", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="flat JSON config file")
        p.add_argument("--seed", type=int)
        p.add_argument("--grid", help="start:stop:step or comma-separated levels")
        p.add_argument("--basis", help="linear | polynomial:D | cubic_spline:K")
        p.add_argument("--mode", choices=["gpr", "lgpr"])
        p.add_argument("--fixed-b", dest="fixed_b", type=float)
        p.add_argument("--out")
        p.add_argument("--input")
        p.add_argument("--response")
        p.add_argument("--design", type=int)
        p.add_argument("--replicates", type=int)
        p.add_argument("--n", type=int)
        p.add_argument("--total-draws", dest="total_draws", type=int)
        p.add_argument("--burn-in", dest="burn_in", type=int)
        p.add_argument("--thin", type=int)
        p.add_argument("--sigma-k-sq", dest="sigma_k_sq", type=float)
        p.add_argument("--eval-grid", dest="eval_grid", type=int)
        p.add_argument("--jobs", type=int)
        p.add_argument("--surface")
        p.add_argument("--export-data", dest="export_data", action="store_true", default=None)
        p.add_argument("--curve-taus", dest="curve_taus", help="levels to emit in curves.csv")
        p.add_argument("--include-intercept", dest="include_intercept", type=lambda v: v.lower() in ("1", "true", "yes"))
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args)
        cfg["_grid_given"] = args.grid is not None
        run = COMMANDS[args.command]
        if args.command != "adjust":
            cfg.pop("_grid_given")
        return run(cfg)
    except QRAdjustError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except np.linalg.LinAlgError as exc:
        print(f"error: numerical failure: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
