"""Design matrices for linear, polynomial and clamped cubic B-spline models."""

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import BSpline

from .errors import ConfigError, DataError, ShapeError

KINDS = ("linear", "polynomial", "cubic_spline")
SPLINE_DEGREE = 3


@dataclass(frozen=True)
class BasisSpec:
    """Which expansion to apply to the raw covariates.

    ``degree`` is used by ``polynomial`` only and ``num_interior_knots`` by
    ``cubic_spline`` only. Spline bases never carry a separate intercept
    column since the B-splines already sum to one.
    """

    kind: str = "linear"
    degree: int = 1
    num_interior_knots: int = 25
    include_intercept: bool = True

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown basis kind {self.kind!r}; expected one of {KINDS}")
        if self.kind == "polynomial" and int(self.degree) < 1:
            raise ConfigError("polynomial degree must be >= 1")
        if self.kind == "cubic_spline" and int(self.num_interior_knots) < 1:
            raise ConfigError("num_interior_knots must be >= 1")

    @classmethod
    def parse(cls, text, include_intercept=True):
        """Parse ``linear``, ``polynomial:2`` or ``cubic_spline:25``."""
        name, _, arg = str(text).strip().partition(":")
        name = name.strip().lower()
        try:
            if name == "linear":
                return cls("linear", include_intercept=include_intercept)
            if name in ("polynomial", "poly"):
                return cls("polynomial", degree=int(arg or 2), include_intercept=include_intercept)
            if name in ("cubic_spline", "spline"):
                return cls("cubic_spline", num_interior_knots=int(arg or 25), include_intercept=False)
        except ValueError as exc:
            raise ConfigError(f"bad basis argument in {text!r}") from exc
        raise ConfigError(f"unknown basis {text!r}")

    def to_string(self):
        if self.kind == "polynomial":
            return f"polynomial:{self.degree}"
        if self.kind == "cubic_spline":
            return f"cubic_spline:{self.num_interior_knots}"
        return "linear"

    @property
    def uses_intercept_column(self):
        return self.include_intercept and self.kind != "cubic_spline"

    @property
    def is_linear_in_covariates(self):
        return self.kind == "linear"


@dataclass(frozen=True)
class DesignMatrix:
    values: np.ndarray
    spec: BasisSpec
    covariate_range: tuple
    ref: str = field(default="design")

    @property
    def rows(self):
        return self.values.shape[0]

    @property
    def cols(self):
        return self.values.shape[1]


def spline_knots(lo, hi, num_interior_knots):
    """Clamped cubic knot vector with equally spaced interior knots on [lo, hi]."""
    interior = np.linspace(lo, hi, num_interior_knots + 2)[1:-1]
    return np.concatenate(
        [np.full(SPLINE_DEGREE + 1, lo), interior, np.full(SPLINE_DEGREE + 1, hi)]
    )


def _as_covariates(x_raw):
    x = np.asarray(x_raw, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2:
        raise ShapeError(f"covariates must be a vector or a matrix, got ndim={x.ndim}")
    if not np.all(np.isfinite(x)):
        bad = np.argwhere(~np.isfinite(x))[0]
        raise DataError(f"non-finite covariate at row {bad[0]}, column {bad[1]}")
    return x


def _expand(x, spec, covariate_range):
    n = x.shape[0]
    cols = []
    if spec.kind == "cubic_spline":
        if x.shape[1] != 1:
            raise ShapeError("cubic_spline bases take exactly one raw covariate")
        lo, hi = covariate_range[0]
        t = spline_knots(lo, hi, spec.num_interior_knots)
        xs = np.clip(x[:, 0], lo, hi)
        return BSpline.design_matrix(xs, t, SPLINE_DEGREE).toarray()
    if spec.uses_intercept_column:
        cols.append(np.ones((n, 1)))
    degree = spec.degree if spec.kind == "polynomial" else 1
    for d in range(1, degree + 1):
        cols.append(x**d)
    if not cols:
        raise ConfigError("basis has no columns")
    return np.hstack(cols)


def build_design(x_raw, spec, ref="design"):
    """Expand raw covariates into the regression basis ``spec``.

    Spline knots are placed over the observed covariate range, which is
    recorded on the result so that ``eval_basis_row`` can reproduce the
    same expansion out of sample.
    """
    x = _as_covariates(x_raw)
    covariate_range = tuple((float(c.min()), float(c.max())) for c in x.T)
    if spec.kind == "cubic_spline":
        if x.shape[1] != 1:
            raise ShapeError("cubic_spline bases take exactly one raw covariate")
        lo, hi = covariate_range[0]
        if not hi > lo:
            raise DataError("spline covariate has zero range")
    values = _expand(x, spec, covariate_range)
    n, k = values.shape
    if n < k:
        raise DataError(f"underdetermined design: {n} rows for {k} basis columns")
    return DesignMatrix(values=values, spec=spec, covariate_range=covariate_range, ref=ref)


def eval_basis(x_new, spec, fitted_range):
    """Apply a fitted expansion to a matrix of new covariate rows.

    Spline inputs outside ``fitted_range`` are clamped to the boundary.
    """
    x = _as_covariates(x_new)
    if x.shape[1] != len(fitted_range):
        raise ShapeError(f"expected {len(fitted_range)} covariates, got {x.shape[1]}")
    return _expand(x, spec, fitted_range)


def eval_basis_row(x_new, spec, fitted_range):
    """Basis row for a single raw covariate vector (or scalar, for one covariate)."""
    x = np.atleast_1d(np.asarray(x_new, dtype=float))
    if x.ndim != 1:
        raise ShapeError("eval_basis_row takes one covariate vector; use eval_basis for many")
    return eval_basis(x[None, :], spec, fitted_range)[0]
