"""From binned cross-section and survey-MPC data to a StatsProfile.

The steps mirror the empirical procedure: savings-adjust the dirty-good
profile (share times after-tax income), recover marginal income-tax rates
from a smoothing spline of after-tax on before-tax income, fit a global
polynomial to the marginal-propensity shares and rescale it by the
net-of-tax rate into the causal income effect, smooth everything on an
equally log-spaced grid, and bin the survey's conditional variances into
income deciles. CSV parsing is strict: comma-separated, dot decimals,
mandatory header.
"""

import csv
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.interpolate import PchipInterpolator, make_smoothing_spline

from .errors import (GridMismatchError, InsufficientSupportError,
                     MissingColumnError, NonMonotoneAfterTaxError,
                     RankDeficientError, SparseDecileError)
from .schedules import IncomeGrid, trapz_weights
from .serialize import write_csv
from .statistics import StatsProfile

GRID_FLOOR = 600.0
GRID_CEIL = 325000.0
MTR_CLIP = (-0.2, 0.99)


@dataclass(frozen=True)
class BinnedCrossSection:
    """Percentile-level cross-section rows."""

    percentile: np.ndarray
    mean_income: np.ndarray
    mean_after_tax_income: np.ndarray
    dirty_share: np.ndarray
    mean_x_level: Optional[np.ndarray] = None

    def __post_init__(self):
        for name in ("percentile", "mean_income", "mean_after_tax_income",
                     "dirty_share"):
            object.__setattr__(self, name,
                               np.asarray(getattr(self, name), dtype=float))
        if self.mean_x_level is not None:
            object.__setattr__(self, "mean_x_level",
                               np.asarray(self.mean_x_level, dtype=float))
        if len(np.unique(self.percentile)) != len(self.percentile):
            raise ValueError("percentiles must be unique")
        if not np.all(np.diff(self.mean_income) > 0):
            raise ValueError("mean income must increase with percentile")
        if np.any((self.dirty_share <= 0) | (self.dirty_share >= 1)):
            raise ValueError("dirty shares must lie strictly inside (0, 1)")

    @classmethod
    def from_csv(cls, path):
        cols = _read_csv(path, ("percentile", "mean_income",
                                "mean_after_tax_income", "dirty_share"),
                         optional=("mean_x_level",))
        return cls(cols["percentile"], cols["mean_income"],
                   cols["mean_after_tax_income"], cols["dirty_share"],
                   cols.get("mean_x_level"))

    def to_csv(self, path):
        header = ["percentile", "mean_income", "mean_after_tax_income",
                  "dirty_share"]
        rows = [[int(p), zi, ai, si] for p, zi, ai, si in
                zip(self.percentile, self.mean_income,
                    self.mean_after_tax_income, self.dirty_share)]
        if self.mean_x_level is not None:
            header.append("mean_x_level")
            for row, x in zip(rows, self.mean_x_level):
                row.append(x)
        write_csv(path, header, rows)


@dataclass(frozen=True)
class SurveyMpcTable:
    """Respondent-level marginal-spending shares."""

    respondent_id: np.ndarray
    taxable_income: np.ndarray
    mpc_dirty_share: np.ndarray
    total_mpc: np.ndarray

    def __post_init__(self):
        for name in ("taxable_income", "mpc_dirty_share", "total_mpc"):
            object.__setattr__(self, name,
                               np.asarray(getattr(self, name), dtype=float))
        object.__setattr__(self, "respondent_id",
                           np.asarray(self.respondent_id))
        if np.any(self.taxable_income <= 0):
            raise ValueError("taxable income must be positive")
        if np.any((self.mpc_dirty_share < 0) | (self.mpc_dirty_share > 1)):
            raise ValueError("mpc shares must lie in [0, 1]")

    def __len__(self):
        return len(self.taxable_income)

    @classmethod
    def from_csv(cls, path):
        cols = _read_csv(path, ("id", "taxable_income", "mpc_dirty_share",
                                "total_mpc"))
        return cls(cols["id"], cols["taxable_income"],
                   cols["mpc_dirty_share"], cols["total_mpc"])

    def to_csv(self, path):
        rows = [[int(i), z, s, t] for i, z, s, t in
                zip(self.respondent_id, self.taxable_income,
                    self.mpc_dirty_share, self.total_mpc)]
        write_csv(path, ["id", "taxable_income", "mpc_dirty_share",
                         "total_mpc"], rows)


@dataclass(frozen=True)
class SmoothingConfig:
    grid_size: int = 1000
    log_spaced: bool = True
    spline_penalty: object = "gcv"  # "gcv" or a fixed positive float
    poly_degree_mpc: int = 2

    def __post_init__(self):
        if self.grid_size < 100:
            raise ValueError("grid_size must be at least 100")
        if not self.log_spaced:
            raise ValueError("the pipeline grid is log-spaced by contract")
        if self.poly_degree_mpc not in (1, 2, 3):
            raise ValueError("poly_degree_mpc must be 1, 2 or 3")
        if self.spline_penalty != "gcv" and not (
                isinstance(self.spline_penalty, (int, float))
                and self.spline_penalty > 0):
            raise ValueError("spline_penalty must be 'gcv' or positive")

    @property
    def lam(self):
        return None if self.spline_penalty == "gcv" else float(self.spline_penalty)


def _read_csv(path, required, optional=()):
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise MissingColumnError("empty csv %s" % path)
        idx = {name: header.index(name) for name in header}
        for name in required:
            if name not in idx:
                raise MissingColumnError("column %r missing from %s"
                                         % (name, path))
        cols = {name: [] for name in header}
        for row in reader:
            if not row:
                continue
            for name, j in idx.items():
                cols[name].append(_strict_float(row[j], name))
    out = {name: np.asarray(cols[name], dtype=float) for name in required}
    for name in optional:
        if name in cols:
            out[name] = np.asarray(cols[name], dtype=float)
    return out


def _strict_float(cell, name):
    cell = cell.strip()
    if not cell or "," in cell:
        raise ValueError("cell %r in column %s is not a plain decimal"
                         % (cell, name))
    return float(cell)


def build_log_grid(cs, cfg):
    """Equally log-spaced grid over the data span clipped to the survey span."""
    lo = max(GRID_FLOOR, float(np.min(cs.mean_income)))
    hi = min(GRID_CEIL, float(np.max(cs.mean_income)))
    if not lo < hi:
        raise ValueError("degenerate grid span [%g, %g]" % (lo, hi))
    return np.geomspace(lo, hi, cfg.grid_size)


def savings_adjust(cs):
    """Savings-adjusted dirty-good level: share times after-tax income."""
    return cs.dirty_share * cs.mean_after_tax_income


def fit_mpc_curve(table, cfg):
    """Global least-squares polynomial of mpc share on taxable income.

    Returns ascending coefficients and the fitted values at the respondents.
    """
    deg = cfg.poly_degree_mpc
    if len(table) < 3 * (deg + 1):
        raise InsufficientSupportError(
            "need at least %d survey rows for degree %d" % (3 * (deg + 1), deg))
    design = np.vander(table.taxable_income, deg + 1, increasing=True)
    coeffs, _, rank, _ = np.linalg.lstsq(design, table.mpc_dirty_share,
                                         rcond=None)
    if rank < deg + 1:
        raise RankDeficientError(
            "mpc design matrix rank %d below %d" % (rank, deg + 1))
    return coeffs, design @ coeffs


def eval_poly(coeffs, z):
    return np.vander(np.asarray(z, dtype=float), len(coeffs),
                     increasing=True) @ coeffs


def rescale_mpc(dx_di, mtr):
    """Causal income effect x'_inc = (1 - T'_z) dx/dI on a shared grid."""
    dx_di = np.asarray(dx_di, dtype=float)
    mtr = np.asarray(mtr, dtype=float)
    if dx_di.shape != mtr.shape:
        raise GridMismatchError("dx/dI and mtr are on different grids")
    return (1.0 - mtr) * dx_di


def recover_mtr(cs, cfg, grid):
    """Marginal income-tax rates from the smoothed after-tax mapping.

    Fits a smoothing spline in log-log space and differentiates; rates
    falling outside the plausible band are clamped and reported, never
    silently dropped.
    """
    if np.any(np.diff(cs.mean_after_tax_income) <= 0):
        raise NonMonotoneAfterTaxError(
            "after-tax income must increase across percentiles")
    u = np.log(cs.mean_income)
    v = np.log(cs.mean_after_tax_income)
    sp = make_smoothing_spline(u, v, lam=cfg.lam)
    ug = np.log(grid)
    after = np.exp(sp(ug))
    d_after = after / grid * sp.derivative()(ug)
    raw = 1.0 - d_after
    lo, hi = MTR_CLIP
    flagged = np.where((raw < lo) | (raw > hi))[0]
    warnings = [{"index": int(i), "z": float(grid[i]), "raw_mtr": float(raw[i])}
                for i in flagged]
    return np.clip(raw, lo, hi), warnings


def smooth_profiles(z_points, xhat_points, cfg, grid, x_inc_points=None):
    """Log-space smoothing of the dirty-good profile (and optionally x_inc).

    Returns xhat, its derivative (converted back from log space), and the
    smoothed x_inc when points are given. x_inc may take either sign, so it
    is smoothed against log income in levels.
    """
    z_points = np.asarray(z_points, dtype=float)
    xhat_points = np.asarray(xhat_points, dtype=float)
    if len(z_points) < 10:
        raise InsufficientSupportError("need at least 10 support points")
    if np.any(xhat_points <= 0):
        raise ValueError("xhat support must be positive for log smoothing")
    u = np.log(z_points)
    sp = make_smoothing_spline(u, np.log(xhat_points), lam=cfg.lam)
    ug = np.log(grid)
    xhat = np.exp(sp(ug))
    slope = xhat / grid * sp.derivative()(ug)
    out = {"xhat": xhat, "xhat_slope": slope}
    if x_inc_points is not None:
        spi = make_smoothing_spline(u, np.asarray(x_inc_points, dtype=float),
                                    lam=cfg.lam)
        out["x_inc"] = spi(ug)
    return out


def variance_by_decile(table, mtr_on_grid, grid, cfg):
    """Within-decile variance of the respondent-level causal income effect.

    Respondents get x'_inc = (1 - T'_z) * mpc share at their own income,
    deciles are equal-count in income (left-closed bins, last closed), the
    step function is assigned over each decile's span and then smoothed with
    the same spline machinery.
    """
    order = np.argsort(table.taxable_income, kind="stable")
    z = table.taxable_income[order]
    mtr_i = np.interp(np.log(z), np.log(grid), mtr_on_grid)
    x_inc_i = (1.0 - mtr_i) * table.mpc_dirty_share[order]
    chunks = np.array_split(np.arange(len(z)), 10)
    if min(len(c) for c in chunks) < 10:
        raise SparseDecileError("each income decile needs >= 10 respondents")
    dec_var = np.array([np.var(x_inc_i[c]) for c in chunks])
    dec_lo = np.array([z[c[0]] for c in chunks])
    dec_hi = np.array([z[c[-1]] for c in chunks])
    edges = np.concatenate(([grid[0]],
                            0.5 * (dec_hi[:-1] + dec_lo[1:]),
                            [max(grid[-1], dec_hi[-1]) * (1 + 1e-12)]))
    step = dec_var[np.clip(np.searchsorted(edges, grid, side="right") - 1,
                           0, 9)]
    if np.all(dec_var > 0):
        sp = make_smoothing_spline(np.log(grid), np.log(step), lam=cfg.lam)
        smooth = np.exp(sp(np.log(grid)))
    else:
        sp = make_smoothing_spline(np.log(grid), step, lam=cfg.lam)
        smooth = np.maximum(sp(np.log(grid)), 0.0)
    deciles = [{"lo": float(a), "hi": float(b), "variance": float(v)}
               for a, b, v in zip(dec_lo, dec_hi, dec_var)]
    return smooth, dec_var, deciles


def density_from_percentiles(cs, grid):
    """Income density on the grid from equal-mass percentile bins."""
    z = cs.mean_income
    mass = 1.0 / len(z)
    h_pts = mass / trapz_weights(z)
    h = np.interp(np.log(grid), np.log(z), h_pts)
    return h


def assemble_profile(grid_points, density, xhat, xhat_slope, x_inc, mtr,
                     eps_z, eps_x, var_x_inc=None, gbar_plus=None):
    """Final assembly with constant elasticity columns."""
    grid_points = np.asarray(grid_points, dtype=float)
    n = len(grid_points)
    for name, arr in (("density", density), ("xhat", xhat),
                      ("xhat_slope", xhat_slope), ("x_inc", x_inc),
                      ("mtr", mtr)):
        if np.asarray(arr).shape != (n,):
            raise GridMismatchError("%s is not on the assembly grid" % name)
    grid = IncomeGrid.from_density(grid_points, np.asarray(density, float))
    return StatsProfile.build(grid, xhat, xhat_slope, x_inc,
                              np.full(n, float(eps_z)),
                              np.full(n, float(eps_x)), mtr,
                              var_x_inc, gbar_plus)


def run_pipeline(cs, table, cfg, *, eps_z, eps_x, with_variance=True,
                 gbar_plus=None):
    """The full empirical procedure, cross-section CSV to StatsProfile."""
    grid = build_log_grid(cs, cfg)
    xhat_pts = savings_adjust(cs)
    mtr, mtr_warnings = recover_mtr(cs, cfg, grid)
    coeffs, _ = fit_mpc_curve(table, cfg)
    x_inc = rescale_mpc(eval_poly(coeffs, grid), mtr)
    smoothed = smooth_profiles(cs.mean_income, xhat_pts, cfg, grid)
    var = None
    if with_variance:
        var, _, _ = variance_by_decile(table, mtr, grid, cfg)
    density = density_from_percentiles(cs, grid)
    profile = assemble_profile(grid, density, smoothed["xhat"],
                               smoothed["xhat_slope"], x_inc, mtr,
                               eps_z, eps_x, var_x_inc=var,
                               gbar_plus=gbar_plus)
    return profile, {"mtr_warnings": mtr_warnings, "mpc_coeffs": coeffs}
