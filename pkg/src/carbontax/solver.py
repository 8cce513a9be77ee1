"""Tax-formula engines.

Four solvers share one damped fixed-point driver:

  * pointwise Pareto-efficient nonlinear marginal rates on the dirty good,
  * optimal levels of both schedules given welfare weights (closed forms),
  * the Pareto-efficient linear rate (density-weighted averaging),
  * the multidimensional linear rate with the variance attenuation term.

Marginal damage enters everywhere as a rate per dollar of expenditure; all
sufficient statistics are taken from the profile as-is (status-quo
convention) and never updated inside an iteration.
"""

from dataclasses import dataclass

import numpy as np

from .errors import (DegenerateHazardError, NegativeVarianceError,
                     NoConvergenceError, RateOutOfRangeError,
                     SingularDenominatorError)


@dataclass
class SolveReport:
    converged: bool
    iterations: int
    residual: float
    result: object
    branch_note: str = ""

    def __post_init__(self):
        if self.converged and not np.isfinite(self.residual):
            raise ValueError("converged report with non-finite residual")


def fixed_point(map_fn, seed, *, damping=0.5, tol=1e-12, max_iter=10000,
                note=""):
    """Damped iteration x <- (1 - d) x + d map(x); converged when
    max|map(x) - x| < tol."""
    x = np.asarray(seed, dtype=float).copy()
    scalar = x.ndim == 0
    if scalar:
        x = x.reshape(1)
    if not np.all(np.isfinite(x)):
        raise ValueError("seed must be finite")
    residual = np.inf
    for it in range(1, max_iter + 1):
        fx = np.asarray(map_fn(x[0] if scalar else x), dtype=float)
        if scalar:
            fx = fx.reshape(1)
        if not np.all(np.isfinite(fx)):
            raise NoConvergenceError(
                "fixed-point map produced non-finite values",
                points=np.where(~np.isfinite(fx))[0])
        residual = float(np.max(np.abs(fx - x)))
        if residual < tol:
            return SolveReport(True, it, residual,
                               float(fx[0]) if scalar else fx, note)
        x = (1.0 - damping) * x + damping * fx
    raise NoConvergenceError(
        "fixed point did not converge after %d iterations (residual %.3g)"
        % (max_iter, residual))


def _rr_pointwise(profile, rates):
    """RR(z) of the nonlinear condition at candidate marginal rates."""
    return (profile.eta_taste * profile.eps_z / profile.eps_x
            * (1.0 + rates) / (1.0 - profile.mtr))


def pareto_nonlinear_residual(profile, rates, damage, mtr=None):
    """Pointwise residual of the nonlinear Pareto-efficiency condition."""
    m = profile.mtr if mtr is None else np.asarray(mtr, dtype=float)
    lhs = (rates - damage) / (1.0 + rates)
    rhs = (profile.eta_taste * profile.eps_z / profile.eps_x
           * (m + (rates - damage) * profile.x_inc) / (1.0 - m))
    return lhs - rhs


def solve_nonlinear(profile, damage, *, damping=0.5, tol=1e-12,
                    max_iter=10000):
    """Pointwise Pareto-efficient marginal rates on the dirty good.

    At each grid point the rate solves
        rate - damage = RR * T'_z / (1 - RR * x'_inc),
    iterated from the Pigouvian seed with damping. The denominator is
    monitored: a sign change along the iteration path is surfaced as
    SingularDenominatorError rather than smoothed over.
    """
    n = len(profile.grid.points)
    seed = np.full(n, float(damage))

    def step(rates):
        rr = _rr_pointwise(profile, rates)
        denom = 1.0 - rr * profile.x_inc
        if np.any(denom <= 1e-10):
            bad = np.where(denom <= 1e-10)[0]
            raise SingularDenominatorError(
                "1 - RR * x_inc vanished at grid points %s" % bad.tolist(),
                bracket=(float(np.min(denom)), 1.0))
        return damage + rr * profile.mtr / denom

    try:
        report = fixed_point(step, seed, damping=damping, tol=tol,
                             max_iter=max_iter, note="damped fixed point "
                             "from the Pigouvian seed")
    except NoConvergenceError as err:
        raise NoConvergenceError(
            "nonlinear solve failed: %s" % err, points=err.points) from err
    res = pareto_nonlinear_residual(profile, report.result, damage)
    report.residual = float(np.max(np.abs(res)))
    if report.residual > 1e-10:
        raise NoConvergenceError(
            "nonlinear residual %.3g above 1e-10 at points %s"
            % (report.residual, np.where(np.abs(res) > 1e-10)[0].tolist()))
    return report


def nonlinear_quadratic(profile, damage):
    """Closed-form cross-check of the nonlinear condition.

    With S = eta * eps_z / (eps_x (1 - T'_z)) the condition is the scalar
    quadratic  S x_inc r^2 - (1 - S x_inc (1 - D) - S m) r + D (1 - S x_inc)
    + S m = 0; the root returned is the branch continuous in eta at zero
    (it tends to the Pigouvian rate as taste heterogeneity vanishes).
    """
    s = (profile.eta_taste * profile.eps_z
         / (profile.eps_x * (1.0 - profile.mtr)))
    xi = profile.x_inc
    m = profile.mtr
    d = float(damage)
    a = s * xi
    b = -(1.0 - s * xi * (1.0 - d) - s * m)
    c = d * (1.0 - s * xi) + s * m

    disc = b * b - 4.0 * a * c
    if np.any(disc < 0):
        raise SingularDenominatorError(
            "nonlinear condition has no real root at points %s"
            % np.where(disc < 0)[0].tolist())
    out = np.empty_like(a)
    lin = np.abs(a) < 1e-300
    out[lin] = -c[lin] / b[lin]
    sgn = np.where(b >= 0, 1.0, -1.0)
    q = -(b + sgn * np.sqrt(disc)) / 2.0
    with np.errstate(divide="ignore", invalid="ignore"):
        root_cq = c / q
        root_qa = q / a
    cont = np.where(b < 0, root_cq, root_qa)
    out[~lin] = cont[~lin]
    return out


def solve_optimal_levels(profile, damage):
    """Optimal levels of both schedules given welfare weights.

    Closed forms: with P(z) = (1 - H) / (z h) and G = 1 - gbar_plus,
    c = eta * P * G / eps_x gives rate = (damage + c) / (1 - c); then
    K = P * G / eps_z gives T'_z = (K - (rate - damage) x_inc) / (1 + K).
    """
    if profile.gbar_plus is None:
        raise ValueError("optimal-levels solve needs the gbar_plus column")
    z = profile.grid.points
    h = profile.grid.density
    hz = z * h
    if np.any(hz < 1e-12):
        raise DegenerateHazardError(
            "z * h_z below 1e-12 at points %s"
            % np.where(hz < 1e-12)[0].tolist())
    pareto = (1.0 - profile.grid.cdf) / hz
    gterm = 1.0 - profile.gbar_plus
    c = profile.eta_taste * pareto * gterm / profile.eps_x
    if np.any(c >= 1.0):
        raise RateOutOfRangeError(
            "implied commodity wedge c >= 1 at points %s"
            % np.where(c >= 1.0)[0].tolist())
    tx = (damage + c) / (1.0 - c)
    k = pareto * gterm / profile.eps_z
    tz = (k - (tx - damage) * profile.x_inc) / (1.0 + k)
    return tx, tz


def _linear_rr(profile, t):
    weight = profile.grid.expectation(profile.eps_x * profile.xhat)
    return (profile.eta_taste * profile.eps_z * profile.xhat / weight
            * (1.0 + t) / (1.0 - profile.mtr))


def solve_linear(profile, damage, *, damping=0.5, tol=1e-12, max_iter=10000):
    """Pareto-efficient linear rate on the dirty good."""
    ex = profile.grid.expectation

    def step(t):
        rr = _linear_rr(profile, t)
        denom = 1.0 - ex(rr * profile.x_inc)
        if denom <= 1e-10:
            raise SingularDenominatorError(
                "1 - E[RR x_inc] vanished (%.3g)" % denom,
                bracket=(denom, 1.0))
        return damage + ex(rr * profile.mtr) / denom

    report = fixed_point(step, float(damage), damping=damping, tol=tol,
                         max_iter=max_iter,
                         note="scalar fixed point from the Pigouvian seed")
    return report


def solve_multidim(profile, damage, *, damping=0.5, tol=1e-12,
                   max_iter=10000):
    """Optimal linear rate with within-income variance attenuation.

    Statistics columns are conditional means at each income; var_x_inc is
    the within-income variance of the causal income effect, entering the
    denominator with positive sign (constant-ETI restriction).
    """
    if profile.var_x_inc is None:
        raise ValueError("multidimensional solve needs the var_x_inc column")
    if np.any(profile.var_x_inc < 0):
        raise NegativeVarianceError("var_x_inc has negative entries")
    ex = profile.grid.expectation
    z = profile.grid.points

    def step(t):
        rr = _linear_rr(profile, t)
        weight = ex(profile.eps_x * profile.xhat)
        rr_tilde = (profile.eps_z * z / weight
                    * (1.0 + t) / (1.0 - profile.mtr))
        denom = (1.0 - ex(rr * profile.x_inc)
                 + ex(rr_tilde * profile.var_x_inc))
        if denom <= 1e-10:
            raise SingularDenominatorError(
                "multidim denominator vanished (%.3g)" % denom,
                bracket=(denom, 1.0))
        return damage + ex(rr * profile.mtr) / denom

    report = fixed_point(step, float(damage), damping=damping, tol=tol,
                         max_iter=max_iter,
                         note="scalar fixed point with variance attenuation")
    return report
