"""Verification backbone: numerically evaluated reform welfare effects.

The oracle never trusts the sufficient-statistics formulas: it re-solves
every agent under kappa-scaled reformed schedules and differentiates the
planner's Lagrangian directly,

    L(kappa) = sum_f v(kappa) / lambda - damage * xbar(kappa) + R(kappa),

with lambda frozen at the status-quo mean marginal utility and damage the
calibrated rate (linear externality). Gradients are reported per dollar of
gross commodity-liability shift, so a reported 1e-5 means ten micro-dollars
of welfare per dollar moved.

Distribution-neutral directions are built from the economy's own solved
mapping, so each agent's total liability is unchanged at kappa = 0 to
machine precision and utility changes are second order.
"""

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.interpolate import CubicHermiteSpline

from . import statistics as stats
from .agent import solve_all, solve_core
from .errors import CarbonTaxError, NoConvergenceError, SolverFailureError
from .perturb import PerturbedSchedule
from .schedules import NonlinearCommodityTax
from .solver import solve_nonlinear


class Bump:
    """Raised-cosine unit bump on [a, b] peaking at c, with its integral.

    A triangular bump would be the minimal mollification of the idealized
    point-mass reform, but its peak kink sits exactly on an agent's choice
    and makes the revenue response's curvature differ across the sign of
    kappa, biasing central-difference gradients at O(kappa). The cosine
    profile is C^1, so the bias is O(kappa^2) and symmetric.
    """

    def __init__(self, a, c, b):
        if not a < c < b:
            raise ValueError("bump needs a < c < b")
        self.a, self.c, self.b = float(a), float(c), float(b)
        self.area = 0.5 * (self.b - self.a)

    def slope(self, x):
        """The bump itself (used as a marginal-rate perturbation)."""
        x = np.asarray(x, dtype=float)
        up = 0.5 * (1.0 - np.cos(np.pi * (np.clip(x, self.a, self.c) - self.a)
                                 / (self.c - self.a)))
        down = 0.5 * (1.0 - np.cos(np.pi * (self.b - np.clip(x, self.c, self.b))
                                   / (self.b - self.c)))
        return np.where(x <= self.c, up, down) * ((x > self.a) & (x < self.b))

    def value(self, x):
        """Integral of slope from the left edge."""
        x = np.asarray(x, dtype=float)
        xa = np.clip(x, self.a, self.c)
        xb = np.clip(x, self.c, self.b)
        up = 0.5 * ((xa - self.a)
                    - (self.c - self.a) / np.pi
                    * np.sin(np.pi * (xa - self.a) / (self.c - self.a)))
        down = 0.5 * ((xb - self.c)
                      + (self.b - self.c) / np.pi
                      * np.sin(np.pi * (self.b - xb) / (self.b - self.c)))
        return up + down


def _hermite_side(z, values, derivs, pad=0.75):
    """Smooth z-side reform: exact values AND slopes at the knots.

    Interpolating the (z, value) pairs alone would leave the knot slopes at
    the mercy of the interpolant, and a relative slope error of O(h^2) shows
    up as a spurious marginal-rate perturbation on every agent. The Hermite
    construction pins both, and continues linearly beyond a padded span.
    """
    z = np.asarray(z, dtype=float)
    v = np.asarray(values, dtype=float)
    d = np.asarray(derivs, dtype=float)
    z_lo, z_hi = z[0] * (1 - pad), z[-1] * (1 + pad)
    zz = np.concatenate(([z_lo], z, [z_hi]))
    vv = np.concatenate(([v[0] - d[0] * (z[0] - z_lo)], v,
                         [v[-1] + d[-1] * (z_hi - z[-1])]))
    dd = np.concatenate(([d[0]], d, [d[-1]]))
    poly = CubicHermiteSpline(zz, vv, dd, extrapolate=False)
    poly_d = poly.derivative()

    def tau(zq):
        return poly(zq), poly_d(zq)

    return tau


def cross_slopes(sol, economy=None):
    """True cross-sectional slopes x_hat'(z_i) at the solved points."""
    econ = economy if economy is not None else sol.economy
    if econ is None:
        raise ValueError("solution carries no economy; pass one explicitly")
    sp, sm = stats.cross_section_slope(econ, sol)
    if not econ.multidimensional:
        return (sp.x - sm.x) / (sp.z - sm.z)
    nth = len(econ.theta_points)
    fth = econ.theta_weights
    return (((sp.x.reshape(-1, nth) @ fth) - (sm.x.reshape(-1, nth) @ fth))
            / ((sp.z.reshape(-1, nth) @ fth) - (sm.z.reshape(-1, nth) @ fth)))


@dataclass
class ReformDirection:
    """A paired perturbation (tau_z, tau_x); each maps y -> (value, slope)."""

    kind: str
    tau_z: Callable
    tau_x: Callable
    z0: Optional[float] = None

    def liability_shift(self, sol):
        """Per-agent total liability change per unit kappa (0 when neutral)."""
        return self.tau_z(sol.z)[0] + self.tau_x(sol.x)[0]


def distribution_neutral_bump(sol, index, *, width_cells=4, slopes=None):
    """Local rise of the commodity marginal rate around x_hat(z0), offset by
    an income-tax cut that leaves every agent's liability unchanged."""
    if sol.economy is not None and sol.economy.multidimensional:
        raise ValueError("distribution-neutral reforms require a "
                         "unidimensional economy")
    half = width_cells // 2
    n = len(sol.z)
    if not half <= index <= n - 1 - half:
        raise ValueError("bump center %d too close to the grid edge" % index)
    bump = Bump(sol.x[index - half], sol.x[index], sol.x[index + half])
    s = cross_slopes(sol) if slopes is None else np.asarray(slopes, float)
    tau_z = _hermite_side(sol.z, -bump.value(sol.x),
                          -bump.slope(sol.x) * s)

    def tau_x(x):
        return bump.value(x), bump.slope(x)

    reform = ReformDirection("distribution_neutral", tau_z, tau_x,
                             z0=float(sol.z[index]))
    drift = np.max(np.abs(reform.liability_shift(sol)))
    if drift > 1e-12 * max(1.0, float(np.max(np.abs(sol.x)))):
        raise ValueError("bump reform is not distribution neutral (drift %.3g)"
                         % drift)
    return reform


def distribution_neutral_uniform(sol, *, slopes=None):
    """Uniform commodity-rate rise offset agent-by-agent (linear direction)."""
    s = cross_slopes(sol) if slopes is None else np.asarray(slopes, float)
    tau_z = _hermite_side(sol.z, -sol.x, -s)

    def tau_x(x):
        x = np.asarray(x, dtype=float)
        return x, np.ones_like(x)

    return ReformDirection("distribution_neutral", tau_z, tau_x)


def vertically_neutral_linear(sol, economy=None, *, slopes=None):
    """Uniform commodity-rate rise offset by the mean liability at each z."""
    econ = economy if economy is not None else sol.economy
    if not econ.multidimensional:
        return distribution_neutral_uniform(sol, slopes=slopes)
    nth = len(econ.theta_points)
    fth = econ.theta_weights
    z_cell = sol.z.reshape(-1, nth) @ fth
    x_cell = sol.x.reshape(-1, nth) @ fth
    s = cross_slopes(sol, econ) if slopes is None else np.asarray(slopes, float)
    tau_z = _hermite_side(z_cell, -x_cell, -s)

    def tau_x(x):
        x = np.asarray(x, dtype=float)
        return x, np.ones_like(x)

    return ReformDirection("vertically_neutral", tau_z, tau_x)


def custom_reform(tau_z, tau_x):
    return ReformDirection("custom", tau_z, tau_x)


def _lagrangian(sol, damage, lam):
    return (float(np.sum(sol.weights * sol.utility)) / lam
            - damage * sol.xbar + sol.revenue)


def _resolve(economy, sol0, reform, kappa):
    tzk = PerturbedSchedule(sol0.income_tax, reform.tau_z, kappa)
    txk = PerturbedSchedule(sol0.commodity_tax, reform.tau_x, kappa)
    try:
        return solve_core(economy.utility, sol0.w, sol0.theta, sol0.weights,
                          tzk, txk, warm_z=sol0.z, check=False)
    except CarbonTaxError as err:
        raise SolverFailureError(
            "agent re-solve failed at kappa=%g: %s" % (kappa, err)) from err


def reform_scale(reform, sol):
    """Per-capita gross commodity-liability shift per unit kappa."""
    scale = float(np.sum(sol.weights * np.abs(reform.tau_x(sol.x)[0])))
    if scale <= 0:
        scale = float(np.sum(sol.weights * np.abs(reform.tau_z(sol.z)[0])))
    return max(scale, 1e-300)


def welfare_gradient(economy, reform, damage, *, kappa=1e-4, solution=None):
    """Central-difference dL/dkappa, per dollar of liability shifted."""
    sol0 = solution if solution is not None else solve_all(economy)
    lam = sol0.mean_marginal_utility
    lp = _lagrangian(_resolve(economy, sol0, reform, +kappa), damage, lam)
    lm = _lagrangian(_resolve(economy, sol0, reform, -kappa), damage, lam)
    return (lp - lm) / (2.0 * kappa) / reform_scale(reform, sol0)


def augmented_weights(economy, sol, damage, profile=None):
    """Welfare weights g with the fiscal income-effect terms included.

    Pareto weights are uniform; lambda is the population-mean marginal
    utility; dx/dI comes from x'_inc via weak separability and dz/dI from
    the lump-sum extractor.
    """
    lam = sol.mean_marginal_utility
    mtr = sol.income_tax.evaluate(sol.z)[1]
    mx = sol.commodity_tax.evaluate(sol.x)[1]
    x_inc = stats.x_inc_profile(economy, sol)
    dz_di = stats.income_effect_z_profile(economy, sol)
    dx_di = x_inc / (1.0 - mtr)
    return (sol.uc / lam + (mx - damage) * dx_di
            + (mtr + (mx - damage) * x_inc) * dz_di)


def welfare_gradient_decomposed(economy, reform, damage, *, profile=None,
                                solution=None, kappa=1e-4):
    """Formula-side decomposition of a reform gradient, plus the direct one.

    Components follow the three compensated channels (income-tax revenue,
    the uninternalized direct consumption response, and the income-induced
    consumption response) plus the mechanical redistribution term; all are
    normalized like welfare_gradient so the sum is comparable to `direct`.
    """
    sol = solution if solution is not None else solve_all(economy)
    prof = profile if profile is not None else \
        stats.build_profile_from_economy(economy, solution=sol)
    z = prof.grid.points
    mx = sol.commodity_tax.evaluate(prof.xhat)[1]
    slope_x = reform.tau_x(prof.xhat)[1]
    wedge = mx - damage
    behav = z * prof.eps_z / (1.0 - prof.mtr) * prof.x_het * slope_x
    dw_z = prof.grid.expectation(prof.mtr * behav)
    dw_x_given_z = prof.grid.expectation(
        -wedge * prof.eps_x * prof.xhat / (1.0 + mx) * slope_x)
    dw_z_to_x = prof.grid.expectation(wedge * prof.x_inc * behav)

    g = augmented_weights(economy, sol, damage)
    mech = float(np.sum(sol.weights * (1.0 - g)
                        * reform.liability_shift(sol)))

    scale = reform_scale(reform, sol)
    direct = welfare_gradient(economy, reform, damage, kappa=kappa,
                              solution=sol)
    comp = {"dW_z": dw_z / scale,
            "dW_x_given_z": dw_x_given_z / scale,
            "dW_z_to_x": dw_z_to_x / scale,
            "mechanical": mech / scale}
    comp["formula_total"] = (comp["dW_z"] + comp["dW_x_given_z"]
                             + comp["dW_z_to_x"] + comp["mechanical"])
    comp["direct"] = direct
    return comp


def check_covariance_identities(economy, *, solution=None, damage=None):
    """Within-income covariance identities of the multidimensional case.

    Verifies C[x'_inc, x'_het | z] = -Var[x'_inc | z] cell by cell and
    reports the taxable-income-elasticity covariance correction (zero under
    the constant-ETI restriction the tractable formula assumes).
    """
    if not economy.multidimensional:
        raise ValueError("covariance identities need a theta grid")
    sol = solution if solution is not None else solve_all(economy)
    nth = len(economy.theta_points)
    fth = economy.theta_weights
    x_inc = stats.x_inc_profile(economy, sol).reshape(-1, nth)
    eps_z = stats.eps_z_profile(economy, sol).reshape(-1, nth)
    sp, sm = stats.cross_section_slope(economy, sol)
    xbar_slope = (((sp.x.reshape(-1, nth) @ fth)
                   - (sm.x.reshape(-1, nth) @ fth))
                  / ((sp.z.reshape(-1, nth) @ fth)
                     - (sm.z.reshape(-1, nth) @ fth)))
    x_het = xbar_slope[:, None] - x_inc

    mean_inc = x_inc @ fth
    mean_het = x_het @ fth
    cov = ((x_inc * x_het) @ fth) - mean_inc * mean_het
    var = ((x_inc ** 2) @ fth) - mean_inc ** 2
    gap = np.abs(cov + var) / np.maximum(np.abs(var), 1e-300)

    mean_eps = eps_z @ fth
    cov_eps_het = ((eps_z * x_het) @ fth) - mean_eps * mean_het
    z_cell = sol.z.reshape(-1, nth) @ fth
    mtr_cell = sol.income_tax.evaluate(z_cell)[1]
    correction = mtr_cell * z_cell / (1.0 - mtr_cell) * cov_eps_het

    return {"cov_inc_het": cov, "neg_var_inc": -var,
            "identity_rel_gap": gap,
            "max_identity_rel_gap": float(np.max(gap)) if np.any(var > 0)
            else float(np.max(np.abs(cov + var))),
            "cov_eps_z_het": cov_eps_het,
            "eti_covariance_correction": correction}


def pareto_probe(economy, damage, *, indices=None, kappas=(0.0, 1e-3, -1e-3,
                                                           1e-2, -1e-2),
                 solution=None):
    """Finite reforms around the status quo: revenue-net-of-externality gains
    and per-agent utility drift for each bump direction and kappa."""
    sol0 = solution if solution is not None else solve_all(economy)
    n = len(sol0.z)
    if indices is None:
        indices = np.unique(np.linspace(2, n - 3, 10).astype(int))
    lam = sol0.mean_marginal_utility
    base_net = sol0.revenue - damage * sol0.xbar
    slopes = cross_slopes(sol0, economy)
    rows = []
    for i in indices:
        reform = distribution_neutral_bump(sol0, int(i), slopes=slopes)
        scale = reform_scale(reform, sol0)
        for kappa in kappas:
            if kappa == 0.0:
                rows.append({"z0": reform.z0, "kappa": 0.0, "net_gain": 0.0,
                             "max_dv": 0.0, "min_dv": 0.0, "scale": scale})
                continue
            s = _resolve(economy, sol0, reform, kappa)
            dv = (s.utility - sol0.utility) / lam
            rows.append({"z0": reform.z0, "kappa": kappa,
                         "net_gain": (s.revenue - damage * s.xbar) - base_net,
                         "max_dv": float(np.max(dv)),
                         "min_dv": float(np.min(dv)),
                         "scale": scale})
    return rows


def displace_commodity_rate(sol, index, amount, *, width_cells=4):
    """Commodity tax with the marginal rate locally displaced by `amount`."""
    half = width_cells // 2
    tent = Bump(sol.x[index - half], sol.x[index], sol.x[index + half])

    def tau(x):
        return tent.value(x), tent.slope(x)

    return PerturbedSchedule(sol.commodity_tax, tau, float(amount))


@dataclass
class SelfConsistentResult:
    economy: object
    solution: object
    profile: object
    rates: np.ndarray
    iterations: int
    rate_change: float


def self_consistent_nonlinear(economy, damage, *, tol=1e-9, max_iter=60,
                              damping=1.0):
    """Iterate (extract statistics -> solve the nonlinear condition ->
    impose the implied schedule) to its fixed point.

    Sufficient statistics are evaluated at the status quo by convention, so
    the formula's output is only a stationary point of the true planner
    objective at a system that reproduces its own rates; this loop finds
    that system, seeding from the economy's current commodity tax.
    """
    econ = economy
    rates_prev = None
    warm = None
    for it in range(1, max_iter + 1):
        sol = solve_all(econ, warm_z=warm, check=(it == 1))
        prof = stats.build_profile_from_economy(econ, solution=sol)
        rates = solve_nonlinear(prof, damage).result
        if rates_prev is not None:
            change = float(np.max(np.abs(rates - rates_prev)))
            if change < tol:
                return SelfConsistentResult(econ, sol, prof, rates, it, change)
            rates = (1.0 - damping) * rates_prev + damping * rates
        tx_new = NonlinearCommodityTax.from_marginal_rates(prof.xhat, rates)
        econ = econ.with_taxes(commodity=tx_new)
        rates_prev = rates
        warm = sol.z
    raise NoConvergenceError("self-consistent schedule did not settle within "
                             "%d iterations" % max_iter)


def run_verification(economy, damage, *, stationarity=True):
    """Full oracle suite; returns (report dict, all-passed flag)."""
    checks = []

    def add(name, value, tol, ok):
        checks.append({"name": name, "value": float(value),
                       "tolerance": float(tol), "pass": bool(ok)})

    try:
        sol = solve_all(economy)
    except CarbonTaxError as err:
        checks.append({"name": "solve_economy", "value": float("nan"),
                       "tolerance": 0.0, "pass": False, "detail": str(err)})
        return {"checks": checks, "passed": False}, False

    res = max(float(np.max(np.abs(sol.inner_res))),
              float(np.max(np.abs(sol.outer_res))))
    add("foc_residuals", res, 1e-8, res < 1e-8)

    income = sol.z - sol.income_tax.evaluate(sol.z)[0]
    budget = np.max(np.abs(sol.c + sol.x
                           + sol.commodity_tax.evaluate(sol.x)[0] - income)
                    / income)
    add("budget_identity", budget, 1e-9, budget < 1e-9)

    env = _envelope_gap(economy, sol)
    add("envelope", env, 1e-2, env < 1e-2)

    gap = np.abs(stats.slutsky_gap(economy, sol)[0])
    share_ok = float(np.mean(gap <= 0.01))
    add("slutsky_within_1pct", share_ok, 0.95, share_ok >= 0.95)

    if economy.multidimensional:
        rep = check_covariance_identities(economy, solution=sol)
        add("covariance_identity", rep["max_identity_rel_gap"], 1e-12,
            rep["max_identity_rel_gap"] <= 1e-12)
    else:
        slope_dv = _utility_quadratic_slope(economy, sol, damage)
        add("dn_utility_order", slope_dv, 2.2,
            1.8 <= slope_dv <= 2.2)
        prof = stats.build_profile_from_economy(economy, solution=sol)
        if economy.utility.family == "separable_homogeneous":
            eta = float(np.max(np.abs(prof.eta_taste)))
            add("atkinson_stiglitz_eta_null", eta, 2e-3, eta < 2e-3)
        if stationarity:
            worst = _stationarity_gap(economy, sol, damage)
            add("pareto_stationarity", worst, 1e-5, worst < 1e-5)

    passed = all(c["pass"] for c in checks)
    return {"checks": checks, "passed": passed}, passed


def _envelope_gap(economy, sol):
    from .perturb import grant
    di = 1e-3 * (sol.z - sol.income_tax.evaluate(sol.z)[0])
    gaps = []
    for sign in (+1.0, -1.0):
        s = solve_core(economy.utility, sol.w, sol.theta, sol.weights,
                       grant(sol.income_tax, sign * di), sol.commodity_tax,
                       warm_z=sol.z, check=False)
        gaps.append((s.utility - sol.utility) / (sign * di))
    dv = 0.5 * (gaps[0] + gaps[1])
    return float(np.max(np.abs(dv / sol.uc - 1.0)))


def _utility_quadratic_slope(economy, sol, damage):
    n = len(sol.z)
    reform = distribution_neutral_bump(sol, n // 2)
    kaps = np.array([1e-3, 2e-3, 4e-3, 8e-3])
    drifts = []
    for k in kaps:
        s = _resolve(economy, sol, reform, k)
        drifts.append(np.max(np.abs(s.utility - sol.utility)))
    drifts = np.asarray(drifts)
    if np.any(drifts <= 0):
        return 2.0
    coef = np.polyfit(np.log(kaps), np.log(drifts), 1)
    return float(coef[0])


def _stationarity_gap(economy, sol, damage, *, slopes=None):
    n = len(sol.z)
    idx = np.unique(np.linspace(2, n - 3, 5).astype(int))
    s = cross_slopes(sol, economy) if slopes is None else slopes
    worst = abs(welfare_gradient(
        economy, distribution_neutral_uniform(sol, slopes=s), damage,
        solution=sol))
    for i in idx:
        g = welfare_gradient(
            economy, distribution_neutral_bump(sol, int(i), slopes=s),
            damage, solution=sol)
        worst = max(worst, abs(g))
    return worst
