"""Synthetic-economy ground truth: parametric utility, two-stage agent solves.

Utility is additively separable,

    u(c, x, z | w, theta) = psi(c; s_c) + a(w, theta) * psi(x; s_x)
                            - (z / w)^(1 + 1/e) / (1 + 1/e)

with psi(y; s) the CRRA subutility (linear at s=0, log at s=1) and taste
a(w, theta) = alpha0 * w^gamma * exp(theta). s_c = 0 gives the quasi-linear
family (no income effects on x; taxable-income elasticity exactly e under a
linear income tax); s_c = s_x = 1 gives constant expenditure shares
a / (1 + a), the homothetic benchmark with income effects.

Agents solve in two stages: the inner split of disposable income between c
and x, then the outer income choice via the reduced first-order condition
u_c * (1 - T'_z) = marginal labor disutility. Both stages are monotone root
problems and run vectorized across the whole type grid; roots are polished to
floating-point bracket width so downstream finite differences sit far above
solver noise.
"""

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .errors import (MultipleOptimaError, NoInteriorSolutionError,
                     NonConcaveError, NonMonotoneError)
from .roots import bracketed_root
from .schedules import TaxSystem
from .serialize import dump_json, load_json

SEPARABLE = "separable_homogeneous"
TASTE_SHIFTED = "taste_shifted"

_C_FLOOR = 1e-290


def crra(y, sigma):
    """CRRA subutility, continuous in sigma (log at sigma=1, linear at 0)."""
    y = np.asarray(y, dtype=float)
    if sigma == 0.0:
        return y
    if sigma == 1.0:
        return np.log(y)
    return (y ** (1.0 - sigma) - 1.0) / (1.0 - sigma)


def crra_prime(y, sigma):
    y = np.asarray(y, dtype=float)
    if sigma == 0.0:
        return np.ones_like(y)
    return y ** (-sigma)


@dataclass(frozen=True)
class UtilityParams:
    """Preference parameters for the parametric family above."""

    family: str
    labor_elasticity: float
    alpha0: float
    gamma: float = 0.0
    curvature_x: float = 1.0
    curvature_c: float = 0.0

    def __post_init__(self):
        if self.family not in (SEPARABLE, TASTE_SHIFTED):
            raise ValueError("unknown utility family %r" % self.family)
        if self.labor_elasticity <= 0:
            raise ValueError("labor elasticity must be positive")
        if self.alpha0 < 0:
            raise ValueError("taste scale must be nonnegative")
        if self.curvature_x <= 0:
            raise ValueError("x-subutility curvature must be positive")
        if self.curvature_c < 0:
            raise ValueError("c-subutility curvature must be nonnegative")
        if self.family == SEPARABLE and self.gamma != 0.0:
            raise ValueError("separable-homogeneous preferences force a "
                             "constant taste (gamma = 0)")
        self._probe_concavity()

    def taste(self, w, theta=0.0):
        """Taste scale alpha(w, theta) on the x-subutility."""
        w = np.asarray(w, dtype=float)
        if self.family == SEPARABLE:
            return self.alpha0 * np.ones_like(w)
        return self.alpha0 * w ** self.gamma * np.exp(np.asarray(theta, dtype=float))

    def labor_disutility(self, z, w):
        p = 1.0 + 1.0 / self.labor_elasticity
        return (np.asarray(z, dtype=float) / w) ** p / p

    def labor_marginal(self, z, w):
        return (np.asarray(z, dtype=float) / w) ** (1.0 / self.labor_elasticity) / w

    def value(self, c, x, z, w, theta=0.0):
        a = self.taste(w, theta)
        x = np.asarray(x, dtype=float)
        sub = np.where(a > 0,
                       a * crra(np.maximum(x, _C_FLOOR), self.curvature_x),
                       0.0)
        return crra(c, self.curvature_c) + sub - self.labor_disutility(z, w)

    def _probe_concavity(self):
        # second differences of each piece on a crude probe grid
        h = 1e-4
        for y in (0.5, 1.0, 3.0):
            if self.curvature_c > 0:
                d2 = (crra(y + h, self.curvature_c) - 2 * crra(y, self.curvature_c)
                      + crra(y - h, self.curvature_c))
                if d2 >= 0:
                    raise NonConcaveError("consumption subutility not concave")
            d2 = (crra(y + h, self.curvature_x) - 2 * crra(y, self.curvature_x)
                  + crra(y - h, self.curvature_x))
            if d2 >= 0:
                raise NonConcaveError("x subutility not concave")
            d2 = (self.labor_disutility(y + h, 1.0)
                  - 2 * self.labor_disutility(y, 1.0)
                  + self.labor_disutility(y - h, 1.0))
            if d2 <= 0:
                raise NonConcaveError("labor disutility not convex")

    def to_json(self):
        return {"family": self.family,
                "labor_elasticity": self.labor_elasticity,
                "alpha0": self.alpha0, "gamma": self.gamma,
                "curvature_x": self.curvature_x,
                "curvature_c": self.curvature_c}

    @classmethod
    def from_json(cls, obj):
        return cls(obj["family"], obj["labor_elasticity"], obj["alpha0"],
                   obj.get("gamma", 0.0), obj.get("curvature_x", 1.0),
                   obj.get("curvature_c", 0.0))


@dataclass(frozen=True)
class SyntheticEconomy:
    """Type grid, preferences, and the status-quo tax system."""

    w_points: np.ndarray
    w_weights: np.ndarray
    utility: UtilityParams
    tax: TaxSystem
    theta_points: Optional[np.ndarray] = None
    theta_weights: Optional[np.ndarray] = None

    def __post_init__(self):
        w = np.asarray(self.w_points, dtype=float)
        fw = np.asarray(self.w_weights, dtype=float)
        object.__setattr__(self, "w_points", w)
        object.__setattr__(self, "w_weights", fw)
        if not np.all(np.diff(w) > 0) or w[0] <= 0:
            raise ValueError("w grid must be strictly increasing and positive")
        if np.any(fw < 0) or abs(fw.sum() - 1.0) > 1e-12:
            raise ValueError("w weights must be nonnegative and sum to 1")
        if self.theta_points is not None:
            th = np.asarray(self.theta_points, dtype=float)
            fth = np.asarray(self.theta_weights, dtype=float)
            object.__setattr__(self, "theta_points", th)
            object.__setattr__(self, "theta_weights", fth)
            if np.any(fth < 0) or abs(fth.sum() - 1.0) > 1e-12:
                raise ValueError("theta weights must be nonnegative, sum to 1")

    @property
    def multidimensional(self):
        return self.theta_points is not None

    def agents(self):
        """Arrays (w, theta, weight) enumerating all types, w-major."""
        if self.theta_points is None:
            n = len(self.w_points)
            return self.w_points, np.zeros(n), self.w_weights.copy()
        w = np.repeat(self.w_points, len(self.theta_points))
        th = np.tile(self.theta_points, len(self.w_points))
        f = (np.repeat(self.w_weights, len(self.theta_points))
             * np.tile(self.theta_weights, len(self.w_points)))
        return w, th, f

    def with_taxes(self, income=None, commodity=None):
        tax = TaxSystem(income if income is not None else self.tax.income,
                        commodity if commodity is not None else self.tax.commodity)
        return replace(self, tax=tax)

    def to_json(self):
        obj = {"w_grid": {"points": list(map(float, self.w_points)),
                          "weights": list(map(float, self.w_weights))},
               "theta_grid": None,
               "utility": self.utility.to_json()}
        obj.update(self.tax.to_json())
        if self.theta_points is not None:
            obj["theta_grid"] = {"points": list(map(float, self.theta_points)),
                                 "weights": list(map(float, self.theta_weights))}
        return obj

    @classmethod
    def from_json(cls, obj):
        theta_p = theta_w = None
        if obj.get("theta_grid"):
            theta_p = obj["theta_grid"]["points"]
            theta_w = obj["theta_grid"]["weights"]
        return cls(obj["w_grid"]["points"], obj["w_grid"]["weights"],
                   UtilityParams.from_json(obj["utility"]),
                   TaxSystem.from_json(obj), theta_p, theta_w)

    def save(self, path):
        dump_json(self.to_json(), path)

    @classmethod
    def load(cls, path):
        return cls.from_json(load_json(path))


@dataclass(frozen=True)
class AgentChoice:
    """One solved agent with its first-order-condition residuals."""

    w: float
    theta: float
    z: float
    x: float
    c: float
    inner_foc_residual: float
    outer_foc_residual: float
    utility: float


class EconomySolution:
    """Vectorized solution of every agent under one tax system."""

    def __init__(self, economy, income_tax, commodity_tax, w, theta, weights,
                 alpha, z, x, c, uc, utility, inner_res, outer_res):
        self.economy = economy
        self.income_tax = income_tax
        self.commodity_tax = commodity_tax
        self.w = w
        self.theta = theta
        self.weights = weights
        self.alpha = alpha
        self.z = z
        self.x = x
        self.c = c
        self.uc = uc
        self.utility = utility
        self.inner_res = inner_res
        self.outer_res = outer_res

    @property
    def revenue(self):
        tz = self.income_tax.evaluate(self.z)[0]
        tx = self.commodity_tax.evaluate(self.x)[0]
        return float(np.sum(self.weights * (tz + tx)))

    @property
    def xbar(self):
        return float(np.sum(self.weights * self.x))

    @property
    def mean_marginal_utility(self):
        return float(np.sum(self.weights * self.uc))

    def choice(self, i):
        return AgentChoice(float(self.w[i]), float(self.theta[i]),
                           float(self.z[i]), float(self.x[i]), float(self.c[i]),
                           float(self.inner_res[i]), float(self.outer_res[i]),
                           float(self.utility[i]))


def _solve_inner_arrays(util, alpha, income, commodity_tax, *,
                        allow_infeasible=False):
    """Solve the inner stage elementwise; shapes broadcast over agents.

    With allow_infeasible=True (used while scanning candidate incomes),
    elements with nonpositive budgets get x = 0 and a negative c instead of
    raising, so the outer objective can still be signed there.
    """
    alpha = np.asarray(alpha, dtype=float)
    income = np.asarray(income, dtype=float)
    shape = np.broadcast_shapes(alpha.shape, income.shape)
    alpha = np.broadcast_to(alpha, shape)
    income = np.broadcast_to(income, shape)

    feasible = income > 0
    if not allow_infeasible and not np.all(feasible):
        raise NoInteriorSolutionError("nonpositive disposable income")
    active = (alpha > 0) & feasible
    income_safe = np.where(feasible, income, 1.0)

    x = np.zeros(shape)
    tx = np.zeros(shape)
    if np.any(active):
        sc, sx = util.curvature_c, util.curvature_x
        la = np.log(np.where(active, alpha, 1.0))
        lo_tax, hi_tax = commodity_tax.span
        lo = np.maximum(lo_tax * (1 + 1e-14), 1e-13 * income_safe)
        hi = np.minimum(hi_tax, 20.0 * income_safe) * np.ones(shape)

        def gap(xv):
            xv = np.maximum(xv, _C_FLOOR)
            txv, mxv = commodity_tax.evaluate(xv)
            c_eff = np.maximum(income_safe - xv - txv, _C_FLOOR)
            return la - sx * np.log(xv) + sc * np.log(c_eff) - np.log1p(mxv)

        glo = gap(lo)
        ghi = gap(hi)
        low_corner = active & (glo <= 0)
        high_corner = active & (ghi >= 0)
        if not allow_infeasible and (np.any(low_corner) or np.any(high_corner)):
            raise NoInteriorSolutionError(
                "inner first-order condition has no root inside the budget")
        solve = active & ~low_corner & ~high_corner

        lo_all = np.where(solve, lo, 1.0)
        hi_all = np.where(solve, hi, 2.0)

        def gap_masked(xv):
            g = gap(np.where(solve, xv, 1.5))
            return np.where(solve, g, 1.5 - xv)

        root = bracketed_root(gap_masked, lo_all, hi_all)
        x = np.where(solve, root, 0.0)
        x = np.where(low_corner, lo, x)
        x = np.where(high_corner, hi, x)
        x_eval = np.where(active, x, 0.5 * (lo + hi))
        tx = np.where(active, commodity_tax.evaluate(x_eval)[0], 0.0)

    c = income - x - tx
    if not allow_infeasible and np.any(c <= 0):
        raise NoInteriorSolutionError("numeraire consumption nonpositive at "
                                      "the inner optimum")
    return x, c


def _inner_residual(util, alpha, x, c, commodity_tax):
    alpha = np.asarray(alpha, dtype=float)
    res = np.zeros_like(alpha)
    active = alpha > 0
    if np.any(active):
        xa = np.where(active, x, 1.0)
        mx = commodity_tax.evaluate(xa)[1]
        ux = alpha * crra_prime(xa, util.curvature_x)
        uc = crra_prime(c, util.curvature_c)
        res = np.where(active, ux / uc / (1.0 + mx) - 1.0, 0.0)
    return res


def solve_all(economy, income_tax=None, commodity_tax=None, *,
              warm_z=None, check=True, scan_points=65):
    """Solve every agent; returns an EconomySolution.

    income_tax / commodity_tax override the economy's own schedules (used for
    perturbed re-solves) and must expose evaluate() and span.
    """
    tz = income_tax if income_tax is not None else economy.tax.income
    txx = commodity_tax if commodity_tax is not None else economy.tax.commodity
    w, theta, weights = economy.agents()
    n_theta = 1 if economy.theta_points is None else len(economy.theta_points)
    return solve_core(economy.utility, w, theta, weights, tz, txx,
                      n_theta=n_theta, warm_z=warm_z, check=check,
                      scan_points=scan_points, economy=economy)


def solve_core(util, w, theta, weights, income_tax, commodity_tax, *,
               n_theta=1, warm_z=None, check=True, scan_points=65,
               economy=None):
    """Solve an explicit array of types under explicit schedules."""
    tz, txx = income_tax, commodity_tax
    w = np.asarray(w, dtype=float)
    theta = np.asarray(theta, dtype=float)
    weights = np.asarray(weights, dtype=float)
    alpha = util.taste(w, theta)
    n = len(w)
    sc = util.curvature_c

    quasilinear = sc == 0.0
    if quasilinear:
        # inner choice is income-independent; solve once per agent
        x_fixed, _ = _solve_inner_arrays(util, alpha, np.full(n, 1e12), txx)
        tx_fixed = np.where(alpha > 0, commodity_tax_liability(txx, x_fixed, alpha), 0.0)

    def consumption(z):
        income = z - tz.evaluate(z)[0]
        if quasilinear:
            x = np.broadcast_to(x_fixed, income.shape)
            return x, income - x - np.broadcast_to(tx_fixed, income.shape)
        return _solve_inner_arrays(util, alpha, income, txx,
                                   allow_infeasible=True)

    def outer_gap(z):
        mz = tz.evaluate(z)[1]
        _, c = consumption(z)
        c_eff = np.maximum(c, _C_FLOOR)
        return (np.log1p(-mz) - sc * np.log(c_eff)
                - np.log(util.labor_marginal(z, w)))

    lo_span, hi_span = tz.span
    lo_b = np.maximum(lo_span * (1 + 1e-12), 1e-9 * w)
    hi_b = np.full(n, hi_span * (1 - 1e-12))

    if warm_z is not None:
        a = np.maximum(lo_b, 0.85 * warm_z)
        b = np.minimum(hi_b, 1.18 * warm_z)
        ga, gb = outer_gap(a), outer_gap(b)
        if np.all(ga > 0) and np.all(gb < 0):
            z = bracketed_root(outer_gap, a, b)
            return _finalize(economy, util, tz, txx, w, theta, weights, alpha,
                             z, n_theta=n_theta, check=False)

    # dense sign scan over the full evaluable span
    ratio = np.geomspace(1.0, hi_b[0] / lo_b.min(), scan_points)
    zcand = np.minimum(lo_b[None, :] * ratio[:, None], hi_b[None, :])
    g = outer_gap(zcand)
    pos_to_neg = (g[:-1] > 0) & (g[1:] <= 0)
    counts = pos_to_neg.sum(axis=0)
    if np.any(counts == 0):
        bad = np.where(counts == 0)[0]
        raise NoInteriorSolutionError(
            "no interior income choice for agents %s (objective has no sign "
            "change on the schedule span)" % bad.tolist())

    first = np.argmax(pos_to_neg, axis=0)
    a = np.take_along_axis(zcand, first[None, :], axis=0)[0]
    b = np.take_along_axis(zcand, first[None, :] + 1, axis=0)[0]
    z = bracketed_root(outer_gap, a, b)

    if np.any(counts > 1):
        z = _resolve_multimodal(util, w, theta, alpha, z, zcand, pos_to_neg,
                                counts, outer_gap, consumption)

    return _finalize(economy, util, tz, txx, w, theta, weights, alpha, z,
                     n_theta=n_theta, check=check)


def commodity_tax_liability(tax, x, alpha):
    xa = np.where(np.asarray(alpha) > 0, x, np.maximum(tax.span[0], 1e-12))
    return tax.evaluate(xa)[0]


def _resolve_multimodal(util, w, theta, alpha, z, zcand, pos_to_neg, counts,
                        outer_gap, consumption):
    z = z.copy()
    for i in np.where(counts > 1)[0]:
        rows = np.where(pos_to_neg[:, i])[0]
        cands, values = [], []
        for r in rows:
            sub = bracketed_root(lambda zz: outer_gap(zz),
                                 _embed(zcand[r, i], z, i),
                                 _embed(zcand[r + 1, i], z, i))
            zi = float(sub[i])
            xi, ci = consumption(_embed(zi, z, i))
            vi = float(util.value(ci[i], xi[i], zi, w[i], theta[i]))
            cands.append(zi)
            values.append(vi)
        order = np.argsort(values)[::-1]
        gap = values[order[0]] - values[order[1]]
        if gap < 1e-6 * (1.0 + abs(values[order[0]])):
            raise MultipleOptimaError(
                "agent %d has two near-tied local optima (value gap %.3g); "
                "the tax schedule violates the regularity assumptions" % (i, gap))
        z[i] = cands[order[0]]
    return z


def _embed(value, template, i):
    out = template.copy()
    out[i] = value
    return out


def _finalize(economy, util, tz, txx, w, theta, weights, alpha, z, *,
              n_theta, check):
    income = z - tz.evaluate(z)[0]
    x, c = _solve_inner_arrays(util, alpha, income, txx)
    uc = crra_prime(c, util.curvature_c)
    mz = tz.evaluate(z)[1]
    outer_res = (1.0 - mz) * uc / util.labor_marginal(z, w) - 1.0
    inner_res = _inner_residual(util, alpha, x, c, txx)
    utility = util.value(c, x, z, w, theta)

    if check:
        zmat = z.reshape(-1, n_theta)
        if len(zmat) > 1 and np.any(np.diff(zmat, axis=0) <= 0):
            raise NonMonotoneError("solved z(w) is not strictly increasing "
                                   "in w at every theta")
        _second_order_probe(util, w, theta, alpha, z, tz, txx)

    return EconomySolution(economy, tz, txx, w, theta, weights, alpha,
                           z, x, c, uc, utility, inner_res, outer_res)


def _second_order_probe(util, w, theta, alpha, z, tz, txx):
    lo, hi = tz.span
    h = np.maximum(np.minimum(1e-4 * z, 0.5 * np.minimum(z - lo, hi - z)), 0.0)
    vals = []
    for dz in (-h, 0.0 * h, h):
        zz = z + dz
        income = zz - tz.evaluate(zz)[0]
        x, c = _solve_inner_arrays(util, alpha, income, txx)
        vals.append(util.value(c, x, zz, w, theta))
    d2 = vals[0] + vals[2] - 2.0 * vals[1]
    if np.any((d2 >= 0) & (h > 0)):
        raise NonConcaveError("outer objective not locally concave at the "
                              "solved income for agents %s"
                              % np.where((d2 >= 0) & (h > 0))[0].tolist())


def solve_inner(economy, w, theta, z):
    """Inner-stage split of disposable income at fixed z. Returns (x, c)."""
    util = economy.utility
    income = float(z) - float(economy.tax.income.evaluate(float(z))[0])
    if income <= 0:
        raise NoInteriorSolutionError("zero disposable income at z=%g" % z)
    alpha = float(util.taste(w, theta))
    x, c = _solve_inner_arrays(util, np.array([alpha]), np.array([income]),
                               economy.tax.commodity)
    _inner_second_order(util, alpha, income, float(x[0]), economy.tax.commodity)
    return float(x[0]), float(c[0])


def _inner_second_order(util, alpha, income, x, commodity_tax):
    if alpha <= 0 or x <= 0:
        return
    h = 1e-5 * x
    vals = []
    for xx in (x - h, x, x + h):
        tx = commodity_tax.evaluate(xx)[0]
        vals.append(float(crra(income - xx - tx, util.curvature_c)
                          + alpha * crra(xx, util.curvature_x)))
    if vals[0] + vals[2] - 2.0 * vals[1] > 0:
        raise NonConcaveError("inner objective not concave at the optimum")


def solve_agent(economy, w, theta=0.0):
    """Solve one agent's full problem; returns an AgentChoice."""
    one = SyntheticEconomy(np.array([float(w)]), np.array([1.0]),
                           economy.utility, economy.tax,
                           np.array([float(theta)]), np.array([1.0]))
    return solve_all(one, check=True).choice(0)


def aggregate(economy, solution):
    """Revenue, mean dirty-good consumption, and per-agent welfare terms."""
    welfare_terms = {"utility": solution.utility.copy(),
                     "weights": solution.weights.copy(),
                     "marginal_utility": solution.uc.copy()}
    return solution.revenue, solution.xbar, welfare_terms
