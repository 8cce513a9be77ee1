"""Core domain types: income grids, tax schedules, damage calibration.

Tax schedules are monotone cubic (PCHIP) interpolants. The income tax is
fitted to the after-tax mapping z - T_z(z) and a nonlinear commodity tax to
the total-cost mapping x + T_x(x); shape preservation of the monotone fit
then bounds the marginal rates (T'_z < 1, 1 + T'_x > 0) everywhere on the
span, not just at the knots. Extrapolation raises instead of guessing.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import PchipInterpolator

from .errors import OutOfRangeError
from .serialize import dump_json, load_json


def trapz_weights(points):
    """Trapezoid quadrature weights for an irregular 1-D grid."""
    points = np.asarray(points, dtype=float)
    w = np.zeros_like(points)
    w[1:] += 0.5 * np.diff(points)
    w[:-1] += 0.5 * np.diff(points)
    return w


def cumtrapz0(values, points):
    """Cumulative trapezoid integral starting at zero."""
    values = np.asarray(values, dtype=float)
    points = np.asarray(points, dtype=float)
    out = np.zeros_like(values)
    out[1:] = np.cumsum(0.5 * (values[1:] + values[:-1]) * np.diff(points))
    return out


@dataclass(frozen=True)
class IncomeGrid:
    """Strictly increasing income abscissae with density and cdf.

    The grid is treated as a self-contained truncated support: the density
    integrates to one over the span and the cdf runs from cdf[0] to cdf[-1]
    consistently with it.
    """

    points: np.ndarray
    density: np.ndarray
    cdf: np.ndarray

    def __post_init__(self):
        points = np.asarray(self.points, dtype=float)
        density = np.asarray(self.density, dtype=float)
        cdf = np.asarray(self.cdf, dtype=float)
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "density", density)
        object.__setattr__(self, "cdf", cdf)
        if points.ndim != 1 or len(points) < 2:
            raise ValueError("grid needs at least two points")
        if not np.all(np.diff(points) > 0) or points[0] <= 0:
            raise ValueError("grid points must be strictly increasing and > 0")
        if np.any(density < 0):
            raise ValueError("density must be nonnegative")
        mass = float(np.trapezoid(density, points))
        if abs(mass - 1.0) > 1e-6:
            raise ValueError("density mass %.9f not within 1e-6 of 1" % mass)
        if np.any(np.diff(cdf) < 0) or cdf[0] < -1e-15 or cdf[-1] > 1 + 1e-12:
            raise ValueError("cdf must be nondecreasing within [0, 1]")
        recon = cdf[0] + cumtrapz0(density, points)
        if np.max(np.abs(recon - cdf)) > 1e-6:
            raise ValueError("cdf inconsistent with density under trapezoids")

    @classmethod
    def from_density(cls, points, raw_density):
        """Normalize a raw density to unit mass and integrate the cdf."""
        points = np.asarray(points, dtype=float)
        raw = np.asarray(raw_density, dtype=float)
        mass = np.trapezoid(raw, points)
        if mass <= 0:
            raise ValueError("raw density has no mass")
        density = raw / mass
        return cls(points, density, cumtrapz0(density, points))

    def expectation(self, values):
        """Density-weighted trapezoid integral of a gridded function."""
        return float(np.trapezoid(np.asarray(values, dtype=float) * self.density,
                                  self.points))

    def same_grid(self, other, tol=0.0):
        if len(self.points) != len(other.points):
            return False
        return np.max(np.abs(self.points - other.points)) <= tol


class IncomeTaxSchedule:
    """Nonlinear income tax defined by liability knots (z, T_z(z))."""

    def __init__(self, knots):
        knots = np.asarray(knots, dtype=float)
        if knots.ndim != 2 or knots.shape[1] != 2 or knots.shape[0] < 2:
            raise ValueError("need at least two (z, T_z) knots")
        z = knots[:, 0]
        t = knots[:, 1]
        if not np.all(np.diff(z) > 0):
            raise ValueError("knot abscissae must be strictly increasing")
        after = z - t
        if not np.all(np.diff(after) > 0):
            raise ValueError("after-tax income must be strictly increasing "
                             "(T'_z < 1 between knots)")
        self.knots = knots
        self._after = PchipInterpolator(z, after, extrapolate=False)
        self._after_d = self._after.derivative()
        self.lo = float(z[0])
        self.hi = float(z[-1])

    @property
    def span(self):
        return self.lo, self.hi

    def _check(self, z):
        z = np.asarray(z, dtype=float)
        if np.any(z < self.lo) or np.any(z > self.hi):
            raise OutOfRangeError(
                "income %s outside schedule span [%g, %g]"
                % (np.min(z) if np.any(z < self.lo) else np.max(z), self.lo, self.hi))
        return z

    def evaluate(self, z):
        """Return (liability T_z(z), marginal rate T'_z(z))."""
        z = self._check(z)
        return z - self._after(z), 1.0 - self._after_d(z)

    def liability(self, z):
        return self.evaluate(z)[0]

    def marginal_rate(self, z):
        z = self._check(z)
        return 1.0 - self._after_d(z)

    def to_json(self):
        return {"knots": [[float(a), float(b)] for a, b in self.knots]}

    @classmethod
    def from_json(cls, obj):
        return cls(obj["knots"])


class LinearCommodityTax:
    """Flat ad-valorem tax: liability t_x * x."""

    kind = "linear"

    def __init__(self, rate):
        rate = float(rate)
        if rate <= -1.0:
            raise ValueError("linear rate must exceed -1")
        self.rate = rate

    @property
    def span(self):
        return 0.0, np.inf

    def evaluate(self, x):
        x = np.asarray(x, dtype=float)
        return self.rate * x, np.full_like(x, self.rate)

    def to_json(self):
        return {"kind": "linear", "rate": self.rate}


class NonlinearCommodityTax:
    """Nonlinear commodity tax, stored as a monotone total-cost interpolant."""

    kind = "nonlinear"

    def __init__(self, knots):
        knots = np.asarray(knots, dtype=float)
        if knots.ndim != 2 or knots.shape[1] != 2 or knots.shape[0] < 2:
            raise ValueError("need at least two (x, T_x) knots")
        x = knots[:, 0]
        t = knots[:, 1]
        if not np.all(np.diff(x) > 0):
            raise ValueError("knot abscissae must be strictly increasing")
        cost = x + t
        if not np.all(np.diff(cost) > 0):
            raise ValueError("total cost x + T_x must be strictly increasing "
                             "(1 + T'_x > 0 between knots)")
        self.knots = knots
        self._cost = PchipInterpolator(x, cost, extrapolate=False)
        self._cost_d = self._cost.derivative()
        self.lo = float(x[0])
        self.hi = float(x[-1])

    @classmethod
    def from_marginal_rates(cls, x_points, rates, pad=0.5):
        """Build from a marginal-rate curve.

        The rate curve is extended flat below the first and above the last
        support point (padding fraction of the span), then integrated so that
        T_x(lo) anchors at rate[0] * lo. Knots are sampled densely from the
        integral so the stored interpolant reproduces it closely.
        """
        x_points = np.asarray(x_points, dtype=float)
        rates = np.asarray(rates, dtype=float)
        if np.any(rates <= -1.0):
            raise ValueError("marginal rates must exceed -1")
        lo = x_points[0] * (1.0 - pad)
        hi = x_points[-1] * (1.0 + pad)
        xs = np.concatenate(([max(lo, 1e-9 * x_points[0])], x_points, [hi]))
        rs = np.concatenate(([rates[0]], rates, [rates[-1]]))
        rate_poly = PchipInterpolator(xs, rs, extrapolate=False)
        value_poly = rate_poly.antiderivative()
        dense = np.geomspace(xs[0], xs[-1], max(64, 8 * len(xs)))
        dense[0], dense[-1] = xs[0], xs[-1]
        liab = value_poly(dense) + rates[0] * xs[0]
        obj = cls.__new__(cls)
        obj.knots = np.column_stack([dense, liab])
        obj._cost = None
        obj._rate_poly = rate_poly
        obj._value_offset = rates[0] * xs[0]
        obj._value_poly = value_poly
        obj.lo = float(xs[0])
        obj.hi = float(xs[-1])
        return obj

    @property
    def span(self):
        return self.lo, self.hi

    def _check(self, x):
        x = np.asarray(x, dtype=float)
        if np.any(x < self.lo) or np.any(x > self.hi):
            raise OutOfRangeError(
                "consumption %s outside schedule span [%g, %g]"
                % (np.min(x) if np.any(x < self.lo) else np.max(x), self.lo, self.hi))
        return x

    def evaluate(self, x):
        """Return (liability T_x(x), marginal rate T'_x(x))."""
        x = self._check(x)
        if self._cost is not None:
            return self._cost(x) - x, self._cost_d(x) - 1.0
        return self._value_poly(x) + self._value_offset, self._rate_poly(x)

    def to_json(self):
        return {"kind": "nonlinear",
                "knots": [[float(a), float(b)] for a, b in self.knots]}


def commodity_tax_from_json(obj):
    if obj["kind"] == "linear":
        return LinearCommodityTax(obj["rate"])
    if obj["kind"] == "nonlinear":
        return NonlinearCommodityTax(obj["knots"])
    raise ValueError("unknown commodity tax kind %r" % obj["kind"])


@dataclass(frozen=True)
class TaxSystem:
    """Income tax schedule paired with a commodity tax."""

    income: IncomeTaxSchedule
    commodity: object  # LinearCommodityTax | NonlinearCommodityTax

    def to_json(self):
        return {"income_tax": self.income.to_json(),
                "commodity_tax": self.commodity.to_json()}

    @classmethod
    def from_json(cls, obj):
        return cls(IncomeTaxSchedule.from_json(obj["income_tax"]),
                   commodity_tax_from_json(obj["commodity_tax"]))


@dataclass(frozen=True)
class DamageCalibration:
    """Social cost of carbon translated into marginal damage per dollar."""

    scc_usd_per_ton: float
    kg_per_dollar: float
    lambda_norm: float = 1.0

    def __post_init__(self):
        if self.scc_usd_per_ton < 0 or self.kg_per_dollar < 0:
            raise ValueError("scc and emission intensity must be nonnegative")
        if self.lambda_norm <= 0:
            raise ValueError("lambda_norm must be positive")

    def to_json(self):
        return {"scc_usd_per_ton": float(self.scc_usd_per_ton),
                "kg_per_dollar": float(self.kg_per_dollar),
                "lambda_norm": float(self.lambda_norm)}

    @classmethod
    def from_json(cls, obj):
        return cls(obj["scc_usd_per_ton"], obj["kg_per_dollar"],
                   obj.get("lambda_norm", 1.0))

    def save(self, path):
        dump_json(self.to_json(), path)

    @classmethod
    def load(cls, path):
        return cls.from_json(load_json(path))


def pigouvian_rate(cal):
    """Marginal damage per dollar of expenditure, D'(xbar)/lambda.

    scc is quoted per metric ton, the intensity per kg, hence the /1000.
    """
    return (cal.scc_usd_per_ton / 1000.0) * cal.kg_per_dollar / cal.lambda_norm


def eval_income_tax(schedule, z):
    """Liability and marginal rate of the income tax at z."""
    t, m = schedule.evaluate(z)
    if np.ndim(z) == 0:
        return float(t), float(m)
    return t, m


def eval_commodity_tax(tax, x):
    """Liability and marginal rate of the commodity tax at x."""
    if np.ndim(x) == 0 and float(x) < 0:
        raise ValueError("consumption must be nonnegative")
    t, m = tax.evaluate(x)
    if np.ndim(x) == 0:
        return float(t), float(m)
    return t, m
