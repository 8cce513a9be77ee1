"""Tax-schedule wrappers for perturbed re-solves.

Wrappers expose the same (evaluate, span) surface as the schedule classes, so
the agent solver is indifferent to whether it sees a base schedule, a local
tilt (compensated at a per-agent center), a lump-sum grant, or a kappa-scaled
reform direction. Centers may be arrays aligned with the agent axis, which is
what lets per-agent perturbations run inside one vectorized solve.
"""

import numpy as np


class PerturbedSchedule:
    """base + kappa * tau, where tau(y) -> (value, slope)."""

    def __init__(self, base, tau, kappa=1.0):
        self.base = base
        self.tau = tau
        self.kappa = float(kappa)

    @property
    def span(self):
        return self.base.span

    def evaluate(self, y):
        v, s = self.base.evaluate(y)
        tv, ts = self.tau(y)
        return v + self.kappa * tv, s + self.kappa * ts


def tilt(base, delta, center):
    """Marginal-rate tilt of size delta, revenue-neutral at center.

    Adds delta * (y - center) to the liability: the marginal rate shifts by
    delta everywhere while the liability at the agent's own pre-reform choice
    is unchanged (the compensated perturbation of the appendix definitions).
    """
    center = np.asarray(center, dtype=float)

    def tau(y):
        y = np.asarray(y, dtype=float)
        return y - center, np.ones_like(y)

    return PerturbedSchedule(base, tau, delta)


def grant(base, amount):
    """Lump-sum transfer: liability falls by amount, rates unchanged."""
    amount = np.asarray(amount, dtype=float)

    def tau(y):
        y = np.asarray(y, dtype=float)
        return -amount * np.ones_like(y), np.zeros_like(y)

    return PerturbedSchedule(base, tau, 1.0)
