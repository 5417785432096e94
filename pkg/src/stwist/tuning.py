"""Gain selection against a prescribed amplitude target.

Given L, T and a target eta, find gains with |W1(k1, k2) - eta| <= eps
subject to the limit-cycle conditions, k1 > sqrt(2(L - k2)), 0 < k2 < L
and saturation limits on both gains.  W1 decreases in both gains, so the
acceptable region {W1 <= eta} is bounded below by a curve; among acceptable
gains the smallest k2 wins (less chatter), then the smallest k1 (less
control effort).
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, replace
from typing import Optional

import numpy as np

from .analysis import (Scenario, check_limit_cycle_gains, check_w1_bound_gain,
                       simulate, w1_tuning_bound)
from .errors import ConfigurationError
from .fields import FINITE_TIME_K1_FACTOR, Gains

# k1 > sqrt(2(L-k2)) is strict; candidates keep this relative margin
_STRICT_MARGIN = 1e-9
_BISECT_ITERS = 200


@dataclass(frozen=True)
class TuningProblem:
    """Inputs of the gain search.

    ``k1_max`` defaults to 20 sqrt(L); ``k2_max_fraction`` caps k2 at that
    fraction of L (0.55 = half of the finite-time reference 1.1 L).
    ``k2_min_fraction`` is the lower edge of the k2 search grid.
    """

    L: float
    T: float
    eta: float
    eps: float = 1e-3
    n_fraction: float = 0.5
    k1_max: Optional[float] = None
    k2_max_fraction: float = 0.55
    k2_min_fraction: float = 0.01
    q_bar: float = 0.0
    grid_size: int = 50

    def __post_init__(self):
        for name in ("L", "T", "eta", "eps"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise ConfigurationError(f"must be a positive number, got {v!r}", name)
        if not 0 < self.n_fraction <= 0.5:
            raise ConfigurationError("must lie in (0, 1/2]", "n_fraction")
        if not 0 < self.k2_max_fraction < 1:
            raise ConfigurationError("must lie in (0, 1)", "k2_max_fraction")
        if not 0 < self.k2_min_fraction <= self.k2_max_fraction:
            raise ConfigurationError("must lie in (0, k2_max_fraction]", "k2_min_fraction")
        if self.k1_max is None:
            object.__setattr__(self, "k1_max", 20.0 * math.sqrt(self.L))
        if not self.k1_max > 0:
            raise ConfigurationError("must be positive", "k1_max")
        if self.grid_size < 2:
            raise ConfigurationError("must be at least 2", "grid_size")

    @property
    def k2_max(self):
        return self.k2_max_fraction * self.L

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, data):
        if not isinstance(data, dict):
            raise ConfigurationError("expected a JSON object", "problem")
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known - {"schema_version", "validate", "delta"}
        if unknown:
            raise ConfigurationError("unknown field", sorted(unknown)[0])
        for key in ("L", "T", "eta"):
            if key not in data:
                raise ConfigurationError("missing", key)
        kwargs = {}
        for key in known & set(data):
            v = data[key]
            if v is None and key == "k1_max":
                continue
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise ConfigurationError(f"expected a number, got {v!r}", key)
            kwargs[key] = int(v) if key == "grid_size" else float(v)
        return cls(**kwargs)


@dataclass(frozen=True)
class TuningResult:
    gains: Optional[Gains]
    W1: Optional[float]
    constraints: dict
    feasible: bool
    note: Optional[str] = None

    def to_dict(self):
        return {
            "gains": None if self.gains is None else {"k1": self.gains.k1, "k2": self.gains.k2},
            "W1": self.W1,
            "feasible": self.feasible,
            "note": self.note,
            "constraints": dict(self.constraints),
        }


def constraint_report(g, p):
    """Per-constraint flags for gains ``g`` under problem ``p``."""
    q = abs(p.q_bar)
    return {
        "k2_exceeds_mean_rate": g.k2 > q,
        "k1_limit_cycle": g.k1 >= FINITE_TIME_K1_FACTOR * math.sqrt(g.k2 + q),
        "k1_w1_bound": g.k1 > math.sqrt(2.0 * (p.L - g.k2)) if g.k2 < p.L else True,
        "under_tuned": 0.0 < g.k2 < p.L,
        "k1_saturation": g.k1 <= p.k1_max,
        "k2_saturation": g.k2 <= p.k2_max,
    }


def k1_lower(k2, p):
    """Smallest k1 meeting the limit-cycle and W1-applicability conditions."""
    lo = FINITE_TIME_K1_FACTOR * math.sqrt(k2 + abs(p.q_bar))
    if k2 < p.L:
        lo = max(lo, math.sqrt(2.0 * (p.L - k2)) * (1.0 + _STRICT_MARGIN))
    return lo


def _feasible(k1, k2, p):
    g = Gains(k1, k2)
    return (check_limit_cycle_gains(g, p.q_bar) and check_w1_bound_gain(g, p.L)
            and 0.0 < k2 < p.L and k1 <= p.k1_max and k2 <= p.k2_max)


def _w1(k1, k2, p):
    return w1_tuning_bound(Gains(k1, k2), p.L, p.T, p.n_fraction)


def search_grid(p):
    """Log-spaced (k1, k2) grid: returns (k1s, k2s, W1 array, feasible mask).

    W1 is indexed [i2, i1] and is NaN where infeasible.
    """
    k2s = np.geomspace(p.k2_min_fraction * p.L, p.k2_max, p.grid_size)
    k1_lo = min(k1_lower(k2, p) for k2 in k2s)
    k1s = np.geomspace(min(k1_lo, p.k1_max), p.k1_max, p.grid_size)
    W = np.full((len(k2s), len(k1s)), np.nan)
    for i2, k2 in enumerate(k2s):
        for i1, k1 in enumerate(k1s):
            if _feasible(k1, k2, p):
                W[i2, i1] = _w1(k1, k2, p)
    return k1s, k2s, W, ~np.isnan(W)


def _bisect(pred, lo, hi):
    """Smallest x in (lo, hi] with pred(x) true, given pred(lo) false and pred(hi) true."""
    for _ in range(_BISECT_ITERS):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if pred(mid):
            hi = mid
        else:
            lo = mid
    return hi


def tune_gains(p):
    """Grid search followed by coordinate bisection; deterministic.

    An empty feasible set gives ``feasible=False``.  When saturation keeps
    every gain above the target, the feasible gains with the smallest W1 are
    returned with ``note="target_unmet"``.  When even the minimal gains beat
    the target by more than eps, they are returned with
    ``note="below_target_at_boundary"``.
    """
    k1s, k2s, W, feasible = search_grid(p)
    if not feasible.any():
        return TuningResult(None, None, {}, False, "no_feasible_gains")

    acceptable = feasible & (np.nan_to_num(W, nan=np.inf) <= p.eta + p.eps)
    if not acceptable.any():
        # W1 falls in both gains: the best point sits at the saturation corner
        k2 = p.k2_max
        k1 = p.k1_max
        if not _feasible(k1, k2, p):
            i2, i1 = np.unravel_index(np.nanargmin(W), W.shape)
            k1, k2 = float(k1s[i1]), float(k2s[i2])
        return _result(k1, k2, p, "target_unmet")

    i2 = int(np.flatnonzero(acceptable.any(axis=1))[0])
    k2 = float(k2s[i2])
    if i2 > 0:
        def reachable(x):
            return k1_lower(x, p) <= p.k1_max and _w1(p.k1_max, x, p) <= p.eta
        if reachable(k2):
            k2 = _bisect(reachable, float(k2s[i2 - 1]), k2)

    lo = k1_lower(k2, p)
    if _w1(lo, k2, p) <= p.eta:
        k1 = lo
    else:
        hi = p.k1_max
        k1 = _bisect(lambda x: _w1(x, k2, p) <= p.eta, lo, hi)
    W1 = _w1(k1, k2, p)
    if W1 > p.eta + p.eps:
        # bisection could not reach eta exactly; fall back to the grid point
        i1 = int(np.flatnonzero(acceptable[i2])[0])
        k1, k2 = float(k1s[i1]), float(k2s[i2])
        W1 = _w1(k1, k2, p)
    note = "below_target_at_boundary" if p.eta - W1 > p.eps else None
    return _result(k1, k2, p, note)


def _result(k1, k2, p, note):
    g = Gains(k1, k2)
    flags = constraint_report(g, p)
    return TuningResult(g, _w1(k1, k2, p), flags, all(flags.values()), note)


@dataclass(frozen=True)
class ValidationResult:
    simulated_w1_max: float
    simulated_abs_x1: float
    within_W1: bool
    converged: bool


def validate_tuning(result, p, scenario=None):
    """Simulate the tuned gains and compare the cycle amplitude with W1.

    ``scenario`` supplies simulation settings (delta, initial state, ...);
    its gains, L and T are replaced by the tuned gains and the problem's data.
    """
    if not result.feasible:
        raise ConfigurationError("cannot validate an infeasible result", "result")
    if scenario is None:
        sc = Scenario(result.gains, p.L, p.T)
    else:
        sc = replace(scenario, gains=result.gains, L=p.L, T=p.T, perturbation=None)
    _, report = simulate(sc)
    return ValidationResult(report.w1_max, report.x1_abs_max,
                            bool(report.w1_max <= result.W1), report.converged)
