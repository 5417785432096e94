"""Gain conditions, limit-cycle detection and the analytic amplitude bounds.

Bounds on the converged cycle, for gains k1, k2, rate bound L, period T:

* amplitude:  max|x1| < (k2 + L) T^2 / 8
* tuning:     w1_max <= W1 = (L-k2)^2 n^2 T^2 / (k1 - 2(L-k2)/k1)^2,
              valid when k1 > sqrt(2(L - k2)), 0 < n <= 1/2
* chatter:    |x1'| <= (k2 + L) T / 2
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy import stats

from .errors import (BoundInapplicableError, ConfigurationError, DivergenceError,
                     InsufficientDataError, StwistError)
from .fields import Gains, State, k1_meets
from .integrator import SimConfig, Trajectory, integrate, resolve_step
from .perturbations import PerturbationSpec, ripple

DEFAULT_TOL = 1e-3
MIN_PERIODS = 6


# -- gain conditions ---------------------------------------------------------

def check_finite_time_gains(g, L):
    """k2 > L and k1 >= 1.8 sqrt(k2 + L), up to GAIN_RTOL."""
    return g.k2 > L and k1_meets(g.k1, g.k2 + L)


def check_limit_cycle_gains(g, q_bar):
    """Averaged-system conditions: k2 > |q_bar| and k1 >= 1.8 sqrt(k2 + |q_bar|)."""
    q_bar = abs(q_bar)
    return g.k2 > q_bar and k1_meets(g.k1, g.k2 + q_bar)



def check_w1_bound_gain(g, L):
    """k1 > sqrt(2(L - k2)); vacuous when k2 >= L."""
    return g.k2 >= L or g.k1 > math.sqrt(2.0 * (L - g.k2))


# -- analytic bounds ---------------------------------------------------------

def amplitude_bound(g, L, T):
    return (g.k2 + L) * T * T / 8.0


def chatter_bound(g, L, T):
    return (g.k2 + L) * T / 2.0


def w1_tuning_bound(g, L, T, n=0.5):
    """Gain-dependent bound W1 on the cycle's x1 amplitude.

    Raises BoundInapplicableError when k1 <= sqrt(2(L - k2)).
    """
    if not 0.0 < n <= 0.5:
        raise ConfigurationError(f"must lie in (0, 1/2], got {n!r}", "n_fraction")
    if g.k2 >= L:
        return 0.0
    if not check_w1_bound_gain(g, L):
        raise BoundInapplicableError(
            f"k1={g.k1:g} does not exceed sqrt(2(L-k2))={math.sqrt(2 * (L - g.k2)):g}")
    gap = L - g.k2
    return (gap * n * T) ** 2 / (g.k1 - 2.0 * gap / g.k1) ** 2


@dataclass(frozen=True)
class BoundSet:
    amplitude_bound: float
    W1: Optional[float]
    chatter_bound: float
    n_fraction: float = 0.5


def compute_bounds(g, L, T, n=0.5):
    W1 = w1_tuning_bound(g, L, T, n) if check_w1_bound_gain(g, L) else None
    return BoundSet(amplitude_bound(g, L, T), W1, chatter_bound(g, L, T), n)


# -- limit-cycle detection ---------------------------------------------------

@dataclass
class LimitCycleReport:
    """Outcome of the period-T return-map test and cycle amplitudes.

    ``return_map_residual`` is the sup-norm of x(t+T) - x(t) over the last
    analysed period; ``relative_residual`` divides each component by its
    own amplitude and is what ``converged`` is judged on.
    ``residual_history`` and ``relative_history`` hold the absolute and
    relative residuals of every analysed period, oldest first.
    """

    converged: bool
    return_map_residual: float
    relative_residual: float
    period_T: float
    w1_max: float
    w1_min: float
    w2_max_abs: float
    n_transient_periods: int
    residual_history: list = field(default_factory=list, repr=False)
    relative_history: list = field(default_factory=list, repr=False)

    @property
    def x1_abs_max(self):
        return max(self.w1_max, -self.w1_min)

    def to_dict(self):
        return {
            "converged": self.converged,
            "return_map_residual": self.return_map_residual,
            "relative_residual": self.relative_residual,
            "period_T": self.period_T,
            "w1_max": self.w1_max,
            "w1_min": self.w1_min,
            "w2_max_abs": self.w2_max_abs,
            "n_transient_periods": self.n_transient_periods,
        }


def _refined_peak(y, i):
    """Vertex of the parabola through samples i-1, i, i+1 (falls back to y[i])."""
    if 0 < i < len(y) - 1:
        a, b, c = y[i - 1], y[i], y[i + 1]
        curv = a - 2.0 * b + c
        if curv != 0.0:
            vertex = b - (c - a) ** 2 / (8.0 * curv)
            # only accept a refinement that stays on the same side of y[i]
            if (curv < 0 and vertex >= b) or (curv > 0 and vertex <= b):
                return float(vertex)
    return float(y[i])


def _shift_compare(samples, times, start, stop, T):
    """Per-component sup|x(t+T) - x(t)| and sup|x| for t in [start, stop]."""
    mask = (times >= start - 1e-12 * T) & (times <= stop + 1e-12 * T)
    t = times[mask]
    now = samples[mask]
    later = np.column_stack([np.interp(t + T, times, samples[:, k]) for k in (0, 1)])
    diff = np.max(np.abs(later - now), axis=0)
    scale = np.maximum(np.max(np.abs(now), axis=0), np.max(np.abs(later), axis=0))
    return diff, scale


def detect_limit_cycle(traj, T, tol=DEFAULT_TOL, floor=None):
    """Test the tail of ``traj`` for a period-T orbit and measure it.

    Periods are examined from the end backwards.  A period is converged when,
    for each state component, sup|x_i(t+T) - x_i(t)| <= tol * (sup|x_i| + floor_i).
    The default floor is (delta, k1*sqrt(delta)), the state scale of the
    regularisation band, so orbits collapsing onto the band still count.
    Amplitudes come from the last two periods, with parabolic refinement of
    the extreme samples.  Non-convergence is reported, not raised.
    """
    if traj.divergence is not None:
        raise DivergenceError(
            f"trajectory diverged at t={traj.divergence.t:g}")
    if not T > 0 or not math.isfinite(T):
        raise ConfigurationError("limit-cycle analysis needs a finite period", "T")
    times = traj.times
    span = traj.t_last - traj.t0
    n_periods = int(math.floor(span / T + 1e-9))
    if n_periods < MIN_PERIODS:
        raise InsufficientDataError(
            f"trajectory covers {span / T:.2f} periods, need {MIN_PERIODS}")

    if floor is None:
        floor = np.array([traj.delta, traj.gains.k1 * math.sqrt(traj.delta)])
    t_end = traj.t_last
    history = []
    abs_history = []
    # window k compares [t_end - (k+1)T, t_end - kT] with its image one period later
    for k in range(1, n_periods):
        stop = t_end - k * T
        diff, scale = _shift_compare(traj.samples, times, stop - T, stop, T)
        rel = float(np.max(diff / (scale + floor)))
        history.append(rel)
        abs_history.append(float(np.max(diff)))
    history.reverse()
    abs_history.reverse()

    converged = history[-1] <= tol
    n_transient = len(history)
    if converged:
        while n_transient > 0 and history[n_transient - 1] <= tol:
            n_transient -= 1
        idx = len(history) - 1
    else:
        idx = int(np.argmin(history))

    tail = times >= t_end - 2.0 * T - 1e-12 * T
    w1, w2 = traj.w()
    w1, w2 = w1[tail], w2[tail]
    i_max, i_min = int(np.argmax(w1)), int(np.argmin(w1))
    w1_max = _refined_peak(w1, i_max)
    w1_min = -_refined_peak(-w1, i_min)
    i_w2 = int(np.argmax(np.abs(w2)))
    w2_max_abs = abs(_refined_peak(np.sign(w2[i_w2]) * w2, i_w2))
    return LimitCycleReport(bool(converged), abs_history[idx], history[idx], T,
                            w1_max, w1_min, w2_max_abs, n_transient, abs_history, history)


# -- scenario runs -----------------------------------------------------------

@dataclass(frozen=True)
class Scenario:
    """Normalised loop driven by the torque-ripple perturbation.

    ``perturbation`` overrides the ripple built from ``L`` and ``T``.
    """

    gains: Gains
    L: float
    T: float
    delta: float = 1e-5
    x0: State = State(0.0, 0.0)
    tol: float = DEFAULT_TOL
    min_periods: int = 8
    max_periods: int = 200
    chunk_periods: int = 4
    dt: Optional[float] = None
    field_kind: str = "regularized"
    perturbation: Optional[PerturbationSpec] = None

    def __post_init__(self):
        object.__setattr__(self, "x0", State(*map(float, self.x0)))
        if self.min_periods < MIN_PERIODS:
            raise ConfigurationError(f"must be at least {MIN_PERIODS}", "min_periods")

    def spec(self):
        return self.perturbation if self.perturbation is not None else ripple(self.L, self.T)

    def at(self, L=None, T=None, k1=None, k2=None, scale_gains=True, scale_delta=True):
        """Copy moved to a new grid point.

        Changing L by a factor c scales (k1, k2) by (sqrt(c), c) when
        ``scale_gains``; changing T by a factor m leaves the gains alone.
        With ``scale_delta`` the width and initial state follow the cycle
        size, which grows as L T^2 (x2 as L T).
        """
        c = 1.0 if L is None else L / self.L
        m = 1.0 if T is None else T / self.T
        gains = self.gains.scaled(c) if scale_gains else self.gains
        if k1 is not None or k2 is not None:
            gains = Gains(self.gains.k1 if k1 is None else k1,
                          self.gains.k2 if k2 is None else k2)
        delta = self.delta * c * m * m if scale_delta else self.delta
        x0 = State(self.x0.x1 * c * m * m, self.x0.x2 * c * m) if scale_delta else self.x0
        return replace(self, gains=gains, L=self.L * c, T=self.T * m, delta=delta, x0=x0,
                       dt=None, perturbation=None)


def simulate(sc, t_end=None):
    """Integrate the scenario.

    With ``t_end`` the run has a fixed horizon.  Otherwise it is extended in
    chunks of ``chunk_periods`` until the return map converges or
    ``max_periods`` is reached.  Returns (Trajectory, LimitCycleReport or None);
    the report is None for a divergent or non-periodic run and for a fixed
    horizon shorter than six periods.
    """
    p = sc.spec()
    if t_end is not None or not p.periodic:
        horizon = t_end if t_end is not None else sc.max_periods * sc.T
        cfg = SimConfig(horizon, sc.x0, sc.delta, sc.dt, sc.field_kind)
        traj = integrate(cfg, sc.gains, p)
        report = None
        # horizons too short for the return-map test simply carry no report
        if (traj.divergence is None and p.periodic
                and traj.t_last - traj.t0 >= MIN_PERIODS * p.period * (1 - 1e-9)):
            report = detect_limit_cycle(traj, p.period, sc.tol)
        return traj, report

    cfg = SimConfig(sc.min_periods * p.period, sc.x0, sc.delta, sc.dt, sc.field_kind)
    dt, stride = resolve_step(cfg, sc.gains, p)
    parts = [integrate(replace(cfg, dt=dt, record_stride=stride), sc.gains, p)]
    periods = sc.min_periods
    while True:
        traj = Trajectory.concatenate(parts) if len(parts) > 1 else parts[0]
        if traj.divergence is not None:
            return traj, None
        report = detect_limit_cycle(traj, p.period, sc.tol)
        if report.converged or periods >= sc.max_periods:
            return traj, report
        step = min(sc.chunk_periods, sc.max_periods - periods)
        # exact multiples of the step keep every chunk on the same time grid
        n_steps = int(round(step * p.period / dt))
        t0 = traj.t_last
        nxt = SimConfig(t0 + n_steps * dt, traj.final_state, sc.delta, dt, sc.field_kind,
                        stride, t0=t0)
        parts.append(integrate(nxt, sc.gains, p))
        periods += step


# -- sweeps ------------------------------------------------------------------

SWEEP_PARAMS = ("L", "T", "k1", "k2")
SWEEP_CSV_HEADER = "param,w1_max,w1_min,w2_max,amplitude_bound,W1,chatter_bound,converged,residual"


@dataclass
class SweepRow:
    param: float
    scenario: Scenario
    bounds: BoundSet
    report: Optional[LimitCycleReport] = None
    error: Optional[str] = None

    @property
    def converged(self):
        return self.report is not None and self.report.converged

    def csv_cells(self):
        r = self.report
        nan = float("nan")
        values = [self.param,
                  r.w1_max if r else nan, r.w1_min if r else nan,
                  r.w2_max_abs if r else nan,
                  self.bounds.amplitude_bound,
                  nan if self.bounds.W1 is None else self.bounds.W1,
                  self.bounds.chatter_bound]
        cells = [f"{v:.17g}" for v in values]
        cells.append("1" if self.converged else "0")
        cells.append(f"{r.relative_residual:.17g}" if r else (self.error or "error"))
        return cells


def sweep_point(base, vary, value, n=0.5, scale_gains=True, scale_delta=True):
    """Simulate one grid point; failures are recorded in the row."""
    sc = base.at(**{vary: value}, scale_gains=scale_gains, scale_delta=scale_delta)
    bounds = compute_bounds(sc.gains, sc.L, sc.T, n)
    try:
        traj, report = simulate(sc)
    except StwistError as exc:
        return SweepRow(value, sc, bounds, None, f"{type(exc).__name__}: {exc}")
    if traj.divergence is not None:
        return SweepRow(value, sc, bounds, None, f"diverged at t={traj.divergence.t:g}")
    return SweepRow(value, sc, bounds, report)


def sweep(base, vary, values, n=0.5, scale_gains=True, scale_delta=True, workers=1):
    """Run one simulation per grid value; rows come back in grid order.

    ``vary`` is one of "L", "T", "k1", "k2".  With ``workers > 1`` points run
    in separate processes; results are identical to a serial run.
    """
    if vary not in SWEEP_PARAMS:
        raise ConfigurationError(f"must be one of {', '.join(SWEEP_PARAMS)}", "vary")
    values = [float(v) for v in values]
    if not values:
        raise ConfigurationError("grid is empty", "values")
    args = [(base, vary, v, n, scale_gains, scale_delta) for v in values]
    if workers > 1 and len(values) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_sweep_star, args))
    return [sweep_point(*a) for a in args]


def _sweep_star(a):
    return sweep_point(*a)


@dataclass(frozen=True)
class FitSummary:
    kind: str  # "linear" or "loglog"
    slope: float
    intercept: float
    r2: float
    n_points: int

    def to_dict(self):
        return {"kind": self.kind, "slope": self.slope, "intercept": self.intercept,
                "r2": self.r2, "n_points": self.n_points}


def fit_rows(rows, kind):
    """Linear or log-log least-squares fit of w1_max against the parameter.

    Only converged rows enter the fit; None when fewer than two remain.
    """
    pts = [(r.param, r.report.w1_max) for r in rows if r.converged]
    if len(pts) < 2:
        return None
    x, y = map(np.asarray, zip(*pts))
    if kind == "loglog":
        x, y = np.log(x), np.log(y)
    res = stats.linregress(x, y)
    return FitSummary(kind, float(res.slope), float(res.intercept),
                      float(res.rvalue ** 2), len(pts))
