"""Fixed-step integration of the loop, zero-crossing events and CSV export.

The regularised field is very steep inside the band |x1| < delta (local
Lipschitz constant of order k1/sqrt(delta) + k2/delta), so the step is
fixed and capped at

    dt <= min(T/2000, 0.2*delta/(k2 + L), 0.2*sqrt(delta)/k1).

When no step is given, the largest step below the cap that divides the
period into a whole number of steps is used, which keeps period-T
comparisons on exact sample boundaries.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from . import _kernel
from .errors import ConfigurationError
from .fields import Gains, State
from .perturbations import PerturbationSpec, mean_rate

DIVERGENCE_LIMIT = 1e12
SAMPLES_PER_PERIOD = 4000
FIELD_KINDS = ("discontinuous", "regularized", "averaged")
CSV_HEADER = "t,x1,x2,w1,w2"


def default_delta(x0):
    return 1e-5 * max(1.0, abs(x0[0]), abs(x0[1]))


@dataclass(frozen=True)
class SimConfig:
    """Integration settings.

    ``delta=None`` resolves to ``1e-5 * max(1, |x0|_inf)``; ``dt=None`` and
    ``record_stride=None`` are resolved by :func:`resolve_step`.
    """

    t_end: float
    x0: State = State(0.0, 0.0)
    delta: Optional[float] = None
    dt: Optional[float] = None
    field_kind: str = "regularized"
    record_stride: Optional[int] = None
    t0: float = 0.0

    def __post_init__(self):
        x0 = State(*map(float, self.x0))
        object.__setattr__(self, "x0", x0)
        if not all(math.isfinite(v) for v in x0):
            raise ConfigurationError("must be finite", "x0")
        if self.delta is None:
            object.__setattr__(self, "delta", default_delta(x0))
        if not (math.isfinite(self.delta) and self.delta > 0):
            raise ConfigurationError(f"must be positive, got {self.delta!r}", "delta")
        if self.dt is not None and not (math.isfinite(self.dt) and self.dt > 0):
            raise ConfigurationError(f"must be positive, got {self.dt!r}", "dt")
        if not (math.isfinite(self.t_end) and self.t_end > self.t0):
            raise ConfigurationError("must be finite and greater than t0", "t_end")
        if self.field_kind not in FIELD_KINDS:
            raise ConfigurationError(
                f"must be one of {', '.join(FIELD_KINDS)}, got {self.field_kind!r}",
                "field_kind")
        if self.record_stride is not None and not (
                isinstance(self.record_stride, int) and self.record_stride >= 1):
            raise ConfigurationError("must be an integer >= 1", "record_stride")


class Divergence(NamedTuple):
    t: float
    state: State


class CrossingEvent(NamedTuple):
    t_cross: float
    direction: str  # "rising" or "falling"
    axis: str  # "x1", "x2" or "w2"


@dataclass
class Trajectory:
    """Uniformly sampled closed-loop states.

    ``samples`` has shape (n, 2); row i is the state at ``t0 + i*dt_sample``.
    ``divergence`` holds the time and state of the first step that left the
    divergence box; no samples are stored past it.
    """

    t0: float
    dt_sample: float
    samples: np.ndarray
    gains: Gains
    delta: float
    field_kind: str = "regularized"
    divergence: Optional[Divergence] = None
    dt: float = field(default=0.0)

    def __len__(self):
        return len(self.samples)

    @property
    def times(self):
        return self.t0 + self.dt_sample * np.arange(len(self.samples))

    @property
    def x1(self):
        return self.samples[:, 0]

    @property
    def x2(self):
        return self.samples[:, 1]

    @property
    def t_last(self):
        return self.t0 + self.dt_sample * (len(self.samples) - 1)

    @property
    def final_state(self):
        return State(*self.samples[-1])

    def w(self):
        """(w1, w2) = (x1, x1') series evaluated with this run's field."""
        x1, x2 = self.x1, self.x2
        if self.field_kind == "discontinuous":
            sw = np.sign(x1)
        else:
            sw = np.clip(x1 / self.delta, -1.0, 1.0)
        return x1.copy(), -self.gains.k1 * np.sqrt(np.abs(x1)) * sw + x2

    def to_csv(self, target=None, header_lines=()):
        """Write ``t,x1,x2,w1,w2`` rows with 17 significant digits.

        ``header_lines`` are emitted first as ``#`` comments.  Returns the
        text when ``target`` is None.
        """
        w1, w2 = self.w()
        table = np.column_stack([self.times, self.x1, self.x2, w1, w2])
        buf = io.StringIO()
        for line in header_lines:
            buf.write(f"# {line}\n")
        buf.write(CSV_HEADER + "\n")
        np.savetxt(buf, table, fmt="%.17g", delimiter=",")
        text = buf.getvalue()
        if target is None:
            return text
        with open(target, "w", newline="\n") as fh:
            fh.write(text)
        return None

    @classmethod
    def concatenate(cls, parts):
        """Join consecutive runs, dropping each duplicated start sample."""
        first = parts[0]
        chunks = [first.samples] + [p.samples[1:] for p in parts[1:]]
        return cls(first.t0, first.dt_sample, np.concatenate(chunks), first.gains,
                   first.delta, first.field_kind, parts[-1].divergence, first.dt)


def stability_cap(delta, g, p):
    """Largest admissible step for the given width, gains and perturbation."""
    L = p.rate_bound
    terms = [0.2 * delta / (g.k2 + L), 0.2 * math.sqrt(delta) / g.k1]
    if p.periodic:
        terms.append(p.period / 2000.0)
    return min(terms)


def aligned_step(period, dt_max, samples_per_period=SAMPLES_PER_PERIOD):
    """Step <= dt_max dividing ``period`` into a multiple of ``samples_per_period``.

    Returns (dt, stride) with ``stride`` steps between stored samples.
    """
    per_period = math.ceil(period / dt_max / samples_per_period) * samples_per_period
    return period / per_period, per_period // samples_per_period


def resolve_step(cfg, g, p):
    """Return (dt, stride) for ``cfg``, enforcing the stability cap."""
    cap = stability_cap(cfg.delta, g, p)
    if cfg.dt is None:
        if p.periodic:
            dt, stride = aligned_step(p.period, cap)
        else:
            dt, stride = cap, None
    else:
        if cfg.dt > cap * (1.0 + 1e-12):
            raise ConfigurationError(f"{cfg.dt!r} exceeds the stability cap {cap!r}", "dt")
        dt, stride = cfg.dt, None
        if p.periodic:
            per_period = p.period / dt
            stride = max(1, int(round(per_period / SAMPLES_PER_PERIOD)))
    n_steps = int(round((cfg.t_end - cfg.t0) / dt))
    if cfg.record_stride is not None:
        stride = cfg.record_stride
    elif stride is None:
        stride = max(1, n_steps // 100_000)
    return dt, stride


def integrate(cfg, g, p):
    """Integrate the configured field with classical fixed-step RK4.

    Divergence (a state component non-finite or above 1e12 in magnitude) is
    data, not an error: the run stops and ``Trajectory.divergence`` is set.
    For ``field_kind="averaged"`` q(t) is replaced by its period mean.
    """
    if not isinstance(p, PerturbationSpec):
        raise ConfigurationError("expected a PerturbationSpec", "perturbation")
    dt, stride = resolve_step(cfg, g, p)
    n_steps = int(round((cfg.t_end - cfg.t0) / dt))
    if n_steps < 1:
        raise ConfigurationError("horizon shorter than one step", "t_end")
    kind = _kernel.KIND_DISCONTINUOUS if cfg.field_kind == "discontinuous" \
        else _kernel.KIND_REGULARIZED
    if cfg.field_kind == "averaged" or not p.periodic:
        amps = omegas = phases = np.empty(0)
        offset = mean_rate(p)
    else:
        amps, omegas, phases = p.arrays
        offset = 0.0
    out, n_out, diverged, t_div, x1_div, x2_div = _kernel.rk4(
        kind, g.k1, g.k2, cfg.delta, amps, omegas, phases, offset,
        cfg.t0, cfg.x0.x1, cfg.x0.x2, dt, n_steps, stride, DIVERGENCE_LIMIT)
    divergence = Divergence(t_div, State(x1_div, x2_div)) if diverged else None
    return Trajectory(cfg.t0, dt * stride, out[:n_out].copy(), g, cfg.delta,
                      cfg.field_kind, divergence, dt)


def integrate_field(f, t0, x0, dt, n_steps, stride=1):
    """Plain-Python RK4 for an arbitrary field ``f(t, x) -> dx``.

    Slow; meant for short cross-checks of composed fields.
    """
    x = np.asarray(x0, dtype=float)
    out = [x.copy()]
    for i in range(n_steps):
        t = t0 + i * dt
        a = np.asarray(f(t, x))
        b = np.asarray(f(t + dt / 2, x + dt / 2 * a))
        c = np.asarray(f(t + dt / 2, x + dt / 2 * b))
        d = np.asarray(f(t + dt, x + dt * c))
        x = x + dt / 6 * (a + 2 * b + 2 * c + d)
        if (i + 1) % stride == 0:
            out.append(x.copy())
    return np.array(out)


def find_crossings(traj, axis="x1", g=None, delta=None):
    """Zero crossings of x1, x2 or w2, located by linear interpolation.

    ``g`` and ``delta`` override the trajectory's own values when computing
    w2.  Events are returned in time order.
    """
    if len(traj) < 2:
        raise ConfigurationError("need at least two samples", "traj")
    if axis == "x1":
        y = traj.x1
    elif axis == "x2":
        y = traj.x2
    elif axis == "w2":
        if g is not None or delta is not None:
            traj = Trajectory(traj.t0, traj.dt_sample, traj.samples, g or traj.gains,
                              delta or traj.delta, traj.field_kind)
        y = traj.w()[1]
    else:
        raise ConfigurationError(f"unknown axis {axis!r}", "axis")
    t = traj.times
    a, b = y[:-1], y[1:]
    rising = np.flatnonzero((a < 0) & (b >= 0))
    falling = np.flatnonzero((a >= 0) & (b < 0))
    events = []
    for idx, direction in [(rising, "rising"), (falling, "falling")]:
        frac = a[idx] / (a[idx] - b[idx])
        for i, f in zip(idx, frac):
            events.append(CrossingEvent(float(t[i] + f * traj.dt_sample), direction, axis))
    events.sort(key=lambda e: e.t_cross)
    return events

