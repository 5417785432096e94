"""Motor velocity loop with torque ripple, friction, and the tuning table.

Plant: J w' = u - T_F(w) - T_L + d(t), error e = w - w_r for a constant
set point w_r.  With the control

    u = -k1' |e|^(1/2) phi(e) - k2' int phi(e) + T_F(w) + T_L

friction and load are cancelled and the error obeys the regularised
super-twisting field with k1 = k1'/J, k2 = k2'/J, q = d'/J.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .analysis import Scenario, compute_bounds, simulate
from .errors import ConfigurationError
from .fields import FINITE_TIME_K1_FACTOR, Gains, State, phi_delta
from .perturbations import Harmonic, PerturbationSpec, eval_d, eval_q
from .tuning import TuningProblem, tune_gains

# finite-time reference gain: kbar2 = KBAR2_RATIO * L
KBAR2_RATIO = 1.1

# (T, L, kbar1, kbar2, k1, k2, |x1|, W1) as published
PUBLISHED_TABLE1 = (
    (2.0, 2.5, 4.12, 2.75, 4.12, 0.43, 0.0099, 0.01),
    (2.0, 25.0, 13.04, 27.5, 12.54, 12.9, 0.0055, 0.12),
    (0.25, 2.5, 4.12, 2.75, 1.76, 1.08, 0.0002, 0.01),
    (0.25, 25.0, 13.04, 27.5, 6.14, 9.74, 0.0016, 0.01),
)

# the under-tuned example loop: L = 2.5, T = 0.25 s, k1 = 1, k2 = 2
EXAMPLE_L = 2.5
EXAMPLE_T = 0.25
EXAMPLE_GAINS = Gains(1.0, 2.0)


@dataclass(frozen=True)
class MotorParams:
    J: float = 1.0
    omega_r: float = 2.0 * math.pi / EXAMPLE_T
    T_C: float = 0.5
    alpha: float = 1000.0
    beta: float = 0.01
    T_L: float = 0.0

    def __post_init__(self):
        if not self.J > 0:
            raise ConfigurationError("must be positive", "motor.J")
        if not self.alpha > 100:
            raise ConfigurationError("must exceed 100", "motor.alpha")

    @classmethod
    def from_dict(cls, data, T=None):
        """Build from JSON; when ``T`` is given, omega_r is set to 2 pi / T."""
        if not isinstance(data, dict):
            raise ConfigurationError("expected a JSON object", "motor")
        kwargs = {}
        for key in cls.__dataclass_fields__:
            if key in data:
                v = data[key]
                if isinstance(v, bool) or not isinstance(v, (int, float)):
                    raise ConfigurationError(f"expected a number, got {v!r}", f"motor.{key}")
                kwargs[key] = float(v)
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigurationError("unknown field", f"motor.{sorted(unknown)[0]}")
        if T is not None:
            kwargs["omega_r"] = 2.0 * math.pi / T
        return cls(**kwargs)


def friction_torque(omega, m):
    """Coulomb (arctan-smoothed) plus viscous friction T_C (2/pi) atan(alpha w) + beta w."""
    return m.T_C * (2.0 / math.pi) * np.arctan(m.alpha * omega) + m.beta * omega


def ripple_perturbation(L, m):
    """Normalised ripple: q(t) = d'(t)/J = (L/2)[sin(w_r t) + sin(3 w_r t)].

    The returned spec describes d/J, so its amplitudes are L1/J = -L/(2 w_r)
    and L1/(3J); multiply ``eval_d`` by J for the physical torque.
    """
    if not L > 0:
        raise ConfigurationError("must be positive", "L")
    if m.omega_r == 0:
        raise ConfigurationError("must be non-zero", "motor.omega_r")
    wr = m.omega_r
    a1 = -L / (2.0 * wr)
    return PerturbationSpec((Harmonic(a1, wr), Harmonic(a1 / 3.0, 3.0 * wr)),
                            2.0 * math.pi / abs(wr), L)


@dataclass(frozen=True)
class MotorLoop:
    """Closed velocity loop in physical coordinates (e, z), z = int phi(e)."""

    motor: MotorParams
    k1p: float
    k2p: float
    gains: Gains
    perturbation: PerturbationSpec
    delta: float

    def torque_disturbance(self, t):
        return self.motor.J * eval_d(self.perturbation, t)

    def control(self, t, e, z):
        m = self.motor
        ph = phi_delta(e, self.delta)
        return (-self.k1p * math.sqrt(abs(e)) * ph - self.k2p * z
                + friction_torque(m.omega_r + e, m) + m.T_L)

    def field(self, t, s):
        """(e', z') from the plant, the control law and the ripple."""
        e, z = s
        m = self.motor
        u = self.control(t, e, z)
        omega = m.omega_r + e
        e_dot = (u - friction_torque(omega, m) - m.T_L + self.torque_disturbance(t)) / m.J
        return np.array([e_dot, phi_delta(e, self.delta)])

    def normalise(self, t, s):
        """Map (e, z) to the normalised state (x1, x2)."""
        e, z = s
        return State(e, (-self.k2p * z + self.torque_disturbance(t)) / self.motor.J)

    def normalised_derivative(self, t, s):
        """(x1', x2') obtained by differentiating :meth:`normalise` along the field."""
        e_dot, z_dot = self.field(t, s)
        d_dot = self.motor.J * eval_q(self.perturbation, t)
        return State(float(e_dot), (-self.k2p * z_dot + d_dot) / self.motor.J)


def motor_closed_loop(m, physical_gains, L, delta):
    """Normalised gains, ripple and the composed physical loop."""
    k1p, k2p = physical_gains
    if not (k1p > 0 and k2p > 0):
        raise ConfigurationError("physical gains must be positive", "gains")
    if not delta > 0:
        raise ConfigurationError("must be positive", "delta")
    gains = Gains(k1p / m.J, k2p / m.J)
    return MotorLoop(m, float(k1p), float(k2p), gains, ripple_perturbation(L, m), delta)


def reference_gains(L):
    """Finite-time reference gains (kbar1, kbar2) = (1.8 sqrt(2.1 L), 1.1 L)."""
    kbar2 = KBAR2_RATIO * L
    return Gains(FINITE_TIME_K1_FACTOR * math.sqrt(kbar2 + L), kbar2)


def example_scenario(x0=(0.0, 0.0), delta=1e-5):
    return Scenario(EXAMPLE_GAINS, EXAMPLE_L, EXAMPLE_T, delta, State(*x0))


@dataclass
class Table1Row:
    T: float
    L: float
    kbar1: float
    kbar2: float
    k1: Optional[float]
    k2: Optional[float]
    sim_abs_x1: Optional[float]
    W1: Optional[float]
    tuning_note: Optional[str] = None
    published_k1: float = float("nan")
    published_k2: float = float("nan")
    published_sim_abs_x1: Optional[float] = None
    published_gains_W1: Optional[float] = None
    published_abs_x1: float = float("nan")
    published_W1: float = float("nan")

    COLUMNS = ("T", "L", "kbar1", "kbar2", "k1", "k2", "sim_abs_x1", "W1",
               "published_k1", "published_k2", "published_sim_abs_x1", "published_gains_W1",
               "published_abs_x1", "published_W1")

    def cells(self):
        out = []
        for name in self.COLUMNS:
            v = getattr(self, name)
            out.append("nan" if v is None else f"{v:.17g}")
        return out


def _simulated_abs_x1(gains, L, T, delta):
    _, report = simulate(Scenario(gains, L, T, delta))
    return report.x1_abs_max


def reproduce_table1(n_fraction=0.5, delta=1e-5, tuned=True, published=True, rows=None,
                     eta=0.01, eps=1e-3):
    """Rebuild the gain/bound table for the four (T, L) pairs.

    With ``tuned`` the gains come from :func:`tune_gains` (target ``eta``)
    and are simulated; with ``published`` the published tuned gains are
    simulated as well.  ``rows`` selects a subset of row indices.
    """
    out = []
    for idx, (T, L, _, _, pk1, pk2, p_x1, p_W1) in enumerate(PUBLISHED_TABLE1):
        if rows is not None and idx not in rows:
            continue
        ref = reference_gains(L)
        row = Table1Row(T, L, ref.k1, ref.k2, None, None, None, None,
                        published_k1=pk1, published_k2=pk2, published_abs_x1=p_x1, published_W1=p_W1)
        if tuned:
            res = tune_gains(TuningProblem(L, T, eta, eps, n_fraction))
            row.tuning_note = res.note
            if res.feasible:
                row.k1, row.k2, row.W1 = res.gains.k1, res.gains.k2, res.W1
                row.sim_abs_x1 = _simulated_abs_x1(res.gains, L, T, delta)
        if published:
            g = Gains(pk1, pk2)
            row.published_gains_W1 = compute_bounds(g, L, T, n_fraction).W1
            row.published_sim_abs_x1 = _simulated_abs_x1(g, L, T, delta)
        out.append(row)
    return out


def scenario_with(sc, **changes):
    return replace(sc, **changes)
