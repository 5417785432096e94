"""Closed-loop vector fields of the super-twisting loop.

With x1 the controlled variable and x2 the integral-plus-disturbance state,
the loop reads

    x1' = -k1 |x1|^(1/2) s(x1) + x2
    x2' = -k2 s(x1) + q(t)

where ``s`` is the signum function (discontinuous field), the ramp
``phi_delta`` (regularised field), and in the averaged field q(t) is
replaced by its period mean.

Fixed-step integration of the discontinuous field chatters numerically;
use the regularised field for anything quantitative.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

from .errors import ConfigurationError, DivergenceError

# k1 >= FINITE_TIME_K1_FACTOR * sqrt(k2 + L) for finite-time convergence
FINITE_TIME_K1_FACTOR = 1.8
# gains are quoted to three significant figures (4.12 for 1.8*sqrt(5.25) = 4.1243),
# so the k1 >= 1.8 sqrt(.) tests accept half a unit in the third digit
GAIN_RTOL = 5e-3


@dataclass(frozen=True)
class Gains:
    """Super-twisting gain pair; both gains must be positive."""

    k1: float
    k2: float

    def __post_init__(self):
        for name in ("k1", "k2"):
            value = getattr(self, name)
            if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
                raise ConfigurationError(f"must be a positive number, got {value!r}", name)
        object.__setattr__(self, "k1", float(self.k1))
        object.__setattr__(self, "k2", float(self.k2))

    def finite_time(self, L):
        return self.k2 > L and k1_meets(self.k1, self.k2 + L)

    def under_tuned(self, L):
        return 0.0 < self.k2 < L

    def scaled(self, amplitude=1.0):
        """Gains for a perturbation bound multiplied by ``amplitude``.

        The loop is homogeneous: scaling L by c, k2 by c and k1 by sqrt(c)
        scales both states by c.
        """
        return Gains(self.k1 * math.sqrt(amplitude), self.k2 * amplitude)


def k1_meets(k1, s):
    """k1 >= 1.8 sqrt(s), accepting GAIN_RTOL of relative shortfall."""
    return k1 >= FINITE_TIME_K1_FACTOR * math.sqrt(s) * (1.0 - GAIN_RTOL)


class State(NamedTuple):
    x1: float
    x2: float


class WState(NamedTuple):
    w1: float
    w2: float


def signum(v):
    """-1, 0 or +1; signum(0) is 0 so the origin is an equilibrium."""
    if v > 0:
        return 1.0
    if v < 0:
        return -1.0
    return 0.0


def phi_delta(v, delta):
    """Continuous ramp replacing sgn: v/delta inside (-delta, delta), +-1 outside."""
    if not delta > 0:
        raise ConfigurationError(f"must be positive, got {delta!r}", "delta")
    if v >= delta:
        return 1.0
    if v <= -delta:
        return -1.0
    return v / delta


def rho(v, delta):
    """Regularisation residual sgn(v) - phi_delta(v, delta)."""
    return signum(v) - phi_delta(v, delta)


def _rate(q, t):
    return float(q(t)) if callable(q) else float(q)


def _check_finite(t, s):
    if not (math.isfinite(t) and math.isfinite(s[0]) and math.isfinite(s[1])):
        raise DivergenceError(f"non-finite field input at t={t!r}, state={tuple(s)!r}")


def eval_discontinuous(t, s, g, q):
    """Right-hand side of the discontinuous loop; ``q`` is a callable q(t) or a constant."""
    _check_finite(t, s)
    x1, x2 = s
    sg = signum(x1)
    return State(-g.k1 * math.sqrt(abs(x1)) * sg + x2, -g.k2 * sg + _rate(q, t))


def eval_regularized(t, s, g, q, delta):
    """Right-hand side with sgn replaced by phi_delta.

    Identical to :func:`eval_discontinuous` wherever ``|x1| >= delta``.
    """
    _check_finite(t, s)
    x1, x2 = s
    ph = phi_delta(x1, delta)
    return State(-g.k1 * math.sqrt(abs(x1)) * ph + x2, -g.k2 * ph + _rate(q, t))


def eval_averaged(s, g, q_bar, delta):
    """Autonomous averaged field: the regularised field with q(t) replaced by q_bar."""
    return eval_regularized(0.0, s, g, float(q_bar), delta)


def to_w(sample, g, delta):
    """Map a ``(t, State)`` sample to (w1, w2) = (x1, x1')."""
    _, s = sample
    x1, x2 = s
    return WState(x1, -g.k1 * math.sqrt(abs(x1)) * phi_delta(x1, delta) + x2)
