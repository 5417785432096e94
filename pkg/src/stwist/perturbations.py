"""Periodic perturbations d(t) and their rates q(t) = d'(t).

A perturbation is a finite sum of cosines,

    d(t) = sum_i a_i cos(w_i t + p_i),

whose frequencies are integer multiples of 2*pi/T, so d is exactly
T-periodic and its derivative is available in closed form.  A separate
constant-rate mode (d = c t, q = c) exists for the divergence experiment;
it is flagged as non-periodic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import optimize

from .errors import ConfigurationError

# relative slack used when comparing a sampled maximum with a declared bound
_BOUND_RTOL = 1e-12


class Harmonic(NamedTuple):
    amp: float
    omega: float
    phase: float = 0.0


class RateBoundCheck(NamedTuple):
    max_abs_q: float
    ok: bool


@dataclass(frozen=True)
class PerturbationSpec:
    """Immutable description of d(t), its period and declared rate bound.

    Attributes
    ----------
    terms : tuple of Harmonic
        Cosine terms ``(amp, omega, phase)``.
    period : float
        Common period T of all terms (``inf`` for the constant-rate mode).
    rate_bound : float
        Declared L with ``|q(t)| <= L``.  It is checked, never inferred;
        see :func:`verify_rate_bound`.
    constant_rate : float
        Non-zero only for the non-periodic override ``q == constant_rate``.
    """

    terms: tuple = ()
    period: float = 1.0
    rate_bound: float = 0.0
    constant_rate: float = 0.0

    def __post_init__(self):
        terms = tuple(Harmonic(*map(float, h)) for h in self.terms)
        object.__setattr__(self, "terms", terms)
        if not self.period > 0:
            raise ConfigurationError("must be positive", "period")
        if not self.rate_bound >= 0:
            raise ConfigurationError("must be non-negative", "rate_bound")
        if self.constant_rate != 0.0:
            if terms:
                raise ConfigurationError(
                    "constant-rate override cannot carry harmonic terms", "terms")
            return
        if not math.isfinite(self.period):
            raise ConfigurationError("must be finite for a periodic spec", "period")
        base = 2.0 * math.pi / self.period
        for i, h in enumerate(terms):
            m = h.omega / base
            if round(m) == 0 or abs(m - round(m)) > 1e-9 * max(1.0, abs(m)):
                raise ConfigurationError(
                    f"omega={h.omega!r} is not a nonzero multiple of 2*pi/T",
                    f"terms[{i}].omega")

    @classmethod
    def constant(cls, rate):
        """Non-periodic override with q(t) = rate and d(t) = rate * t."""
        rate = float(rate)
        if rate == 0.0:
            raise ConfigurationError("constant rate must be non-zero", "constant_rate")
        return cls(terms=(), period=math.inf, rate_bound=abs(rate), constant_rate=rate)

    @property
    def periodic(self):
        return self.constant_rate == 0.0

    @property
    def arrays(self):
        """Amplitudes, angular frequencies and phases as float arrays."""
        a = np.array([h.amp for h in self.terms], dtype=float)
        w = np.array([h.omega for h in self.terms], dtype=float)
        p = np.array([h.phase for h in self.terms], dtype=float)
        return a, w, p

    def d(self, t):
        return eval_d(self, t)

    def q(self, t):
        return eval_q(self, t)

    def to_dict(self):
        if not self.periodic:
            return {"constant_rate": self.constant_rate}
        return {
            "terms": [{"amp": h.amp, "omega": h.omega, "phase": h.phase}
                      for h in self.terms],
            "period": self.period,
            "rate_bound": self.rate_bound,
        }

    @classmethod
    def from_dict(cls, data):
        if not isinstance(data, dict):
            raise ConfigurationError("expected a JSON object", "perturbation")
        if "constant_rate" in data:
            return cls.constant(_number(data, "constant_rate"))
        for key in ("terms", "period", "rate_bound"):
            if key not in data:
                raise ConfigurationError("missing", key)
        if not isinstance(data["terms"], list):
            raise ConfigurationError("expected a list", "terms")
        terms = []
        for i, term in enumerate(data["terms"]):
            if not isinstance(term, dict):
                raise ConfigurationError("expected an object", f"terms[{i}]")
            terms.append(Harmonic(
                _number(term, "amp", f"terms[{i}]."),
                _number(term, "omega", f"terms[{i}]."),
                _number(term, "phase", f"terms[{i}].", default=0.0)))
        return cls(tuple(terms), _number(data, "period"), _number(data, "rate_bound"))


def _number(data, key, prefix="", default=None):
    if key not in data:
        if default is not None:
            return default
        raise ConfigurationError("missing", prefix + key)
    value = data[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigurationError(f"expected a number, got {value!r}", prefix + key)
    return float(value)


def _scalar_or_array(t, values):
    return float(values) if np.ndim(t) == 0 else values


def eval_d(spec, t):
    """Evaluate d(t); accepts a scalar or an array of times."""
    tt = np.asarray(t, dtype=float)
    if not spec.periodic:
        return _scalar_or_array(t, spec.constant_rate * tt)
    out = np.zeros_like(tt)
    for amp, omega, phase in spec.terms:
        out = out + amp * np.cos(omega * tt + phase)
    return _scalar_or_array(t, out)


def eval_q(spec, t):
    """Evaluate the analytic rate q(t) = d'(t)."""
    tt = np.asarray(t, dtype=float)
    if not spec.periodic:
        return _scalar_or_array(t, np.full_like(tt, spec.constant_rate))
    out = np.zeros_like(tt)
    for amp, omega, phase in spec.terms:
        out = out - amp * omega * np.sin(omega * tt + phase)
    return _scalar_or_array(t, out)


def mean_rate(spec):
    """Period mean of q, computed as (d(T) - d(0)) / T."""
    if not spec.periodic:
        return spec.constant_rate
    return (eval_d(spec, spec.period) - eval_d(spec, 0.0)) / spec.period


def verify_rate_bound(spec, n_samples=20000):
    """Check the declared rate bound against the actual maximum of |q|.

    |q| is sampled on a uniform grid over one period and the best sample is
    polished by golden-section search on its two neighbouring intervals.
    """
    if n_samples < 1000:
        raise ConfigurationError("n_samples must be at least 1000", "n_samples")
    if not spec.periodic:
        peak = abs(spec.constant_rate)
    else:
        T = spec.period
        h = T / n_samples
        grid = np.arange(n_samples) * h
        values = np.abs(eval_q(spec, grid))
        i = int(np.argmax(values))
        peak = float(values[i])
        if peak > 0:
            neg = lambda t: -abs(eval_q(spec, t))
            try:
                t_star = optimize.golden(neg, brack=(grid[i] - h, grid[i], grid[i] + h),
                                         tol=1e-12)
                peak = max(peak, abs(eval_q(spec, t_star)))
            except (ValueError, RuntimeError):
                # flat neighbourhood: the grid value stands
                pass
    ok = peak <= spec.rate_bound * (1.0 + _BOUND_RTOL)
    return RateBoundCheck(peak, bool(ok))


def ripple(L, period, scale=1.0):
    """Torque-ripple perturbation with rate q(t) = (L/2)[sin(wt) + sin(3wt)].

    ``d(t) = a1 cos(wt) + a2 cos(3wt)`` with ``a1 = 3 a2 = -L*scale/(2w)``
    and ``w = 2*pi/period``; ``scale`` multiplies d (use the inertia J to get
    the physical torque).  The declared rate bound is L.
    """
    if not L > 0:
        raise ConfigurationError(f"must be positive, got {L!r}", "L")
    if not period > 0:
        raise ConfigurationError(f"must be positive, got {period!r}", "T")
    w = 2.0 * math.pi / period
    a1 = -L * scale / (2.0 * w)
    return PerturbationSpec((Harmonic(a1, w, 0.0), Harmonic(a1 / 3.0, 3.0 * w, 0.0)),
                            period, L * scale)
