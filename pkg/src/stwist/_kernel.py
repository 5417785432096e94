"""Compiled fixed-step RK4 loop for the super-twisting fields."""

import math

import numba
import numpy as np

KIND_DISCONTINUOUS = 0
KIND_REGULARIZED = 1

# harmonic phases are recomputed exactly this often to stop rotation drift
_RESYNC = 1024


@numba.njit(cache=True, inline="always")
def _switch(v, delta, kind):
    if kind == KIND_DISCONTINUOUS:
        if v > 0.0:
            return 1.0
        if v < 0.0:
            return -1.0
        return 0.0
    if v >= delta:
        return 1.0
    if v <= -delta:
        return -1.0
    return v / delta


@numba.njit(cache=True)
def rk4(kind, k1, k2, delta, amps, omegas, phases, rate_offset,
        t0, x1, x2, dt, n_steps, stride, limit):
    """Integrate ``n_steps`` RK4 steps, storing every ``stride``-th state.

    q(t) = rate_offset - sum(a w sin(w t + p)).  The sines at the stage times
    t, t + dt/2, t + dt are advanced by complex rotation.

    Returns (samples, n_samples, diverged, t_div, x1_div, x2_div).
    """
    out = np.empty((n_steps // stride + 1, 2))
    out[0, 0] = x1
    out[0, 1] = x2
    n_out = 1
    nh = amps.size
    c = np.empty(nh)
    s = np.empty(nh)
    ch = np.empty(nh)
    sh = np.empty(nh)
    aw = np.empty(nh)
    for h in range(nh):
        ch[h] = math.cos(0.5 * omegas[h] * dt)
        sh[h] = math.sin(0.5 * omegas[h] * dt)
        aw[h] = -amps[h] * omegas[h]
    half = 0.5 * dt
    for i in range(n_steps):
        t = t0 + i * dt
        if i % _RESYNC == 0:
            for h in range(nh):
                c[h] = math.cos(omegas[h] * t + phases[h])
                s[h] = math.sin(omegas[h] * t + phases[h])
        q0 = rate_offset
        for h in range(nh):
            q0 += aw[h] * s[h]
        qh = rate_offset
        for h in range(nh):
            cc = c[h] * ch[h] - s[h] * sh[h]
            s[h] = s[h] * ch[h] + c[h] * sh[h]
            c[h] = cc
            qh += aw[h] * s[h]
        q1 = rate_offset
        for h in range(nh):
            cc = c[h] * ch[h] - s[h] * sh[h]
            s[h] = s[h] * ch[h] + c[h] * sh[h]
            c[h] = cc
            q1 += aw[h] * s[h]

        f = _switch(x1, delta, kind)
        a1 = -k1 * math.sqrt(abs(x1)) * f + x2
        b1 = -k2 * f + q0
        y1 = x1 + half * a1
        y2 = x2 + half * b1
        f = _switch(y1, delta, kind)
        a2 = -k1 * math.sqrt(abs(y1)) * f + y2
        b2 = -k2 * f + qh
        y1 = x1 + half * a2
        y2 = x2 + half * b2
        f = _switch(y1, delta, kind)
        a3 = -k1 * math.sqrt(abs(y1)) * f + y2
        b3 = -k2 * f + qh
        y1 = x1 + dt * a3
        y2 = x2 + dt * b3
        f = _switch(y1, delta, kind)
        a4 = -k1 * math.sqrt(abs(y1)) * f + y2
        b4 = -k2 * f + q1
        x1 = x1 + dt / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4)
        x2 = x2 + dt / 6.0 * (b1 + 2.0 * b2 + 2.0 * b3 + b4)

        if not (abs(x1) <= limit and abs(x2) <= limit):
            return out, n_out, True, t0 + (i + 1) * dt, x1, x2
        if (i + 1) % stride == 0:
            out[n_out, 0] = x1
            out[n_out, 1] = x2
            n_out += 1
    return out, n_out, False, 0.0, 0.0, 0.0
