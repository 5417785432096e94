import math

import numpy as np
import pytest

from stwist import analysis
from stwist.analysis import (Scenario, chatter_bound, check_finite_time_gains,
                             check_limit_cycle_gains, check_w1_bound_gain, compute_bounds,
                             detect_limit_cycle, fit_rows, amplitude_bound, simulate, sweep,
                             w1_tuning_bound)
from stwist.errors import (BoundInapplicableError, ConfigurationError, DivergenceError,
                           InsufficientDataError, StwistError)
from stwist.fields import Gains, State
from stwist.integrator import SimConfig, integrate
from stwist.perturbations import PerturbationSpec, ripple

L, T = 2.5, 0.25
EXAMPLE = Gains(1.0, 2.0)
SWEEP_BASE = Scenario(Gains(1.76, 1.08), L, T, 1e-5)


def test_finite_time_examples():
    assert check_finite_time_gains(Gains(4.12, 2.75), 2.5)
    assert check_finite_time_gains(Gains(13.04, 27.5), 25.0)
    assert not check_finite_time_gains(EXAMPLE, 2.5)
    # well short of the threshold is still rejected
    assert not check_finite_time_gains(Gains(4.0, 2.75), 2.5)


def test_limit_cycle_examples():
    assert check_limit_cycle_gains(Gains(3, 2), 0.0)
    assert not check_limit_cycle_gains(Gains(1, 2), 0.0)
    assert not check_limit_cycle_gains(Gains(2.0, 0.4), 0.5)


def test_w1_gain_examples():
    assert check_w1_bound_gain(Gains(4.12, 0.43), 2.5)
    assert not check_w1_bound_gain(Gains(2.0, 0.43), 2.5)
    assert check_w1_bound_gain(Gains(0.1, 3.0), 2.5)


def test_amplitude_and_chatter_values():
    assert amplitude_bound(EXAMPLE, L, T) == 0.03515625
    assert amplitude_bound(EXAMPLE, L, 0.0) == 0.0
    assert amplitude_bound(EXAMPLE, L, 2 * T) == 4 * amplitude_bound(EXAMPLE, L, T)
    assert chatter_bound(EXAMPLE, L, T) == 0.5625
    assert chatter_bound(EXAMPLE, L, 0.0) == 0.0
    assert chatter_bound(Gains(1, 2.2), L, T) > chatter_bound(EXAMPLE, L, T)


def test_w1_limits():
    g = Gains(4.0, 1e-9)
    near_L = [w1_tuning_bound(Gains(4.0, L - e), L, 2.0) for e in (1e-1, 1e-3, 1e-6)]
    assert near_L == sorted(near_L, reverse=True) and near_L[-1] < 1e-10
    far = [w1_tuning_bound(Gains(k1, 0.43), L, 2.0) for k1 in (10, 1e3, 1e6)]
    assert far == sorted(far, reverse=True) and far[-1] < 1e-10
    assert w1_tuning_bound(Gains(1.0, 3.0), L, T) == 0.0
    assert w1_tuning_bound(g, L, T) > 0


def test_w1_implied_n_for_row_one():
    g = Gains(4.12, 0.43)
    gap = L - g.k2
    n = 0.1 * (g.k1 - 2 * gap / g.k1) / (gap * 2.0)
    assert 0 < n <= 0.5
    assert w1_tuning_bound(g, L, 2.0, n) == pytest.approx(0.01, rel=1e-12)


def test_w1_errors():
    with pytest.raises(BoundInapplicableError):
        w1_tuning_bound(Gains(2.0, 0.43), L, 2.0)
    with pytest.raises(ConfigurationError) as err:
        w1_tuning_bound(Gains(4.12, 0.43), L, 2.0, n=0.6)
    assert err.value.field == "n_fraction"
    assert compute_bounds(Gains(2.0, 0.43), L, 2.0).W1 is None
    assert compute_bounds(Gains(4.12, 0.43), L, 2.0).W1 is not None


@pytest.fixture(scope="module")
def example_runs():
    out = {}
    for x0 in [(2.0, 2.0), (-1.0, -3.0)]:
        out[x0] = simulate(Scenario(EXAMPLE, L, T, 1e-5, State(*x0)))
    return out


def test_example_cycle_independent_of_start(example_runs):
    r1 = example_runs[(2.0, 2.0)][1]
    r2 = example_runs[(-1.0, -3.0)][1]
    assert r1.converged and r2.converged
    assert r1.relative_residual <= 1e-3
    assert r1.period_T == T
    assert abs(r1.w1_max - r2.w1_max) <= 0.02 * r1.w1_max


def test_example_cycle_symmetric_and_bounded(example_runs):
    r = example_runs[(2.0, 2.0)][1]
    assert r.w1_min <= 0 <= r.w1_max
    assert abs(r.w1_max + r.w1_min) <= 0.05 * r.w1_max
    assert r.x1_abs_max < amplitude_bound(EXAMPLE, L, T)
    assert r.w2_max_abs <= 1.05 * chatter_bound(EXAMPLE, L, T)


def test_return_map_contracts(example_runs):
    r = example_runs[(2.0, 2.0)][1]
    hist = r.residual_history[: r.n_transient_periods + 1]
    assert len(hist) >= 3
    assert all(b <= 1.1 * a for a, b in zip(hist, hist[1:]))


def test_zero_perturbation_degenerate_cycle():
    k2 = 1.1 * L
    g = Gains(1.8 * math.sqrt(k2 + L), k2)
    delta = 1e-5
    sc = Scenario(g, L, T, delta, State(1.0, 0.0), perturbation=PerturbationSpec((), T, 0.0))
    _, r = simulate(sc)
    assert r.converged
    assert r.w1_max <= 10 * delta


def test_delta_shrinks_residual_set_without_perturbation():
    k2 = 1.1 * L
    g = Gains(1.8 * math.sqrt(k2 + L), k2)
    sups = []
    for delta in (1e-3, 1e-4, 1e-5):
        sc = Scenario(g, L, T, delta, State(1.0, 1.0), perturbation=PerturbationSpec((), T, 0.0))
        _, r = simulate(sc)
        assert r.converged
        sups.append(r.x1_abs_max)
    assert all(b <= 1.1 * a for a, b in zip(sups, sups[1:]))


def test_detection_errors():
    div = integrate(SimConfig(2e6, delta=1.0), Gains(1.0, 1.25), PerturbationSpec.constant(L))
    with pytest.raises(DivergenceError):
        detect_limit_cycle(div, T)
    short = integrate(SimConfig(3 * T, delta=1e-3), EXAMPLE, ripple(L, T))
    with pytest.raises(InsufficientDataError):
        detect_limit_cycle(short, T)


def test_nonconvergence_is_reported():
    sc = Scenario(EXAMPLE, L, T, 1e-5, State(2.0, 2.0), max_periods=8)
    _, r = simulate(sc)
    assert not r.converged
    assert r.relative_residual == min(r.relative_history)


def test_w1_dominates_cycle_on_base():
    _, r = simulate(SWEEP_BASE)
    W1 = compute_bounds(SWEEP_BASE.gains, L, T, 0.5).W1
    assert r.converged and r.w1_max <= W1


def test_scenario_rescaling_is_exact():
    moved = SWEEP_BASE.at(L=10.0)
    assert moved.gains.k2 == pytest.approx(4 * 1.08)
    assert moved.gains.k1 == pytest.approx(2 * 1.76)
    assert moved.delta == pytest.approx(4e-5)
    t_moved = SWEEP_BASE.at(T=0.5)
    assert t_moved.gains == SWEEP_BASE.gains and t_moved.delta == pytest.approx(4e-5)


def test_sweep_rows_in_order_and_fits():
    rows = sweep(SWEEP_BASE, "L", [1.0, 5.0, 2.5])
    assert [r.param for r in rows] == [1.0, 5.0, 2.5]
    assert all(r.converged for r in rows)
    assert all(r.report.w1_max < r.bounds.amplitude_bound for r in rows)
    fit = fit_rows(rows, "linear")
    assert fit.r2 >= 0.98 and fit.n_points == 3
    assert fit_rows(rows[:1], "linear") is None


def test_parallel_sweep_matches_serial():
    serial = sweep(SWEEP_BASE, "T", [0.1, 0.5])
    parallel = sweep(SWEEP_BASE, "T", [0.1, 0.5], workers=2)
    assert [r.csv_cells() for r in serial] == [r.csv_cells() for r in parallel]


def test_sweep_records_failures(monkeypatch):
    def boom(sc, t_end=None):
        raise StwistError("synthetic failure")
    monkeypatch.setattr(analysis, "simulate", boom)
    rows = sweep(SWEEP_BASE, "k2", [0.5])
    assert rows[0].report is None and "synthetic failure" in rows[0].error
    cells = rows[0].csv_cells()
    assert cells[7] == "0" and cells[1] == "nan"


def test_sweep_rejects_unknown_parameter():
    with pytest.raises(ConfigurationError):
        sweep(SWEEP_BASE, "delta", [1.0])
    with pytest.raises(ConfigurationError):
        sweep(SWEEP_BASE, "L", [])


def test_report_dict_keys(example_runs):
    d = example_runs[(2.0, 2.0)][1].to_dict()
    assert set(d) >= {"converged", "return_map_residual", "period_T", "w1_max", "w1_min",
                      "w2_max_abs", "n_transient_periods"}
    assert np.isfinite(d["w1_max"])
