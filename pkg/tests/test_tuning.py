import math

import numpy as np
import pytest

from stwist.analysis import Scenario
from stwist.errors import ConfigurationError
from stwist.fields import Gains
from stwist.tuning import (TuningProblem, TuningResult, constraint_report, k1_lower,
                           search_grid, tune_gains, validate_tuning)


def w1_oracle(k1, k2, L, T, n):
    gap = L - k2
    return (gap * n * T) ** 2 / (k1 - 2 * gap / k1) ** 2


def independent_flags(k1, k2, p):
    return {
        "k2_exceeds_mean_rate": k2 > abs(p.q_bar),
        "k1_limit_cycle": k1 >= 1.8 * math.sqrt(k2 + abs(p.q_bar)),
        "k1_w1_bound": k1 > math.sqrt(2 * (p.L - k2)),
        "under_tuned": 0 < k2 < p.L,
        "k1_saturation": k1 <= p.k1_max,
        "k2_saturation": k2 <= p.k2_max_fraction * p.L,
    }


@pytest.mark.parametrize("L,T", [(2.5, 2.0), (2.5, 0.25), (25.0, 0.25)])
def test_reaches_target_with_all_flags(L, T):
    p = TuningProblem(L, T, 0.01)
    res = tune_gains(p)
    assert res.feasible and res.note is None
    assert abs(res.W1 - 0.01) <= p.eps
    assert res.W1 <= 0.01 + p.eps
    flags = independent_flags(res.gains.k1, res.gains.k2, p)
    assert all(flags.values())
    assert flags == res.constraints


def test_result_beats_coarse_grid_oracle():
    p = TuningProblem(2.5, 0.25, 0.01)
    res = tune_gains(p)
    k2s = np.geomspace(0.01 * p.L, 0.55 * p.L, 50)
    best = math.inf
    for k2 in k2s:
        for k1 in np.geomspace(0.1, p.k1_max, 50):
            if all(independent_flags(k1, k2, p).values()):
                best = min(best, abs(w1_oracle(k1, k2, p.L, p.T, 0.5) - p.eta))
    assert abs(res.W1 - p.eta) <= best


def test_w1_decreases_in_k1_on_grid():
    p = TuningProblem(2.5, 0.25, 0.01)
    k1s, k2s, W, feasible = search_grid(p)
    for i2 in range(len(k2s)):
        row = W[i2][feasible[i2]]
        assert np.all(np.diff(row) < 0)


def test_deterministic():
    p = TuningProblem(25.0, 2.0, 0.01)
    assert tune_gains(p) == tune_gains(p)


def test_huge_target_gives_minimal_corner():
    p = TuningProblem(2.5, 0.25, 1e6)
    res = tune_gains(p)
    k2_min = 0.01 * p.L
    assert res.gains.k2 == pytest.approx(k2_min)
    assert res.gains.k1 == pytest.approx(k1_lower(k2_min, p), rel=1e-3)
    assert res.gains.k1 == pytest.approx(math.sqrt(2 * (p.L - k2_min)), rel=1e-3)
    assert all(res.constraints.values())


def test_saturation_marks_target_unmet():
    # published row-2 gains sit on these limits; W1 cannot come down to eta
    p = TuningProblem(25.0, 2.0, 0.01, k1_max=12.54, k2_max_fraction=12.9 / 25.0)
    res = tune_gains(p)
    assert res.feasible and res.note == "target_unmet"
    assert res.W1 > p.eta + p.eps
    assert res.gains.k1 <= 12.54 and res.gains.k2 <= 12.9 + 1e-12


def test_constructed_infeasibility():
    p = TuningProblem(2.5, 0.25, 0.01, k1_max=0.5, k2_max_fraction=0.05)
    res = tune_gains(p)
    assert not res.feasible and res.gains is None


def test_constraint_report_flags_violations():
    p = TuningProblem(2.5, 0.25, 0.01)
    flags = constraint_report(Gains(1.0, 2.0), p)
    assert not flags["k1_limit_cycle"]
    assert not flags["k2_saturation"]
    assert flags == independent_flags(1.0, 2.0, p)


def test_problem_validation():
    with pytest.raises(ConfigurationError) as err:
        TuningProblem(2.5, 0.25, 0.01, n_fraction=0.7)
    assert err.value.field == "n_fraction"
    with pytest.raises(ConfigurationError) as err:
        TuningProblem.from_dict({"L": 2.5, "T": 0.25})
    assert err.value.field == "eta"
    with pytest.raises(ConfigurationError) as err:
        TuningProblem(2.5, 0.25, 0.01, k2_max_fraction=1.0)
    assert err.value.field == "k2_max_fraction"
    p = TuningProblem.from_dict({"L": 2.5, "T": 0.25, "eta": 0.01})
    assert TuningProblem.from_dict(p.to_dict()) == p


def test_validate_published_row_three():
    g = Gains(1.76, 1.08)
    p = TuningProblem(2.5, 0.25, 0.01)
    W1 = w1_oracle(1.76, 1.08, 2.5, 0.25, 0.5)
    res = TuningResult(g, W1, constraint_report(g, p), True)
    v = validate_tuning(res, p)
    assert v.converged and v.within_W1
    assert 1e-4 <= v.simulated_abs_x1 <= 4e-4


def test_validate_tuned_gains():
    p = TuningProblem(2.5, 0.25, 0.01)
    res = tune_gains(p)
    v = validate_tuning(res, p, Scenario(res.gains, 1.0, 1.0, delta=1e-5))
    assert v.converged and v.within_W1


def test_validate_rejects_infeasible():
    p = TuningProblem(2.5, 0.25, 0.01)
    with pytest.raises(ConfigurationError):
        validate_tuning(TuningResult(None, None, {}, False), p)
