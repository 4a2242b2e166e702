import math

import numpy as np
import pytest

from goat_opt.environment import SYNTHETIC_DEFAULT, RectRegion, cdf_rect_montecarlo, cdf_rect_riemann
from goat_opt.linkage import REFERENCE_LENGTHS, LinkLengths
from goat_opt.objective import (
    DecisionVector,
    TaskConfig,
    WeightParams,
    constraint_names,
    constraint_residuals,
    derive_gamma_tilde,
    evaluate,
    sample_workspace,
    weight,
    weighted_objective,
)
from goat_opt.statics import StaticsParams

# Table II lengths over [38.02, 128.5] on the synthetic default environment.
TABLE2_OBJECTIVE = 0.19606457404551914
TABLE2_STROKE = 28.06879071647671

WP = WeightParams()
TASK = TaskConfig()


@pytest.fixture(scope="module")
def table2(topo):
    d = DecisionVector(REFERENCE_LENGTHS, 38.02, 128.5)
    return d, evaluate(d, topo, SYNTHETIC_DEFAULT, TASK, StaticsParams(), WP)


def test_gamma_tilde():
    assert derive_gamma_tilde(0.1, 1.5, 3.5) == pytest.approx(2.25, abs=1e-15)
    assert derive_gamma_tilde(1e9, 1.5, 3.5) == pytest.approx(3.5, abs=1e-8)
    with pytest.raises(ValueError):
        derive_gamma_tilde(0.1, 1.5, 1.5)


def test_weight_values():
    assert WP.gamma_tilde == 2.25
    assert weight(3.5, WP) == pytest.approx(0.934375, abs=1e-12)
    assert weight(1.5 + 1e-6, WP) < -1e4
    assert weight(1.5, WP) == -math.inf
    assert weight(0.3, WP) == -math.inf


def test_weight_shape():
    h = 1e-6
    assert abs((weight(3.5 + h, WP) - weight(3.5 - h, WP)) / (2 * h)) < 1e-6
    sf = np.linspace(1.5 + 1e-4, 30.0, 10_000)
    w = weight(sf, WP)
    assert np.all(w < 1)
    up = sf < 3.5
    assert np.all(np.diff(w[up]) > 0) and np.all(np.diff(w[~up]) < 0)


def test_weight_params_validation():
    with pytest.raises(ValueError):
        WeightParams(alpha=0.1, phi=2.0, gamma=1.0)
    with pytest.raises(ValueError):
        WeightParams(gamma_tilde=4.0)


def test_sample_workspace():
    s = sample_workspace(38.02, 128.5, 20)
    assert s[0] == 38.02 and s[-1] == 128.5
    assert np.allclose(np.diff(s), (128.5 - 38.02) / 19)
    assert list(sample_workspace(1.0, 2.0, 2)) == [1.0, 2.0]
    with pytest.raises(ValueError):
        sample_workspace(5.0, 5.0, 10)


def test_weighted_objective_arithmetic():
    assert weighted_objective([1.0, 1.0, 1.0], [0.5, 0.332]) == pytest.approx(0.168, abs=1e-15)


def test_table2_regression(table2):
    _, (obj, samples) = table2
    assert obj == TABLE2_OBJECTIVE
    assert len(samples) == TASK.n_samples


def test_table2_samples_consistent(table2):
    _, (obj, samples) = table2
    for s in samples:
        assert s.h_i == abs(s.m_i[0] - s.n_i[0])
        assert s.weight_i < 1
        assert s.cdf_delta_i >= 0
        assert s.m_i[1] == pytest.approx(s.omega_i / 2 + TASK.psi, abs=1e-9)
    assert sum(s.cdf_delta_i for s in samples) <= 1 + 1e-6


def test_objective_against_quadrature_oracles(table2):
    """Recompute each rectangle mass with the generic CDF routines."""
    _, (obj, samples) = table2
    riemann, mc = 0.0, 0.0
    for a, b in zip(samples[:-1], samples[1:]):
        reg = RectRegion(a.omega_i, b.omega_i, a.h_i, TASK.h_upper)
        riemann += a.weight_i * cdf_rect_riemann(SYNTHETIC_DEFAULT, reg)
        mc += a.weight_i * cdf_rect_montecarlo(SYNTHETIC_DEFAULT, reg, 200_000, seed=0)
    assert obj == pytest.approx(1 - riemann, abs=1e-4)
    assert obj == pytest.approx(1 - mc, abs=5e-3)


def test_evaluate_deterministic(topo, table2):
    d, (obj, _) = table2
    assert evaluate(d, topo, SYNTHETIC_DEFAULT, TASK, StaticsParams(), WP)[0] == obj


def test_degenerate_range(topo):
    ev = evaluate(DecisionVector(REFERENCE_LENGTHS, 60.0, 60.0), topo, SYNTHETIC_DEFAULT, TASK, StaticsParams(), WP)
    assert ev.objective == math.inf and ev.diagnostic == "DegenerateRange"


def test_unreachable_is_infinite(topo):
    ev = evaluate(DecisionVector(REFERENCE_LENGTHS, 40.0, 400.0), topo, SYNTHETIC_DEFAULT, TASK, StaticsParams(), WP)
    assert ev.objective == math.inf and ev.diagnostic.startswith("Unreachable")


def test_low_safety_factor_is_rejected(topo):
    weak = StaticsParams(f_actuator=20.0)
    ev = evaluate(DecisionVector(REFERENCE_LENGTHS, 38.02, 128.5), topo, SYNTHETIC_DEFAULT, TASK, weak, WP)
    assert ev.objective == math.inf and ev.diagnostic == "SafetyFactorBelowBound"


def test_wider_range_lowers_objective_at_fixed_weights(topo):
    ones = WeightParams(alpha=1e-9, phi=1e-3, gamma=1e5)  # weights within 1e-6 of 1
    narrow = evaluate(DecisionVector(REFERENCE_LENGTHS, 60.0, 90.0), topo, SYNTHETIC_DEFAULT, TASK, StaticsParams(), ones)
    wide = evaluate(DecisionVector(REFERENCE_LENGTHS, 45.0, 110.0), topo, SYNTHETIC_DEFAULT, TASK, StaticsParams(), ones)
    assert wide.objective < narrow.objective


def test_constraints_table2(topo):
    d = DecisionVector(REFERENCE_LENGTHS, 38.02, 128.5)
    r = dict(zip(constraint_names(TASK), constraint_residuals(d, topo, TASK)))
    assert len(r) == len(constraint_names(TASK))
    assert all(v <= 0 for v in r.values())
    assert r["L10>=lo"] == 0.0
    assert r["stroke"] + TASK.stroke == pytest.approx(TABLE2_STROKE, abs=1e-7)


def test_short_link_residual(topo):
    short = LinkLengths({**REFERENCE_LENGTHS.lengths, "L2": 5.0, "L7": 5.0})
    r = dict(zip(constraint_names(TASK), constraint_residuals(DecisionVector(short, 38.02, 128.5), topo, TASK)))
    assert r["L2>=lo"] == 5.0


def test_decision_json_round_trip():
    d = DecisionVector(REFERENCE_LENGTHS, 38.0, 120.0, np.arange(3.0), np.ones(3))
    e = DecisionVector.from_dict(d.to_dict())
    assert e.lengths == d.lengths and np.array_equal(e.m_x, d.m_x) and e.omega_hi == 120.0
