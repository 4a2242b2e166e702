import math
from dataclasses import replace

import numpy as np
import pytest

from goat_opt.environment import SYNTHETIC_DEFAULT
from goat_opt.errors import AllStartsFailed, InfeasibleProblem, NumericalBreakdown
from goat_opt.linkage import REFERENCE_LENGTHS
from goat_opt.objective import DecisionVector, TaskConfig, constraint_residuals
from goat_opt.optimizer import (
    OptimizerConfig,
    ProblemSpec,
    Solution,
    base_designs,
    build_starts,
    cluster_count,
    make_start,
    minimize_al,
    multi_start,
    pick_best,
    solve,
    with_contacts,
)

# Single run from the Table II design on the synthetic default environment.
TABLE2_RUN_OBJECTIVE = 0.14957629476315115


def quadratic(x, warm=None):
    f = (x[0] - 2.0) ** 2 + (x[1] - 1.0) ** 2
    c = np.array([x[0] + x[1] - 2.0])
    return f, c, max(float(c[0]), 0.0), None


@pytest.fixture(scope="module")
def problem(topo):
    return ProblemSpec(topo, SYNTHETIC_DEFAULT)


@pytest.fixture(scope="module")
def table2_solution(problem):
    return solve(problem, base_designs()[0])


def test_quadratic_benchmark():
    # KKT: x = (1.5, 0.5), multiplier 1
    cfg = OptimizerConfig(max_evals=5000, mu0=10.0)
    res = minimize_al(quadratic, [0.0, 0.0], [-10, -10], [10, 10], cfg)
    assert np.allclose(res["best"].x, [1.5, 0.5], atol=1e-6)


def test_bound_constrained_benchmark():
    # minimum of (x - 3)^2 on [0, 1] sits on the bound
    def fun(x, warm=None):
        return float((x[0] - 3.0) ** 2), np.zeros(1) - 1.0, 0.0, None

    res = minimize_al(fun, [0.2], [0.0], [1.0], OptimizerConfig(max_evals=500))
    assert res["best"].x[0] == pytest.approx(1.0, abs=1e-12)


def test_nan_raises_breakdown():
    def fun(x, warm=None):
        return math.nan, np.zeros(1), 0.0, None

    with pytest.raises(NumericalBreakdown):
        minimize_al(fun, [0.0], [-1.0], [1.0], OptimizerConfig())


def test_inverted_bounds_rejected(topo):
    bad = ProblemSpec(topo, SYNTHETIC_DEFAULT, task=TaskConfig(link_lo=50.0, link_hi=20.0))
    with pytest.raises(InfeasibleProblem):
        solve(bad, base_designs()[0])


def test_descent_from_feasible_start(problem, table2_solution):
    s = table2_solution
    assert s.feasible
    assert s.objective <= s.initial_objective
    assert s.objective == pytest.approx(TABLE2_RUN_OBJECTIVE, abs=1e-12)
    assert np.all(constraint_residuals(s.decision, problem.topo, problem.task) <= 1e-6)


def test_solve_deterministic(problem, table2_solution):
    again = solve(problem, base_designs()[0])
    assert again.to_dict() == table2_solution.to_dict()


def test_converged_status_implies_feasible(table2_solution):
    s = table2_solution
    assert s.status in ("converged", "max-iter", "infeasible")
    if s.status == "converged":
        assert s.max_violation <= 1e-6


def test_start_scale_covariance(problem):
    base = with_contacts(problem, base_designs()[0])
    d = make_start(base, 1.5, seed=3, perturbation=0.0)
    assert np.allclose(d.m_x, 1.5 * base.m_x) and np.allclose(d.n_x, 1.5 * base.n_x)
    assert np.allclose(d.lengths.independent(), 1.5 * base.lengths.independent())
    assert d.omega_lo == pytest.approx(1.5 * base.omega_lo) and d.omega_hi == pytest.approx(1.5 * base.omega_hi)


def test_start_seeding(problem):
    base = with_contacts(problem, base_designs()[0])
    a = make_start(base, 1.0, 4, 0.05)
    b = make_start(base, 1.0, 4, 0.05)
    c = make_start(base, 1.0, 5, 0.05)
    assert a.lengths == b.lengths and a.lengths != c.lengths
    assert a.lengths.is_symmetric()


def test_build_starts_layout(problem):
    starts = build_starts(problem, base_designs(), [0.5, 1.0], [0, 1, 2])
    assert len(starts) == 3 * 2 * 3
    assert [s.start_id for s in starts] == list(range(18))
    assert {(s.base, s.scale, s.seed) for s in starts} == {(b, k, r) for b in range(3) for k in (0.5, 1.0) for r in range(3)}


def test_single_start_equals_solve(problem):
    best, sols = multi_start(problem, base_designs()[:1], [1.0], [0])
    start = build_starts(problem, base_designs()[:1], [1.0], [0])[0]
    direct = solve(problem, start.decision, 0, 0)
    assert len(sols) == 1 and best.to_dict() == direct.to_dict()


def test_base_designs_assemble(problem):
    for d in base_designs():
        assert with_contacts(problem, d).m_x.size == problem.task.n_samples


def _sol(obj, viol, sid):
    return Solution(DecisionVector(REFERENCE_LENGTHS, 40.0, 100.0), obj, viol, sid, 0, 1, "max-iter")


def test_pick_best_and_clusters():
    sols = [_sol(0.3, 0.0, 0), _sol(0.1, 1e-3, 1), _sol(0.2, 0.0, 2), _sol(0.2 + 1e-8, 0.0, 3), _sol(math.inf, math.inf, 4)]
    best = pick_best(sols)
    assert best.start_id == 2
    assert cluster_count(sols, best) == 2
    tie = pick_best([_sol(0.2, 0.0, 5), _sol(0.2, 0.0, 1)])
    assert tie.start_id == 1
    assert pick_best([_sol(0.1, 1.0, 0)]) is None


def test_all_starts_failed(problem):
    tiny = replace(problem, config=replace(problem.config, max_evals=1))
    impossible = replace(tiny, task=TaskConfig(tip_upper=1.0, stroke=0.5))
    with pytest.raises(AllStartsFailed):
        multi_start(impossible, base_designs()[:1], [1.0], [0])
