import numpy as np
import pytest
from scipy.optimize import Bounds, LinearConstraint, linprog
from scipy.optimize import milp as scipy_milp

from gridsplit import (
    MilpModel,
    SolverError,
    SolveStatus,
    solve_lp,
    solve_milp,
)


def test_single_bound_constraint():
    m = MilpModel()
    x = m.add_variable("x", 0, 10, objective=1.0)
    m.add_constraint({x: 1.0}, ">=", 3.0)
    rep = solve_lp(m)
    assert rep.status is SolveStatus.OPTIMAL
    assert rep.objective == pytest.approx(3.0, abs=1e-9)


def test_contradictory_rows_are_infeasible():
    m = MilpModel()
    x = m.add_variable("x", 0, 10, objective=1.0)
    m.add_constraint({x: 1.0}, "<=", 1.0)
    m.add_constraint({x: 1.0}, ">=", 2.0)
    assert solve_lp(m).status is SolveStatus.INFEASIBLE


def test_unbounded_lp_raises():
    m = MilpModel()
    m.add_variable("x", 0, np.inf, objective=-1.0)
    with pytest.raises(SolverError, match="unbounded"):
        solve_lp(m)


def test_free_variable_and_equality():
    # minimize 2x + y, x + y == 4, x >= -3, y in [0,5]:
    # pushing x down is worth it until y hits its cap, so x=-1, y=5
    m = MilpModel()
    x = m.add_variable("x", -np.inf, np.inf, objective=2.0)
    y = m.add_variable("y", 0, 5, objective=1.0)
    m.add_constraint({x: 1.0, y: 1.0}, "==", 4.0)
    m.add_constraint({x: 1.0}, ">=", -3.0)
    rep = solve_lp(m)
    assert rep.status is SolveStatus.OPTIMAL
    assert rep.objective == pytest.approx(3.0, abs=1e-7)
    assert rep.values[0] == pytest.approx(-1.0, abs=1e-7)
    assert rep.values[1] == pytest.approx(5.0, abs=1e-7)


def test_objective_offset_is_reported():
    m = MilpModel()
    x = m.add_variable("x", 0, 10, objective=1.0)
    m.add_constraint({x: 1.0}, ">=", 2.0)
    m.offset = 100.0
    assert solve_lp(m).objective == pytest.approx(102.0)


def test_knapsack_toy_milp():
    m = MilpModel()
    a = m.add_variable("a", 0, 1, integer=True, objective=-3.0)
    b = m.add_variable("b", 0, 1, integer=True, objective=-2.0)
    m.add_constraint({a: 1.0, b: 1.0}, "<=", 1.0)
    rep = solve_milp(m)
    assert rep.status is SolveStatus.OPTIMAL
    assert rep.objective == pytest.approx(-3.0)
    assert rep.values[a] == pytest.approx(1.0, abs=1e-6)


def test_pure_lp_through_milp_path():
    m = MilpModel()
    x = m.add_variable("x", 0, 4, objective=-1.0)
    y = m.add_variable("y", 0, 4, objective=-1.0)
    m.add_constraint({x: 1.0, y: 2.0}, "<=", 6.0)
    assert solve_milp(m).objective == pytest.approx(solve_lp(m).objective)


def test_integrality_rounds_the_relaxation_down():
    m = MilpModel()
    x = m.add_variable("x", 0, 10, integer=True, objective=-1.0)
    m.add_constraint({x: 2.0}, "<=", 7.0)
    assert solve_lp(m).objective == pytest.approx(-3.5)
    assert solve_milp(m).objective == pytest.approx(-3.0)


def test_integer_variable_needs_finite_integral_bounds():
    m = MilpModel()
    with pytest.raises(ValueError):
        m.add_variable("x", 0, np.inf, integer=True)
    with pytest.raises(ValueError):
        m.add_variable("x", 0.5, 2.5, integer=True)


def test_solver_is_deterministic():
    m = MilpModel()
    xs = [m.add_variable(f"x{i}", 0, 3, integer=True, objective=c)
          for i, c in enumerate([-2.0, -1.0, -3.0])]
    m.add_constraint({xs[0]: 1.0, xs[1]: 2.0, xs[2]: 1.5}, "<=", 5.0)
    first = solve_milp(m)
    second = solve_milp(m)
    assert first.objective == second.objective
    assert np.array_equal(first.values, second.values)


def test_lp_text_round_trips_key_parts():
    m = MilpModel("demo")
    x = m.add_variable("x1", 0, 2, integer=True, objective=1.5)
    m.add_constraint({x: 1.0}, ">=", 1.0, name="floor")
    m.offset = 7.0
    text = m.to_lp_string()
    assert "Minimize" in text and "Generals" in text
    assert "floor:" in text and "x1" in text
    assert "offset: 7.0" in text


# ---------------------------------------------------------------------------
# randomized cross-checks against scipy
# ---------------------------------------------------------------------------

def _random_model(rng, with_integers):
    n = rng.integers(2, 7)
    m_rows = rng.integers(1, 6)
    model = MilpModel("fuzz")
    for j in range(n):
        up = float(rng.uniform(0.5, 8.0))
        integer = bool(with_integers and rng.random() < 0.5)
        if integer:
            up = float(int(up) + 1)
        model.add_variable(f"v{j}", 0.0, up, integer=integer,
                           objective=float(rng.uniform(-5, 5)))
    for _ in range(m_rows):
        cols = rng.choice(n, size=rng.integers(1, n + 1), replace=False)
        coeffs = {int(j): float(rng.uniform(-3, 3)) for j in cols}
        sense = ("<=", ">=", "==")[rng.integers(0, 3)]
        model.add_constraint(coeffs, sense, float(rng.uniform(-4, 8)))
    return model


def _scipy_parts(model):
    a, senses, b, lower, upper, cost = model.dense()
    lb = np.array([-np.inf if s == "<=" else b[i]
                   for i, s in enumerate(senses)])
    ub = np.array([np.inf if s == ">=" else b[i]
                   for i, s in enumerate(senses)])
    return a, lb, ub, lower, upper, cost


def test_lp_fuzz_matches_linprog():
    rng = np.random.default_rng(20240817)
    checked = 0
    for _ in range(60):
        model = _random_model(rng, with_integers=False)
        a, senses, b, lower, upper, cost = model.dense()
        rows_ub, rhs_ub, rows_eq, rhs_eq = [], [], [], []
        for i, s in enumerate(senses):
            if s == "<=":
                rows_ub.append(a[i]); rhs_ub.append(b[i])
            elif s == ">=":
                rows_ub.append(-a[i]); rhs_ub.append(-b[i])
            else:
                rows_eq.append(a[i]); rhs_eq.append(b[i])
        res = linprog(cost,
                      A_ub=np.array(rows_ub) if rows_ub else None,
                      b_ub=np.array(rhs_ub) if rows_ub else None,
                      A_eq=np.array(rows_eq) if rows_eq else None,
                      b_eq=np.array(rhs_eq) if rows_eq else None,
                      bounds=list(zip(lower, upper)), method="highs")
        rep = solve_lp(model)
        if res.status == 2:
            assert rep.status is SolveStatus.INFEASIBLE
            continue
        assert res.status == 0 and rep.status is SolveStatus.OPTIMAL
        assert rep.objective == pytest.approx(res.fun, abs=1e-6, rel=1e-6)
        checked += 1
    assert checked >= 20  # the draw must keep exercising the optimal path


def test_milp_fuzz_matches_scipy_branch_and_bound():
    rng = np.random.default_rng(987123)
    checked = 0
    for _ in range(40):
        model = _random_model(rng, with_integers=True)
        a, lb, ub, lower, upper, cost = _scipy_parts(model)
        res = scipy_milp(
            c=cost, constraints=LinearConstraint(a, lb, ub),
            bounds=Bounds(lower, upper),
            integrality=np.array(model.is_integer, dtype=float))
        rep = solve_milp(model)
        if res.status == 2:
            assert rep.status is SolveStatus.INFEASIBLE
            continue
        assert res.status == 0 and rep.status is SolveStatus.OPTIMAL
        assert rep.objective == pytest.approx(res.fun, abs=1e-6, rel=1e-6)
        checked += 1
    assert checked >= 12
