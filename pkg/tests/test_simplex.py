import numpy as np
import pytest

from fleetlab.errors import ContractViolation, InvalidArgument, LpInfeasible, LpUnbounded
from fleetlab.simplex import LpProblem, export_mps, solve

from oracles import lp_optimum_exact


def test_textbook_maximum():
    p = LpProblem(np.array([3.0, 2.0]),
                  np.array([[1.0, 1.0], [2.0, 1.0]]),
                  ["<=", "<="], np.array([4.0, 5.0]), maximize=True)
    s = solve(p)
    assert s.objective == pytest.approx(9.0, abs=1e-9)
    assert np.allclose(s.x, [1.0, 3.0], atol=1e-9)


def test_minimization_with_equality():
    p = LpProblem(np.array([1.0, 2.0, 0.0]),
                  np.array([[1.0, 1.0, 1.0], [1.0, -1.0, 0.0]]),
                  ["=", ">="], np.array([3.0, 1.0]), maximize=False)
    s = solve(p)
    assert s.objective == pytest.approx(1.0, abs=1e-9)   # x = (1, 0, 2)


def test_infeasible_detected():
    p = LpProblem(np.array([1.0]), np.array([[1.0], [1.0]]),
                  [">=", "<="], np.array([2.0, 1.0]), maximize=False)
    with pytest.raises(LpInfeasible):
        solve(p)


def test_unbounded_detected():
    p = LpProblem(np.array([1.0, 0.0]), np.array([[0.0, 1.0]]),
                  ["<="], np.array([1.0]), maximize=True)
    with pytest.raises(LpUnbounded):
        solve(p)


def test_negative_rhs_rows_are_flipped():
    # x >= 2 written as -x <= -2
    p = LpProblem(np.array([1.0]), np.array([[-1.0]]), ["<="],
                  np.array([-2.0]), maximize=False)
    s = solve(p)
    assert s.objective == pytest.approx(2.0, abs=1e-9)


def test_dimension_mismatch_rejected():
    with pytest.raises(InvalidArgument):
        LpProblem(np.array([1.0, 2.0]), np.array([[1.0]]), ["<="], np.array([1.0]))


def test_duals_satisfy_strong_duality():
    rng = np.random.default_rng(5)
    for _ in range(20):
        n, m = int(rng.integers(2, 5)), int(rng.integers(2, 5))
        c = rng.uniform(-1, 2, n)
        A = rng.uniform(0, 2, (m, n))
        b = rng.uniform(1, 5, m)
        p = LpProblem(c, A, ["<="] * m, b, maximize=True)
        s = solve(p)
        assert s.objective == pytest.approx(float(s.duals @ b), abs=1e-7)


def _random_bounded_lp(rng):
    n = int(rng.integers(2, 6))
    m = int(rng.integers(2, 6))
    c = np.round(rng.uniform(-3, 5, n), 2)
    A = np.round(rng.uniform(-2, 3, (m, n)), 2)
    senses = [rng.choice(["<=", ">=", "="]) if i else "<=" for i in range(m)]
    b = np.round(rng.uniform(0, 6, m), 2)
    # box row keeps every instance bounded so the vertex oracle is exact
    A = np.vstack([A, np.ones(n)])
    senses = senses + ["<="]
    b = np.append(b, 25.0)
    return LpProblem(c, A, senses, b, maximize=bool(rng.integers(0, 2)))


def test_matches_rational_vertex_enumeration_on_100_random_lps():
    rng = np.random.default_rng(7)
    checked = 0
    infeasible = 0
    while checked + infeasible < 100:
        p = _random_bounded_lp(rng)
        exact = lp_optimum_exact(p.objective, p.A, p.senses, p.b, p.maximize)
        if exact is None:
            with pytest.raises(LpInfeasible):
                solve(p)
            infeasible += 1
            continue
        s = solve(p)
        assert abs(s.objective - float(exact)) <= 1e-9 * max(1.0, abs(float(exact)))
        checked += 1
    assert checked >= 50          # generator must exercise plenty of feasible LPs


def test_degenerate_rhs_terminates():
    # many zero right-hand sides: the anti-stall path must still finish
    rng = np.random.default_rng(11)
    n, m = 12, 14
    A = rng.uniform(-1, 1, (m, n))
    b = np.zeros(m)
    b[-1] = 1.0
    A[-1] = np.abs(A[-1])
    p = LpProblem(rng.uniform(-1, 1, n), A, ["="] * (m - 1) + ["<="], b,
                  maximize=True)
    try:
        s = solve(p)
        assert (np.abs(p.residuals(s.x)) <= 1e-8).all()
    except LpInfeasible:
        pass


def test_mps_export_round_trip_structure(tmp_path):
    p = LpProblem(np.array([1.0, -2.0]), np.array([[1.0, 1.0], [1.0, -1.0]]),
                  ["<=", ">="], np.array([3.0, -1.0]), maximize=True, name="demo")
    path = tmp_path / "demo.mps"
    export_mps(p, path)
    text = path.read_text()
    lines = text.splitlines()
    assert lines[0].startswith("NAME")
    for section in ("ROWS", "COLUMNS", "RHS", "ENDATA"):
        assert any(line.startswith(section) for line in lines)
    # every referenced name fits fixed-format MPS (8 chars max)
    for token in ("R0000000", "R0000001", "C0000000", "C0000001"):
        assert token in text
        assert len(token) <= 8
