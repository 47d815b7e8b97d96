import numpy as np
import pytest

from activeset_oracle import random_box_qp, solve_reference
from willems import QuadraticProgram, solve_qp


def test_problem_validation():
    with pytest.raises(ValueError):
        QuadraticProgram(np.array([[1.0, 2.0], [0.0, 1.0]]), np.zeros(2))
    with pytest.raises(ValueError):
        QuadraticProgram(np.eye(2), np.zeros(3))
    with pytest.raises(ValueError):
        QuadraticProgram(np.eye(1), np.zeros(1), lb=[1.0], ub=[0.0])
    with pytest.raises(ValueError):
        QuadraticProgram(np.eye(1), np.zeros(1), Aeq=np.eye(1))  # beq missing
    prob = QuadraticProgram(np.eye(2), np.ones(2))
    assert np.all(np.isinf(prob.lb)) and np.all(np.isinf(prob.ub))
    assert prob.objective([1.0, 0.0]) == pytest.approx(1.5)


def test_unconstrained_quadratic():
    # min 0.5 x'x - (1,2)'x at x = (1, 2), objective -2.5
    sol = solve_qp(QuadraticProgram(np.eye(2), [-1.0, -2.0]))
    assert sol.status == "optimal"
    assert np.allclose(sol.x, [1.0, 2.0], atol=1e-8)
    assert sol.objective == pytest.approx(-2.5, abs=1e-9)
    assert sol.kkt_residual <= 1e-8


def test_clipped_box_solution():
    # separable: min (x-3)^2 + (y+1)^2 over [0,2] x [0,2]
    prob = QuadraticProgram(
        2 * np.eye(2), [-6.0, 2.0], lb=[0.0, 0.0], ub=[2.0, 2.0]
    )
    sol = solve_qp(prob)
    assert sol.status == "optimal"
    assert np.allclose(sol.x, [2.0, 0.0], atol=1e-9)


def test_equality_constrained_hand_case():
    # min 0.5 (x^2 + y^2) subject to x + y = 2: x = y = 1
    prob = QuadraticProgram(np.eye(2), np.zeros(2), Aeq=[[1.0, 1.0]], beq=[2.0])
    sol = solve_qp(prob)
    assert sol.status == "optimal"
    assert np.allclose(sol.x, [1.0, 1.0], atol=1e-9)
    assert sol.objective == pytest.approx(1.0, abs=1e-9)


def test_redundant_equalities_are_fine():
    # the same constraint twice: rank-deficient but consistent
    prob = QuadraticProgram(
        np.eye(2),
        np.zeros(2),
        Aeq=[[1.0, 1.0], [2.0, 2.0]],
        beq=[2.0, 4.0],
    )
    sol = solve_qp(prob)
    assert sol.status == "optimal"
    assert np.allclose(sol.x, [1.0, 1.0], atol=1e-8)


def test_singular_objective_minimum_norm():
    # cost only on x0; the equality leaves (x1, x2) free, the polish picks
    # the minimum-norm completion
    P = np.zeros((3, 3))
    P[0, 0] = 2.0
    prob = QuadraticProgram(
        P, [-2.0, 0.0, 0.0], Aeq=[[1.0, 1.0, 1.0]], beq=[3.0]
    )
    sol = solve_qp(prob)
    assert sol.status == "optimal"
    assert sol.x[0] == pytest.approx(1.0, abs=1e-7)
    assert sol.x[1] == pytest.approx(sol.x[2], abs=1e-7)


def test_inconsistent_equalities_detected():
    prob = QuadraticProgram(
        np.eye(1), np.zeros(1), Aeq=[[1.0], [1.0]], beq=[0.0, 1.0]
    )
    assert solve_qp(prob).status == "infeasible"


def test_box_equality_conflict_detected():
    # x must equal 5 but the box stops at 1
    prob = QuadraticProgram(
        np.eye(2),
        np.zeros(2),
        Aeq=[[1.0, 0.0]],
        beq=[5.0],
        lb=[-1.0, -1.0],
        ub=[1.0, 1.0],
    )
    sol = solve_qp(prob)
    assert sol.status == "infeasible"


def test_unbounded_direction_detected():
    # zero curvature, linear drift, no bounds
    sol = solve_qp(QuadraticProgram(np.zeros((1, 1)), [-1.0]))
    assert sol.status == "unbounded"


def test_pinned_coordinates():
    # lb == ub pins the coordinate exactly
    prob = QuadraticProgram(
        np.eye(2), np.zeros(2), lb=[0.7, -np.inf], ub=[0.7, np.inf]
    )
    sol = solve_qp(prob)
    assert sol.status == "optimal"
    assert sol.x[0] == pytest.approx(0.7, abs=1e-10)
    assert sol.x[1] == pytest.approx(0.0, abs=1e-10)


def test_ridge_changes_the_problem():
    # min -x on [0, 1] sits at 1; a strong ridge pulls the optimum inside
    prob = QuadraticProgram(np.zeros((1, 1)), [-1.0], lb=[0.0], ub=[1.0])
    plain = solve_qp(prob)
    assert plain.x[0] == pytest.approx(1.0, abs=1e-8)
    ridged = solve_qp(prob, ridge=2.0)
    assert ridged.x[0] == pytest.approx(0.5, abs=1e-8)


def test_reported_residual_is_honest():
    rng = np.random.default_rng(33)
    for _ in range(30):
        P, q, Aeq, beq, lb, ub = random_box_qp(rng)
        prob = QuadraticProgram(P, q, Aeq=Aeq, beq=beq, lb=lb, ub=ub)
        sol = solve_qp(prob)
        assert sol.status == "optimal"
        assert sol.kkt_residual <= 1e-8
        assert sol.objective == pytest.approx(prob.objective(sol.x), abs=1e-12)


def test_matches_reference_on_strictly_convex_batch():
    rng = np.random.default_rng(100)
    for _ in range(60):
        P, q, Aeq, beq, lb, ub = random_box_qp(rng)
        prob = QuadraticProgram(P, q, Aeq=Aeq, beq=beq, lb=lb, ub=ub)
        sol = solve_qp(prob)
        ref_obj, ref_x, unique = solve_reference(P, q, Aeq, beq, lb, ub)
        assert sol.status == "optimal"
        assert sol.objective == pytest.approx(ref_obj, abs=1e-6)
        if unique:
            assert np.allclose(sol.x, ref_x, atol=1e-5)


def test_matches_reference_on_singular_batch():
    rng = np.random.default_rng(200)
    for _ in range(40):
        P, q, Aeq, beq, lb, ub = random_box_qp(rng, singular=True)
        prob = QuadraticProgram(P, q, Aeq=Aeq, beq=beq, lb=lb, ub=ub)
        sol = solve_qp(prob)
        ref_obj, ref_x, unique = solve_reference(P, q, Aeq, beq, lb, ub)
        assert sol.status == "optimal"
        assert sol.objective == pytest.approx(ref_obj, abs=1e-6)
        if unique:
            assert np.allclose(sol.x, ref_x, atol=1e-5)
