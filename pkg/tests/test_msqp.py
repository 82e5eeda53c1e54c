import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from instances import dense_active_set_reference, lqr, random_msqp
from uasmpc.msqp import (
    INFEASIBLE,
    MAX_ITER,
    OPTIMAL,
    MultistageQP,
    QPError,
    Stage,
    dense_reference,
    objective_bound,
    solve_qp,
)


def perturbed(qp, shift):
    stages = []
    for s in qp.stages:
        t = Stage.__new__(Stage)
        t.__dict__.update(s.__dict__)
        if s.C.shape[0]:
            t.c = s.c + shift
        stages.append(t)
    return MultistageQP(stages, qp.const)


def test_single_stage_equality():
    st_ = Stage(P=np.eye(2), q=np.zeros(2), lb=-np.inf, ub=np.inf, A=np.eye(2), b=np.ones(2))
    sol = solve_qp(MultistageQP([st_]))
    assert sol.status == OPTIMAL
    np.testing.assert_allclose(sol.z, [1, 1], atol=1e-8)
    assert sol.objective == pytest.approx(1.0)  # 0.5 * ||z||^2
    assert sol.kkt_residual <= 1e-9


def test_lqr_matches_dense_kkt():
    qp = lqr(5)
    sol = solve_qp(qp)
    z, J = dense_reference(qp)
    assert sol.status == OPTIMAL
    assert abs(sol.objective - J) <= 1e-8
    np.testing.assert_allclose(sol.z, z, atol=1e-7)


def test_contradictory_bounds_infeasible():
    st_ = Stage(P=np.eye(1), q=np.zeros(1), lb=1.0, ub=0.0)
    sol = solve_qp(MultistageQP([st_]))
    assert sol.status == INFEASIBLE
    assert objective_bound(MultistageQP([st_]), sol) == np.inf


def test_inequality_infeasibility_certificate():
    # z >= 1 together with z <= 0 written as a general inequality
    st_ = Stage(P=np.eye(1), q=np.zeros(1), lb=1.0, ub=np.inf, G=np.eye(1), w=[0.0])
    assert solve_qp(MultistageQP([st_])).status == INFEASIBLE


def test_coupling_infeasibility():
    qp = lqr(3, box=0.5)  # x0 = (1, 0) violates the box at stage 0
    assert solve_qp(qp).status == INFEASIBLE


def test_non_psd_cost_rejected():
    st_ = Stage(P=-np.eye(2), q=np.zeros(2), lb=-1.0, ub=1.0)
    with pytest.raises(QPError, match="invalid cost"):
        solve_qp(MultistageQP([st_]))


def test_coupling_shape_validated():
    a = Stage(P=np.eye(2), q=np.zeros(2), lb=-1, ub=1, C=np.eye(2), D=np.eye(3)[:2], c=np.zeros(2))
    b = Stage(P=np.eye(2), q=np.zeros(2), lb=-1, ub=1)
    with pytest.raises(QPError):
        MultistageQP([a, b])


def test_fixed_variables_are_honoured():
    qp = lqr(4)
    data = qp.flatten()
    lb, ub = data["lb"].copy(), data["ub"].copy()
    lb[2] = ub[2] = 0.3  # pin the first input
    sol = solve_qp(qp.with_bounds(lb, ub))
    assert sol.status == OPTIMAL
    assert sol.z[2] == 0.3


def test_bound_is_exact_at_optimum():
    qp = random_msqp(11)
    sol = solve_qp(qp)
    assert objective_bound(qp, sol) == pytest.approx(sol.objective, abs=1e-6 * max(1, abs(sol.objective)))


def test_early_termination_bound_is_valid():
    for seed in range(20):
        qp = random_msqp(seed, N=4)
        full = solve_qp(qp)
        early = solve_qp(qp, max_iter=3)
        assert early.status in (MAX_ITER, OPTIMAL)
        assert objective_bound(qp, early) <= full.objective + 1e-7 * max(1, abs(full.objective))


def test_max_iter_status():
    sol = solve_qp(random_msqp(3, N=5), max_iter=1)
    assert sol.status == MAX_ITER


def test_warm_start_not_slower():
    better = 0
    for seed in range(30):
        qp = random_msqp(seed, N=int(np.random.default_rng(seed).integers(2, 6)))
        sol = solve_qp(qp)
        qp2 = perturbed(qp, 1e-3)
        cold = solve_qp(qp2)
        warm = solve_qp(qp2, warm=sol)
        assert warm.status == cold.status == OPTIMAL
        assert warm.objective == pytest.approx(cold.objective, abs=1e-6 * max(1, abs(cold.objective)))
        better += warm.iterations <= cold.iterations
    assert better >= 27


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10**6))
def test_random_qp_matches_dense_reference(seed):
    qp = random_msqp(seed)
    sol = solve_qp(qp)
    assert sol.status == OPTIMAL
    _, J = dense_active_set_reference(qp)
    assert abs(sol.objective - J) <= 1e-6 * max(1.0, abs(J))


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 10**6))
def test_psd_costs_with_equalities(seed):
    qp = random_msqp(seed, ineq=False, pd=False)
    sol = solve_qp(qp)
    assert sol.status == OPTIMAL
    assert sol.kkt_residual <= 1e-6


def test_linear_scaling_in_horizon():
    per_iter = {}
    for N in (50, 100, 200, 400):
        qp = lqr(N, box=5.0)
        best = np.inf
        for _ in range(3):
            t = time.perf_counter()
            sol = solve_qp(qp)
            best = min(best, (time.perf_counter() - t) / max(sol.iterations, 1))
        per_iter[N] = best
    for N in (50, 100, 200):
        assert per_iter[2 * N] < 4 * per_iter[N], per_iter
    slope = np.polyfit(np.log(list(per_iter)), np.log(list(per_iter.values())), 1)[0]
    assert slope < 1.5, per_iter
