import logging

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import linprog

from sparsesrc import certificate, forward


def certificate_feasible_highs(model, J, delta):
    """Same feasibility question posed directly in R^n and handed to HiGHS."""
    P = model.projection_matrix()
    N = (P / model.weights).T  # row i: P e_i / w_i
    n = P.shape[0]
    Jc = np.setdiff1d(np.arange(n), J)
    res = linprog(np.zeros(n), A_ub=N[Jc], b_ub=np.full(Jc.size, 1 - delta), A_eq=N[J], b_eq=np.ones(len(J)),
                  bounds=[(None, None)] * n, method="highs")
    return res.status == 0


def toy_model():
    return forward.ForwardModel.from_matrix(np.array([[1.0, 0.0, 1.0], [0.0, 1.0, 1.0]]))


def test_identity_operator_certifies_every_support():
    model = forward.ForwardModel.from_matrix(np.eye(6))
    rep = certificate.check_certificate(model, [1, 4], delta=0.5)
    assert rep.feasible
    on, off = certificate.certificate_margin(model, rep.J, rep.c)
    np.testing.assert_allclose(on, 1.0)
    assert off <= 0.5 + 1e-12
    assert rep.gamma_hat == pytest.approx(off)
    assert rep.to_dict()["verdict"] == "certificate found"


def test_pair_certificate_satisfies_equalities():
    rng = np.random.default_rng(0)
    model = forward.ForwardModel.from_matrix(rng.standard_normal((7, 15)))
    for j1, j2 in [(0, 1), (3, 11), (14, 2)]:
        c = certificate.pair_certificate(model, j1, j2)
        on, _ = certificate.certificate_margin(model, [j1, j2], c)
        np.testing.assert_allclose(on, 1.0, atol=1e-12)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), size=st.integers(1, 4), delta=st.sampled_from([1e-3, 0.05, 0.2]))
def test_feasibility_verdict_matches_highs(seed, size, delta):
    rng = np.random.default_rng(seed)
    model = forward.ForwardModel.from_matrix(rng.standard_normal((8, 20)))
    J = np.sort(rng.choice(20, size=size, replace=False))
    rep = certificate.check_certificate(model, J, delta=delta)
    assert rep.feasible == certificate_feasible_highs(model, J, delta)
    if rep.feasible:
        on, off = certificate.certificate_margin(model, J, rep.c)
        np.testing.assert_allclose(on, 1.0, atol=1e-8)
        assert off <= 1 - delta + 1e-8


def test_singletons_always_certified_for_generic_matrix():
    # c = P e_j / w_j works by Cauchy-Schwarz whenever no two columns of P are parallel
    rng = np.random.default_rng(1)
    model = forward.ForwardModel.from_matrix(rng.standard_normal((8, 20)))
    for j in range(20):
        assert certificate.check_certificate(model, [j]).feasible


def test_optimized_certificate_has_no_smaller_margin():
    rng = np.random.default_rng(2)
    model = forward.ForwardModel.from_matrix(rng.standard_normal((8, 20)))
    J = [3, 9]
    plain = certificate.check_certificate(model, J)
    best = certificate.max_margin_certificate(model, J)
    assert plain.feasible and best.feasible
    assert best.delta >= 1 - plain.gamma_hat - 1e-9
    assert best.gamma_hat == pytest.approx(1 - best.delta, abs=1e-8)
    # the optimal margin is infeasible for any larger delta
    assert not certificate_feasible_highs(model, J, best.delta + 1e-4)


def test_invalid_supports_rejected():
    model = toy_model()
    for J in ([], [5], [-1]):
        with pytest.raises(ValueError):
            certificate.check_certificate(model, J)
    with pytest.raises(ValueError):
        certificate.check_certificate(model, [0], delta=0.0)


def test_low_weight_support_is_flagged(caplog):
    A = np.array([[1.0, 0.0, 0.0, 1e-6], [0.0, 1.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0]])
    model = forward.ForwardModel.from_matrix(A)
    with caplog.at_level(logging.WARNING, logger="sparsesrc.certificate"):
        rep = certificate.check_certificate(model, [0, 3])
    assert rep.low_weight == [3]
    assert "near-null" in caplog.text


# ------------------------------------------------------------ basis pursuit


def test_toy_basis_pursuit_prefers_shared_column():
    model = toy_model()
    np.testing.assert_allclose(model.weights, np.sqrt(2 / 3))
    x = certificate.solve_basis_pursuit(model, np.array([1.0, 1.0]))
    np.testing.assert_allclose(x, [0.0, 0.0, 1.0], atol=1e-12)


def test_zero_data_gives_zero():
    x = certificate.solve_basis_pursuit(toy_model(), np.zeros(2))
    np.testing.assert_array_equal(x, 0.0)


def test_box_makes_toy_infeasible():
    model = toy_model()
    with pytest.raises(certificate.BasisPursuitInfeasible):
        certificate.solve_basis_pursuit(model, np.array([1.0, 1.0]), s=0.4)
    x = certificate.solve_basis_pursuit(model, np.array([1.0, 1.0]), s=0.6)
    np.testing.assert_allclose(model.A @ x, [1.0, 1.0], atol=1e-12)
    assert x.max() <= 0.6 + 1e-12
    with pytest.raises(ValueError):
        certificate.solve_basis_pursuit(model, np.array([1.0, 1.0]), s=0.0)


def test_basis_pursuit_matches_highs():
    rng = np.random.default_rng(3)
    for _ in range(30):
        model = forward.ForwardModel.from_matrix(rng.standard_normal((6, 14)))
        b = model.A @ (rng.uniform(0, 1, 14) * (rng.random(14) < 0.3))
        x = certificate.solve_basis_pursuit(model, b, s=2.0)
        ref = linprog(model.weights, A_eq=model.A, b_eq=b, bounds=[(0, 2.0)] * 14, method="highs")
        assert model.weights @ x == pytest.approx(ref.fun, rel=1e-8, abs=1e-10)


def test_certified_support_is_recovered_exactly():
    rng = np.random.default_rng(4)
    hits = 0
    for _ in range(40):
        model = forward.ForwardModel.from_matrix(rng.standard_normal((8, 16)))
        J = np.sort(rng.choice(16, size=2, replace=False))
        if not certificate.check_certificate(model, J).feasible:
            continue
        hits += 1
        x_star = np.zeros(16)
        x_star[J] = rng.uniform(0.5, 2.0, 2)
        y = certificate.solve_basis_pursuit(model, model.A @ x_star)
        assert set(np.flatnonzero(y > 1e-9)) <= set(J)
        assert model.weights @ y == pytest.approx(model.weights @ x_star, abs=1e-7)
    assert hits >= 10
