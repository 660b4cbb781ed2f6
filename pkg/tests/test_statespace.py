import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from afm.errors import ContainmentViolated, InvalidArgument, InvalidCertificate, NonFinite, NotResolved
from afm.iomap import check_causality, check_time_invariance, estimate_memory_horizon
from afm.seqcore import Sequence, right_shift
from afm.stability import contraction_certificate
from afm.statespace import (
    BetaFunction,
    StateSpaceSystem,
    compute_invariant_ball,
    contractive_tanh,
    estimate_beta,
    flow,
    io_map_of,
    linear_system,
    prop2_check,
    prop2_sweep,
    tapped_delay_realization,
    thm3_memory_bound,
    thm3_modulus_bound,
    thm4_bounds,
)
from afm.tcn import ReluNet, TCNModel

LIN = linear_system(0.5, 0.5, 1.0)
TANH2 = contractive_tanh([[0.4, 0.2], [-0.1, 0.5]], [1.0, 0.3], [1.0, 0.5])


def test_flow_examples():
    assert flow(LIN, [0.3], [1, 1, 1], 2, 2)[0] == 0.3
    assert flow(LIN, [0.0], [1, 1, 1], 0, 3)[0] == pytest.approx(0.875, abs=1e-15)
    with pytest.raises(InvalidArgument):
        flow(LIN, [0.0], [1.0], 2, 1)


@given(st.integers(0, 2**31 - 1), st.integers(0, 12), st.integers(0, 12), st.integers(0, 12))
def test_semiflow(seed, a, b, c):
    r, s, t = sorted((a, b, c))
    rng = np.random.default_rng(seed)
    u = Sequence(rng.uniform(-1, 1, size=t + 1))
    xi = rng.normal(size=2)
    direct = flow(TANH2, xi, u, r, t)
    split = flow(TANH2, flow(TANH2, xi, u, r, s), u, s, t)
    np.testing.assert_array_equal(direct, split)


def test_io_map_examples():
    y = io_map_of(LIN)(Sequence([1.0] * 4))
    assert y[3] == pytest.approx(0.875, abs=1e-15)
    zero = StateSpaceSystem(1, f=lambda X, u: 0.5 * X + u[..., None], g=lambda X: 0.0 * X[..., 0], xi=[0.0])
    assert io_map_of(zero)(Sequence([1.0, -2.0, 3.0])).sup_norm() == 0.0


def test_io_maps_pass_checkers():
    for sys in (LIN, TANH2):
        assert sys.is_time_invariant()
        F = io_map_of(sys)
        assert check_causality(F, 1.0).passed
        assert check_time_invariance(F, 1.0).passed
        assert sys.check_lipschitz(1.0) == []


def test_non_finite_detected():
    blow = linear_system(3.0, 1.0, 1.0)
    with pytest.raises(NonFinite):
        flow(blow, [1.0], np.ones(800), 0, 800)


def test_estimate_beta_linear_exact():
    beta = estimate_beta(LIN, 1.0, t_max=20, pairs=16, C_grid=[0.5, 1.0, 2.0])
    taus = np.arange(21)
    for C in (0.5, 1.0, 2.0):
        np.testing.assert_allclose(beta(C, taus), C * 0.5 ** taus, rtol=1e-12, atol=1e-15)
    assert beta(0.0, 3) == 0.0


def test_estimate_beta_nonincreasing_for_contractions():
    beta = estimate_beta(TANH2, 1.0, t_max=25, pairs=32)
    assert np.all(np.diff(beta.table, axis=1) <= 1e-15)
    assert beta.summable


def test_trajectory_deviation_examples():
    beta = BetaFunction.exponential(1.0, 0.5)
    lhs, rhs = prop2_check(LIN, beta, [1, 1, 1], [0, 0, 0], [0.0], 3)
    assert lhs == pytest.approx(0.875, abs=1e-12) and rhs == pytest.approx(0.875, abs=1e-12)
    u = np.random.default_rng(0).uniform(-1, 1, 8)
    assert prop2_check(LIN, beta, u, u, [0.2], 8) == (0.0, 0.0)


@pytest.mark.parametrize("sys,rate", [(LIN, 0.5), (TANH2, float(np.linalg.norm(TANH2.kernel.A, 2)))])
def test_trajectory_deviation_sweep_no_violations(sys, rate):
    rows = prop2_sweep(sys, BetaFunction.exponential(1.0, rate), trials=1000, t_max=50)
    assert np.all(rows[:, 1] <= rows[:, 2] * (1 + 1e-12) + 1e-14)


def test_series_memory_bound_examples():
    beta = BetaFunction.exponential(1.0, 0.5)
    assert thm3_memory_bound(beta, 2.0, 1.0, 0.01) == 9
    assert thm3_memory_bound(beta, 2.0, 1.0, 1e6) == 0
    assert thm3_memory_bound(beta, 2.0, 0.0, 0.01) == 0
    with pytest.raises(NotResolved):
        thm3_memory_bound(BetaFunction.power(1.0), 1.0, 1.0, 0.01)


def test_series_modulus_bound_examples():
    beta = BetaFunction.exponential(1.0, 0.5)
    assert thm3_modulus_bound(beta, 1.0, 1.0, 0.0, 10) == 0.0
    assert thm3_modulus_bound(beta, 1.0, 1.0, 0.1, None) == pytest.approx(0.2)
    assert thm3_modulus_bound(beta, 1.0, 1.0, 0.1, 0) == 0.0


def test_closed_form_bounds_examples():
    b = thm4_bounds(1.0, 0.25, 1.0, 1.0, 1.0, 0.01, 0.1)
    assert b.m_star_bound == pytest.approx(2 * math.log(800) / math.log(4), abs=1e-12)
    assert b.m_star_ceil == 10
    assert b.omega_bound == pytest.approx(0.2)
    edge = thm4_bounds(1.0, 0.25, 1.0, 1.0, 1.0, 2 / 0.25, 0.0)
    assert edge.m_star_bound == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(InvalidCertificate):
        thm4_bounds(1.0, 1.0, 1.0, 1.0, 1.0, 0.01, 0.1)
    with pytest.raises(InvalidArgument):
        thm4_bounds(1.0, 0.25, 1.0, 1.0, 1.0, 0.0, 0.1)


@given(st.floats(1.0, 50.0), st.floats(0.01, 0.95), st.floats(0.1, 3.0), st.floats(0.1, 3.0),
       st.floats(0.1, 3.0), st.floats(1e-5, 0.5))
def test_closed_form_memory_bound_matches_series(kappa, mu, L_f, L_g, R, eps):
    # with beta = sqrt(kappa) C mu^(t/2) on the invariant ball, the series bound is the
    # smallest integer strictly above the closed-form real bound
    b = thm4_bounds(kappa, mu, L_f, L_g, R, eps, 0.0)
    diam = 2 * math.sqrt(kappa) * L_f * R / (1 - math.sqrt(mu))
    m3 = thm3_memory_bound(BetaFunction.exponential(math.sqrt(kappa), math.sqrt(mu)), diam, L_g, eps)
    X = b.m_star_bound
    assert X <= m3 <= X + 1 + 1e-9
    if X > 0 and abs(X - round(X)) > 1e-6:
        assert b.m_star_ceil == m3


@pytest.mark.parametrize("eps", [0.1, 0.01, 0.001])
def test_series_bound_dominates_empirical(eps):
    cert = contraction_certificate(0.5, 1)
    ball = compute_invariant_ball(LIN, cert, 1.0)
    m3 = thm3_memory_bound(cert.beta(), ball.diam, LIN.L_g, eps)
    assert m3 >= estimate_memory_horizon(io_map_of(LIN), eps, 1.0, t_max=40).m_hat


def test_invariant_ball_examples():
    ones = linear_system(0.5, 1.0, 1.0)
    assert compute_invariant_ball(ones, contraction_certificate(0.5, 1), 1.0).radius == pytest.approx(2.0)
    assert compute_invariant_ball(ones, contraction_certificate(0.5, 1), 0.0).radius == 0.0
    ball = compute_invariant_ball(LIN, contraction_certificate(0.5, 1), 1.0)
    assert ball.radius == pytest.approx(1.0) and ball.diam == pytest.approx(2.0)


def test_invariant_ball_detects_bad_certificate():
    with pytest.raises(ContainmentViolated) as exc:
        compute_invariant_ball(LIN, contraction_certificate(0.1, 1), 1.0)
    assert exc.value.time is not None


def test_beta_forms():
    p = BetaFunction.power(2.0)
    assert p(3.0, 0) == 3.0 and p(3.0, 2) == pytest.approx(0.75)
    brute = sum(3.0 * k ** -2.0 for k in range(4, 200000))
    assert p.tail_sum(3.0, 4) == pytest.approx(brute, rel=1e-4)
    assert p.tail_sum(3.0, 0) == pytest.approx(3.0 + 3.0 * math.pi ** 2 / 6)
    assert not BetaFunction.power(1.0).summable


@given(st.floats(0.0, 0.99), st.floats(0.1, 5.0), st.floats(0.0, 10.0), st.integers(0, 40))
def test_exponential_beta_class_kl(rate, scale, C, m):
    b = BetaFunction.exponential(scale, rate)
    assert b(0.0, m) == 0.0
    assert b(C + 1.0, m) >= b(C, m)
    assert b(C, m + 1) <= b(C, m)
    brute = sum(b(C, k) for k in range(m, m + 4000))
    assert b.tail_sum(C, m) == pytest.approx(brute, rel=1e-9, abs=1e-300)


def test_tabulated_tail_majorant():
    beta = estimate_beta(LIN, 1.0, t_max=10, pairs=8, C_grid=[1.0, 2.0], tail_rate=0.5)
    brute = sum(float(beta(2.0, k)) for k in range(3, 400))
    assert beta.tail_sum(2.0, 3) == pytest.approx(brute, rel=1e-9)
    assert beta.tail_sum(2.0, 3) == pytest.approx(2.0 * 0.5 ** 3 / 0.5, rel=1e-9)


def test_tapped_delay_examples():
    delay = tapped_delay_realization(lambda W: W[..., 0], 1)
    u = Sequence([1.0, 2.0, 3.0])
    assert io_map_of(delay)(u) == Sequence(right_shift(u, 1).values[:3])
    square = tapped_delay_realization(lambda W: W[..., 0] ** 2, 0)
    assert io_map_of(square)(Sequence([2.0, -3.0])) == Sequence([4.0, 9.0])


@given(st.integers(0, 2**31 - 1), st.integers(0, 5))
def test_tapped_delay_matches_tcn(seed, m):
    rng = np.random.default_rng(seed)
    model, _ = TCNModel(ReluNet.random(m + 1, 5, 3, rng)).with_zero_at_zero()
    real = io_map_of(tapped_delay_realization(model.net.forward, m))
    U = rng.uniform(-1, 1, size=(8, 25))
    np.testing.assert_allclose(real.outputs(U), model.outputs(U), rtol=0, atol=1e-14)
