import math

import numpy as np
import pytest

from tcpfluid import (
    CUBIC,
    FROZEN,
    RENO,
    FlowState,
    HistoryBuffer,
    InitialHistory,
    IntegrationError,
    SystemParams,
    WindowFunction,
    convergence_order_check,
    integrate,
    reno_steady_state,
)
from scalar_reno import integrate_scalar_reno


def test_initial_history_constant_validation():
    hist = InitialHistory.constant(2.0, 0.5)
    assert hist(0.0) == FlowState(2.0, 0.5)
    assert hist(-0.7) == FlowState(2.0, 0.5)
    with pytest.raises(ValueError):
        InitialHistory.constant(0.0, 0.5)
    with pytest.raises(ValueError):
        InitialHistory.constant(2.0, -0.1)


def test_history_buffer_is_exact_on_cubics():
    # Cubic Hermite reproduces cubic polynomials exactly, so samples of
    # w_max = t^3 and s = t^2 with their true derivatives interpolate with
    # zero error at midpoints and interior query times.
    h = 0.5
    buf = HistoryBuffer(h, InitialHistory.constant(1.0, 0.0))
    for i in range(6):
        t = i * h
        buf.append(FlowState(t**3, t**2), (3.0 * t**2, 2.0 * t))
    for i in range(5):
        t_mid = (i + 0.5) * h
        mid = buf.at_midpoint(i)
        assert mid.w_max == pytest.approx(t_mid**3, abs=1e-12)
        assert mid.s == pytest.approx(t_mid**2, abs=1e-12)
    for t in (0.125, 0.6, 1.93, 2.5):
        q = buf.query(t)
        assert q.w_max == pytest.approx(t**3, abs=1e-12)
        assert q.s == pytest.approx(t**2, abs=1e-12)
    assert buf.at_sample(3) == FlowState(1.5**3, 1.5**2)
    assert buf.at_sample(-2) == FlowState(1.0, 0.0)
    with pytest.raises(LookupError):
        buf.query(10.0)


def test_integrate_validates_step(canonical_params):
    init = InitialHistory.constant(100.0, 1.0)
    with pytest.raises(ValueError):
        integrate(canonical_params, CUBIC, init, 1.0, canonical_params.tau / 3)
    with pytest.raises(ValueError):
        integrate(canonical_params, CUBIC, init, 1.0, canonical_params.tau * 0.11)
    with pytest.raises(ValueError):
        integrate(canonical_params, CUBIC, init, -1.0, canonical_params.tau / 8)


def test_fixed_point_is_stationary(canonical_params, canonical_fp):
    init = InitialHistory.constant(canonical_fp.w_hat, canonical_fp.s_hat)
    traj = integrate(
        canonical_params, CUBIC, init, 100 * canonical_params.tau,
        canonical_params.tau / 16,
    )
    drift = np.max(np.abs(traj.w - canonical_fp.w_hat)) / canonical_fp.w_hat
    assert drift < 1e-6


def test_sub_bdp_frozen_flow_is_exact(canonical_params):
    # Below the bandwidth-delay product the loss rate is exactly zero, so
    # w_max must hold bit for bit and the epoch clock advances linearly.
    init = InitialHistory.constant(5.0, 0.0)
    traj = integrate(canonical_params, FROZEN, init, 50 * canonical_params.tau,
                     canonical_params.tau / 8)
    assert np.all(traj.w_max == 5.0)
    assert np.all(traj.p == 0.0)
    assert np.max(np.abs(traj.s - traj.t)) < 1e-12


def test_reno_pair_matches_scalar_oracle():
    params = SystemParams(capacity=100.0, tau=0.1, b=0.2, c=0.4)
    fp = reno_steady_state(params)
    w_max0, s0 = 1.1 * fp.w_hat, fp.s_hat
    k = 16
    traj = integrate(params, RENO, InitialHistory.constant(w_max0, s0),
                     50 * params.tau, params.tau / k)
    oracle = integrate_scalar_reno(params, 0.5 * w_max0 + s0 / params.tau,
                                  50 * params.tau, k)
    assert len(oracle) == len(traj.w)
    worst = max(abs(a - b) / b for a, b in zip(traj.w, oracle))
    assert worst < 1e-6


def test_observed_order_is_four_on_smooth_path(unit_params, unit_fp):
    # Window stays above the loss-probability kink for this initial offset.
    init = InitialHistory.constant(1.05 * unit_fp.w_hat, unit_fp.s_hat)
    order = convergence_order_check(unit_params, CUBIC, init, 4.0, base_k=8)
    assert 3.5 <= order <= 4.6


def test_observed_order_is_inf_on_exact_solution(unit_params):
    # Sub-bdp frozen flow: w_max is constant and s grows at exactly rate 1,
    # which RK4 reproduces without error on the dyadic steps tau / k.
    init = InitialHistory.constant(5.0, 0.0)
    order = convergence_order_check(unit_params, FROZEN, init, 4.0, base_k=8)
    assert math.isinf(order)


def test_integration_is_deterministic(canonical_params, canonical_fp):
    init = InitialHistory.constant(1.01 * canonical_fp.w_hat, canonical_fp.s_hat)
    a = integrate(canonical_params, CUBIC, init, 20 * canonical_params.tau,
                  canonical_params.tau / 8)
    b = integrate(canonical_params, CUBIC, init, 20 * canonical_params.tau,
                  canonical_params.tau / 8)
    assert np.array_equal(a.w_max, b.w_max)
    assert np.array_equal(a.s, b.s)
    assert np.array_equal(a.w, b.w)
    assert np.array_equal(a.p, b.p)


def test_domain_exit_raises_integration_error(canonical_params):
    # An absurd initial epoch age forces the first step far past the stiff
    # transient; the integrator must report failure, not return garbage.
    init = InitialHistory.constant(1.0, 1e6)
    with pytest.raises(IntegrationError) as err:
        integrate(canonical_params, CUBIC, init, 0.1, canonical_params.tau / 16)
    assert err.value.time > 0.0
    assert isinstance(err.value.state, FlowState)


def test_hostile_window_function_raises(canonical_params):
    class Collapsing(WindowFunction):
        name = "collapsing"

        def window(self, state, params):
            return state.w_max - 1e6 * state.s

    init = InitialHistory.constant(10.0, 0.0)
    with pytest.raises(IntegrationError):
        integrate(canonical_params, Collapsing(), init, 1.0,
                  canonical_params.tau / 8)


def test_trajectory_csv_round_trips(tmp_path, canonical_params, canonical_fp):
    init = InitialHistory.constant(1.01 * canonical_fp.w_hat, canonical_fp.s_hat)
    traj = integrate(canonical_params, CUBIC, init, 5 * canonical_params.tau,
                     canonical_params.tau / 8)
    path = tmp_path / "trace.csv"
    traj.write_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "t,w_max,s,w,p"
    assert len(lines) == len(traj.t) + 1
    for i in (1, len(lines) // 2, len(lines) - 1):
        t, w_max, s, w, p = (float(v) for v in lines[i].split(","))
        j = i - 1
        assert (t, w_max, s, w, p) == (
            traj.t[j], traj.w_max[j], traj.s[j], traj.w[j], traj.p[j]
        )
