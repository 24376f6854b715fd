import math

import numpy as np
import pytest
from scipy import integrate as sp_integrate
from scipy import optimize, stats

from tcpfluid import (
    CUBIC,
    FROZEN,
    RENO,
    RngStream,
    SystemParams,
    compute_T,
    generate_poi_loss,
    inter_loss_times,
    inverse_transform_T,
    make_sim_state,
    pick_losing_flow,
    run_simulation,
    t_bdp,
)


class FakeRng:
    """Scripted uniform stream for walking the event loop draw by draw."""

    def __init__(self, values):
        self.values = list(values)
        self.consumed = 0

    def uniform(self):
        assert self.values, "scripted rng exhausted"
        self.consumed += 1
        return self.values.pop(0)


def frozen_state(w0=15.0, capacity=100.0, tau=0.1, rng=None, lookahead=50.0):
    # Constant window w0 against bdp = capacity * tau: a homogeneous Poisson
    # process with rate (w0 - bdp) / tau whenever w0 clears the bdp.
    params = SystemParams(capacity=capacity, tau=tau, b=0.2, c=0.4)
    state = make_sim_state(
        params, FROZEN, [(w0, 0.0)], rng or RngStream(0), lookahead
    )
    return params, state


def test_rng_stream_validates_and_repeats():
    with pytest.raises(ValueError):
        RngStream(-1)
    with pytest.raises(ValueError):
        RngStream(2**64)
    a = RngStream(7)
    b = RngStream(7)
    draws = [a.uniform() for _ in range(100)]
    assert draws == [b.uniform() for _ in range(100)]
    assert all(0.0 < u < 1.0 for u in draws)


def test_inverse_transform_constant_rate_is_exact():
    # Rate 2 and u = e^-1 put the root at exactly T = 1/2.
    t = inverse_transform_T(lambda t: 2.0 * t, math.exp(-1.0), horizon=100.0)
    assert t == pytest.approx(0.5, rel=1e-9)


def test_inverse_transform_mean_matches_exponential():
    rng = RngStream(123)
    n = 20000
    total = 0.0
    for _ in range(n):
        total += inverse_transform_T(lambda t: 2.0 * t, rng.uniform(), horizon=1e6)
    mean = total / n
    se = 0.5 / math.sqrt(n)
    assert abs(mean - 0.5) < 3.0 * se


def test_inverse_transform_zero_rate_returns_none():
    assert inverse_transform_T(lambda t: 0.0, 0.5, horizon=100.0) is None


def test_inverse_transform_validates_u():
    with pytest.raises(ValueError):
        inverse_transform_T(lambda t: t, 0.0, horizon=1.0)
    with pytest.raises(ValueError):
        inverse_transform_T(lambda t: t, 1.0, horizon=1.0)


def test_compute_t_constant_rate_reduction():
    _, state = frozen_state()
    # Rate is (15 - 10) / 0.1 = 50; the candidate lands at -ln(u) / 50.
    t = compute_T(state, [0.0], math.exp(-5.0))
    assert t == pytest.approx(0.1, rel=1e-9)


def test_compute_t_n_identical_flows_triple_the_rate():
    params = SystemParams(capacity=100.0, tau=0.1, b=0.2, c=0.4, flows=3)
    state = make_sim_state(
        params, FROZEN, [(15.0, 0.0)] * 3, RngStream(0), 50.0
    )
    u = math.exp(-3.0)
    _, single = frozen_state()
    t1 = compute_T(single, [0.0], u)
    t3 = compute_T(state, [0.0, 0.0, 0.0], u)
    assert t3 == pytest.approx(t1 / 3.0, rel=1e-9)


def test_compute_t_reno_epoch_matches_quadrature_oracle():
    # One Reno flow mid-epoch; scipy quadrature plus a root finder give an
    # independent answer for the same inverse-transform problem.
    params = SystemParams(capacity=100.0, tau=0.1, b=0.2, c=0.4)
    state = make_sim_state(params, RENO, [(16.0, 0.25)], RngStream(0), 50.0)
    u = 0.37
    t = compute_T(state, [0.25], u)

    def rate(offset):
        w = 0.5 * 16.0 + (0.25 + offset) / params.tau
        return max(w - params.bdp, 0.0) / params.tau

    def integral_minus_target(T):
        val, _ = sp_integrate.quad(rate, 0.0, T, epsabs=1e-13, epsrel=1e-13)
        return val + math.log(u)

    T_oracle = optimize.brentq(integral_minus_target, 1e-9, 10.0, xtol=1e-13)
    # Start of integration is the epoch age 0.25 of an epoch begun at -0.25.
    assert t == pytest.approx(T_oracle, rel=1e-8)


def test_compute_t_none_when_rate_stays_zero():
    _, state = frozen_state(w0=5.0, lookahead=10.0)
    assert compute_T(state, [0.0], 0.5) is None


def test_t_bdp_returns_now_when_already_crossed():
    _, state = frozen_state(w0=15.0)
    assert t_bdp(state, 3.0) == 3.0


def test_t_bdp_linear_crossing_is_exact():
    # Reno from (2, 0): W(t) = 1 + t / tau crosses bdp = 3 at exactly 2 tau.
    params = SystemParams(capacity=30.0, tau=0.1, b=0.2, c=0.4)
    state = make_sim_state(params, RENO, [(2.0, 0.0)], RngStream(0), 50.0)
    assert t_bdp(state, 0.0) == pytest.approx(2.0 * params.tau, rel=1e-9)


def test_t_bdp_never_crossing_is_inf():
    _, state = frozen_state(w0=5.0, lookahead=10.0)
    assert t_bdp(state, 0.0) == math.inf


def test_t_bdp_staggered_flows_agrees_with_scan():
    params = SystemParams(capacity=100.0, tau=0.1, b=0.2, c=0.4, flows=3)
    state = make_sim_state(
        params,
        CUBIC,
        [(6.0, 0.0), (8.0, 0.1), (7.0, 0.3)],
        RngStream(1),
        100.0,
    )
    threshold = 3 * params.bdp
    assert state.aggregate_window(0.0) < threshold
    crossing = t_bdp(state, 0.0)
    step = params.tau / 1000.0
    n = 0
    while state.aggregate_window(n * step) < threshold:
        n += 1
    assert (n - 1) * step <= crossing <= n * step


def test_pick_losing_flow_examples():
    assert pick_losing_flow((3.0, 1.0), 0.9) == 1
    assert pick_losing_flow((3.0, 1.0), 0.5) == 0
    assert pick_losing_flow((7.0,), 0.99) == 0
    # Zero-window flows can never be picked.
    assert pick_losing_flow((0.0, 5.0), 1e-9) == 1
    with pytest.raises(ValueError):
        pick_losing_flow((0.0, 0.0), 0.5)
    with pytest.raises(ValueError):
        pick_losing_flow((1.0, -1.0), 0.5)
    with pytest.raises(ValueError):
        pick_losing_flow((1.0, 2.0), 0.0)


def test_pick_losing_flow_frequencies():
    rng = RngStream(42)
    n = 100000
    counts = [0, 0, 0]
    for _ in range(n):
        counts[pick_losing_flow((1.0, 2.0, 3.0), rng.uniform())] += 1
    expected = [n / 6.0, n / 3.0, n / 2.0]
    chi2 = sum((o - e) ** 2 / e for o, e in zip(counts, expected))
    # 1% critical value of chi-square with 2 degrees of freedom.
    assert chi2 < 9.21


def test_generator_single_candidate_with_empty_queue():
    _, state = frozen_state(rng=FakeRng([math.exp(-5.0), 0.5]))
    loss_time, flow = generate_poi_loss(state)
    assert loss_time == pytest.approx(0.1, rel=1e-9)
    assert flow == 0
    assert state.rng.consumed == 2
    assert state.schedule.pending == [(loss_time + 0.1, 0)]
    assert state.events == []


def test_generator_keeps_candidate_before_pending_indication():
    _, state = frozen_state(rng=FakeRng([math.exp(-5.0), 0.5]))
    t1, _ = generate_poi_loss(state)
    state.schedule.t_loss_last = t1
    state.rng.values = [math.exp(-1.0), 0.9]
    t2, flow = generate_poi_loss(state)
    # -ln(u)/50 = 0.02 after the last loss, still ahead of the indication.
    assert t2 == pytest.approx(t1 + 0.02, rel=1e-9)
    assert flow == 0
    assert state.rng.consumed == 4
    assert state.events == []
    assert len(state.schedule.pending) == 2


def test_generator_applies_indications_and_regenerates():
    _, state = frozen_state(rng=FakeRng([math.exp(-5.0), 0.5]))
    t1, _ = generate_poi_loss(state)
    state.schedule.t_loss_last = t1
    state.rng.values = [math.exp(-1.0), 0.9]
    t2, _ = generate_poi_loss(state)
    state.schedule.t_loss_last = t2
    # First candidate 0.12 + 0.2 lands past both pending indications (0.2,
    # 0.22): each is applied and consumes one fresh draw, then the queue is
    # empty and the third candidate 0.22 + 0.08 = 0.3 survives.
    state.rng.values = [math.exp(-10.0), math.exp(-10.0), math.exp(-4.0), 0.3]
    t3, flow = generate_poi_loss(state)
    assert state.rng.consumed == 8
    assert t3 == pytest.approx(0.3, rel=1e-9)
    assert flow == 0
    kinds = [(ev.event_type, ev.time) for ev in state.events]
    assert kinds == [
        ("indication", pytest.approx(0.2, rel=1e-9)),
        ("indication", pytest.approx(0.22, rel=1e-9)),
    ]
    # Frozen window: the reset keeps the pre-loss size, only the clock moves.
    assert state.w_loss == [15.0]
    assert state.schedule.llis == [pytest.approx(0.22, rel=1e-9)]
    assert state.schedule.glli == state.schedule.llis[0]
    assert len(state.schedule.pending) == 1


def test_reno_indication_halves_the_window():
    params = SystemParams(capacity=100.0, tau=0.1, b=0.2, c=0.4)
    state = make_sim_state(params, RENO, [(16.0, 0.25)], FakeRng([0.37, 0.5]), 50.0)
    t1, _ = generate_poi_loss(state)
    state.schedule.t_loss_last = t1
    # Next candidate far enough out that the pending indication fires first;
    # regeneration and the flow pick then consume two more draws.
    state.rng.values = [1e-9, 0.5, 0.5]
    generate_poi_loss(state)
    (ind,) = [ev for ev in state.events if ev.event_type == "indication"]
    assert ind.time == t1 + params.tau
    w_before = 0.5 * 16.0 + (ind.time + 0.25) / params.tau
    assert ind.window_before == pytest.approx(w_before, rel=1e-12)
    assert ind.window_after == pytest.approx(0.5 * w_before, rel=1e-12)
    assert state.w_loss == [pytest.approx(w_before, rel=1e-12)]
    assert state.schedule.llis == [ind.time]


def test_run_simulation_sub_bdp_never_loses():
    params = SystemParams(capacity=100.0, tau=0.1, b=0.2, c=0.4)
    sim = run_simulation(params, FROZEN, [(5.0, 0.0)], 3, 20.0)
    assert sim.events == []
    t, w = sim.mean_trace()
    assert np.all(w == 5.0)
    assert t[0] == 0.0 and t[-1] == pytest.approx(20.0)


def test_run_simulation_event_log_is_ordered_and_delayed():
    params = SystemParams(capacity=100.0, tau=0.05, b=0.2, c=0.4, flows=2)
    sim = run_simulation(params, CUBIC, [(20.0, 1.0), (14.0, 0.5)], 11, 60.0)
    times = [ev.time for ev in sim.events]
    assert times == sorted(times)
    losses = [ev for ev in sim.events if ev.event_type == "loss"]
    indications = [ev for ev in sim.events if ev.event_type == "indication"]
    assert losses and indications
    loss_times = [(ev.flow, ev.time) for ev in losses]
    # Every indication is the echo of a loss exactly one delay earlier.
    for ev in indications:
        gaps = [abs(ev.time - params.tau - t) for f, t in loss_times if f == ev.flow]
        assert gaps and min(gaps) < 1e-9
    for ev in losses:
        assert ev.window_before == ev.window_after
    assert all(ev.time <= 60.0 for ev in sim.events)


def test_run_simulation_is_deterministic():
    params = SystemParams(capacity=100.0, tau=0.1, b=0.2, c=0.4)
    a = run_simulation(params, CUBIC, [(15.0, 1.0)], 99, 40.0)
    b = run_simulation(params, CUBIC, [(15.0, 1.0)], 99, 40.0)
    assert a.events == b.events
    assert np.array_equal(a.trace_t, b.trace_t)
    assert np.array_equal(a.trace_flow, b.trace_flow)
    assert np.array_equal(a.trace_w, b.trace_w)


def test_run_simulation_trace_layout():
    params = SystemParams(capacity=100.0, tau=0.1, b=0.2, c=0.4, flows=2)
    sim = run_simulation(params, RENO, [(16.0, 0.25), (12.0, 0.0)], 5, 1.0,
                         sample_dt=0.5)
    # Rows come in blocks of flows + 1 per sample time, aggregate last.
    assert list(sim.trace_flow[:3]) == [0, 1, -1]
    assert sim.trace_t[0] == 0.0
    w0 = 0.5 * 16.0 + 0.25 / params.tau
    w1 = 0.5 * 12.0
    assert sim.trace_w[0] == pytest.approx(w0, rel=1e-12)
    assert sim.trace_w[1] == pytest.approx(w1, rel=1e-12)
    assert sim.trace_w[2] == pytest.approx(0.5 * (w0 + w1), rel=1e-12)


def test_frozen_rate_gaps_are_exponential():
    params, _ = frozen_state()
    sim = run_simulation(params, FROZEN, [(15.0, 0.0)], 2025, 40.0)
    gaps = inter_loss_times(sim.events)
    assert len(gaps) > 1500
    ks = stats.kstest(gaps, "expon", args=(0.0, 1.0 / 50.0))
    assert ks.pvalue > 0.01


def test_make_sim_state_validation():
    params = SystemParams(capacity=100.0, tau=0.1, b=0.2, c=0.4, flows=2)
    with pytest.raises(ValueError):
        make_sim_state(params, FROZEN, [(15.0, 0.0)], RngStream(0), 50.0)
    with pytest.raises(ValueError):
        make_sim_state(params, FROZEN, [(15.0, 0.0), (0.0, 0.0)], RngStream(0), 50.0)
    with pytest.raises(ValueError):
        make_sim_state(params, FROZEN, [(15.0, -1.0), (1.0, 0.0)], RngStream(0), 50.0)
    with pytest.raises(ValueError):
        make_sim_state(params, FROZEN, [(15.0, 0.0), (1.0, 0.0)], RngStream(0), 0.0)


def test_run_simulation_requires_seed_or_rng():
    params = SystemParams(capacity=100.0, tau=0.1, b=0.2, c=0.4)
    with pytest.raises(ValueError):
        run_simulation(params, FROZEN, [(15.0, 0.0)], None, 1.0)


def test_event_csv_round_trips(tmp_path):
    params = SystemParams(capacity=100.0, tau=0.1, b=0.2, c=0.4)
    sim = run_simulation(params, CUBIC, [(15.0, 1.0)], 99, 20.0)
    events_path = tmp_path / "events.csv"
    trace_path = tmp_path / "trace.csv"
    sim.write_events_csv(events_path)
    sim.write_trace_csv(trace_path)
    lines = events_path.read_text().splitlines()
    assert lines[0] == "event_type,time,flow,window_before,window_after"
    assert len(lines) == len(sim.events) + 1
    kind, time, flow, before, after = lines[1].split(",")
    ev = sim.events[0]
    assert (kind, int(flow)) == (ev.event_type, ev.flow)
    assert (float(time), float(before), float(after)) == (
        ev.time, ev.window_before, ev.window_after
    )
    tlines = trace_path.read_text().splitlines()
    assert tlines[0] == "t,flow,w"
    assert len(tlines) == len(sim.trace_t) + 1
