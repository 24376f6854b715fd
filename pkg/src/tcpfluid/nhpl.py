"""Event-driven loss simulator with a non-homogeneous Poisson loss process.

Losses are generated at the congestion point with rate lambda(t) =
sum_f W_f(t) p_f(t) / tau and become visible to the sources only after a
delay of tau (a "loss indication").  Between indications each flow grows
deterministically along its window function, so a flow's trajectory is fully
described by the start time of its current epoch and the window size it had
right before the loss that started it (the W_loss array).

The inter-loss sampler inverts the cumulative rate integral against an
Exp(1) target (inverse transform method).  A candidate loss time computed
from the current epoch functions is only valid while no pending indication
fires before it; otherwise the earliest indication is applied, the affected
flow starts a new epoch, and the candidate is regenerated from the
indication time onward.  Regeneration is exact, not approximate: the
discarded draw certifies that no loss occurred before the indication, and
the process restarts memorylessly from there with a fresh uniform.

The congestion point sees the flows in aggregate, so the capacity-clamp loss
model applies to the total: p = max(1 - N C tau / sum_f W_f, 0), and flow f
suffers losses at rate W_f p / tau.  The total rate then collapses to
(sum_f W_f - N C tau)+ / tau, which is zero exactly until the aggregate
window reaches the bandwidth-delay product; the integration start time
max(T_BDP, last loss) skips that dead interval.  With a single flow this
reduces to the per-flow model p = max(1 - C tau / W, 0) of the fluid
equations, and for N identical flows each carries 1/N of the total rate, so
both limits agree with the mean-field model.
"""

from __future__ import annotations

import heapq
import math
from bisect import bisect_right
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .core import FlowState, SystemParams
from .protocols import WindowFunction, window_function


class RngStream:
    """Deterministic uniform(0,1) stream: numpy PCG64 under a recorded seed.

    ``uniform()`` never returns 0.0 (redrawn) so -log(u) is always finite;
    1.0 is outside the generator's range by construction.
    """

    def __init__(self, seed: int):
        if not 0 <= int(seed) < 2 ** 64:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
        self.seed = int(seed)
        self._gen = np.random.Generator(np.random.PCG64(self.seed))

    def uniform(self) -> float:
        u = self._gen.random()
        while u <= 0.0:
            u = self._gen.random()
        return float(u)


class Event(NamedTuple):
    event_type: str  # "loss" (congestion point) or "indication" (source)
    time: float
    flow: int
    window_before: float
    window_after: float


@dataclass
class LossSchedule:
    """Pending indications plus the bookkeeping the generator loop needs.

    pending holds (time, flow) pairs, heap-ordered by time; every entry was
    scheduled exactly tau after the loss event that produced it.  llis[f] is
    the last indication applied to flow f (the start of its current epoch),
    glli the most recent indication overall, t_loss_last the most recent
    loss event at the congestion point.
    """

    pending: list[tuple[float, int]]
    llis: list[float]
    glli: float
    t_loss_last: float

    def next_indication(self) -> tuple[float, int] | None:
        return self.pending[0] if self.pending else None


@dataclass
class SimState:
    params: SystemParams
    window_fn: WindowFunction
    w_loss: list[float]
    schedule: LossSchedule
    rng: object  # anything with uniform() -> float in (0,1)
    lookahead: float
    events: list[Event] = field(default_factory=list)
    # per-flow epoch history [(start_time, w_loss_at_start), ...] for tracing
    epochs: list[list[tuple[float, float]]] = field(default_factory=list)

    def flow_window(self, f: int, t: float) -> float:
        """Window of flow f at absolute time t under its current epoch."""
        age = t - self.schedule.llis[f]
        return self.window_fn.window(FlowState(self.w_loss[f], age), self.params)

    def aggregate_window(self, t: float) -> float:
        return sum(self.flow_window(f, t) for f in range(len(self.w_loss)))


def make_sim_state(
    params: SystemParams,
    algorithm: str | WindowFunction,
    init: Sequence[tuple[float, float]],
    rng: object,
    lookahead: float,
) -> SimState:
    """Build the bootstrap state: flow f's epoch began at -s0_f with w_loss_f.

    init[f] = (w_loss, s0) places flow f at epoch age s0 when the run starts,
    so its window at t=0 is the one the pair (w_loss, s0) describes.  No loss
    is in flight at bootstrap and the anchor for the first candidate is t=0.
    """
    fn = window_function(algorithm) if isinstance(algorithm, str) else algorithm
    if len(init) != params.flows:
        raise ValueError(f"init has {len(init)} flows, params.flows = {params.flows}")
    if not lookahead > 0.0:
        raise ValueError(f"lookahead must be positive, got {lookahead}")
    w_loss, llis = [], []
    for f, (w0, s0) in enumerate(init):
        if not w0 > 0.0:
            raise ValueError(f"flow {f}: initial w_loss must be positive, got {w0}")
        if s0 < 0.0:
            raise ValueError(f"flow {f}: initial epoch age must be >= 0, got {s0}")
        w_loss.append(float(w0))
        llis.append(-float(s0))
    schedule = LossSchedule(pending=[], llis=llis, glli=max(llis), t_loss_last=0.0)
    state = SimState(
        params=params,
        window_fn=fn,
        w_loss=w_loss,
        schedule=schedule,
        rng=rng,
        lookahead=lookahead,
    )
    state.epochs = [[(llis[f], w_loss[f])] for f in range(len(w_loss))]
    return state


def _adaptive_simpson(f: Callable[[float], float], a: float, b: float, tol: float) -> float:
    """Classic adaptive Simpson with Richardson correction, absolute tol."""
    fa, fb = f(a), f(b)
    m = 0.5 * (a + b)
    fm = f(m)
    whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    return _simpson_step(f, a, b, fa, fm, fb, whole, tol, 50)


def _simpson_step(f, a, b, fa, fm, fb, whole, tol, depth):
    m = 0.5 * (a + b)
    lm, rm = 0.5 * (a + m), 0.5 * (m + b)
    flm, frm = f(lm), f(rm)
    left = (m - a) / 6.0 * (fa + 4.0 * flm + fm)
    right = (b - m) / 6.0 * (fm + 4.0 * frm + fb)
    delta = left + right - whole
    if depth <= 0 or abs(delta) <= 15.0 * tol:
        return left + right + delta / 15.0
    half = 0.5 * tol
    return _simpson_step(f, a, m, fa, flm, fm, left, half, depth - 1) + _simpson_step(
        f, m, b, fm, frm, fb, right, half, depth - 1
    )


def inverse_transform_T(
    integrated_rate: Callable[[float], float],
    u: float,
    *,
    horizon: float,
    initial_step: float = 1.0,
) -> float | None:
    """Smallest T with integrated_rate(T) = -ln(u), or None within horizon.

    integrated_rate must be continuous and nondecreasing with value 0 at 0.
    The root is bracketed by doubling from initial_step and then bisected;
    on a plateau of the integral the leftmost point is returned, so the
    result is the smallest root up to bracketing precision.
    """
    if not 0.0 < u < 1.0:
        raise ValueError(f"u must lie strictly inside (0, 1), got {u}")
    if not horizon > 0.0 or not initial_step > 0.0:
        raise ValueError("horizon and initial_step must be positive")
    target = -math.log(u)
    lo = 0.0
    hi = min(initial_step, horizon)
    while integrated_rate(hi) < target:
        if hi >= horizon:
            return None
        lo = hi
        hi = min(2.0 * hi, horizon)
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if integrated_rate(mid) >= target:
            hi = mid
        else:
            lo = mid
    return hi


def compute_T(
    state: SimState,
    t0_per_flow: Sequence[float],
    u: float,
    *,
    quad_tol: float = 1e-9,
) -> float | None:
    """Absolute time of the next candidate loss, or None within the lookahead.

    t0_per_flow[f] is the epoch age of flow f at the common integration start
    (the same absolute instant for every flow).  The total rate
    max(sum_f W_f - N C tau, 0)/tau is marched forward in growing panels of
    adaptive Simpson quadrature until the accumulated integral reaches
    -ln(u); the crossing panel is then bisected for the smallest root.  The
    quadrature budget quad_tol is split across panels in proportion to width.
    """
    if not 0.0 < u < 1.0:
        raise ValueError(f"u must lie strictly inside (0, 1), got {u}")
    params = state.params
    fn = state.window_fn
    ages0 = [float(t) for t in t0_per_flow]
    if len(ages0) != len(state.w_loss):
        raise ValueError("t0_per_flow length does not match flow count")
    t0_abs = state.schedule.llis[0] + ages0[0]
    w_loss = state.w_loss
    aggregate_bdp = len(w_loss) * params.bdp
    tau = params.tau

    def rate(offset: float) -> float:
        total = 0.0
        for f, age0 in enumerate(ages0):
            total += fn.window(FlowState(w_loss[f], age0 + offset), params)
        excess = total - aggregate_bdp
        return excess / tau if excess > 0.0 else 0.0

    target = -math.log(u)
    horizon = state.lookahead
    accumulated = 0.0
    a = 0.0
    width = tau
    while a < horizon:
        b = min(a + width, horizon)
        panel_tol = quad_tol * (b - a) / horizon
        panel = _adaptive_simpson(rate, a, b, panel_tol)
        if accumulated + panel >= target:
            lo, hi = a, b
            for _ in range(80):
                mid = 0.5 * (lo + hi)
                if mid <= lo or mid >= hi:
                    break
                if accumulated + _adaptive_simpson(rate, a, mid, panel_tol) >= target:
                    hi = mid
                else:
                    lo = mid
            return t0_abs + hi
        accumulated += panel
        a = b
        width *= 1.6
    return None


def t_bdp(state: SimState, t_from: float) -> float:
    """Earliest t >= t_from where the aggregate window reaches N * C tau.

    Windows are nondecreasing within an epoch for the supported algorithms,
    so the aggregate is monotone and the crossing is found by doubling plus
    bisection.  Returns t_from if already at or above the threshold and
    math.inf if the threshold is not reached within the lookahead.
    """
    threshold = len(state.w_loss) * state.params.bdp
    if state.aggregate_window(t_from) >= threshold:
        return t_from
    horizon = t_from + state.lookahead
    step = state.params.tau
    lo = t_from
    hi = min(t_from + step, horizon)
    while state.aggregate_window(hi) < threshold:
        if hi >= horizon:
            return math.inf
        lo = hi
        step *= 2.0
        hi = min(hi + step, horizon)
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if state.aggregate_window(mid) >= threshold:
            hi = mid
        else:
            lo = mid
    return hi


def pick_losing_flow(windows_at_loss: Sequence[float], u: float) -> int:
    """Categorical draw: flow f with probability W_f / sum(W)."""
    if not 0.0 < u < 1.0:
        raise ValueError(f"u must lie strictly inside (0, 1), got {u}")
    total = 0.0
    for f, w in enumerate(windows_at_loss):
        if w < 0.0:
            raise ValueError(f"flow {f}: negative window {w}")
        total += w
    if not total > 0.0:
        raise ValueError("all windows are zero; no flow can lose")
    threshold = u * total
    running = 0.0
    last = 0
    for f, w in enumerate(windows_at_loss):
        if w > 0.0:
            running += w
            last = f
            if running > threshold:
                return f
    return last


def _apply_next_indication(state: SimState) -> None:
    # The affected flow's window right before the indication becomes its new
    # w_loss; the epoch restarts at the indication time with the reset state.
    t_ind, f = heapq.heappop(state.schedule.pending)
    w_before = state.flow_window(f, t_ind)
    reset = state.window_fn.reset(w_before)
    w_after = state.window_fn.window(reset, state.params)
    state.w_loss[f] = w_before
    state.schedule.llis[f] = t_ind
    state.schedule.glli = t_ind
    state.epochs[f].append((t_ind, w_before))
    state.events.append(Event("indication", t_ind, f, w_before, w_after))


def generate_poi_loss(state: SimState) -> tuple[float | None, int | None]:
    """Next loss event (time, flow), applying pending indications as needed.

    Candidates anchored at max(T_BDP, most recent loss event) are regenerated
    whenever they land at or after the next pending indication: the
    indication is applied first (one queue entry consumed per iteration, so
    the loop terminates) and the anchor moves to the indication time.  A
    candidate beyond the lookahead counts as "no loss in horizon" and, once
    the queue is empty, ends the run.  On return every remaining pending
    indication lies strictly after the returned loss time, whose own
    indication is scheduled at loss time + tau for the flow drawn with
    probability proportional to its window at the loss time.
    """
    sched = state.schedule
    anchor = sched.t_loss_last
    while True:
        reach = t_bdp(state, anchor)
        if math.isinf(reach):
            loss_time = None
        else:
            t0_abs = max(reach, anchor)
            ages = [t0_abs - lli for lli in sched.llis]
            loss_time = compute_T(state, ages, state.rng.uniform())
        nxt = sched.next_indication()
        if nxt is not None and (loss_time is None or loss_time >= nxt[0]):
            _apply_next_indication(state)
            anchor = sched.glli
            continue
        break
    if loss_time is None:
        return None, None
    weights = [state.flow_window(f, loss_time) for f in range(len(state.w_loss))]
    flow = pick_losing_flow(weights, state.rng.uniform())
    heapq.heappush(sched.pending, (loss_time + state.params.tau, flow))
    return loss_time, flow


@dataclass
class SimResult:
    params: SystemParams
    algorithm: str
    seed: int | None
    t_end: float
    events: list[Event]
    trace_t: np.ndarray
    trace_flow: np.ndarray
    trace_w: np.ndarray

    def write_events_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("event_type,time,flow,window_before,window_after\n")
            for ev in self.events:
                fh.write(
                    f"{ev.event_type},{ev.time!r},{ev.flow},"
                    f"{ev.window_before!r},{ev.window_after!r}\n"
                )

    def write_trace_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("t,flow,w\n")
            for t, f, w in zip(self.trace_t, self.trace_flow, self.trace_w):
                fh.write(f"{float(t)!r},{int(f)},{float(w)!r}\n")

    def mean_trace(self) -> tuple[np.ndarray, np.ndarray]:
        """(t, w) of the aggregate rows (flow = -1, per-flow mean)."""
        mask = self.trace_flow == -1
        return self.trace_t[mask], self.trace_w[mask]


def _render_trace(
    state: SimState, t_end: float, sample_dt: float
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    flows = len(state.w_loss)
    n = int(math.floor(t_end / sample_dt + 1e-9)) + 1
    starts = [[e[0] for e in state.epochs[f]] for f in range(flows)]
    ts, fs, ws = [], [], []
    for i in range(n):
        t = i * sample_dt
        total = 0.0
        for f in range(flows):
            j = bisect_right(starts[f], t) - 1
            start, w_loss = state.epochs[f][j]
            w = state.window_fn.window(FlowState(w_loss, t - start), state.params)
            ts.append(t)
            fs.append(f)
            ws.append(w)
            total += w
        ts.append(t)
        fs.append(-1)
        ws.append(total / flows)
    return np.asarray(ts), np.asarray(fs, dtype=int), np.asarray(ws)


def run_simulation(
    params: SystemParams,
    algorithm: str | WindowFunction,
    init: Sequence[tuple[float, float]],
    seed: int | None,
    t_end: float,
    *,
    sample_dt: float | None = None,
    lookahead: float | None = None,
    rng: object | None = None,
) -> SimResult:
    """Run the loss process to t_end and sample every flow's window.

    init[f] = (w_loss, s0): flow f starts at epoch age s0 of an epoch whose
    reset size was w_loss.  The trace is sampled every sample_dt (default
    tau) with one row per flow plus an aggregate row (flow -1) holding the
    per-flow mean.  Identical params, init, and seed give identical results.
    """
    if not t_end > 0.0:
        raise ValueError(f"t_end must be positive, got {t_end}")
    if sample_dt is None:
        sample_dt = params.tau
    if not sample_dt > 0.0:
        raise ValueError(f"sample_dt must be positive, got {sample_dt}")
    if lookahead is None:
        lookahead = max(1e4 * params.tau, 2.0 * t_end)
    if rng is None:
        if seed is None:
            raise ValueError("either seed or rng must be given")
        rng = RngStream(seed)
    state = make_sim_state(params, algorithm, init, rng, lookahead)
    fn = state.window_fn
    while True:
        loss_time, flow = generate_poi_loss(state)
        if loss_time is None or loss_time > t_end:
            break
        w_at = state.flow_window(flow, loss_time)
        state.events.append(Event("loss", loss_time, flow, w_at, w_at))
        state.schedule.t_loss_last = loss_time
    events = [ev for ev in state.events if ev.time <= t_end]
    trace_t, trace_flow, trace_w = _render_trace(state, t_end, sample_dt)
    name = algorithm if isinstance(algorithm, str) else type(fn).__name__
    return SimResult(
        params=params,
        algorithm=name,
        seed=seed,
        t_end=t_end,
        events=events,
        trace_t=trace_t,
        trace_flow=trace_flow,
        trace_w=trace_w,
    )


def inter_loss_times(events: Sequence[Event], *, from_time: float = 0.0) -> np.ndarray:
    """Gaps between consecutive loss events, the first measured from from_time."""
    times = [ev.time for ev in events if ev.event_type == "loss"]
    if not times:
        return np.empty(0)
    return np.diff(np.asarray([from_time] + times))
