"""Experiment configuration and artifact-producing runners.

Configs are flat key=value files (or dicts of the same keys); every key can
also be supplied as a command-line flag, with flags taking precedence.  Each
mode writes CSV artifacts plus a plain-text summary into the output
directory and returns the headline numbers, so runs are scriptable and
byte-reproducible for a fixed config and seed.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, fields

import numpy as np

from .core import SystemParams
from .dde import InitialHistory, Trajectory, integrate
from .fixedpoint import FixedPoint, cubic_fixed_point, reno_steady_state
from .nhpl import SimResult, run_simulation
from .protocols import window_function
from .stability import (
    expansion_coeffs,
    basin_delta,
    lyapunov_params,
    qtilde,
    stability_trace,
)


class ConfigError(ValueError):
    """Invalid or inconsistent experiment configuration."""


MODES = ("fluid", "nhpl", "both", "stability", "convergence", "fixed-point")

BITS_PER_BYTE = 8.0
DEFAULT_PACKET_SIZE = 1000.0  # bytes, used only to convert bit rates


def bits_to_packets(bits_per_s: float, packet_size_bytes: float = DEFAULT_PACKET_SIZE) -> float:
    return bits_per_s / (BITS_PER_BYTE * packet_size_bytes)


def packets_to_bits(pkts_per_s: float, packet_size_bytes: float = DEFAULT_PACKET_SIZE) -> float:
    return pkts_per_s * BITS_PER_BYTE * packet_size_bytes


@dataclass(frozen=True)
class ExperimentConfig:
    """All run parameters; see ``KEY_PARSERS`` for the config-file keys.

    Capacity is given either directly in packets/s (capacity_pkts) or in
    bits/s (capacity_bps) converted with packet_size_bytes.  Initial
    conditions come in three shapes: "fixed-point" starts every flow at the
    equilibrium, "offset" adds (init_offset_w, init_offset_s) to it, and
    "explicit" takes comma-separated per-flow lists init_w_max / init_s.
    """

    algorithm: str = "cubic"
    capacity_pkts: float | None = None
    capacity_bps: float | None = None
    packet_size_bytes: float = DEFAULT_PACKET_SIZE
    delay_tau: float | None = None
    b: float = 0.2
    c: float = 0.4
    flows: int = 1
    init: str = "fixed-point"
    init_offset_w: float = 0.0
    init_offset_s: float = 0.0
    init_w_max: tuple[float, ...] | None = None
    init_s: tuple[float, ...] | None = None
    t_end: float | None = None
    step: float | None = None
    seed: int = 0
    mode: str = "fluid"
    sample_dt: float | None = None
    post_transient: float = 0.5
    lookahead: float | None = None
    tol: float = 1e-12

    def capacity_packets(self) -> float:
        if self.capacity_pkts is not None:
            return self.capacity_pkts
        return bits_to_packets(self.capacity_bps, self.packet_size_bytes)

    def system_params(self) -> SystemParams:
        return SystemParams(
            capacity=self.capacity_packets(),
            tau=self.delay_tau,
            b=self.b,
            c=self.c,
            flows=self.flows,
        )

    def horizon(self) -> float:
        return self.t_end if self.t_end is not None else 100.0 * self.delay_tau

    def step_h(self) -> float:
        return self.step if self.step is not None else self.delay_tau / 16.0

    def steady_state(self, params: SystemParams) -> FixedPoint:
        if self.algorithm == "reno":
            return reno_steady_state(params)
        return cubic_fixed_point(params, rel_tol=self.tol)

    def initial_conditions(self, fp: FixedPoint) -> list[tuple[float, float]]:
        if self.init == "fixed-point":
            return [(fp.w_hat, fp.s_hat)] * self.flows
        if self.init == "offset":
            w0 = fp.w_hat + self.init_offset_w
            s0 = fp.s_hat + self.init_offset_s
            if not w0 > 0.0 or s0 < 0.0:
                raise ConfigError(
                    f"offset init leaves the domain: w_max0={w0}, s0={s0}"
                )
            return [(w0, s0)] * self.flows
        return list(zip(self.init_w_max, self.init_s))


def _parse_float(s: str) -> float:
    return float(s)


def _parse_int(s: str) -> int:
    v = int(s)
    return v


def _parse_str(s: str) -> str:
    return s


def _parse_float_list(s: str) -> tuple[float, ...]:
    return tuple(float(part) for part in s.split(",") if part.strip() != "")


KEY_PARSERS = {
    "algorithm": _parse_str,
    "capacity_pkts": _parse_float,
    "capacity_bps": _parse_float,
    "packet_size_bytes": _parse_float,
    "delay_tau": _parse_float,
    "b": _parse_float,
    "c": _parse_float,
    "flows": _parse_int,
    "init": _parse_str,
    "init_offset_w": _parse_float,
    "init_offset_s": _parse_float,
    "init_w_max": _parse_float_list,
    "init_s": _parse_float_list,
    "t_end": _parse_float,
    "step": _parse_float,
    "seed": _parse_int,
    "mode": _parse_str,
    "sample_dt": _parse_float,
    "post_transient": _parse_float,
    "lookahead": _parse_float,
    "tol": _parse_float,
}


def read_config_file(path: str) -> dict[str, str]:
    """Flat key=value lines; '#' starts a comment; later keys win."""
    raw: dict[str, str] = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.split("#", 1)[0].strip()
            if not stripped:
                continue
            if "=" not in stripped:
                raise ConfigError(f"{path}:{lineno}: expected key=value, got {line.rstrip()!r}")
            key, value = stripped.split("=", 1)
            raw[key.strip()] = value.strip()
    return raw


def build_config(raw: dict[str, object]) -> ExperimentConfig:
    """Parse raw key/value strings (or already-typed values) and validate."""
    known = {f.name for f in fields(ExperimentConfig)}
    parsed: dict[str, object] = {}
    for key, value in raw.items():
        if key not in known:
            raise ConfigError(f"unknown config key {key!r}")
        try:
            parsed[key] = KEY_PARSERS[key](value) if isinstance(value, str) else value
        except ValueError as exc:
            raise ConfigError(f"config key {key!r}: {exc}") from exc
    config = ExperimentConfig(**parsed)
    _validate(config)
    return config


def _validate(config: ExperimentConfig) -> None:
    if config.algorithm not in ("reno", "cubic"):
        raise ConfigError(f"algorithm must be reno or cubic, got {config.algorithm!r}")
    if config.mode not in MODES:
        raise ConfigError(f"mode must be one of {MODES}, got {config.mode!r}")
    given = [k for k in ("capacity_pkts", "capacity_bps") if getattr(config, k) is not None]
    if len(given) != 1:
        raise ConfigError("exactly one of capacity_pkts or capacity_bps is required")
    if config.capacity_packets() <= 0.0:
        raise ConfigError("capacity must be positive")
    if config.packet_size_bytes <= 0.0:
        raise ConfigError("packet_size_bytes must be positive")
    if config.delay_tau is None or config.delay_tau <= 0.0:
        raise ConfigError("delay_tau is required and must be positive")
    if not 0.0 < config.b < 1.0:
        raise ConfigError(f"b must lie in (0, 1), got {config.b}")
    if config.c <= 0.0:
        raise ConfigError(f"c must be positive, got {config.c}")
    if config.flows < 1:
        raise ConfigError(f"flows must be >= 1, got {config.flows}")
    if config.init not in ("fixed-point", "offset", "explicit"):
        raise ConfigError(f"init must be fixed-point, offset, or explicit, got {config.init!r}")
    if config.init == "explicit":
        if config.init_w_max is None or config.init_s is None:
            raise ConfigError("explicit init requires init_w_max and init_s")
        if len(config.init_w_max) != config.flows or len(config.init_s) != config.flows:
            raise ConfigError(
                f"explicit init lists must have {config.flows} entries, got "
                f"{len(config.init_w_max)} and {len(config.init_s)}"
            )
        if any(w <= 0.0 for w in config.init_w_max):
            raise ConfigError("init_w_max entries must be positive")
        if any(s < 0.0 for s in config.init_s):
            raise ConfigError("init_s entries must be >= 0")
    if config.t_end is not None and config.t_end <= 0.0:
        raise ConfigError(f"t_end must be positive, got {config.t_end}")
    if config.step is not None:
        if config.step <= 0.0:
            raise ConfigError(f"step must be positive, got {config.step}")
        k = round(config.delay_tau / config.step)
        if k < 4 or abs(k * config.step - config.delay_tau) > 1e-9 * config.delay_tau:
            raise ConfigError(
                f"step must divide delay_tau into at least 4 parts, got {config.step}"
            )
    if config.seed < 0:
        raise ConfigError(f"seed must be >= 0, got {config.seed}")
    if config.sample_dt is not None and config.sample_dt <= 0.0:
        raise ConfigError(f"sample_dt must be positive, got {config.sample_dt}")
    if not 0.0 < config.post_transient <= 1.0:
        raise ConfigError(
            f"post_transient must lie in (0, 1], got {config.post_transient}"
        )
    if config.lookahead is not None and config.lookahead <= 0.0:
        raise ConfigError(f"lookahead must be positive, got {config.lookahead}")
    if config.tol <= 0.0:
        raise ConfigError(f"tol must be positive, got {config.tol}")


def post_transient_mean(t: np.ndarray, w: np.ndarray, t_end: float, fraction: float) -> float:
    """Mean of w over the final `fraction` of the horizon."""
    mask = np.asarray(t) >= (1.0 - fraction) * t_end
    if not mask.any():
        raise ValueError("post-transient window contains no samples")
    return float(np.mean(np.asarray(w)[mask]))


@dataclass
class ExperimentResult:
    mode: str
    artifacts: dict[str, str]
    metrics: dict[str, float]
    summary: str


def _write_summary(out_dir: str, lines: list[str]) -> str:
    path = os.path.join(out_dir, "summary.txt")
    text = "\n".join(lines) + "\n"
    with open(path, "w") as fh:
        fh.write(text)
    return path


def _run_fluid(config: ExperimentConfig, params: SystemParams, fp: FixedPoint) -> Trajectory:
    w0, s0 = config.initial_conditions(fp)[0]
    init = InitialHistory.constant(w0, s0)
    fn = window_function(config.algorithm)
    return integrate(params, fn, init, config.horizon(), config.step_h())


def _run_nhpl(config: ExperimentConfig, params: SystemParams, fp: FixedPoint) -> SimResult:
    return run_simulation(
        params,
        config.algorithm,
        config.initial_conditions(fp),
        config.seed,
        config.horizon(),
        sample_dt=config.sample_dt,
        lookahead=config.lookahead,
    )


def run_experiment(config: ExperimentConfig, out_dir: str) -> ExperimentResult:
    """Run one experiment mode and write its artifacts under out_dir."""
    os.makedirs(out_dir, exist_ok=True)
    params = config.system_params()
    fp = config.steady_state(params)
    artifacts: dict[str, str] = {}
    metrics: dict[str, float] = {"w_hat": fp.w_hat, "s_hat": fp.s_hat, "p_hat": fp.p_hat}
    lines = [
        f"mode: {config.mode}",
        f"algorithm: {config.algorithm}",
        f"capacity_pkts: {params.capacity!r}",
        f"delay_tau: {params.tau!r}",
        f"flows: {params.flows}",
        f"w_hat: {fp.w_hat!r}",
        f"s_hat: {fp.s_hat!r}",
        f"p_hat: {fp.p_hat!r}",
    ]

    if config.mode == "fixed-point":
        residual = fp.s_hat * fp.w_hat * fp.p_hat / params.tau - 1.0
        metrics["consistency_residual"] = residual
        lines.append(f"consistency_residual: {residual!r}")

    if config.mode in ("fluid", "both"):
        traj = _run_fluid(config, params, fp)
        path = os.path.join(out_dir, "fluid_trace.csv")
        traj.write_csv(path)
        artifacts["fluid_trace"] = path
        mean = post_transient_mean(traj.t, traj.w, config.horizon(), config.post_transient)
        metrics["fluid_mean_w"] = mean
        lines.append(f"fluid_mean_w: {mean!r}")
        lines.append(f"fluid_mean_w_rel_fp: {mean / fp.w_hat - 1.0!r}")

    if config.mode in ("nhpl", "both"):
        sim = _run_nhpl(config, params, fp)
        events_path = os.path.join(out_dir, "nhpl_events.csv")
        trace_path = os.path.join(out_dir, "nhpl_trace.csv")
        sim.write_events_csv(events_path)
        sim.write_trace_csv(trace_path)
        artifacts["nhpl_events"] = events_path
        artifacts["nhpl_trace"] = trace_path
        tm, wm = sim.mean_trace()
        mean = post_transient_mean(tm, wm, config.horizon(), config.post_transient)
        losses = sum(1 for ev in sim.events if ev.event_type == "loss")
        metrics["nhpl_mean_w"] = mean
        metrics["nhpl_losses"] = float(losses)
        lines.append(f"nhpl_mean_w: {mean!r}")
        lines.append(f"nhpl_mean_w_rel_fp: {mean / fp.w_hat - 1.0!r}")
        lines.append(f"nhpl_losses: {losses}")

    if config.mode == "both":
        gap = metrics["nhpl_mean_w"] / metrics["fluid_mean_w"] - 1.0
        metrics["nhpl_vs_fluid"] = gap
        lines.append(f"nhpl_vs_fluid: {gap!r}")

    if config.mode == "stability":
        if config.algorithm != "cubic":
            raise ConfigError("stability mode analyzes the cubic window function")
        coeffs = expansion_coeffs(fp, params)
        lp = lyapunov_params(fp, params)
        qt = qtilde(coeffs, lp, fp)
        epsilon = 0.01 * fp.w_hat
        delta = basin_delta(epsilon, lp)
        metrics["lambda_min"] = qt.lambda_min
        metrics["basin_delta"] = delta
        path = os.path.join(out_dir, "stability_report.txt")
        with open(path, "w") as fh:
            fh.write(f"w_hat: {fp.w_hat!r}\ns_hat: {fp.s_hat!r}\np_hat: {fp.p_hat!r}\n")
            fh.write(
                f"alpha: {coeffs.alpha!r}\nbeta: {coeffs.beta!r}\n"
                f"gamma: {coeffs.gamma!r}\ndelta: {coeffs.delta!r}\n"
            )
            fh.write(
                f"d1: {lp.d1!r}\nd4: {lp.d4!r}\neps0: {lp.eps0!r}\neps1: {lp.eps1!r}\n"
                f"k_margin: {lp.k_margin!r}\nrazumikhin_p: {lp.razumikhin_p!r}\n"
            )
            for row in qt.matrix:
                fh.write("qtilde_row: " + ",".join(repr(float(v)) for v in row) + "\n")
            fh.write(f"lambda_min: {qt.lambda_min!r}\n")
            fh.write(f"epsilon: {epsilon!r}\nbasin_delta: {delta!r}\n")
        artifacts["stability_report"] = path
        lines.append(f"lambda_min: {qt.lambda_min!r}")
        lines.append(f"basin_delta(eps=0.01*w_hat): {delta!r}")

    if config.mode == "convergence":
        if config.algorithm != "cubic":
            raise ConfigError("convergence mode analyzes the cubic window function")
        if config.init == "fixed-point":
            # The decay bound divides by V at t=0, which vanishes there.
            raise ConfigError("convergence mode needs an offset or explicit init")
        coeffs = expansion_coeffs(fp, params)
        lp = lyapunov_params(fp, params)
        qt = qtilde(coeffs, lp, fp)
        w0, s0 = config.initial_conditions(fp)[0]
        init = InitialHistory.constant(w0, s0)
        fn = window_function(config.algorithm)
        traj = integrate(params, fn, init, config.horizon(), config.step_h())
        diag = stability_trace(traj, fp, params, lp, qt, init)
        path = os.path.join(out_dir, "convergence.csv")
        diag.write_csv(path)
        artifacts["convergence"] = path
        bounded = float(np.mean(diag.norm_x ** 4 <= diag.bound * (1.0 + 1e-12)))
        metrics["lambda_min"] = qt.lambda_min
        metrics["bound_fraction"] = bounded
        lines.append(f"lambda_min: {qt.lambda_min!r}")
        lines.append(f"bound_fraction: {bounded!r}")

    summary_path = _write_summary(out_dir, lines)
    artifacts["summary"] = summary_path
    return ExperimentResult(
        mode=config.mode,
        artifacts=artifacts,
        metrics=metrics,
        summary="\n".join(lines),
    )
