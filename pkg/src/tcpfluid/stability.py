"""Local stability diagnostics for the CUBIC fluid model.

Everything here works in the fixed-point-centred coordinates of
:func:`tcpfluid.protocols.cubic_shifted_rhs`.  The Lyapunov candidate is

    V(x) = (d1/2) x1^2 + (d4/4) x2^4

whose derivative along solutions is, to leading order, a negative quartic
form captured by a 3x3 matrix acting on z = (x1^2, sqrt(2) x1 x2, x2^2).
The quartic form is positive definite whenever the cubic-truncation
coefficients satisfy alpha*gamma > beta^2/4, which holds identically for
this model, so the fixed point is locally asymptotically stable and the
decay of V yields an explicit polynomial convergence bound and a basin
estimate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import SystemParams
from .dde import InitialHistory, Trajectory, write_row
from .fixedpoint import FixedPoint
from .protocols import ShiftedState, cubic_shifted_rhs, to_shifted


@dataclass(frozen=True)
class ExpansionCoeffs:
    """Cubic-truncation coefficients of dx1/dt about the fixed point:

    dx1/dt = -alpha x1^3 + beta x1^2 x2 - gamma x1 x2^2 + delta x2^3 + h.o.t.
    """

    alpha: float
    beta: float
    gamma: float
    delta: float


def expansion_coeffs(fp: FixedPoint, params: SystemParams) -> ExpansionCoeffs:
    s = fp.s_hat
    b = params.b
    c = params.c
    return ExpansionCoeffs(
        alpha=b**3 / (27.0 * c**2 * s**7),
        beta=b**2 / (3.0 * c * s**5),
        gamma=b / s**3,
        delta=c / s,
    )


def cubic_truncation_x1dot(x: ShiftedState, coeffs: ExpansionCoeffs) -> float:
    """Third-order truncation of dx1/dt about the fixed point."""
    x1, x2 = x
    return (
        -coeffs.alpha * x1**3
        + coeffs.beta * x1**2 * x2
        - coeffs.gamma * x1 * x2**2
        + coeffs.delta * x2**3
    )


def linearized_x2dot(
    x: ShiftedState, x1_delayed: float, fp: FixedPoint, params: SystemParams
) -> float:
    """Linear part of dx2/dt: -(1/s_hat) x2 - (s_hat/tau) x1_delayed."""
    return -x.x2 / fp.s_hat - (fp.s_hat / params.tau) * x1_delayed


@dataclass(frozen=True)
class LyapunovParams:
    """Weights and margins of the Lyapunov argument.

    d1, d4        weights of the x1^2 and x2^4 terms of V
    eps0          V <= eps0 * |x|^2 on the unit ball
    eps1          V >= eps1 * |x|^4 on the unit ball (strict-margin choice)
    k_margin      higher-order-term allowance subtracted from lambda_min
    razumikhin_p  history comparison constant, > 1
    """

    d1: float
    d4: float
    eps0: float
    eps1: float
    k_margin: float
    razumikhin_p: float


def lyapunov_params(
    fp: FixedPoint,
    params: SystemParams,
    *,
    eps1_frac: float = 0.5,
    k_frac: float = 0.5,
    razumikhin_p: float = 1.01,
) -> LyapunovParams:
    """Standard weights d1 = s_hat/c, d4 = tau/s_hat with margin defaults.

    eps1 must sit strictly below min(s_hat/6c, tau/4 s_hat) and the
    higher-order allowance strictly below lambda_min; both are taken as the
    given fractions of their bounds.
    """
    if not 0.0 < eps1_frac < 1.0:
        raise ValueError(f"eps1_frac must lie in (0, 1), got {eps1_frac}")
    if not 0.0 < k_frac < 1.0:
        raise ValueError(f"k_frac must lie in (0, 1), got {k_frac}")
    if not razumikhin_p > 1.0:
        raise ValueError(f"razumikhin_p must exceed 1, got {razumikhin_p}")
    d1 = fp.s_hat / params.c
    d4 = params.tau / fp.s_hat
    eps0 = max(0.5 * d1, 0.25 * d4)
    eps1 = eps1_frac * min(d1 / 6.0, 0.25 * d4)
    coeffs = expansion_coeffs(fp, params)
    lam = _lambda_min(coeffs, d1, d4, fp.s_hat)
    return LyapunovParams(
        d1=d1,
        d4=d4,
        eps0=eps0,
        eps1=eps1,
        k_margin=k_frac * lam,
        razumikhin_p=razumikhin_p,
    )


@dataclass(frozen=True)
class QtildeMatrix:
    """Quartic-form matrix of -dV/dt in z = (x1^2, sqrt(2) x1 x2, x2^2)."""

    matrix: np.ndarray
    lambda_min: float


def _block_entries(
    coeffs: ExpansionCoeffs, d1: float, d4: float, s_hat: float
) -> tuple[float, float, float, float]:
    a = d1 * coeffs.alpha
    off = -d1 * coeffs.beta / (2.0 * math.sqrt(2.0))
    d = 0.5 * d1 * coeffs.gamma
    corner = d4 / s_hat
    return a, off, d, corner


def _lambda_min(
    coeffs: ExpansionCoeffs, d1: float, d4: float, s_hat: float
) -> float:
    a, off, d, corner = _block_entries(coeffs, d1, d4, s_hat)
    mean = 0.5 * (a + d)
    disc = math.hypot(0.5 * (a - d), off)
    lam_max = mean + disc
    det = a * d - off * off
    # lam_min = mean - disc cancels badly when the block is ill scaled;
    # det / lam_max is the same number without the cancellation.
    lam_min_block = det / lam_max if lam_max > 0.0 else mean - disc
    return min(lam_min_block, corner)


def qtilde(coeffs: ExpansionCoeffs, lp: LyapunovParams, fp: FixedPoint) -> QtildeMatrix:
    """Build the quartic-form matrix and check positive definiteness twice.

    Route one checks the leading principal minors, which reduce to
    alpha*gamma > beta^2/4 together with a positive corner entry; route two
    checks the closed-form eigenvalues.  The two must agree; a definiteness
    failure means the fixed point inputs are invalid.
    """
    a, off, d, corner = _block_entries(coeffs, lp.d1, lp.d4, fp.s_hat)
    minors_ok = (
        a > 0.0
        and coeffs.alpha * coeffs.gamma - 0.25 * coeffs.beta**2 > 0.0
        and corner > 0.0
    )
    lam = _lambda_min(coeffs, lp.d1, lp.d4, fp.s_hat)
    eigs_ok = lam > 0.0
    if minors_ok != eigs_ok:
        raise ValueError(
            f"definiteness checks disagree: minors={minors_ok}, eigs={eigs_ok}"
        )
    if not minors_ok:
        raise ValueError("quartic form is not positive definite; check inputs")
    m = np.array([[a, off, 0.0], [off, d, 0.0], [0.0, 0.0, corner]])
    return QtildeMatrix(matrix=m, lambda_min=lam)


def lyapunov_V(x: ShiftedState, lp: LyapunovParams) -> float:
    return 0.5 * lp.d1 * x.x1 * x.x1 + 0.25 * lp.d4 * x.x2**4


def vdot_exact(
    x: ShiftedState,
    x_delayed: ShiftedState,
    fp: FixedPoint,
    params: SystemParams,
    lp: LyapunovParams,
) -> float:
    """dV/dt along the exact shifted dynamics (not a finite difference)."""
    dx1, dx2 = cubic_shifted_rhs(x, x_delayed, fp, params)
    return lp.d1 * x.x1 * dx1 + lp.d4 * x.x2**3 * dx2


def shifted_samples(traj: Trajectory, fp: FixedPoint) -> list[ShiftedState]:
    return [to_shifted(traj.state_at(i), fp) for i in range(len(traj.t))]


def vdot_along(
    traj: Trajectory,
    fp: FixedPoint,
    params: SystemParams,
    lp: LyapunovParams,
    init: InitialHistory | None = None,
) -> np.ndarray:
    """dV/dt at every trajectory sample via the exact right-hand side.

    Delayed samples inside the first delay come from ``init`` when given and
    otherwise from constant extension of the first sample, which matches
    trajectories started from constant histories.
    """
    k = round(params.tau / traj.step)
    xs = shifted_samples(traj, fp)
    out = np.empty(len(xs))
    for i, x in enumerate(xs):
        if i >= k:
            xd = xs[i - k]
        elif init is not None:
            xd = to_shifted(init(i * traj.step - params.tau), fp)
        else:
            xd = xs[0]
        out[i] = vdot_exact(x, xd, fp, params, lp)
    return out


def razumikhin_mask(
    traj: Trajectory, fp: FixedPoint, params: SystemParams, lp: LyapunovParams
) -> np.ndarray:
    """Per-sample truth of the history comparison V(past) <= p * V(now).

    The comparison window is the trailing delay, checked against the stored
    samples; times before the start use the first sample, matching constant
    initial histories.
    """
    k = round(params.tau / traj.step)
    xs = shifted_samples(traj, fp)
    v = np.array([lyapunov_V(x, lp) for x in xs])
    ok = np.empty(len(v), dtype=bool)
    for i in range(len(v)):
        lo = max(0, i - k)
        past = v[lo : i + 1].max()
        if i - k < 0:
            past = max(past, v[0])
        ok[i] = past <= lp.razumikhin_p * v[i]
    return ok


def convergence_bound(
    t, v0: float, lp: LyapunovParams, lambda_min: float, t0: float = 0.0
):
    """Bound on |x(t)|^4 from the decay of V; accepts scalar or array t.

    1 / ( eps1*(lambda_min - k_margin)/eps0^2 * (t - t0) + eps1/V(t0) )
    """
    if not v0 > 0.0:
        raise ValueError(f"V(t0) must be positive, got {v0}")
    if not lambda_min > lp.k_margin:
        raise ValueError(
            f"need lambda_min > k_margin, got {lambda_min} <= {lp.k_margin}"
        )
    t = np.asarray(t, dtype=float)
    if np.any(t < t0):
        raise ValueError("bound requested before t0")
    slope = lp.eps1 * (lambda_min - lp.k_margin) / lp.eps0**2
    out = 1.0 / (slope * (t - t0) + lp.eps1 / v0)
    return float(out) if out.ndim == 0 else out


def basin_delta(epsilon: float, lp: LyapunovParams) -> float:
    """Initial-history radius guaranteeing |x(t)| stays below epsilon."""
    if not epsilon > 0.0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    return epsilon * epsilon * math.sqrt(lp.eps1 / lp.eps0)


@dataclass
class DiagnosticTrace:
    """Per-sample stability diagnostics of one trajectory."""

    t: np.ndarray
    norm_x: np.ndarray
    v: np.ndarray
    vdot: np.ndarray
    bound: np.ndarray
    razumikhin_ok: np.ndarray

    def write_csv(self, path, stride: int = 1) -> None:
        with open(path, "w", newline="") as fh:
            fh.write("t,norm_x,V,Vdot,bound\n")
            for i in range(0, len(self.t), stride):
                write_row(
                    fh, (self.t[i], self.norm_x[i], self.v[i], self.vdot[i], self.bound[i])
                )


def stability_trace(
    traj: Trajectory,
    fp: FixedPoint,
    params: SystemParams,
    lp: LyapunovParams,
    qt: QtildeMatrix,
    init: InitialHistory | None = None,
) -> DiagnosticTrace:
    """Assemble the diagnostics CSV columns for one trajectory."""
    xs = shifted_samples(traj, fp)
    norm = np.array([math.hypot(x.x1, x.x2) for x in xs])
    v = np.array([lyapunov_V(x, lp) for x in xs])
    vdot = vdot_along(traj, fp, params, lp, init)
    bound = convergence_bound(traj.t, float(v[0]), lp, qt.lambda_min)
    return DiagnosticTrace(
        t=traj.t,
        norm_x=norm,
        v=v,
        vdot=vdot,
        bound=bound,
        razumikhin_ok=razumikhin_mask(traj, fp, params, lp),
    )


def loglog_slope(x, y) -> float:
    """Least-squares slope of log(y) against log(x)."""
    lx = np.log(np.asarray(x, dtype=float))
    ly = np.log(np.asarray(y, dtype=float))
    return float(np.polyfit(lx, ly, 1)[0])
