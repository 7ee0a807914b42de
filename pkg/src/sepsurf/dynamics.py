"""Vector fields and fixed-step integration for the vertical test particle.

States live either in standard coordinates (q, p, theta) or in inverted
coordinates (Q, P, theta) with Q = q**-1/2, which maps q = infinity onto
the equilibrium line Q = 0.  The phase slot theta runs on the
configuration clock and is kept unreduced along trajectories; it is
reduced mod T only where output demands it.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import _kernels as K
from .errors import IntegrationBlowupError, StepSizeError
from .planar import PlanarConfiguration

COLLISION_WINDOW = 1e-4  # phase half-width around declared collision times


@dataclass(frozen=True)
class StateStd:
    """Standard-coordinate phase point (q, p, theta)."""

    q: float
    p: float
    theta: float

    def __post_init__(self):
        if not all(map(math.isfinite, (self.q, self.p, self.theta))):
            raise ValueError(f"non-finite state ({self.q}, {self.p}, {self.theta})")

    def as_array(self) -> np.ndarray:
        return np.array([self.q, self.p, self.theta])


@dataclass(frozen=True)
class StateInv:
    """Inverted-coordinate phase point (Q, P, theta); Q = 0 encodes q = inf."""

    Q: float
    P: float
    theta: float

    def __post_init__(self):
        if not all(map(math.isfinite, (self.Q, self.P, self.theta))):
            raise ValueError(f"non-finite state ({self.Q}, {self.P}, {self.theta})")
        if self.Q < 0.0:
            raise ValueError(f"inverted position must be >= 0, got {self.Q}")

    def as_array(self) -> np.ndarray:
        return np.array([self.Q, self.P, self.theta])


@dataclass(frozen=True)
class IntegratorSettings:
    """Fixed-step integration parameters.

    h and s_max default per configuration: h = T/2000 on physical clocks,
    T/4000 on fictional ones, and s_max = 50 T.
    """

    h: float
    max_steps: int = 500_000
    crossing_tol: float = 1e-10
    s_max: float = 0.0

    def __post_init__(self):
        if self.h <= 0.0:
            raise ValueError("step h must be positive")
        if self.crossing_tol <= 0.0:
            raise ValueError("crossing tolerance must be positive")

    @classmethod
    def for_config(cls, config: PlanarConfiguration, *, h: float | None = None,
                   s_max: float | None = None, max_steps: int = 500_000,
                   crossing_tol: float = 1e-10) -> "IntegratorSettings":
        if h is None:
            h = config.period / (4000.0 if config.time_mode == "fictional" else 2000.0)
        if s_max is None:
            s_max = 50.0 * config.period
        return cls(h=h, max_steps=max_steps, crossing_tol=crossing_tol, s_max=s_max)


@dataclass
class Trajectory:
    """Sampled integration output; times strictly monotone per direction."""

    times: np.ndarray
    states: np.ndarray
    direction: int
    reason: str  # "stopped" | "budget"

    def __len__(self) -> int:
        return len(self.times)

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]


# --------------------------------------------------------------------------
# Vector fields


def _phase_rate(config: PlanarConfiguration, theta: float) -> float:
    """d(theta)/dt on the physical clock: 1, or 1/dilation when fictional."""
    if config.time_mode == "physical":
        return 1.0
    u = config.dilation(theta)
    if u == 0.0:
        _guard_collision_window(config, theta)
        return math.inf
    return 1.0 / u


def _guard_collision_window(config: PlanarConfiguration, theta: float):
    th = theta % config.period
    for tc in config.collision_phases:
        d = abs(th - tc % config.period)
        if min(d, config.period - d) < COLLISION_WINDOW:
            return
    raise StepSizeError(
        f"dilation vanished at phase {th:.6g} outside any declared collision window"
    )


def vf_std(state: StateStd, config: PlanarConfiguration) -> tuple[float, float, float]:
    """Physical-time derivatives (dq/dt, dp/dt, dtheta/dt).

    For fictional-mode configurations the phase drifts at 1/dilation on
    the physical clock (infinite at collision phases).
    """
    args = config.kernel_args
    accel = K._accel_std(state.q, state.theta, args[0], args[1], args[4], args[7], args[8])
    return state.p, accel, _phase_rate(config, state.theta)


def vf_inv(state: StateInv, config: PlanarConfiguration) -> tuple[float, float, float]:
    """Inverted-frame derivatives; exactly (0, 0, rate) on Q = 0."""
    if state.Q == 0.0:
        return 0.0, 0.0, _phase_rate(config, state.theta)
    args = config.kernel_args
    accel = K._accel_inv(state.Q, state.theta, args[0], args[1], args[4], args[7], args[8])
    dq = -0.5 * state.Q**3 * state.P
    return dq, -accel, _phase_rate(config, state.theta)


def vf_fictional(state: StateStd, config: PlanarConfiguration) -> tuple[float, float, float]:
    """Derivatives with respect to the configuration's fictional clock.

    The physical-time field scaled by the dilation u = dt/dt_hat, i.e.
    dq/dt_hat = p*u; the phase itself advances at unit rate.  The traced
    (q, p) curve coincides with the physical-time one as a point set.
    """
    if config.time_mode != "fictional":
        raise ValueError("vf_fictional requires a fictional-time configuration")
    u = config.dilation(state.theta)
    if u == 0.0:
        _guard_collision_window(config, state.theta)
    args = config.kernel_args
    accel = K._accel_std(state.q, state.theta, args[0], args[1], args[4], args[7], args[8])
    return state.p * u, accel * u, 1.0


def standard_field(config: PlanarConfiguration) -> Callable[[float, np.ndarray], np.ndarray]:
    """field(t, y) for y = (q, p, theta) on the configuration clock."""
    breaks, coeffs, ucoeffs, fict, masses, _, _, bigT, udx = config.kernel_args

    def field(t, y):
        dq, dp = K._rhs_std(y[0], y[1], y[2], breaks, coeffs, ucoeffs, fict,
                            masses, bigT, udx)
        return np.array([dq, dp, 1.0])

    return field


def inverted_field(config: PlanarConfiguration) -> Callable[[float, np.ndarray], np.ndarray]:
    """field(t, y) for y = (Q, P, theta) on the configuration clock."""
    breaks, coeffs, ucoeffs, fict, masses, _, _, bigT, udx = config.kernel_args

    def field(t, y):
        dq, dp = K._rhs_inv(y[0], y[1], y[2], breaks, coeffs, ucoeffs, fict,
                            masses, bigT, udx)
        return np.array([dq, dp, 1.0])

    return field


# --------------------------------------------------------------------------
# Stepping


def rk4_step(field: Callable, t: float, y: np.ndarray, h: float,
             period: float | None = None) -> np.ndarray:
    """One classical fourth-order step of y' = field(t, y).

    Negative h steps backward.  When `period` is given the final slot of
    the state (the phase) is reduced mod period after the step.
    """
    if h == 0.0:
        raise ValueError("step size must be nonzero")
    y = np.asarray(y, dtype=float)
    k1 = np.asarray(field(t, y))
    k2 = np.asarray(field(t + 0.5 * h, y + 0.5 * h * k1))
    k3 = np.asarray(field(t + 0.5 * h, y + 0.5 * h * k2))
    k4 = np.asarray(field(t + h, y + h * k3))
    out = y + (h / 6.0) * (k1 + 2.0 * (k2 + k3) + k4)
    if not np.all(np.isfinite(out)):
        raise IntegrationBlowupError(f"non-finite state after step from t={t}")
    if period is not None:
        out[-1] %= period
    return out


def integrate_until(state, field: Callable, settings: IntegratorSettings,
                    stop: Callable[[float, np.ndarray], bool],
                    direction: int = 1) -> Trajectory:
    """Step until `stop(t, y)` fires or the step budget runs out.

    The firing step is refined by bisection in time down to
    settings.crossing_tol, and the refined sample terminates the record.
    Budget exhaustion is a normal termination (reason "budget").
    """
    y = state.as_array() if hasattr(state, "as_array") else np.asarray(state, dtype=float)
    sgn = 1 if direction >= 0 else -1
    h = settings.h * sgn
    t = 0.0
    times = [t]
    states = [y.copy()]
    if stop(t, y):
        return Trajectory(np.array(times), np.array(states), sgn, "stopped")
    for _ in range(settings.max_steps):
        y_next = rk4_step(field, t, y, h)
        t_next = t + h
        if stop(t_next, y_next):
            dt_lo, dt_hi = 0.0, h
            while abs(dt_hi - dt_lo) > settings.crossing_tol:
                dm = 0.5 * (dt_lo + dt_hi)
                ym = rk4_step(field, t, y, dm)
                if stop(t + dm, ym):
                    dt_hi = dm
                else:
                    dt_lo = dm
            yf = rk4_step(field, t, y, dt_hi)
            times.append(t + dt_hi)
            states.append(yf)
            return Trajectory(np.array(times), np.array(states), sgn, "stopped")
        t, y = t_next, y_next
        times.append(t)
        states.append(y.copy())
    return Trajectory(np.array(times), np.array(states), sgn, "budget")


# --------------------------------------------------------------------------
# Coordinate changes


def invert_state(s: StateStd) -> StateInv:
    """Map (q, p, theta) to (q**-1/2, p, theta); requires q > 0."""
    if s.q <= 0.0:
        raise ValueError(f"inversion requires q > 0, got {s.q}")
    return StateInv(Q=1.0 / math.sqrt(s.q), P=s.p, theta=s.theta)


def uninvert_state(s: StateInv) -> StateStd:
    """Map (Q, P, theta) back to (Q**-2, P, theta); requires Q > 0."""
    if s.Q <= 0.0:
        raise ValueError(f"un-inversion requires Q > 0, got {s.Q}")
    return StateStd(q=1.0 / (s.Q * s.Q), p=s.P, theta=s.theta)
