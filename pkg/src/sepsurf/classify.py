"""Escape/return classification from integrated energy-type bounds.

Along any trajectory with q > 0, p > 0 the quantity p^2/2 - M/q can only
grow and p^2/2 - M/sqrt(Rb^2 + q^2) can only shrink (Rb the radius bound
of the configuration), so their signs certify hyperbolic escape and
return respectively.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from .dynamics import IntegratorSettings, StateInv, StateStd
from .errors import IntegrationBlowupError
from .planar import PlanarConfiguration

#: Decision margin: verdicts require the strict inequalities E > eps /
#: E < -eps to avoid flip-flop at machine precision.
DECISION_EPS = 1e-12


@dataclass(frozen=True)
class EnergyBounds:
    """Lower and upper energy-type bounds at a phase point.

    e_star = p^2/2 - M/q bounds the specific energy from below,
    e_substar = p^2/2 - M/sqrt(Rb^2 + q^2) bounds it from above, so
    e_star <= e_substar for every q > 0.
    """

    e_star: float
    e_substar: float


@dataclass(frozen=True)
class Classification:
    """Outcome of classify_trajectory.

    verdict is "escape" (witness: positive e_star at the decision sample),
    "return" (witness: negative e_substar), or "undecided" (budget ran
    out); decision_time is on the configuration clock.
    """

    verdict: str
    witness: float | None
    decision_time: float
    budget: float


def energy_bounds(q: float, p: float, config: PlanarConfiguration) -> EnergyBounds:
    """Both bounds at (q, p); requires q > 0."""
    if q <= 0.0:
        raise ValueError(f"energy bounds require q > 0, got {q}")
    m = config.total_mass
    rb = config.r_bound
    return EnergyBounds(
        e_star=0.5 * p * p - m / q,
        e_substar=0.5 * p * p - m / math.sqrt(rb * rb + q * q),
    )


def cone_test(state: StateInv, total_mass: float) -> bool:
    """True iff P >= sqrt(2M) Q, the forward-invariant escape cone."""
    return state.P >= math.sqrt(2.0 * total_mass) * state.Q


def e_substar_zero_curve(Q, total_mass: float, r_bound: float):
    """P on the e_substar = 0 curve: sqrt(2M) Q / (Rb^2 Q^4 + 1)^(1/4).

    Its slope at Q -> 0+ equals sqrt(2M), the cone boundary slope.
    """
    Q = np.asarray(Q, dtype=float)
    out = math.sqrt(2.0 * total_mass) * Q / (r_bound**2 * Q**4 + 1.0) ** 0.25
    return float(out) if out.ndim == 0 else out


def classify_trajectory(state: StateStd, config: PlanarConfiguration,
                        settings: IntegratorSettings | None = None,
                        direction: int = 1) -> Classification:
    """Integrate forward and decide escape versus return.

    Escape fires at the first sample with e_star > eps, return at the
    first with e_substar < -eps or with the outward velocity <= 0; when
    the s_max budget elapses with neither, the verdict is "undecided".
    Runs in standard coordinates up to max(1, q0) and in inverted
    coordinates beyond.  direction=-1 classifies the time-reversed
    trajectory (outward velocity is then -p).
    """
    if state.q <= 0.0 or state.p <= 0.0:
        raise ValueError(f"classification requires q > 0 and p > 0, got {state}")
    if settings is None:
        settings = IntegratorSettings.for_config(config)
    q_switch = max(1.0, state.q)
    sgn = 1.0 if direction >= 0 else -1.0
    code, witness, t_dec = K._classify(
        state.q, sgn * state.p, state.theta, direction,
        *config.kernel_args,
        settings.h, settings.s_max, DECISION_EPS, q_switch)
    if code == K.BLOWUP:
        raise IntegrationBlowupError(
            f"integration blew up classifying {state} on {config.name}")
    if code == K.ESCAPE:
        return Classification("escape", witness, t_dec, settings.s_max)
    if code == K.RETURN:
        return Classification("return", witness, t_dec, settings.s_max)
    return Classification("undecided", None, t_dec, settings.s_max)
