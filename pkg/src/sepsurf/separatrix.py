"""Separatrix construction and its traces on the q = 0 plane.

The boundary velocity f(theta) at a fixed height q0 > q_mono is found by
bisection between certified return and escape classifications.  The
sampled boundary curve is pulled back to the q = 0 plane, reflected
through time-reversal symmetry phases, and iterated with first-return
maps.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from .classify import DECISION_EPS
from .dynamics import IntegratorSettings
from .errors import BracketError, IntegrationBlowupError
from .planar import PlanarConfiguration, q_mono

#: Convention for images reported in the p > 0 half-plane.
SIGN_NOTE = "image mapped to the p > 0 half-plane via the (q, p) -> (-q, -p) symmetry"

_MAX_BISECTIONS = 60
_REFINE_GAP_FACTOR = 5.0
_REFINE_FLOOR_FRACTION = 1e-4  # of the period


@dataclass(frozen=True)
class SeparatrixSample:
    """One bisection result: boundary velocity f at (q0, theta).

    decided records whether the lower/upper bracket endpoints carried
    certified classifications; flagged marks samples whose bisection was
    stopped early by an undecided midpoint (assigned to the return side).
    """

    theta: float
    f: float
    bracket_width: float
    decided: tuple[bool, bool]
    flagged: bool
    iterations: int = 0
    budget_doublings: int = 0


@dataclass
class SeparatrixCurve:
    """Sampled graph of f over a theta grid covering [0, T]."""

    q0: float
    direction: int
    tol: float
    thetas: np.ndarray
    f: np.ndarray
    bracket_width: np.ndarray
    flagged: np.ndarray
    samples: list[SeparatrixSample]

    @property
    def Q0(self) -> float:
        return 1.0 / math.sqrt(self.q0)

    @property
    def periodicity_gap(self) -> float:
        return abs(float(self.f[-1] - self.f[0]))


@dataclass
class PlaneCurve:
    """Trace of the separatrix on the q = 0 plane.

    branch "S0+" holds forward-parabolic launch points, "S0-" the
    backward-parabolic ones; p is reported in the p > 0 half-plane (see
    SIGN_NOTE).  truncated marks points with no crossing inside the
    budget or with p beyond the output cap.
    """

    branch: str
    theta: np.ndarray
    p: np.ndarray
    periods: np.ndarray
    truncated: np.ndarray
    theta_raw: np.ndarray
    source_theta: np.ndarray
    period: float
    q0: float

    def points(self) -> np.ndarray:
        return np.column_stack([self.theta, self.p])


@dataclass(frozen=True)
class ReturnMapPoint:
    """Forward image of a q = 0 launch point at its next q = 0 crossing."""

    theta_in: float
    p_in: float
    theta_out_raw: float
    theta_out: float
    p_out: float
    periods: int
    returned: bool
    sign_convention: str = SIGN_NOTE


# --------------------------------------------------------------------------
# Bisection


def _default_tol(q0: float, config: PlanarConfiguration) -> float:
    return 1e-10 * math.sqrt(2.0 * config.total_mass) / math.sqrt(q0)


def _check_q0(q0: float, config: PlanarConfiguration):
    qm = q_mono(config)
    if q0 <= qm:
        raise ValueError(
            f"q0 must exceed the monotonicity height {qm:.6g}, got {q0}")


def find_f(theta: float, q0: float, config: PlanarConfiguration,
           tol: float | None = None, settings: IntegratorSettings | None = None,
           direction: int = 1) -> SeparatrixSample:
    """Bisect the boundary velocity at one phase.

    The initial bracket is [0, sqrt(2M) Q0]; the lower endpoint must
    classify as return and the upper as escape, else BracketError.
    Undecided midpoints consume up to three budget doublings; a midpoint
    undecided at the doubled cap ends the bisection with the sample
    flagged and the bracket reported at its current width.
    """
    _check_q0(q0, config)
    if settings is None:
        settings = IntegratorSettings.for_config(config)
    if tol is None:
        tol = _default_tol(q0, config)
    if tol <= 0.0:
        raise ValueError("tolerance must be positive")
    f, width, flagged, lower_ok, upper_ok, iters, doublings, err = K._find_f(
        theta, q0, direction, *config.kernel_args,
        settings.h, settings.s_max, tol, DECISION_EPS, _MAX_BISECTIONS)
    _raise_find_f_error(err, theta, lower_ok, upper_ok, config)
    return SeparatrixSample(
        theta=theta, f=f, bracket_width=width,
        decided=(bool(lower_ok), bool(upper_ok)), flagged=bool(flagged),
        iterations=int(iters), budget_doublings=int(doublings))


def _raise_find_f_error(err: int, theta, lower_ok, upper_ok, config):
    if err == K.ERR_BLOWUP:
        raise IntegrationBlowupError(
            f"integration blew up during bisection at theta={theta} on {config.name}")
    if err == K.ERR_BRACKET:
        raise BracketError(
            f"inconsistent bracket at theta={theta}: lower endpoint "
            f"{'return' if lower_ok else 'NOT return'}, upper endpoint "
            f"{'escape' if upper_ok else 'NOT escape'}")


def build_curve(q0: float, config: PlanarConfiguration, grid_n: int = 64,
                tol: float | None = None, settings: IntegratorSettings | None = None,
                direction: int = 1, thetas: np.ndarray | None = None) -> SeparatrixCurve:
    """Sample f on an evenly spaced grid of grid_n phases covering [0, T].

    Both endpoints are included (thetas[0] = 0, thetas[-1] = T).  Grid
    samples are independent and are evaluated in parallel; output order
    follows the grid.
    """
    _check_q0(q0, config)
    if thetas is None:
        if grid_n < 2:
            raise ValueError("grid_n must be at least 2")
        thetas = np.linspace(0.0, config.period, grid_n)
    else:
        thetas = np.asarray(thetas, dtype=float)
    if settings is None:
        settings = IntegratorSettings.for_config(config)
    if tol is None:
        tol = _default_tol(q0, config)
    f, width, flagged, lower_ok, upper_ok, iters, doublings, err = K._find_f_grid(
        thetas, q0, direction, *config.kernel_args,
        settings.h, settings.s_max, tol, DECISION_EPS, _MAX_BISECTIONS)
    for k in range(len(thetas)):
        _raise_find_f_error(int(err[k]), float(thetas[k]), bool(lower_ok[k]),
                            bool(upper_ok[k]), config)
    samples = [
        SeparatrixSample(
            theta=float(thetas[k]), f=float(f[k]), bracket_width=float(width[k]),
            decided=(bool(lower_ok[k]), bool(upper_ok[k])), flagged=bool(flagged[k]),
            iterations=int(iters[k]), budget_doublings=int(doublings[k]))
        for k in range(len(thetas))
    ]
    return SeparatrixCurve(
        q0=q0, direction=direction, tol=float(tol), thetas=thetas,
        f=f, bracket_width=width, flagged=flagged.astype(bool), samples=samples)


# --------------------------------------------------------------------------
# Plane traces


def backward_to_plane(curve: SeparatrixCurve, config: PlanarConfiguration,
                      settings: IntegratorSettings | None = None,
                      p_cap: float | None = None, refine: bool = True,
                      refine_floor: float | None = None) -> PlaneCurve:
    """Pull a boundary curve back to its first q = 0 crossings.

    Each sample (q0, f(theta), theta) is integrated in standard
    coordinates against the curve's time direction until q crosses 0;
    the crossing phase (mod T) and velocity are recorded.  Where
    neighbouring crossing velocities jump (vanishing radii produce
    unbounded spikes), the source grid is subdivided adaptively down to
    a source-phase floor (default T/1e4; pass refine_floor to resolve
    spikes more deeply).  Points with no crossing inside the budget, or
    beyond p_cap, are flagged truncated rather than dropped.
    """
    if settings is None:
        settings = IntegratorSettings.for_config(config)
    # A forward-parabolic boundary point ascends at q0 and is traced back
    # in time; a backward-parabolic one (direction -1) descends and is
    # traced forward.  Both reach the plane against the curve's direction.
    trace_dir = -curve.direction
    src = list(map(float, curve.thetas))
    fvals = [curve.direction * float(v) for v in curve.f]
    th_raw, p_raw, t_el, status = _trace_many(src, fvals, curve.q0, trace_dir,
                                              config, settings)
    if refine:
        floor = (config.period * _REFINE_FLOOR_FRACTION
                 if refine_floor is None else refine_floor)
        for _ in range(128):
            inserted = _refine_pass(src, fvals, th_raw, p_raw, t_el, status,
                                    curve, config, settings, trace_dir, floor)
            if not inserted or len(src) > max(4096, 20 * len(curve.thetas)):
                break
    return _assemble_plane_curve("S0+" if curve.direction >= 0 else "S0-",
                                 src, th_raw, p_raw, t_el, status,
                                 config.period, curve.q0, p_cap)


def _trace_many(thetas, fvals, q0, direction, config, settings):
    th = np.asarray(thetas, dtype=float)
    pv = np.asarray(fvals, dtype=float)
    th_out, p_out, t_out, status = K._trace_to_plane_grid(
        q0, pv, th, direction, *config.kernel_args,
        settings.h, settings.s_max, settings.crossing_tol)
    return list(th_out), list(p_out), list(t_out), list(status)


def _refine_pass(src, fvals, th_raw, p_raw, t_el, status, curve, config,
                 settings, trace_dir, floor) -> int:
    gaps = []
    for i in range(len(src) - 1):
        both = status[i] == K.CROSSED and status[i + 1] == K.CROSSED
        gaps.append(abs(p_raw[i + 1] - p_raw[i]) if both else math.inf)
    finite = [g for g in gaps if math.isfinite(g)]
    if not finite:
        return 0
    median = float(np.median(finite)) or 1e-12
    targets = [i for i, g in enumerate(gaps)
               if g > _REFINE_GAP_FACTOR * median and src[i + 1] - src[i] > floor]
    if not targets:
        return 0
    new_thetas = [0.5 * (src[i] + src[i + 1]) for i in targets]
    sub = build_curve(curve.q0, config, tol=curve.tol or None, settings=settings,
                      direction=curve.direction, thetas=np.asarray(new_thetas))
    signed = [curve.direction * float(v) for v in sub.f]
    nth, npv, ntl, nst = _trace_many(new_thetas, signed, curve.q0,
                                     trace_dir, config, settings)
    for off, i in enumerate(targets):
        at = i + 1 + off
        src.insert(at, new_thetas[off])
        fvals.insert(at, signed[off])
        th_raw.insert(at, nth[off])
        p_raw.insert(at, npv[off])
        t_el.insert(at, ntl[off])
        status.insert(at, nst[off])
    return len(targets)


def _assemble_plane_curve(branch, src, th_raw, p_raw, t_el, status, period,
                          q0, p_cap) -> PlaneCurve:
    th_raw = np.asarray(th_raw, dtype=float)
    p = np.abs(np.asarray(p_raw, dtype=float))
    status = np.asarray(status)
    truncated = status != K.CROSSED
    if p_cap is not None:
        truncated = truncated | (p > p_cap)
    periods = (np.asarray(t_el, dtype=float) // period).astype(int)
    return PlaneCurve(
        branch=branch, theta=th_raw % period, p=p, periods=periods,
        truncated=truncated, theta_raw=th_raw,
        source_theta=np.asarray(src, dtype=float), period=period, q0=q0)


def reflect_for_reversal(curve: PlaneCurve, t0: float,
                         config: PlanarConfiguration) -> PlaneCurve:
    """Reflect a plane trace through a declared time-reversal phase.

    Maps each (theta, p) to ((2 t0 - theta) mod T, p) and flips the
    branch tag; the reflected points are the time-reversed parabolic
    launch points in the p > 0 half-plane.  t0 must be one of the
    configuration's declared symmetry points (mod T).
    """
    T = config.period
    ok = False
    for s in config.symmetry_points:
        d = (t0 - s) % T
        if min(d, T - d) <= 1e-9:
            ok = True
            break
    if not ok:
        raise ValueError(
            f"{t0} is not a declared symmetry point of {config.name} "
            f"(declared: {config.symmetry_points})")
    return PlaneCurve(
        branch="S0-" if curve.branch == "S0+" else "S0+",
        theta=(2.0 * t0 - curve.theta) % T,
        p=curve.p.copy(),
        periods=curve.periods.copy(),
        truncated=curve.truncated.copy(),
        theta_raw=2.0 * t0 - curve.theta_raw,
        source_theta=(2.0 * t0 - curve.source_theta) % T,
        period=T, q0=curve.q0)


def forward_return_map(points, config: PlanarConfiguration,
                       settings: IntegratorSettings | None = None) -> list[ReturnMapPoint]:
    """Forward images of q = 0 launch points at their next q = 0 crossing.

    Accepts a PlaneCurve or a sequence of (theta, p) pairs with p > 0.
    Images are reported in the p > 0 half-plane (SIGN_NOTE); the crossing
    phase is recorded both raw and mod T along with the count of planar
    periods completed in flight.  Points that do not return inside the
    budget are marked returned=False.
    """
    if settings is None:
        settings = IntegratorSettings.for_config(config)
    if isinstance(points, PlaneCurve):
        pts = points.points()
    else:
        pts = np.asarray(list(points), dtype=float)
    if pts.size == 0:
        return []
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError("points must be (theta, p) pairs")
    if (pts[:, 1] <= 0.0).any():
        raise ValueError("all launch velocities must be positive")
    th_out, p_out, t_out, status = K._return_map_grid(
        np.ascontiguousarray(pts[:, 1]), np.ascontiguousarray(pts[:, 0]),
        *config.kernel_args, settings.h, settings.s_max, settings.crossing_tol)
    T = config.period
    out = []
    for k in range(len(pts)):
        returned = status[k] == K.CROSSED
        out.append(ReturnMapPoint(
            theta_in=float(pts[k, 0]), p_in=float(pts[k, 1]),
            theta_out_raw=float(th_out[k]), theta_out=float(th_out[k] % T),
            p_out=float(abs(p_out[k])),
            periods=int(t_out[k] // T), returned=bool(returned)))
    return out


# --------------------------------------------------------------------------
# Polyline intersection


def _as_points(curve) -> tuple[np.ndarray, float | None]:
    if isinstance(curve, PlaneCurve):
        return curve.points(), curve.period
    arr = np.asarray(list(curve), dtype=float)
    return arr, None


def _segments(points: np.ndarray, period: float | None) -> list[tuple]:
    segs = []
    for i in range(len(points) - 1):
        (x1, y1), (x2, y2) = points[i], points[i + 1]
        if period is not None:
            x2 = x2 - period * round((x2 - x1) / period)
        segs.append((x1, y1, x2, y2))
    if period is not None:
        shifted = []
        for (x1, y1, x2, y2) in segs:
            shifted.append((x1 - period, y1, x2 - period, y2))
            shifted.append((x1 + period, y1, x2 + period, y2))
        segs.extend(shifted)
    return segs


def intersect_polylines(curve_a, curve_b, period: float | None = None,
                        return_degenerate: bool = False):
    """All transversal crossings between two polylines, ordered by theta.

    Curves may be PlaneCurve objects (period taken from them) or plain
    sequences of (theta, p).  When a period is known, segments spanning
    the wrap are unwrapped and the crossings reduced mod period.
    Exactly parallel overlapping segment pairs are never reported as
    crossings; with return_degenerate=True they come back separately as
    index pairs.
    """
    pa, perioda = _as_points(curve_a)
    pb, periodb = _as_points(curve_b)
    if period is None:
        period = perioda if perioda is not None else periodb
    segs_a = _segments(pa, period)
    segs_b = _segments(pb, period)
    crossings = []
    degenerate = []
    for ia, (ax1, ay1, ax2, ay2) in enumerate(segs_a):
        d1x, d1y = ax2 - ax1, ay2 - ay1
        for ib, (bx1, by1, bx2, by2) in enumerate(segs_b):
            d2x, d2y = bx2 - bx1, by2 - by1
            denom = d1x * d2y - d1y * d2x
            scale = (abs(d1x) + abs(d1y)) * (abs(d2x) + abs(d2y))
            ex, ey = bx1 - ax1, by1 - ay1
            if abs(denom) <= 1e-14 * max(scale, 1e-300):
                if abs(ex * d1y - ey * d1x) <= 1e-12 * max(scale, 1e-300):
                    lo = max(min(ax1, ax2), min(bx1, bx2))
                    hi = min(max(ax1, ax2), max(bx1, bx2))
                    if hi - lo > 1e-15:
                        degenerate.append((ia, ib))
                continue
            # proper (transversal) crossing: each segment's endpoints lie on
            # strictly opposite sides of the other; endpoint touches between
            # adjacent or identical polylines are not crossings
            s1 = d2x * (ay1 - by1) - d2y * (ax1 - bx1)
            s2 = d2x * (ay2 - by1) - d2y * (ax2 - bx1)
            s3 = d1x * (by1 - ay1) - d1y * (bx1 - ax1)
            s4 = d1x * (by2 - ay1) - d1y * (bx2 - ax1)
            if s1 * s2 >= 0.0 or s3 * s4 >= 0.0:
                continue
            t = (ex * d2y - ey * d2x) / denom
            x = ax1 + t * d1x
            y = ay1 + t * d1y
            if period is not None:
                x %= period
            crossings.append((x, y))
    crossings.sort()
    unique = []
    for x, y in crossings:
        if unique and abs(x - unique[-1][0]) < 1e-9 and abs(y - unique[-1][1]) < 1e-9:
            continue
        unique.append((x, y))
    if return_degenerate:
        return unique, degenerate
    return unique
