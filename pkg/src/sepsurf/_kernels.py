"""Compiled scalar kernels for trajectory integration and classification.

Configurations arrive lowered to piecewise-cubic coefficient tables (see
planar._KernelTable); every kernel takes the same 9-argument pack:

    breaks, coeffs, ucoeffs, fict, masses, mtot, rbound, bigT, udx

All integration is classical fixed-step RK4 on the configuration clock
(physical time, or the regularizing time for fictional-mode setups, where
the q/p slots of the field are scaled by the dilation).
"""
import math

import numpy as np
from numba import njit, prange

RETURN = 0
ESCAPE = 1
UNDECIDED = 2
BLOWUP = 3

CROSSED = 1
NO_CROSS = 0
DIVERGED = -1

ERR_NONE = 0
ERR_BLOWUP = 1
ERR_BRACKET = 2

# Classification steps in the far zone (inverted coordinates with Q below
# Q_FAR, i.e. q above 1/Q_FAR**2) use this fixed multiple of h: the field
# out there scales like q**-2, so the coarser step keeps local truncation
# near machine precision while cutting the cost of near-parabolic coasting.
INV_STEP_FACTOR = 16.0
Q_FAR = 0.5


@njit(cache=True)
def _segment(breaks, udx, th):
    nseg = breaks.size - 1
    if udx > 0.0:
        j = int(th / udx)
        if j >= nseg:
            j = nseg - 1
        if j < 0:
            j = 0
        return j
    lo = 0
    hi = nseg
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if breaks[mid] <= th:
            lo = mid
        else:
            hi = mid
    return lo


@njit(cache=True)
def _radius_at(breaks, coeffs, i, j, s):
    c0 = coeffs[i, j, 0]
    c1 = coeffs[i, j, 1]
    c2 = coeffs[i, j, 2]
    c3 = coeffs[i, j, 3]
    return ((c0 * s + c1) * s + c2) * s + c3


@njit(cache=True)
def _dilation_at(breaks, ucoeffs, bigT, udx, th_raw):
    th = th_raw % bigT
    j = _segment(breaks, udx, th)
    s = th - breaks[j]
    c0 = ucoeffs[j, 0]
    c1 = ucoeffs[j, 1]
    c2 = ucoeffs[j, 2]
    c3 = ucoeffs[j, 3]
    return ((c0 * s + c1) * s + c2) * s + c3


@njit(cache=True)
def _accel_std(q, th_raw, breaks, coeffs, masses, bigT, udx):
    th = th_raw % bigT
    j = _segment(breaks, udx, th)
    s = th - breaks[j]
    acc = 0.0
    for i in range(masses.size):
        r = _radius_at(breaks, coeffs, i, j, s)
        d = r * r + q * q
        if d > 0.0:
            acc -= masses[i] * q / (d * math.sqrt(d))
    return acc


@njit(cache=True)
def _accel_inv(Q, th_raw, breaks, coeffs, masses, bigT, udx):
    th = th_raw % bigT
    j = _segment(breaks, udx, th)
    s = th - breaks[j]
    Q2 = Q * Q
    Q4 = Q2 * Q2
    acc = 0.0
    for i in range(masses.size):
        r = _radius_at(breaks, coeffs, i, j, s)
        b = r * r * Q4 + 1.0
        acc += masses[i] * Q4 / (b * math.sqrt(b))
    return acc


@njit(cache=True)
def _rhs_std(q, p, th, breaks, coeffs, ucoeffs, fict, masses, bigT, udx):
    a = _accel_std(q, th, breaks, coeffs, masses, bigT, udx)
    if fict:
        u = _dilation_at(breaks, ucoeffs, bigT, udx, th)
        return p * u, a * u
    return p, a


@njit(cache=True)
def _rhs_inv(Q, P, th, breaks, coeffs, ucoeffs, fict, masses, bigT, udx):
    dq = -0.5 * Q * Q * Q * P
    dp = -_accel_inv(Q, th, breaks, coeffs, masses, bigT, udx)
    if fict:
        u = _dilation_at(breaks, ucoeffs, bigT, udx, th)
        return dq * u, dp * u
    return dq, dp


@njit(cache=True)
def _rk4_std(q, p, th, h, breaks, coeffs, ucoeffs, fict, masses, bigT, udx):
    # The phase slot has unit rate on the configuration clock, so it is
    # advanced exactly; only (q, p) need the RK4 combination.
    k1q, k1p = _rhs_std(q, p, th, breaks, coeffs, ucoeffs, fict, masses, bigT, udx)
    hh = 0.5 * h
    k2q, k2p = _rhs_std(q + hh * k1q, p + hh * k1p, th + hh,
                        breaks, coeffs, ucoeffs, fict, masses, bigT, udx)
    k3q, k3p = _rhs_std(q + hh * k2q, p + hh * k2p, th + hh,
                        breaks, coeffs, ucoeffs, fict, masses, bigT, udx)
    k4q, k4p = _rhs_std(q + h * k3q, p + h * k3p, th + h,
                        breaks, coeffs, ucoeffs, fict, masses, bigT, udx)
    six = h / 6.0
    return (q + six * (k1q + 2.0 * (k2q + k3q) + k4q),
            p + six * (k1p + 2.0 * (k2p + k3p) + k4p),
            th + h)


@njit(cache=True)
def _rk4_inv(Q, P, th, h, breaks, coeffs, ucoeffs, fict, masses, bigT, udx):
    k1q, k1p = _rhs_inv(Q, P, th, breaks, coeffs, ucoeffs, fict, masses, bigT, udx)
    hh = 0.5 * h
    k2q, k2p = _rhs_inv(Q + hh * k1q, P + hh * k1p, th + hh,
                        breaks, coeffs, ucoeffs, fict, masses, bigT, udx)
    k3q, k3p = _rhs_inv(Q + hh * k2q, P + hh * k2p, th + hh,
                        breaks, coeffs, ucoeffs, fict, masses, bigT, udx)
    k4q, k4p = _rhs_inv(Q + h * k3q, P + h * k3p, th + h,
                        breaks, coeffs, ucoeffs, fict, masses, bigT, udx)
    six = h / 6.0
    return (Q + six * (k1q + 2.0 * (k2q + k3q) + k4q),
            P + six * (k1p + 2.0 * (k2p + k3p) + k4p),
            th + h)


@njit(cache=True)
def _classify(q0, p0, th0, direction,
              breaks, coeffs, ucoeffs, fict, masses, mtot, rbound, bigT, udx,
              h, budget, eps, q_switch):
    """Escape/return decision along one trajectory.

    Checks the energy-bound criteria at every sample (including the
    initial one).  The trajectory runs in standard coordinates while
    q <= q_switch and in inverted coordinates beyond.  `direction` < 0
    integrates backward; there the outward velocity is -p.

    Returns (code, witness, decision_time).
    """
    sgn = 1.0 if direction >= 0 else -1.0
    hs = h * sgn
    h_far = h * INV_STEP_FACTOR
    hs_far = hs * INV_STEP_FACTOR
    q = q0
    p = p0
    th = th0
    Qi = 0.0
    Pi = 0.0
    inv_mode = False
    Q_back = 1.0 / math.sqrt(q_switch)
    t = 0.0
    r2 = rbound * rbound
    while True:
        if inv_mode:
            vout = sgn * Pi
            qq = Qi * Qi
            estar = 0.5 * Pi * Pi - mtot * qq
            esub = 0.5 * Pi * Pi - mtot * qq / math.sqrt(r2 * qq * qq + 1.0)
        else:
            if q <= 0.0:
                return RETURN, -mtot / math.sqrt(r2), t
            vout = sgn * p
            estar = 0.5 * p * p - mtot / q
            esub = 0.5 * p * p - mtot / math.sqrt(r2 + q * q)
        if vout <= 0.0 or esub < -eps:
            return RETURN, esub, t
        if estar > eps:
            return ESCAPE, estar, t
        if t >= budget:
            return UNDECIDED, 0.0, t
        if inv_mode:
            far = Qi < Q_FAR
            Qi, Pi, th = _rk4_inv(Qi, Pi, th, hs_far if far else hs,
                                  breaks, coeffs, ucoeffs, fict, masses, bigT, udx)
            if not (math.isfinite(Qi) and math.isfinite(Pi)):
                return BLOWUP, 0.0, t
            if Qi > Q_back:
                inv_mode = False
                q = 1.0 / (Qi * Qi)
                p = Pi
            t += h_far if far else h
        else:
            q, p, th = _rk4_std(q, p, th, hs,
                                breaks, coeffs, ucoeffs, fict, masses, bigT, udx)
            if not (math.isfinite(q) and math.isfinite(p)):
                return BLOWUP, 0.0, t
            if q > q_switch:
                inv_mode = True
                Qi = 1.0 / math.sqrt(q)
                Pi = p
            t += h


@njit(cache=True)
def _find_f(th, q0, direction,
            breaks, coeffs, ucoeffs, fict, masses, mtot, rbound, bigT, udx,
            h, s_max, tol_abs, eps, max_iter):
    """Bisect the escape/return boundary velocity at height q0, phase th.

    The bracket starts at [0, sqrt(2M)/sqrt(q0)].  Midpoints run with the
    fully doubled budget 8*s_max; the number of doublings actually needed
    is recovered from the decision time.  A midpoint still undecided at
    the doubled cap is assigned to the return side, the sample flagged,
    and bisection stops at the current bracket width.

    Returns (f, width, flagged, lower_ok, upper_ok, iters, doublings, err).
    """
    sgn = 1.0 if direction >= 0 else -1.0
    Q0 = 1.0 / math.sqrt(q0)
    p_up = math.sqrt(2.0 * mtot) * Q0
    q_switch = q0 if q0 > 1.0 else 1.0
    budget_max = 8.0 * s_max

    code_lo, _, _ = _classify(q0, 0.0, th, direction,
                              breaks, coeffs, ucoeffs, fict, masses, mtot, rbound, bigT, udx,
                              h, s_max, eps, q_switch)
    code_hi, _, _ = _classify(q0, sgn * p_up, th, direction,
                              breaks, coeffs, ucoeffs, fict, masses, mtot, rbound, bigT, udx,
                              h, budget_max, eps, q_switch)
    if code_lo == BLOWUP or code_hi == BLOWUP:
        return 0.0, 0.0, False, False, False, 0, 0, ERR_BLOWUP
    if code_lo == ESCAPE or code_hi != ESCAPE:
        return 0.0, 0.0, False, code_lo == RETURN, code_hi == ESCAPE, 0, 0, ERR_BRACKET

    lo = 0.0
    hi = p_up
    flagged = False
    lower_ok = True
    doublings = 0
    iters = 0
    for _ in range(max_iter):
        if hi - lo <= tol_abs:
            break
        mid = 0.5 * (lo + hi)
        code, _, tdec = _classify(q0, sgn * mid, th, direction,
                                  breaks, coeffs, ucoeffs, fict, masses, mtot, rbound, bigT, udx,
                                  h, budget_max, eps, q_switch)
        iters += 1
        if code == BLOWUP:
            return 0.5 * (lo + hi), hi - lo, flagged, lower_ok, True, iters, doublings, ERR_BLOWUP
        if code == UNDECIDED:
            doublings = 3
            lo = mid
            flagged = True
            lower_ok = False
            break
        if tdec > s_max:
            need = 0
            b = s_max
            while b < tdec and need < 3:
                b *= 2.0
                need += 1
            if need > doublings:
                doublings = need
        if code == ESCAPE:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi), hi - lo, flagged, lower_ok, True, iters, doublings, ERR_NONE


@njit(cache=True, parallel=True)
def _find_f_grid(thetas, q0, direction,
                 breaks, coeffs, ucoeffs, fict, masses, mtot, rbound, bigT, udx,
                 h, s_max, tol_abs, eps, max_iter):
    n = thetas.size
    f = np.empty(n)
    width = np.empty(n)
    flagged = np.zeros(n, dtype=np.int64)
    lower_ok = np.zeros(n, dtype=np.int64)
    upper_ok = np.zeros(n, dtype=np.int64)
    iters = np.zeros(n, dtype=np.int64)
    doublings = np.zeros(n, dtype=np.int64)
    err = np.zeros(n, dtype=np.int64)
    for k in prange(n):
        fk, wk, flk, lok, upk, itk, dbk, ek = _find_f(
            thetas[k], q0, direction,
            breaks, coeffs, ucoeffs, fict, masses, mtot, rbound, bigT, udx,
            h, s_max, tol_abs, eps, max_iter)
        f[k] = fk
        width[k] = wk
        flagged[k] = 1 if flk else 0
        lower_ok[k] = 1 if lok else 0
        upper_ok[k] = 1 if upk else 0
        iters[k] = itk
        doublings[k] = dbk
        err[k] = ek
    return f, width, flagged, lower_ok, upper_ok, iters, doublings, err


@njit(cache=True)
def _refine_plane_crossing(q, p, th, sgn, h, cross_tol,
                           breaks, coeffs, ucoeffs, fict, masses, bigT, udx):
    """Bisect the step [0, h] from a pre-crossing sample down to cross_tol."""
    dt_lo = 0.0
    dt_hi = h
    for _ in range(80):
        if dt_hi - dt_lo <= cross_tol:
            break
        dm = 0.5 * (dt_lo + dt_hi)
        qm, pm, thm = _rk4_std(q, p, th, sgn * dm,
                               breaks, coeffs, ucoeffs, fict, masses, bigT, udx)
        if qm <= 0.0:
            dt_hi = dm
        else:
            dt_lo = dm
    qf, pf, thf = _rk4_std(q, p, th, sgn * dt_hi,
                           breaks, coeffs, ucoeffs, fict, masses, bigT, udx)
    return qf, pf, thf, dt_hi


@njit(cache=True)
def _trace_to_plane(q0, p0, th0, direction,
                    breaks, coeffs, ucoeffs, fict, masses, mtot, rbound, bigT, udx,
                    h, budget, cross_tol):
    """Integrate in standard coordinates until the first q = 0 crossing.

    Returns (theta_at_crossing_raw, p_at_crossing, elapsed, status).
    """
    sgn = 1.0 if direction >= 0 else -1.0
    hs = h * sgn
    q = q0
    p = p0
    th = th0
    t = 0.0
    while t < budget:
        q1, p1, th1 = _rk4_std(q, p, th, hs,
                               breaks, coeffs, ucoeffs, fict, masses, bigT, udx)
        if not (math.isfinite(q1) and math.isfinite(p1)):
            return th, p, t, DIVERGED
        if q1 <= 0.0:
            qf, pf, thf, dt = _refine_plane_crossing(
                q, p, th, sgn, h, cross_tol,
                breaks, coeffs, ucoeffs, fict, masses, bigT, udx)
            return thf, pf, t + dt, CROSSED
        q = q1
        p = p1
        th = th1
        t += h
    return th, p, t, NO_CROSS


@njit(cache=True, parallel=True)
def _trace_to_plane_grid(q0, pvals, thetas, direction,
                         breaks, coeffs, ucoeffs, fict, masses, mtot, rbound, bigT, udx,
                         h, budget, cross_tol):
    n = pvals.size
    th_out = np.empty(n)
    p_out = np.empty(n)
    t_out = np.empty(n)
    status = np.empty(n, dtype=np.int64)
    for k in prange(n):
        a, b, c, s = _trace_to_plane(q0, pvals[k], thetas[k], direction,
                                     breaks, coeffs, ucoeffs, fict, masses, mtot,
                                     rbound, bigT, udx, h, budget, cross_tol)
        th_out[k] = a
        p_out[k] = b
        t_out[k] = c
        status[k] = s
    return th_out, p_out, t_out, status


@njit(cache=True)
def _return_map_one(p0, th0,
                    breaks, coeffs, ucoeffs, fict, masses, mtot, rbound, bigT, udx,
                    h, budget, cross_tol):
    """Forward flight from (q=0, p0>0, th0) to the next q = 0 crossing."""
    q = 0.0
    p = p0
    th = th0
    t = 0.0
    armed = False
    while t < budget:
        q1, p1, th1 = _rk4_std(q, p, th, h,
                               breaks, coeffs, ucoeffs, fict, masses, bigT, udx)
        if not (math.isfinite(q1) and math.isfinite(p1)):
            return th, p, t, DIVERGED
        if armed and q1 <= 0.0:
            qf, pf, thf, dt = _refine_plane_crossing(
                q, p, th, 1.0, h, cross_tol,
                breaks, coeffs, ucoeffs, fict, masses, bigT, udx)
            return thf, pf, t + dt, CROSSED
        if q1 > 0.0:
            armed = True
        q = q1
        p = p1
        th = th1
        t += h
    return th, p, t, NO_CROSS


@njit(cache=True, parallel=True)
def _return_map_grid(pvals, thetas,
                     breaks, coeffs, ucoeffs, fict, masses, mtot, rbound, bigT, udx,
                     h, budget, cross_tol):
    n = pvals.size
    th_out = np.empty(n)
    p_out = np.empty(n)
    t_out = np.empty(n)
    status = np.empty(n, dtype=np.int64)
    for k in prange(n):
        a, b, c, s = _return_map_one(pvals[k], thetas[k],
                                     breaks, coeffs, ucoeffs, fict, masses, mtot,
                                     rbound, bigT, udx, h, budget, cross_tol)
        th_out[k] = a
        p_out[k] = b
        t_out[k] = c
        status[k] = s
    return th_out, p_out, t_out, status


# --------------------------------------------------------------------------
# Property-suite helpers (used by tests; kept compiled so the randomized
# suites stay cheap).


@njit(cache=True)
def _pair_order_margins(q1, p1, q2, p2, th0,
                        breaks, coeffs, ucoeffs, fict, masses, mtot, rbound, bigT, udx,
                        h, tmax):
    """Minimum of (q2-q1) and (p2-p1) at samples while both p stay >= 0."""
    min_dq = q2 - q1
    min_dp = p2 - p1
    t = 0.0
    while t < tmax and p1 >= 0.0 and p2 >= 0.0:
        q1, p1, _ = _rk4_std(q1, p1, th0 + t, h,
                             breaks, coeffs, ucoeffs, fict, masses, bigT, udx)
        q2, p2, _ = _rk4_std(q2, p2, th0 + t, h,
                             breaks, coeffs, ucoeffs, fict, masses, bigT, udx)
        t += h
        if p1 >= 0.0 and p2 >= 0.0:
            dq = q2 - q1
            dp = p2 - p1
            if dq < min_dq:
                min_dq = dq
            if dp < min_dp:
                min_dp = dp
    return min_dq, min_dp


@njit(cache=True)
def _cone_margin_min(Q0, P0, th0,
                     breaks, coeffs, ucoeffs, fict, masses, mtot, rbound, bigT, udx,
                     h, tmax):
    """Minimum of P - sqrt(2M) Q at samples over [0, tmax]."""
    c = math.sqrt(2.0 * mtot)
    Q = Q0
    P = P0
    margin = P - c * Q
    t = 0.0
    while t < tmax:
        Q, P, _ = _rk4_inv(Q, P, th0 + t, h,
                           breaks, coeffs, ucoeffs, fict, masses, bigT, udx)
        t += h
        m = P - c * Q
        if m < margin:
            margin = m
    return margin


@njit(cache=True)
def _energy_step_extremes(q0, p0, th0,
                          breaks, coeffs, ucoeffs, fict, masses, mtot, rbound, bigT, udx,
                          h, tmax):
    """(min per-step change of E_lower, max per-step change of E_upper)
    while q > 0 and p > 0."""
    q = q0
    p = p0
    th = th0
    r2 = rbound * rbound
    estar = 0.5 * p * p - mtot / q
    esub = 0.5 * p * p - mtot / math.sqrt(r2 + q * q)
    min_destar = np.inf
    max_desub = -np.inf
    t = 0.0
    while t < tmax:
        q, p, th = _rk4_std(q, p, th, h,
                            breaks, coeffs, ucoeffs, fict, masses, bigT, udx)
        t += h
        if q <= 0.0 or p <= 0.0:
            break
        estar_new = 0.5 * p * p - mtot / q
        esub_new = 0.5 * p * p - mtot / math.sqrt(r2 + q * q)
        d1 = estar_new - estar
        d2 = esub_new - esub
        if d1 < min_destar:
            min_destar = d1
        if d2 > max_desub:
            max_desub = d2
        estar = estar_new
        esub = esub_new
    return min_destar, max_desub


@njit(cache=True)
def _slope_excess_max(Q0, P0, th0,
                      breaks, coeffs, ucoeffs, fict, masses, mtot, rbound, bigT, udx,
                      h, tmax, slack):
    """Max over steps of |dP| - (sqrt(2M)+slack)*|dQ| while P > 0."""
    c = math.sqrt(2.0 * mtot) + slack
    Q = Q0
    P = P0
    th = th0
    worst = -np.inf
    t = 0.0
    while t < tmax and P > 0.0:
        Q1, P1, th1 = _rk4_inv(Q, P, th, h,
                               breaks, coeffs, ucoeffs, fict, masses, bigT, udx)
        if P1 > 0.0:
            excess = abs(P1 - P) - c * abs(Q1 - Q)
            if excess > worst:
                worst = excess
        Q = Q1
        P = P1
        th = th1
        t += h
    return worst
