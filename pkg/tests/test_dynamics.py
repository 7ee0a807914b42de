import math

import numpy as np
import pytest

import sepsurf as ss
from sepsurf import _kernels as K
from sepsurf.errors import IntegrationBlowupError, StepSizeError


def settings_for(cfg, **kw):
    return ss.IntegratorSettings.for_config(cfg, **kw)


# -- vf_std --------------------------------------------------------------------


def test_vf_std_circular_value(circular):
    dq, dp, dth = ss.vf_std(ss.StateStd(q=1.0, p=0.0, theta=0.45), circular)
    assert dq == 0.0
    assert dp == pytest.approx(-2.0 / 2.0**1.5, abs=1e-12)
    assert dth == 1.0


def test_vf_std_zero_at_origin(circular):
    dq, dp, _ = ss.vf_std(ss.StateStd(q=0.0, p=0.3, theta=0.2), circular)
    assert dq == 0.3
    assert dp == 0.0


def test_vf_std_far_field_asymptote(circular):
    dq, dp, _ = ss.vf_std(ss.StateStd(q=100.0, p=0.0, theta=0.0), circular)
    newtonian = -circular.total_mass / 100.0**2
    assert abs(dp - newtonian) / abs(newtonian) < 5e-4


def test_vf_std_odd_symmetry(kepler):
    a = ss.vf_std(ss.StateStd(q=0.7, p=0.4, theta=0.3), kepler)
    b = ss.vf_std(ss.StateStd(q=-0.7, p=-0.4, theta=0.3), kepler)
    assert a[0] == -b[0]
    assert a[1] == -b[1]


# -- vf_inv --------------------------------------------------------------------


def test_vf_inv_equilibrium_line(circular):
    assert ss.vf_inv(ss.StateInv(Q=0.0, P=2.0, theta=0.1), circular) == (0.0, 0.0, 1.0)


def test_vf_inv_circular_value(circular):
    dQ, dP, dth = ss.vf_inv(ss.StateInv(Q=1.0, P=1.0, theta=0.0), circular)
    assert dQ == pytest.approx(-0.5, abs=1e-15)
    assert dP == pytest.approx(-2.0 / 2.0**1.5, abs=1e-12)


def test_vf_inv_chain_rule_oracle(kepler):
    s = ss.StateStd(q=4.0, p=0.3, theta=0.7)
    dq, dp, _ = ss.vf_std(s, kepler)
    dQ, dP, _ = ss.vf_inv(ss.invert_state(s), kepler)
    assert abs(dQ - (-0.5 * s.q**-1.5 * dq)) < 1e-12
    assert abs(dP - dp) < 1e-12


# -- vf_fictional ---------------------------------------------------------------


def unit_dilation_config():
    rows = "\n".join(f"{t},1.0,1.0,1.0" for t in (0.0, 0.5, 1.0))
    text = f"# masses: 1.0,1.0\n# period: 1.0\n# dilation-column: yes\n{rows}\n"
    return ss.load_tabulated(text)


def test_vf_fictional_identity_time_change():
    cfg = unit_dilation_config()
    s = ss.StateStd(q=0.8, p=0.25, theta=0.3)
    assert np.allclose(ss.vf_fictional(s, cfg), ss.vf_std(s, cfg), atol=1e-14)


def test_vf_fictional_collinear_scaling(collinear):
    s = ss.StateStd(q=0.9, p=0.4, theta=math.pi)
    dq, dp, dth = ss.vf_fictional(s, collinear)
    assert dq == pytest.approx(0.4 * 0.5, abs=1e-12)  # dilation is 1/2 there
    assert dth == 1.0


def test_vf_fictional_requires_fictional_config(circular):
    with pytest.raises(ValueError):
        ss.vf_fictional(ss.StateStd(q=1.0, p=0.0, theta=0.0), circular)


def test_vf_fictional_zero_dilation_guard():
    # dilation vanishing where no collision is declared (radii stay positive)
    rows = "\n".join(f"{t},1.0,1.0,{u}" for t, u in
                     ((0.0, 1.0), (0.5, 0.0), (1.0, 1.0)))
    text = f"# masses: 1.0,1.0\n# period: 1.0\n# dilation-column: yes\n{rows}\n"
    cfg = ss.load_tabulated(text)
    with pytest.raises(StepSizeError):
        ss.vf_fictional(ss.StateStd(q=1.0, p=0.0, theta=0.5), cfg)


def test_vf_fictional_point_set_equality(collinear):
    # Integrate the fictional-clock field over a collision-free window and
    # compare with a physical-clock integration of the same motion; the two
    # parameterizations must trace the same (q, p) points (dual oracle).
    from scipy.integrate import solve_ivp
    from scipy.optimize import brentq

    sh0, sh1 = 0.8, 2.0 * math.pi - 0.8
    t_of = lambda sh: 0.25 * (sh - math.sin(sh))
    field = ss.standard_field(collinear)
    h = collinear.period / 4000.0
    y = np.array([0.7, 0.2, sh0])
    t = 0.0
    samples = [y.copy()]
    while y[2] < sh1:
        y = ss.rk4_step(field, t, y, h)
        t += h
        samples.append(y.copy())
    samples = np.array(samples)

    args = collinear.kernel_args

    def phys_rhs(tp, yv):
        sh = brentq(lambda s: t_of(s) - (tp + t_of(sh0)), 0.0, 2.0 * math.pi)
        a = K._accel_std(yv[0], sh, args[0], args[1], args[4], args[7], args[8])
        return [yv[1], a]

    t_eval = [t_of(sh) - t_of(sh0) for sh in samples[:, 2]]
    sol = solve_ivp(phys_rhs, (0.0, t_eval[-1]), [0.7, 0.2], rtol=1e-12,
                    atol=1e-14, t_eval=t_eval)
    dev = np.max(np.hypot(sol.y[0] - samples[:, 0], sol.y[1] - samples[:, 1]))
    assert dev < 1e-6


# -- rk4_step -------------------------------------------------------------------


def test_rk4_step_exact_on_linear_field():
    field = lambda t, y: np.array([y[1], 0.0])
    out = ss.rk4_step(field, 0.0, np.array([0.0, 1.0]), 0.25)
    assert np.allclose(out, [0.25, 1.0], atol=1e-15)


def test_rk4_step_harmonic_oracle():
    field = lambda t, y: np.array([y[1], -y[0]])
    out = ss.rk4_step(field, 0.0, np.array([1.0, 0.0]), 0.1)
    assert abs(out[0] - math.cos(0.1)) < 1e-7
    assert abs(out[1] + math.sin(0.1)) < 1e-7


def test_rk4_step_reversibility():
    field = lambda t, y: np.array([y[1], -math.sin(y[0])])
    y0 = np.array([0.4, -0.2])
    fwd = ss.rk4_step(field, 0.0, y0, 0.02)
    back = ss.rk4_step(field, 0.02, fwd, -0.02)
    assert np.max(np.abs(back - y0)) < 1e-10


def test_rk4_step_blowup_error():
    field = lambda t, y: np.array([float("nan"), 0.0])
    with pytest.raises(IntegrationBlowupError):
        ss.rk4_step(field, 0.0, np.array([0.0, 1.0]), 0.1)


def test_rk4_step_zero_h_rejected():
    with pytest.raises(ValueError):
        ss.rk4_step(lambda t, y: y, 0.0, np.array([1.0]), 0.0)


def test_rk4_step_phase_reduction(circular):
    field = ss.standard_field(circular)
    y0 = np.array([1.0, 0.0, circular.period - 1e-3])
    out = ss.rk4_step(field, 0.0, y0, 0.01, period=circular.period)
    assert 0.0 <= out[2] < circular.period


# -- integrate_until --------------------------------------------------------------


def test_integrate_until_linear_crossing(circular):
    field = lambda t, y: np.array([y[1], 0.0])
    settings = settings_for(circular, h=0.01)
    traj = ss.integrate_until(np.array([1.0, -1.0]), field, settings,
                              stop=lambda t, y: y[0] <= 0.0)
    assert traj.reason == "stopped"
    assert abs(traj.times[-1] - 1.0) < 1e-9
    assert np.all(np.diff(traj.times) > 0.0)


def test_integrate_until_budget(circular):
    field = lambda t, y: np.array([0.0, 0.0])
    settings = ss.IntegratorSettings(h=0.1, max_steps=10)
    traj = ss.integrate_until(np.array([1.0, 0.0]), field, settings,
                              stop=lambda t, y: False)
    assert traj.reason == "budget"
    assert len(traj) == 11


def test_integrate_until_turning_point(circular):
    # bound start: p crosses zero in finite time
    field = ss.standard_field(circular)
    settings = settings_for(circular)
    traj = ss.integrate_until(ss.StateStd(q=1.0, p=0.1, theta=0.0), field,
                              settings, stop=lambda t, y: y[1] <= 0.0)
    assert traj.reason == "stopped"
    assert traj.final[1] <= 1e-9


def test_integrate_until_backward_direction(circular):
    field = lambda t, y: np.array([y[1], 0.0])
    settings = settings_for(circular, h=0.01)
    traj = ss.integrate_until(np.array([1.0, 1.0]), field, settings,
                              stop=lambda t, y: y[0] <= 0.0, direction=-1)
    assert traj.direction == -1
    assert np.all(np.diff(traj.times) < 0.0)
    assert abs(traj.times[-1] + 1.0) < 1e-9


# -- coordinate changes ------------------------------------------------------------


def test_invert_state_examples():
    s = ss.invert_state(ss.StateStd(q=4.0, p=0.3, theta=0.2))
    assert s == ss.StateInv(Q=0.5, P=0.3, theta=0.2)
    b = ss.uninvert_state(ss.StateInv(Q=1.0, P=-2.0, theta=0.9))
    assert b == ss.StateStd(q=1.0, p=-2.0, theta=0.9)


def test_invert_round_trip(rng):
    worst = 0.0
    for _ in range(1000):
        q = 10.0 ** rng.uniform(-3, 3)
        p = rng.uniform(-5, 5)
        s = ss.StateStd(q=q, p=p, theta=rng.uniform(0, 6))
        back = ss.uninvert_state(ss.invert_state(s))
        worst = max(worst, abs(back.q - s.q) / max(1.0, abs(s.q)), abs(back.p - s.p))
    assert worst <= 1e-12


def test_invert_domain_errors():
    with pytest.raises(ValueError):
        ss.invert_state(ss.StateStd(q=0.0, p=1.0, theta=0.0))
    with pytest.raises(ValueError):
        ss.uninvert_state(ss.StateInv(Q=0.0, P=1.0, theta=0.0))
    with pytest.raises(ValueError):
        ss.StateInv(Q=-0.5, P=0.0, theta=0.0)


# -- flow properties ----------------------------------------------------------------


def test_sign_symmetry_of_flow(kepler):
    field = ss.standard_field(kepler)
    h = kepler.period / 2000.0
    ya = np.array([0.8, 0.5, 0.3])
    yb = np.array([-0.8, -0.5, 0.3])
    t = 0.0
    for _ in range(3000):
        ya = ss.rk4_step(field, t, ya, h)
        yb = ss.rk4_step(field, t, yb, h)
        t += h
        assert abs(ya[0] + yb[0]) < 1e-10
        assert abs(ya[1] + yb[1]) < 1e-10


def test_pair_ordering_preserved(presets, rng):
    # ordering of (q, p) pairs persists while both velocities stay positive
    for cfg in presets:
        qm = ss.q_mono(cfg)
        h = cfg.period / 2000.0
        for _ in range(60):
            q1 = qm + 2.0 * rng.random()
            q2 = q1 + 2.0 * rng.random()
            p1 = 0.05 + 2.0 * rng.random()
            p2 = p1 + rng.random()
            th = cfg.period * rng.random()
            dq, dp = K._pair_order_margins(q1, p1, q2, p2, th, *cfg.kernel_args,
                                           h, 2.0 * cfg.period)
            assert dq >= -1e-10
            assert dp >= -1e-10


def test_slope_bound_in_inverted_frame(presets, rng):
    # per-step |dP/dQ| never exceeds sqrt(2M) (plus slack) along cone
    # trajectories; the bound's derivation needs P >= sqrt(2M) Q, and the
    # cone is forward-invariant, so it holds at every step
    for cfg in presets:
        h = cfg.period / 2000.0
        c = math.sqrt(2.0 * cfg.total_mass)
        for _ in range(60):
            Q = 0.05 + 0.9 * rng.random()
            P = c * Q * (1.0 + 2.0 * rng.random())
            th = cfg.period * rng.random()
            excess = K._slope_excess_max(Q, P, th, *cfg.kernel_args,
                                         h, 2.0 * cfg.period, 1e-6)
            assert excess <= 1e-9


def test_step_halving_convergence(circular, kepler):
    # endpoint differences shrink at fourth order on smooth configurations
    for cfg in (circular, kepler):
        field = ss.standard_field(cfg)
        y0 = np.array([0.8, 0.4, 0.1])
        t_end = 2.0 * cfg.period

        def endpoint(h):
            y = y0.copy()
            t = 0.0
            for _ in range(int(round(t_end / h))):
                y = ss.rk4_step(field, t, y, h)
                t += h
            return y

        hs = [cfg.period / 250.0 * 0.5**k for k in range(4)]
        ys = [endpoint(h) for h in hs]
        diffs = [np.max(np.abs(ys[k] - ys[k + 1])) for k in range(3)]
        orders = [math.log2(diffs[k] / diffs[k + 1]) for k in range(2)]
        assert min(orders) >= 3.7
