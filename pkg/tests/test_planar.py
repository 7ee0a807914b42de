import math

import numpy as np
import pytest
from scipy.integrate import solve_ivp

import sepsurf as ss
from sepsurf.errors import (
    ConfigError,
    MissingHeaderError,
    NegativeRadiusError,
    NonMonotoneGridError,
    PeriodicClosureError,
)

TWO_PI = 2.0 * math.pi


def make_tabulated(rows, masses="1.0,1.0", period="1.0", extra_headers=()):
    lines = [f"# masses: {masses}", f"# period: {period}", *extra_headers]
    lines += [",".join(str(v) for v in row) for row in rows]
    return "\n".join(lines) + "\n"


# -- radii -------------------------------------------------------------------


def test_radii_circular_constant(circular):
    assert np.allclose(ss.radii(circular, 0.37), [1.0, 1.0])
    assert np.allclose(ss.radii(circular, 100.0), [1.0, 1.0])


def test_radii_collinear_collision(collinear):
    assert ss.radii(collinear, 0.0).tolist() == [0.0, 0.0]


def test_radii_tabulated_linear_midpoint():
    text = make_tabulated(
        [(0.0, 1.0, 1.0), (0.5, 0.5, 0.5), (1.0, 1.0, 1.0)],
        extra_headers=["# interpolation: linear"],
    )
    cfg = ss.load_tabulated(text)
    assert np.allclose(ss.radii(cfg, 0.25), [0.75, 0.75])


# -- q_mono ------------------------------------------------------------------


def test_q_mono_circular(circular):
    assert ss.q_mono(circular) == pytest.approx(1.0 / math.sqrt(2.0), abs=1e-12)


def test_q_mono_takes_max_radius():
    text = make_tabulated([(0.0, 1.0, 2.0), (0.5, 1.0, 2.0), (1.0, 1.0, 2.0)])
    cfg = ss.load_tabulated(text)
    assert ss.q_mono(cfg) == pytest.approx(math.sqrt(2.0), abs=1e-12)


def test_q_mono_degenerate_zero_radii():
    cfg = ss.PlanarConfiguration(
        name="degenerate", masses=(1.0, 1.0), period=1.0,
        kind=ss.Circular(radii=(0.0, 0.0)))
    assert ss.q_mono(cfg) == 0.0


def test_q_mono_monotonicity_property(presets, rng):
    # Above q_mono the acceleration is negative and strictly increasing in q.
    for cfg in presets:
        args = cfg.kernel_args
        qm = ss.q_mono(cfg)
        from sepsurf._kernels import _accel_std
        for _ in range(200):
            q = qm + 1e-3 + 5.0 * rng.random()
            th = cfg.period * rng.random()
            d = 1e-6 * max(1.0, q)
            lo = _accel_std(q - d, th, args[0], args[1], args[4], args[7], args[8])
            mid = _accel_std(q, th, args[0], args[1], args[4], args[7], args[8])
            hi = _accel_std(q + d, th, args[0], args[1], args[4], args[7], args[8])
            assert mid < 0.0
            assert hi > lo


# -- solve_kepler ------------------------------------------------------------


def test_solve_kepler_circular_case():
    assert ss.solve_kepler(0.8, 0.0) == pytest.approx(0.8, abs=1e-14)


def test_solve_kepler_symmetry_at_pi():
    assert ss.solve_kepler(math.pi, 0.7) == pytest.approx(math.pi, abs=1e-13)


def test_solve_kepler_against_bisection_oracle():
    # independent bisection of E - 0.5 sin(E) - 1 over [0, 2 pi]
    f = lambda E: E - 0.5 * math.sin(E) - 1.0
    lo, hi = 0.0, TWO_PI
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if f(mid) > 0:
            hi = mid
        else:
            lo = mid
    expected = 0.5 * (lo + hi)
    assert expected == pytest.approx(1.4987011335178482, abs=1e-12)
    assert ss.solve_kepler(1.0, 0.5) == pytest.approx(expected, abs=1e-12)


def test_solve_kepler_residual_tolerance(rng):
    for _ in range(200):
        e = rng.random() * 0.99
        m = rng.uniform(-20.0, 20.0)
        E = ss.solve_kepler(m, e)
        assert abs(E - e * math.sin(E) - m) < 1e-13


def test_solve_kepler_domain_error():
    with pytest.raises(ValueError):
        ss.solve_kepler(1.0, 1.0)
    with pytest.raises(ValueError):
        ss.solve_kepler(1.0, -0.1)


# -- collinear_radius ---------------------------------------------------------


def test_collinear_radius_values():
    assert ss.collinear_radius(0.0) == 0.0
    assert ss.collinear_radius(TWO_PI) == 0.0
    assert ss.collinear_radius(math.pi) == pytest.approx(0.5, abs=1e-15)
    assert ss.collinear_radius(math.pi / 2) == pytest.approx(0.25, abs=1e-15)


def test_collinear_radius_against_unregularized_integration():
    # Direct collinear two-body integration started at maximum displacement,
    # reparameterized by dt/ds = x; agreement to 1e-6 outside collision
    # windows |s - 2 k pi| > 0.1.
    def rhs(_s, y):
        x, v, t = y
        return [v * x, -0.25 / x, x]

    for lo, hi in ((math.pi, TWO_PI - 0.1), (math.pi, 0.1)):
        sol = solve_ivp(rhs, (lo, hi), [0.5, 0.0, 0.0], rtol=1e-11, atol=1e-13,
                        dense_output=True)
        for s in np.linspace(lo, hi, 200):
            assert abs(sol.sol(s)[0] - ss.collinear_radius(s)) < 1e-6


# -- periodicity / symmetry ---------------------------------------------------


def test_radii_periodicity_on_grid(presets):
    for cfg in presets:
        T = cfg.period
        for th in np.linspace(0.0, T, 257):
            assert np.max(np.abs(ss.radii(cfg, th + T) - ss.radii(cfg, th))) <= 1e-9


def test_declared_symmetry_points(kepler, collinear):
    assert np.allclose(kepler.symmetry_points, (0.0, kepler.period / 2))
    assert np.allclose(collinear.symmetry_points, (0.0, math.pi))
    for cfg in (kepler, collinear):
        for t0 in cfg.symmetry_points:
            for dt in np.linspace(0.0, cfg.period / 2, 64):
                left = ss.radii(cfg, t0 - dt)
                right = ss.radii(cfg, t0 + dt)
                assert np.max(np.abs(left - right)) <= 1e-9


def test_kepler_preset_matches_pair_integration(kepler):
    # The preset stores (a, e, T) for a unit-mass pair released at distance 1
    # with unit tangential speed, each body attracted by the total mass at
    # the origin.  Integrate that law directly and compare distances.
    mu = kepler.total_mass

    def rhs(_t, y):
        x, vy_x, z, vy_z = y[0], y[2], y[1], y[3]
        r3 = (y[0] ** 2 + y[1] ** 2) ** 1.5
        return [y[2], y[3], -mu * y[0] / r3, -mu * y[1] / r3]

    T = kepler.period
    sol = solve_ivp(rhs, (0.0, T), [1.0, 0.0, 0.0, 1.0], rtol=1e-12, atol=1e-14,
                    dense_output=True)
    for t in np.linspace(0.0, T, 101):
        r_direct = math.hypot(*sol.sol(t)[:2])
        assert abs(r_direct - ss.radii(kepler, t)[0]) < 1e-8
    # after one period the pair is back at apoapsis
    yT = sol.sol(T)
    assert math.hypot(yT[0] - 1.0, yT[1]) < 1e-7


def test_kernel_table_matches_closed_forms(presets):
    from sepsurf._kernels import _radius_at, _segment
    for cfg in presets:
        breaks, coeffs, _, _, masses, _, _, T, udx = cfg.kernel_args
        exact_masses = np.asarray(cfg.masses)
        for th in np.linspace(0.0, T, 333, endpoint=False):
            j = _segment(breaks, udx, th)
            s = th - breaks[j]
            table_sum = sum(masses[i] * _radius_at(breaks, coeffs, i, j, s)
                            for i in range(masses.size))
            exact_sum = float(exact_masses @ ss.radii(cfg, th))
            assert abs(table_sum - exact_sum) < 1e-10


# -- load_tabulated -----------------------------------------------------------


def test_load_tabulated_roundtrip():
    text = make_tabulated([(0.0, 1.0, 1.0), (0.5, 0.5, 0.5), (1.0, 1.0, 1.0)])
    cfg = ss.load_tabulated(text)
    assert cfg.n_bodies == 2
    assert cfg.period == 1.0
    assert cfg.total_mass == 2.0
    assert cfg.time_mode == "physical"


def test_load_tabulated_periodic_closure_error():
    text = make_tabulated([(0.0, 1.0, 1.0), (0.5, 0.5, 0.5), (1.0, 1.0, 0.9)])
    with pytest.raises(PeriodicClosureError):
        ss.load_tabulated(text)


def test_load_tabulated_negative_radius_error():
    text = make_tabulated([(0.0, 1.0, 1.0), (0.5, -0.5, 0.5), (1.0, 1.0, 1.0)])
    with pytest.raises(NegativeRadiusError):
        ss.load_tabulated(text)


def test_load_tabulated_missing_header_error():
    text = "# period: 1.0\n0.0,1.0\n1.0,1.0\n"
    with pytest.raises(MissingHeaderError):
        ss.load_tabulated(text)
    text = "# masses: 1.0\n0.0,1.0\n1.0,1.0\n"
    with pytest.raises(MissingHeaderError):
        ss.load_tabulated(text)


def test_load_tabulated_non_monotone_error():
    text = make_tabulated([(0.0, 1.0, 1.0), (0.7, 0.5, 0.5), (0.6, 0.6, 0.6),
                           (1.0, 1.0, 1.0)])
    with pytest.raises(NonMonotoneGridError):
        ss.load_tabulated(text)
    # grid not reaching the period
    text = make_tabulated([(0.0, 1.0, 1.0), (0.9, 1.0, 1.0)])
    with pytest.raises(NonMonotoneGridError):
        ss.load_tabulated(text)


def test_load_tabulated_dilation_column():
    text = make_tabulated(
        [(0.0, 1.0, 1.0, 0.5), (0.5, 0.5, 0.5, 1.0), (1.0, 1.0, 1.0, 0.5)],
        extra_headers=["# dilation-column: yes"],
    )
    cfg = ss.load_tabulated(text)
    assert cfg.time_mode == "fictional"
    assert cfg.dilation(0.0) == pytest.approx(0.5)
    assert cfg.dilation(0.5) == pytest.approx(1.0)


def test_configuration_invariant_failures():
    with pytest.raises(ConfigError):
        ss.PlanarConfiguration(name="bad", masses=(1.0, -1.0), period=1.0,
                               kind=ss.Circular(radii=(1.0, 1.0)))
    with pytest.raises(ConfigError):
        ss.PlanarConfiguration(name="bad", masses=(1.0,), period=0.0,
                               kind=ss.Circular(radii=(1.0,)))
    with pytest.raises(ConfigError):
        ss.preset("no-such-preset")
