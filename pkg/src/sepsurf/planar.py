"""T-periodic planar configurations: radii laws, presets, file ingestion.

A configuration supplies the central distances r_i(theta) of the planar
bodies, their masses, and derived constants (total mass, radius bound,
monotonicity height).  Everything downstream treats configurations as
immutable, read-only data.
"""
from __future__ import annotations

import io
import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Sequence, Union

import numpy as np
from scipy.interpolate import CubicSpline, PchipInterpolator

from .errors import (
    ConfigError,
    MissingHeaderError,
    NegativeRadiusError,
    NonMonotoneGridError,
    PeriodicClosureError,
)

TWO_PI = 2.0 * math.pi

# Resolution of the internal periodic spline tables used by the compiled
# integration kernels (closed-form kinds are resampled onto these; the
# approximation error is ~1e-13, far below every stated tolerance).
_TABLE_SEGMENTS = 4096

# Grid used for construction-time validation of periodicity / symmetry.
_CHECK_POINTS = 1024
_PERIODICITY_TOL = 1e-9
_SYMMETRY_TOL = 1e-9


def solve_kepler(mean_anomaly: float, e: float) -> float:
    """Solve E - e*sin(E) = mean_anomaly for the eccentric anomaly E.

    Safeguarded Newton iteration: the iterate is confined to the bracket
    [m - e, m + e] and falls back to its midpoint whenever Newton would
    leave it.  Residual tolerance 1e-13.
    """
    if not 0.0 <= e < 1.0:
        raise ValueError(f"eccentricity must lie in [0, 1), got {e}")
    k = math.floor(mean_anomaly / TWO_PI)
    m = mean_anomaly - TWO_PI * k
    lo, hi = m - e, m + e
    ecc = m + e * math.sin(m)
    ecc = min(max(ecc, lo), hi)
    for _ in range(80):
        f = ecc - e * math.sin(ecc) - m
        if abs(f) < 1e-14:
            break
        if f > 0.0:
            hi = ecc
        else:
            lo = ecc
        step = f / (1.0 - e * math.cos(ecc))
        nxt = ecc - step
        if not lo <= nxt <= hi:
            nxt = 0.5 * (lo + hi)
        if nxt == ecc:
            break
        ecc = nxt
    return ecc + TWO_PI * k


def collinear_radius(s: float) -> float:
    """Distance from the origin of either body of the regularized
    collinear unit-mass pair, as a function of the regularizing time s.

    Equals sin(s/2)**2 / 2: 2*pi-periodic, exactly zero at the collision
    times s = 2*k*pi, maximal (1/2) at odd multiples of pi.
    """
    s_red = s % TWO_PI
    if s_red == 0.0:
        return 0.0
    half_sin = math.sin(0.5 * s_red)
    return 0.5 * half_sin * half_sin


# --------------------------------------------------------------------------
# Kind variants


@dataclass(frozen=True)
class Circular:
    """Constant per-body distances."""

    radii: tuple[float, ...]


@dataclass(frozen=True)
class EllipticKeplerPair:
    """Two bodies on a shared Kepler ellipse about the origin.

    Phase 0 is apoapsis; the distance law is scale * a * (1 - e*cos(E))
    with E the eccentric anomaly of mean anomaly pi + 2*pi*theta/T.
    """

    a: float
    e: float
    scales: tuple[float, ...] = (1.0, 1.0)


@dataclass(frozen=True)
class RegularizedCollinearPair:
    """Unit-mass collinear pair with regularized origin collisions.

    The configuration clock is the regularizing time; the distance law is
    collinear_radius and the dilation (physical seconds per clock second)
    equals the distance itself.
    """


@dataclass(frozen=True)
class Tabulated:
    """Radii sampled on a closed phase grid, interpolated between rows."""

    thetas: np.ndarray
    radii: np.ndarray  # shape (len(thetas), n_bodies)
    dilation: np.ndarray | None = None
    order: str = "pchip"  # or "linear"


Kind = Union[Circular, EllipticKeplerPair, RegularizedCollinearPair, Tabulated]


@dataclass(frozen=True)
class _KernelTable:
    """Piecewise-cubic radii (and dilation) representation for the kernels.

    r_i(theta) on segment j is coeffs[i, j, 0]*s**3 + ... + coeffs[i, j, 3]
    with s = theta - breaks[j].  uniform_dx > 0 marks an evenly spaced
    break grid (O(1) segment lookup).  Bodies with identical coefficient
    rows are merged, with masses summed accordingly.
    """

    breaks: np.ndarray
    coeffs: np.ndarray
    ucoeffs: np.ndarray
    masses: np.ndarray
    fictional: bool
    uniform_dx: float


@dataclass(frozen=True)
class PlanarConfiguration:
    """A T-periodic planar configuration of n massive bodies.

    Immutable after construction and safe to share across concurrent
    trajectory evaluations.
    """

    name: str
    masses: tuple[float, ...]
    period: float
    kind: Kind
    time_mode: str = "physical"  # or "fictional"
    symmetry_points: tuple[float, ...] = ()
    collision_phases: tuple[float, ...] = ()
    annotation: str = ""

    def __post_init__(self):
        if len(self.masses) < 1:
            raise ConfigError("at least one body is required")
        if any(m <= 0.0 for m in self.masses):
            raise ConfigError(f"all masses must be positive, got {self.masses}")
        if self.period <= 0.0:
            raise ConfigError(f"period must be positive, got {self.period}")
        if self.time_mode not in ("physical", "fictional"):
            raise ConfigError(f"unknown time mode {self.time_mode!r}")
        self._validate_grids()

    # -- derived constants -------------------------------------------------

    @property
    def n_bodies(self) -> int:
        return len(self.masses)

    @property
    def total_mass(self) -> float:
        return float(sum(self.masses))

    @cached_property
    def r_max(self) -> tuple[float, ...]:
        """Per-body maxima R_i of r_i over one period (exact per kind)."""
        kind = self.kind
        if isinstance(kind, Circular):
            return kind.radii
        if isinstance(kind, EllipticKeplerPair):
            apo = kind.a * (1.0 + kind.e)
            return tuple(s * apo for s in kind.scales)
        if isinstance(kind, RegularizedCollinearPair):
            return (0.5, 0.5)
        return tuple(float(v) for v in kind.radii.max(axis=0))

    @property
    def r_bound(self) -> float:
        """The overall radius bound: max over bodies of R_i."""
        return max(self.r_max)

    @cached_property
    def r_min(self) -> float:
        """Minimum over bodies and phases of r_i (0 means collisions)."""
        kind = self.kind
        if isinstance(kind, Circular):
            return min(kind.radii)
        if isinstance(kind, EllipticKeplerPair):
            peri = kind.a * (1.0 - kind.e)
            return min(s * peri for s in kind.scales)
        if isinstance(kind, RegularizedCollinearPair):
            return 0.0
        return float(kind.radii.min())

    # -- evaluation ---------------------------------------------------------

    def radii(self, theta: float) -> np.ndarray:
        """Per-body distances from the origin at the given phase."""
        return radii(self, theta)

    def dilation(self, theta: float) -> float:
        """Physical seconds per configuration-clock second at this phase.

        Identically 1 for physical-time configurations.
        """
        if self.time_mode == "physical":
            return 1.0
        kind = self.kind
        if isinstance(kind, RegularizedCollinearPair):
            return collinear_radius(theta)
        assert isinstance(kind, Tabulated) and kind.dilation is not None
        th = theta % self.period
        return float(self._dilation_interp(th))

    # -- internals ----------------------------------------------------------

    @cached_property
    def _radii_interp(self):
        kind = self.kind
        assert isinstance(kind, Tabulated)
        if kind.order == "linear":
            return lambda th: np.array(
                [np.interp(th, kind.thetas, kind.radii[:, i]) for i in range(self.n_bodies)]
            )
        interps = [PchipInterpolator(kind.thetas, kind.radii[:, i]) for i in range(self.n_bodies)]
        return lambda th: np.array([ip(th) for ip in interps])

    @cached_property
    def _dilation_interp(self):
        kind = self.kind
        assert isinstance(kind, Tabulated) and kind.dilation is not None
        if kind.order == "linear":
            return lambda th: np.interp(th, kind.thetas, kind.dilation)
        return PchipInterpolator(kind.thetas, kind.dilation)

    @cached_property
    def kernel_table(self) -> _KernelTable:
        """Lower the configuration to the kernel's piecewise-cubic form.

        Bodies with identical coefficient rows are merged (masses summed)
        so the inner loops touch each distinct distance law once.
        """
        T = self.period
        kind = self.kind
        fictional = self.time_mode == "fictional"
        if isinstance(kind, Circular):
            breaks = np.array([0.0, T])
            coeffs = np.zeros((self.n_bodies, 1, 4))
            coeffs[:, 0, 3] = kind.radii
            ucoeffs = np.zeros((1, 4))
            ucoeffs[0, 3] = 1.0
            return self._merged_table(breaks, coeffs, ucoeffs, fictional, T)
        if isinstance(kind, EllipticKeplerPair):
            grid = np.linspace(0.0, T, _TABLE_SEGMENTS + 1)
            base = np.array(
                [kind.a * (1.0 - kind.e * math.cos(solve_kepler(math.pi + TWO_PI * t / T, kind.e)))
                 for t in grid]
            )
            base[-1] = base[0]
            cs = CubicSpline(grid, base, bc_type="periodic")
            coeffs = np.empty((self.n_bodies, _TABLE_SEGMENTS, 4))
            for i, s in enumerate(kind.scales):
                coeffs[i] = (s * cs.c).T
            ucoeffs = np.zeros((_TABLE_SEGMENTS, 4))
            ucoeffs[:, 3] = 1.0
            return self._merged_table(grid, coeffs, ucoeffs, fictional, grid[1] - grid[0])
        if isinstance(kind, RegularizedCollinearPair):
            grid = np.linspace(0.0, T, _TABLE_SEGMENTS + 1)
            base = np.array([collinear_radius(t) for t in grid])
            base[-1] = base[0]
            cs = CubicSpline(grid, base, bc_type="periodic")
            coeffs = np.empty((2, _TABLE_SEGMENTS, 4))
            coeffs[0] = cs.c.T
            coeffs[1] = cs.c.T
            return self._merged_table(grid, coeffs, cs.c.T.copy(), fictional, grid[1] - grid[0])
        assert isinstance(kind, Tabulated)
        breaks = kind.thetas
        nseg = len(breaks) - 1
        coeffs = np.zeros((self.n_bodies, nseg, 4))
        for i in range(self.n_bodies):
            coeffs[i] = _piecewise_coeffs(breaks, kind.radii[:, i], kind.order)
        if kind.dilation is not None:
            ucoeffs = _piecewise_coeffs(breaks, kind.dilation, kind.order)
        else:
            ucoeffs = np.zeros((nseg, 4))
            ucoeffs[:, 3] = 1.0
        dx = np.diff(breaks)
        uniform = float(dx[0]) if np.allclose(dx, dx[0], rtol=1e-12, atol=0.0) else 0.0
        return self._merged_table(breaks, coeffs, ucoeffs, fictional, uniform)

    def _merged_table(self, breaks, coeffs, ucoeffs, fictional, uniform_dx) -> _KernelTable:
        masses = np.asarray(self.masses, dtype=float)
        merged_coeffs = []
        merged_masses = []
        for i in range(coeffs.shape[0]):
            for j, row in enumerate(merged_coeffs):
                if np.array_equal(coeffs[i], row):
                    merged_masses[j] += masses[i]
                    break
            else:
                merged_coeffs.append(coeffs[i])
                merged_masses.append(masses[i])
        return _KernelTable(
            breaks=np.ascontiguousarray(breaks, dtype=float),
            coeffs=np.ascontiguousarray(np.stack(merged_coeffs), dtype=float),
            ucoeffs=np.ascontiguousarray(ucoeffs, dtype=float),
            masses=np.array(merged_masses),
            fictional=fictional,
            uniform_dx=float(uniform_dx),
        )

    @property
    def kernel_args(self) -> tuple:
        """Positional argument pack consumed by the compiled kernels."""
        t = self.kernel_table
        return (
            t.breaks,
            t.coeffs,
            t.ucoeffs,
            t.fictional,
            t.masses,
            self.total_mass,
            self.r_bound,
            self.period,
            t.uniform_dx,
        )

    def _validate_grids(self):
        T = self.period
        thetas = np.linspace(0.0, T, _CHECK_POINTS, endpoint=False)
        r0 = np.array([radii(self, t) for t in thetas])
        if (r0 < 0.0).any():
            raise NegativeRadiusError(f"{self.name}: negative radius on validation grid")
        r1 = np.array([radii(self, t + T) for t in thetas])
        gap = float(np.max(np.abs(r1 - r0)))
        if gap > _PERIODICITY_TOL:
            raise ConfigError(f"{self.name}: radii not T-periodic (max gap {gap:.3e})")
        for t0 in self.symmetry_points:
            probe = np.linspace(0.0, 0.5 * T, 64)
            left = np.array([radii(self, t0 - t) for t in probe])
            right = np.array([radii(self, t0 + t) for t in probe])
            gap = float(np.max(np.abs(left - right)))
            if gap > _SYMMETRY_TOL:
                raise ConfigError(
                    f"{self.name}: declared symmetry point {t0} violated (max gap {gap:.3e})"
                )


def _piecewise_coeffs(breaks: np.ndarray, values: np.ndarray, order: str) -> np.ndarray:
    """Cubic-coefficient rows (c3, c2, c1, c0) per segment for one channel."""
    nseg = len(breaks) - 1
    out = np.zeros((nseg, 4))
    if order == "linear":
        slope = np.diff(values) / np.diff(breaks)
        out[:, 2] = slope
        out[:, 3] = values[:-1]
        return out
    pch = PchipInterpolator(breaks, values)
    out[:] = pch.c.T
    return out


# --------------------------------------------------------------------------
# Operations


def radii(config: PlanarConfiguration, theta: float) -> np.ndarray:
    """Per-body distances r_i(theta mod T), using the exact per-kind law."""
    T = config.period
    th = theta % T
    kind = config.kind
    if isinstance(kind, Circular):
        return np.array(kind.radii, dtype=float)
    if isinstance(kind, EllipticKeplerPair):
        ecc = solve_kepler(math.pi + TWO_PI * th / T, kind.e)
        base = kind.a * (1.0 - kind.e * math.cos(ecc))
        return np.array([s * base for s in kind.scales])
    if isinstance(kind, RegularizedCollinearPair):
        r = collinear_radius(th)
        return np.array([r, r])
    assert isinstance(kind, Tabulated)
    if not 0.0 <= th <= T:  # cannot happen after reduction
        raise ConfigError(f"interpolation query {th} outside closed grid")
    return np.asarray(config._radii_interp(th), dtype=float)


def q_mono(config: PlanarConfiguration) -> float:
    """Height above which the vertical acceleration is negative and
    strictly increasing in q for every phase: max_i R_i / sqrt(2)."""
    return config.r_bound / math.sqrt(2.0)


def load_tabulated(source) -> PlanarConfiguration:
    """Build a Tabulated configuration from CSV content.

    Accepts a path, a string of file content, bytes, or a readable.
    Layout: `# masses: m1,...,mn`, `# period: T`, an optional
    `# dilation-column: yes`, then rows `theta,r1,...,rn[,u]` covering
    [0, T] inclusively with matching first/last radii rows.
    """
    text = _read_source(source)
    masses = None
    period = None
    has_dilation = False
    order = "pchip"
    rows = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            key, _, value = body.partition(":")
            key = key.strip().lower()
            value = value.strip()
            if key == "masses":
                try:
                    masses = tuple(float(v) for v in value.split(","))
                except ValueError as exc:
                    raise MissingHeaderError(f"line {lineno}: unreadable masses {value!r}") from exc
            elif key == "period":
                try:
                    period = float(value)
                except ValueError as exc:
                    raise MissingHeaderError(f"line {lineno}: unreadable period {value!r}") from exc
            elif key == "dilation-column":
                has_dilation = value.lower() in ("yes", "true", "1")
            elif key == "interpolation":
                order = value.lower()
            continue
        try:
            rows.append([float(v) for v in line.split(",")])
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: unreadable data row {line!r}") from exc
    if masses is None:
        raise MissingHeaderError("missing '# masses:' header line")
    if period is None:
        raise MissingHeaderError("missing '# period:' header line")
    if order not in ("pchip", "linear"):
        raise ConfigError(f"unknown interpolation order {order!r}")
    n = len(masses)
    want = 1 + n + (1 if has_dilation else 0)
    if len(rows) < 2:
        raise ConfigError("need at least two data rows")
    data = np.array(rows, dtype=float)
    if data.shape[1] != want:
        raise ConfigError(f"expected {want} columns per row, got {data.shape[1]}")
    thetas = data[:, 0]
    if not np.all(np.diff(thetas) > 0.0):
        raise NonMonotoneGridError("phase grid must be strictly increasing")
    if abs(thetas[0]) > 1e-12 or abs(thetas[-1] - period) > 1e-9 * max(1.0, period):
        raise NonMonotoneGridError(
            f"phase grid must run from 0 to the period, got [{thetas[0]}, {thetas[-1]}]"
        )
    radii_cols = data[:, 1 : 1 + n]
    if (radii_cols < 0.0).any():
        raise NegativeRadiusError("negative radius in tabulated data")
    closure = float(np.max(np.abs(radii_cols[-1] - radii_cols[0])))
    if closure > 1e-9 * max(1.0, float(np.max(np.abs(radii_cols)))):
        raise PeriodicClosureError(f"first/last rows differ by {closure:.3e}")
    dil = None
    if has_dilation:
        dil = data[:, 1 + n].copy()
        if (dil < 0.0).any():
            raise NegativeRadiusError("negative dilation in tabulated data")
        if abs(dil[-1] - dil[0]) > 1e-9 * max(1.0, float(np.max(dil))):
            raise PeriodicClosureError("dilation column fails periodic closure")
        dil[-1] = dil[0]
    radii_cols = radii_cols.copy()
    radii_cols[-1] = radii_cols[0]
    collision = tuple(
        float(thetas[i]) for i in range(len(thetas) - 1) if radii_cols[i].min() == 0.0
    )
    return PlanarConfiguration(
        name="tabulated",
        masses=masses,
        period=period,
        kind=Tabulated(thetas=thetas, radii=radii_cols, dilation=dil, order=order),
        time_mode="fictional" if has_dilation else "physical",
        collision_phases=collision,
    )


def _read_source(source) -> str:
    if isinstance(source, bytes):
        return source.decode("utf-8")
    if isinstance(source, Path):
        return source.read_text()
    if isinstance(source, str):
        if "\n" in source:
            return source
        candidate = Path(source)
        if candidate.exists():
            return candidate.read_text()
        raise ConfigError(f"no such configuration file: {source}")
    if isinstance(source, io.IOBase) or hasattr(source, "read"):
        data = source.read()
        return data.decode("utf-8") if isinstance(data, bytes) else data
    raise ConfigError(f"unsupported source type {type(source)!r}")


# --------------------------------------------------------------------------
# Presets

# Unit-mass pair normalization used by the built-in Kepler presets: each
# body moves in the central field of the configuration's total mass M, so
# a pair released at distance 1 from the origin with unit tangential speed
# has a = M/(2M - 1) = 2/3, e = 1/2 and T = 2*pi*sqrt(a^3/M) = 4*pi/(3*sqrt(3))
# ~ 2.41840 (the nominal value usually quoted for it is 2.4183).
KEPLER_PAIR_A = 2.0 / 3.0
KEPLER_PAIR_E = 0.5
KEPLER_PAIR_T = 4.0 * math.pi / (3.0 * math.sqrt(3.0))
KEPLER_PAIR_T_NOMINAL = 2.4183


def circular_pair(radius: float = 1.0, masses: Sequence[float] = (1.0, 1.0)) -> PlanarConfiguration:
    """Two (or more) bodies at constant distance from the origin.

    The radii are phase-independent, so the period only fixes the phase
    chart; it is set to the Kepler-consistent 2*pi*sqrt(radius^3/M).
    """
    m = tuple(float(v) for v in masses)
    total = sum(m)
    period = TWO_PI * math.sqrt(radius**3 / total)
    return PlanarConfiguration(
        name="circular",
        masses=m,
        period=period,
        kind=Circular(radii=tuple(radius for _ in m)),
        symmetry_points=(0.0, 0.5 * period),
    )


def kepler_pair(
    a: float = KEPLER_PAIR_A,
    e: float = KEPLER_PAIR_E,
    period: float | None = None,
    annotation: str = "",
) -> PlanarConfiguration:
    """Unit-mass pair on a shared ellipse, apoapsis at phase 0."""
    total = 2.0
    T = TWO_PI * math.sqrt(a**3 / total) if period is None else period
    return PlanarConfiguration(
        name="paper-kepler",
        masses=(1.0, 1.0),
        period=T,
        kind=EllipticKeplerPair(a=a, e=e),
        symmetry_points=(0.0, 0.5 * T),
        annotation=annotation,
    )


def collinear_e1() -> PlanarConfiguration:
    """Regularized collinear unit-mass pair (eccentricity-one limit).

    Runs on the regularizing clock: 2*pi-periodic with collisions at
    phase 0 and dilation equal to the body distance.
    """
    return PlanarConfiguration(
        name="collinear-e1",
        masses=(1.0, 1.0),
        period=TWO_PI,
        kind=RegularizedCollinearPair(),
        time_mode="fictional",
        symmetry_points=(0.0, math.pi),
        collision_phases=(0.0,),
    )


def preset(name: str) -> PlanarConfiguration:
    """Look up a built-in configuration by CLI name."""
    try:
        factory = _PRESETS[name]
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; known: {', '.join(sorted(_PRESETS))}")
    return factory()


def preset_names() -> tuple[str, ...]:
    return tuple(_PRESETS)


_PRESETS = {
    "circular": circular_pair,
    "paper-kepler": lambda: kepler_pair(
        annotation=f"nominal T {KEPLER_PAIR_T_NOMINAL}"
    ),
    "collinear-e1": collinear_e1,
}
