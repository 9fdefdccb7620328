"""Density scans, the inverse-density saturation law and RENP thresholds."""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .bloch import DensityMatrix
from .core import (
    DEFAULT_CONSTANTS,
    ConfigError,
    LevelScheme,
    MediumSpec,
    NumericalError,
    PhysicalConstants,
    PulseSpec,
    SimGrid,
)
from .propagation import DEFAULT_Z_STRIDE, run_propagation, saturation_distance
from .trigger import TriggerSpec, solve_trigger

# max relative residual of the pinned 1/N fit still called consistent
INVERSE_LAW_TOLERANCE = 0.05


class DegenerateFitError(ValueError):
    """The inverse-law fit cannot be formed from the given entries."""


class KinematicError(ValueError):
    """The requested neutrino pair cannot be emitted."""


@dataclass(frozen=True)
class ScanEntry:
    density: float  # um^-3
    saturation_distance: float  # um
    peak_intensity: float  # max |W_g|^2, ns^-2 (nan without a trigger)
    diagnostics: dict = field(default_factory=dict, compare=False)


@dataclass(frozen=True)
class InverseLawFit:
    constant: float  # C in d = C / N, um * um^-3
    max_residual: float  # max |d_i N_i / C - 1|
    slope: float  # free log-log fit, diagnostic only
    free_constant: float
    tolerance: float = INVERSE_LAW_TOLERANCE

    @property
    def consistent(self) -> bool:
        return self.max_residual <= self.tolerance


@dataclass(frozen=True)
class ScanResult:
    entries: tuple[ScanEntry, ...]
    fit: InverseLawFit

    def __post_init__(self):
        n = np.array([e.density for e in self.entries])
        if np.any(n <= 0) or np.any(np.diff(n) <= 0):
            raise ConfigError("scan densities must be positive and strictly increasing")

    @property
    def fitted_constant(self) -> float:
        return self.fit.constant

    def table(self) -> list[tuple[float, float, float]]:
        return [(e.density, e.saturation_distance, e.peak_intensity) for e in self.entries]


def fit_inverse_law(densities, distances, tolerance: float = INVERSE_LAW_TOLERANCE) -> InverseLawFit:
    """Least squares of log d = log C - log N (slope pinned at -1).

    Also reports an unconstrained log-log line so a wrong power law shows up.
    """
    n = np.asarray(densities, float)
    d = np.asarray(distances, float)
    if n.shape != d.shape or n.ndim != 1:
        raise DegenerateFitError("densities and distances must be matching 1D sequences")
    if n.size < 3:
        raise DegenerateFitError(f"need at least 3 entries, got {n.size}")
    if np.any(d <= 0):
        bad = [float(x) for x in n[d <= 0]]
        raise DegenerateFitError(f"zero saturation distance at density {bad}")
    if np.any(n <= 0):
        raise DegenerateFitError("densities must be positive")
    ln = np.log(n)
    ld = np.log(d)
    c = math.exp(float(np.mean(ld + ln)))
    resid = float(np.max(np.abs(d * n / c - 1.0)))
    if np.ptp(ln) > 0:
        slope, icpt = np.polyfit(ln, ld, 1)
    else:
        slope, icpt = float("nan"), float("nan")
    return InverseLawFit(c, resid, float(slope), math.exp(icpt), tolerance)


@dataclass(frozen=True)
class ScanSetup:
    """Everything one density point needs; ``medium`` and ``grid`` are the reference."""

    pump: PulseSpec
    stokes: PulseSpec
    scheme: LevelScheme
    medium: MediumSpec
    grid: SimGrid
    trig: TriggerSpec | None = None
    constants: PhysicalConstants = DEFAULT_CONSTANTS
    z_stride: int = DEFAULT_Z_STRIDE
    initial: DensityMatrix | None = None
    method: str = "magnus4"
    tolerance: float = 1e-6
    threshold: float = 0.45

    def at_density(self, density: float) -> tuple[MediumSpec, SimGrid]:
        """Length and dz scale as 1/N, so every point has the same number of z steps."""
        if not density > 0:
            raise ConfigError("scan densities must be positive")
        f = self.medium.density / density
        grid = replace(self.grid, dz=self.grid.dz * f)
        return MediumSpec(density, grid.length), grid


def _scan_point(args) -> ScanEntry:
    setup, density = args
    try:
        medium, grid = setup.at_density(density)
        _, cmap = run_propagation(
            setup.pump, setup.stokes, setup.scheme, medium, grid, setup.constants,
            z_stride=setup.z_stride, initial=setup.initial, tolerance=setup.tolerance,
            method=setup.method,
        )
        peak = float("nan")
        diag = {k: cmap.diagnostics[k] for k in ("trace_error", "purity_drift", "hermiticity_error")}
        if setup.trig is not None:
            gen = solve_trigger(cmap, setup.trig, setup.scheme, medium, grid, setup.constants)
            peak = gen.peak_generated_intensity()
            diag["manley_rowe_error"] = gen.manley_rowe_error
        return ScanEntry(density, saturation_distance(cmap, setup.threshold), peak, diag)
    except (ConfigError, NumericalError) as exc:
        raise type(exc)(f"density {density:g} um^-3: {exc}") from exc


def density_scan(setup: ScanSetup, densities, jobs: int = 1) -> ScanResult:
    densities = [float(x) for x in densities]
    if len(densities) < 3:
        raise ConfigError("a density scan needs at least 3 densities")
    if any(b <= a for a, b in zip(densities, densities[1:])):
        raise ConfigError("scan densities must be strictly increasing")
    work = [(setup, n) for n in densities]
    if jobs <= 1:
        entries = [_scan_point(w) for w in work]
    else:
        with ProcessPoolExecutor(max_workers=min(jobs, len(work))) as pool:
            entries = list(pool.map(_scan_point, work))
    zero = [e.density for e in entries if e.saturation_distance <= 0]
    if zero:
        raise NumericalError(
            f"coherence never reached {setup.threshold} at densities {zero}; cannot fit the 1/N law"
        )
    fit = fit_inverse_law([e.density for e in entries], [e.saturation_distance for e in entries])
    return ScanResult(tuple(entries), fit)


@dataclass(frozen=True)
class ThresholdQuery:
    e31: float  # eV
    masses: tuple[float, ...]  # eV

    def __post_init__(self):
        if not self.e31 > 0:
            raise ConfigError("e31 must be positive")
        object.__setattr__(self, "masses", tuple(float(m) for m in self.masses))
        if any(not m >= 0 for m in self.masses):
            raise ConfigError("neutrino masses must be >= 0")


def renp_photon_energy(q: ThresholdQuery, i: int, j: int) -> float:
    """Photon energy at the (i, j) pair threshold: E31/2 - (m_i + m_j)^2 / (2 E31)."""
    try:
        s = q.masses[i] + q.masses[j]
    except IndexError:
        raise ConfigError(f"mass index out of range for {len(q.masses)} masses") from None
    if s * s > q.e31 * q.e31:
        raise KinematicError(f"m_{i} + m_{j} = {s:g} eV exceeds E31 = {q.e31:g} eV")
    return q.e31 / 2 - s * s / (2 * q.e31)


@dataclass(frozen=True)
class Threshold:
    i: int
    j: int
    mass_sum: float
    energy: float


def thresholds(q: ThresholdQuery) -> list[Threshold]:
    """All unordered pairs i <= j, sorted by decreasing m_i + m_j."""
    out = [
        Threshold(i, j, q.masses[i] + q.masses[j], renp_photon_energy(q, i, j))
        for i, j in itertools.combinations_with_replacement(range(len(q.masses)), 2)
    ]
    return sorted(out, key=lambda t: (-t.mass_sum, t.i, t.j))
