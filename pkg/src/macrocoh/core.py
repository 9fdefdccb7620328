"""Domain types, unit handling and the CPR regime check.

Internal units throughout the package:

    time            ns
    length          um
    Rabi frequency  ns^-1 (angular)
    density         particles / um^3
    energy          eV (level energies, photon energies)
    dipole moment   Debye

SI values enter and leave only through the helpers at the bottom of this
module.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

FOUR_LN2 = 4.0 * math.log(2.0)


class ConfigError(ValueError):
    """Invalid physical parameters or configuration."""


class NumericalError(RuntimeError):
    """Non-finite values, failed convergence or a broken invariant."""


@dataclass(frozen=True)
class PhysicalConstants:
    hbar: float = 1.054571817e-34  # J s
    epsilon0: float = 8.8541878128e-12  # F / m
    c: float = 299792458.0  # m / s
    debye_to_si: float = 3.33e-30  # C m, as used for the barium scheme
    elementary_charge: float = 1.602176634e-19  # J / eV

    def __post_init__(self):
        for name in ("hbar", "epsilon0", "c", "debye_to_si", "elementary_charge"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"physical constant {name} must be positive")

    @property
    def hbar_ev_ns(self) -> float:
        """hbar in eV ns."""
        return self.hbar / self.elementary_charge * 1e9

    def energy_to_wavenumber(self, energy_ev: float) -> float:
        """Photon energy (eV) -> vacuum wavenumber (m^-1)."""
        return energy_ev * self.elementary_charge / (self.hbar * self.c)

    def energy_to_angular(self, energy_ev: float) -> float:
        """Energy (eV) -> angular frequency (ns^-1)."""
        return energy_ev / self.hbar_ev_ns


DEFAULT_CONSTANTS = PhysicalConstants()


@dataclass(frozen=True)
class LevelScheme:
    """Lambda system |1> - |2> - |3> with |3> metastable.

    Wavelengths are optional; when given they must agree with the level
    energies, otherwise the wavenumbers are derived from the energies.
    """

    e1: float
    e2: float
    e3: float
    mu12: float
    mu23: float
    lambda_p: float | None = None  # nm
    lambda_s: float | None = None  # nm
    constants: PhysicalConstants = field(default=DEFAULT_CONSTANTS, repr=False)

    def __post_init__(self):
        if not (self.e1 < self.e3 < self.e2):
            raise ConfigError(
                f"level energies must satisfy e1 < e3 < e2, got "
                f"e1={self.e1}, e2={self.e2}, e3={self.e3}"
            )
        if not (self.mu12 > 0 and self.mu23 > 0):
            raise ConfigError("dipole moments mu12 and mu23 must be positive")
        for lam, gap, label in (
            (self.lambda_p, self.e2 - self.e1, "lambda_p"),
            (self.lambda_s, self.e2 - self.e3, "lambda_s"),
        ):
            if lam is None:
                continue
            if lam <= 0:
                raise ConfigError(f"{label} must be positive")
            k_lam = 2 * math.pi / (lam * 1e-9)
            k_gap = self.constants.energy_to_wavenumber(gap)
            if abs(k_lam - k_gap) > 1e-6 * k_gap:
                raise ConfigError(
                    f"{label}={lam} nm inconsistent with level energies "
                    f"(expected {2 * math.pi / k_gap * 1e9:.6f} nm)"
                )

    @property
    def e31(self) -> float:
        return self.e3 - self.e1

    @property
    def k_p(self) -> float:
        """Pump wavenumber (m^-1)."""
        if self.lambda_p is not None:
            return 2 * math.pi / (self.lambda_p * 1e-9)
        return self.constants.energy_to_wavenumber(self.e2 - self.e1)

    @property
    def k_s(self) -> float:
        """Stokes wavenumber (m^-1)."""
        if self.lambda_s is not None:
            return 2 * math.pi / (self.lambda_s * 1e-9)
        return self.constants.energy_to_wavenumber(self.e2 - self.e3)

    @property
    def mu12_si(self) -> float:
        return self.mu12 * self.constants.debye_to_si

    @property
    def mu23_si(self) -> float:
        return self.mu23 * self.constants.debye_to_si


def barium_scheme(mu12: float = 8.2, mu23: float = 1.6) -> LevelScheme:
    """6s2 1S0 / 6s6p 1P1 / 6s5d 1D2 with the default calibrated dipoles."""
    return LevelScheme(e1=0.0, e2=2.239187, e3=1.412843, mu12=mu12, mu23=mu23)


@dataclass(frozen=True)
class PulseSpec:
    omega0: float  # ns^-1
    tau: float  # FWHM, ns
    t_center: float = 0.0  # ns
    detuning: float = 0.0  # ns^-1

    def __post_init__(self):
        if not self.omega0 >= 0:
            raise ConfigError(f"omega0 must be >= 0, got {self.omega0}")
        if not self.tau > 0:
            raise ConfigError(f"tau must be > 0, got {self.tau}")
        if not (math.isfinite(self.t_center) and math.isfinite(self.detuning)):
            raise ConfigError("t_center and detuning must be finite")

    def scaled(self, factor: float) -> "PulseSpec":
        return PulseSpec(self.omega0 * factor, self.tau, self.t_center, self.detuning)


def gaussian_envelope(t, spec: PulseSpec):
    """omega0 * exp(-4 ln2 (t - t_center)^2 / tau^2); scalar or array ``t``."""
    x = (np.asarray(t, dtype=float) - spec.t_center) / spec.tau
    out = spec.omega0 * np.exp(-FOUR_LN2 * x * x)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class MediumSpec:
    density: float  # um^-3
    length: float  # um

    def __post_init__(self):
        if not self.density >= 0:
            raise ConfigError(f"density must be >= 0, got {self.density}")
        if not self.length > 0:
            raise ConfigError(f"length must be > 0, got {self.length}")


REFERENCE_DENSITY = 1e7  # um^-3
REFERENCE_DZ = 1e-6  # um


def default_dz(density: float) -> float:
    """z step preserving steps per saturation length: 1e-6 um at N = 1e7 um^-3."""
    if density <= 0:
        return REFERENCE_DZ
    return REFERENCE_DZ * (REFERENCE_DENSITY / density)


@dataclass(frozen=True)
class SimGrid:
    t_min: float
    t_max: float
    n_t: int
    dz: float
    n_z: int

    def __post_init__(self):
        if not self.t_min < self.t_max:
            raise ConfigError("grid requires t_min < t_max")
        if self.n_t < 2:
            raise ConfigError("grid requires n_t >= 2")
        if not self.dz > 0:
            raise ConfigError("grid requires dz > 0")
        if self.n_z < 1:
            raise ConfigError("grid requires n_z >= 1")

    @property
    def dt(self) -> float:
        return (self.t_max - self.t_min) / (self.n_t - 1)

    @property
    def times(self) -> np.ndarray:
        return np.linspace(self.t_min, self.t_max, self.n_t)

    @property
    def length(self) -> float:
        return self.dz * self.n_z

    def refined(self) -> "SimGrid":
        """Same window with the time step halved."""
        return SimGrid(self.t_min, self.t_max, 2 * self.n_t - 1, self.dz, self.n_z)

    def check_medium(self, medium: MediumSpec) -> None:
        if abs(self.length - medium.length) > self.dz * (1 + 1e-9):
            raise ConfigError(
                f"dz*n_z = {self.length:g} um does not match the medium length "
                f"{medium.length:g} um within one step"
            )

    @classmethod
    def for_medium(
        cls,
        medium: MediumSpec,
        pulses,
        dz: float | None = None,
        n_t: int = 4001,
        window: float = 4.0,
    ) -> "SimGrid":
        """Default grid: t_center +/- window*tau of the longest pulse."""
        longest = max(pulses, key=lambda p: p.tau)
        half = window * longest.tau
        dz = default_dz(medium.density) if dz is None else dz
        n_z = max(1, int(round(medium.length / dz)))
        return cls(longest.t_center - half, longest.t_center + half, n_t, dz, n_z)


@dataclass(frozen=True)
class ConditionReport:
    pulse_vs_detuning: bool  # 1/tau_P < Delta_P
    detuning_order: bool  # Delta_P < Delta_S
    rabi_balance: bool  # Omega_0P ~ Omega_0S
    margin_pulse: float  # Delta_P - 1/tau_P
    margin_detuning: float  # Delta_S - Delta_P
    rabi_mismatch: float  # relative |Omega_0P - Omega_0S|
    rabi_tolerance: float

    @property
    def passed(self) -> bool:
        return self.pulse_vs_detuning and self.detuning_order and self.rabi_balance

    def lines(self) -> list[str]:
        mark = lambda ok: "ok  " if ok else "FAIL"
        return [
            f"[{mark(self.pulse_vs_detuning)}] 1/tau_P < Delta_P   margin {self.margin_pulse:+.4g} ns^-1",
            f"[{mark(self.detuning_order)}] Delta_P < Delta_S     margin {self.margin_detuning:+.4g} ns^-1",
            f"[{mark(self.rabi_balance)}] Omega_0P ~ Omega_0S   mismatch {self.rabi_mismatch:.3g} "
            f"(tolerance {self.rabi_tolerance:g})",
            f"CPR regime: {'pass' if self.passed else 'fail'}",
        ]


def validate_cpr_conditions(
    pump: PulseSpec, stokes: PulseSpec, rabi_tolerance: float = 0.10
) -> ConditionReport:
    """Check the parameter region where two-photon CPR builds robust coherence."""
    margin_pulse = pump.detuning - 1.0 / pump.tau
    margin_det = stokes.detuning - pump.detuning
    scale = max(pump.omega0, stokes.omega0)
    mismatch = abs(pump.omega0 - stokes.omega0) / scale if scale > 0 else 0.0
    return ConditionReport(
        pulse_vs_detuning=margin_pulse > 0,
        detuning_order=margin_det > 0,
        rabi_balance=mismatch < rabi_tolerance,
        margin_pulse=margin_pulse,
        margin_detuning=margin_det,
        rabi_mismatch=mismatch,
        rabi_tolerance=rabi_tolerance,
    )


# SI <-> internal conversions. Each is a single multiplication so round trips
# are exact to rounding.

def rate_si_to_internal(x_per_s):
    return x_per_s * 1e-9


def rate_internal_to_si(x_per_ns):
    return x_per_ns * 1e9


def length_si_to_internal(x_m):
    return x_m * 1e6


def length_internal_to_si(x_um):
    return x_um * 1e-6


def density_si_to_internal(n_per_m3):
    return n_per_m3 * 1e-18


def density_internal_to_si(n_per_um3):
    return n_per_um3 * 1e18


def time_si_to_internal(t_s):
    return t_s * 1e9


def time_internal_to_si(t_ns):
    return t_ns * 1e-9
