"""Externally triggered coherent two-photon emission off a prepared medium.

For every time sample independently, the trigger W_t and generated field W_g
obey the linear pair

    dW_t/dz = -i xi_t conj(rho13(z, t)) W_g
    dW_g/dz = -i xi_g rho13(z, t) W_t

with W_g(0, t) = 0. The trigger is weak: rho13 is taken from a finished
propagation run and is not modified.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba as nb
import numpy as np
from scipy.integrate import trapezoid

from .core import (
    DEFAULT_CONSTANTS,
    ConfigError,
    LevelScheme,
    MediumSpec,
    NumericalError,
    PhysicalConstants,
    PulseSpec,
    SimGrid,
    density_internal_to_si,
    gaussian_envelope,
)
from .propagation import CoherenceMap

MANLEY_ROWE_TOLERANCE = 1e-6


@dataclass(frozen=True)
class TriggerSpec:
    omega0: float  # ns^-1
    tau: float  # FWHM, ns
    t_center: float = 0.0
    photon_energy: float | None = None  # eV; None -> E31/2
    delta: float | None = None  # ns^-1; None -> derived from the level scheme
    delta_floor: float = 100.0  # ns^-1

    def __post_init__(self):
        PulseSpec(self.omega0, self.tau, self.t_center)  # same envelope invariants
        if self.photon_energy is not None and not self.photon_energy > 0:
            raise ConfigError("trigger photon energy must be positive")
        if self.delta is not None and abs(self.delta) < self.delta_floor:
            raise ConfigError(
                f"trigger detuning |{self.delta:g}| ns^-1 is below the far-detuning "
                f"floor {self.delta_floor:g} ns^-1"
            )

    @property
    def envelope(self) -> PulseSpec:
        return PulseSpec(self.omega0, self.tau, self.t_center)

    def scaled(self, factor: float) -> "TriggerSpec":
        return TriggerSpec(
            self.omega0 * factor, self.tau, self.t_center,
            self.photon_energy, self.delta, self.delta_floor,
        )

    def energies(self, scheme: LevelScheme) -> tuple[float, float]:
        """(trigger, generated) photon energies in eV; they sum to E31."""
        e_t = scheme.e31 / 2 if self.photon_energy is None else self.photon_energy
        e_g = scheme.e31 - e_t
        if not (0 < e_t < scheme.e31):
            raise ConfigError(f"trigger photon energy {e_t} eV must lie inside (0, E31={scheme.e31} eV)")
        return e_t, e_g

    def detuning(self, scheme: LevelScheme, constants: PhysicalConstants = DEFAULT_CONSTANTS) -> float:
        """Detuning from |2> in ns^-1."""
        if self.delta is not None:
            return self.delta
        e_t, _ = self.energies(scheme)
        delta = constants.energy_to_angular(scheme.e2 - scheme.e1 - e_t)
        if abs(delta) < self.delta_floor:
            raise ConfigError(
                f"derived trigger detuning {delta:g} ns^-1 is below the far-detuning floor"
            )
        return delta


@dataclass(frozen=True)
class GeneratedFieldMap:
    z_values: np.ndarray
    t_values: np.ndarray
    omega_t: np.ndarray  # (n_store, n_t)
    omega_g: np.ndarray
    xi_t: float
    xi_g: float
    generated_photon_energy: float  # eV
    manley_rowe_error: float

    def invariant(self) -> np.ndarray:
        return self.xi_g * np.abs(self.omega_t) ** 2 + self.xi_t * np.abs(self.omega_g) ** 2

    def peak_generated_intensity(self) -> float:
        """max over (z, t) of |W_g|^2 in ns^-2."""
        return float(np.max(np.abs(self.omega_g) ** 2))


def coupling_constants(
    scheme: LevelScheme,
    medium: MediumSpec,
    trig: TriggerSpec,
    constants: PhysicalConstants = DEFAULT_CONSTANTS,
) -> tuple[float, float]:
    """(xi_t, xi_g) in um^-1; both carry the sign of the detuning."""
    e_t, e_g = trig.energies(scheme)
    delta_si = trig.detuning(scheme, constants) * 1e9
    k_t = constants.energy_to_wavenumber(e_t)
    k_g = constants.energy_to_wavenumber(e_g)
    n_si = density_internal_to_si(medium.density)
    denom = 2 * constants.epsilon0 * constants.hbar * delta_si
    xi_t = k_t * n_si * scheme.mu23_si ** 2 / denom
    xi_g = k_g * n_si * scheme.mu12_si ** 2 / denom
    return xi_t * 1e-6, xi_g * 1e-6


@nb.njit(cache=True)
def _trigger_kernel(r13, lo, w, xi_t, xi_g, dz, n_z, store, wt0, out_t, out_g):
    n_t = wt0.shape[0]
    h = 0.5 * dz
    for it in range(n_t):
        a = wt0[it]
        g = 0j
        k = 0
        if store[0] == 0:
            out_t[0, it] = a
            out_g[0, it] = g
            k = 1
        for iz in range(n_z):
            j = 2 * iz
            ra = (1.0 - w[j]) * r13[lo[j], it] + w[j] * r13[lo[j] + 1, it]
            rm = (1.0 - w[j + 1]) * r13[lo[j + 1], it] + w[j + 1] * r13[lo[j + 1] + 1, it]
            rb = (1.0 - w[j + 2]) * r13[lo[j + 2], it] + w[j + 2] * r13[lo[j + 2] + 1, it]
            fa = -1j * xi_t * np.conj(ra)
            fb = -1j * xi_g * ra
            k1a = fa * g
            k1g = fb * a
            fa = -1j * xi_t * np.conj(rm)
            fb = -1j * xi_g * rm
            k2a = fa * (g + h * k1g)
            k2g = fb * (a + h * k1a)
            k3a = fa * (g + h * k2g)
            k3g = fb * (a + h * k2a)
            fa = -1j * xi_t * np.conj(rb)
            fb = -1j * xi_g * rb
            k4a = fa * (g + dz * k3g)
            k4g = fb * (a + dz * k3a)
            a = a + dz / 6.0 * (k1a + 2.0 * k2a + 2.0 * k3a + k4a)
            g = g + dz / 6.0 * (k1g + 2.0 * k2g + 2.0 * k3g + k4g)
            if not (np.isfinite(a.real) and np.isfinite(a.imag) and np.isfinite(g.real) and np.isfinite(g.imag)):
                return iz + 1, it
            if k < store.shape[0] and store[k] == iz + 1:
                out_t[k, it] = a
                out_g[k, it] = g
                k += 1
    return -1, -1


def _interpolation_table(z_stored: np.ndarray, dz: float, n_z: int):
    """Bracketing slice and weight for every half step z = j dz / 2."""
    zq = np.arange(2 * n_z + 1) * (0.5 * dz)
    if len(z_stored) == 1:
        return np.zeros(len(zq), np.int64), np.zeros(len(zq))
    lo = np.clip(np.searchsorted(z_stored, zq, side="right") - 1, 0, len(z_stored) - 2)
    w = (zq - z_stored[lo]) / (z_stored[lo + 1] - z_stored[lo])
    return lo.astype(np.int64), np.clip(w, 0.0, 1.0)


def solve_trigger(
    cmap: CoherenceMap,
    trig: TriggerSpec,
    scheme: LevelScheme,
    medium: MediumSpec,
    grid: SimGrid,
    constants: PhysicalConstants = DEFAULT_CONSTANTS,
) -> GeneratedFieldMap:
    """RK4 in z on the fine propagation grid, output on the map's stored slices."""
    if len(cmap.t_values) != grid.n_t:
        raise ConfigError("coherence map does not match the time grid")
    if cmap.z_values[-1] < grid.length - 0.5 * grid.dz:
        raise ConfigError("coherence map does not cover the medium length")
    xi_t, xi_g = coupling_constants(scheme, medium, trig, constants)
    store = np.rint(cmap.z_values / grid.dz).astype(np.int64)
    lo, w = _interpolation_table(cmap.z_values, grid.dz, grid.n_z)
    r13 = np.ascontiguousarray(cmap.rho13)
    if len(cmap.z_values) == 1:
        r13 = np.vstack([r13, r13])
    wt0 = gaussian_envelope(cmap.t_values, trig.envelope).astype(complex)
    out_t = np.empty((len(store), grid.n_t), complex)
    out_g = np.empty((len(store), grid.n_t), complex)
    bad_z, bad_t = _trigger_kernel(r13, lo, w, xi_t, xi_g, grid.dz, grid.n_z, store, wt0, out_t, out_g)
    if bad_z >= 0:
        raise NumericalError(f"non-finite trigger/generated field at z index {bad_z}, t index {bad_t}")

    inv = xi_g * np.abs(out_t) ** 2 + xi_t * np.abs(out_g) ** 2
    ref = inv[0]
    nz = ref != 0
    err = float(np.max(np.abs(inv[:, nz] - ref[nz]) / np.abs(ref[nz]))) if nz.any() else 0.0
    if err > MANLEY_ROWE_TOLERANCE:
        raise NumericalError(f"Manley-Rowe invariant drifted by {err:.3g} (tolerance {MANLEY_ROWE_TOLERANCE:g})")
    _, e_g = trig.energies(scheme)
    return GeneratedFieldMap(cmap.z_values, cmap.t_values, out_t, out_g, xi_t, xi_g, e_g, err)


def fluence_profile(
    gen: GeneratedFieldMap, scheme: LevelScheme, constants: PhysicalConstants = DEFAULT_CONSTANTS
) -> np.ndarray:
    """Generated-field fluence (J/m^2) at every stored z."""
    field = constants.hbar * np.abs(gen.omega_g) * 1e9 / scheme.mu12_si  # V/m
    intensity = 0.5 * constants.c * constants.epsilon0 * field ** 2  # W/m^2
    dt = (gen.t_values[1] - gen.t_values[0]) * 1e-9
    return trapezoid(intensity, dx=dt, axis=1)


def photons_from_fluence(fluence, area_m2, photon_energy_ev, constants=DEFAULT_CONSTANTS):
    return np.asarray(fluence) * area_m2 / (photon_energy_ev * constants.elementary_charge)


def photon_yield(
    gen: GeneratedFieldMap,
    scheme: LevelScheme,
    trig: TriggerSpec,
    beam_area: float,
    constants: PhysicalConstants = DEFAULT_CONSTANTS,
) -> float:
    """Generated photons per shot through ``beam_area`` (mm^2), at the best z."""
    if not beam_area > 0:
        raise ConfigError("beam area must be positive")
    f = fluence_profile(gen, scheme, constants)
    return float(np.max(photons_from_fluence(f, beam_area * 1e-6, gen.generated_photon_energy, constants)))


def gaussian_beam_area(fwhm_mm: float, profile: str = "amplitude") -> float:
    """Effective area (mm^2) of a 2D Gaussian beam: integral of I / I_peak.

    ``profile`` says whether ``fwhm_mm`` describes the amplitude or the
    intensity profile.
    """
    fwhm_i = fwhm_mm / math.sqrt(2) if profile == "amplitude" else fwhm_mm
    return math.pi * fwhm_i ** 2 / (4 * math.log(2))
