"""JSON run configuration and shipped presets.

Keys carry their unit as a suffix (``tau_fwhm_ns``, ``density_per_um3``).
Unknown keys are rejected so a typo cannot silently fall back to a default.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from .analysis import ScanSetup, ThresholdQuery
from .bloch import DensityMatrix
from .core import (
    DEFAULT_CONSTANTS,
    ConfigError,
    LevelScheme,
    MediumSpec,
    PhysicalConstants,
    PulseSpec,
    SimGrid,
    default_dz,
)
from .propagation import DEFAULT_Z_STRIDE
from .transverse import TransverseGrid
from .trigger import TriggerSpec


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class LevelSchemeConfig(_Section):
    e1_ev: float
    e2_ev: float
    e3_ev: float
    mu12_debye: float
    mu23_debye: float
    lambda_p_nm: Optional[float] = None
    lambda_s_nm: Optional[float] = None


class ConstantsConfig(_Section):
    hbar_js: float = DEFAULT_CONSTANTS.hbar
    epsilon0_f_per_m: float = DEFAULT_CONSTANTS.epsilon0
    c_m_per_s: float = DEFAULT_CONSTANTS.c
    debye_to_cm: float = DEFAULT_CONSTANTS.debye_to_si


class MediumConfig(_Section):
    density_per_um3: float
    length_um: float


class PulseConfig(_Section):
    omega0_per_ns: float
    tau_fwhm_ns: float
    t_center_ns: float = 0.0
    detuning_per_ns: float = 0.0


class TriggerConfig(_Section):
    omega0_per_ns: float
    tau_fwhm_ns: float
    t_center_ns: float = 0.0
    photon_energy_ev: Optional[float] = None
    delta_per_ns: Optional[float] = None


class PulsesConfig(_Section):
    pump: PulseConfig
    stokes: PulseConfig
    trigger: Optional[TriggerConfig] = None


class GridConfig(_Section):
    t_min_ns: Optional[float] = None
    t_max_ns: Optional[float] = None
    n_t: int = Field(4001, ge=3)
    window_tau: float = Field(4.0, gt=0)
    dz_um: Optional[float] = None
    z_stride: int = Field(DEFAULT_Z_STRIDE, ge=1)
    method: Literal["magnus4", "rk4"] = "magnus4"
    convergence_tolerance: float = Field(1e-6, gt=0)


class TransverseConfig(_Section):
    fwhm_mm: float
    n_samples: int = Field(41, ge=2)
    extent_fwhm: float = Field(1.5, gt=0)
    profile: Literal["amplitude", "intensity"] = "amplitude"


class ScanConfig(_Section):
    densities_per_um3: list[float]
    threshold: float = 0.45


class ThresholdsConfig(_Section):
    e31_ev: Optional[float] = None  # defaults to the level scheme's E31
    masses_ev: list[float]


class RunConfig(_Section):
    description: str = ""
    level_scheme: LevelSchemeConfig
    constants: ConstantsConfig = ConstantsConfig()
    medium: Optional[MediumConfig] = None
    pulses: Optional[PulsesConfig] = None
    grid: GridConfig = GridConfig()
    initial_populations: Optional[tuple[float, float, float]] = None
    transverse: Optional[TransverseConfig] = None
    scan: Optional[ScanConfig] = None
    thresholds: Optional[ThresholdsConfig] = None
    saturation_threshold: float = 0.45


@dataclass(frozen=True)
class Pipeline:
    """Domain objects built from a validated config."""

    config: RunConfig
    constants: PhysicalConstants
    scheme: LevelScheme
    medium: MediumSpec | None
    pump: PulseSpec | None
    stokes: PulseSpec | None
    trigger: TriggerSpec | None
    grid: SimGrid | None
    z_stride: int
    method: str
    tolerance: float
    initial: DensityMatrix
    transverse: TransverseGrid | None
    threshold: float

    def require(self, *sections: str) -> None:
        """ConfigError naming the first missing section a command needs."""
        have = {
            "medium": self.medium is not None,
            "pulses": self.pump is not None,
            "pulses.trigger": self.trigger is not None,
            "transverse": self.transverse is not None,
            "scan": self.config.scan is not None,
            "thresholds": self.config.thresholds is not None,
        }
        for name in sections:
            if not have[name]:
                raise ConfigError(f"{name}: section required for this command")

    def scan_setup(self) -> ScanSetup:
        self.require("medium", "pulses", "scan")
        return ScanSetup(
            self.pump, self.stokes, self.scheme, self.medium, self.grid, self.trigger,
            self.constants, self.z_stride, self.initial, self.method, self.tolerance,
            self.config.scan.threshold if self.config.scan else self.threshold,
        )

    def threshold_query(self) -> ThresholdQuery:
        t = self.config.thresholds
        if t is None:
            raise ConfigError("thresholds: section missing")
        e31 = self.scheme.e31 if t.e31_ev is None else t.e31_ev
        with _section("thresholds"):
            return ThresholdQuery(e31, tuple(t.masses_ev))


class _section:
    """Prefix domain validation errors with the config section they came from."""

    def __init__(self, path: str):
        self.path = path

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc_type is not None and issubclass(exc_type, (ConfigError, ValueError)) and not issubclass(
            exc_type, ValidationError
        ):
            raise ConfigError(f"{self.path}: {exc}") from exc
        return False


def _format_validation(err: ValidationError) -> str:
    lines = []
    for e in err.errors():
        path = ".".join(str(p) for p in e["loc"]) or "<root>"
        if e["type"] == "missing":
            lines.append(f"{path}: required key missing")
        elif e["type"] == "extra_forbidden":
            lines.append(f"{path}: unknown key")
        else:
            lines.append(f"{path}: {e['msg']}")
    return "invalid config:\n  " + "\n  ".join(lines)


def parse_config(data: dict) -> RunConfig:
    try:
        return RunConfig.model_validate(data)
    except ValidationError as err:
        raise ConfigError(_format_validation(err)) from None


def build(cfg: RunConfig) -> Pipeline:
    c = cfg.constants
    with _section("constants"):
        constants = PhysicalConstants(
            hbar=c.hbar_js, epsilon0=c.epsilon0_f_per_m, c=c.c_m_per_s, debye_to_si=c.debye_to_cm
        )
    ls = cfg.level_scheme
    with _section("level_scheme"):
        scheme = LevelScheme(
            ls.e1_ev, ls.e2_ev, ls.e3_ev, ls.mu12_debye, ls.mu23_debye,
            ls.lambda_p_nm, ls.lambda_s_nm, constants,
        )
    medium = None
    if cfg.medium is not None:
        with _section("medium"):
            medium = MediumSpec(cfg.medium.density_per_um3, cfg.medium.length_um)
    pulses = {"pump": None, "stokes": None}
    for name in pulses if cfg.pulses is not None else ():
        p = getattr(cfg.pulses, name)
        with _section(f"pulses.{name}"):
            pulses[name] = PulseSpec(p.omega0_per_ns, p.tau_fwhm_ns, p.t_center_ns, p.detuning_per_ns)
    trig = None
    if cfg.pulses is not None and cfg.pulses.trigger is not None:
        t = cfg.pulses.trigger
        with _section("pulses.trigger"):
            trig = TriggerSpec(t.omega0_per_ns, t.tau_fwhm_ns, t.t_center_ns, t.photon_energy_ev, t.delta_per_ns)
            trig.detuning(scheme, constants)
            trig.energies(scheme)

    g = cfg.grid
    grid = None
    if pulses["pump"] is not None:
        with _section("grid"):
            grid = _build_grid(g, [pulses["pump"], pulses["stokes"]] + ([trig.envelope] if trig else []), medium)

    with _section("initial_populations"):
        if cfg.initial_populations is None:
            initial = DensityMatrix.ground()
        else:
            initial = DensityMatrix.from_populations(cfg.initial_populations)

    tgrid = None
    if cfg.transverse is not None:
        tc = cfg.transverse
        with _section("transverse"):
            tgrid = TransverseGrid.radial(tc.fwhm_mm, tc.n_samples, tc.extent_fwhm, tc.profile)
    if cfg.scan is not None:
        with _section("scan"):
            d = cfg.scan.densities_per_um3
            if len(d) < 3:
                raise ConfigError("densities_per_um3 needs at least 3 values")
            if any(not x > 0 or not math.isfinite(x) for x in d) or any(b <= a for a, b in zip(d, d[1:])):
                raise ConfigError("densities_per_um3 must be positive and strictly increasing")
    return Pipeline(
        cfg, constants, scheme, medium, pulses["pump"], pulses["stokes"], trig, grid,
        g.z_stride, g.method, g.convergence_tolerance, initial, tgrid, cfg.saturation_threshold,
    )


def _build_grid(g: GridConfig, specs, medium: MediumSpec | None) -> SimGrid:
    longest = max(specs, key=lambda p: p.tau)
    half = g.window_tau * longest.tau
    t_min = longest.t_center - half if g.t_min_ns is None else g.t_min_ns
    t_max = longest.t_center + half if g.t_max_ns is None else g.t_max_ns
    dz = default_dz(medium.density if medium is not None else 0.0) if g.dz_um is None else g.dz_um
    if not dz > 0:
        raise ConfigError("dz_um must be positive")
    # without a medium the grid only serves the Bloch solver
    n_z = 1 if medium is None else max(1, int(round(medium.length / dz)))
    grid = SimGrid(t_min, t_max, g.n_t, dz, n_z)
    if medium is not None:
        grid.check_medium(medium)
    return grid


def load_config(path) -> RunConfig:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc.strerror or exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{p}: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{p}: top level must be a JSON object")
    return parse_config(data)


def available_presets() -> list[str]:
    root = resources.files("macrocoh") / "presets"
    return sorted(f.name[:-5] for f in root.iterdir() if f.name.endswith(".json"))


def load_preset(name: str) -> RunConfig:
    names = available_presets()
    if name not in names:
        raise ConfigError(f"unknown preset {name!r}; available presets: {', '.join(names)}")
    text = (resources.files("macrocoh") / "presets" / f"{name}.json").read_text()
    return parse_config(json.loads(text))


def load_pipeline(path=None, preset=None) -> Pipeline:
    if (path is None) == (preset is None):
        raise ConfigError("give exactly one of a config path or a preset name")
    return build(load_config(path) if path is not None else load_preset(preset))
