import math

import numpy as np
import pytest

from macrocoh.bloch import solve_bloch
from macrocoh.core import (
    DEFAULT_CONSTANTS,
    LevelScheme,
    MediumSpec,
    NumericalError,
    PulseSpec,
    SimGrid,
    barium_scheme,
    gaussian_envelope,
)
from macrocoh.propagation import (
    CoherenceMap,
    propagation_coefficients,
    run_propagation,
    saturation_distance,
    stored_indices,
)

PUMP = PulseSpec(20.0, 7.0, 0.0, 4.0)
STOKES = PulseSpec(20.0, 7.0, 0.0, 9.0)
BA = barium_scheme()


def _grid(n_z, dz=1e-6, n_t=4001):
    return SimGrid(-28.0, 28.0, n_t, dz, n_z)


def test_coefficients_vacuum_and_linearity():
    assert propagation_coefficients(BA, MediumSpec(0.0, 1.0)) == (0.0, 0.0)
    c1 = propagation_coefficients(BA, MediumSpec(1e7, 1.0))
    c2 = propagation_coefficients(BA, MediumSpec(2e7, 1.0))
    assert c2[0] == pytest.approx(2 * c1[0], rel=1e-15)
    assert c2[1] == pytest.approx(2 * c1[1], rel=1e-15)


def test_coefficient_hand_oracle():
    # N = 1e7 um^-3 = 1e25 m^-3, k = 2 pi / 553 nm, mu = 8 D:
    # 1e25 * 1.1362e7 * (2.664e-29)^2 / (1.0546e-34 * 8.854e-12) = 8.64e19 /(m s)
    # -> 8.64e19 * 1e-9 * 1e-6 = 8.64e4 /(um ns)
    lam = 553e-9
    e2 = 2 * math.pi * DEFAULT_CONSTANTS.hbar * DEFAULT_CONSTANTS.c / lam / DEFAULT_CONSTANTS.elementary_charge
    s = LevelScheme(0.0, e2, 0.5 * e2, 8.0, 8.0)
    c_p, _ = propagation_coefficients(s, MediumSpec(1e7, 1.0))
    assert c_p == pytest.approx(8.64e4, rel=2e-3)


def test_stored_indices_keep_ends():
    assert list(stored_indices(10, 4)) == [0, 4, 8, 10]
    assert list(stored_indices(10, 5)) == [0, 5, 10]
    assert list(stored_indices(3, 100)) == [0, 3]


def test_vacuum_leaves_fields_unchanged():
    fields, cmap = run_propagation(PUMP, STOKES, BA, MediumSpec(0.0, 5e-5), _grid(50), z_stride=10)
    assert np.array_equal(fields.omega_p, np.broadcast_to(fields.omega_p[0], fields.omega_p.shape))
    assert np.array_equal(cmap.rho13, np.broadcast_to(cmap.rho13[0], cmap.rho13.shape))


def test_entrance_slice_matches_standalone_solve_bitwise():
    grid = _grid(20)
    fields, cmap = run_propagation(PUMP, STOKES, BA, MediumSpec(1e7, 2e-5), grid, z_stride=5)
    traj = solve_bloch(PUMP, STOKES, grid, check_convergence=False)
    assert np.array_equal(cmap.rho13[0], traj.states[:, 0, 2])
    # and the entrance fields are the analytic envelopes
    t = grid.times
    assert np.array_equal(fields.omega_p[0].real, gaussian_envelope(t, PUMP))
    assert np.all(fields.omega_p[0].imag == 0)


@pytest.fixture(scope="module")
def short_run():
    # first ~half of the saturation distance of the fig4 parameters
    grid = _grid(15000)
    return run_propagation(PUMP, STOKES, BA, MediumSpec(1e7, grid.length), grid, z_stride=1000)


def test_invariants_along_z(short_run):
    fields, cmap = short_run
    d = cmap.diagnostics
    assert d["trace_error"] < 1e-10
    assert d["purity_drift"] < 1e-8
    assert np.all(np.abs(cmap.rho13) <= 0.5)
    assert np.all(np.isfinite(fields.omega_p)) and np.all(np.isfinite(fields.omega_s))


def test_energy_never_exceeds_entrance_value(short_run):
    fields, _ = short_run
    e = fields.pulse_energy()
    assert np.max(e / e[0]) <= 1 + 1e-4


def test_pump_degrades_more_than_stokes(short_run):
    fields, _ = short_run
    dp = np.max(np.abs(fields.omega_p[-1] - fields.omega_p[0])) / PUMP.omega0
    ds = np.max(np.abs(fields.omega_s[-1] - fields.omega_s[0])) / STOKES.omega0
    assert dp > 0.1
    assert ds < 0.1 * dp


def test_leading_edge_steepens(short_run):
    fields, _ = short_run
    t = fields.t_values
    dt = t[1] - t[0]
    slopes = []
    for row in np.abs(fields.omega_p):
        lead = slice(0, int(np.argmax(row)) + 1)
        slopes.append(np.max(np.diff(row[lead])) / dt)
    # monotone steepening until the front saturates near z = 0.013
    z = fields.z_values
    early = np.asarray(slopes)[z <= 0.013]
    assert np.all(np.diff(early) > 0)
    assert early[-1] > 10 * early[0]


def test_saturation_distance_examples():
    z = np.linspace(0, 1, 11)
    t = np.linspace(-1, 1, 5)
    full = CoherenceMap(z, t, np.full((11, 5), 0.5 + 0j))
    assert saturation_distance(full) == 1.0
    assert saturation_distance(full, 0.51) == 0.0
    ramp = CoherenceMap(z, t, np.outer(0.5 * (1 - z), np.ones(5)).astype(complex))
    d = [saturation_distance(ramp, th) for th in (0.1, 0.2, 0.3, 0.45)]
    assert d == sorted(d, reverse=True)


@pytest.mark.filterwarnings("ignore:pulse parameters")
def test_non_finite_field_aborts_with_index():
    huge = PulseSpec(1e308, 7.0, 0.0, 4.0)
    with pytest.raises(NumericalError, match="z index"):
        run_propagation(huge, huge, BA, MediumSpec(1e7, 1e-5), _grid(10, n_t=101), check_convergence=False)


def test_cpr_violation_warns():
    bad = PulseSpec(20.0, 7.0, 0.0, 10.0)
    with pytest.warns(UserWarning, match="CPR regime"):
        run_propagation(bad, STOKES, BA, MediumSpec(1e7, 2e-6), _grid(2, n_t=4001), check_convergence=False)


def test_rk4_and_magnus_agree():
    grid = _grid(200)
    a, ca = run_propagation(PUMP, STOKES, BA, MediumSpec(1e7, grid.length), grid, z_stride=50)
    b, cb = run_propagation(PUMP, STOKES, BA, MediumSpec(1e7, grid.length), grid, z_stride=50, method="rk4")
    assert np.max(np.abs(a.omega_p - b.omega_p)) < 1e-4
    assert cb.diagnostics["method"] == "rk4"
