"""Liouville equation for the three-level Lambda system under the RWA.

The Hamiltonian (in units of hbar, ns^-1) is

    H = 1/2 [[0,       W_P,  0            ],
             [W_P*,  2 D_P,  W_S          ],
             [0,     W_S*,   2 (D_P - D_S)]]

and the density matrix obeys d(rho)/dt = -i [H, rho].

Both integrators are fixed-step and 4th order on a shared sampled time grid,
so the propagation code can feed sampled (distorted) envelopes back in at
every z:

* ``"magnus4"`` (default): two-point Gauss-Magnus exponent with a [2/2] Pade
  exponential. The step operator is exactly unitary, so trace, purity and
  Hermiticity hold to rounding even for steep, barely resolved fronts.
* ``"rk4"``: classical Runge-Kutta on the commutator.

Envelope values between samples come from 4-point Lagrange interpolation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba as nb
import numpy as np

from .core import NumericalError, PulseSpec, SimGrid, gaussian_envelope

# upper-triangle packing used by the kernels: 11, 12, 13, 22, 23, 33
PACKED = ((0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2))
_PACKED_I = np.array([i for i, _ in PACKED])
_PACKED_J = np.array([j for _, j in PACKED])


@dataclass(frozen=True)
class DensityMatrix:
    rho: np.ndarray

    def __post_init__(self):
        rho = np.asarray(self.rho, dtype=complex)
        if rho.shape != (3, 3):
            raise ValueError(f"density matrix must be 3x3, got {rho.shape}")
        rho.setflags(write=False)
        object.__setattr__(self, "rho", rho)

    @classmethod
    def ground(cls) -> "DensityMatrix":
        rho = np.zeros((3, 3), complex)
        rho[0, 0] = 1.0
        return cls(rho)

    @classmethod
    def from_populations(cls, populations) -> "DensityMatrix":
        """Incoherent mixture with the given populations."""
        return cls(np.diag(np.asarray(populations, dtype=complex)))

    @classmethod
    def pure(cls, amplitudes) -> "DensityMatrix":
        psi = np.asarray(amplitudes, dtype=complex)
        psi = psi / np.linalg.norm(psi)
        return cls(np.outer(psi, psi.conj()))

    def validate(self, herm_tol=1e-12, trace_tol=1e-12, eig_tol=1e-10) -> None:
        rho = self.rho
        if np.max(np.abs(rho - rho.conj().T)) > herm_tol:
            raise ValueError("density matrix is not Hermitian")
        if abs(np.trace(rho) - 1.0) > trace_tol:
            raise ValueError(f"density matrix trace {np.trace(rho).real:.15g} != 1")
        if np.linalg.eigvalsh(0.5 * (rho + rho.conj().T)).min() < -eig_tol:
            raise ValueError("density matrix is not positive semidefinite")

    def packed(self) -> np.ndarray:
        return np.array([self.rho[i, j] for i, j in PACKED], dtype=complex)


@dataclass(frozen=True)
class BlochTrajectory:
    times: np.ndarray  # (n_t,)
    states: np.ndarray  # (n_t, 3, 3)

    def __len__(self):
        return len(self.times)

    def __getitem__(self, i) -> DensityMatrix:
        return DensityMatrix(self.states[i])

    @property
    def populations(self) -> np.ndarray:
        return np.real(np.einsum("tii->ti", self.states))

    def trace_error(self) -> float:
        return float(np.max(np.abs(np.einsum("tii->t", self.states) - 1.0)))

    def hermiticity_error(self) -> float:
        return float(np.max(np.abs(self.states - np.conj(np.swapaxes(self.states, 1, 2)))))

    def purity(self) -> np.ndarray:
        return np.real(np.einsum("tij,tji->t", self.states, self.states))

    def purity_drift(self) -> float:
        p = self.purity()
        return float(np.max(np.abs(p - p[0])))

    def min_eigenvalue(self) -> float:
        herm = 0.5 * (self.states + np.conj(np.swapaxes(self.states, 1, 2)))
        return float(np.linalg.eigvalsh(herm).min())


def build_hamiltonian(omega_p, omega_s, delta_p: float, delta_s: float) -> np.ndarray:
    """RWA Hamiltonian in units of hbar (ns^-1)."""
    h = np.zeros((3, 3), complex)
    h[0, 1] = omega_p
    h[1, 0] = np.conj(omega_p)
    h[1, 1] = 2 * delta_p
    h[1, 2] = omega_s
    h[2, 1] = np.conj(omega_s)
    h[2, 2] = 2 * (delta_p - delta_s)
    return 0.5 * h


def liouville_rhs(h: np.ndarray, rho) -> np.ndarray:
    """d(rho)/dt = -i (H rho - rho H) with H in units of hbar."""
    rho = rho.rho if isinstance(rho, DensityMatrix) else np.asarray(rho)
    return -1j * (h @ rho - rho @ h)


@nb.njit(cache=True, inline="always")
def _rhs(a, b, d1, d2, r00, r01, r02, r11, r12, r22):
    # h = [[0, a, 0], [a*, d1, b], [0, b*, d2]]; only the upper triangle is evolved
    r10 = np.conj(r01)
    r21 = np.conj(r12)
    ac = np.conj(a)
    bc = np.conj(b)
    c00 = a * r10 - r01 * ac
    c01 = a * r11 - (r00 * a + r01 * d1 + r02 * bc)
    c02 = a * r12 - (r01 * b + r02 * d2)
    c11 = (ac * r01 + d1 * r11 + b * r21) - (r10 * a + r11 * d1 + r12 * bc)
    c12 = (ac * r02 + d1 * r12 + b * r22) - (r11 * b + r12 * d2)
    c22 = (bc * r12 + d2 * r22) - (r21 * b + r22 * d2)
    return -1j * c00, -1j * c01, -1j * c02, -1j * c11, -1j * c12, -1j * c22


def _lagrange_weights(s: float):
    """Weights at t_n + s dt: interior (n-1..n+2), first interval (0..2), last (m-3..m-1)."""
    interior = np.array([
        -s * (s - 1) * (s - 2) / 6,
        (s + 1) * (s - 1) * (s - 2) / 2,
        -(s + 1) * s * (s - 2) / 2,
        (s + 1) * s * (s - 1) / 6,
    ])
    first = np.array([(s - 1) * (s - 2) / 2, -s * (s - 2), s * (s - 1) / 2])
    x = 1 + s
    last = np.array([(x - 1) * (x - 2) / 2, -x * (x - 2), x * (x - 1) / 2])
    return interior, first, last


_GAUSS = (0.5 - math.sqrt(3) / 6, 0.5 + math.sqrt(3) / 6)
_W_MID = _lagrange_weights(0.5)
_W_G1 = _lagrange_weights(_GAUSS[0])
_W_G2 = _lagrange_weights(_GAUSS[1])
_MAGNUS_C = math.sqrt(3) / 12


@nb.njit(cache=True)
def _half_envelope_at(f, wi, wf, wl, out):
    """0.5 * f interpolated inside every interval (out has n - 1 entries)."""
    m = f.shape[0]  # >= 3, enforced by Integrator
    out[0] = 0.5 * (wf[0] * f[0] + wf[1] * f[1] + wf[2] * f[2])
    for n in range(1, m - 2):
        out[n] = 0.5 * (wi[0] * f[n - 1] + wi[1] * f[n] + wi[2] * f[n + 1] + wi[3] * f[n + 2])
    out[m - 2] = 0.5 * (wl[0] * f[m - 3] + wl[1] * f[m - 2] + wl[2] * f[m - 1])


@nb.njit(cache=True)
def rk4_kernel(omega_p, omega_s, delta_p, delta_s, dt, y0, out, mid_p, mid_s):
    """Classical RK4 of the packed density matrix over sampled envelopes.

    ``out`` is (n_t, 6); ``mid_p``/``mid_s`` hold the half envelopes at the
    interval midpoints.
    """
    n = omega_p.shape[0]
    d1 = delta_p
    d2 = delta_p - delta_s
    y_0, y_1, y_2, y_3, y_4, y_5 = y0[0], y0[1], y0[2], y0[3], y0[4], y0[5]
    out[0, 0] = y_0
    out[0, 1] = y_1
    out[0, 2] = y_2
    out[0, 3] = y_3
    out[0, 4] = y_4
    out[0, 5] = y_5
    h = 0.5 * dt
    s = dt / 6.0
    for k in range(n - 1):
        a0 = 0.5 * omega_p[k]
        b0 = 0.5 * omega_s[k]
        am = mid_p[k]
        bm = mid_s[k]
        a1 = 0.5 * omega_p[k + 1]
        b1 = 0.5 * omega_s[k + 1]
        p0, p1, p2, p3, p4, p5 = _rhs(a0, b0, d1, d2, y_0, y_1, y_2, y_3, y_4, y_5)
        q0, q1, q2, q3, q4, q5 = _rhs(
            am, bm, d1, d2,
            y_0 + h * p0, y_1 + h * p1, y_2 + h * p2,
            y_3 + h * p3, y_4 + h * p4, y_5 + h * p5,
        )
        r0, r1, r2, r3, r4, r5 = _rhs(
            am, bm, d1, d2,
            y_0 + h * q0, y_1 + h * q1, y_2 + h * q2,
            y_3 + h * q3, y_4 + h * q4, y_5 + h * q5,
        )
        u0, u1, u2, u3, u4, u5 = _rhs(
            a1, b1, d1, d2,
            y_0 + dt * r0, y_1 + dt * r1, y_2 + dt * r2,
            y_3 + dt * r3, y_4 + dt * r4, y_5 + dt * r5,
        )
        y_0 = y_0 + s * (p0 + 2.0 * q0 + 2.0 * r0 + u0)
        y_1 = y_1 + s * (p1 + 2.0 * q1 + 2.0 * r1 + u1)
        y_2 = y_2 + s * (p2 + 2.0 * q2 + 2.0 * r2 + u2)
        y_3 = y_3 + s * (p3 + 2.0 * q3 + 2.0 * r3 + u3)
        y_4 = y_4 + s * (p4 + 2.0 * q4 + 2.0 * r4 + u4)
        y_5 = y_5 + s * (p5 + 2.0 * q5 + 2.0 * r5 + u5)
        out[k + 1, 0] = y_0
        out[k + 1, 1] = y_1
        out[k + 1, 2] = y_2
        out[k + 1, 3] = y_3
        out[k + 1, 4] = y_4
        out[k + 1, 5] = y_5


@nb.njit(cache=True)
def magnus4_kernel(delta_p, delta_s, dt, weights, psi0, out, g1p, g1s, g2p, g2s, cm):
    """Unitary 4th-order propagation of rho = sum_k w_k |psi_k><psi_k|.

    g1*/g2* are the half envelopes at the two Gauss points of each interval.
    The step operator (I - iK/2 - K^2/12)(I + iK/2 - K^2/12)^-1 is exactly
    unitary for the Hermitian Magnus exponent K.
    """
    n = out.shape[0]
    m = weights.shape[0]
    d1 = delta_p
    d2 = delta_p - delta_s
    psi = psi0.copy()
    k = np.empty((3, 3), np.complex128)
    k2 = np.empty((3, 3), np.complex128)
    p = np.empty((3, 3), np.complex128)
    q = np.empty((3, 3), np.complex128)
    c2 = cm * dt * dt
    hd = 0.5 * dt
    for step in range(n):
        r00 = 0.0
        r11 = 0.0
        r22 = 0.0
        r01 = 0j
        r02 = 0j
        r12 = 0j
        for j in range(m):
            x0 = psi[j, 0]
            x1 = psi[j, 1]
            x2 = psi[j, 2]
            w = weights[j]
            r00 += w * (x0.real * x0.real + x0.imag * x0.imag)
            r11 += w * (x1.real * x1.real + x1.imag * x1.imag)
            r22 += w * (x2.real * x2.real + x2.imag * x2.imag)
            r01 += w * (x0 * np.conj(x1))
            r02 += w * (x0 * np.conj(x2))
            r12 += w * (x1 * np.conj(x2))
        out[step, 0] = r00
        out[step, 1] = r01
        out[step, 2] = r02
        out[step, 3] = r11
        out[step, 4] = r12
        out[step, 5] = r22
        if step == n - 1:
            break
        a1 = g1p[step]
        b1 = g1s[step]
        a2 = g2p[step]
        b2 = g2s[step]
        # M = H2 H1 for the tridiagonal H; the commutator is M - M^dagger
        m00 = a2 * np.conj(a1)
        m01 = a2 * d1
        m02 = a2 * b1
        m10 = d1 * np.conj(a1)
        m11 = np.conj(a2) * a1 + d1 * d1 + b2 * np.conj(b1)
        m12 = d1 * b1 + b2 * d2
        m20 = np.conj(b2) * np.conj(a1)
        m21 = np.conj(b2) * d1 + d2 * np.conj(b1)
        m22 = np.conj(b2) * b1 + d2 * d2
        k[0, 0] = 2.0 * c2 * m00.imag
        k[1, 1] = 2.0 * hd * d1 + 2.0 * c2 * m11.imag
        k[2, 2] = 2.0 * hd * d2 + 2.0 * c2 * m22.imag
        k[0, 1] = hd * (a1 + a2) - 1j * c2 * (m01 - np.conj(m10))
        k[0, 2] = -1j * c2 * (m02 - np.conj(m20))
        k[1, 2] = hd * (b1 + b2) - 1j * c2 * (m12 - np.conj(m21))
        k[1, 0] = np.conj(k[0, 1])
        k[2, 0] = np.conj(k[0, 2])
        k[2, 1] = np.conj(k[1, 2])
        for i in range(3):
            for j in range(3):
                k2[i, j] = k[i, 0] * k[0, j] + k[i, 1] * k[1, j] + k[i, 2] * k[2, j]
        for i in range(3):
            for j in range(3):
                e = 1.0 if i == j else 0.0
                p[i, j] = e - 0.5j * k[i, j] - k2[i, j] / 12.0
                q[i, j] = e + 0.5j * k[i, j] - k2[i, j] / 12.0
        c00 = q[1, 1] * q[2, 2] - q[1, 2] * q[2, 1]
        c01 = q[1, 2] * q[2, 0] - q[1, 0] * q[2, 2]
        c02 = q[1, 0] * q[2, 1] - q[1, 1] * q[2, 0]
        idet = 1.0 / (q[0, 0] * c00 + q[0, 1] * c01 + q[0, 2] * c02)
        i00 = c00 * idet
        i10 = c01 * idet
        i20 = c02 * idet
        i01 = (q[0, 2] * q[2, 1] - q[0, 1] * q[2, 2]) * idet
        i11 = (q[0, 0] * q[2, 2] - q[0, 2] * q[2, 0]) * idet
        i21 = (q[0, 1] * q[2, 0] - q[0, 0] * q[2, 1]) * idet
        i02 = (q[0, 1] * q[1, 2] - q[0, 2] * q[1, 1]) * idet
        i12 = (q[0, 2] * q[1, 0] - q[0, 0] * q[1, 2]) * idet
        i22 = (q[0, 0] * q[1, 1] - q[0, 1] * q[1, 0]) * idet
        for j in range(m):
            x0 = psi[j, 0]
            x1 = psi[j, 1]
            x2 = psi[j, 2]
            v0 = p[0, 0] * x0 + p[0, 1] * x1 + p[0, 2] * x2
            v1 = p[1, 0] * x0 + p[1, 1] * x1 + p[1, 2] * x2
            v2 = p[2, 0] * x0 + p[2, 1] * x1 + p[2, 2] * x2
            psi[j, 0] = i00 * v0 + i01 * v1 + i02 * v2
            psi[j, 1] = i10 * v0 + i11 * v1 + i12 * v2
            psi[j, 2] = i20 * v0 + i21 * v1 + i22 * v2


METHODS = ("magnus4", "rk4")


def spectral_components(initial: "DensityMatrix"):
    """rho = sum_k w_k |psi_k><psi_k| with w_k > 0; a pure state gives one term."""
    rho = initial.rho
    # a pure basis state needs no diagonalisation (keeps the common case exact)
    diag = np.real(np.diag(rho))
    if np.count_nonzero(rho) == 1 and np.isclose(diag.sum(), 1.0):
        psi = np.zeros((1, 3), complex)
        psi[0, int(np.argmax(diag))] = 1.0
        return np.array([1.0]), psi
    w, v = np.linalg.eigh(0.5 * (rho + rho.conj().T))
    keep = w > 1e-15
    return np.ascontiguousarray(w[keep]), np.ascontiguousarray(v[:, keep].T)


class Integrator:
    """Reusable work buffers for repeated solves on one time grid."""

    def __init__(self, n_t: int, delta_p: float, delta_s: float, dt: float,
                 initial: "DensityMatrix", method: str = "magnus4"):
        if method not in METHODS:
            raise ValueError(f"unknown integrator {method!r}; choose from {METHODS}")
        if n_t < 3:
            raise ValueError("time grid needs at least 3 samples")
        self.method = method
        self.delta_p = float(delta_p)
        self.delta_s = float(delta_s)
        self.dt = float(dt)
        self.y0 = initial.packed()
        self.weights, self.psi0 = spectral_components(initial)
        self.buf = [np.empty(n_t - 1, complex) for _ in range(4)]
        self.out = np.empty((n_t, 6), complex)

    def run(self, omega_p: np.ndarray, omega_s: np.ndarray) -> np.ndarray:
        """Packed trajectory (n_t, 6); the returned buffer is reused."""
        b = self.buf
        if self.method == "magnus4":
            _half_envelope_at(omega_p, *_W_G1, b[0])
            _half_envelope_at(omega_s, *_W_G1, b[1])
            _half_envelope_at(omega_p, *_W_G2, b[2])
            _half_envelope_at(omega_s, *_W_G2, b[3])
            magnus4_kernel(self.delta_p, self.delta_s, self.dt, self.weights, self.psi0,
                           self.out, b[0], b[1], b[2], b[3], _MAGNUS_C)
        else:
            _half_envelope_at(omega_p, *_W_MID, b[0])
            _half_envelope_at(omega_s, *_W_MID, b[1])
            rk4_kernel(omega_p, omega_s, self.delta_p, self.delta_s, self.dt,
                       self.y0, self.out, b[0], b[1])
        return self.out


def unpack(packed: np.ndarray) -> np.ndarray:
    """(n, 6) packed upper triangles -> (n, 3, 3) Hermitian matrices."""
    n = packed.shape[0]
    rho = np.empty((n, 3, 3), complex)
    for col, (i, j) in enumerate(PACKED):
        rho[:, i, j] = packed[:, col]
        if i != j:
            rho[:, j, i] = np.conj(packed[:, col])
    return rho


def solve_sampled(
    omega_p: np.ndarray,
    omega_s: np.ndarray,
    delta_p: float,
    delta_s: float,
    times: np.ndarray,
    initial: DensityMatrix | None = None,
    method: str = "magnus4",
) -> BlochTrajectory:
    """Integrate over envelopes already sampled on the uniform grid ``times``."""
    initial = DensityMatrix.ground() if initial is None else initial
    omega_p = np.ascontiguousarray(omega_p, dtype=complex)
    omega_s = np.ascontiguousarray(omega_s, dtype=complex)
    dt = (times[-1] - times[0]) / (len(times) - 1)
    out = Integrator(len(times), delta_p, delta_s, dt, initial, method).run(omega_p, omega_s)
    if not np.all(np.isfinite(out)):
        bad = int(np.argmax(~np.isfinite(out).all(axis=1)))
        raise NumericalError(f"non-finite density matrix at time index {bad}")
    return BlochTrajectory(np.asarray(times, dtype=float), unpack(out))


def sample_envelopes(pump: PulseSpec, stokes: PulseSpec, times: np.ndarray):
    return (
        gaussian_envelope(times, pump).astype(complex),
        gaussian_envelope(times, stokes).astype(complex),
    )


def solve_bloch(
    pump: PulseSpec,
    stokes: PulseSpec,
    grid: SimGrid,
    initial: DensityMatrix | None = None,
    check_convergence: bool = True,
    tolerance: float = 1e-6,
    method: str = "magnus4",
) -> BlochTrajectory:
    """Bloch trajectory for analytic Gaussian pulses on ``grid``.

    With ``check_convergence`` the run is repeated at half the time step and a
    NumericalError is raised when any rho_ij moves by more than ``tolerance``.
    """
    if initial is not None:
        initial.validate()
    times = grid.times
    wp, ws = sample_envelopes(pump, stokes, times)
    traj = solve_sampled(wp, ws, pump.detuning, stokes.detuning, times, initial, method)
    if check_convergence:
        change = step_halving_change(pump, stokes, grid, traj, initial, method)
        if change > tolerance:
            raise NumericalError(
                f"time grid too coarse: halving dt changes rho by {change:.3g} "
                f"> tolerance {tolerance:g} (n_t={grid.n_t})"
            )
    return traj


def step_halving_change(pump, stokes, grid, traj, initial=None, method="magnus4") -> float:
    """max |rho_ij| change when the same pulses are solved with dt / 2."""
    fine = grid.refined()
    wp, ws = sample_envelopes(pump, stokes, fine.times)
    ref = solve_sampled(wp, ws, pump.detuning, stokes.detuning, fine.times, initial, method)
    return float(np.max(np.abs(ref.states[::2] - traj.states)))


def coherence_13(traj: BlochTrajectory) -> np.ndarray:
    """Complex rho_13(t)."""
    return traj.states[:, 0, 2].copy()
