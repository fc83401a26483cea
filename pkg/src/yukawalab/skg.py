"""Classical nucleon-meson flow: energy, source terms and the split-step integrator.

The state is a pair ``(u, z)``: ``u`` samples the nucleon field on the
position grid and ``z`` samples the meson field on the momentum grid.  The
flow is generated by

    E(u, z) = <u, (-Lap + V) u> + <z, omega z> + 2 Re <z, F(u)>,

where ``F(u)(k) = omega^(-1/2) chi(k) sum_x dx exp(i k x) |u(x)|^2`` is the
meson source.  The nucleon feels the real potential ``phi(z)`` with
``<u, phi u> = 2 Re <z, F(u)>``.
"""
from __future__ import annotations

import struct
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .model import SQRT_2PI, GridPair


class NumericalBlowup(FloatingPointError):
    """Non-finite values appeared during time stepping."""

    def __init__(self, message: str, last_good: "ClassicalState | None" = None):
        super().__init__(message)
        self.last_good = last_good


class BoundaryMassWarning(RuntimeWarning):
    pass


@dataclass
class ClassicalState:
    u: np.ndarray
    z: np.ndarray
    t: float = 0.0

    def copy(self) -> "ClassicalState":
        return ClassicalState(self.u.copy(), self.z.copy(), self.t)


def random_state(grids: GridPair, rng: np.random.Generator, delta: float = 0.5, meson_scale: float = 0.1, modes: int = 6) -> ClassicalState:
    """Generic smooth state: random low eigenmode mix of mass ``delta^2`` and a random meson bump.

    The meson part is ``meson_scale`` times a random complex combination of
    ``chi`` modulated by low-order polynomials in ``k``, normalized in the
    momentum norm.
    """
    _, vecs = grids.lowest_modes(modes)
    c = rng.normal(size=modes) + 1j * rng.normal(size=modes)
    u = c @ vecs
    u *= delta / grids.norm_x(u)
    z = np.zeros(grids.n, complex)
    if meson_scale and np.any(grids.chi):
        kk = grids.k / max(np.abs(grids.k[grids.chi > 0]).max(), 1e-300)
        a = rng.normal(size=3) + 1j * rng.normal(size=3)
        z = grids.chi * (a[0] + a[1] * kk + a[2] * kk**2)
        z *= meson_scale / grids.norm_k(z)
    return ClassicalState(u, z, 0.0)


def mass(grids: GridPair, u: np.ndarray) -> float:
    return grids.norm_x(u) ** 2


def coupling_density(grids: GridPair, u: np.ndarray) -> np.ndarray:
    """``sum_x dx exp(i k x) |u(x)|^2`` on the momentum grid."""
    return SQRT_2PI * np.conj(grids.to_momentum(np.abs(u) ** 2))


def source_term(grids: GridPair, u: np.ndarray) -> np.ndarray:
    """Meson source ``omega^(-1/2) chi * coupling_density(u)``."""
    return grids.chi / np.sqrt(grids.omega) * coupling_density(grids, u)


def meson_potential(grids: GridPair, z: np.ndarray) -> np.ndarray:
    """Real potential ``2 Re sum_k dk exp(-i k x) omega^(-1/2) chi z`` seen by the nucleon."""
    a = grids.chi / np.sqrt(grids.omega) * z
    return 2.0 * SQRT_2PI * grids.to_position(np.conj(a)).real


def pair_convolution(grids: GridPair, rho: np.ndarray) -> np.ndarray:
    """``(W * rho)(x)`` for the meson-mediated pair potential ``W(r) = sum_k dk chi^2/omega^2 exp(ikr)``.

    The convolution is the periodic one implied by the grid.
    """
    a = grids.chi**2 / grids.omega**2 * SQRT_2PI * np.conj(grids.to_momentum(rho))
    return SQRT_2PI * grids.to_position(np.conj(a)).real


def pair_potential(grids: GridPair, r: np.ndarray) -> np.ndarray:
    """Sample ``W(r)`` directly by quadrature over the momentum grid."""
    r = np.atleast_1d(np.asarray(r, dtype=float))
    w = grids.dk * grids.chi**2 / grids.omega**2
    return (np.cos(np.outer(r, grids.k)) @ w).real


class EnergyReport(NamedTuple):
    total: float
    free: float
    interaction: float
    mass: float


def energy(grids: GridPair, state: ClassicalState) -> EnergyReport:
    """Total energy, non-interacting part, interaction part and mass."""
    u, z = state.u, state.z
    uh = grids.to_momentum(u)
    kinetic = grids.dk * float(np.sum(grids.k**2 * np.abs(uh) ** 2))
    potential = grids.dx * float(np.sum(grids.V * np.abs(u) ** 2))
    field_e = grids.dk * float(np.sum(grids.omega * np.abs(z) ** 2))
    inter = 2.0 * grids.inner_k(z, source_term(grids, u)).real
    free = kinetic + potential + field_e
    return EnergyReport(free + inter, free, inter, mass(grids, u))


def total_energy(grids: GridPair, state: ClassicalState) -> float:
    return energy(grids, state).total


def rhs(grids: GridPair, state: ClassicalState) -> tuple[np.ndarray, np.ndarray]:
    """Time derivatives ``(du/dt, dz/dt)`` of the continuous-time flow."""
    u, z = state.u, state.z
    du = -1j * (grids.apply_h(u) + meson_potential(grids, z) * u)
    dz = -1j * (grids.omega * z + source_term(grids, u))
    return du, dz


def rayleigh_quotient(grids: GridPair, u: np.ndarray) -> float:
    """Multiplier estimate ``<u, (h - 2 W*|u|^2) u> / ||u||^2``."""
    hu = grids.apply_h(u) - 2.0 * pair_convolution(grids, np.abs(u) ** 2) * u
    return grids.inner_x(u, hu).real / grids.norm_x(u) ** 2


def stationary_residual(grids: GridPair, state: ClassicalState, lam: float | None = None) -> tuple[float, float]:
    """Relative residuals of the stationary system.

    ``r_u = ||(-Lap + V) u - 2 (W*|u|^2) u - lam u|| / ||u||`` and
    ``r_z = ||omega z + F(u)|| / max(||z||, 1)``.  ``lam`` defaults to the
    Rayleigh quotient.
    """
    u, z = state.u, state.z
    nu = grids.norm_x(u)
    if nu == 0:
        r_u = 0.0
    else:
        if lam is None:
            lam = rayleigh_quotient(grids, u)
        r1 = grids.apply_h(u) - 2.0 * pair_convolution(grids, np.abs(u) ** 2) * u - lam * u
        r_u = grids.norm_x(r1) / nu
    r2 = grids.omega * z + source_term(grids, u)
    return r_u, grids.norm_k(r2) / max(grids.norm_k(z), 1.0)


@dataclass
class FlowConfig:
    dt: float = 1e-3
    stride: int = 100
    check_finite: bool = True
    boundary_threshold: float = 1e-8


@dataclass
class Trajectory:
    """Samples of a run at stride points plus per-step pairing integrands."""

    times: np.ndarray
    mass: np.ndarray
    energy: np.ndarray
    boundary: np.ndarray
    snapshots: list[ClassicalState]
    step_times: np.ndarray | None = None
    integrands: np.ndarray | None = None  # shape (n_xi, n_steps + 1)
    warnings: list[str] = field(default_factory=list)

    @property
    def final(self) -> ClassicalState:
        return self.snapshots[-1]

    @property
    def energy0(self) -> float:
        return float(self.energy[0])

    def max_energy_drift(self) -> float:
        return float(np.max(np.abs(self.energy - self.energy[0])) / max(abs(self.energy[0]), 1e-300))

    def max_mass_drift(self) -> float:
        return float(np.max(np.abs(self.mass - self.mass[0])) / max(self.mass[0], 1e-300))


class SplitStepper:
    """Symmetric split-step integrator for the coupled flow.

    Each step applies a half kinetic step on ``u``, a half exact step of the
    meson equation with frozen source, a full potential phase on ``u``, the
    mirrored half meson step, and a final half kinetic step.  The phase step
    leaves ``|u|^2`` unchanged, so one source evaluation serves both meson
    half-steps.  Negative ``dt`` integrates backward in time.
    """

    def __init__(self, grids: GridPair, dt: float):
        self.grids = grids
        self.dt = dt
        h = 0.5 * dt
        n = grids.n
        # sorted index s (k_j with j = s - n/2) lives at raw FFT index j mod n
        self.order = (np.arange(n) - n // 2) % n
        # kinetic multiplier in raw FFT ordering; unit modulus enforced so that
        # repeated application does not bias the mass
        kin = np.fft.ifftshift(np.exp(-1j * h * grids.k**2))
        self.kin_half = kin / np.abs(kin)
        self.field_half = np.exp(-1j * h * grids.omega)
        self.field_src = -(1.0 - self.field_half) / grids.omega
        form = grids.chi / np.sqrt(grids.omega)
        # F = form * dx * (-1)^j * conj(fft(|u|^2))[raw index]
        self.src_coef = form * grids.dx * grids.sign
        # phi = 2 dk Re fft(c) with c[raw index] = (-1)^j form z
        self.pot_coef = form * grids.sign
        self.reference_mass: float | None = None  # sum |u|^2 to restore after each step
        self.decoupled = not np.any(grids.chi)
        if self.decoupled:
            # without coupling the nucleon flow is linear; use its exact propagator
            vals, vecs = np.linalg.eigh(grids.h_matrix())
            self.linear_prop = (vecs * np.exp(-1j * dt * vals)) @ vecs.conj().T
            self.field_full = np.exp(-1j * dt * grids.omega)

    def source(self, u: np.ndarray) -> np.ndarray:
        rho = u.real**2 + u.imag**2
        return self.src_coef * np.conj(np.fft.fft(rho))[self.order]

    def potential(self, z: np.ndarray) -> np.ndarray:
        c = np.empty_like(z)
        c[self.order] = self.pot_coef * z
        return (2.0 * self.grids.dk) * np.fft.fft(c).real

    def step(self, u: np.ndarray, z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        g = self.grids
        if self.decoupled:
            return self.linear_prop @ u, self.field_full * z
        m_in = self.reference_mass if self.reference_mass is not None else np.vdot(u, u).real
        u = np.fft.ifft(self.kin_half * np.fft.fft(u))
        src = self.field_src * self.source(u)
        z = self.field_half * z + src
        phase = self.dt * (g.V + self.potential(z))
        u = (np.cos(phase) - 1j * np.sin(phase)) * u
        z = self.field_half * z + src
        u = np.fft.ifft(self.kin_half * np.fft.fft(u))
        # every substep is unitary on u; remove the rounding bias of the FFTs
        m_out = np.vdot(u, u).real
        if m_out > 0:
            u *= np.sqrt(m_in / m_out)
        return u, z


def pairing_integrand(grids: GridPair, xis: np.ndarray, u: np.ndarray, t: float) -> np.ndarray:
    """``<xi, exp(i t omega) F(u)>`` for each row of ``xis``."""
    src = np.exp(1j * t * grids.omega) * source_term(grids, u)
    return grids.dk * (np.conj(xis) @ src)


class PairingRecorder:
    """Fast evaluation of :func:`pairing_integrand` restricted to the coupling support."""

    def __init__(self, grids: GridPair, xis: np.ndarray):
        xis = np.atleast_2d(xis)
        supp = np.nonzero(grids.chi)[0]
        n = grids.n
        self.raw = ((np.arange(n) - n // 2) % n)[supp]
        self.omega = grids.omega[supp]
        coef = grids.dk * grids.dx * grids.sign[supp] * grids.chi[supp] / np.sqrt(self.omega)
        self.weights = np.conj(xis[:, supp]) * coef

    def __call__(self, u: np.ndarray, t: float) -> np.ndarray:
        rho = u.real**2 + u.imag**2
        dens = np.conj(np.fft.fft(rho)[self.raw])
        return self.weights @ (np.exp(1j * t * self.omega) * dens)


def evolve(
    grids: GridPair,
    state0: ClassicalState,
    horizon: float,
    config: FlowConfig | None = None,
    record: np.ndarray | None = None,
) -> Trajectory:
    """Integrate from ``state0.t`` over a signed time span ``horizon``.

    The sign of ``horizon`` selects the direction; ``config.dt`` is taken in
    absolute value.  If ``record`` is given (rows are test functions), the
    Cook integrand ``<xi, exp(i t omega) F(u(t))>`` is stored at every step.
    """
    config = config or FlowConfig()
    if config.dt == 0 or horizon == 0:
        raise ValueError("dt and horizon must be non-zero")
    support = grids.chi != 0
    if np.any(support) and abs(config.dt) * grids.omega[support].max() >= 1.0:
        warnings.warn("dt * max(omega on coupling support) >= 1", RuntimeWarning, stacklevel=2)
    n_steps = int(round(abs(horizon) / abs(config.dt)))
    if not np.isclose(n_steps * abs(config.dt), abs(horizon), rtol=1e-9, atol=1e-12):
        raise ValueError("horizon must be an integer multiple of dt")
    dt = np.sign(horizon) * abs(config.dt)
    stepper = SplitStepper(grids, dt)
    u, z = state0.u.astype(complex).copy(), state0.z.astype(complex).copy()
    stepper.reference_mass = float(np.vdot(u, u).real)
    t0 = state0.t

    times, masses, energies, bmass, snaps = [], [], [], [], []
    warns: list[str] = []

    def sample(n: int):
        st = ClassicalState(u.copy(), z.copy(), t0 + n * dt)
        times.append(st.t)
        masses.append(mass(grids, u))
        energies.append(total_energy(grids, st))
        b = grids.boundary_fraction(u)
        bmass.append(b)
        snaps.append(st)
        if b > config.boundary_threshold and not warns:
            msg = f"boundary mass fraction {b:.3e} exceeds {config.boundary_threshold:.1e} at t={st.t:.4g}"
            warns.append(msg)
            warnings.warn(msg, BoundaryMassWarning, stacklevel=3)

    integ = None
    if record is not None:
        record = np.atleast_2d(record)
        recorder = PairingRecorder(grids, record)
        integ = np.empty((record.shape[0], n_steps + 1), dtype=complex)
        integ[:, 0] = recorder(u, t0)
    sample(0)
    for n in range(1, n_steps + 1):
        u, z = stepper.step(u, z)
        if integ is not None:
            integ[:, n] = recorder(u, t0 + n * dt)
        if n % config.stride == 0 or n == n_steps:
            if config.check_finite and not (np.all(np.isfinite(u)) and np.all(np.isfinite(z))):
                raise NumericalBlowup(f"non-finite state at t={t0 + n * dt:.6g}", snaps[-1] if snaps else None)
            sample(n)
    return Trajectory(
        times=np.array(times),
        mass=np.array(masses),
        energy=np.array(energies),
        boundary=np.array(bmass),
        snapshots=snaps,
        step_times=t0 + dt * np.arange(n_steps + 1) if record is not None else None,
        integrands=integ,
        warnings=warns,
    )


def free_evolution(grids: GridPair, state: ClassicalState, t: float) -> ClassicalState:
    """Exact flow with the coupling switched off (dense exponential for the nucleon)."""
    vals, vecs = np.linalg.eigh(grids.h_matrix())
    coef = vecs.conj().T @ state.u
    u = vecs @ (np.exp(-1j * t * vals) * coef)
    z = np.exp(-1j * t * grids.omega) * state.z
    return ClassicalState(u, z, state.t + t)


# binary snapshots ------------------------------------------------------------

SNAPSHOT_MAGIC = b"SKGSNAP1"
_HEADER = struct.Struct("<8siidd")


def write_snapshots(path: str | Path, grids: GridPair, states: list[ClassicalState]) -> None:
    """Little-endian records: header (magic, d, N, L, t) then interleaved re/im of u and z."""
    with open(path, "wb") as fh:
        for st in states:
            fh.write(_HEADER.pack(SNAPSHOT_MAGIC, grids.params.dimension, grids.n, grids.L, st.t))
            fh.write(np.asarray(st.u, dtype="<c16").tobytes())
            fh.write(np.asarray(st.z, dtype="<c16").tobytes())


def read_snapshots(path: str | Path) -> list[ClassicalState]:
    out = []
    data = Path(path).read_bytes()
    pos = 0
    while pos < len(data):
        magic, _d, n, _L, t = _HEADER.unpack_from(data, pos)
        if magic != SNAPSHOT_MAGIC:
            raise ValueError(f"bad snapshot magic at byte {pos}")
        pos += _HEADER.size
        u = np.frombuffer(data, dtype="<c16", count=n, offset=pos).astype(complex)
        pos += 16 * n
        z = np.frombuffer(data, dtype="<c16", count=n, offset=pos).astype(complex)
        pos += 16 * n
        out.append(ClassicalState(u, z, t))
    return out
