"""Truncated two-sector occupation basis and the Yukawa Hamiltonian on it.

Nucleon modes are the lowest eigenfunctions ``phi_p`` of ``-Lap + V`` on the
position grid; meson modes are single momentum nodes ``k_q`` with the grid
weight, so that ``beta_q = sqrt(dk) z(k_q)``.  Creation and annihilation
operators are scaled by ``sqrt(hbar)``, i.e. ``[b_q, b_q^*] = hbar``.

With ``G[p, p', q] = sqrt(dk) omega_q^(-1/2) chi_q sum_x dx conj(phi_p) phi_p' exp(i k_q x)``
the Hamiltonian is

    H = sum_p e_p c_p^* c_p + sum_q omega_q b_q^* b_q
        + sum_{p p' q} c_p^* c_p' (G[p, p', q] b_q^* + conj(G[p', p, q]) b_q),

whose classical symbol is the mode-truncated energy functional.
"""
from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from ..model import GridPair, TestDictionary

MAX_DIMENSION = 5_000_000


class TruncationError(ValueError):
    """The occupation caps are too small for the requested state."""


class DimensionError(ValueError):
    pass


def occupations(modes: int, cap: int, exact: bool = False) -> list[tuple[int, ...]]:
    """Lexicographically ordered occupation tuples with total ``<= cap`` (``== cap`` if exact)."""
    out = [occ for occ in itertools.product(range(cap + 1), repeat=modes) if (sum(occ) == cap if exact else sum(occ) <= cap)]
    return out


def sector_size(modes: int, cap: int, exact: bool = False) -> int:
    if exact:
        return math.comb(cap + modes - 1, modes - 1)
    return math.comb(cap + modes, modes)


def select_meson_nodes(grids: GridPair, count: int, centre: float, half_width: float) -> np.ndarray:
    """Grid indices of ``count`` distinct nodes at the dictionary support centres.

    Targets alternate between ``+centre`` and ``-centre`` and then spread by
    ``half_width / 3`` steps, always snapping to the nearest unused node
    inside the coupling support.
    """
    chosen: list[int] = []
    allowed = np.nonzero(grids.chi > 0)[0]
    level = 0
    while len(chosen) < count:
        offs = [0.0] if level == 0 else [level * half_width / 3.0, -level * half_width / 3.0]
        for off in offs:
            for sign in (+1.0, -1.0):
                if len(chosen) >= count:
                    break
                target = sign * (centre + off)
                cand = [j for j in allowed if j not in chosen]
                if not cand:
                    raise DimensionError("not enough momentum nodes inside the coupling support")
                j = min(cand, key=lambda i: abs(grids.k[i] - target))
                chosen.append(int(j))
        level += 1
    return np.array(chosen)


@dataclass
class FockSpec:
    grids: GridPair
    hbar: float
    nucleon_modes: int
    meson_nodes: np.ndarray
    nucleon_cap: int
    meson_cap: int
    sector: int | None = None  # fixed nucleon number, or None for all totals <= nucleon_cap
    energies: np.ndarray = field(init=False)
    modes: np.ndarray = field(init=False)  # nucleon mode functions, rows
    k: np.ndarray = field(init=False)
    omega: np.ndarray = field(init=False)
    coupling: np.ndarray = field(init=False)  # G[p, p', q]
    nucleon_basis: list = field(init=False)
    meson_basis: list = field(init=False)

    def __post_init__(self):
        if self.hbar <= 0:
            raise ValueError("hbar must be positive")
        g = self.grids
        self.meson_nodes = np.asarray(self.meson_nodes, dtype=int)
        self.energies, self.modes = g.lowest_modes(self.nucleon_modes)
        self.k = g.k[self.meson_nodes]
        self.omega = g.omega[self.meson_nodes]
        chi = g.chi[self.meson_nodes]
        phase = np.exp(1j * np.outer(self.k, g.x))  # (M, N)
        dens = np.conj(self.modes)[:, None, :] * self.modes[None, :, :]  # (p, p', x)
        self.coupling = np.sqrt(g.dk) * (chi / np.sqrt(self.omega)) * g.dx * np.einsum("abx,qx->abq", dens, phase)
        n1 = sector_size(self.nucleon_modes, self.sector if self.sector is not None else self.nucleon_cap, self.sector is not None)
        n2 = sector_size(len(self.meson_nodes), self.meson_cap)
        if n1 * n2 > MAX_DIMENSION:
            raise DimensionError(
                f"basis dimension {n1 * n2} exceeds {MAX_DIMENSION}; reduce caps, modes or raise hbar"
            )
        if self.sector is not None:
            self.nucleon_basis = occupations(self.nucleon_modes, self.sector, exact=True)
        else:
            self.nucleon_basis = occupations(self.nucleon_modes, self.nucleon_cap)
        self.meson_basis = occupations(len(self.meson_nodes), self.meson_cap)

    @property
    def n_meson(self) -> int:
        return len(self.meson_nodes)

    @property
    def dims(self) -> tuple[int, int]:
        return len(self.nucleon_basis), len(self.meson_basis)

    @property
    def dim(self) -> int:
        a, b = self.dims
        return a * b

    def project_u(self, u: np.ndarray) -> np.ndarray:
        """Nucleon mode amplitudes ``alpha_p = <phi_p, u>``."""
        return self.grids.dx * (np.conj(self.modes) @ u)

    def project_z(self, z: np.ndarray) -> np.ndarray:
        """Meson mode amplitudes ``beta_q = sqrt(dk) z(k_q)``."""
        return np.sqrt(self.grids.dk) * np.asarray(z)[self.meson_nodes]

    def project_xi(self, xi: np.ndarray) -> np.ndarray:
        return self.project_z(xi)

    def lift_u(self, alpha: np.ndarray) -> np.ndarray:
        return alpha @ self.modes

    def lift_z(self, beta: np.ndarray) -> np.ndarray:
        z = np.zeros(self.grids.n, dtype=complex)
        z[self.meson_nodes] = beta / np.sqrt(self.grids.dk)
        return z


def required_cap(mean: float, tail: float = 1e-10, floor: int = 2) -> int:
    """Smallest cap with Poisson tail below ``tail`` and at least ``4 * mean``."""
    cap = max(floor, int(math.ceil(4.0 * mean)))
    while True:
        # Poisson tail P(N > cap)
        p = math.exp(-mean)
        term, acc = p, p
        for n in range(1, cap + 1):
            term *= mean / n
            acc += term
        if 1.0 - acc < tail:
            return cap
        cap += 1


def make_spec(
    grids: GridPair,
    hbar: float,
    dictionary: TestDictionary | None = None,
    nucleon_modes: int = 4,
    meson_modes: int = 3,
    nucleon_cap: int | None = None,
    meson_cap: int | None = None,
    sector: int | None = None,
    u: np.ndarray | None = None,
    z: np.ndarray | None = None,
) -> FockSpec:
    """Build a spec, choosing caps from the coherent preparation ``(u, z)`` when not given."""
    if dictionary is not None:
        centre = 0.5 * (dictionary.inner_radius + dictionary.outer_radius)
        half = 0.5 * (dictionary.outer_radius - dictionary.inner_radius)
    else:
        centre, half = 1.2, 0.7
    nodes = select_meson_nodes(grids, meson_modes, centre, half)
    mass_u = 0.0 if u is None else grids.norm_x(u) ** 2
    mass_z = 0.0 if z is None else grids.norm_k(z) ** 2
    if nucleon_cap is None and sector is None:
        nucleon_cap = required_cap(mass_u / hbar)
    if meson_cap is None:
        meson_cap = required_cap(mass_z / hbar + 0.05 / hbar, floor=3)
    elif z is not None and meson_cap < math.ceil(4 * mass_z / hbar):
        warnings.warn("meson cap below 4x the expected number of quanta", RuntimeWarning, stacklevel=2)
    return FockSpec(grids, hbar, nucleon_modes, nodes, nucleon_cap or 0, meson_cap, sector)


# operators -------------------------------------------------------------------


def _index(basis: list[tuple[int, ...]]) -> dict:
    return {occ: i for i, occ in enumerate(basis)}


def hopping_matrix(basis: list[tuple[int, ...]], p: int, pp: int) -> sp.csr_matrix:
    """Unscaled ``c_p^* c_pp`` on a nucleon-number-conserving basis."""
    idx = _index(basis)
    rows, cols, vals = [], [], []
    for j, occ in enumerate(basis):
        if occ[pp] == 0:
            continue
        new = list(occ)
        amp = math.sqrt(new[pp])
        new[pp] -= 1
        amp *= math.sqrt(new[p] + 1)
        new[p] += 1
        i = idx.get(tuple(new))
        if i is not None:
            rows.append(i)
            cols.append(j)
            vals.append(amp)
    n = len(basis)
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n), dtype=complex)


def lowering_matrix(basis: list[tuple[int, ...]], q: int) -> sp.csr_matrix:
    """Unscaled annihilator of mode ``q``; states leaving the basis are dropped."""
    idx = _index(basis)
    rows, cols, vals = [], [], []
    for j, occ in enumerate(basis):
        if occ[q] == 0:
            continue
        new = list(occ)
        new[q] -= 1
        i = idx.get(tuple(new))
        if i is not None:
            rows.append(i)
            cols.append(j)
            vals.append(math.sqrt(occ[q]))
    n = len(basis)
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n), dtype=complex)


def number_diag(basis: list[tuple[int, ...]], weights: np.ndarray | None = None) -> np.ndarray:
    occ = np.array(basis, dtype=float).reshape(len(basis), -1)
    if weights is None:
        return occ.sum(axis=1)
    return occ @ np.asarray(weights, dtype=float)


@dataclass
class SparseOperator:
    """A sparse matrix with a sampled hermiticity check."""

    matrix: sp.csr_matrix
    hermitian: bool = False

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def __matmul__(self, v):
        return self.matrix @ v

    @classmethod
    def build(cls, matrix, hermitian: bool = True, samples: int = 200, seed: int = 0, tol: float = 1e-12) -> "SparseOperator":
        m = sp.csr_matrix(matrix)
        if hermitian:
            coo = m.tocoo()
            if coo.nnz:
                rng = np.random.default_rng(seed)
                pick = rng.integers(0, coo.nnz, size=min(samples, coo.nnz))
                for t in pick:
                    i, j, v = coo.row[t], coo.col[t], coo.data[t]
                    if abs(m[j, i] - np.conj(v)) > tol * max(1.0, abs(v)):
                        raise ValueError(f"operator not Hermitian at ({i}, {j})")
        return cls(m, hermitian)


@dataclass
class Operators:
    spec: FockSpec
    H: SparseOperator
    H0: SparseOperator
    N1: SparseOperator
    N2: SparseOperator
    hopping: dict  # (p, p') -> scaled c_p^* c_p' on the full space
    lowering: list  # scaled b_q on the full space


def build_hamiltonian(spec: FockSpec) -> Operators:
    hb = spec.hbar
    nb, mb = spec.nucleon_basis, spec.meson_basis
    d1, d2 = len(nb), len(mb)
    i1, i2 = sp.identity(d1, dtype=complex, format="csr"), sp.identity(d2, dtype=complex, format="csr")
    h0 = hb * sp.kron(sp.diags(number_diag(nb, spec.energies)), i2) + hb * sp.kron(i1, sp.diags(number_diag(mb, spec.omega)))
    n1 = hb * sp.kron(sp.diags(number_diag(nb)), i2)
    n2 = hb * sp.kron(i1, sp.diags(number_diag(mb)))
    low = [lowering_matrix(mb, q) for q in range(spec.n_meson)]
    hop = {}
    hint = sp.csr_matrix((d1 * d2, d1 * d2), dtype=complex)
    G = spec.coupling
    for p in range(spec.nucleon_modes):
        for pp in range(spec.nucleon_modes):
            e = hopping_matrix(nb, p, pp)
            hop[(p, pp)] = hb * sp.kron(e, i2, format="csr")
            field_op = sp.csr_matrix((d2, d2), dtype=complex)
            for q in range(spec.n_meson):
                field_op = field_op + G[p, pp, q] * low[q].T + np.conj(G[pp, p, q]) * low[q]
            if field_op.nnz and e.nnz:
                hint = hint + hb**1.5 * sp.kron(e, field_op, format="csr")
    H = (h0 + hint).tocsr()
    lowering = [np.sqrt(hb) * sp.kron(i1, b, format="csr") for b in low]
    return Operators(
        spec,
        SparseOperator.build(H),
        SparseOperator.build(h0),
        SparseOperator.build(n1),
        SparseOperator.build(n2),
        hop,
        lowering,
    )


def commutator_norm(A: SparseOperator, B: SparseOperator, samples: int = 50, seed: int = 0) -> float:
    """Largest ``||[A, B] v||`` over random unit vectors ``v``."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(samples):
        v = rng.normal(size=A.dim) + 1j * rng.normal(size=A.dim)
        v /= np.linalg.norm(v)
        worst = max(worst, float(np.linalg.norm(A @ (B @ v) - B @ (A @ v))))
    return worst


# states ----------------------------------------------------------------------


@dataclass
class QuantumState:
    vector: np.ndarray
    spec: FockSpec
    sector: str = "full"

    def norm(self) -> float:
        return float(np.linalg.norm(self.vector))

    def expect(self, op) -> complex:
        m = op.matrix if isinstance(op, SparseOperator) else op
        return complex(np.vdot(self.vector, m @ self.vector))


def vacuum(spec: FockSpec) -> QuantumState:
    v = np.zeros(spec.dim, dtype=complex)
    if spec.sector not in (None, 0):
        raise ValueError("the vacuum is not in a nonzero fixed sector")
    v[0] = 1.0
    return QuantumState(v, spec)


def basis_state(spec: FockSpec, nucleon: tuple[int, ...], meson: tuple[int, ...] | None = None) -> QuantumState:
    meson = meson or (0,) * spec.n_meson
    i1 = spec.nucleon_basis.index(tuple(nucleon))
    i2 = spec.meson_basis.index(tuple(meson))
    v = np.zeros(spec.dim, dtype=complex)
    v[i1 * len(spec.meson_basis) + i2] = 1.0
    return QuantumState(v, spec, "full" if spec.sector is None else f"n={spec.sector}")


def _coherent_factor(basis: list[tuple[int, ...]], amps: np.ndarray) -> np.ndarray:
    occ = np.array(basis, dtype=int).reshape(len(basis), -1)
    out = np.full(len(basis), np.exp(-0.5 * float(np.sum(np.abs(amps) ** 2))), dtype=complex)
    for m, a in enumerate(amps):
        n = occ[:, m]
        logf = np.array([math.lgamma(k + 1) for k in n])
        out *= np.power(a, n) * np.exp(-0.5 * logf)
    return out


def coherent_state(spec: FockSpec, u: np.ndarray, z: np.ndarray, captured_tol: float = 1e-8) -> QuantumState:
    """Truncated coherent state with mode amplitudes ``<phi_p, u>`` and ``sqrt(dk) z(k_q)``.

    In a fixed nucleon sector the coherent state is projected onto that sector
    and renormalized.
    """
    a = spec.project_u(u) / np.sqrt(spec.hbar)
    b = spec.project_z(z) / np.sqrt(spec.hbar)
    fa = _coherent_factor(spec.nucleon_basis, a)
    fb = _coherent_factor(spec.meson_basis, b)
    vec = np.kron(fa, fb)
    captured = float(np.vdot(vec, vec).real)
    if spec.sector is None:
        if captured < 1.0 - captured_tol:
            need_u = required_cap(float(np.sum(np.abs(a) ** 2)), tail=captured_tol / 10)
            need_z = required_cap(float(np.sum(np.abs(b) ** 2)), tail=captured_tol / 10)
            raise TruncationError(
                f"caps capture only {captured:.3e} of the norm; suggested nucleon_cap>={need_u}, meson_cap>={need_z}"
            )
    else:
        mesons = float(np.vdot(fb, fb).real)
        if mesons < 1.0 - captured_tol:
            need_z = required_cap(float(np.sum(np.abs(b) ** 2)), tail=captured_tol / 10)
            raise TruncationError(f"meson cap captures only {mesons:.3e}; suggested meson_cap>={need_z}")
        if captured == 0.0:
            raise TruncationError("coherent state has no weight in the requested sector")
    vec /= np.sqrt(captured)
    return QuantumState(vec, spec, "full" if spec.sector is None else f"n={spec.sector}")
