"""Finite-horizon proxies of asymptotic Weyl, field and annihilation operators.

Along the interacting trajectory ``Psi(tau) = exp(-i tau H / hbar) Psi`` and the
free test-function path ``xi_tau = exp(-i tau omega) xi`` the Heisenberg
derivatives reduce to nucleon one-body operators ``dGamma(D(xi_tau))`` with

    D[p, p'] = sum_q (G[p, p', q] conj(x_q) - conj(G[p', p, q]) x_q) / (2i),
    x_q = sqrt(dk) xi_tau(k_q),

whose classical symbol is ``Im <xi_tau, S(alpha)>``.  Exact identities:

    d/dtau <W(xi_tau)>   = i sqrt(2) <W(xi_tau) dGamma(D(xi_tau))>,
    d/dtau <phi(xi_tau)> = 2 <dGamma(D(xi_tau))>,

so a horizon ``T`` proxy is the time-zero value plus the integral up to ``T``.
The direct value ``<Psi(T), W(xi_T) Psi(T)>`` is kept as an independent check.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.integrate import simpson

from ..scatter import fit_decay
from .fock import FockSpec, Operators, QuantumState, hopping_matrix, lowering_matrix
from .krylov import expm_apply

MAX_CORRELATION = 3


def mode_coefficients(spec: FockSpec, xi: np.ndarray) -> np.ndarray:
    """Meson-mode coefficients ``sqrt(dk) xi(k_q)`` of a momentum-space test function."""
    xi = np.asarray(xi)
    if xi.shape == (spec.n_meson,):
        return xi.astype(complex)
    return spec.project_xi(xi)


def free_path(spec: FockSpec, x: np.ndarray, tau: float) -> np.ndarray:
    return np.exp(-1j * tau * spec.omega) * x


def field_operator(ops: Operators, x: np.ndarray) -> sp.csr_matrix:
    """``phi(xi) = a^*(xi) + a(xi)`` with hbar-scaled meson operators."""
    out = sp.csr_matrix(ops.lowering[0].shape, dtype=complex)
    for q, b in enumerate(ops.lowering):
        out = out + x[q] * b.conj().T + np.conj(x[q]) * b
    return out.tocsr()


def annihilator(ops: Operators, x: np.ndarray) -> sp.csr_matrix:
    out = sp.csr_matrix(ops.lowering[0].shape, dtype=complex)
    for q, b in enumerate(ops.lowering):
        out = out + np.conj(x[q]) * b
    return out.tocsr()


def nucleon_lowering(spec: FockSpec) -> list[sp.csr_matrix]:
    """hbar-scaled nucleon annihilators on the full space (requires no fixed sector)."""
    if spec.sector is not None:
        raise ValueError("nucleon annihilators leave a fixed nucleon sector")
    i2 = sp.identity(len(spec.meson_basis), dtype=complex, format="csr")
    return [np.sqrt(spec.hbar) * sp.kron(lowering_matrix(spec.nucleon_basis, p), i2, format="csr") for p in range(spec.nucleon_modes)]


def weyl_generator(ops: Operators, x: np.ndarray, y: np.ndarray | None = None) -> sp.csr_matrix:
    """``A`` with ``W = exp(i A)``; ``x`` meson, ``y`` optional nucleon coefficients."""
    A = field_operator(ops, x) / np.sqrt(2.0)
    if y is not None and np.any(y):
        for p, c in enumerate(nucleon_lowering(ops.spec)):
            A = A + (y[p] * c.conj().T + np.conj(y[p]) * c) / np.sqrt(2.0)
    return A.tocsr()


def weyl_apply(ops: Operators, x: np.ndarray, v: np.ndarray, y: np.ndarray | None = None, tol: float = 1e-13) -> np.ndarray:
    return expm_apply(weyl_generator(ops, x, y), v, -1.0, tol=tol)


def characteristic_function(ops: Operators, state: QuantumState, x: np.ndarray, y: np.ndarray | None = None) -> complex:
    """``<Psi, W(eta) Psi>`` for ``eta`` given by mode coefficients."""
    return complex(np.vdot(state.vector, weyl_apply(ops, x, state.vector, y)))


def coherent_characteristic(spec: FockSpec, u: np.ndarray, z: np.ndarray, x: np.ndarray, y: np.ndarray | None = None) -> complex:
    """Closed form ``exp(sqrt(2) i Re<eta, u+z> - hbar |eta|^2 / 4)`` on the retained modes."""
    a, b = spec.project_u(u), spec.project_z(z)
    y = np.zeros(spec.nucleon_modes, complex) if y is None else np.asarray(y, complex)
    re = np.vdot(x, b).real + np.vdot(y, a).real
    n2 = float(np.sum(np.abs(x) ** 2) + np.sum(np.abs(y) ** 2))
    return complex(np.exp(1j * np.sqrt(2.0) * re - spec.hbar * n2 / 4.0))


def one_body(spec: FockSpec, x_tau: np.ndarray) -> np.ndarray:
    G = spec.coupling
    return (np.einsum("abq,q->ab", G, np.conj(x_tau)) - np.einsum("baq,q->ab", np.conj(G), x_tau)) / 2j


def dgamma(ops: Operators, D: np.ndarray) -> sp.csr_matrix:
    out = sp.csr_matrix(ops.H.matrix.shape, dtype=complex)
    for (p, pp), m in ops.hopping.items():
        if D[p, pp] != 0:
            out = out + D[p, pp] * m
    return out.tocsr()


@dataclass
class ProxyResult:
    """One finite-horizon proxy: value = initial + integral; ``direct`` is the endpoint check."""

    kind: str
    value: complex
    initial: complex
    integral: complex
    direct: complex
    horizon: float
    tail_bound: float
    exponent: float
    decaying: bool
    times: np.ndarray = field(repr=False)
    integrand: np.ndarray = field(repr=False)

    @property
    def quadrature_gap(self) -> float:
        return abs(self.value - self.direct)


def _tail(times: np.ndarray, integrand: np.ndarray, nu: float = 1.0) -> tuple[float, float, bool]:
    tau = np.abs(times[1:])
    g = np.abs(integrand[1:])
    if tau.size < 8 or not np.any(g > 0):
        return 0.0, float("inf"), True
    prof = fit_decay(tau, g, nu, window=(tau[-1] / 4, tau[-1]))
    decaying = bool(np.isfinite(prof.exponent) and prof.exponent >= 1.0 + nu / 2)
    if prof.exponent == np.inf:
        return 0.0, float("inf"), True
    if decaying:
        tail = prof.prefactor * tau[-1] ** (-nu) / nu
    else:
        tail = float("inf")
    return float(tail), float(prof.exponent), decaying


class SectorBlocks:
    """A state split into nucleon-number blocks, each evolved on its own.

    ``H`` conserves the nucleon number and every operator used by the proxies
    acts inside a block, so an expectation is the weighted sum of block
    expectations.  Within a block, meson operators act on the right factor and
    nucleon one-body operators on the left factor of the ``(nucleon, meson)``
    coefficient matrix; the Weyl operator is a dense meson matrix exponential.
    Blocks with weight below ``min_weight`` are dropped (their total weight is
    recorded in ``dropped``).
    """

    def __init__(self, ops: Operators, state: QuantumState, min_weight: float = 1e-14, tol: float = 1e-12):
        spec = ops.spec
        self.spec, self.tol = spec, tol
        d2 = len(spec.meson_basis)
        self.d2 = d2
        totals = np.array([sum(o) for o in spec.nucleon_basis])
        hb = spec.hbar
        self.lowering = [np.sqrt(hb) * lowering_matrix(spec.meson_basis, q).toarray() for q in range(spec.n_meson)]
        self.blocks = []
        self.dropped = 0.0
        for n in np.unique(totals):
            i1 = np.nonzero(totals == n)[0]
            rows = (i1[:, None] * d2 + np.arange(d2)).ravel()
            v = state.vector[rows]
            w = float(np.vdot(v, v).real)
            if w < min_weight:
                self.dropped += w
                continue
            Hn = ops.H.matrix[rows][:, rows].tocsr()
            diag = Hn.diagonal().real
            shift = 0.5 * (diag.min() + diag.max())
            basis_n = [spec.nucleon_basis[i] for i in i1]
            P = spec.nucleon_modes
            hop = np.zeros((P, P, len(i1), len(i1)), complex)
            for p in range(P):
                for pp in range(P):
                    hop[p, pp] = hb * hopping_matrix(basis_n, p, pp).toarray()
            self.blocks.append({"n": int(n), "H": Hn, "shift": shift, "hop": hop, "weight": w, "vec": v / np.sqrt(w)})

    def advance(self, dt: float) -> None:
        hb = self.spec.hbar
        for b in self.blocks:
            H, shift = b["H"], b["shift"]
            b["vec"] = expm_apply(lambda x, H=H, s=shift: H @ x - s * x, b["vec"], dt / hb, tol=self.tol)

    # operator factors ----------------------------------------------------
    def meson_field(self, x: np.ndarray) -> np.ndarray:
        return sum(x[q] * L.conj().T + np.conj(x[q]) * L for q, L in enumerate(self.lowering))

    def meson_weyl(self, x: np.ndarray) -> np.ndarray:
        lam, V = np.linalg.eigh(self.meson_field(x) / np.sqrt(2.0))
        return (V * np.exp(1j * lam)) @ V.conj().T

    def nucleon_one_body(self, block: dict, D: np.ndarray) -> np.ndarray:
        return np.tensordot(D, block["hop"], axes=([0, 1], [0, 1]))

    def expect(self, nucleon=None, meson=None) -> complex:
        """``sum_n w_n <psi_n, (N_n x M) psi_n>`` for a callable ``nucleon(block)`` and a meson matrix."""
        acc = 0.0
        for b in self.blocks:
            M = b["vec"].reshape(-1, self.d2)
            R = M
            if meson is not None:
                R = R @ meson.T
            if nucleon is not None:
                Nb = nucleon(b)
                if Nb is None:
                    continue
                R = Nb @ R
            acc += b["weight"] * np.vdot(M, R)
        return complex(acc)

    def expect_ordered(self, factors: list) -> complex:
        """Expectation of an ordered product of ``("meson", matrix)`` / ``("nucleon", callable)`` factors."""
        acc = 0.0
        for b in self.blocks:
            M = b["vec"].reshape(-1, self.d2)
            R = M
            for kind, op in reversed(factors):
                if kind == "meson":
                    R = R @ op.T
                else:
                    Nb = op(b)
                    R = np.zeros_like(R) if Nb is None else Nb @ R
            acc += b["weight"] * np.vdot(M, R)
        return complex(acc)


def _grid(horizon: float, step: float, direction: int) -> np.ndarray:
    n = max(2, int(np.ceil(horizon / step)))
    n += n % 2  # even interval count for Simpson
    return direction * np.linspace(0.0, horizon, n + 1)


def asymptotic_proxies(
    ops: Operators,
    state: QuantumState,
    xis: list[np.ndarray],
    horizon: float,
    direction: int = +1,
    step: float = 0.02,
    kinds: tuple[str, ...] = ("weyl", "field"),
    tol: float = 1e-12,
) -> dict[str, list[ProxyResult]]:
    """Weyl and field proxies for several test functions in one propagation pass."""
    spec = ops.spec
    times = _grid(horizon, step, direction)
    xs = [mode_coefficients(spec, xi) for xi in xis]
    integ = {k: np.zeros((len(xs), times.size), complex) for k in kinds}
    init = {k: np.zeros(len(xs), complex) for k in kinds}
    sb = SectorBlocks(ops, state, tol=tol)
    for i, t in enumerate(times):
        if i > 0:
            sb.advance(t - times[i - 1])
        for j, x in enumerate(xs):
            xt = free_path(spec, x, t)
            D = one_body(spec, xt)
            dg = lambda b, D=D: sb.nucleon_one_body(b, D)  # noqa: E731
            if "field" in kinds:
                integ["field"][j, i] = 2.0 * sb.expect(nucleon=dg)
                if i == 0:
                    init["field"][j] = sb.expect(meson=sb.meson_field(x))
            if "weyl" in kinds:
                integ["weyl"][j, i] = 1j * np.sqrt(2.0) * sb.expect(nucleon=dg, meson=sb.meson_weyl(xt))
                if i == 0:
                    init["weyl"][j] = sb.expect(meson=sb.meson_weyl(x))
    out: dict[str, list[ProxyResult]] = {}
    for k in kinds:
        rows = []
        for j, x in enumerate(xs):
            xt = free_path(spec, x, times[-1])
            direct = sb.expect(meson=sb.meson_weyl(xt) if k == "weyl" else sb.meson_field(xt))
            integral = simpson(integ[k][j], x=times)
            tail, expo, dec = _tail(times, integ[k][j])
            rows.append(
                ProxyResult(k, complex(init[k][j] + integral), complex(init[k][j]), complex(integral), complex(direct), float(horizon), tail, expo, dec, times, integ[k][j].copy())
            )
        out[k] = rows
    return out


def asymptotic_weyl_expectation(ops, state, xi, horizon, direction=+1, step=0.02) -> ProxyResult:
    return asymptotic_proxies(ops, state, [xi], horizon, direction, step, kinds=("weyl",))["weyl"][0]


def asymptotic_field_expectation(ops, state, xi, horizon, direction=+1, step=0.02) -> ProxyResult:
    return asymptotic_proxies(ops, state, [xi], horizon, direction, step, kinds=("field",))["field"][0]


def asymptotic_correlation(
    ops: Operators,
    state: QuantumState,
    xis: list[np.ndarray],
    horizon: float,
    direction: int = +1,
    step: float = 0.02,
    tol: float = 1e-12,
) -> ProxyResult:
    """Proxy of ``<Psi, prod_j phi^pm(xi_j) Psi>`` on a fixed nucleon sector.

    The field factors only see the free meson evolution, so the derivative of
    the ordered product is ``sum_j 2 dGamma(D_j) prod_{i != j} phi(xi_i,tau)``.
    """
    if state.spec.sector is None:
        raise ValueError("correlations are defined here on a fixed nucleon sector")
    if not 1 <= len(xis) <= MAX_CORRELATION:
        raise ValueError(f"between 1 and {MAX_CORRELATION} test functions are supported")
    spec = ops.spec
    xs = [mode_coefficients(spec, xi) for xi in xis]
    times = _grid(horizon, step, direction)
    sb = SectorBlocks(ops, state, tol=tol)

    def fields(t, skip=None):
        return [("meson", sb.meson_field(free_path(spec, x, t))) for i, x in enumerate(xs) if i != skip]

    integ = np.zeros(times.size, complex)
    initial = sb.expect_ordered(fields(0.0))
    for i, t in enumerate(times):
        if i > 0:
            sb.advance(t - times[i - 1])
        acc = 0.0
        for j, x in enumerate(xs):
            D = one_body(spec, free_path(spec, x, t))
            acc += 2.0 * sb.expect_ordered([("nucleon", lambda b, D=D: sb.nucleon_one_body(b, D))] + fields(t, skip=j))
        integ[i] = acc
    direct = sb.expect_ordered(fields(times[-1]))
    integral = complex(simpson(integ, x=times))
    tail, expo, dec = _tail(times, integ)
    return ProxyResult("corr", initial + integral, initial, integral, direct, float(horizon), tail, expo, dec, times, integ)


@dataclass
class AnnihilatorProxy:
    norm: float
    certificate: float
    horizon: float

    @property
    def ok(self) -> bool:
        return self.norm <= self.certificate


def sector_spectrum(ops: Operators, max_dim: int = 6000) -> tuple[np.ndarray, np.ndarray]:
    """Dense eigendecomposition of ``H`` (sector sizes of a few thousand)."""
    if ops.H.dim > max_dim:
        raise ValueError("dense spectral decomposition refused; sector too large")
    return np.linalg.eigh(ops.H.matrix.toarray())


def annihilator_proxy(
    ops: Operators,
    state: QuantumState,
    energy: float,
    xi: np.ndarray,
    horizon: float,
    direction: int = +1,
    spectrum: tuple[np.ndarray, np.ndarray] | None = None,
) -> AnnihilatorProxy:
    """Cesaro mean ``(1/T) int_0^T exp(i tau (H - E)/hbar) a(xi_tau) psi dtau`` for an eigenstate ``psi``.

    Evaluated exactly with the dense spectral decomposition (sector sizes of a
    few thousand).  Certificate: ``(2/T) sum_q |x_q| ||b_q psi|| / omega_q``,
    valid because every level in the sector lies at or above ``E``.
    """
    spec = ops.spec
    x = mode_coefficients(spec, xi)
    hb = spec.hbar
    vals, vecs = spectrum if spectrum is not None else sector_spectrum(ops)
    lam = (vals - energy) / hb
    total = np.zeros(ops.H.dim, complex)
    cert = 0.0
    T = float(horizon)
    for q, b in enumerate(ops.lowering):
        w = b @ state.vector
        # a(xi_tau) = sum_q conj(x_q) exp(i tau omega_q) b_q
        mu = direction * (lam + spec.omega[q])
        with np.errstate(divide="ignore", invalid="ignore"):
            f = np.where(np.abs(mu) * T < 1e-12, T, (np.exp(1j * mu * T) - 1.0) / (1j * mu))
        total += np.conj(x[q]) * (vecs @ (f * (vecs.conj().T @ w)))
        cert += 2.0 * abs(x[q]) * np.linalg.norm(w) / spec.omega[q]
    return AnnihilatorProxy(float(np.linalg.norm(total) / T), float(cert / T), T)
