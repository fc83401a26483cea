"""Classical flow and ground states restricted to the retained quantum modes.

The mode amplitudes ``alpha_p`` (nucleon) and ``beta_q`` (meson) evolve by

    i d/dt alpha_p = e_p alpha_p + sum_p' M[p, p'] alpha_p',
    i d/dt beta_q  = omega_q beta_q + S_q,

with ``S_q = sum conj(alpha_p) alpha_p' G[p, p', q]`` and
``M[p, p'] = sum_q G[p, p', q] conj(beta_q) + conj(G[p', p, q]) beta_q``.
This is the classical symbol of the truncated Hamiltonian, so it provides the
semiclassical targets on exactly the same discretization.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import simpson, solve_ivp

from .fock import FockSpec


@dataclass
class ModeSystem:
    energies: np.ndarray
    omega: np.ndarray
    coupling: np.ndarray  # G[p, p', q]

    @classmethod
    def from_spec(cls, spec: FockSpec) -> "ModeSystem":
        return cls(spec.energies.copy(), spec.omega.copy(), spec.coupling.copy())

    def source(self, alpha: np.ndarray) -> np.ndarray:
        return np.einsum("a,b,abq->q", np.conj(alpha), alpha, self.coupling)

    def mean_field(self, beta: np.ndarray) -> np.ndarray:
        G = self.coupling
        return np.einsum("abq,q->ab", G, np.conj(beta)) + np.einsum("baq,q->ab", np.conj(G), beta)

    def energy(self, alpha: np.ndarray, beta: np.ndarray) -> float:
        return float(
            np.sum(self.energies * np.abs(alpha) ** 2)
            + np.sum(self.omega * np.abs(beta) ** 2)
            + 2.0 * np.vdot(beta, self.source(alpha)).real
        )

    def rhs(self, alpha, beta):
        da = -1j * (self.energies * alpha + self.mean_field(beta) @ alpha)
        db = -1j * (self.omega * beta + self.source(alpha))
        return da, db

    def evolve(self, alpha0, beta0, times: np.ndarray, rtol: float = 1e-12, atol: float = 1e-14):
        """Amplitudes at ``times`` (starting from ``times[0]``) by an order-8 Runge-Kutta method."""
        p = len(alpha0)

        def f(_t, y):
            c = y[: y.size // 2] + 1j * y[y.size // 2 :]
            da, db = self.rhs(c[:p], c[p:])
            d = np.concatenate([da, db])
            return np.concatenate([d.real, d.imag])

        c0 = np.concatenate([np.asarray(alpha0, complex), np.asarray(beta0, complex)])
        y0 = np.concatenate([c0.real, c0.imag])
        sol = solve_ivp(f, (times[0], times[-1]), y0, method="DOP853", t_eval=times, rtol=rtol, atol=atol)
        if not sol.success:
            raise ArithmeticError(sol.message)
        c = sol.y[: y0.size // 2] + 1j * sol.y[y0.size // 2 :]
        return c[:p].T, c[p:].T

    def imaginary_pairing(self, alpha: np.ndarray, xi_t: np.ndarray) -> float:
        """``Im <xi_t, S(alpha)>``, the classical symbol of the nucleon operator driving the field."""
        return float(np.vdot(xi_t, self.source(alpha)).imag)


@dataclass
class ModeTargets:
    times: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    pairing: np.ndarray  # <xi, Lambda_T> per xi, Cook form with Simpson weights
    direct: np.ndarray  # <xi, exp(i T omega) beta(T)>
    integrands: np.ndarray  # <xi_tau, S(tau)> per xi and checkpoint

    def weyl(self) -> np.ndarray:
        return np.exp(1j * np.sqrt(2.0) * self.pairing.real)

    def field(self) -> np.ndarray:
        return 2.0 * self.pairing.real


def classical_targets(system: ModeSystem, alpha0, beta0, xis: np.ndarray, times: np.ndarray) -> ModeTargets:
    """Cook pairings of the truncated classical flow on the given checkpoints."""
    alpha, beta = system.evolve(alpha0, beta0, times)
    xis = np.atleast_2d(xis)
    src = np.array([system.source(a) for a in alpha])  # (n_t, M)
    phase = np.exp(1j * np.outer(times, system.omega))
    integ = (np.conj(xis) @ (phase * src).T)  # (n_xi, n_t)
    base = np.conj(xis) @ np.asarray(beta0, complex)
    pairing = base - 1j * simpson(integ, x=times, axis=1)
    direct = np.conj(xis) @ (np.exp(1j * times[-1] * system.omega) * beta[-1])
    return ModeTargets(times, alpha, beta, pairing, direct, integ)


@dataclass
class ModeMinimizer:
    delta: float
    energy: float
    alpha: np.ndarray
    beta: np.ndarray
    residual: float
    spread: float  # largest energy difference between restarts


def minimize_modes(system: ModeSystem, delta: float, starts: int = 8, seed: int = 0, tol: float = 1e-12, max_iter: int = 2000) -> ModeMinimizer:
    """Minimize the truncated energy at ``sum |alpha|^2 = delta^2`` with the field eliminated.

    Self-consistent iteration on the mode mean-field matrix from several
    random starts; the lowest result is returned.
    """
    rng = np.random.Generator(np.random.Philox(seed))
    p = len(system.energies)
    results = []
    for s in range(starts):
        if s == 0:
            a = np.zeros(p, complex)
            a[0] = delta
        else:
            a = rng.normal(size=p) + 1j * rng.normal(size=p)
            a *= delta / np.linalg.norm(a)
        theta = 0.5
        res = np.inf
        for _ in range(max_iter):
            beta = -system.source(a) / system.omega
            m = np.diag(system.energies) + system.mean_field(beta)
            vals, vecs = np.linalg.eigh(m)
            v = vecs[:, 0] * delta
            ov = np.vdot(v, a)
            if ov != 0:
                v *= ov / abs(ov)
            a_new = (1 - theta) * a + theta * v
            a_new *= delta / np.linalg.norm(a_new)
            e_old = system.energy(a, -system.source(a) / system.omega)
            e_new = system.energy(a_new, -system.source(a_new) / system.omega)
            if e_new > e_old + 1e-15 and theta > 1e-3:
                theta *= 0.5
                continue
            a = a_new
            beta = -system.source(a) / system.omega
            m = np.diag(system.energies) + system.mean_field(beta)
            lam = np.vdot(a, m @ a).real / delta**2
            res = float(np.linalg.norm(m @ a - lam * a))
            if res < tol:
                break
        beta = -system.source(a) / system.omega
        results.append((system.energy(a, beta), a, beta, res))
    energies = [r[0] for r in results]
    best = min(results, key=lambda r: r[0])
    return ModeMinimizer(delta, best[0], best[1], best[2], best[3], float(max(energies) - min(energies)))
