"""Lanczos propagation ``exp(-i s A) v`` for sparse Hermitian ``A`` and sector ground states."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse.linalg import eigsh

from .fock import QuantumState, SparseOperator


class KrylovError(ArithmeticError):
    pass


def _lanczos(matvec, v: np.ndarray, m: int):
    """Orthonormal Krylov basis (rows) and the tridiagonal coefficients.

    Full reorthogonalization keeps the basis orthonormal to rounding.
    Returns ``(V, alpha, beta, beta_next)`` where ``beta_next`` couples the
    last basis vector to the next (zero on an invariant subspace).
    """
    n = v.size
    V = np.empty((m + 1, n), dtype=complex)
    alpha = np.zeros(m)
    beta = np.zeros(m)
    V[0] = v
    scale = 0.0
    for j in range(m):
        w = matvec(V[j])
        alpha[j] = np.vdot(V[j], w).real
        w = w - alpha[j] * V[j]
        if j > 0:
            w = w - beta[j - 1] * V[j - 1]
        # projection coefficients conj(V w^*) avoid conjugating the basis
        w = w - np.conj(V[: j + 1] @ np.conj(w)) @ V[: j + 1]
        b = np.linalg.norm(w)
        scale = max(scale, abs(alpha[j]), b)
        if b <= 1e-14 * max(scale, 1.0):
            return V[: j + 1], alpha[: j + 1], beta[:j], 0.0
        if j < m - 1:
            beta[j] = b
        V[j + 1] = w / b
        if j == m - 1:
            return V[:m], alpha, beta[: m - 1], b
    return V[:m], alpha, beta[: m - 1], 0.0


def expm_apply(op, v: np.ndarray, s: float, tol: float = 1e-12, krylov_dim: int = 30, max_substeps: int = 100000) -> np.ndarray:
    """``exp(-i s A) v`` by Lanczos with adaptive substeps.

    The substep is the largest for which the a-posteriori error estimate
    ``beta_m |e_m^T exp(-i tau T_m) e_1|`` stays below ``tol * tau / |s|``;
    the Krylov basis does not depend on the substep, so it is built once per
    substep attempt.
    """
    matvec = (lambda x: op @ x) if not callable(op) else op
    v = np.asarray(v, dtype=complex)
    nrm = np.linalg.norm(v)
    if nrm == 0 or s == 0:
        return v.copy()
    out = v / nrm
    remaining = abs(s)
    sign = np.sign(s)
    steps = 0
    while remaining > 0:
        steps += 1
        if steps > max_substeps:
            raise KrylovError("Krylov propagation exceeded the substep budget")
        V, a, b, b_next = _lanczos(matvec, out, krylov_dim)
        T = np.diag(a) + np.diag(b, 1) + np.diag(b, -1)
        evals, evecs = np.linalg.eigh(T)
        c0 = evecs[0].conj()

        def coeffs(tau):
            return evecs @ (np.exp(-1j * sign * tau * evals) * c0)

        tau = remaining
        if b_next > 0:
            for _ in range(200):
                err = b_next * abs(coeffs(tau)[-1])
                if err <= tol * tau / abs(s) or err < 1e-300:
                    break
                tau *= 0.5
            else:
                raise KrylovError("no admissible Krylov substep found")
        y = coeffs(tau)
        if not np.all(np.isfinite(y)):
            raise KrylovError("non-finite Krylov coefficients")
        out = y @ V
        out /= np.linalg.norm(out)
        remaining -= tau
        if remaining < 1e-14 * abs(s):
            remaining = 0.0
    return nrm * out


def propagate(H: SparseOperator, state: QuantumState, t: float, tol: float = 1e-12) -> QuantumState:
    """``exp(-i (t / hbar) H) state``."""
    hb = state.spec.hbar
    vec = expm_apply(H.matrix, state.vector, t / hb, tol=tol)
    return QuantumState(vec, state.spec, state.sector)


def propagate_checkpoints(H: SparseOperator, state: QuantumState, times: np.ndarray, tol: float = 1e-12) -> list[QuantumState]:
    """States at increasing (or decreasing) ``times`` starting from ``times[0]``."""
    out = [state]
    cur = state
    for t0, t1 in zip(times[:-1], times[1:]):
        cur = propagate(H, cur, t1 - t0, tol)
        out.append(cur)
    return out


@dataclass
class GroundState:
    energy: float
    state: QuantumState
    residual: float
    degenerate: bool
    second: QuantumState | None = None
    gap: float = float("nan")


def ground_state(H: SparseOperator, spec, tol: float = 1e-8, seed: int = 0) -> GroundState:
    """Lowest eigenpair of ``H`` on the spec's basis (typically a fixed nucleon sector).

    Uses implicitly restarted Lanczos (dense eigensolver below 400 states) and
    reports near-degeneracy of the two lowest levels.
    """
    n = H.dim
    if n <= 400:
        vals, vecs = np.linalg.eigh(H.matrix.toarray())
        vals, vecs = vals[:2], vecs[:, :2]
    else:
        rng = np.random.default_rng(seed)
        v0 = rng.normal(size=n) + 1j * rng.normal(size=n)
        vals, vecs = eigsh(H.matrix, k=2, which="SA", tol=1e-13, v0=v0)
        order = np.argsort(vals)
        vals, vecs = vals[order], vecs[:, order]
    psi = vecs[:, 0] / np.linalg.norm(vecs[:, 0])
    i = int(np.argmax(np.abs(psi)))
    psi *= abs(psi[i]) / psi[i]
    res = float(np.linalg.norm(H.matrix @ psi - vals[0] * psi))
    if res > tol:
        raise KrylovError(f"ground-state residual {res:.3e} exceeds {tol:.1e}")
    sector = "full" if spec.sector is None else f"n={spec.sector}"
    second = QuantumState(vecs[:, 1] / np.linalg.norm(vecs[:, 1]), spec, sector) if vecs.shape[1] > 1 else None
    gap = float(vals[1] - vals[0]) if len(vals) > 1 else float("inf")
    return GroundState(float(vals[0]), QuantumState(psi, spec, sector), res, gap < 1e-10, second, gap)
