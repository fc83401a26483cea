"""Ground states of the coupled system at fixed nucleon mass via the Hartree reduction.

Eliminating the meson field through ``omega z + F(u) = 0`` leaves the
functional ``H(u) = <u, (-Lap + V) u> - Q(u)`` with the quartic term
``Q(u) = sum dx dy |u(x)|^2 W(x - y) |u(y)|^2``.  Minimizers solve

    (-Lap + V) u - 2 (W * |u|^2) u = lam u,    ||u|| = delta.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.linalg import LinearOperator, cg, eigsh

from .model import GridPair, canonical_phase, distance_mod_phase
from .skg import ClassicalState, energy, pair_convolution, source_term


class ConvergenceError(RuntimeError):
    def __init__(self, message: str, history: list[float]):
        super().__init__(message)
        self.history = history


@dataclass
class KernelW:
    """Pair potential sampled at offsets ``r = x_i`` together with its momentum profile."""

    r: np.ndarray
    values: np.ndarray
    profile: np.ndarray  # chi^2 / omega^2 on the momentum grid


def build_kernel(grids: GridPair) -> KernelW:
    profile = grids.chi**2 / grids.omega**2
    # W(r) = sum_k dk profile(k) exp(i k r), real and even since profile is even
    vals = grids.dk * (np.exp(1j * np.outer(grids.x, grids.k)) @ profile)
    return KernelW(grids.x.copy(), vals.real, profile)


def quartic_term(grids: GridPair, u: np.ndarray) -> float:
    rho = np.abs(u) ** 2
    return grids.dx * float(np.sum(rho * pair_convolution(grids, rho)))


def quartic_term_direct(grids: GridPair, kernel: KernelW, u: np.ndarray) -> float:
    """Same as :func:`quartic_term` by an explicit double sum with the periodic kernel."""
    rho = np.abs(u) ** 2
    n = grids.n
    idx = (np.arange(n)[:, None] - np.arange(n)[None, :]) % n
    # kernel.values[j] is W at offset x_j = -L + j dx; offset i - j maps to index (i - j + n/2) mod n
    wmat = kernel.values[(idx + n // 2) % n]
    return grids.dx**2 * float(rho @ wmat @ rho)


@dataclass
class HartreeEnergy:
    total: float
    kinetic: float
    quartic: float


def hartree_energy(grids: GridPair, u: np.ndarray) -> HartreeEnergy:
    kin = grids.inner_x(u, grids.apply_h(u)).real
    q = quartic_term(grids, u)
    return HartreeEnergy(kin - q, kin, q)


def hartree_gradient(grids: GridPair, u: np.ndarray, quartic_factor: float = 4.0) -> np.ndarray:
    """Gradient for the real inner product ``Re sum dx conj(a) b``.

    ``quartic_factor`` exists only for negative controls; the correct value is 4.
    """
    rho = np.abs(u) ** 2
    return 2.0 * grids.apply_h(u) - quartic_factor * pair_convolution(grids, rho) * u


def reconstruct_field(grids: GridPair, u: np.ndarray) -> np.ndarray:
    """Meson field solving ``omega z + F(u) = 0``."""
    return -source_term(grids, u) / grids.omega


def energy_lower_bound(grids: GridPair, delta: float) -> float:
    """``e0 delta^2 - delta^4 ||chi/omega||^2``, valid for every state of mass ``delta^2``."""
    e0 = lowest_eigenpair(grids, np.zeros(grids.n))[0]
    return e0 * delta**2 - delta**4 * grids.dk * float(np.sum(grids.chi**2 / grids.omega**2))


def gradient_check(
    grids: GridPair,
    u: np.ndarray,
    step: float = 1e-5,
    directions: int = 20,
    seed: int = 0,
    quartic_factor: float = 4.0,
) -> float:
    """Largest relative mismatch between central differences and the analytic gradient."""
    rng = np.random.default_rng(seed)
    grad = hartree_gradient(grids, u, quartic_factor)
    worst = 0.0
    for _ in range(directions):
        v = rng.normal(size=grids.n) + 1j * rng.normal(size=grids.n)
        v *= np.exp(-(grids.x / (0.3 * grids.L)) ** 2)
        v /= grids.norm_x(v)
        fd = (hartree_energy(grids, u + step * v).total - hartree_energy(grids, u - step * v).total) / (2 * step)
        an = grids.inner_x(grad, v).real
        worst = max(worst, abs(fd - an) / max(abs(an), 1e-12))
    return worst


def mean_field_apply(grids: GridPair, potential: np.ndarray):
    def apply(v):
        return grids.apply_h(np.ravel(v)) + potential * np.ravel(v)

    return apply


def lowest_eigenpair(grids: GridPair, potential: np.ndarray, guess: np.ndarray | None = None) -> tuple[float, np.ndarray]:
    """Lowest eigenpair of ``-Lap + V + potential`` by matrix-free Lanczos.

    The eigenvector is normalized in the ``dx`` norm and phase-canonical.
    """
    n = grids.n
    op = LinearOperator((n, n), matvec=mean_field_apply(grids, potential), dtype=complex)
    v0 = None if guess is None else np.asarray(guess, dtype=complex)
    vals, vecs = eigsh(op, k=1, which="SA", tol=1e-14, v0=v0, ncv=min(n, 40))
    v = vecs[:, 0]
    v = canonical_phase(v / grids.norm_x(v))
    return float(vals[0]), v


@dataclass
class HartreeResult:
    delta: float
    u0: np.ndarray
    z0: np.ndarray
    energy: float
    lam: float
    quartic: float
    residual: float
    iterations: int
    method: str
    lam_unit_coefficient: float = float("nan")
    residual_unit_coefficient: float = float("nan")
    history: list[float] = field(default_factory=list)
    lower_bound: float = float("nan")

    def state(self) -> ClassicalState:
        return ClassicalState(self.u0.copy(), self.z0.copy(), 0.0)


def euler_lagrange_residual(grids: GridPair, u: np.ndarray, coefficient: float = 2.0, lam: float | None = None) -> tuple[float, float]:
    """``(residual / ||u||, lam)`` for ``(-Lap + V) u - coefficient (W*|u|^2) u = lam u``.

    ``lam`` defaults to the Rayleigh quotient of that operator.
    """
    au = grids.apply_h(u) - coefficient * pair_convolution(grids, np.abs(u) ** 2) * u
    nu2 = grids.norm_x(u) ** 2
    if lam is None:
        lam = grids.inner_x(u, au).real / nu2
    return grids.norm_x(au - lam * u) / np.sqrt(nu2), lam


def _finish(grids, u, delta, iterations, method, history) -> HartreeResult:
    u = canonical_phase(u)
    he = hartree_energy(grids, u)
    res, lam = euler_lagrange_residual(grids, u)
    res1, _ = euler_lagrange_residual(grids, u, coefficient=1.0)
    lb = energy_lower_bound(grids, delta)
    if he.total < lb - 1e-12 * max(1.0, abs(lb)):
        raise AssertionError(f"energy {he.total} below the analytic lower bound {lb}: kernel bug")
    return HartreeResult(
        delta=delta,
        u0=u,
        z0=reconstruct_field(grids, u),
        energy=he.total,
        lam=lam,
        quartic=he.quartic,
        residual=res,
        iterations=iterations,
        method=method,
        lam_unit_coefficient=he.total / delta**2,
        residual_unit_coefficient=res1,
        history=history,
        lower_bound=lb,
    )


def _scf(grids, u, delta, tol, max_iter, theta):
    history = []
    e_prev = hartree_energy(grids, u).total
    for it in range(1, max_iter + 1):
        pot = -2.0 * pair_convolution(grids, np.abs(u) ** 2)
        _, v = lowest_eigenpair(grids, pot, guess=u)
        v = delta * v
        # align phase with the current iterate before mixing
        ov = grids.inner_x(v, u)
        if ov != 0:
            v *= ov / abs(ov)
        while True:
            trial = (1.0 - theta) * u + theta * v
            trial *= delta / grids.norm_x(trial)
            e_new = hartree_energy(grids, trial).total
            if e_new <= e_prev + 1e-14 * abs(e_prev) or theta < 1e-3:
                break
            theta *= 0.5
        u, e_prev = trial, e_new
        res, _ = euler_lagrange_residual(grids, u)
        history.append(res)
        if res < tol:
            return u, it, history
    raise ConvergenceError(f"SCF did not reach residual {tol:g} in {max_iter} iterations", history)


def _projected_gradient(grids, u, delta, tol, max_iter, shift=1.0):
    """Preconditioned Riemannian gradient descent on the sphere ``||u|| = delta``."""
    n = grids.n
    prec_op = LinearOperator((n, n), matvec=lambda v: grids.apply_h(np.ravel(v)) + shift * np.ravel(v), dtype=complex)

    def precondition(g):
        sol, _ = cg(prec_op, g, rtol=1e-10, maxiter=500)
        return sol

    history = []
    e = hartree_energy(grids, u).total
    res, _ = euler_lagrange_residual(grids, u)
    noise = 1e3 * np.finfo(float).eps
    step = 0.5
    for it in range(1, max_iter + 1):
        g = hartree_gradient(grids, u)
        pg = precondition(g)
        pu = precondition(u)
        d = pg - (grids.inner_x(u, pg).real / grids.inner_x(u, pu).real) * pu
        slope = grids.inner_x(g, d).real
        if slope <= 0:
            d = g - (grids.inner_x(u, g).real / delta**2) * u
            slope = grids.inner_x(g, d).real
        step = min(step * 2.0, 1.0)
        while True:
            trial = u - step * d
            trial *= delta / grids.norm_x(trial)
            e_new = hartree_energy(grids, trial).total
            res_new, _ = euler_lagrange_residual(grids, trial)
            # energy differences below rounding cannot rank steps: the residual must drop
            in_noise = abs(e_new - e) <= noise * abs(e)
            if in_noise:
                if res_new < res:
                    break
            elif e_new <= e - 1e-4 * step * slope:
                break
            if step < 1e-10:
                raise ConvergenceError("projected-gradient line search failed", history)
            step *= 0.5
        u, e, res = trial, e_new, res_new
        history.append(res)
        if res < tol:
            return u, it, history
    raise ConvergenceError(f"projected gradient did not reach residual {tol:g} in {max_iter} iterations", history)


def minimize(
    grids: GridPair,
    delta: float,
    init: np.ndarray | None = None,
    method: str = "scf",
    tol: float = 1e-10,
    max_iter: int = 500,
    theta: float = 0.5,
) -> HartreeResult:
    """Minimize the Hartree functional on the sphere ``||u|| = delta``.

    ``init`` defaults to the scaled lowest eigenmode of ``-Lap + V``.  With
    ``method="scf"`` the damped self-consistent iteration is tried first and
    the projected gradient takes over if it fails to converge.
    """
    if delta <= 0 or tol <= 0:
        raise ValueError("delta and tol must be positive")
    if init is None:
        _, init = lowest_eigenpair(grids, np.zeros(grids.n))
    u = np.asarray(init, dtype=complex)
    u = delta * u / grids.norm_x(u)
    if method == "scf":
        try:
            u, it, hist = _scf(grids, u, delta, tol, max_iter, theta)
            return _finish(grids, u, delta, it, "scf", hist)
        except ConvergenceError as exc:
            u2, it, hist = _projected_gradient(grids, u, delta, tol, max_iter)
            return _finish(grids, u2, delta, it, "projected-gradient", exc.history + hist)
    if method in ("pg", "projected-gradient"):
        u, it, hist = _projected_gradient(grids, u, delta, tol, max_iter)
        return _finish(grids, u, delta, it, "projected-gradient", hist)
    raise ValueError(f"unknown method {method!r}")


def random_initial(grids: GridPair, rng: np.random.Generator, modes: int = 6) -> np.ndarray:
    """Random smooth guess: random complex combination of low eigenmodes of ``-Lap + V``."""
    _, vecs = grids.lowest_modes(modes)
    c = rng.normal(size=modes) + 1j * rng.normal(size=modes)
    return c @ vecs


@dataclass
class MultiStartReport:
    results: list[HartreeResult]
    distances: np.ndarray  # pairwise distances modulo phase

    @property
    def max_distance(self) -> float:
        return float(self.distances.max()) if self.distances.size else 0.0

    @property
    def best(self) -> HartreeResult:
        return min(self.results, key=lambda r: r.energy)


def multi_start(
    grids: GridPair,
    delta: float,
    starts: int = 5,
    seed: int = 0,
    method: str = "scf",
    tol: float = 1e-10,
) -> MultiStartReport:
    rng = np.random.Generator(np.random.Philox(seed))
    results = [minimize(grids, delta, random_initial(grids, rng), method=method, tol=tol) for _ in range(starts)]
    d = np.zeros((starts, starts))
    for i in range(starts):
        for j in range(i + 1, starts):
            d[i, j] = d[j, i] = distance_mod_phase(grids, results[i].u0, results[j].u0)
    return MultiStartReport(results, d)


def estimate_uniqueness_threshold(
    grids: GridPair,
    lo: float = 0.1,
    hi: float = 2.0,
    starts: int = 4,
    agreement: float = 1e-6,
    steps: int = 6,
    seed: int = 0,
) -> tuple[float, float]:
    """Bracket the largest mass scale where multi-start runs agree modulo phase.

    Returns ``(last agreeing delta, first disagreeing delta)``; the upper end
    is ``inf`` if every probed delta agreed.
    """
    def agrees(delta):
        try:
            return multi_start(grids, delta, starts=starts, seed=seed).max_distance < agreement
        except ConvergenceError:
            return False

    if not agrees(lo):
        return 0.0, lo
    if agrees(hi):
        return hi, float("inf")
    for _ in range(steps):
        mid = 0.5 * (lo + hi)
        if agrees(mid):
            lo = mid
        else:
            hi = mid
    return lo, hi


def full_energy_at_minimizer(grids: GridPair, result: HartreeResult) -> float:
    return energy(grids, result.state()).total
