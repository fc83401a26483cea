"""Model parameters, discretization grids and the spectral transform.

Conventions used throughout the package:

* position grid ``x_i = -L + i*dx`` with ``dx = 2L/N``
* momentum grid ``k_j = j*pi/L`` for ``j = -N/2 .. N/2-1`` stored in sorted order
* transform ``u_hat(k) = (2 pi)^(-1/2) sum_i dx exp(-i k x_i) u(x_i)``, unitary
  between the weighted norms ``sum dx |u|^2`` and ``sum dk |u_hat|^2``
* inner products are antilinear in the first slot and carry the grid weight
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

SQRT_2PI = np.sqrt(2.0 * np.pi)


class ModelError(ValueError):
    """Raised for inconsistent or unsupported model parameters."""


@dataclass(frozen=True)
class PotentialSpec:
    """Confining potential ``V(x) = c0 * (1 + |x|^2)^((1 + nu)/2)``."""

    c0: float = 1.0
    nu: float = 1.0

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.c0 * (1.0 + x**2) ** ((1.0 + self.nu) / 2.0)


@dataclass(frozen=True)
class CutoffSpec:
    """Coupling form factor with compact support in ``|k| < radius``.

    ``profile`` is ``"bump"`` (smooth compactly supported bump scaled so its
    maximum equals ``amplitude``).  ``amplitude = 0`` switches the coupling off.
    """

    radius: float = 2.0
    amplitude: float = 1.0
    profile: str = "bump"

    def __call__(self, k: np.ndarray) -> np.ndarray:
        if self.profile != "bump":
            raise ModelError(f"unknown cutoff profile {self.profile!r}")
        s2 = (np.asarray(k, dtype=float) / self.radius) ** 2
        out = np.zeros_like(s2)
        inside = s2 < 1.0
        # exp(1 - 1/(1 - s^2)) peaks at 1 for k = 0
        out[inside] = np.exp(1.0 - 1.0 / (1.0 - s2[inside]))
        return self.amplitude * out


@dataclass(frozen=True)
class ModelParams:
    dimension: int = 1
    box_half_length: float = 16.0
    grid_size: int = 256
    mass: float = 1.0
    potential: PotentialSpec = field(default_factory=PotentialSpec)
    cutoff: CutoffSpec = field(default_factory=CutoffSpec)

    def with_updates(self, **kw) -> "ModelParams":
        return replace(self, **kw)

    def check(self) -> None:
        errors = []
        if self.dimension != 1:
            errors.append(f"dimension={self.dimension}: only d=1 grids are implemented")
        if self.box_half_length <= 0:
            errors.append("box_half_length must be positive")
        n = self.grid_size
        if n < 8 or n & (n - 1):
            errors.append("grid_size must be a power of two >= 8")
        if self.mass <= 0:
            errors.append("mass must be positive")
        if self.potential.c0 <= 0:
            errors.append("potential.c0 must be positive")
        if self.potential.nu <= 0:
            errors.append("potential.nu must be positive")
        if self.cutoff.radius <= 0:
            errors.append("cutoff.radius must be positive")
        if self.cutoff.amplitude < 0:
            errors.append("cutoff.amplitude must be non-negative")
        if not errors:
            k_max = np.pi * n / (2.0 * self.box_half_length)
            if self.cutoff.radius >= k_max:
                errors.append(
                    f"cutoff radius {self.cutoff.radius} not resolved: grid reaches |k| < {k_max:.4g}"
                )
        if errors:
            raise ModelError("; ".join(errors))


def scatter_params(base: ModelParams | None = None) -> ModelParams:
    """Larger box used for long-time scattering runs (same grid spacing as 0.25)."""
    base = base or ModelParams()
    return base.with_updates(box_half_length=64.0, grid_size=512)


@dataclass
class GridPair:
    """Position and momentum grids together with the sampled model functions."""

    params: ModelParams
    x: np.ndarray
    k: np.ndarray
    dx: float
    dk: float
    V: np.ndarray
    omega: np.ndarray
    chi: np.ndarray
    sign: np.ndarray  # (-1)^j phase linking the FFT ordering to k_j

    @property
    def n(self) -> int:
        return self.x.size

    @property
    def L(self) -> float:
        return self.params.box_half_length

    # spectral transform -------------------------------------------------
    def to_momentum(self, u: np.ndarray) -> np.ndarray:
        """Unitary transform of samples on the position grid (last axis)."""
        f = np.fft.fftshift(np.fft.fft(u, axis=-1), axes=-1)
        return (self.dx / SQRT_2PI) * self.sign * f

    def to_position(self, v: np.ndarray) -> np.ndarray:
        """Inverse of :meth:`to_momentum`."""
        f = np.fft.ifft(np.fft.ifftshift(self.sign * v, axes=-1), axis=-1)
        return (self.dk * self.n / SQRT_2PI) * f

    # weighted inner products -------------------------------------------
    def inner_x(self, a: np.ndarray, b: np.ndarray) -> complex:
        return complex(self.dx * np.vdot(a, b))

    def inner_k(self, a: np.ndarray, b: np.ndarray) -> complex:
        return complex(self.dk * np.vdot(a, b))

    def norm_x(self, a: np.ndarray) -> float:
        return float(np.sqrt(self.dx * np.vdot(a, a).real))

    def norm_k(self, a: np.ndarray) -> float:
        return float(np.sqrt(self.dk * np.vdot(a, a).real))

    # operators ---------------------------------------------------------
    def apply_h(self, u: np.ndarray) -> np.ndarray:
        """Apply ``-Laplacian + V`` with the spectral Laplacian."""
        return self.to_position(self.k**2 * self.to_momentum(u)) + self.V * u

    def h_matrix(self) -> np.ndarray:
        """Dense Hermitian matrix of ``-Laplacian + V`` on the position grid."""
        eye = np.eye(self.n, dtype=complex)
        kin = self.to_position(self.k**2 * self.to_momentum(eye))
        mat = kin.T + np.diag(self.V)
        return 0.5 * (mat + mat.conj().T)

    def lowest_modes(self, count: int) -> tuple[np.ndarray, np.ndarray]:
        """Lowest eigenpairs of ``-Laplacian + V``.

        Eigenvectors are returned as rows normalized in the ``dx`` weighted
        norm, with the largest sample made real and positive.
        """
        vals, vecs = np.linalg.eigh(self.h_matrix())
        vecs = vecs[:, :count].T / np.sqrt(self.dx)
        return vals[:count], np.array([canonical_phase(v) for v in vecs])

    def boundary_fraction(self, u: np.ndarray, outer: float = 0.1) -> float:
        """Fraction of ``||u||^2`` carried by the outer ``outer`` part of the box."""
        w = np.abs(u) ** 2
        total = w.sum()
        if total == 0:
            return 0.0
        mask = np.abs(self.x) > (1.0 - outer) * self.L
        return float(w[mask].sum() / total)

    def export_csv(self, directory: str | Path) -> tuple[Path, Path]:
        """Write ``grid_x.csv`` and ``grid_k.csv`` for inspection."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        px, pk = directory / "grid_x.csv", directory / "grid_k.csv"
        with open(px, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["index", "x", "V"])
            for i, (xi, vi) in enumerate(zip(self.x, self.V)):
                w.writerow([i, repr(float(xi)), repr(float(vi))])
        with open(pk, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["index", "k", "omega", "chi"])
            for j, (kj, oj, cj) in enumerate(zip(self.k, self.omega, self.chi)):
                w.writerow([j, repr(float(kj)), repr(float(oj)), repr(float(cj))])
        return px, pk


def build_grids(params: ModelParams) -> GridPair:
    params.check()
    n, L = params.grid_size, params.box_half_length
    dx = 2.0 * L / n
    dk = np.pi / L
    x = -L + dx * np.arange(n)
    j = np.arange(-n // 2, n // 2)
    k = dk * j
    sign = np.where(j % 2 == 0, 1.0, -1.0)
    omega = np.sqrt(k**2 + params.mass**2)
    return GridPair(
        params=params,
        x=x,
        k=k,
        dx=dx,
        dk=dk,
        V=params.potential(x),
        omega=omega,
        chi=params.cutoff(k),
        sign=sign,
    )


def canonical_phase(u: np.ndarray) -> np.ndarray:
    """Rotate ``u`` so that its largest-magnitude sample is real and positive."""
    i = int(np.argmax(np.abs(u)))
    a = u[i]
    if a == 0:
        return u
    return u * (abs(a) / a)


def distance_mod_phase(grids: GridPair, u: np.ndarray, v: np.ndarray) -> float:
    """``min_theta ||u - exp(i theta) v||`` in the position norm."""
    nu2 = grids.norm_x(u) ** 2
    nv2 = grids.norm_x(v) ** 2
    ov = abs(grids.inner_x(u, v))
    return float(np.sqrt(max(nu2 + nv2 - 2.0 * ov, 0.0)))


def form_factor_pairing(grids: GridPair, xi: np.ndarray, x: float | np.ndarray) -> complex | np.ndarray:
    """``<xi, lambda_x>`` where ``lambda_x(k) = exp(i k x) omega^(-1/2) chi(k)``.

    Vectorized over ``x``.
    """
    w = grids.dk * np.conj(xi) * grids.chi / np.sqrt(grids.omega)
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    vals = np.exp(1j * np.outer(xs, grids.k)) @ w
    return vals[0] if np.ndim(x) == 0 else vals


@dataclass
class TestDictionary:
    """Finite family of smooth test functions supported in an annulus of k-space."""

    __test__ = False  # keep pytest from collecting this class

    elements: np.ndarray  # shape (count, N), complex
    labels: list[str]
    inner_radius: float
    outer_radius: float

    def __len__(self) -> int:
        return self.elements.shape[0]

    def __iter__(self):
        return iter(self.elements)

    def __getitem__(self, i):
        return self.elements[i]


def _bump(s: np.ndarray) -> np.ndarray:
    out = np.zeros_like(s)
    inside = np.abs(s) < 1.0
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - s[inside] ** 2))
    return out


def make_test_dictionary(
    grids: GridPair,
    count: int = 8,
    inner_radius: float = 0.5,
    outer_radius: float = 1.9,
    taper: float = 6.0,
) -> TestDictionary:
    """Build ``count`` normalized test functions supported in the annulus.

    Each element is a Hermite-modulated, Gaussian-tapered smooth bump centred
    on the annulus midpoint, symmetrized (even index) or antisymmetrized (odd
    index) under ``k -> -k``.  The Gaussian taper keeps the position-space
    packets compact so that dispersive decay sets in quickly.
    """
    if not 0 < inner_radius < outer_radius:
        raise ModelError("annulus radii must satisfy 0 < inner < outer")
    if count < 1:
        raise ModelError("count must be positive")
    centre = 0.5 * (inner_radius + outer_radius)
    half = 0.5 * (outer_radius - inner_radius)
    elements, labels = [], []
    for j in range(count):
        order, parity = j // 2, j % 2
        herm = np.polynomial.hermite.Hermite.basis(order)

        def profile(kk, herm=herm):
            s = (kk - centre) / half
            return herm(taper * s / np.sqrt(2.0)) * _bump(s) * np.exp(-0.5 * (taper * s) ** 2)

        b = profile(grids.k) + (-1.0 if parity else 1.0) * profile(-grids.k)
        b = b.astype(complex)
        nrm = grids.norm_k(b)
        if nrm == 0:
            raise ModelError("annulus contains no grid nodes; refine the grid")
        elements.append(b / nrm)
        labels.append(f"xi{j}_{'odd' if parity else 'even'}_h{order}")
    elements = np.array(elements)
    if np.linalg.matrix_rank(elements, tol=1e-8) < count:
        raise ModelError("dictionary elements are linearly dependent on this grid")
    return TestDictionary(elements, labels, inner_radius, outer_radius)
