"""hbar sweeps comparing the truncated quantum model with its classical symbol."""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from ..model import GridPair, TestDictionary
from . import fock
from .krylov import ground_state
from .modes import ModeSystem, classical_targets, minimize_modes
from .observables import annihilator_proxy, asymptotic_correlation, asymptotic_proxies, sector_spectrum

COLUMNS = (
    "hslash",
    "observable_id",
    "quantum_value_re",
    "quantum_value_im",
    "classical_target_re",
    "classical_target_im",
    "gap",
    "tail_bound",
    "dims",
)


class SweepError(RuntimeError):
    """A sweep cell failed; ``partial`` holds the rows finished so far."""

    def __init__(self, message: str, partial: "SweepTable"):
        super().__init__(message)
        self.partial = partial


@dataclass
class SweepTable:
    observable: str
    rows: list[dict] = field(default_factory=list)
    runtimes: dict = field(default_factory=dict)
    caps: dict = field(default_factory=dict)
    extras: dict = field(default_factory=dict)

    def add(self, hbar, oid, quantum, classical, tail, dims):
        quantum, classical = complex(quantum), complex(classical)
        self.rows.append(
            {
                "hslash": float(hbar),
                "observable_id": oid,
                "quantum_value_re": quantum.real,
                "quantum_value_im": quantum.imag,
                "classical_target_re": classical.real,
                "classical_target_im": classical.imag,
                "gap": abs(quantum - classical),
                "tail_bound": float(tail),
                "dims": dims,
            }
        )

    def gaps(self, oid: str) -> list[tuple[float, float]]:
        """``(hbar, gap)`` pairs ordered by decreasing hbar."""
        pairs = [(r["hslash"], r["gap"]) for r in self.rows if r["observable_id"] == oid]
        return sorted(pairs, key=lambda p: -p[0])

    def observable_ids(self) -> list[str]:
        seen: list[str] = []
        for r in self.rows:
            if r["observable_id"] not in seen:
                seen.append(r["observable_id"])
        return seen

    def monotone(self, prefix: str = "") -> dict[str, bool]:
        """Strictly shrinking gap along decreasing hbar, per observable id."""
        out = {}
        for oid in self.observable_ids():
            if not oid.startswith(prefix):
                continue
            g = [gap for _, gap in self.gaps(oid)]
            out[oid] = bool(len(g) >= 2 and all(b < a for a, b in zip(g, g[1:])))
        return out


def default_coherent_data(grids: GridPair, delta: float = 0.5, spec: fock.FockSpec | None = None, meson_amplitudes=(0.1, 0.05j, -0.03)):
    """Nucleon ``delta (0.8 phi_0 + 0.6 e^{0.3 i} phi_1)`` and a small meson coherent amplitude."""
    _, phi = grids.lowest_modes(2)
    u = delta * (0.8 * phi[0] + 0.6 * np.exp(0.3j) * phi[1])
    z = np.zeros(grids.n, complex)
    if spec is not None:
        amps = np.zeros(spec.n_meson, complex)
        m = min(len(meson_amplitudes), spec.n_meson)
        amps[:m] = meson_amplitudes[:m]
        z = spec.lift_z(amps)
    return u, z


def _dims(spec: fock.FockSpec) -> str:
    a, b = spec.dims
    return f"{a}x{b}"


def semiclassical_sweep(
    grids: GridPair,
    dictionary: TestDictionary,
    hbars=(0.5, 0.25, 0.125),
    observable: str | tuple[str, ...] = "weyl",
    horizon: float = 2.0,
    du: int = 3,
    meson_modes: int = 3,
    cap: int | None = None,
    delta: float = 0.5,
    step: float = 0.02,
    direction: int = +1,
    xi_count: int | None = None,
) -> SweepTable:
    """Weyl, field or two-point correlation proxies at each hbar against classical targets.

    The classical targets come from the mode-truncated flow started at the
    projected coherent data, so both sides share one discretization.
    """
    kinds = (observable,) if isinstance(observable, str) else tuple(observable)
    if not kinds or any(k not in ("weyl", "field", "corr") for k in kinds) or ("corr" in kinds and len(kinds) > 1):
        raise ValueError("observable must be weyl, field, both of them, or corr (use ground_sweep for ground)")
    elements = dictionary.elements if xi_count is None else dictionary.elements[:xi_count]
    labels = dictionary.labels[: len(elements)]
    table = SweepTable("+".join(kinds))
    probe = fock.make_spec(grids, max(hbars), dictionary, du, meson_modes, nucleon_cap=1, meson_cap=1)
    u, z = default_coherent_data(grids, delta, probe)
    system = ModeSystem.from_spec(probe)
    alpha0, beta0 = probe.project_u(u), probe.project_z(z)
    xs = np.array([probe.project_xi(xi) for xi in elements])
    n = max(2, int(np.ceil(horizon / step)))
    n += n % 2
    times = direction * np.linspace(0.0, horizon, n + 1)
    t0 = time.perf_counter()
    targets = classical_targets(system, alpha0, beta0, xs, times)
    table.runtimes["classical"] = time.perf_counter() - t0
    table.extras["classical_direct_gap"] = float(np.max(np.abs(targets.pairing - targets.direct)))
    table.extras["delta"] = delta
    table.extras["horizon"] = horizon
    table.extras["direction"] = direction
    for hb in hbars:
        t0 = time.perf_counter()
        try:
            if kinds == ("corr",):
                n_sector = max(1, int(round(delta**2 / hb)))
                spec = fock.make_spec(grids, hb, dictionary, du, meson_modes, sector=n_sector, meson_cap=cap, u=u, z=z)
            else:
                spec = fock.make_spec(grids, hb, dictionary, du, meson_modes, meson_cap=cap, u=u, z=z)
            ops = fock.build_hamiltonian(spec)
            state = fock.coherent_state(spec, u, z)
            table.caps[str(hb)] = {"nucleon_cap": spec.nucleon_cap, "meson_cap": spec.meson_cap, "sector": spec.sector, "dim": spec.dim}
            if kinds == ("corr",):
                pairs = [(i, j) for i in range(len(elements)) for j in range(i, len(elements))][: len(elements)]
                for i, j in pairs:
                    res = asymptotic_correlation(ops, state, [elements[i], elements[j]], horizon, direction, step)
                    target = targets.field()[i] * targets.field()[j]
                    table.add(hb, f"corr:{labels[i]}*{labels[j]}", res.value, target, res.tail_bound, _dims(spec))
            else:
                res = asymptotic_proxies(ops, state, list(elements), horizon, direction, step, kinds=kinds)
                for kind in kinds:
                    tgt = targets.weyl() if kind == "weyl" else targets.field()
                    for j, r in enumerate(res[kind]):
                        table.add(hb, f"{kind}:{labels[j]}", r.value, tgt[j], r.tail_bound, _dims(spec))
                    gap = max(r.quadrature_gap for r in res[kind])
                    table.extras.setdefault("direct_gap", {})[f"{kind}:{hb}"] = float(gap)
        except Exception as exc:  # keep what finished
            raise SweepError(f"sweep cell hbar={hb} failed: {exc}", table) from exc
        table.runtimes[str(hb)] = time.perf_counter() - t0
    return table


def ground_sweep(
    grids: GridPair,
    dictionary: TestDictionary,
    delta: float = 0.5,
    pairs=((1, 0.25), (2, 0.125), (4, 0.0625)),
    du: int = 3,
    meson_modes: int = 3,
    cap: int | None = None,
    horizon: float = 200.0,
    xi_count: int | None = None,
) -> SweepTable:
    """Sector ground energies against the classical minimum on the same modes.

    Rows ``ground_energy`` compare ``E_hbar`` with ``E_delta``; rows
    ``annihilator:<label>`` hold the asymptotic annihilator proxy norm with
    target 0 and the certificate in ``tail_bound``.
    """
    table = SweepTable("ground")
    probe = fock.make_spec(grids, 1.0, dictionary, du, meson_modes, nucleon_cap=1, meson_cap=1)
    system = ModeSystem.from_spec(probe)
    t0 = time.perf_counter()
    classical = minimize_modes(system, delta)
    table.runtimes["classical"] = time.perf_counter() - t0
    G = probe.coupling
    lower = probe.energies[0] * delta**2 - delta**4 * sum(np.linalg.norm(G[:, :, q], 2) ** 2 / probe.omega[q] for q in range(probe.n_meson))
    table.extras.update({"classical_energy": classical.energy, "classical_spread": classical.spread, "lower_bound": float(lower), "delta": delta})
    elements = dictionary.elements if xi_count is None else dictionary.elements[:xi_count]
    labels = dictionary.labels[: len(elements)]
    brackets = {}
    for n_sector, hb in pairs:
        t0 = time.perf_counter()
        try:
            mcap = cap if cap is not None else 4
            spec = fock.FockSpec(grids, hb, du, probe.meson_nodes, 0, mcap, sector=n_sector)
            ops = fock.build_hamiltonian(spec)
            gs = ground_state(ops.H, spec)
            table.caps[str(hb)] = {"sector": n_sector, "meson_cap": mcap, "dim": spec.dim}
            table.add(hb, "ground_energy", gs.energy, classical.energy, 0.0, _dims(spec))
            brackets[str(hb)] = bool(lower - 1e-12 <= gs.energy <= classical.energy + 1e-12)
            top = gs.state.expect(ops.N2).real
            table.extras.setdefault("meson_number", {})[str(hb)] = top
            spectrum = sector_spectrum(ops)
            for label, xi in zip(labels, elements):
                prox = annihilator_proxy(ops, gs.state, gs.energy, xi, horizon, spectrum=spectrum)
                table.add(hb, f"annihilator:{label}", prox.norm, 0.0, prox.certificate, _dims(spec))
        except Exception as exc:
            raise SweepError(f"ground cell n={n_sector}, hbar={hb} failed: {exc}", table) from exc
        table.runtimes[str(hb)] = time.perf_counter() - t0
    table.extras["bracket_ok"] = brackets
    return table
