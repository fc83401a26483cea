"""Experiment dispatch, output files and the run manifest."""
from __future__ import annotations

import json
import platform
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy

from .. import __version__, hartree, scatter, skg
from ..model import build_grids, make_test_dictionary, scatter_params
from ..quantum import sweep as qsweep
from ..quantum.fock import DimensionError, TruncationError
from ..quantum.krylov import KrylovError
from .config import RunConfig
from .report import atomic_write, emit_report, inventory

NUMERICAL_ERRORS = (
    skg.NumericalBlowup,
    hartree.ConvergenceError,
    scatter.DispersiveDecayError,
    KrylovError,
    qsweep.SweepError,
    TruncationError,
    DimensionError,
    FloatingPointError,
    ArithmeticError,
)

TRAJECTORY_COLUMNS = ("t", "mass", "energy", "energy_drift", "mass_drift", "boundary")
PAIRING_COLUMNS = ("label", "direction", "re", "im", "T", "tail_bound", "exponent", "cauchy_gap", "quadrature_error", "proxy_re", "proxy_im")
DECAY_COLUMNS = ("direction", "label", "tau", "abs_integrand")
HARTREE_COLUMNS = (
    "delta",
    "energy",
    "lam",
    "lam_unit_coefficient",
    "quartic",
    "residual",
    "residual_unit_coefficient",
    "iterations",
    "method",
    "lower_bound",
    "full_energy",
    "identity_gap",
    "multistart_distance",
)
PROFILE_COLUMNS = ("delta", "x", "re", "im", "density")


class NumericalFailure(RuntimeError):
    """A sub-run failed numerically; partial outputs and the manifest were written."""

    def __init__(self, message: str, manifest: "RunManifest"):
        super().__init__(message)
        self.manifest = manifest


@dataclass
class RunManifest:
    config: dict
    output_dir: Path
    timings: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)
    files: dict = field(default_factory=dict)
    status: str = "ok"
    error: str | None = None
    summary: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "schema_version": 1,
            "software": {
                "package": "yukawalab",
                "version": __version__,
                "numpy": np.__version__,
                "scipy": scipy.__version__,
                "python": platform.python_version(),
            },
            "config": self.config,
            "timings": self.timings,
            "warnings": self.warnings,
            "status": self.status,
            "error": self.error,
            "summary": self.summary,
            "files": self.files,
        }

    def write(self) -> Path:
        self.files = inventory(self.output_dir)
        path = self.output_dir / "manifest.json"
        from .report import _plain

        atomic_write(path, (json.dumps(_plain(self.as_dict()), indent=2, sort_keys=True) + "\n").encode())
        return path


def initial_state(cfg: dict, grids) -> skg.ClassicalState:
    init = cfg["initial"]
    delta = float(init["delta"])
    if init["type"] == "hartree":
        return hartree.minimize(grids, delta).state()
    if init["type"] == "random":
        rng = np.random.Generator(np.random.Philox(cfg["seed"]))
        u = hartree.random_initial(grids, rng)
    else:
        w = np.asarray(init["weights"], dtype=complex)
        _, phi = grids.lowest_modes(len(w))
        w[1:] *= np.exp(1j * init["phase"])
        u = w @ phi
    u = delta * u / grids.norm_x(u)
    z = np.zeros(grids.n, complex)
    amp = float(init["meson_amplitude"])
    if amp:
        z = amp * grids.chi.astype(complex)
    return skg.ClassicalState(u, z, 0.0)


def _flow(cfg, out, man):
    block = cfg["flow"]
    grids = build_grids(RunConfig(cfg).model())
    t0 = time.perf_counter()
    state0 = initial_state(cfg, grids)
    man.timings["initial"] = time.perf_counter() - t0
    t0 = time.perf_counter()
    tr = skg.evolve(grids, state0, float(block["horizon"]), skg.FlowConfig(dt=block["dt"], stride=block["stride"]))
    man.timings["evolve"] = time.perf_counter() - t0
    e0, m0 = tr.energy[0], tr.mass[0]
    rows = [
        {
            "t": float(t),
            "mass": float(m),
            "energy": float(e),
            "energy_drift": float(abs(e - e0) / max(abs(e0), 1e-300)),
            "mass_drift": float(abs(m - m0) / max(m0, 1e-300)),
            "boundary": float(b),
        }
        for t, m, e, b in zip(tr.times, tr.mass, tr.energy, tr.boundary)
    ]
    emit_report(rows, "csv", out / "trajectory.csv", TRAJECTORY_COLUMNS)
    grids.export_csv(out)
    if block["snapshots"]:
        skg.write_snapshots(out / "snapshots.bin", grids, tr.snapshots)
    man.warnings += tr.warnings
    man.summary = {"max_energy_drift": tr.max_energy_drift(), "max_mass_drift": tr.max_mass_drift(), "samples": len(rows)}


def _scatter(cfg, out, man):
    block = cfg["scatter"]
    params = RunConfig(cfg).model()
    if block["large_box"]:
        params = scatter_params(params)
    grids = build_grids(params)
    d = make_test_dictionary(grids, count=block["dictionary_size"])
    t0 = time.perf_counter()
    state0 = initial_state(cfg, grids)
    man.timings["initial"] = time.perf_counter() - t0
    flow = skg.FlowConfig(dt=block["dt"], stride=max(1, int(round(1.0 / block["dt"]))))
    pairs, decay = [], []
    for direction in block["directions"]:
        t0 = time.perf_counter()
        res = scatter.pair_dictionary(
            grids,
            state0,
            d,
            direction,
            tol=cfg["tolerances"]["pairing"],
            initial_horizon=block["horizon"],
            max_horizon=block["max_horizon"],
            flow=flow,
            check=block["check_decay"],
        )
        man.timings[f"direction_{direction:+d}"] = time.perf_counter() - t0
        for p in res:
            pairs.append(p.as_dict())
            prof = p.profile
            if prof is not None:
                stride = max(1, len(prof.tau) // 400)
                for tau, g in zip(prof.tau[::stride], prof.g[::stride]):
                    decay.append({"direction": "+" if direction > 0 else "-", "label": p.label, "tau": float(tau), "abs_integrand": float(g)})
    emit_report(pairs, "csv", out / "pairings.csv", PAIRING_COLUMNS)
    emit_report({"pairings": pairs, "dictionary": d.labels}, "json", out / "pairings.json")
    emit_report(decay, "csv", out / "decay.csv", DECAY_COLUMNS)
    man.summary = {
        "max_abs_pairing": max(np.hypot(p["re"], p["im"]) for p in pairs),
        "max_tail_bound": max(p["tail_bound"] for p in pairs),
        "min_exponent": min(p["exponent"] for p in pairs),
    }


def _hartree(cfg, out, man):
    block = cfg["hartree"]
    grids = build_grids(RunConfig(cfg).model())
    rows, profiles = [], []
    for delta in block["deltas"]:
        t0 = time.perf_counter()
        res = hartree.minimize(grids, float(delta), method=block["method"], tol=cfg["tolerances"]["residual"] / 10, max_iter=block["max_iter"])
        ms = hartree.multi_start(grids, float(delta), starts=block["starts"], seed=cfg["seed"]) if block["starts"] > 1 else None
        full = hartree.full_energy_at_minimizer(grids, res)
        man.timings[f"delta_{delta}"] = time.perf_counter() - t0
        rows.append(
            {
                "delta": float(delta),
                "energy": res.energy,
                "lam": res.lam,
                "lam_unit_coefficient": res.lam_unit_coefficient,
                "quartic": res.quartic,
                "residual": res.residual,
                "residual_unit_coefficient": res.residual_unit_coefficient,
                "iterations": res.iterations,
                "method": res.method,
                "lower_bound": res.lower_bound,
                "full_energy": full,
                "identity_gap": abs(full - res.energy),
                "multistart_distance": ms.max_distance if ms else 0.0,
            }
        )
        for x, u in zip(grids.x, res.u0):
            profiles.append({"delta": float(delta), "x": float(x), "re": float(u.real), "im": float(u.imag), "density": float(abs(u) ** 2)})
    emit_report(rows, "csv", out / "hartree.csv", HARTREE_COLUMNS)
    emit_report(profiles, "csv", out / "hartree_profiles.csv", PROFILE_COLUMNS)
    man.summary = {"max_residual": max(r["residual"] for r in rows), "max_identity_gap": max(r["identity_gap"] for r in rows)}


def _write_sweep(table, out, man):
    emit_report(table.rows, "csv", out / "sweep.csv", qsweep.COLUMNS)
    flags = table.monotone("ground_energy") if table.observable == "ground" else table.monotone()
    emit_report({"monotone": flags, "caps": table.caps, "runtimes": table.runtimes, "extras": table.extras}, "json", out / "sweep.json")
    man.timings.update({f"cell_{k}": v for k, v in table.runtimes.items()})
    man.summary = {"monotone": flags, "all_monotone": bool(flags) and all(flags.values())}


def _quantum_sweep(cfg, out, man):
    b = cfg["quantum_sweep"]
    grids = build_grids(RunConfig(cfg).model())
    d = make_test_dictionary(grids)
    try:
        if b["observable"] == "ground":
            pairs = [(max(1, int(round(b["delta"] ** 2 / h))), h) for h in b["hslash_list"]]
            table = qsweep.ground_sweep(grids, d, b["delta"], pairs, b["du"], b["meson_modes"], b["cap"], xi_count=b["xi_count"])
        else:
            table = qsweep.semiclassical_sweep(
                grids, d, tuple(b["hslash_list"]), b["observable"], b["horizon"], b["du"], b["meson_modes"], b["cap"], b["delta"], b["step"], b["direction"], b["xi_count"]
            )
    except qsweep.SweepError as exc:
        _write_sweep(exc.partial, out, man)
        raise
    _write_sweep(table, out, man)


def _ground_sweep(cfg, out, man):
    b = cfg["ground_sweep"]
    grids = build_grids(RunConfig(cfg).model())
    d = make_test_dictionary(grids)
    pairs = [(int(n), float(h)) for n, h in b["pairs"]]
    try:
        table = qsweep.ground_sweep(grids, d, b["delta"], pairs, b["du"], b["meson_modes"], b["cap"], b["horizon"], b["xi_count"])
    except qsweep.SweepError as exc:
        _write_sweep(exc.partial, out, man)
        raise
    _write_sweep(table, out, man)


DISPATCH = {
    "flow": _flow,
    "scatter": _scatter,
    "hartree": _hartree,
    "quantum-sweep": _quantum_sweep,
    "ground-sweep": _ground_sweep,
}


def run_experiment(config: RunConfig) -> RunManifest:
    """Run one experiment; the manifest is written last even when a sub-run fails."""
    cfg = config.data
    out = config.output_dir
    out.mkdir(parents=True, exist_ok=True)
    man = RunManifest(cfg, out)
    t0 = time.perf_counter()
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        try:
            DISPATCH[config.kind](cfg, out, man)
        except NUMERICAL_ERRORS as exc:
            man.status = "failed"
            man.error = f"{type(exc).__name__}: {exc}"
        finally:
            man.timings["total"] = time.perf_counter() - t0
            man.warnings += [f"{w.category.__name__}: {w.message}" for w in caught]
            man.write()
    if man.status != "ok":
        raise NumericalFailure(man.error or "numerical failure", man)
    return man
