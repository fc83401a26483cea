"""CSV/JSON emission with round-trip float formatting, and figure rendering."""
from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
import tempfile
from pathlib import Path
from typing import Any, Iterable

import numpy as np

SCHEMA_VERSION = 1


def _plain(value: Any) -> Any:
    """Python scalars for numpy values; non-finite floats become strings."""
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, complex):
        return {"re": _plain(value.real), "im": _plain(value.imag)}
    if isinstance(value, float) and not math.isfinite(value):
        return repr(value)
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_plain(v) for v in value.tolist()]
    return value


def _cell(value: Any) -> str:
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)  # shortest round-trip decimal
    return str(value)


def atomic_write(path: str | Path, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def csv_text(rows: Iterable[dict], columns: Iterable[str]) -> str:
    columns = list(columns)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_cell(r.get(c, "")) for c in columns])
    return buf.getvalue()


def emit_report(results: Any, fmt: str, path: str | Path, columns: Iterable[str] | None = None) -> Path:
    """Write ``results`` as CSV (list of row dicts) or JSON (any structure).

    CSV needs ``columns`` when ``results`` is empty so the header is still written.
    """
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"output directory {path.parent} is not writable: {exc}") from exc
    if not os.access(path.parent, os.W_OK):
        raise OSError(f"output directory {path.parent} is not writable")
    if fmt == "csv":
        rows = list(results)
        if columns is None:
            if not rows:
                raise ValueError("columns are required for an empty table")
            columns = list(rows[0].keys())
        atomic_write(path, csv_text(rows, columns).encode())
    elif fmt == "json":
        atomic_write(path, (json.dumps(_plain(results), indent=2, sort_keys=True) + "\n").encode())
    else:
        raise ValueError(f"unknown report format {fmt!r}")
    return path


def _parse(text: str) -> Any:
    if text in ("true", "false"):
        return text == "true"
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


def read_csv(path: str | Path) -> tuple[list[str], list[dict]]:
    """Header and rows with numbers parsed back to int/float."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [{c: _parse(v) for c, v in zip(header, line)} for line in reader]
    return header, rows


def sha256(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def inventory(run_dir: str | Path, exclude: tuple[str, ...] = ("manifest.json",)) -> dict[str, str]:
    run_dir = Path(run_dir)
    out = {}
    for p in sorted(run_dir.rglob("*")):
        if p.is_file() and p.name not in exclude and not p.name.startswith("."):
            out[p.relative_to(run_dir).as_posix()] = sha256(p)
    return out


# figures ----------------------------------------------------------------------


def _figure():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def _save(plt, fig, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, dpi=110, metadata={"Software": None})
    plt.close(fig)
    return path


def _flow_figures(run_dir: Path, out: Path) -> list[Path]:
    plt = _figure()
    _, rows = read_csv(run_dir / "trajectory.csv")
    t = np.array([r["t"] for r in rows])
    fig, ax = plt.subplots(1, 2, figsize=(9, 3.5))
    ax[0].semilogy(t, np.maximum([r["energy_drift"] for r in rows], 1e-18), label="energy")
    ax[0].semilogy(t, np.maximum([r["mass_drift"] for r in rows], 1e-18), label="mass")
    ax[0].set_xlabel("t")
    ax[0].set_ylabel("relative drift")
    ax[0].legend()
    ax[1].plot(t, [r["boundary"] for r in rows])
    ax[1].set_xlabel("t")
    ax[1].set_ylabel("boundary mass fraction")
    return [_save(plt, fig, out / "flow_drift.png")]


def _scatter_figures(run_dir: Path, out: Path) -> list[Path]:
    plt = _figure()
    _, rows = read_csv(run_dir / "decay.csv")
    fig, ax = plt.subplots(figsize=(6, 4))
    keys = sorted({(r["direction"], r["label"]) for r in rows}, key=str)
    for key in keys:
        sel = [r for r in rows if (r["direction"], r["label"]) == key]
        ax.loglog([r["tau"] for r in sel], np.maximum([r["abs_integrand"] for r in sel], 1e-20), lw=0.8, label=f"{key[1]} ({key[0]})")
    ax.set_xlabel("|tau|")
    ax.set_ylabel("|integrand|")
    ax.legend(fontsize=6, ncol=2)
    return [_save(plt, fig, out / "scatter_decay.png")]


def _hartree_figures(run_dir: Path, out: Path) -> list[Path]:
    plt = _figure()
    _, rows = read_csv(run_dir / "hartree_profiles.csv")
    fig, ax = plt.subplots(figsize=(6, 4))
    for d in sorted({r["delta"] for r in rows}):
        sel = [r for r in rows if r["delta"] == d]
        ax.plot([r["x"] for r in sel], [r["density"] for r in sel], label=f"delta={d}")
    ax.set_xlabel("x")
    ax.set_ylabel("|u|^2")
    ax.set_xlim(-6, 6)
    ax.legend()
    return [_save(plt, fig, out / "hartree_density.png")]


def _sweep_figures(run_dir: Path, out: Path) -> list[Path]:
    plt = _figure()
    _, rows = read_csv(run_dir / "sweep.csv")
    fig, ax = plt.subplots(figsize=(6, 4))
    ids = []
    for r in rows:
        if r["observable_id"] not in ids:
            ids.append(r["observable_id"])
    for oid in ids:
        sel = sorted((r for r in rows if r["observable_id"] == oid), key=lambda r: r["hslash"])
        ax.loglog([r["hslash"] for r in sel], np.maximum([r["gap"] for r in sel], 1e-18), marker="o", lw=0.8, label=oid)
    ax.set_xlabel("hbar")
    ax.set_ylabel("|quantum - classical|")
    ax.legend(fontsize=6)
    return [_save(plt, fig, out / "sweep_gaps.png")]


FIGURES = {
    "flow": _flow_figures,
    "scatter": _scatter_figures,
    "hartree": _hartree_figures,
    "quantum-sweep": _sweep_figures,
    "ground-sweep": _sweep_figures,
}


def render_report(run_dir: str | Path) -> list[Path]:
    """Render figures for a finished run into ``<run_dir>/figures`` and refresh the manifest inventory."""
    run_dir = Path(run_dir)
    manifest_path = run_dir / "manifest.json"
    if not manifest_path.exists():
        raise FileNotFoundError(f"{manifest_path} not found; is this a run directory?")
    manifest = json.loads(manifest_path.read_text())
    kind = manifest["config"]["kind"]
    paths = FIGURES[kind](run_dir, run_dir / "figures")
    manifest["files"] = inventory(run_dir)
    atomic_write(manifest_path, (json.dumps(manifest, indent=2, sort_keys=True) + "\n").encode())
    return paths
