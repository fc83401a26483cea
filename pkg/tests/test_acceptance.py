"""Acceptance criteria 1 to 10 at their stated tolerances.

Each test records one PASS/FAIL line (printed in the terminal summary) before
asserting, so a failing criterion still reports its measured numbers.
"""
import time

import numpy as np
import pytest
import scipy.linalg as sla

from conftest import ACCEPTANCE
from yukawalab import hartree, scatter, skg
from yukawalab.model import make_test_dictionary
from yukawalab.quantum import fock, krylov, observables, sweep

SCATTER_FLOW = skg.FlowConfig(dt=2e-3, stride=500)


def _record(n: int, ok: bool, detail: str) -> None:
    ACCEPTANCE[n] = (bool(ok), detail)
    assert ok, detail


@pytest.fixture(scope="module")
def random_states(scatter_grids):
    rng = np.random.Generator(np.random.Philox(7))
    return [skg.random_state(scatter_grids, rng) for _ in range(3)]


def test_criterion_01_conservation(grids):
    state = skg.random_state(grids, np.random.Generator(np.random.Philox(1)))
    t0 = time.perf_counter()
    tr = skg.evolve(grids, state, 50.0, skg.FlowConfig(dt=1e-3, stride=1000))
    elapsed = time.perf_counter() - t0
    dm, de = tr.max_mass_drift(), tr.max_energy_drift()
    ok = dm <= 1e-12 and de <= 1e-6 and elapsed <= 60.0
    _record(1, ok, f"mass drift {dm:.2e} (<=1e-12), energy drift {de:.2e} (<=1e-6), {elapsed:.1f}s (<=60s)")


def test_criterion_02_uncoupled_exactness(free_grids):
    g = free_grids
    _, phi = g.lowest_modes(2)
    u0 = 0.5 * (0.8 * phi[0] + 0.6j * phi[1])
    z0 = (0.2 * np.exp(-((np.abs(g.k) - 1.2) ** 2) / 0.1) * (1 + 0.5j * g.k)).astype(complex)
    state = skg.ClassicalState(u0, z0)
    tr = skg.evolve(g, state, 10.0, skg.FlowConfig(dt=1e-2, stride=100))
    zerr = max(g.norm_k(s.z - np.exp(-1j * s.t * g.omega) * z0) for s in tr.snapshots)
    d = make_test_dictionary(g)
    perr = 0.0
    for direction in (+1, -1):
        res = scatter.pair_dictionary(g, state, d, direction, initial_horizon=10.0, max_horizon=10.0, flow=skg.FlowConfig(dt=1e-2, stride=100), check=False)
        perr = max(perr, max(abs(p.value - g.inner_k(xi, z0)) for p, xi in zip(res, d)))
    _record(2, zerr <= 1e-12 and perr <= 1e-12, f"field error {zerr:.1e}, pairing error {perr:.1e} (both <=1e-12)")


def test_criterion_03_dispersive_decay(scatter_grids, scatter_dictionary, random_states):
    t0 = time.perf_counter()
    run = scatter.record_pairing_run(scatter_grids, random_states[0], scatter_dictionary.elements[:5], 80.0, +1, SCATTER_FLOW)
    pairs = scatter.pairings_from_run(run, scatter_dictionary.labels[:5], window=(10.0, 80.0))
    elapsed = time.perf_counter() - t0
    expo = [p.exponent for p in pairs]
    ok = min(expo) >= 1.8 and elapsed <= 300.0
    _record(3, ok, f"fitted exponents {', '.join(f'{e:.2f}' for e in expo)} (>=1.8), {elapsed:.1f}s (<=300s)")


def test_criterion_04_two_route_agreement(scatter_grids, scatter_dictionary, random_states):
    worst_margin = np.inf
    worst_gap = 0.0
    for state in random_states:
        for direction in (+1, -1):
            res = scatter.pair_dictionary(
                scatter_grids, state, scatter_dictionary, direction, tol=1e-6, initial_horizon=40.0, max_horizon=80.0, flow=SCATTER_FLOW, check=False
            )
            for p in res:
                gap = abs(p.value - p.direct_proxy)
                worst_gap = max(worst_gap, gap)
                worst_margin = min(worst_margin, p.tail_bound + 1e-6 - gap)
    _record(4, worst_margin >= 0, f"largest |Cook - direct| {worst_gap:.2e}, smallest margin to tail bound + 1e-6: {worst_margin:.2e}")


def test_criterion_05_intertwining(scatter_grids, scatter_dictionary, random_states):
    worst = 0.0
    control = np.inf
    all_ok = True
    for state in random_states:
        res = scatter.intertwining_check(scatter_grids, state, scatter_dictionary.elements, [1.0, 5.0, 10.0], +1, horizon=40.0, flow=SCATTER_FLOW)
        for row in res:
            for r in row:
                all_ok &= r.ok
                worst = max(worst, r.deviation / r.certificate)
                control = min(control, r.printed_sign_deviation / r.certificate)
    detail = f"largest deviation/certificate {worst:.3f} (<=1); mirrored-rotation control/certificate >= {control:.0f}"
    _record(5, all_ok and control > 1.0, detail)


def test_criterion_06_hartree_suite(grids):
    rng = np.random.Generator(np.random.Philox(21))
    res = {d: hartree.minimize(grids, d) for d in (0.3, 0.5)}
    fd = max(hartree.gradient_check(grids, 0.5 * hartree.random_initial(grids, rng)), hartree.gradient_check(grids, res[0.5].u0))
    resid = max(r.residual for r in res.values())
    ident = max(abs(hartree.full_energy_at_minimizer(grids, r) - r.energy) for r in res.values())
    ms = hartree.multi_start(grids, 0.3, starts=5, seed=3).max_distance
    lb_ok = all(r.energy >= r.lower_bound for r in res.values())
    for _ in range(200):
        delta = rng.uniform(0.1, 1.5)
        u = hartree.random_initial(grids, rng)
        u *= delta / grids.norm_x(u)
        lb_ok &= hartree.hartree_energy(grids, u).total >= hartree.energy_lower_bound(grids, delta)
    ok = fd <= 1e-6 and resid <= 1e-8 and ident <= 1e-10 and ms <= 1e-6 and lb_ok
    _record(6, ok, f"(a) FD {fd:.1e} (b) residual {resid:.1e} (c) identity {ident:.1e} (d) multi-start {ms:.1e} (e) lower bound {'held' if lb_ok else 'VIOLATED'}")


def test_criterion_07_radiationless(scatter_grids, scatter_dictionary):
    g = scatter_grids
    m = hartree.minimize(g, 0.5)
    fine = skg.FlowConfig(dt=1e-3, stride=1000)
    v = scatter.is_radiationless(g, m.state(), scatter_dictionary, horizon=80.0, flow=fine)
    u = hartree.random_initial(g, np.random.Generator(np.random.Philox(5)))
    u *= 0.5 / g.norm_x(u)
    generic = skg.ClassicalState(u, hartree.reconstruct_field(g, u))
    w = scatter.is_radiationless(g, generic, scatter_dictionary, horizon=80.0, flow=SCATTER_FLOW)
    ok = v.radiationless and v.max_pairing <= 1e-6 and w.max_pairing >= 1e-2 and w.max_pairing / max(v.max_pairing, 1e-300) >= 1e4
    _record(7, ok, f"minimizer {v.max_pairing:.2e} (threshold {v.threshold:.2e}), generic state {w.max_pairing:.2e}, ratio {w.max_pairing / v.max_pairing:.1e}")


def test_criterion_08_quantum_kernels(grids, dictionary):
    spec = fock.make_spec(grids, 0.25, dictionary, nucleon_modes=3, meson_modes=3, sector=2, meson_cap=9)
    ops = fock.build_hamiltonian(spec)
    dim = ops.H.dim
    H = ops.H.matrix.toarray()
    vals, vecs = np.linalg.eigh(H)
    rng = np.random.default_rng(8)
    v = rng.normal(size=dim) + 1j * rng.normal(size=dim)
    v /= np.linalg.norm(v)
    kry = 0.0
    for s in (0.5, -3.0, 20.0):
        ref = vecs @ (np.exp(-1j * s * vals) * (vecs.conj().T @ v))
        kry = max(kry, float(np.linalg.norm(krylov.expm_apply(ops.H.matrix, v, s) - ref)))
    small = fock.build_hamiltonian(fock.make_spec(grids, 0.5, dictionary, nucleon_modes=2, meson_modes=2, nucleon_cap=3, meson_cap=4))
    w = v[: small.H.dim] / np.linalg.norm(v[: small.H.dim])
    kry = max(kry, float(np.linalg.norm(krylov.expm_apply(small.H.matrix, w, 1.3) - sla.expm(-1.3j * small.H.matrix.toarray()) @ w)))
    gs = krylov.ground_state(ops.H, spec)
    gerr = abs(gs.energy - vals[0])
    overlap = abs(1.0 - abs(np.vdot(vecs[:, 0], gs.state.vector)))
    full = fock.make_spec(grids, 0.5, dictionary, nucleon_modes=3, meson_modes=3, nucleon_cap=4, meson_cap=4)
    fops = fock.build_hamiltonian(full)
    comm = fock.commutator_norm(fops.H, fops.N1)
    u, z = sweep.default_coherent_data(grids, 0.5, full)
    cspec = fock.make_spec(grids, 0.5, dictionary, nucleon_modes=3, meson_modes=3, u=u, z=z)
    cops = fock.build_hamiltonian(cspec)
    psi = fock.coherent_state(cspec, u, z)
    cf = 0.0
    for x, y in [(np.array([0.3, 0.1j, -0.2]), None), (np.array([0.1, 0.2, 0.0]), np.array([0.2j, -0.1, 0.05]))]:
        cf = max(cf, abs(observables.characteristic_function(cops, psi, x, y) - observables.coherent_characteristic(cspec, u, z, x, y)))
    ok = dim <= 2000 and kry <= 1e-10 and gerr <= 1e-10 and overlap <= 1e-10 and comm <= 1e-10 and cf <= 1e-6
    _record(8, ok, f"dim {dim}: Krylov {kry:.1e}, ground energy {gerr:.1e}, 1-|overlap| {overlap:.1e}, [H,N1] {comm:.1e}, characteristic {cf:.1e}")


def test_criterion_09_semiclassical_trend(grids, dictionary):
    t0 = time.perf_counter()
    table = sweep.semiclassical_sweep(grids, dictionary, (0.5, 0.25, 0.125), ("weyl", "field"), horizon=2.0, step=0.04, delta=0.5)
    elapsed = time.perf_counter() - t0
    flags = table.monotone()
    bad = [oid for oid, ok in flags.items() if not ok]
    ratios = [g[-1][1] / g[0][1] for g in (table.gaps(oid) for oid in flags)]
    ok = len(flags) == 2 * len(dictionary) and not bad and elapsed <= 1800.0
    detail = f"{len(flags) - len(bad)}/{len(flags)} observables strictly decreasing, gap ratio hbar 0.125/0.5 in [{min(ratios):.2f}, {max(ratios):.2f}], {elapsed:.0f}s (<=1800s)"
    if bad:
        detail += f"; not monotone: {', '.join(bad)}"
    _record(9, ok, detail)


def test_criterion_10_ground_energy_trend(grids, dictionary):
    table = sweep.ground_sweep(grids, dictionary, 0.5, ((1, 0.25), (2, 0.125), (4, 0.0625)))
    gaps = [g for _, g in table.gaps("ground_energy")]
    mono = table.monotone("ground_energy")["ground_energy"]
    brackets = all(table.extras["bracket_ok"].values())
    ann = [r for r in table.rows if r["observable_id"].startswith("annihilator:")]
    worst = max(r["gap"] / r["tail_bound"] for r in ann)
    ok = mono and brackets and worst <= 1.0
    _record(10, ok, f"gaps {', '.join(f'{g:.2e}' for g in gaps)}; bracket {'ok' if brackets else 'broken'}; largest annihilator proxy/certificate {worst:.2f} (<=1)")
