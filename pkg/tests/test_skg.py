import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from yukawalab import skg
from yukawalab.model import ModelParams, build_grids

_small = build_grids(ModelParams(box_half_length=8.0, grid_size=64))


def _state(grids, seed, meson=0.1):
    return skg.random_state(grids, np.random.Generator(np.random.Philox(seed)), delta=0.5, meson_scale=meson)


def test_random_state_normalization(grids):
    s = _state(grids, 3)
    assert np.isclose(skg.mass(grids, s.u), 0.25, rtol=1e-12)
    assert np.isclose(grids.norm_k(s.z), 0.1, rtol=1e-12)
    assert np.all(s.z[grids.chi == 0] == 0)


def test_short_run_conserves_mass_and_energy(small_grids):
    s = _state(small_grids, 1)
    tr = skg.evolve(small_grids, s, 5.0, skg.FlowConfig(dt=1e-3, stride=500))
    assert tr.max_mass_drift() <= 1e-12
    assert tr.max_energy_drift() <= 1e-6
    assert np.isclose(tr.final.t, 5.0)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_energy_is_constant_along_the_vector_field(seed):
    s = _state(_small, seed, meson=0.3)
    du, dz = skg.rhs(_small, s)
    eps = 1e-6
    ep = skg.total_energy(_small, skg.ClassicalState(s.u + eps * du, s.z + eps * dz))
    em = skg.total_energy(_small, skg.ClassicalState(s.u - eps * du, s.z - eps * dz))
    scale = abs(skg.total_energy(_small, s))
    assert abs(ep - em) / (2 * eps) <= 1e-6 * max(scale, 1.0)


def test_uncoupled_flow_is_exact(free_grids):
    s = skg.ClassicalState(_state(free_grids, 5).u, 0.2 * np.exp(-free_grids.k**2).astype(complex))
    tr = skg.evolve(free_grids, s, 2.0, skg.FlowConfig(dt=1e-2, stride=50))
    ref = skg.free_evolution(free_grids, s, 2.0)
    assert free_grids.norm_k(tr.final.z - np.exp(-2.0j * free_grids.omega) * s.z) <= 1e-12
    assert free_grids.norm_x(tr.final.u - ref.u) <= 1e-10


def test_backward_run_undoes_forward_run(small_grids):
    s = _state(small_grids, 2)
    cfg = skg.FlowConfig(dt=1e-2, stride=100)
    fwd = skg.evolve(small_grids, s, 3.0, cfg).final
    back = skg.evolve(small_grids, fwd, -3.0, cfg).final
    assert np.isclose(back.t, 0.0, atol=1e-12)
    assert small_grids.norm_x(back.u - s.u) <= 1e-10
    assert small_grids.norm_k(back.z - s.z) <= 1e-10


def test_static_field_is_stationary_for_free_nucleon_component(grids):
    # energy at the closed-form field equals kinetic + potential minus the quartic pair term
    s = _state(grids, 4, meson=0.0)
    z0 = -skg.source_term(grids, s.u) / grids.omega
    rep = skg.energy(grids, skg.ClassicalState(s.u, z0))
    kin = grids.inner_x(s.u, grids.apply_h(s.u)).real
    rho = np.abs(s.u) ** 2
    pair = grids.dx * np.sum(rho * skg.pair_convolution(grids, rho))
    assert np.isclose(rep.total, kin - pair, rtol=1e-10)


def test_recorded_integrand_matches_direct_evaluation(small_grids, rng):
    s = _state(small_grids, 6)
    xi = (rng.normal(size=small_grids.n) * small_grids.chi).astype(complex)
    tr = skg.evolve(small_grids, s, 0.5, skg.FlowConfig(dt=0.05, stride=5), record=xi)
    assert tr.integrands.shape == (1, 11)
    last = tr.final
    direct = small_grids.inner_k(xi, np.exp(0.5j * small_grids.omega) * skg.source_term(small_grids, last.u))
    assert np.isclose(tr.integrands[0, -1], direct, rtol=1e-12)


def test_evolve_rejects_bad_steps(small_grids):
    s = _state(small_grids, 0)
    with pytest.raises(ValueError):
        skg.evolve(small_grids, s, 1.0, skg.FlowConfig(dt=0.3))
    with pytest.raises(ValueError):
        skg.evolve(small_grids, s, 0.0)


def test_non_finite_state_raises(small_grids):
    s = _state(small_grids, 0)
    s.u[3] = np.nan
    with pytest.raises(skg.NumericalBlowup):
        skg.evolve(small_grids, s, 0.1, skg.FlowConfig(dt=0.01, stride=5))


def test_snapshot_round_trip(tmp_path, small_grids):
    states = [_state(small_grids, i) for i in range(3)]
    for i, s in enumerate(states):
        s.t = 0.5 * i
    path = tmp_path / "snap.bin"
    skg.write_snapshots(path, small_grids, states)
    back = skg.read_snapshots(path)
    assert len(back) == 3
    for a, b in zip(states, back):
        assert a.t == b.t and np.array_equal(a.u, b.u) and np.array_equal(a.z, b.z)
    path.write_bytes(b"garbage!" + path.read_bytes()[8:])
    with pytest.raises(ValueError):
        skg.read_snapshots(path)
