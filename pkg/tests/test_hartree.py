import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from yukawalab import hartree, skg
from yukawalab.model import CutoffSpec, ModelParams, build_grids, distance_mod_phase

_small = build_grids(ModelParams(box_half_length=8.0, grid_size=64))
_kernel = hartree.build_kernel(_small)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_quartic_term_fft_matches_double_sum(seed):
    u = hartree.random_initial(_small, np.random.Generator(np.random.Philox(seed)))
    assert np.isclose(hartree.quartic_term(_small, u), hartree.quartic_term_direct(_small, _kernel, u), rtol=1e-10)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(0.1, 1.5))
def test_lower_bound_holds_on_random_states(seed, delta):
    u = hartree.random_initial(_small, np.random.Generator(np.random.Philox(seed)))
    u *= delta / _small.norm_x(u)
    assert hartree.hartree_energy(_small, u).total >= hartree.energy_lower_bound(_small, delta) - 1e-12


def test_gradient_matches_finite_differences(grids, rng):
    u = 0.5 * hartree.random_initial(grids, rng)
    assert hartree.gradient_check(grids, u) <= 1e-6
    # a wrong quartic factor must be detected
    assert hartree.gradient_check(grids, u, quartic_factor=2.0) > 1e-3


@pytest.mark.parametrize("delta,energy,lam", [(0.3, 0.16961, 1.769), (0.5, 0.419706, 1.3568)])
def test_minimizer_reference_values(grids, delta, energy, lam):
    res = hartree.minimize(grids, delta)
    assert res.residual <= 1e-8
    assert res.energy == pytest.approx(energy, abs=1e-5)
    assert res.lam == pytest.approx(lam, abs=1e-3)
    assert res.energy >= res.lower_bound
    assert np.isclose(grids.norm_x(res.u0), delta, rtol=1e-12)


def test_minimizer_beats_free_ground_state(grids, minimizer_05):
    _, phi0 = grids.lowest_modes(1)
    u = 0.5 * phi0[0] / grids.norm_x(phi0[0])
    assert minimizer_05.energy < hartree.hartree_energy(grids, u).total


def test_full_energy_identity(grids, minimizer_05):
    full = hartree.full_energy_at_minimizer(grids, minimizer_05)
    assert abs(full - minimizer_05.energy) <= 1e-10


def test_static_field_minimizes_over_meson(grids, minimizer_05, rng):
    base = skg.total_energy(grids, minimizer_05.state())
    for _ in range(3):
        dz = 1e-2 * grids.chi * (rng.normal(size=grids.n) + 1j * rng.normal(size=grids.n))
        s = minimizer_05.state()
        s.z = s.z + dz
        assert skg.total_energy(grids, s) > base


def test_projected_gradient_agrees_with_scf(grids, minimizer_05):
    pg = hartree.minimize(grids, 0.5, method="pg")
    assert pg.method == "projected-gradient"
    assert distance_mod_phase(grids, pg.u0, minimizer_05.u0) <= 1e-6
    assert pg.energy == pytest.approx(minimizer_05.energy, abs=1e-10)


def test_multi_start_unique_at_small_mass(grids):
    rep = hartree.multi_start(grids, 0.3, starts=3, seed=11)
    assert rep.max_distance <= 1e-6


def test_unit_coefficient_variant_is_not_stationary(minimizer_05):
    # the stationary equation carries the factor 2 on the pair term
    assert minimizer_05.residual_unit_coefficient > 1e-3


def test_uncoupled_minimizer_is_ground_mode():
    g = build_grids(ModelParams(box_half_length=8.0, grid_size=64, cutoff=CutoffSpec(amplitude=0.0)))
    res = hartree.minimize(g, 0.7)
    assert res.energy == pytest.approx(2.0 * 0.49, abs=1e-8)
    assert res.quartic == 0.0


def test_bad_arguments():
    with pytest.raises(ValueError):
        hartree.minimize(_small, -1.0)
    with pytest.raises(ValueError):
        hartree.minimize(_small, 0.5, method="newton")


def test_convergence_error_carries_history():
    with pytest.raises(hartree.ConvergenceError) as exc:
        hartree.minimize(_small, 0.5, method="pg", max_iter=2, tol=1e-14)
    assert len(exc.value.history) >= 1
