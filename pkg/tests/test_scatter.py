import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from yukawalab import scatter, skg
from yukawalab.model import make_test_dictionary

FAST = skg.FlowConfig(dt=1e-2, stride=100)
FINE = skg.FlowConfig(dt=2e-3, stride=500)  # split-step error well below 1e-6 on these horizons


@settings(max_examples=40, deadline=None)
@given(st.floats(1.2, 4.0), st.floats(1e-3, 10.0), st.floats(6.0, 20.0))
def test_fit_decay_recovers_oscillating_power_law(p, c, freq):
    # frequencies high enough that every log bin of the window holds a full period
    tau = np.linspace(1.0, 80.0, 8000)
    g = c * tau**-p * (1.0 + 0.5 * np.cos(freq * tau) ** 2)
    prof = scatter.fit_decay(tau, g, nu=1.0, window=(10.0, 80.0))
    assert prof.exponent == pytest.approx(p, abs=0.05)
    late = tau >= 62.5
    assert prof.prefactor == pytest.approx(np.max(g[late] * tau[late] ** 2))
    assert np.all(np.isfinite(prof.fit_line(np.array([20.0, 40.0]))))


def test_fit_decay_degenerate_inputs():
    tau = np.linspace(0, 10, 50)
    assert scatter.fit_decay(tau, np.zeros(50), 1.0).exponent == np.inf
    # everything below the noise floor except one spike
    g = np.zeros(50)
    g[5] = 1.0
    prof = scatter.fit_decay(tau, g, 1.0, window=(5.0, 10.0))
    assert prof.exponent == np.inf
    assert np.all(np.isnan(prof.fit_line(tau)))


def test_uncoupled_pairings_equal_initial_field(free_grids):
    d = make_test_dictionary(free_grids, count=4)
    z0 = 0.3 * np.exp(-((np.abs(free_grids.k) - 1.2) ** 2)).astype(complex)
    _, phi = free_grids.lowest_modes(1)
    s = skg.ClassicalState(0.5 * phi[0] / free_grids.norm_x(phi[0]), z0)
    for direction in (+1, -1):
        res = scatter.pair_dictionary(free_grids, s, d, direction, initial_horizon=5.0, max_horizon=5.0, flow=FAST, check=False)
        for p, xi in zip(res, d):
            assert abs(p.value - free_grids.inner_k(xi, z0)) <= 1e-12
            assert p.tail_bound == 0.0


def test_cook_value_matches_direct_proxy_at_finite_horizon(grids, dictionary):
    s = skg.random_state(grids, np.random.Generator(np.random.Philox(9)))
    res = scatter.pair_dictionary(grids, s, dictionary, +1, initial_horizon=10.0, max_horizon=10.0, flow=FINE, check=False)
    for p in res:
        assert p.horizon == pytest.approx(10.0)
        # the finite-horizon identity is exact for the continuous flow
        assert abs(p.value - p.direct_proxy) <= 1e-6
        assert p.certificate == p.tail_bound + p.quadrature_error
        row = p.as_dict()
        assert row["direction"] == "+" and row["re"] == p.value.real


def test_horizon_doubles_until_max(grids, dictionary):
    s = skg.random_state(grids, np.random.Generator(np.random.Philox(9)))
    res = scatter.pair_dictionary(grids, s, dictionary.elements[:2], +1, tol=0.0, initial_horizon=5.0, max_horizon=20.0, flow=FAST, check=False)
    assert res[0].horizon == pytest.approx(20.0)
    assert res[0].label == "xi0"


def test_intertwining_on_short_horizon(grids, dictionary):
    s = skg.random_state(grids, np.random.Generator(np.random.Philox(2)))
    out = scatter.intertwining_check(grids, s, dictionary.elements[:3], [1.0, 2.0], +1, horizon=5.0, flow=FINE)
    assert len(out) == 2 and len(out[0]) == 3
    for row in out:
        for r in row:
            assert r.ok
            assert r.tail_certificate >= r.certificate


def test_intertwining_rejects_wrong_direction(grids, dictionary):
    s = skg.random_state(grids, np.random.Generator(np.random.Philox(2)))
    with pytest.raises(ValueError):
        scatter.intertwining_check(grids, s, dictionary.elements[:1], [1.0], -1, horizon=5.0, flow=FAST)


def test_decay_check_raises_on_slow_integrand():
    prof = scatter.DecayProfile(np.arange(3.0), np.ones(3), 0.5, 1.0, (0.0, 2.0))
    p = scatter.WaveOperatorPairing("xi", 1, 0j, 2.0, 1.0, 0.5, 0.0, 0.0, 0j, prof)
    with pytest.raises(scatter.DispersiveDecayError) as exc:
        scatter.check_decay(p, nu=1.0)
    assert exc.value.profile is prof


def test_record_rejects_bad_direction(grids, dictionary):
    s = skg.random_state(grids, np.random.Generator(np.random.Philox(2)))
    with pytest.raises(ValueError):
        scatter.record_pairing_run(grids, s, dictionary.elements[:1], 1.0, direction=0)


def test_decay_profile_needs_long_horizon(grids, dictionary):
    s = skg.random_state(grids, np.random.Generator(np.random.Philox(2)))
    with pytest.raises(ValueError):
        scatter.decay_profile(grids, s, dictionary[0], 5.0)
