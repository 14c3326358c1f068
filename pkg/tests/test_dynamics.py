import numpy as np
import pytest

from timedelay.errors import ConvergenceError, GridSizingError, PreparationError
from timedelay.localisation import make_profile
from timedelay.models import (FriedrichsModel, asymptotic_coupling_check, critical_values,
                              extract_S_timedomain, free_evolve, full_evolve,
                              localisation_expectation, localisation_weights, outgoing_native,
                              prepare_minus_state, scatter_function, stationary_smatrix)
from timedelay.spectral import apply_S, make_packet


def packet_distance(a, b):
    d = a.amplitudes - b.amplitudes
    return float(np.sqrt(a.weights @ np.sum(np.abs(d) ** 2, axis=1)))


class TestCriticalValues:
    def test_thresholds_detected(self, free_model, coupled_model):
        lam = np.linspace(-1.0, 2.0, 31)
        assert critical_values(free_model, lam) == {0.0}
        crit = critical_values(coupled_model, lam)
        assert crit == {0.0, 1.0}

    def test_sign_flip_between_nodes(self, coupled_model):
        lam = np.array([0.95, 1.04, 1.2])
        assert critical_values(coupled_model, lam) == {1.04}

    def test_level_model_has_none(self, friedrichs_model):
        assert critical_values(friedrichs_model, np.linspace(-1, 1, 11)) == set()


class TestFreeEvolution:
    def test_free_preparation_is_exact(self, free_model, packet):
        s = prepare_minus_state(free_model, packet, 30.0, 0.05)
        ref = free_evolve(free_model, packet, 0.0)
        assert np.array_equal(s.channels, ref.channels)
        assert s.meta["doubling_residual"] == 0.0

    def test_split_step_matches_free_flight(self, free_model, packet):
        s0 = free_evolve(free_model, packet, -10.0)
        s1 = full_evolve(free_model, s0, 10.0, 0.05)
        ref = free_evolve(free_model, packet, 0.0)
        assert np.sqrt(np.sum(np.abs(s1.channels - ref.channels) ** 2) * s1.dx) < 1e-8

    def test_grid_edge_guard(self, free_model, packet):
        with pytest.raises(GridSizingError):
            free_evolve(free_model, packet, 255.0)

    def test_outgoing_packet_round_trip(self, gauss_model, packet):
        # free evolution of S phi, read back at the packet energies, reproduces S phi
        scatter = scatter_function(gauss_model)
        s = free_evolve(gauss_model, packet, 40.0, scatter=scatter)
        amps = gauss_model.native_to_packet_amplitudes(outgoing_native(gauss_model, s, 40.0),
                                                       packet.energy_grid)
        exact = apply_S(stationary_smatrix(gauss_model, packet.energy_grid), packet)
        assert packet_distance(packet.with_amplitudes(amps), exact) < 1e-6


class TestMollerStates:
    def test_preparation_requires_separation(self, gauss_model, packet):
        with pytest.raises(PreparationError):
            prepare_minus_state(gauss_model, packet, 1.0, 0.05, 2)

    def test_doubling_residual_recorded(self, gauss_model, packet):
        s = prepare_minus_state(gauss_model, packet, 30.0, 0.05, 2)
        assert 0.0 < s.meta["doubling_residual"] < 1e-4
        assert s.norm() == pytest.approx(1.0, abs=1e-10)

    def test_timedomain_S_matches_stationary(self, gauss_model, packet):
        td = extract_S_timedomain(gauss_model, packet, 30.0, dt=0.05, substeps=2)
        exact = apply_S(stationary_smatrix(gauss_model, packet.energy_grid), packet)
        assert packet_distance(td, exact) < 1e-3

    def test_exit_check(self, gauss_model, packet):
        with pytest.raises(ConvergenceError):
            extract_S_timedomain(gauss_model, packet, 2.0, T_prep=30.0, dt=0.05, substeps=2)

    def test_level_model_timedomain_S(self, friedrichs_model):
        phi = make_packet(friedrichs_model, 0.0, 0.25, [1.0])
        td = extract_S_timedomain(friedrichs_model, phi, 120.0, T_prep=40.0)
        exact = apply_S(stationary_smatrix(friedrichs_model, phi.energy_grid), phi)
        assert packet_distance(td, exact) < 1e-3

    def test_level_model_starts_empty(self, friedrichs_model):
        phi = make_packet(friedrichs_model, 0.0, 0.25, [1.0])
        s = prepare_minus_state(friedrichs_model, phi, 40.0, 0.1)
        assert 0.0 < abs(s.discrete) ** 2 < 1.0
        assert s.norm() == pytest.approx(1.0, abs=1e-10)


class TestDecay:
    def test_barrier_gaps_are_integrable(self, gauss_model, packet):
        rec = asymptotic_coupling_check(gauss_model, packet, [-40, -30, -20, 20, 30, 40],
                                        dt=0.05, substeps=2)
        assert rec.integrable
        assert rec.tail_ok
        assert np.all(np.diff(rec.g_plus) < 0)
        assert np.all(np.diff(np.abs(rec.g_minus)[::-1]) < 0)

    def test_resonance_decays_at_pole_rate(self, friedrichs_model):
        phi = make_packet(friedrichs_model, 0.0, 0.25, [1.0])
        rec = asymptotic_coupling_check(friedrichs_model, phi, np.arange(10.0, 61.0, 5.0))
        # rate of |amplitude| is the distance of the pole from the real axis
        assert rec.rate_plus == pytest.approx(0.088, rel=0.1)

    def test_unknown_reference(self, gauss_model, packet):
        with pytest.raises(ValueError):
            asymptotic_coupling_check(gauss_model, packet, [1.0], outgoing="bogus")


class TestLocalisation:
    def test_weights_and_expectation(self, free_model, packet, profile):
        w = localisation_weights(free_model, profile, [10.0, 20.0])
        assert w.shape == (2, free_model.grid.points)
        assert np.all(w[1] >= w[0])
        s = free_evolve(free_model, packet, 0.0)
        # the packet at t=0 sits well inside the plateau of radius 200
        assert localisation_expectation(free_model, s, profile, 200.0) == pytest.approx(1.0, abs=1e-8)

    def test_region_larger_than_grid(self, free_model, profile):
        with pytest.raises(GridSizingError):
            localisation_weights(free_model, profile, [600.0])
        with pytest.raises(ValueError):
            localisation_weights(free_model, profile, [0.0])

    def test_level_model_coordinates(self, friedrichs_model):
        p = make_profile(1.0, 2.0)
        w = localisation_weights(friedrichs_model, p, [10.0])
        assert w.sum() > 0
        assert isinstance(friedrichs_model, FriedrichsModel)
