import json

import numpy as np
import pytest

from timedelay.errors import ConstraintError, GridSizingError
from timedelay.localisation import make_profile
from timedelay.models import FriedrichsModel, Grid, scatter_function, stationary_smatrix
from timedelay.sojourn import (SojournLedger, SojournValue, TimeIntegrationPolicy,
                               ledgers_from_streams, required_extent, sojourn_difference,
                               sojourn_free, sojourn_full, sojourn_streams, tau_free_reference,
                               tau_in, tau_sym, theorem34_integral)
from timedelay.spectral import FiberSMatrix, ew_expectation, ff_expectation, make_packet

RADII = [25.0, 50.0]


@pytest.fixture(scope="module")
def pol():
    return TimeIntegrationPolicy(dt=0.05, t_prep=30.0, substeps=2)


@pytest.fixture(scope="module")
def free_ledgers(free_model, packet, profile, pol):
    st = sojourn_streams(free_model, packet, profile, RADII, pol, full=True,
                         s=scatter_function(free_model))
    return st, ledgers_from_streams(st)


@pytest.fixture(scope="module")
def barrier_ledgers(gauss_model, packet, profile, pol):
    st = sojourn_streams(gauss_model, packet, profile, RADII, pol, full=True,
                         s=scatter_function(gauss_model))
    return st, ledgers_from_streams(st)


class TestPolicy:
    def test_defaults_and_window(self):
        p = TimeIntegrationPolicy(t_prep=20.0)
        assert p.t_post == 20.0
        p = TimeIntegrationPolicy(t_prep=20.0, t_post=50.0, t_max_factor=2.0)
        assert p.window == 50.0
        assert p.t_max(10.0, 2.0) == pytest.approx(60.0)

    @pytest.mark.parametrize("kw", [{"dt": 0.0}, {"t_max_factor": -1.0}, {"tail_tol": 0.0},
                                    {"t_prep": -1.0}, {"substeps": 0}, {"substeps": 1.5}])
    def test_invalid(self, kw):
        with pytest.raises(ConstraintError):
            TimeIntegrationPolicy(**kw)

    def test_required_extent_guard(self, free_model, packet, profile, pol):
        need = required_extent(free_model, packet, profile, [200.0], pol)
        assert need > free_model.phi_extent()
        with pytest.raises(GridSizingError):
            sojourn_free(free_model, packet, profile, 200.0, pol)


class TestFreeSojourn:
    def test_free_dynamics_has_no_delay(self, free_ledgers):
        st, leds = free_ledgers
        for led in leds:
            assert led.tau_sym == 0.0
            assert led.tau_in == 0.0
            assert led.T_2 == 0.0
            assert led.T_r1 == led.T_r0_phi
            assert led.sojourn_diff == 0.0
            assert led.tau_free_ref == 0.0
            assert led.converged

    def test_streams_are_probabilities(self, free_ledgers):
        st, _ = free_ledgers
        assert np.all(st.free_phi >= 0)
        assert np.all(st.free_phi <= 1 + 1e-12)
        assert st.times[st.n_max] == 0.0

    def test_sojourn_grows_like_free_function(self, free_model, packet, profile, free_ledgers):
        _, leds = free_ledgers
        ff = ff_expectation(packet, profile, free_model)
        for led in leds:
            assert led.T_r0_phi > 0
            assert led.T_r0_phi / led.r == pytest.approx(ff, rel=1e-6)

    def test_real_packet_has_zero_free_time(self, free_ledgers):
        _, leds = free_ledgers
        for led in leds:
            assert abs(led.theorem34) < 1e-8 * led.T_r0_phi

    def test_chirp_is_recovered(self, free_model, profile, pol):
        phi = make_packet(free_model, 4.0, 0.5, [1.0, 0.0], chirp=3.0)
        val = theorem34_integral(free_model, phi, profile, 50.0, pol)
        assert isinstance(val, SojournValue)
        assert val.converged
        assert float(val) == pytest.approx(-3.0, rel=1e-3)

    def test_identity_S_gives_zero_difference(self, free_model, packet, profile, pol):
        eye = FiberSMatrix(packet.energy_grid,
                           np.repeat(np.eye(2)[None], packet.energy_grid.size, axis=0))
        assert sojourn_difference(free_model, packet, eye, profile, 25.0, pol) == 0.0
        assert tau_free_reference(free_model, packet, eye, profile, 25.0, pol) == 0.0


class TestFullSojourn:
    def test_ledger_identities(self, barrier_ledgers):
        _, leds = barrier_ledgers
        for led in leds:
            res = led.identity_residuals()
            assert abs(res["tau_sym"]) < 1e-8 * led.T_r0_phi
            assert abs(res["tau_in"]) < 1e-8 * led.T_r0_phi
            assert tau_in(led) == pytest.approx(led.tau_in, abs=1e-8 * led.T_r0_phi)

    def test_nonnegative_and_bounded(self, barrier_ledgers):
        st, leds = barrier_ledgers
        assert np.all(st.full >= 0)
        assert np.all(st.full <= 1 + 1e-10)
        for led in leds:
            assert led.T_r1 > 0 and led.T_r0_Sphi > 0
            assert led.T_2 == 0.0

    def test_delay_is_r_independent(self, barrier_ledgers, gauss_model, packet):
        ew = ew_expectation(stationary_smatrix(gauss_model, packet.energy_grid), packet)
        _, leds = barrier_ledgers
        for led in leds:
            assert led.tau_sym == pytest.approx(ew, rel=1e-3)
            assert led.tau_free_ref == pytest.approx(ew, rel=1e-6)

    def test_diagnostics(self, barrier_ledgers):
        st, _ = barrier_ledgers
        assert st.meta["norm_drift_per_time"] < 1e-10
        assert st.meta["doubling_residual"] < 1e-4
        assert st.meta["exit_probability"] < 1e-6

    def test_smatrix_and_callable_paths_agree(self, gauss_model, packet, profile, pol):
        s = stationary_smatrix(gauss_model, packet.energy_grid)
        a = sojourn_difference(gauss_model, packet, s, profile, 25.0, pol)
        b = sojourn_difference(gauss_model, packet, scatter_function(gauss_model), profile, 25.0, pol)
        assert a == pytest.approx(b, abs=1e-6)

    def test_level_model_complement_occupation(self, friedrichs_model):
        model = FriedrichsModel(Grid(1024, 2.5), 0.0, friedrichs_model.coupling, 0.55)
        phi = make_packet(model, 0.0, 0.25, [1.0])
        p = make_profile(1.0, 2.0)
        pol = TimeIntegrationPolicy(dt=0.1, t_max_factor=3.0, t_prep=40.0, t_post=120.0)
        T1, T2 = sojourn_full(model, phi, p, 25.0, pol)
        assert T2 > 0
        assert T1 > 0
        assert T1.converged and T2.converged
        led = tau_sym(model, phi, scatter_function(model), p, 25.0, pol)
        assert led.T_2 == pytest.approx(float(T2), rel=1e-12)
        assert led.T_r1 == pytest.approx(float(T1), rel=1e-12)


class TestTruncation:
    def test_short_window_is_flagged(self, free_model, packet, profile):
        short = TimeIntegrationPolicy(t_max_factor=0.3, t_prep=5.0)
        val = sojourn_free(free_model, packet, profile, 25.0, short)
        assert not val.converged
        assert val.tail > short.tail_tol

    def test_doubling_t_max_is_stable(self, free_model, packet, profile, pol):
        longer = TimeIntegrationPolicy(dt=0.05, t_prep=30.0, substeps=2, t_max_factor=8.0)
        a = sojourn_free(free_model, packet, profile, 25.0, pol)
        b = sojourn_free(free_model, packet, profile, 25.0, longer)
        assert a.converged and b.converged
        assert float(a) == pytest.approx(float(b), rel=1e-9)


class TestLedgerSerialisation:
    def test_round_trip(self, barrier_ledgers):
        _, leds = barrier_ledgers
        led = leds[0]
        back = SojournLedger.from_dict(json.loads(json.dumps(led.to_dict())))
        assert back == led
        row = led.csv_row()
        assert set(SojournLedger.CSV_COLUMNS) <= set(row)
        assert row["tail_ok_T_r1"] == 1
