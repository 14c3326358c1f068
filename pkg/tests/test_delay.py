import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from timedelay.config import loads_config
from timedelay.delay import (ABS_FLOOR, DelayReport, Verdict, convergence_study, evaluate_verdicts,
                             fit_inverse_r, load_report, non_increasing, verify_free_formula,
                             verify_free_path, verify_free_scaling, verify_symmetrized,
                             verify_usual)
from timedelay.sojourn import SojournLedger

SMALL_BARRIER = """
schema = 1
id = "small-barrier"

[model]
variant = "A"
points = 4096
extent = 1024.0
potential = { kind = "gaussian_barrier", height = 2.0, width = 1.0 }

[packet]
center = 4.0
width = 0.5
fiber_weights = [1.0, 0.0]

[profile]
plateau = 1.0
support = 2.0

[sweep]
radii = [10.0, 20.0, 30.0, 40.0]
dt = 0.05
substeps = 2
t_prep = 30.0

[verdicts]
symmetrized = 0.05
usual = 0.05
free_formula = 0.02
free_scaling = 0.02
free_path = 0.05
"""


def synthetic_report(radii, tau_sym, tau_in=None, ew=1.0, comm=0.0, free_ref=None,
                     tf=0.0, tf_ps=0.0, theorem34=None, degraded=False, ff=1.0, T0=None):
    radii = np.asarray(radii, float)
    n = radii.size
    tau_in = tau_sym if tau_in is None else tau_in
    free_ref = np.full(n, ew) if free_ref is None else free_ref
    theorem34 = np.full(n, tf) if theorem34 is None else theorem34
    T0 = ff * radii if T0 is None else T0
    ledgers = []
    for i, r in enumerate(radii):
        flags = {"T_r0_phi": True, "T_r1": True}
        ledgers.append(SojournLedger(r, T0[i], T0[i], T0[i] + tau_sym[i], 0.0, tau_sym[i],
                                     tau_in[i], free_ref[i], theorem34[i], 0.0, 10 * r,
                                     {k: 0.0 for k in flags}, flags))
    return DelayReport("synthetic", {}, ledgers, ew, comm, ff, tf, tf_ps,
                       fit_inverse_r(radii, tau_sym), fit_inverse_r(radii, tau_in),
                       fit_inverse_r(radii, theorem34), degraded=degraded)


RADII = np.array([25.0, 50.0, 100.0, 200.0, 400.0])


class TestFit:
    @given(st.floats(-10, 10), st.floats(-100, 100))
    def test_recovers_inverse_r_law(self, limit, slope):
        fit = fit_inverse_r(RADII, limit + slope / RADII)
        assert fit["limit"] == pytest.approx(limit, abs=1e-9 * (1 + abs(slope)))
        assert fit["slope"] == pytest.approx(slope, abs=1e-7 * (1 + abs(slope)))
        assert fit["residual"] < 1e-9 * (1 + abs(slope))
        assert fit["points"] == 3

    def test_uses_upper_half(self):
        y = 1.0 + 2.0 / RADII
        y[0] = 100.0
        assert fit_inverse_r(RADII, y)["limit"] == pytest.approx(1.0)

    def test_too_few_points(self):
        assert fit_inverse_r([10.0, 20.0], [1.0, 1.0]) is None
        assert fit_inverse_r(RADII, [1, 1, 1, np.nan, 1]) is None

    def test_non_increasing(self):
        assert non_increasing([3, 2, 2, 1])
        assert not non_increasing([3, 2, 2.1])
        assert non_increasing([3, 2, 2.1], slack=0.2)


class TestVerdicts:
    def test_symmetrized_pass_and_fail(self):
        rep = synthetic_report(RADII, 1.0 + 0.5 / RADII)
        assert verify_symmetrized(rep, 0.05).status == "pass"
        rep = synthetic_report(RADII, 1.2 + 0.5 / RADII)
        assert verify_symmetrized(rep, 0.05).status == "fail"
        # converging towards the limit, but the gap grows over the upper half
        rep = synthetic_report(RADII, 1.0 + np.array([0.0, 0.0, 0.001, 0.002, 0.003]))
        assert verify_symmetrized(rep, 0.05).status == "fail"

    def test_zero_reference_uses_absolute_floor(self):
        rep = synthetic_report(RADII, np.full(5, 0.5 * ABS_FLOOR), ew=0.0)
        assert verify_symmetrized(rep, 0.05).status == "pass"
        rep = synthetic_report(RADII, np.full(5, 2 * ABS_FLOOR), ew=0.0)
        assert verify_symmetrized(rep, 0.05).status == "fail"

    def test_two_radii_and_degraded_are_indeterminate(self):
        rep = synthetic_report([25.0, 50.0], np.ones(2))
        for fn in (verify_symmetrized, verify_usual):
            assert fn(rep, 0.05).status == "indeterminate"
        rep = synthetic_report(RADII, np.ones(5), degraded=True)
        for fn in (verify_symmetrized, verify_usual, verify_free_path):
            assert fn(rep, 0.05).status == "indeterminate"

    def test_usual_commuting_branch(self):
        rep = synthetic_report(RADII, np.ones(5), tau_in=1.01 + 1 / RADII)
        assert verify_usual(rep, 0.05).status == "pass"
        rep = synthetic_report(RADII, np.ones(5), tau_in=1.2 + 1 / RADII)
        assert verify_usual(rep, 0.05).status == "fail"

    def test_usual_noncommuting_branch(self):
        diverging = 0.1 * RADII
        rep = synthetic_report(RADII, np.ones(5), tau_in=diverging + np.sqrt(RADII), comm=0.3)
        v = verify_usual(rep, 0.05)
        assert v.status == "pass" and v.value > 10
        # tau_in that also follows tau_inf + c/r gives no evidence of non-convergence
        rep = synthetic_report(RADII, np.ones(5), tau_in=2.0 + 1 / RADII, comm=0.3)
        assert verify_usual(rep, 0.05).status == "fail"

    def test_free_formula(self):
        rep = synthetic_report(RADII, np.ones(5), tf=-3.0, tf_ps=-3.0,
                               theorem34=-3.0 + 1.0 / RADII)
        assert verify_free_formula(rep, 0.02).status == "pass"
        rep = synthetic_report(RADII, np.ones(5), tf=-3.0, tf_ps=-3.1,
                               theorem34=-3.0 + 1.0 / RADII)
        assert verify_free_formula(rep, 0.02).status == "fail"
        rep = synthetic_report(RADII, np.ones(5), tf=-3.0, tf_ps=-3.0,
                               theorem34=-3.0 + np.array([0.1, 0.05, 0.0, 0.01, 0.001]))
        assert verify_free_formula(rep, 0.02).status == "fail"

    def test_free_scaling(self):
        rep = synthetic_report(RADII, np.ones(5), ff=0.75)
        assert verify_free_scaling(rep, 0.02).status == "pass"
        rep = synthetic_report(RADII, np.ones(5), ff=0.75, T0=0.8 * RADII)
        assert verify_free_scaling(rep, 0.02).status == "fail"

    def test_free_path(self):
        rep = synthetic_report(RADII, 1.0 + 1 / RADII, free_ref=np.ones(5))
        assert verify_free_path(rep, 0.05).status == "pass"
        rep = synthetic_report(RADII, 1.0 + RADII / 1e3, free_ref=np.ones(5))
        assert verify_free_path(rep, 0.05).status == "fail"

    def test_exit_codes(self):
        rep = synthetic_report(RADII, np.ones(5))
        rep.verdicts = {"a": Verdict("a", "pass", 0.1)}
        assert rep.exit_code() == 0
        rep.verdicts["b"] = Verdict("b", "indeterminate", 0.1)
        assert rep.exit_code() == 2
        rep.verdicts["c"] = Verdict("c", "fail", 0.1)
        assert rep.exit_code() == 1


class TestSerialisation:
    def test_json_round_trip_with_nan(self):
        rep = synthetic_report(RADII, 1.0 + 1 / RADII, tf_ps=float("nan"))
        evaluate_verdicts(rep, {"symmetrized": 0.05, "free_path": 0.05})
        text = rep.to_json()
        assert "NaN" not in text
        back = load_report(text)
        assert np.isnan(back.tf_phase_space)
        assert back.to_json() == text
        assert back.verdicts["symmetrized"].status == "pass"

    def test_tables(self):
        rep = synthetic_report(RADII, 1.0 + 1 / RADII)
        csv_text = rep.summary_csv().splitlines()
        assert csv_text[0].startswith("r,T_r0_phi,T_r0_Sphi")
        assert len(csv_text) == 6
        dat = rep.convergence_dat(0.05).splitlines()
        assert dat[0].startswith("#")
        assert [float(x) for x in dat[1].split()][3:] == pytest.approx([1.0, 0.95, 1.05])


@pytest.fixture(scope="module")
def small_study():
    return convergence_study(loads_config(SMALL_BARRIER))


class TestStudy:
    def test_end_to_end(self, small_study):
        rep = small_study
        assert not rep.degraded
        assert rep.commutator_residual < 1e-9
        assert rep.tau_sym_extrapolated == pytest.approx(rep.ew_reference, rel=1e-3)
        assert {v.status for v in rep.verdicts.values()} == {"pass"}
        assert rep.exit_code() == 0
        assert rep.diagnostics["unitarity_defect"] < 1e-8

    def test_bit_exact_rerun(self, small_study):
        again = convergence_study(loads_config(SMALL_BARRIER))
        assert again.to_json() == small_study.to_json()

    def test_free_formula_from_scenario(self):
        cfg = loads_config(SMALL_BARRIER.replace("fiber_weights = [1.0, 0.0]",
                                                 "fiber_weights = [1.0, 0.0]\nchirp = 2.0"))
        v = verify_free_formula(cfg, 0.02)
        assert v.status == "pass"

    def test_failed_exit_check_degrades(self):
        cfg = loads_config(SMALL_BARRIER.replace("t_prep = 30.0", "t_prep = 30.0\nt_post = 3.0"))
        rep = convergence_study(cfg)
        assert rep.degraded
        assert any("full dynamics failed" in n for n in rep.notes)
        assert rep.verdicts["symmetrized"].status == "indeterminate"
        assert rep.verdicts["free_scaling"].status == "pass"
        assert rep.exit_code() == 2
