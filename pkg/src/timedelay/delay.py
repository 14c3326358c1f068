"""Dilation sweeps, extrapolation and verdicts.

A study runs all radii of a scenario on one shared time loop, fits
``tau_r = tau_inf + c / r`` over the upper half of the sweep and compares
the limits with the stationary references.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .config import ScenarioConfig, load_config
from .errors import ConvergenceError, PacketValidityError
from .models import scatter_function, stationary_smatrix
from .sojourn import SojournLedger, ledgers_from_streams, sojourn_streams
from .spectral import (ew_expectation, ff_commutator_residual, ff_expectation,
                       tf_expectation_phase_space, tf_expectation_spectral)

__all__ = [
    "Verdict",
    "DelayReport",
    "fit_inverse_r",
    "convergence_study",
    "evaluate_verdicts",
    "load_report",
    "verify_symmetrized",
    "verify_usual",
    "verify_free_formula",
    "verify_free_scaling",
    "verify_free_path",
    "non_increasing",
    "ABS_FLOOR",
    "REF_FLOOR",
    "COMMUTING_THRESHOLD",
    "RESIDUAL_RATIO",
]

REF_FLOOR = 1e-6            # below this a reference counts as zero
ABS_FLOOR = 1e-4            # absolute tolerance used for zero references
COMMUTING_THRESHOLD = 1e-6  # ||[F_f(H0'), S] phi|| below this: commuting branch
RESIDUAL_RATIO = 10.0       # tau_in fit residual / tau_sym fit residual for non-convergence
MONOTONE_SLACK = 1e-3       # slack for monotonicity, as a fraction of the acceptance band


@dataclass
class Verdict:
    name: str
    status: str                 # "pass" | "fail" | "indeterminate"
    tolerance: float
    value: float = float("nan")
    detail: str = ""

    @property
    def passed(self) -> bool:
        return self.status == "pass"


def _band(ref: float, tol: float) -> float:
    """Acceptance half-width: relative ``tol`` or the absolute floor for a vanishing reference."""
    return tol * abs(ref) if abs(ref) >= REF_FLOOR else ABS_FLOOR


def non_increasing(values, slack: float = 0.0) -> bool:
    v = np.asarray(values, float)
    return bool(np.all(np.diff(v) <= slack))


def fit_inverse_r(radii, values) -> dict | None:
    """Least-squares ``tau_inf + c / r`` over the upper half of the sweep.

    Returns ``None`` when fewer than two points are available.
    """
    r = np.asarray(radii, float)
    y = np.asarray(values, float)
    top = np.arange(r.size) >= r.size // 2
    r, y = r[top], y[top]
    if r.size < 2 or not np.all(np.isfinite(y)):
        return None
    A = np.column_stack([np.ones_like(r), 1.0 / r])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    return {"limit": float(coef[0]), "slope": float(coef[1]),
            "residual": float(np.sqrt(np.mean(resid ** 2))), "points": int(r.size)}


def _digest(obj) -> str:
    text = json.dumps(obj, sort_keys=True, default=float)
    return hashlib.sha256(text.encode()).hexdigest()[:16]


@dataclass
class DelayReport:
    """Self-contained record of one convergence study."""

    scenario_id: str
    digests: dict
    ledgers: list
    ew_reference: float
    commutator_residual: float
    ff_reference: float
    tf_spectral: float
    tf_phase_space: float
    tau_sym_fit: dict | None
    tau_in_fit: dict | None
    theorem34_fit: dict | None
    degraded: bool = False
    notes: list = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)
    verdicts: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)

    @property
    def radii(self) -> np.ndarray:
        return np.array([l.r for l in self.ledgers])

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(l, name) for l in self.ledgers], float)

    @property
    def tau_sym_extrapolated(self) -> float:
        return self.tau_sym_fit["limit"] if self.tau_sym_fit else float("nan")

    @property
    def tau_in_extrapolated(self) -> float:
        return self.tau_in_fit["limit"] if self.tau_in_fit else float("nan")

    @property
    def all_passed(self) -> bool:
        return all(v.passed for v in self.verdicts.values())

    def exit_code(self) -> int:
        """0 if every verdict passes, 2 if any is indeterminate (and none fails), else 1."""
        statuses = {v.status for v in self.verdicts.values()}
        if "fail" in statuses:
            return 1
        if "indeterminate" in statuses:
            return 2
        return 0

    # ---- serialisation -----------------------------------------------------
    def to_dict(self) -> dict:
        d = asdict(self)
        d["ledgers"] = [l.to_dict() for l in self.ledgers]
        d["verdicts"] = {k: asdict(v) for k, v in self.verdicts.items()}
        d["tau_sym_extrapolated"] = self.tau_sym_extrapolated
        d["tau_in_extrapolated"] = self.tau_in_extrapolated
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "DelayReport":
        d = dict(d)
        d.pop("tau_sym_extrapolated", None)
        d.pop("tau_in_extrapolated", None)
        d["ledgers"] = [SojournLedger.from_dict(l) for l in d["ledgers"]]
        d["verdicts"] = {k: Verdict(**v) for k, v in d["verdicts"].items()}
        return cls(**d)

    def to_json(self) -> str:
        return json.dumps(_jsonable(self.to_dict()), indent=2, sort_keys=True)

    def summary_csv(self) -> str:
        buf = io.StringIO()
        rows = [l.csv_row() for l in self.ledgers]
        cols = list(SojournLedger.CSV_COLUMNS)
        for row in rows:
            cols += [k for k in row if k not in cols]
        w = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow({k: _fmt(row.get(k, "")) for k in cols})
        return buf.getvalue()

    def convergence_dat(self, tol: float | None = None) -> str:
        """Whitespace table ``r tau_sym tau_in ew_reference ew_lo ew_hi``."""
        if tol is None:
            sym = self.verdicts.get("symmetrized")
            tol = sym.tolerance if sym is not None else 0.05
        band = _band(self.ew_reference, tol)
        lines = ["# r tau_sym tau_in ew_reference ew_lo ew_hi"]
        for l in self.ledgers:
            lines.append(" ".join(_fmt(x) for x in (
                l.r, l.tau_sym, l.tau_in, self.ew_reference,
                self.ew_reference - band, self.ew_reference + band)))
        return "\n".join(lines) + "\n"


def _fmt(x):
    return repr(float(x)) if isinstance(x, (float, np.floating)) else str(x)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if np.isfinite(x) else str(x)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _from_jsonable(d):
    """Inverse of the non-finite float encoding used in ``report.json``."""
    if isinstance(d, dict):
        return {k: _from_jsonable(v) for k, v in d.items()}
    if isinstance(d, list):
        return [_from_jsonable(v) for v in d]
    if d in ("nan", "inf", "-inf"):
        return float(d)
    return d


def load_report(text: str) -> DelayReport:
    return DelayReport.from_dict(_from_jsonable(json.loads(text)))


def convergence_study(scenario, full: bool = True, verdicts: dict | None = None) -> DelayReport:
    """Run the dilation sweep of ``scenario`` and evaluate the requested verdicts.

    Parameters
    ----------
    scenario : ScenarioConfig or path
    full : bool
        Run the full dynamics; with ``False`` only free-evolution
        quantities (``T_r0``, the free integral formula) are computed.
    verdicts : dict, optional
        ``{name: tolerance}``; defaults to the scenario's ``[verdicts]`` block.
    """
    cfg = scenario if isinstance(scenario, ScenarioConfig) else load_config(scenario)
    model, phi, p, pol, radii = cfg.build()
    method = cfg.model.get("smatrix_method", "auto")
    notes = []

    S = stationary_smatrix(model, phi.energy_grid, method=method)
    ew = ew_expectation(S, phi)
    comm = ff_commutator_residual(S, phi, p, model)
    ff = ff_expectation(phi, p, model)
    tf_spec = tf_expectation_spectral(phi)
    try:
        tf_ps = tf_expectation_phase_space(phi, model, p)
    except (ConvergenceError, PacketValidityError) as exc:
        tf_ps = float("nan")
        notes.append(f"phase-space time operator unavailable: {exc}")

    degraded = False
    scatter = scatter_function(model, method)
    try:
        streams = sojourn_streams(model, phi, p, radii, pol, full=full, s=scatter)
    except ConvergenceError as exc:
        # keep what the free dynamics can still deliver
        degraded = True
        notes.append(f"full dynamics failed: {exc}")
        streams = sojourn_streams(model, phi, p, radii, pol, full=False, s=scatter)
    ledgers = ledgers_from_streams(streams)
    for l in ledgers:
        if not l.converged:
            degraded = True
            bad = [k for k, ok in l.tail_flags.items() if not ok]
            notes.append(f"r={l.r:g}: tail check failed for {', '.join(bad)}")

    rep = DelayReport(
        scenario_id=cfg.id,
        digests={"model": _digest(model.to_dict()), "packet": _digest(phi.to_dict()),
                 "profile": _digest(p.to_dict()), "policy": _digest(pol.to_dict())},
        ledgers=ledgers, ew_reference=ew, commutator_residual=comm, ff_reference=ff,
        tf_spectral=tf_spec, tf_phase_space=tf_ps,
        tau_sym_fit=fit_inverse_r(radii, [l.tau_sym for l in ledgers]),
        tau_in_fit=fit_inverse_r(radii, [l.tau_in for l in ledgers]),
        theorem34_fit=fit_inverse_r(radii, [l.theorem34 for l in ledgers]),
        degraded=degraded, notes=notes,
        diagnostics={"unitarity_defect": float(S.unitarity_defect().max()), **streams.meta,
                     "full_dynamics": bool(full)},
        config=cfg.to_dict())
    requested = cfg.verdicts if verdicts is None else verdicts
    evaluate_verdicts(rep, requested)
    return rep


def evaluate_verdicts(rep: DelayReport, requested: dict) -> dict:
    """Fill ``rep.verdicts`` from stored data only."""
    table = {"symmetrized": verify_symmetrized, "usual": verify_usual,
             "free_formula": verify_free_formula, "free_scaling": verify_free_scaling,
             "free_path": verify_free_path}
    rep.verdicts = {name: table[name](rep, tol) for name, tol in requested.items()}
    return rep.verdicts


def _indeterminate(name, tol, why):
    return Verdict(name, "indeterminate", tol, detail=why)


def verify_symmetrized(rep: DelayReport, tol: float) -> Verdict:
    """Extrapolated ``tau_sym`` within ``tol`` of the Eisenbud-Wigner reference, with
    ``|tau_r - EW|`` non-increasing over the upper half of the sweep."""
    name = "symmetrized"
    if rep.degraded:
        return _indeterminate(name, tol, "report degraded")
    tau = rep.column("tau_sym")
    if rep.tau_sym_fit is None or not np.all(np.isfinite(tau)):
        return _indeterminate(name, tol, "fewer than two radii in the upper half of the sweep")
    ref = rep.ew_reference
    band = _band(ref, tol)
    gap = abs(rep.tau_sym_extrapolated - ref)
    top = np.arange(tau.size) >= tau.size // 2
    gaps = np.abs(tau[top] - ref)
    mono = non_increasing(gaps, MONOTONE_SLACK * band)
    ok = gap < band and mono
    return Verdict(name, "pass" if ok else "fail", tol, gap / max(abs(ref), REF_FLOOR),
                   f"|tau_inf - EW| = {gap:.3e} (band {band:.3e}); gaps over upper half "
                   f"{'non-increasing' if mono else 'increasing'}: {np.array2string(gaps, precision=3)}")


def _residual_ratio(rep: DelayReport) -> float:
    scale = max(1.0, abs(rep.tau_sym_extrapolated))
    return rep.tau_in_fit["residual"] / max(rep.tau_sym_fit["residual"], 1e-14 * scale)


def verify_usual(rep: DelayReport, tol: float) -> Verdict:
    """Usual versus symmetrized delay, branching on the commutator ``[F_f(H0'), S] phi``."""
    name = "usual"
    if rep.degraded:
        return _indeterminate(name, tol, "report degraded")
    if rep.tau_sym_fit is None or rep.tau_in_fit is None:
        return _indeterminate(name, tol, "fewer than two radii in the upper half of the sweep")
    if rep.commutator_residual < COMMUTING_THRESHOLD:
        a, b = rep.tau_in_extrapolated, rep.tau_sym_extrapolated
        band = _band(b, tol)
        ok = abs(a - b) < band
        return Verdict(name, "pass" if ok else "fail", tol, abs(a - b) / max(abs(b), REF_FLOOR),
                       f"commuting branch (residual {rep.commutator_residual:.2e}): "
                       f"tau_in_inf = {a:.6g}, tau_sym_inf = {b:.6g}")
    ratio = _residual_ratio(rep)
    sym = verify_symmetrized(rep, tol)
    ok = ratio > RESIDUAL_RATIO and sym.passed
    return Verdict(name, "pass" if ok else "fail", tol, ratio,
                   f"non-commuting branch (residual {rep.commutator_residual:.2e}): fit residual "
                   f"ratio tau_in/tau_sym = {ratio:.3g} (needs > {RESIDUAL_RATIO:g}); "
                   f"tau_sym verdict {sym.status}")


def verify_free_formula(rep, tol: float = 0.02) -> Verdict:
    """Free integral formula: the sweep converges to ``<phi, i d/dlambda phi>``.

    Passes iff the gap at the largest ``r`` is within ``tol`` (relative, or
    the absolute floor for a vanishing reference), the gap is non-increasing
    along the sweep, and the spectral and phase-space references agree
    within 1e-3 relative.  ``rep`` may also be a scenario, which is then run
    with free dynamics only.
    """
    name = "free_formula"
    if not isinstance(rep, DelayReport):
        rep = convergence_study(rep, full=False, verdicts={})
    vals = rep.column("theorem34")
    if vals.size < 2 or not np.all(np.isfinite(vals)):
        return _indeterminate(name, tol, "need at least two radii")
    if not all(l.tail_flags.get("T_r0_phi", False) for l in rep.ledgers):
        return _indeterminate(name, tol, "free sojourn tail check failed")
    ref = rep.tf_spectral
    band = _band(ref, tol)
    gaps = np.abs(vals - ref)
    mono = non_increasing(gaps, MONOTONE_SLACK * band)
    ps = rep.tf_phase_space
    agree = bool(np.isfinite(ps)) and abs(ps - ref) <= _band(ref, 1e-3)
    ok = gaps[-1] < band and mono and agree
    return Verdict(name, "pass" if ok else "fail", tol, gaps[-1] / max(abs(ref), REF_FLOOR),
                   f"gap at r={rep.ledgers[-1].r:g}: {gaps[-1]:.3e} (band {band:.3e}); "
                   f"monotone={mono}; spectral {ref:.8g} vs phase-space {ps:.8g}")


def verify_free_scaling(rep: DelayReport, tol: float = 0.02) -> Verdict:
    """``T_r0(phi) / r`` within ``tol`` of ``<phi, F_f(H0') phi>`` at the largest ``r``."""
    name = "free_scaling"
    last = rep.ledgers[-1]
    if not last.tail_flags.get("T_r0_phi", False):
        return _indeterminate(name, tol, "free sojourn tail check failed")
    rel = abs(last.T_r0_phi / last.r / rep.ff_reference - 1.0)
    return Verdict(name, "pass" if rel < tol else "fail", tol, rel,
                   f"T_r0/r = {last.T_r0_phi / last.r:.8g}, <F_f> = {rep.ff_reference:.8g}")


def verify_free_path(rep: DelayReport, tol: float = 0.05) -> Verdict:
    """``|tau_r - tau_r^free|`` non-increasing along the sweep."""
    name = "free_path"
    if rep.degraded:
        return _indeterminate(name, tol, "report degraded")
    d = np.abs(rep.column("tau_sym") - rep.column("tau_free_ref"))
    if d.size < 2 or not np.all(np.isfinite(d)):
        return _indeterminate(name, tol, "need at least two radii with both delays")
    band = _band(rep.ew_reference, tol)
    mono = non_increasing(d, MONOTONE_SLACK * band)
    return Verdict(name, "pass" if mono else "fail", tol, float(d[-1]),
                   f"|tau_r - tau_free| = {np.array2string(d, precision=3)}")
