"""Command line interface.

``timedelay run|oracle|sweep|validate CONFIG ...``.  ``CONFIG`` is a path
to a scenario file or the name of a bundled scenario (``free``,
``barrier``, ``twochannel``, ``friedrichs``, ``chirped``).

Exit status: 0 if every requested verdict passes, 2 if any is
indeterminate and none fails, 1 on failure or invalid input.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from .config import ScenarioConfig, load_config
from .errors import TimeDelayError
from .models import FriedrichsModel, breit_wigner_fit, stationary_smatrix
from .spectral import (S_CONVENTION, ew_expectation, ew_field, ff_commutator_residual,
                       ff_expectation, tf_expectation_phase_space, tf_expectation_spectral)

EXIT_PASS, EXIT_FAIL, EXIT_INDETERMINATE = 0, 1, 2


def bundled_scenarios() -> dict:
    root = resources.files("timedelay") / "scenarios"
    return {p.name[:-5]: p for p in root.iterdir() if p.name.endswith(".toml")}


def resolve_config(name: str) -> Path:
    path = Path(name)
    if path.exists():
        return path
    bundled = bundled_scenarios()
    if name in bundled:
        return Path(str(bundled[name]))
    raise FileNotFoundError(f"no scenario file or bundled scenario named '{name}'")


def write_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _out_dir(args, cfg: ScenarioConfig) -> Path:
    return Path(args.out) if args.out else Path(cfg.output["dir"])


def _load(name: str) -> ScenarioConfig:
    return load_config(resolve_config(name))


def _run_one(cfg: ScenarioConfig, out: Path, quiet: bool = False):
    from .delay import convergence_study

    rep = convergence_study(cfg)
    write_atomic(out / "report.json", rep.to_json())
    write_atomic(out / "summary.csv", rep.summary_csv())
    write_atomic(out / "convergence.dat", rep.convergence_dat())
    if not quiet:
        print(f"scenario {cfg.id}: EW reference {rep.ew_reference:.8g}, "
              f"tau_sym -> {rep.tau_sym_extrapolated:.8g}, tau_in -> {rep.tau_in_extrapolated:.8g}")
        for v in rep.verdicts.values():
            print(f"  {v.name:<13} {v.status:<13} {v.detail}")
        for note in rep.notes:
            print(f"  note: {note}")
        print(f"  wrote {out}/report.json, summary.csv, convergence.dat")
    return rep


def cmd_run(args) -> int:
    cfg = _load(args.config)
    rep = _run_one(cfg, _out_dir(args, cfg))
    return rep.exit_code()


def oracle_data(cfg: ScenarioConfig) -> dict:
    """Stationary references only; no time propagation."""
    model, phi, p, _, _ = cfg.build()
    S = stationary_smatrix(model, phi.energy_grid, method=cfg.model.get("smatrix_method", "auto"))
    out = {
        "scenario_id": cfg.id,
        "convention": S_CONVENTION,
        "ew_reference": ew_expectation(S, phi),
        "commutator_residual": ff_commutator_residual(S, phi, p, model),
        "ff_reference": ff_expectation(phi, p, model),
        "tf_spectral": tf_expectation_spectral(phi),
        "unitarity_defect": float(S.unitarity_defect().max()),
    }
    try:
        out["tf_phase_space"] = tf_expectation_phase_space(phi, model, p)
    except TimeDelayError as exc:
        out["tf_phase_space"] = None
        out["tf_phase_space_error"] = str(exc)
    if isinstance(model, FriedrichsModel) and not model.is_free:
        lo, hi = phi.envelope_support
        lam = np.linspace(lo, hi, 8001)
        fine = stationary_smatrix(model, lam)
        phase = np.unwrap(np.angle(fine.fibers[:, 0, 0]))
        bw = breit_wigner_fit(lam, phase)
        out["resonance"] = {**bw, "max_phase_derivative": float(np.max(ew_field(fine).real))}
    return out


def cmd_oracle(args) -> int:
    cfg = _load(args.config)
    data = oracle_data(cfg)
    out = _out_dir(args, cfg)
    write_atomic(out / "oracle.json", json.dumps(data, indent=2, sort_keys=True))
    print(f"scenario {cfg.id}: EW reference {data['ew_reference']:.10g}, "
          f"commutator residual {data['commutator_residual']:.3e}")
    if "resonance" in data:
        r = data["resonance"]
        print(f"  resonance at {r['position']:.6g}, half-width {r['half_width']:.6g}, "
              f"peak delay 2/gamma = {r['peak_delay']:.6g}")
    print(f"  wrote {out}/oracle.json")
    return EXIT_PASS


def _sweep_job(job):
    cfg, out = job
    rep = _run_one(cfg, out, quiet=True)
    return {"tau_sym_extrapolated": rep.tau_sym_extrapolated,
            "tau_in_extrapolated": rep.tau_in_extrapolated,
            "tau_sym_fit_residual": rep.tau_sym_fit["residual"] if rep.tau_sym_fit else float("nan"),
            "ew_reference": rep.ew_reference, "exit_code": rep.exit_code(),
            "verdicts": ";".join(f"{k}={v.status}" for k, v in rep.verdicts.items())}


def cmd_sweep(args) -> int:
    if not args.values:
        print("error: sweep needs at least one value", file=sys.stderr)
        return EXIT_FAIL
    base = _load(args.config)
    out = _out_dir(args, base)
    jobs = []
    for v in args.values:
        cfg = base.with_value(args.key, v)
        cfg.validate()
        jobs.append((cfg, out / f"{args.key}={v}"))
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_sweep_job, jobs))
    else:
        results = [_sweep_job(j) for j in jobs]
    buf = io.StringIO()
    cols = ["value", "tau_sym_extrapolated", "tau_in_extrapolated", "tau_sym_fit_residual",
            "ew_reference", "exit_code", "verdicts"]
    w = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
    w.writeheader()
    for v, res in zip(args.values, results):
        w.writerow({"value": v, **{k: (repr(x) if isinstance(x, float) else x) for k, x in res.items()}})
        print(f"{args.key}={v}: tau_sym -> {res['tau_sym_extrapolated']:.8g} ({res['verdicts']})")
    write_atomic(out / "sweep.csv", buf.getvalue())
    print(f"wrote {out}/sweep.csv")
    codes = {r["exit_code"] for r in results}
    return EXIT_FAIL if EXIT_FAIL in codes else EXIT_INDETERMINATE if EXIT_INDETERMINATE in codes else EXIT_PASS


def cmd_validate(args) -> int:
    cfg = _load(args.config)
    print(f"scenario {cfg.id}: configuration valid")
    return EXIT_PASS


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", metavar="DIR", help="output directory (overrides [output] dir)")
    common.add_argument("--jobs", type=int, default=1, metavar="N", help="parallel sweep jobs")
    common.add_argument("--seed", type=int, default=None,
                        help="reserved; all computations are deterministic")
    parser = argparse.ArgumentParser(prog="timedelay", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn, help_ in (("run", cmd_run, "run the r-sweep and write the report"),
                            ("oracle", cmd_oracle, "stationary references only"),
                            ("validate", cmd_validate, "check a scenario without running it")):
        p = sub.add_parser(name, parents=[common], help=help_)
        p.add_argument("config")
        p.set_defaults(func=fn)
    p = sub.add_parser("sweep", parents=[common], help="run a scenario for several values of one key")
    p.add_argument("config")
    p.add_argument("key", help="dotted key, e.g. profile.support")
    p.add_argument("values", nargs="*", type=float)
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (TimeDelayError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
