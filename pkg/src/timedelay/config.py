"""Scenario files: TOML with a required ``schema = 1`` key.

Example::

    schema = 1
    id = "barrier"

    [model]
    variant = "A"
    points = 16384
    extent = 4096.0
    potential = { kind = "gaussian_barrier", height = 2.0, width = 1.0 }

    [packet]
    center = 4.0
    width = 0.5
    fiber_weights = [1.0, 0.0]

    [profile]
    plateau = 1.0
    support = 2.0

    [sweep]
    radii = [25, 50, 100, 200, 400]
    dt = 0.05
    substeps = 2
    t_prep = 30.0

    [verdicts]
    symmetrized = 0.05

Unknown keys are rejected.  Loading validates every grid-sizing guard
before any computation starts.
"""

from __future__ import annotations

import copy
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import tomli_w

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigError, TimeDelayError
from .localisation import LocalisationProfile, make_profile
from .models import (BoxCoupling, FriedrichsModel, GaussianBarrier, GaussianCoupling, Grid,
                     NoPotential, SchrodingerModel, SquareBarrier)
from .sojourn import TimeIntegrationPolicy, required_extent
from .spectral import SpectralPacket, make_packet

SCHEMA_VERSION = 1
VERDICT_NAMES = ("symmetrized", "usual", "free_formula", "free_scaling", "free_path")

_TOP = {"schema", "id", "description", "model", "packet", "profile", "sweep", "verdicts", "output"}
_MODEL = {"variant", "points", "extent", "masses", "thresholds", "potential",
          "level", "coupling", "coupling_width", "smatrix_method"}
_POTENTIALS = {
    "none": {},
    "square_barrier": {"height": None, "width": None, "start": 0.0},
    "gaussian_barrier": {"height": None, "width": None, "center": 0.0, "cutoff": 10.0},
    "box_coupling": {"strength": None, "width": None, "start": 0.0},
    "gaussian_coupling": {"strength": None, "width": None, "center": 0.0, "cutoff": 10.0},
}
_PACKET = {"center": None, "width": None, "fiber_weights": None, "fiber_weights_imag": [],
           "chirp": 0.0, "points": 2049}
_PROFILE = {"plateau": None, "support": None}
_SWEEP = {"radii": [25.0, 50.0, 100.0, 200.0, 400.0], "dt": 0.05, "t_max_factor": 4.0,
          "tail_tol": 1e-6, "t_prep": 30.0, "t_post": None, "substeps": 1,
          "check_preparation": True}
_OUTPUT = {"dir": "out"}


def _reject_unknown(block: dict, allowed, where: str):
    extra = sorted(set(block) - set(allowed))
    if extra:
        raise ConfigError(f"{where}: unknown key(s) {', '.join(extra)}")


def _fill(block: dict, defaults: dict, where: str) -> dict:
    _reject_unknown(block, defaults, where)
    out = {}
    for key, default in defaults.items():
        if key in block:
            out[key] = block[key]
        elif default is None and key not in ("t_post",):
            raise ConfigError(f"{where}: missing required key '{key}'")
        else:
            out[key] = copy.deepcopy(default)
    return out


def _guarded(where: str, fn, *args, **kw):
    try:
        return fn(*args, **kw)
    except ConfigError:
        raise
    except (TimeDelayError, ValueError, TypeError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


@dataclass
class ScenarioConfig:
    """A parsed scenario; blocks are plain dicts with defaults filled in."""

    id: str
    model: dict
    packet: dict
    profile: dict
    sweep: dict
    verdicts: dict = field(default_factory=dict)
    output: dict = field(default_factory=lambda: dict(_OUTPUT))
    description: str = ""
    source: str | None = None

    # ---- construction ------------------------------------------------------
    @classmethod
    def from_dict(cls, raw: dict, source: str | None = None) -> "ScenarioConfig":
        raw = copy.deepcopy(raw)
        _reject_unknown(raw, _TOP, "top level")
        if raw.get("schema") != SCHEMA_VERSION:
            raise ConfigError(f"top level: 'schema' must be {SCHEMA_VERSION}, got {raw.get('schema')!r}")
        for key in ("model", "packet", "profile"):
            if key not in raw:
                raise ConfigError(f"missing block [{key}]")
        model = dict(raw["model"])
        _reject_unknown(model, _MODEL, "[model]")
        variant = model.get("variant")
        if variant not in ("A", "B", "C"):
            raise ConfigError(f"[model] variant: expected 'A', 'B' or 'C', got {variant!r}")
        for key in ("points", "extent"):
            if key not in model:
                raise ConfigError(f"[model]: missing required key '{key}'")
        model.setdefault("smatrix_method", "auto")
        if variant == "C":
            bad = {"masses", "thresholds", "potential"} & set(model)
            if bad:
                raise ConfigError(f"[model]: key(s) {', '.join(sorted(bad))} not valid for variant C")
            model.setdefault("level", 0.0)
            model.setdefault("coupling", 0.1)
            model.setdefault("coupling_width", 0.5)
        else:
            bad = {"level", "coupling", "coupling_width"} & set(model)
            if bad:
                raise ConfigError(f"[model]: key(s) {', '.join(sorted(bad))} only valid for variant C")
            n = 1 if variant == "A" else 2
            model.setdefault("masses", [0.5] * n)
            model.setdefault("thresholds", [0.0] * n)
            pot = dict(model.get("potential", {"kind": "none"}))
            kind = pot.pop("kind", None)
            if kind not in _POTENTIALS:
                raise ConfigError(f"[model.potential] kind: expected one of {sorted(_POTENTIALS)}, got {kind!r}")
            model["potential"] = {"kind": kind, **_fill(pot, _POTENTIALS[kind], "[model.potential]")}
        verdicts = dict(raw.get("verdicts", {}))
        _reject_unknown(verdicts, VERDICT_NAMES, "[verdicts]")
        for k, v in verdicts.items():
            if isinstance(v, bool) or not isinstance(v, (int, float)) or not v > 0:
                raise ConfigError(f"[verdicts] {k}: tolerance must be a positive number")
        sweep = _fill(raw.get("sweep", {}), _SWEEP, "[sweep]")
        if sweep["t_post"] is None:
            sweep["t_post"] = sweep["t_prep"]
        cfg = cls(id=str(raw.get("id", Path(source).stem if source else "scenario")),
                  model=model,
                  packet=_fill(raw["packet"], _PACKET, "[packet]"),
                  profile=_fill(raw["profile"], _PROFILE, "[profile]"),
                  sweep=sweep,
                  verdicts=verdicts,
                  output=_fill(raw.get("output", {}), _OUTPUT, "[output]"),
                  description=str(raw.get("description", "")),
                  source=source)
        return cfg

    def to_dict(self) -> dict:
        d = {"schema": SCHEMA_VERSION, "id": self.id}
        if self.description:
            d["description"] = self.description
        d.update(model=copy.deepcopy(self.model), packet=copy.deepcopy(self.packet),
                 profile=dict(self.profile), sweep=dict(self.sweep),
                 verdicts=dict(self.verdicts), output=dict(self.output))
        return d

    def dumps(self) -> str:
        return tomli_w.dumps(self.to_dict())

    # ---- builders -----------------------------------------------------------
    def build_model(self):
        m = self.model
        grid = _guarded("[model] grid", Grid, int(m["points"]), float(m["extent"]))
        if m["variant"] == "C":
            return _guarded("[model]", FriedrichsModel, grid, float(m["level"]),
                            float(m["coupling"]), float(m["coupling_width"]))
        pot = dict(m["potential"])
        kind = pot.pop("kind")
        n = len(m["masses"])
        cls = {"none": None, "square_barrier": SquareBarrier, "gaussian_barrier": GaussianBarrier,
               "box_coupling": BoxCoupling, "gaussian_coupling": GaussianCoupling}[kind]
        potential = NoPotential(n) if cls is None else _guarded("[model.potential]", cls, **pot)
        return _guarded("[model]", SchrodingerModel, grid, potential, tuple(m["masses"]),
                        tuple(m["thresholds"]), m["variant"])

    def build_packet(self, model) -> SpectralPacket:
        p = self.packet
        w = np.asarray(p["fiber_weights"], float).astype(complex)
        if p["fiber_weights_imag"]:
            imag = np.asarray(p["fiber_weights_imag"], float)
            if imag.shape != w.shape:
                raise ConfigError("[packet] fiber_weights_imag must match fiber_weights in length")
            w = w + 1j * imag
        return _guarded("[packet]", make_packet, model, float(p["center"]), float(p["width"]),
                        w, chirp=float(p["chirp"]), points=int(p["points"]))

    def build_profile(self) -> LocalisationProfile:
        return _guarded("[profile]", make_profile, self.profile["plateau"], self.profile["support"])

    def build_policy(self) -> TimeIntegrationPolicy:
        s = self.sweep
        return _guarded("[sweep]", TimeIntegrationPolicy, dt=float(s["dt"]),
                        t_max_factor=float(s["t_max_factor"]), tail_tol=float(s["tail_tol"]),
                        t_prep=float(s["t_prep"]), t_post=float(s["t_post"]),
                        substeps=int(s["substeps"]), check_preparation=bool(s["check_preparation"]))

    @property
    def radii(self) -> np.ndarray:
        r = np.asarray(self.sweep["radii"], float)
        if r.ndim != 1 or r.size == 0 or np.any(r <= 0) or np.any(np.diff(r) <= 0):
            raise ConfigError("[sweep] radii: need a non-empty strictly increasing list of positive values")
        return r

    def build(self):
        """``(model, packet, profile, policy, radii)`` after all guards."""
        model = self.build_model()
        packet = self.build_packet(model)
        profile = self.build_profile()
        policy = self.build_policy()
        radii = self.radii
        need = required_extent(model, packet, profile, radii, policy)
        if model.phi_extent() < need:
            raise ConfigError(
                f"[model] points/extent: grid-sizing guard failed, half-extent "
                f"{model.phi_extent():g} < required {need:.1f} for r_max = {radii[-1]:g}")
        if not model.is_free and isinstance(model, SchrodingerModel):
            _guarded("[sweep] dt/substeps", model.propagator, policy.dt, policy.substeps)
        return model, packet, profile, policy, radii

    def validate(self) -> None:
        self.build()

    def with_value(self, key: str, value) -> "ScenarioConfig":
        """Copy with the dotted ``key`` (e.g. ``"profile.support"``) replaced."""
        d = self.to_dict()
        parts = key.split(".")
        node = d
        for part in parts[:-1]:
            if not isinstance(node.get(part), dict):
                raise ConfigError(f"invalid key path '{key}'")
            node = node[part]
        old = node.get(parts[-1])
        if isinstance(old, bool) or not isinstance(old, (int, float)):
            raise ConfigError(f"key '{key}' does not address a numeric field")
        node[parts[-1]] = type(old)(value) if isinstance(old, int) else float(value)
        return ScenarioConfig.from_dict(d, self.source)


def load_config(path, validate: bool = True) -> ScenarioConfig:
    """Read and (by default) validate a scenario file."""
    path = Path(path)
    try:
        raw = tomllib.loads(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    cfg = ScenarioConfig.from_dict(raw, str(path))
    if validate:
        cfg.validate()
    return cfg


def loads_config(text: str, validate: bool = True) -> ScenarioConfig:
    cfg = ScenarioConfig.from_dict(tomllib.loads(text))
    if validate:
        cfg.validate()
    return cfg
