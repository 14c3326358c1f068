import re

import pytest

from timedelay.cli import bundled_scenarios
from timedelay.config import ScenarioConfig, load_config, loads_config
from timedelay.errors import ConfigError
from timedelay.models import FriedrichsModel, SchrodingerModel

BASE = """
schema = 1
id = "t"

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
radii = [10.0, 20.0]
substeps = 2
"""


def edited(old, new):
    assert old in BASE
    return BASE.replace(old, new)


class TestParsing:
    def test_defaults(self):
        cfg = loads_config(BASE)
        assert cfg.sweep["t_post"] == cfg.sweep["t_prep"] == 30.0
        assert cfg.model["masses"] == [0.5]
        assert cfg.model["potential"]["cutoff"] == 10.0
        assert cfg.verdicts == {}
        model, phi, p, pol, radii = cfg.build()
        assert isinstance(model, SchrodingerModel)
        assert list(radii) == [10.0, 20.0]
        assert pol.substeps == 2

    @pytest.mark.parametrize("old,new,where", [
        ("id = \"t\"", "id = \"t\"\ncolour = 1", "top level"),
        ("variant = \"A\"", "variant = \"A\"\nlevel = 0.0", "[model]"),
        ("width = 0.5", "width = 0.5\nshape = 2", "[packet]"),
        ("support = 2.0", "support = 2.0\nkind = 1", "[profile]"),
        ("substeps = 2", "substeps = 2\nsteps = 5", "[sweep]"),
        ("height = 2.0,", "height = 2.0, depth = 1.0,", "[model.potential]"),
    ])
    def test_unknown_keys_name_their_block(self, old, new, where):
        with pytest.raises(ConfigError, match=re.escape(where)):
            loads_config(edited(old, new))

    @pytest.mark.parametrize("old,new,match", [
        ("schema = 1", "schema = 2", "schema"),
        ("variant = \"A\"", "variant = \"D\"", "variant"),
        ("support = 2.0", "support = 0.5", "profile"),
        ("radii = [10.0, 20.0]", "radii = [20.0, 10.0]", "radii"),
        ("points = 4096", "points = 1024", "Nyquist"),
        ("extent = 1024.0", "extent = 256.0", "grid-sizing guard"),
        ("substeps = 2", "substeps = 1\ndt = 0.2", "dt/substeps"),
        ("center = 4.0", "center = 1.0", "packet"),
        ("kind = \"gaussian_barrier\"", "kind = \"step\"", "kind"),
        ("width = 1.0 }", "}", "missing required key 'width'"),
    ])
    def test_invalid_values(self, old, new, match):
        with pytest.raises(ConfigError, match=match):
            loads_config(edited(old, new))

    def test_verdict_names_and_tolerances(self):
        with pytest.raises(ConfigError, match=r"\[verdicts\]"):
            loads_config(BASE + "\n[verdicts]\nheadline = 0.1\n")
        with pytest.raises(ConfigError, match="positive"):
            loads_config(BASE + "\n[verdicts]\nsymmetrized = 0\n")

    def test_level_model_keys(self):
        text = BASE.replace('variant = "A"', 'variant = "C"')
        with pytest.raises(ConfigError, match="not valid for variant C"):
            loads_config(text, validate=False)

    def test_round_trip_is_idempotent(self):
        cfg = loads_config(BASE)
        text = cfg.dumps()
        again = loads_config(text)
        assert again.to_dict() == cfg.to_dict()
        assert again.dumps() == text

    def test_with_value(self):
        cfg = loads_config(BASE)
        other = cfg.with_value("profile.support", 3.0)
        assert other.profile["support"] == 3.0
        assert cfg.profile["support"] == 2.0
        assert other.with_value("model.points", 8192).model["points"] == 8192
        with pytest.raises(ConfigError):
            cfg.with_value("model.variant", 1)
        with pytest.raises(ConfigError):
            cfg.with_value("nothing.here", 1)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(tmp_path / "absent.toml")
        bad = tmp_path / "bad.toml"
        bad.write_text("schema = = 1")
        with pytest.raises(ConfigError):
            load_config(bad)


class TestBundledScenarios:
    @pytest.mark.parametrize("name", ["free", "chirped", "barrier", "twochannel", "friedrichs"])
    def test_bundled_scenarios_validate(self, name):
        cfg = load_config(bundled_scenarios()[name])
        assert cfg.id == name
        model = cfg.build_model()
        if name == "friedrichs":
            assert isinstance(model, FriedrichsModel)
        assert ScenarioConfig.from_dict(cfg.to_dict()).to_dict() == cfg.to_dict()
