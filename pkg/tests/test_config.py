"""Tests for configuration loading and parsing."""

import json
import shutil
import tempfile
from pathlib import Path

import pytest

from remfield.config import (
    DEFAULT_CONFIG,
    ENTROPY_GRID_POINTS,
    ExperimentConfig,
    apply_overrides,
    load_config,
    parse_list,
    parse_model,
    resolve_scalar,
    save_config,
    split_seed,
)
from remfield.errors import ConfigError
from remfield.field import FieldKind, FieldModel
from remfield.thermo import solve

THERMO = solve(FieldModel.rademacher(0.5, 1.0))


@pytest.fixture(autouse=True)
def clean_env(monkeypatch):
    monkeypatch.delenv("REMFIELD_OUTPUT_DIR", raising=False)
    monkeypatch.delenv("REMFIELD_WORKERS", raising=False)


class TestLoadConfig:
    """Tests for the defaults/environment/file layering."""

    def setup_method(self):
        self.temp_dir = tempfile.mkdtemp()
        self.dir = Path(self.temp_dir)

    def teardown_method(self):
        shutil.rmtree(self.temp_dir, ignore_errors=True)

    def test_defaults(self):
        """No file gives a copy of the defaults."""
        config = load_config()
        assert config == DEFAULT_CONFIG
        config["analysis"]["overlap_tol"] = 0.5
        assert DEFAULT_CONFIG["analysis"]["overlap_tol"] == 0.1

    def test_yaml_file(self):
        """YAML keys are merged over the defaults, nested ones included."""
        path = self.dir / "exp.yaml"
        path.write_text("n: 16\nmodel:\n  kind: gaussian\n  stddev: 0.5\nanalysis:\n  overlap_tol: 0.2\n")
        config = load_config(path)
        assert config["n"] == 16
        assert config["model"] == {"kind": "gaussian", "stddev": 0.5}
        assert config["analysis"]["overlap_tol"] == 0.2
        assert config["analysis"]["pd_betas"] == ["2bc"]

    def test_json_file(self):
        """JSON documents load through the same parser."""
        path = self.dir / "exp.json"
        path.write_text(json.dumps({"replicas": 50, "betas": [0.5, "2bc"]}))
        config = load_config(path)
        assert config["replicas"] == 50
        assert config["betas"] == [0.5, "2bc"]

    def test_unknown_key(self):
        """Unknown keys raise ConfigError naming the key."""
        path = self.dir / "exp.yaml"
        path.write_text("replica_count: 10\n")
        with pytest.raises(ConfigError, match="replica_count"):
            load_config(path)

    def test_nested_unknown_key(self):
        """Unknown keys inside a section are reported with their section."""
        path = self.dir / "exp.yaml"
        path.write_text("analysis:\n  windw: [-1, 1]\n")
        with pytest.raises(ConfigError, match="analysis.windw"):
            load_config(path)

    def test_missing_file(self):
        """A missing file raises ConfigError."""
        with pytest.raises(ConfigError):
            load_config(self.dir / "nope.yaml")

    def test_not_a_mapping(self):
        """A top-level list is rejected."""
        path = self.dir / "exp.yaml"
        path.write_text("- 1\n- 2\n")
        with pytest.raises(ConfigError):
            load_config(path)

    def test_malformed_yaml(self):
        """Syntax errors become ConfigError."""
        path = self.dir / "exp.yaml"
        path.write_text("n: [1, 2\n")
        with pytest.raises(ConfigError):
            load_config(path)

    def test_environment(self, monkeypatch):
        """REMFIELD_* variables sit between defaults and the file."""
        monkeypatch.setenv("REMFIELD_WORKERS", "3")
        monkeypatch.setenv("REMFIELD_OUTPUT_DIR", "/tmp/elsewhere")
        assert load_config()["workers"] == 3
        path = self.dir / "exp.yaml"
        path.write_text("workers: 5\n")
        config = load_config(path)
        assert config["workers"] == 5
        assert config["output_dir"] == "/tmp/elsewhere"

    def test_bad_environment(self, monkeypatch):
        """A non-integer worker count raises ConfigError."""
        monkeypatch.setenv("REMFIELD_WORKERS", "many")
        with pytest.raises(ConfigError, match="REMFIELD_WORKERS"):
            load_config()

    def test_save_round_trip(self):
        """A saved experiment reloads to the same experiment."""
        experiment = ExperimentConfig.from_dict(load_config())
        path = self.dir / "out" / "experiment.json"
        save_config(experiment.to_dict(), path)
        assert ExperimentConfig.from_dict(load_config(path)).to_dict() == experiment.to_dict()


class TestOverrides:
    """Tests for CLI flag overrides."""

    def test_none_is_ignored(self):
        """Flags left at None keep the config value."""
        config = apply_overrides(load_config(), n=None, replicas=10)
        assert config["n"] == DEFAULT_CONFIG["n"]
        assert config["replicas"] == 10

    def test_model_object(self):
        """A parsed FieldModel replaces the model record."""
        config = apply_overrides(load_config(), model=FieldModel.zero())
        assert ExperimentConfig.from_dict(config).model.kind is FieldKind.ZERO


class TestParsing:
    """Tests for CLI string parsing."""

    def test_compact_model(self):
        """kind:key=value pairs build the model."""
        assert parse_model("rademacher:p=0.5,a=1") == FieldModel.rademacher(0.5, 1.0)
        assert parse_model("gaussian:mean=0.1,stddev=2") == FieldModel.gaussian(0.1, 2.0)

    def test_discrete_model(self):
        """List parameters are separated by '/'."""
        model = parse_model("discrete:values=1/-1,probs=0.3/0.7")
        assert model == FieldModel.discrete([1.0, -1.0], [0.3, 0.7])

    def test_bare_kind(self):
        """A kind alone uses its default parameters."""
        assert parse_model("zero").kind is FieldKind.ZERO

    def test_json_model(self):
        """A JSON record is accepted."""
        assert parse_model('{"kind": "point_mass", "h": 0.3}') == FieldModel.point_mass(0.3)

    @pytest.mark.parametrize("text", ["gaussian:stddev", '{"kind": ', "cauchy:x=1"])
    def test_bad_model(self, text):
        """Malformed model strings raise ConfigError."""
        with pytest.raises(ConfigError):
            parse_model(text)

    def test_list(self):
        """Numbers become numbers; symbols stay strings."""
        assert parse_list("0.5, 1, 2bc,") == [0.5, 1, "2bc"]
        assert parse_list("1e-3") == [0.001]

    @pytest.mark.parametrize(
        "value, expected",
        [
            (0.5, 0.5),
            ("bc", THERMO.beta_c),
            ("2bc", 2 * THERMO.beta_c),
            ("1.5*bc", 1.5 * THERMO.beta_c),
            ("emax*0.5", 0.5 * THERMO.e_max),
            ("emin", THERMO.e_min),
            ("0.25", 0.25),
        ],
    )
    def test_resolve_scalar(self, value, expected):
        """Symbols are multiples of the model's constants."""
        assert resolve_scalar(value, THERMO) == pytest.approx(expected)

    @pytest.mark.parametrize("value", ["abc", "twobc", None, True])
    def test_resolve_rejects(self, value):
        """Uninterpretable values raise ConfigError."""
        with pytest.raises(ConfigError):
            resolve_scalar(value, THERMO)


class TestExperimentConfig:
    """Tests for the validated experiment."""

    def test_defaults_resolve(self):
        """Default betas resolve against beta_c."""
        experiment = ExperimentConfig.from_dict(load_config())
        betas = experiment.resolved_betas(THERMO)
        assert betas[:2] == [0.25, 0.5]
        assert betas[2:] == pytest.approx([THERMO.beta_c, 1.5 * THERMO.beta_c, 2 * THERMO.beta_c])
        assert experiment.resolved_pd_betas(THERMO) == pytest.approx([2 * THERMO.beta_c])

    def test_default_entropy_grid(self):
        """The default grid covers the middle of the band."""
        grid = ExperimentConfig.from_dict(load_config()).resolved_entropy_grid(THERMO)
        assert len(grid) == ENTROPY_GRID_POINTS
        assert THERMO.e_min < grid[0] < grid[-1] < THERMO.e_max
        assert grid[len(grid) // 2] == pytest.approx(0.5 * (THERMO.e_min + THERMO.e_max), abs=1e-12)

    def test_beta_grid(self):
        """The curve grid runs from 0.05 to 3 beta_c."""
        values = ExperimentConfig.from_dict(load_config()).beta_grid_values(THERMO)
        assert len(values) == 50
        assert values[0] == pytest.approx(0.05)
        assert values[-1] == pytest.approx(3 * THERMO.beta_c)

    def test_bad_beta_grid(self):
        """A grid that runs backwards raises ConfigError."""
        config = load_config()
        config["beta_grid"] = {"start": 2.0, "stop": 1.0, "points": 10}
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict(config).beta_grid_values(THERMO)

    @pytest.mark.parametrize(
        "key, value",
        [("n", 0), ("replicas", 0), ("workers", 0), ("master_seed", -1), ("betas", []), ("n", "many")],
    )
    def test_invalid_values(self, key, value):
        """Out-of-range values raise ConfigError."""
        config = load_config()
        config[key] = value
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict(config)

    def test_bad_window(self):
        """An empty analysis window raises ConfigError."""
        config = load_config()
        config["analysis"]["window"] = [1.0, -1.0]
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict(config)

    def test_string_lists(self):
        """Comma-separated strings work wherever lists do."""
        config = load_config()
        config["betas"] = "0.5,2bc"
        assert ExperimentConfig.from_dict(config).betas == [0.5, "2bc"]

    def test_replica_spec(self):
        """Replica specs carry split seeds and resolved values."""
        config = load_config()
        config["n"] = 12
        experiment = ExperimentConfig.from_dict(config)
        spec = experiment.replica_spec(3, THERMO)
        assert (spec.seed_field, spec.seed_energy) == split_seed(0, 3)
        assert spec.n == 12
        assert spec.replica == 3
        assert spec.betas[-1] == pytest.approx(2 * THERMO.beta_c)
        assert experiment.replica_spec(3, THERMO, n=10).n == 10


class TestSplitSeed:
    """Tests for per-replica seeds."""

    def test_deterministic(self):
        """The same inputs give the same seeds."""
        assert split_seed(42, 7) == split_seed(42, 7)

    def test_distinct(self):
        """Seeds differ across replicas and between the two streams."""
        seeds = [split_seed(42, r) for r in range(200)]
        assert len({s for pair in seeds for s in pair}) == 400
        assert all(0 <= s < 2**64 for pair in seeds for s in pair)
