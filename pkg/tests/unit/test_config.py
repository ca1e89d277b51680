"""Tests for the flat TOML experiment configuration."""

import pytest

from unitlab.core.config import (
    CONFIG_SCHEMA,
    ExperimentConfig,
    config_help,
    find_config,
    load_config,
    parse_config,
    parse_config_text,
    serialize_config,
    validate_for_mode,
)
from unitlab.core.constants import NormKind, RunMode
from unitlab.core.error_handling import ConfigurationError


class TestParsing:
    """Line-numbered errors and defaults."""

    def test_empty_file_in_bounds_mode(self):
        """An empty file gives the defaults."""
        assert parse_config_text("", RunMode.BOUNDS) == ExperimentConfig()

    def test_values_and_comments(self):
        """Comments are skipped and values typed."""
        cfg = parse_config_text('# comment\nepochs = 3\nnorms = ["bn", "unitization"]\n'
                                "hidden_widths = [4, 2]\n")
        assert cfg.epochs == 3
        assert cfg.norm_kinds() == [NormKind.BN, NormKind.UNITIZATION]

    def test_type_error_reports_line(self):
        """A TOML syntax error reports its line."""
        with pytest.raises(ConfigurationError) as exc_info:
            parse_config_text("seed = 1\nepochs = ten\n")
        assert exc_info.value.line == 2

    def test_wrong_type_reports_line(self):
        """A value of the wrong type reports its line and key."""
        with pytest.raises(ConfigurationError) as exc_info:
            parse_config_text('seed = 1\n\nlr = "fast"\n')
        assert exc_info.value.line == 3
        assert "lr" in exc_info.value.message

    def test_unknown_key(self):
        """Unknown keys are reported with their line."""
        with pytest.raises(ConfigurationError) as exc_info:
            parse_config_text("seed = 1\nlearning_rate = 0.1\n")
        assert exc_info.value.line == 2
        assert exc_info.value.details["key"] == "learning_rate"

    def test_tables_rejected(self):
        """TOML tables are not part of the flat format."""
        with pytest.raises(ConfigurationError):
            parse_config_text("[critic]\nclip = 0.01\n")

    def test_missing_required_key(self):
        """A missing required key is reported at the end of the file."""
        with pytest.raises(ConfigurationError) as exc_info:
            parse_config_text('train_images = "a"\n', RunMode.TRAIN)
        assert exc_info.value.details["key"] == "train_labels"
        assert exc_info.value.line == 2

    def test_range_check(self):
        """Out-of-range values report their line."""
        with pytest.raises(ConfigurationError) as exc_info:
            parse_config_text("epochs = 1\nmomentum = 1.5\n")
        assert exc_info.value.line == 2

    def test_norms_length_must_match(self):
        """A norms list needs one entry per hidden layer."""
        with pytest.raises(ConfigurationError):
            parse_config_text('hidden_widths = [4, 4]\nnorms = ["bn"]\n')

    def test_bool_is_not_an_int(self):
        """Booleans are not accepted as integers."""
        with pytest.raises(ConfigurationError):
            parse_config_text("epochs = true\n")

    def test_int_accepted_for_float(self):
        """Integers are accepted for float keys."""
        assert parse_config_text("lr = 1\n").lr == 1.0

    def test_conv_keys(self):
        """Conv channels and the conv norm are read and checked."""
        cfg = parse_config_text('conv_channels = [4, 8]\nconv_norm = "bn"\n')
        assert cfg.conv_channels == [4, 8]
        assert cfg.conv_norm == "bn"
        assert ExperimentConfig().conv_channels == []

    def test_conv_norm_choices(self):
        """conv_norm must name a normalization kind."""
        with pytest.raises(ConfigurationError) as exc_info:
            parse_config_text('seed = 1\nconv_norm = "layer"\n')
        assert exc_info.value.line == 2

    def test_conv_channels_positive(self):
        """Conv channel counts must be positive."""
        with pytest.raises(ConfigurationError):
            parse_config_text("conv_channels = [4, 0]\n")


class TestRoundTrip:
    """Serialization and digests."""

    def test_serialize_parses_back(self):
        """Serialized configs parse back to equal configs."""
        cfg = ExperimentConfig(
            seed=7, norms=["bn"] * 5, critic_sigmoid=True, log_file="x.log", conv_channels=[4, 8]
        )
        assert parse_config_text(serialize_config(cfg)) == cfg

    def test_digest_tracks_values(self):
        """The digest is stable and changes with any value."""
        assert ExperimentConfig().digest() == ExperimentConfig().digest()
        assert ExperimentConfig(seed=1).digest() != ExperimentConfig().digest()


class TestLoading:
    """File lookup and startup validation."""

    def test_explicit_path(self, tiny_config):
        """An explicit path is read and validated."""
        cfg = parse_config(tiny_config(), RunMode.TRAIN)
        assert cfg.hidden_widths == [12, 8]

    def test_error_names_file(self, tmp_path):
        """Errors carry the offending file path."""
        path = tmp_path / "bad.toml"
        path.write_text("epochs = -1\n")
        with pytest.raises(ConfigurationError) as exc_info:
            parse_config(path)
        assert exc_info.value.details["path"] == str(path)

    def test_missing_explicit_file(self, tmp_path):
        """A missing explicit path is an error."""
        with pytest.raises(ConfigurationError):
            find_config(tmp_path / "absent.toml")

    def test_local_file_then_defaults(self, tmp_path, monkeypatch):
        """The local config file is used before the defaults."""
        monkeypatch.chdir(tmp_path)
        assert find_config() is None
        assert load_config(mode=RunMode.BOUNDS) == ExperimentConfig()
        (tmp_path / "unitlab_config.toml").write_text("seed = 11\n")
        assert load_config().seed == 11

    def test_defaults_fail_for_train(self, tmp_path, monkeypatch):
        """Defaults lack the data paths training needs."""
        monkeypatch.chdir(tmp_path)
        with pytest.raises(ConfigurationError):
            load_config(mode=RunMode.TRAIN)

    def test_referenced_files_must_exist(self, tmp_path):
        """Data paths must point at existing files."""
        cfg = ExperimentConfig(train_images=str(tmp_path / "missing"), train_labels="x")
        with pytest.raises(ConfigurationError):
            validate_for_mode(cfg, RunMode.MOMENTS)


class TestHelp:
    """The --help key listing."""

    def test_every_key_documented(self):
        """Every schema key appears in the help text."""
        text = config_help()
        for key in CONFIG_SCHEMA:
            assert f"  {key} = " in text
