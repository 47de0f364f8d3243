"""Unit tests for the experiment config parser.

Tests for parsing config files back into ExperimentConfig and EnvConfig.
"""

import pytest


class TestConfigParserHeader:
    """Test header validation."""

    def test_parse_valid_header(self) -> None:
        """A bare header should give the default config."""
        from fglab.models.config import ExperimentConfig
        from fglab.parser import parse

        assert parse("!FGconfig\n") == ExperimentConfig()

    def test_parse_missing_header_raises(self) -> None:
        """Missing header should raise ConfigError."""
        from fglab.errors import ConfigError
        from fglab.parser import parse

        with pytest.raises(ConfigError, match="header"):
            parse("[env]\ngame=ScoreG\n")

    def test_config_error_exit_code(self) -> None:
        """Config errors should map to exit code 2."""
        from fglab.errors import ConfigError

        assert ConfigError.exit_code == 2


class TestConfigParserSections:
    """Test section and key parsing."""

    def test_parse_sections(self) -> None:
        """Values should be coerced to their field types."""
        from fglab.models.env import Game
        from fglab.models.population import TopologyKind
        from fglab.parser import parse

        content = """!FGconfig
; a comment
# another comment
[env]
game = TemporalG
vocab_size=8
partner_visible=true
[agent]
grid_hidden=64,32
[ppo]
total_steps=5e6
[population]
n_pop=3
topology=Ring
[run]
seed=4
"""
        config = parse(content)
        assert config.env.game == Game.TEMPORALG
        assert config.env.t_max == 20
        assert config.env.vocab_size == 8
        assert config.env.partner_visible is True
        assert config.agent.grid_hidden == (64, 32)
        assert config.ppo.total_steps == 5_000_000
        assert config.population.topology == TopologyKind.RING
        assert config.run.seed == 4

    def test_unknown_key_reported(self) -> None:
        """Unknown keys should be named with their section."""
        from fglab.errors import ConfigError
        from fglab.parser import parse

        with pytest.raises(ConfigError, match="unknown key 'colour' in \\[env\\]"):
            parse("!FGconfig\n[env]\ncolour=red\n")

    def test_unknown_section_reported(self) -> None:
        """Unknown sections should be reported."""
        from fglab.errors import ConfigError
        from fglab.parser import parse

        with pytest.raises(ConfigError, match="unknown section \\[optimizer\\]"):
            parse("!FGconfig\n[optimizer]\nlr=1\n")

    def test_all_errors_listed(self) -> None:
        """Every bad key should appear in one error."""
        from fglab.errors import ConfigError
        from fglab.parser import parse

        with pytest.raises(ConfigError) as excinfo:
            parse("!FGconfig\n[env]\nfoo=1\n[ppo]\nbar=2\n")
        message = str(excinfo.value)
        assert "'foo'" in message
        assert "'bar'" in message

    def test_invalid_value_reported(self) -> None:
        """Validation failures should name the field."""
        from fglab.errors import ConfigError
        from fglab.parser import parse

        with pytest.raises(ConfigError, match="env.grid_h"):
            parse("!FGconfig\n[env]\ngrid_h=2\n")

    def test_ring_of_two_reported(self) -> None:
        """Section-level validation errors should be reported."""
        from fglab.errors import ConfigError
        from fglab.parser import parse

        with pytest.raises(ConfigError, match="population"):
            parse("!FGconfig\n[population]\nn_pop=2\ntopology=Ring\n")

    def test_key_outside_section(self) -> None:
        """Keys before any section header should be rejected."""
        from fglab.errors import ConfigError
        from fglab.parser import parse

        with pytest.raises(ConfigError, match="outside of a section"):
            parse("!FGconfig\nseed=1\n")

    def test_malformed_line(self) -> None:
        """Lines that are not key=value should be rejected with their number."""
        from fglab.errors import ConfigError
        from fglab.parser import parse

        with pytest.raises(ConfigError, match="line 3"):
            parse("!FGconfig\n[env]\nthis is not a pair\n")


class TestParseEnv:
    """Tests for env-only config files."""

    def test_parse_env(self) -> None:
        """An env-only file should parse to EnvConfig."""
        from fglab.parser import parse_env

        env = parse_env("!FGconfig\n[env]\ngrid_h=7\ngrid_w=7\nn_obstacles=2\n")
        assert (env.grid_h, env.grid_w, env.n_obstacles) == (7, 7, 2)

    def test_parse_env_default(self) -> None:
        """A bare header should give the default world."""
        from fglab.models.env import EnvConfig
        from fglab.parser import parse_env

        assert parse_env("!FGconfig") == EnvConfig()

    def test_parse_env_rejects_other_sections(self) -> None:
        """Other sections should be rejected."""
        from fglab.errors import ConfigError
        from fglab.parser import parse_env

        with pytest.raises(ConfigError, match="only contain"):
            parse_env("!FGconfig\n[env]\ngrid_h=7\n[run]\nseed=1\n")


class TestRoundTrip:
    """Generated configs should parse back to the same config."""

    def test_named_configs_round_trip(self) -> None:
        """Every name family should survive generate then parse."""
        from fglab.generator import ConfigGenerator
        from fglab.models.config import ExperimentConfig
        from fglab.parser import parse

        for name in ("ScoreG-P2-FC-XP", "TemporalG-P15-Ring-XP+SP"):
            config = ExperimentConfig.from_name(name)
            assert parse(ConfigGenerator(config).generate()) == config
