"""Unit tests for the config models.

Tests for:
- EnvConfig defaults and obstacle validation
- ArchConfig, PPOConfig derived values
- PopulationConfig allowed pairs
- ExperimentName parsing and rendering
- ExperimentConfig hashing
"""

from pydantic import ValidationError
import pytest


class TestFormatValue:
    """Tests for format_value()."""

    def test_enum_rendered_by_value(self) -> None:
        """Enums should render as their value."""
        from fglab.models.base import format_value
        from fglab.models.env import Game

        assert format_value(Game.TEMPORALG) == "TemporalG"

    def test_bool_rendered_lowercase(self) -> None:
        """Booleans should render lowercase."""
        from fglab.models.base import format_value

        assert format_value(True) == "true"
        assert format_value(False) == "false"

    def test_tuple_rendered_comma_joined(self) -> None:
        """Tuples should render comma-joined."""
        from fglab.models.base import format_value

        assert format_value((256, 256, 128)) == "256,256,128"

    def test_float_rendered_with_repr(self) -> None:
        """Floats should keep full precision."""
        from fglab.models.base import format_value

        assert float(format_value(2.5e-4)) == 2.5e-4


class TestEnvConfig:
    """Tests for EnvConfig."""

    def test_scoreg_default_t_max(self) -> None:
        """ScoreG episodes should default to 10 steps."""
        from fglab.models.env import EnvConfig

        assert EnvConfig().t_max == 10

    def test_temporalg_default_t_max(self) -> None:
        """TemporalG episodes should default to 20 steps."""
        from fglab.models.env import EnvConfig
        from fglab.models.env import Game

        assert EnvConfig(game=Game.TEMPORALG).t_max == 20

    def test_explicit_t_max_kept(self) -> None:
        """An explicit t_max should override the game default."""
        from fglab.models.env import EnvConfig
        from fglab.models.env import Game

        assert EnvConfig(game=Game.TEMPORALG, t_max=7).t_max == 7

    def test_channels_per_game(self) -> None:
        """ScoreG should observe two channels, TemporalG one."""
        from fglab.models.env import EnvConfig
        from fglab.models.env import Game

        assert EnvConfig().grid_features == 18
        assert EnvConfig(game=Game.TEMPORALG).grid_features == 9

    def test_grid_too_small_rejected(self) -> None:
        """Grids below 3x3 should be rejected."""
        from fglab.models.env import EnvConfig

        with pytest.raises(ValidationError):
            EnvConfig(grid_h=2)

    def test_obstacles_need_free_interior(self) -> None:
        """Obstacles should leave at least four free interior cells."""
        from fglab.models.env import EnvConfig

        EnvConfig(n_obstacles=4)
        with pytest.raises(ValidationError, match="free"):
            EnvConfig(grid_h=4, grid_w=4, n_obstacles=1)

    def test_too_many_obstacles_rejected(self) -> None:
        """More than four obstacles should be rejected."""
        from fglab.models.env import EnvConfig

        with pytest.raises(ValidationError):
            EnvConfig(n_obstacles=5)

    def test_config_lines(self) -> None:
        """to_config_lines should start with the section header."""
        from fglab.models.env import EnvConfig

        lines = EnvConfig().to_config_lines()
        assert lines[0] == "[env]"
        assert "game=ScoreG" in lines
        assert "partner_visible=false" in lines

    def test_frozen(self) -> None:
        """Sections should be immutable."""
        from fglab.models.env import EnvConfig

        with pytest.raises(ValidationError):
            EnvConfig().grid_h = 7  # type: ignore[misc]


class TestStringCoercion:
    """Tests for parsing raw strings into section fields."""

    def test_scientific_int(self) -> None:
        """Integer fields should accept scientific notation."""
        from fglab.models.ppo import PPOConfig

        assert PPOConfig.model_validate({"total_steps": "5e6"}).total_steps == 5_000_000

    def test_comma_tuple(self) -> None:
        """Tuple fields should accept comma lists."""
        from fglab.models.agent import ArchConfig

        assert ArchConfig.model_validate({"grid_hidden": "8, 4"}).grid_hidden == (8, 4)

    def test_non_positive_width_rejected(self) -> None:
        """Hidden widths should be positive."""
        from fglab.models.agent import ArchConfig

        with pytest.raises(ValidationError, match="positive"):
            ArchConfig(grid_hidden=(8, 0))

    def test_unknown_field_rejected(self) -> None:
        """Unknown keys should be rejected."""
        from fglab.models.env import EnvConfig

        with pytest.raises(ValidationError):
            EnvConfig.model_validate({"colour": "red"})


class TestPPOConfig:
    """Tests for PPOConfig derived values."""

    def test_batch_size(self) -> None:
        """A rollout should hold n_envs * rollout_len steps."""
        from fglab.models.ppo import PPOConfig

        cfg = PPOConfig()
        assert cfg.batch_size == 128 * 32
        assert cfg.minibatch_size == 1024

    def test_n_iterations(self) -> None:
        """Iterations should cover total_steps, at least one."""
        from fglab.models.ppo import PPOConfig

        assert PPOConfig(total_steps=32, n_envs=2, rollout_len=4).n_iterations == 4
        assert PPOConfig(total_steps=1).n_iterations == 1


class TestPopulationConfig:
    """Tests for topologies and regimes."""

    def test_fc_xp_pairs(self) -> None:
        """FC XP with two agents should allow only the two cross pairs."""
        from fglab.models.population import PopulationConfig

        assert PopulationConfig(n_pop=2).allowed_pairs() == [(0, 1), (1, 0)]

    def test_xpsp_adds_self_pairs(self) -> None:
        """XP+SP should add one self pair per agent."""
        from fglab.models.population import PopulationConfig
        from fglab.models.population import Regime

        pairs = PopulationConfig(n_pop=3, regime=Regime.XPSP).allowed_pairs()
        assert len(pairs) == 9
        assert {(0, 0), (1, 1), (2, 2)} <= set(pairs)

    def test_ring_neighbours_only(self) -> None:
        """A ring should only pair circular neighbours."""
        from fglab.models.population import PopulationConfig
        from fglab.models.population import TopologyKind

        pairs = PopulationConfig(n_pop=15, topology=TopologyKind.RING).allowed_pairs()
        assert len(pairs) == 30
        assert (0, 14) in pairs
        assert (14, 0) in pairs
        assert (0, 7) not in pairs

    def test_ring_needs_three_agents(self) -> None:
        """A ring of two should be rejected."""
        from fglab.models.population import PopulationConfig
        from fglab.models.population import TopologyKind

        with pytest.raises(ValidationError, match="n_pop >= 3"):
            PopulationConfig(n_pop=2, topology=TopologyKind.RING)


class TestExperimentName:
    """Tests for ExperimentName."""

    def test_round_trip(self) -> None:
        """Names should round-trip through parse and render."""
        from fglab.models.population import ExperimentName

        for text in ("ScoreG-P15-Ring-XP+SP", "TemporalG-P2-FC-XP", "ScoreG-P3-FC-XP"):
            assert str(ExperimentName.parse(text)) == text

    def test_invalid_name(self) -> None:
        """Malformed names should raise ValueError."""
        from fglab.models.population import ExperimentName

        with pytest.raises(ValueError, match="Invalid experiment name"):
            ExperimentName.parse("ScoreG-15-Ring")


class TestExperimentConfig:
    """Tests for ExperimentConfig."""

    def test_from_name(self) -> None:
        """from_name should set game and population."""
        from fglab.models.config import ExperimentConfig
        from fglab.models.population import TopologyKind

        config = ExperimentConfig.from_name("TemporalG-P3-Ring-XP")
        assert config.env.t_max == 20
        assert config.population.topology == TopologyKind.RING
        assert str(config.name) == "TemporalG-P3-Ring-XP"

    def test_hash_ignores_run_section(self) -> None:
        """The seed and snapshot cadence should not change the hash."""
        from fglab.models.config import ExperimentConfig
        from fglab.models.population import RunConfig

        base = ExperimentConfig()
        other = base.model_copy(update={"run": RunConfig(seed=9, snapshot_every=3)})
        assert base.config_hash() == other.config_hash()

    def test_hash_tracks_env(self) -> None:
        """Changing the world should change the hash."""
        from fglab.models.config import ExperimentConfig
        from fglab.models.env import EnvConfig

        base = ExperimentConfig()
        other = base.model_copy(update={"env": EnvConfig(vocab_size=8)})
        assert base.config_hash() != other.config_hash()
        assert len(base.config_hash()) == 64
