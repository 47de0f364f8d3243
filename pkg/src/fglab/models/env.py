"""Foraging Games world configuration.

Example:
    >>> cfg = EnvConfig(game=Game.TEMPORALG)
    >>> cfg.t_max
    20
    >>> cfg.to_config_lines()[:3]
    ['[env]', 'game=TemporalG', 'grid_h=5']
"""

from enum import StrEnum
from fglab.models.base import ConfigSection
from pydantic import Field
from pydantic import model_validator
from typing import Any
from typing import Self


class Game(StrEnum):
    """The two Foraging Games."""

    SCOREG = "ScoreG"  # pick up the highest-score item together
    TEMPORALG = "TemporalG"  # pick up items in spawn order


class ScoreSplit(StrEnum):
    """Score sets items are drawn from."""

    TRAIN = "train"  # {5, 10, ..., 250}
    TEST = "test"  # even, not divisible by 10, in [2, 248]
    HIGH = "high"  # {160, 162, ..., 240}, implicit-communication evaluation


DEFAULT_T_MAX = {Game.SCOREG: 10, Game.TEMPORALG: 20}

# Minimum number of free interior cells after obstacles are placed.
MIN_FREE_INTERIOR = 4


class EnvConfig(ConfigSection):
    """Configuration of one Foraging Games world.

    Attributes:
        game: ScoreG or TemporalG.
        grid_h: Grid height in cells (>= 3).
        grid_w: Grid width in cells (>= 3).
        t_max: Step limit per episode; defaults to 10 (ScoreG) or 20 (TemporalG).
        vocab_size: Message alphabet size (>= 2).
        partner_visible: Whether the partner shows up in the occupancy channel.
        communication_enabled: Whether messages are delivered at all.
        n_obstacles: Impassable cells in the central 3x3 region (0-4).
        score_split: Score set items are drawn from (ScoreG only).
    """

    SECTION = "env"

    game: Game = Field(default=Game.SCOREG, description="ScoreG or TemporalG")
    grid_h: int = Field(default=5, ge=3, description="Grid height in cells")
    grid_w: int = Field(default=5, ge=3, description="Grid width in cells")
    t_max: int = Field(default=10, ge=1, description="Maximum steps per episode")
    vocab_size: int = Field(default=4, ge=2, description="Message alphabet size")
    partner_visible: bool = Field(default=False, description="Partner appears in observations")
    communication_enabled: bool = Field(default=True, description="Deliver messages")
    n_obstacles: int = Field(default=0, ge=0, le=4, description="Central obstacles (0-4)")
    score_split: ScoreSplit = Field(default=ScoreSplit.TRAIN, description="Score set")

    @model_validator(mode="before")
    @classmethod
    def default_t_max(cls, data: Any) -> Any:
        """Fill t_max from the game when it is not given.

        Args:
            data: Raw model input.

        Returns:
            The input with t_max set.
        """
        if isinstance(data, dict) and data.get("t_max") in (None, ""):
            data = dict(data)
            data["t_max"] = DEFAULT_T_MAX[Game(data.get("game", Game.SCOREG))]
        return data

    @model_validator(mode="after")
    def validate_obstacle_room(self) -> Self:
        """Validate that obstacles leave enough free interior cells.

        Returns:
            The validated config.

        Raises:
            ValueError: If obstacles are requested and fewer than four interior cells
                remain free.
        """
        interior = (self.grid_h - 2) * (self.grid_w - 2)
        if self.n_obstacles and interior - self.n_obstacles < MIN_FREE_INTERIOR:
            msg = (
                f"{self.n_obstacles} obstacles leave {interior - self.n_obstacles} free "
                f"interior cells, need at least {MIN_FREE_INTERIOR}"
            )
            raise ValueError(msg)
        return self

    @property
    def channels(self) -> int:
        """Observation channels: occupancy + score for ScoreG, occupancy only for TemporalG."""
        return 2 if self.game == Game.SCOREG else 1

    @property
    def grid_features(self) -> int:
        """Width of the flattened 3x3xC receptive field."""
        return 9 * self.channels
