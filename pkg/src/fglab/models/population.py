"""Population, social topology, pairing regime and run settings.

Example:
    >>> name = ExperimentName.parse("ScoreG-P15-Ring-XP+SP")
    >>> name.n_pop, name.topology, name.regime
    (15, <TopologyKind.RING: 'Ring'>, <Regime.XPSP: 'XP+SP'>)
    >>> str(name)
    'ScoreG-P15-Ring-XP+SP'
"""

from enum import StrEnum
from fglab.models.base import ConfigSection
from fglab.models.env import Game
from pydantic import BaseModel
from pydantic import ConfigDict
from pydantic import Field
from pydantic import model_validator
import re
from typing import Self


class TopologyKind(StrEnum):
    """Social structure of the population."""

    FC = "FC"  # every agent may pair with every other agent
    RING = "Ring"  # agents pair only with their two ring neighbours


class Regime(StrEnum):
    """Pairing regime."""

    XP = "XP"  # cross-play only
    XPSP = "XP+SP"  # cross-play and self-play


class PopulationConfig(ConfigSection):
    """Population size, topology and pairing regime.

    Attributes:
        n_pop: Number of independently trained agents.
        topology: Fully connected or ring.
        regime: XP or XP+SP.
    """

    SECTION = "population"

    n_pop: int = Field(default=2, ge=2, description="Population size")
    topology: TopologyKind = Field(default=TopologyKind.FC, description="FC or Ring")
    regime: Regime = Field(default=Regime.XP, description="XP or XP+SP")

    @model_validator(mode="after")
    def validate_ring_size(self) -> Self:
        """Validate that a ring has at least three agents.

        Returns:
            The validated config.

        Raises:
            ValueError: If a ring topology has fewer than three agents.
        """
        if self.topology == TopologyKind.RING and self.n_pop < 3:
            raise ValueError(f"Ring topology requires n_pop >= 3, got {self.n_pop}")
        return self

    def allowed_pairs(self) -> list[tuple[int, int]]:
        """List every ordered (body 0, body 1) pair the regime may sample.

        Returns:
            Ordered cross pairs allowed by the topology, followed by the self pairs
            when the regime is XP+SP.
        """
        n = self.n_pop
        pairs = [
            (i, j)
            for i in range(n)
            for j in range(n)
            if i != j and (self.topology == TopologyKind.FC or (i - j) % n in (1, n - 1))
        ]
        if self.regime == Regime.XPSP:
            pairs.extend((i, i) for i in range(n))
        return pairs


class RunConfig(ConfigSection):
    """Run-level settings that do not change what is learned.

    The ``[run]`` section is excluded from the config hash, so a run can be resumed
    with a different snapshot cadence.

    Attributes:
        seed: Master seed of the training run.
        snapshot_every: Iterations between population snapshots.
    """

    SECTION = "run"

    seed: int = Field(default=0, description="Master seed")
    snapshot_every: int = Field(default=50, ge=1, description="Iterations per snapshot")


_NAME_PATTERN = re.compile(r"^(ScoreG|TemporalG)-P(\d+)-(FC|Ring)-(XP\+SP|XP)$")


class ExperimentName(BaseModel):
    """Experiment identifier rendered as ``<game>-P<n>-<FC|Ring>-<XP|XP+SP>``."""

    model_config = ConfigDict(frozen=True)

    game: Game
    n_pop: int = Field(ge=2)
    topology: TopologyKind
    regime: Regime

    @classmethod
    def parse(cls, text: str) -> "ExperimentName":
        """Parse an experiment name.

        Args:
            text: Name such as ``ScoreG-P15-Ring-XP+SP``.

        Returns:
            The parsed name.

        Raises:
            ValueError: If the text does not follow the naming scheme.
        """
        match = _NAME_PATTERN.match(text.strip())
        if not match:
            raise ValueError(
                f"Invalid experiment name {text!r}; "
                "expected <ScoreG|TemporalG>-P<n>-<FC|Ring>-<XP|XP+SP>"
            )
        game, n_pop, topology, regime = match.groups()
        return cls(
            game=Game(game),
            n_pop=int(n_pop),
            topology=TopologyKind(topology),
            regime=Regime(regime),
        )

    def render(self) -> str:
        """Render the name.

        Returns:
            The name string.
        """
        return f"{self.game.value}-P{self.n_pop}-{self.topology.value}-{self.regime.value}"

    def __str__(self) -> str:
        return self.render()
