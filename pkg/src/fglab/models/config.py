"""Experiment configuration combining every config section.

Example:
    >>> config = ExperimentConfig.from_name("TemporalG-P3-Ring-XP")
    >>> config.env.t_max, config.population.n_pop
    (20, 3)
    >>> str(config.name)
    'TemporalG-P3-Ring-XP'
"""

from fglab.models.agent import ArchConfig
from fglab.models.env import EnvConfig
from fglab.models.population import ExperimentName
from fglab.models.population import PopulationConfig
from fglab.models.population import RunConfig
from fglab.models.ppo import PPOConfig
import hashlib
from pydantic import BaseModel
from pydantic import ConfigDict
from pydantic import Field


class ExperimentConfig(BaseModel):
    """Full configuration of one experiment.

    Attributes:
        env: World settings.
        agent: Network architecture.
        ppo: PPO hyperparameters.
        population: Population size, topology and regime.
        run: Seed and snapshot cadence.
    """

    model_config = ConfigDict(frozen=True)

    env: EnvConfig = Field(default_factory=EnvConfig)
    agent: ArchConfig = Field(default_factory=ArchConfig)
    ppo: PPOConfig = Field(default_factory=PPOConfig)
    population: PopulationConfig = Field(default_factory=PopulationConfig)
    run: RunConfig = Field(default_factory=RunConfig)

    @classmethod
    def from_name(cls, name: str | ExperimentName) -> "ExperimentConfig":
        """Build the default config for an experiment name.

        Args:
            name: Experiment name or its string form.

        Returns:
            Config with the named game, population size, topology and regime and
            defaults everywhere else.
        """
        parsed = name if isinstance(name, ExperimentName) else ExperimentName.parse(name)
        return cls(
            env=EnvConfig(game=parsed.game),
            population=PopulationConfig(
                n_pop=parsed.n_pop, topology=parsed.topology, regime=parsed.regime
            ),
        )

    @property
    def name(self) -> ExperimentName:
        """The experiment name derived from the env and population sections."""
        return ExperimentName(
            game=self.env.game,
            n_pop=self.population.n_pop,
            topology=self.population.topology,
            regime=self.population.regime,
        )

    def hashed_lines(self) -> list[str]:
        """Config lines that determine what is learned (everything except ``[run]``).

        Returns:
            The rendered env, agent, ppo and population sections.
        """
        lines: list[str] = []
        for section in (self.env, self.agent, self.ppo, self.population):
            lines.extend(section.to_config_lines())
        return lines

    def config_hash(self) -> str:
        """SHA-256 over the hashed sections.

        Returns:
            Hex digest.
        """
        return hashlib.sha256("\n".join(self.hashed_lines()).encode("utf-8")).hexdigest()
