"""Experiment config file generator.

This module provides the ConfigGenerator class for rendering ExperimentConfig objects
as config files that ``fglab.parser`` reads back.

Example:
    >>> from fglab.models.config import ExperimentConfig
    >>> from fglab.generator import ConfigGenerator
    >>>
    >>> generator = ConfigGenerator(ExperimentConfig.from_name("ScoreG-P2-FC-XP"))
    >>> print(generator.generate().splitlines()[0])
    !FGconfig
"""

from fglab.manifest import atomic_write_text
from fglab.models.config import ExperimentConfig
from fglab.models.env import EnvConfig
from pathlib import Path
from typing import TextIO


HEADER = "!FGconfig"


class ConfigGenerator:
    """Generator for experiment config files.

    Attributes:
        config: The ExperimentConfig object to generate from.
    """

    HEADER = HEADER

    def __init__(self, config: ExperimentConfig) -> None:
        """Initialize the generator with a configuration.

        Args:
            config: The ExperimentConfig object to generate from.
        """
        self.config = config

    def generate(self, comment: str | None = None) -> str:
        """Generate the config file content.

        Args:
            comment: Optional comment to include after the header.

        Returns:
            Config text: header, optional comment, experiment name comment, then one
            block per section.
        """
        lines: list[str] = [self.HEADER]
        if comment:
            lines.append(f"; {comment}")
        lines.append(f"; experiment: {self.config.name}")

        for section in (
            self.config.env,
            self.config.agent,
            self.config.ppo,
            self.config.population,
            self.config.run,
        ):
            lines.append("")
            lines.extend(section.to_config_lines())

        return "\n".join(lines) + "\n"

    def write_to_file(self, path: Path, comment: str | None = None) -> None:
        """Write the config content to a file atomically.

        Args:
            path: The path where to write the config file.
            comment: Optional comment to include after the header.
        """
        atomic_write_text(path, self.generate(comment=comment))

    def write_to_stream(self, stream: TextIO, comment: str | None = None) -> None:
        """Write the config content to a text stream.

        Args:
            stream: A text stream (e.g., StringIO, file handle) to write to.
            comment: Optional comment to include after the header.
        """
        stream.write(self.generate(comment=comment))


def render_env(env: EnvConfig, comment: str | None = None) -> str:
    """Render a world configuration as an env-only config file.

    Args:
        env: The world configuration.
        comment: Optional comment to include after the header.

    Returns:
        Config text with only the ``[env]`` section.
    """
    lines = [HEADER]
    if comment:
        lines.append(f"; {comment}")
    lines.extend(env.to_config_lines())
    return "\n".join(lines) + "\n"
