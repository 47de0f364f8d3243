"""Experiment config file parser.

This module provides the ConfigParser class for parsing experiment config files into
ExperimentConfig objects.

Example:
    >>> from fglab.parser import parse
    >>>
    >>> content = '''!FGconfig
    ... [env]
    ... game=TemporalG
    ... [population]
    ... n_pop=3
    ... topology=Ring
    ... '''
    >>> config = parse(content)
    >>> str(config.name)
    'TemporalG-P3-Ring-XP'
"""

from fglab.errors import ConfigError
from fglab.models.agent import ArchConfig
from fglab.models.base import ConfigSection
from fglab.models.config import ExperimentConfig
from fglab.models.env import EnvConfig
from fglab.models.population import PopulationConfig
from fglab.models.population import RunConfig
from fglab.models.ppo import PPOConfig
from pydantic import ValidationError
import re


SECTIONS: dict[str, type[ConfigSection]] = {
    cls.SECTION: cls for cls in (EnvConfig, ArchConfig, PPOConfig, PopulationConfig, RunConfig)
}


class ConfigParser:
    """Parser for experiment config files.

    Collects raw ``key=value`` strings per section, checks keys against the section
    models and lets pydantic do type coercion and validation.

    Attributes:
        content: The raw config content to parse.
    """

    HEADER = "!FGconfig"

    SECTION_LINE = re.compile(r"^\[([A-Za-z_]+)\]$")
    KEY_VALUE_LINE = re.compile(r"^([A-Za-z_][A-Za-z0-9_]*)\s*=\s*(.*?)\s*$")

    def __init__(self, content: str) -> None:
        """Initialize the parser with config content.

        Args:
            content: The raw config content to parse.
        """
        self.content = content
        self._raw: dict[str, dict[str, str]] = {}
        self._errors: list[str] = []

    def parse(self) -> ExperimentConfig:
        """Parse the config content into an ExperimentConfig.

        Returns:
            The parsed configuration.

        Raises:
            ConfigError: If the header is missing, a line is malformed, a section or
                key is unknown, or a value fails validation. All problems found are
                listed in the message.
        """
        self._read()
        return ExperimentConfig.model_validate(self._build_sections())

    def parse_env(self) -> EnvConfig:
        """Parse a file holding only an ``[env]`` section.

        Returns:
            The parsed world configuration.

        Raises:
            ConfigError: If the content is invalid or has sections besides ``[env]``.
        """
        self._read()
        extra = sorted(set(self._raw) - {EnvConfig.SECTION})
        if extra:
            raise ConfigError(f"env config may only contain [env], found {extra}")
        env = self._build_sections().get(EnvConfig.SECTION)
        return env if isinstance(env, EnvConfig) else EnvConfig()

    def _read(self) -> None:
        lines = self.content.strip().split("\n")
        if not lines or not lines[0].strip().startswith(self.HEADER):
            raise ConfigError(f"Config must start with {self.HEADER} header")

        section: str | None = None
        for number, raw_line in enumerate(lines[1:], start=2):
            line = raw_line.strip()
            if not line or line.startswith((";", "#")):
                continue
            section = self._parse_line(number, line, section)

        if self._errors:
            raise ConfigError("; ".join(self._errors))

    def _parse_line(self, number: int, line: str, section: str | None) -> str | None:
        """Parse a single config line.

        Args:
            number: 1-based line number for error messages.
            line: The stripped line.
            section: The section the line belongs to.

        Returns:
            The section in effect after this line.
        """
        header = self.SECTION_LINE.match(line)
        if header:
            name = header.group(1)
            if name not in SECTIONS:
                self._errors.append(f"line {number}: unknown section [{name}]")
                return name
            self._raw.setdefault(name, {})
            return name

        pair = self.KEY_VALUE_LINE.match(line)
        if not pair:
            self._errors.append(f"line {number}: expected key=value, got {line!r}")
            return section
        if section is None:
            self._errors.append(f"line {number}: key outside of a section: {line!r}")
            return section
        if section not in SECTIONS:
            return section  # reported with the section header

        key, value = pair.groups()
        if key not in SECTIONS[section].model_fields:
            self._errors.append(f"unknown key '{key}' in [{section}]")
        else:
            self._raw[section][key] = value
        return section

    def _build_sections(self) -> dict[str, ConfigSection]:
        built: dict[str, ConfigSection] = {}
        errors: list[str] = []
        for name, values in self._raw.items():
            try:
                built[name] = SECTIONS[name].model_validate(values)
            except ValidationError as exc:
                for err in exc.errors():
                    field = ".".join(str(p) for p in err["loc"]) or "(section)"
                    errors.append(f"{name}.{field}: {err['msg']}")
        if errors:
            raise ConfigError("; ".join(errors))
        return built


def parse(content: str) -> ExperimentConfig:
    """Parse experiment config content.

    This is a convenience function that creates a ConfigParser and parses the content.

    Args:
        content: The raw config content to parse.

    Returns:
        The parsed ExperimentConfig.

    Raises:
        ConfigError: If the config is invalid.
    """
    return ConfigParser(content).parse()


def parse_env(content: str) -> EnvConfig:
    """Parse env-only config content (the flat world-config file format).

    Args:
        content: The raw config content to parse.

    Returns:
        The parsed EnvConfig.

    Raises:
        ConfigError: If the config is invalid.
    """
    return ConfigParser(content).parse_env()
