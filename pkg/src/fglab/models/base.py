"""Base model for config-file sections.

Every section of an experiment config file (``[env]``, ``[ppo]``, ...) is a frozen
pydantic model that renders itself as ``key=value`` lines and accepts the raw strings
produced by the parser.
"""

from enum import Enum
from pydantic import BaseModel
from pydantic import ConfigDict
from pydantic import model_validator
import re
from typing import Any
from typing import ClassVar


_FLOAT_LITERAL = re.compile(r"^[+-]?(\d+\.?\d*|\.\d+)[eE][+-]?\d+$")


def format_value(value: Any) -> str:
    """Render a field value the way it is written in a config file.

    Args:
        value: The field value.

    Returns:
        The textual form (enums by value, booleans lowercase, sequences comma-joined).
    """
    if isinstance(value, Enum):
        return str(value.value)
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple | list):
        return ",".join(format_value(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


class ConfigSection(BaseModel):
    """Base class for one ``[section]`` of an experiment config.

    Subclasses must define:
        SECTION: The section name used in config files (e.g. "env").
    """

    SECTION: ClassVar[str] = ""

    model_config = ConfigDict(extra="forbid", frozen=True)

    @model_validator(mode="before")
    @classmethod
    def coerce_config_strings(cls, data: Any) -> Any:
        """Accept scientific notation for integer fields and comma lists for tuples.

        Args:
            data: Raw input, usually a dict of strings from the parser.

        Returns:
            The input with string values normalized for pydantic.
        """
        if not isinstance(data, dict):
            return data
        out = dict(data)
        for name, field in cls.model_fields.items():
            value = out.get(name)
            if not isinstance(value, str):
                continue
            origin = getattr(field.annotation, "__origin__", None)
            if field.annotation is int and _FLOAT_LITERAL.match(value.strip()):
                as_float = float(value)
                if as_float.is_integer():
                    out[name] = int(as_float)
            elif origin is tuple:
                out[name] = tuple(part.strip() for part in value.split(",") if part.strip())
        return out

    def to_config_lines(self) -> list[str]:
        """Generate config-file lines for this section.

        Returns:
            ``[section]`` header followed by one ``key=value`` line per field.
        """
        lines = [f"[{self.SECTION}]"]
        for name in type(self).model_fields:
            value = getattr(self, name)
            if value is None:
                continue
            lines.append(f"{name}={format_value(value)}")
        return lines
