"""Network architecture widths for one agent."""

from fglab.models.base import ConfigSection
from pydantic import Field
from pydantic import field_validator
import math


class ArchConfig(ConfigSection):
    """Layer widths and initializer gains of the agent network.

    Attributes:
        grid_hidden: Hidden widths of the grid-encoder MLP.
        grid_out: Output width of the grid encoder.
        pos_out: Output width of the position encoder.
        msg_embed: Width of the incoming-message lookup table rows.
        msg_out: Output width of the message encoder.
        lstm_hidden: LSTM hidden and cell state width.
        weight_gain: Orthogonal gain for encoder, table and LSTM weights.
        head_gain: Orthogonal gain for the action, message and value heads.
    """

    SECTION = "agent"

    grid_hidden: tuple[int, ...] = Field(
        default=(256, 256, 128), description="Grid encoder hidden widths"
    )
    grid_out: int = Field(default=16, ge=1, description="Grid encoder output width")
    pos_out: int = Field(default=4, ge=1, description="Position encoder output width")
    msg_embed: int = Field(default=16, ge=1, description="Message embedding width")
    msg_out: int = Field(default=16, ge=1, description="Message encoder output width")
    lstm_hidden: int = Field(default=128, ge=1, description="LSTM state width")
    weight_gain: float = Field(default=math.sqrt(2.0), gt=0, description="Weight init gain")
    head_gain: float = Field(default=0.01, gt=0, description="Head init gain")

    @field_validator("grid_hidden")
    @classmethod
    def validate_hidden_widths(cls, v: tuple[int, ...]) -> tuple[int, ...]:
        """Validate that every hidden width is positive.

        Args:
            v: The hidden widths.

        Returns:
            The validated widths.

        Raises:
            ValueError: If a width is not positive.
        """
        for width in v:
            if width < 1:
                raise ValueError(f"Hidden width {width} must be positive")
        return v

    @property
    def lstm_input(self) -> int:
        """Width of the concatenated encoder outputs fed to the LSTM."""
        return self.grid_out + self.pos_out + self.msg_out
