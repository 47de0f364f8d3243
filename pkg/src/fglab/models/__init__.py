"""fglab configuration models.

This package contains the pydantic models for every section of an experiment config:
- env: Foraging Games world settings (game, grid, vocabulary, ablation switches)
- agent: network architecture widths
- ppo: PPO hyperparameters
- population: population size, social topology, pairing regime, experiment names
- config: the experiment config combining all sections
"""

__all__: list[str] = []
