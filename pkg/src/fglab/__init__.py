"""Foraging Games laboratory.

Two-agent partially observable grid worlds, decentralized recurrent PPO over populations
of communicating agents, and an analysis suite for the emergent language (success-rate
matrices, language similarity, interchangeability, topographic similarity, linear probes).

Example:
    >>> from fglab.models.env import EnvConfig
    >>> from fglab.env import new_episode
    >>> world, observations = new_episode(EnvConfig(), seed=7)
"""

try:
    from fglab._version import __version__
except ImportError:  # pragma: no cover
    __version__ = "0.0.0.dev0"

__author__ = "FG Lab Team"
