"""Pytest configuration and shared fixtures for fglab tests."""

from collections.abc import Callable
from collections.abc import Sequence
from fglab.autodiff import Tape
from fglab.autodiff import Tensor
from fglab.autodiff import backward
from fglab.models.agent import ArchConfig
from fglab.models.config import ExperimentConfig
from fglab.models.env import EnvConfig
from fglab.models.env import Game
from fglab.models.population import PopulationConfig
from fglab.models.population import RunConfig
from fglab.models.ppo import PPOConfig
import numpy as np
import pytest


GradCheck = Callable[[Callable[[], Tensor], Sequence[Tensor]], float]


@pytest.fixture
def rng() -> np.random.Generator:
    """Return a seeded generator."""
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_arch() -> ArchConfig:
    """Return a narrow architecture that keeps tests fast."""
    return ArchConfig(
        grid_hidden=(8,),
        grid_out=4,
        pos_out=2,
        msg_embed=4,
        msg_out=4,
        lstm_hidden=8,
        head_gain=1.0,
    )


@pytest.fixture
def tiny_ppo() -> PPOConfig:
    """Return PPO settings for four iterations of two 4-step slots."""
    return PPOConfig(
        total_steps=32,
        n_envs=2,
        rollout_len=4,
        minibatches=2,
        epochs=2,
        learning_rate=1e-3,
    )


@pytest.fixture
def make_config(tiny_arch: ArchConfig, tiny_ppo: PPOConfig) -> Callable[..., ExperimentConfig]:
    """Return a factory for tiny experiment configs."""

    def factory(
        game: Game = Game.SCOREG,
        n_pop: int = 2,
        seed: int = 0,
        snapshot_every: int = 2,
        **population: object,
    ) -> ExperimentConfig:
        return ExperimentConfig(
            env=EnvConfig(game=game),
            agent=tiny_arch,
            ppo=tiny_ppo,
            population=PopulationConfig(n_pop=n_pop, **population),
            run=RunConfig(seed=seed, snapshot_every=snapshot_every),
        )

    return factory


@pytest.fixture
def tiny_config(make_config: Callable[..., ExperimentConfig]) -> ExperimentConfig:
    """Return a tiny ScoreG-P2-FC-XP config."""
    return make_config()


@pytest.fixture
def grad_check() -> GradCheck:
    """Return a helper comparing tape gradients with central finite differences.

    The helper evaluates ``fn`` (a closure over ``params``) and returns the largest
    relative error over every parameter entry.
    """

    def check(fn: Callable[[], Tensor], params: Sequence[Tensor], eps: float = 1e-6) -> float:
        for p in params:
            p.zero_grad()
        with Tape() as tape:
            loss = fn()
        backward(tape, loss)
        worst = 0.0
        for p in params:
            analytic = np.zeros_like(p.data) if p.grad is None else p.grad
            flat = p.data.reshape(-1)
            for k in range(flat.size):
                saved = flat[k]
                flat[k] = saved + eps
                up = fn().item()
                flat[k] = saved - eps
                down = fn().item()
                flat[k] = saved
                numeric = (up - down) / (2 * eps)
                exact = analytic.reshape(-1)[k]
                error = abs(numeric - exact) / max(1.0, abs(numeric), abs(exact))
                worst = max(worst, error)
        return worst

    return check
