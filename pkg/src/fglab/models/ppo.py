"""PPO hyperparameters.

Defaults reproduce the full-scale schedule; desk runs override ``total_steps`` (and
usually ``n_envs``).
"""

from fglab.models.base import ConfigSection
from pydantic import Field


class PPOConfig(ConfigSection):
    """Decentralized recurrent PPO settings, applied to every agent independently.

    Attributes:
        total_steps: Environment steps of the whole run (lr anneal horizon).
        learning_rate: Initial Adam learning rate.
        anneal_lr: Linearly decay the learning rate to zero.
        n_envs: Parallel environment slots.
        rollout_len: Steps per rollout chunk.
        minibatches: Sequence-preserving minibatches per epoch.
        epochs: Update epochs per rollout.
        gamma: Discount factor.
        gae_lambda: GAE smoothing factor.
        clip_coef: Ratio clip radius (also used for the value clip).
        clip_value_loss: Clip the value loss around the old values.
        normalize_adv: Normalize advantages over each agent's batch.
        action_entropy_coef: Action entropy bonus weight.
        message_entropy_coef: Message entropy bonus weight.
        vf_coef: Value loss weight.
        max_grad_norm: Global gradient-norm clip.
        adam_eps: Adam epsilon.
    """

    SECTION = "ppo"

    total_steps: int = Field(default=2_000_000_000, ge=1, description="Total env steps")
    learning_rate: float = Field(default=2.5e-4, gt=0, description="Initial learning rate")
    anneal_lr: bool = Field(default=True, description="Linear learning-rate decay")
    n_envs: int = Field(default=128, ge=1, description="Parallel environments")
    rollout_len: int = Field(default=32, ge=1, description="Steps per rollout")
    minibatches: int = Field(default=4, ge=1, description="Minibatches per epoch")
    epochs: int = Field(default=4, ge=1, description="Update epochs")
    gamma: float = Field(default=0.99, ge=0, le=1, description="Discount factor")
    gae_lambda: float = Field(default=0.95, ge=0, le=1, description="GAE lambda")
    clip_coef: float = Field(default=0.1, gt=0, description="PPO clip coefficient")
    clip_value_loss: bool = Field(default=True, description="Clip value loss")
    normalize_adv: bool = Field(default=True, description="Normalize advantages")
    action_entropy_coef: float = Field(default=0.01, ge=0, description="Action entropy weight")
    message_entropy_coef: float = Field(default=0.002, ge=0, description="Message entropy weight")
    vf_coef: float = Field(default=0.5, ge=0, description="Value loss weight")
    max_grad_norm: float = Field(default=0.5, gt=0, description="Max gradient norm")
    adam_eps: float = Field(default=1e-5, gt=0, description="Adam epsilon")

    @property
    def batch_size(self) -> int:
        """Transitions per body slot per rollout."""
        return self.n_envs * self.rollout_len

    @property
    def minibatch_size(self) -> int:
        """Transitions per minibatch at the nominal minibatch count."""
        return self.batch_size // self.minibatches

    @property
    def n_iterations(self) -> int:
        """Rollout/update iterations needed to cover ``total_steps``."""
        return max(1, self.total_steps // self.batch_size)
