"""Decentralized recurrent PPO.

Every environment slot hosts one episode played by two bodies; each body is driven by
one agent of the population. A rollout steps all slots together for ``rollout_len``
steps and files every body's transitions under the agent that drove it, as one
contiguous sequence per (slot, body). Each agent is then updated on its own sequences
only, with its own optimizer state.

Example:
    >>> advantages, returns = compute_gae(
    ...     np.array([0.0, 1.5]), np.array([0.2, 0.4]), np.array([False, True]), 0.0, 0.99, 0.95
    ... )
"""

from collections.abc import Sequence
from dataclasses import dataclass
from dataclasses import field
from fglab.agent import AgentParams
from fglab.agent import ObsBatch
from fglab.agent import PolicyState
from fglab.agent import policy_forward
from fglab.agent import sample_rows
from fglab.autodiff import AdamState
from fglab.autodiff import Categorical
from fglab.autodiff import Tape
from fglab.autodiff import Tensor
from fglab.autodiff import adam_step
from fglab.autodiff import add
from fglab.autodiff import backward
from fglab.autodiff import clip
from fglab.autodiff import clip_global_norm
from fglab.autodiff import concat
from fglab.autodiff import exp
from fglab.autodiff import maximum
from fglab.autodiff import mean
from fglab.autodiff import minimum
from fglab.autodiff import mul
from fglab.autodiff import neg
from fglab.autodiff import sub
from fglab.env import Observation
from fglab.env import World
from fglab.env import new_episode
from fglab.env import route_messages
from fglab.env import step
from fglab.errors import ConfigError
from fglab.errors import NumericError
from fglab.errors import ShapeError
from fglab.models.env import EnvConfig
from fglab.models.ppo import PPOConfig
import logging
import math
import numpy as np


logger = logging.getLogger(__name__)

SEED_BOUND = 2**63


def lr_schedule(step: int, total_steps: int, lr0: float) -> float:
    """Linearly annealed learning rate.

    Args:
        step: Environment steps done so far.
        total_steps: Anneal horizon.
        lr0: Initial learning rate.

    Returns:
        ``lr0 * (1 - step / total_steps)``, never below zero.
    """
    return lr0 * max(0.0, 1.0 - step / total_steps)


def compute_gae(
    rewards: np.ndarray,
    values: np.ndarray,
    dones: np.ndarray,
    bootstrap_value: float,
    gamma: float,
    lam: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Generalized advantage estimation over one sequence.

    ``dones[t]`` marks transition t as terminal; a sequence cut off mid-episode
    bootstraps from ``bootstrap_value``.

    Args:
        rewards: Rewards, shape (T,).
        values: Value estimates of the visited states, shape (T,).
        dones: Terminal flags, shape (T,).
        bootstrap_value: Value of the state after the last transition.
        gamma: Discount factor.
        lam: GAE lambda.

    Returns:
        Advantages and returns (advantages + values), float64.

    Raises:
        ShapeError: If the sequences differ in length.
    """
    if not (rewards.shape == values.shape == dones.shape) or rewards.ndim != 1:
        raise ShapeError("compute_gae", rewards.shape, values.shape, dones.shape)
    n = rewards.shape[0]
    advantages = np.zeros(n, dtype=np.float64)
    last = 0.0
    for t in reversed(range(n)):
        next_value = bootstrap_value if t == n - 1 else float(values[t + 1])
        nonterminal = 1.0 - float(dones[t])
        delta = float(rewards[t]) + gamma * next_value * nonterminal - float(values[t])
        last = delta + gamma * lam * nonterminal * last
        advantages[t] = last
    return advantages, advantages + values.astype(np.float64)


@dataclass
class EnvSlot:
    """One environment slot: a live episode, its pairing and both bodies' LSTM state.

    Attributes:
        world: Current episode.
        obs: Latest observations of body 0 and body 1.
        pairing: Agent driving body 0 and agent driving body 1.
        h: (2, H) hidden states.
        c: (2, H) cell states.
        fresh: Per body, whether the next transition starts from a reset state.
        rng: Episode seed stream.
        body_rngs: Per-body action/token sampling streams.
        episode_return: Reward accumulated in the current episode.
    """

    world: World
    obs: tuple[Observation, Observation]
    pairing: tuple[int, int]
    h: np.ndarray
    c: np.ndarray
    fresh: np.ndarray
    rng: np.random.Generator
    body_rngs: tuple[np.random.Generator, np.random.Generator]
    episode_return: float = 0.0

    @classmethod
    def create(
        cls, env: EnvConfig, pairing: tuple[int, int], hidden: int, rng: np.random.Generator
    ) -> "EnvSlot":
        """Create a slot whose streams are seeded from ``rng``.

        Args:
            env: World configuration.
            pairing: Agents for body 0 and body 1.
            hidden: LSTM width.
            rng: Parent generator.

        Returns:
            A slot with a fresh episode.
        """
        seeds = rng.integers(SEED_BOUND, size=3)
        slot_rng = np.random.default_rng(int(seeds[0]))
        world, obs = new_episode(env, int(slot_rng.integers(SEED_BOUND)))
        return cls(
            world=world,
            obs=obs,
            pairing=pairing,
            h=np.zeros((2, hidden), dtype=np.float32),
            c=np.zeros((2, hidden), dtype=np.float32),
            fresh=np.ones(2, dtype=bool),
            rng=slot_rng,
            body_rngs=(np.random.default_rng(int(seeds[1])), np.random.default_rng(int(seeds[2]))),
        )

    def restart(self) -> None:
        """Start a new episode with fresh LSTM states."""
        self.world, self.obs = new_episode(self.world.cfg, int(self.rng.integers(SEED_BOUND)))
        self.h[:] = 0
        self.c[:] = 0
        self.fresh[:] = True
        self.episode_return = 0.0


@dataclass
class RolloutBuffer:
    """One agent's sequences from a rollout, shaped (N sequences, T steps, ...).

    ``starts[n, t]`` flags transitions that begin from a reset LSTM state; ``h0``/``c0``
    are the states at sequence entry.
    """

    grid: np.ndarray
    pos: np.ndarray
    msg: np.ndarray
    actions: np.ndarray
    tokens: np.ndarray
    logp_a: np.ndarray
    logp_m: np.ndarray
    values: np.ndarray
    rewards: np.ndarray
    dones: np.ndarray
    starts: np.ndarray
    h0: np.ndarray
    c0: np.ndarray
    bootstrap: np.ndarray
    advantages: np.ndarray | None = None
    returns: np.ndarray | None = None
    episode_returns: list[float] = field(default_factory=list)
    episode_lengths: list[int] = field(default_factory=list)
    successes: list[bool] = field(default_factory=list)

    @classmethod
    def empty(cls, n: int, steps: int, features: int, hidden: int) -> "RolloutBuffer":
        """Allocate zeroed storage for ``n`` sequences of ``steps`` transitions."""
        shape = (n, steps)
        return cls(
            grid=np.zeros((*shape, features), dtype=np.float32),
            pos=np.zeros((*shape, 2), dtype=np.float32),
            msg=np.zeros(shape, dtype=np.int64),
            actions=np.zeros(shape, dtype=np.int64),
            tokens=np.zeros(shape, dtype=np.int64),
            logp_a=np.zeros(shape, dtype=np.float32),
            logp_m=np.zeros(shape, dtype=np.float32),
            values=np.zeros(shape, dtype=np.float32),
            rewards=np.zeros(shape, dtype=np.float32),
            dones=np.zeros(shape, dtype=bool),
            starts=np.zeros(shape, dtype=bool),
            h0=np.zeros((n, hidden), dtype=np.float32),
            c0=np.zeros((n, hidden), dtype=np.float32),
            bootstrap=np.zeros(n, dtype=np.float32),
        )

    @property
    def n_sequences(self) -> int:
        """Number of (slot, body) sequences."""
        return int(self.rewards.shape[0])

    def finalize(self, cfg: PPOConfig) -> None:
        """Compute advantages and returns, normalizing advantages when configured.

        Args:
            cfg: PPO settings (gamma, lambda, normalization).
        """
        adv = np.zeros(self.rewards.shape, dtype=np.float64)
        ret = np.zeros(self.rewards.shape, dtype=np.float64)
        for n in range(self.n_sequences):
            adv[n], ret[n] = compute_gae(
                self.rewards[n],
                self.values[n],
                self.dones[n],
                float(self.bootstrap[n]),
                cfg.gamma,
                cfg.gae_lambda,
            )
        if cfg.normalize_adv and adv.size > 1:
            adv = (adv - adv.mean()) / (adv.std() + 1e-8)
        self.advantages = adv
        self.returns = ret

    def mean_return(self) -> float:
        """Mean return of episodes completed during the rollout (NaN if none)."""
        return float(np.mean(self.episode_returns)) if self.episode_returns else math.nan


def collect_rollout(
    agents: Sequence[AgentParams],
    slots: Sequence[EnvSlot],
    rollout_len: int,
) -> list[RolloutBuffer]:
    """Step every slot ``rollout_len`` times and file transitions per agent.

    At each step both bodies of every slot act on their previous observation
    (including the token delivered last step), tokens are routed, and the world is
    stepped. Finished episodes restart in place with reset LSTM states; otherwise
    states persist across rollout boundaries.

    Args:
        agents: Parameters of every agent.
        slots: Environment slots; mutated.
        rollout_len: Steps to collect.

    Returns:
        One buffer per agent (empty for agents that drive no body).

    Raises:
        ConfigError: If a slot's pairing names an agent that does not exist.
    """
    rows: list[list[tuple[int, int]]] = [[] for _ in agents]
    where: dict[tuple[int, int], tuple[int, int]] = {}
    for s, slot in enumerate(slots):
        for b, k in enumerate(slot.pairing):
            if not 0 <= k < len(agents):
                raise ConfigError(f"slot {s} pairing {slot.pairing} references missing agent {k}")
            where[(s, b)] = (k, len(rows[k]))
            rows[k].append((s, b))

    hidden = slots[0].h.shape[1]
    features = slots[0].obs[0].grid.size
    buffers = [RolloutBuffer.empty(len(r), rollout_len, features, hidden) for r in rows]
    for k, buf in enumerate(buffers):
        for r, (s, b) in enumerate(rows[k]):
            buf.h0[r] = slots[s].h[b]
            buf.c0[r] = slots[s].c[b]

    for t in range(rollout_len):
        actions = np.zeros((len(slots), 2), dtype=np.int64)
        tokens = np.zeros((len(slots), 2), dtype=np.int64)
        for k, agent_rows in enumerate(rows):
            if not agent_rows:
                continue
            buf = buffers[k]
            batch = ObsBatch.stack([slots[s].obs[b] for s, b in agent_rows])
            state = PolicyState.from_arrays(
                np.stack([slots[s].h[b] for s, b in agent_rows]),
                np.stack([slots[s].c[b] for s, b in agent_rows]),
            )
            out = policy_forward(agents[k], state, batch)
            sel = sample_rows(out, [slots[s].body_rngs[b] for s, b in agent_rows])
            buf.grid[:, t], buf.pos[:, t], buf.msg[:, t] = batch.grid, batch.pos, batch.msg
            buf.actions[:, t], buf.tokens[:, t] = sel.action, sel.token
            buf.logp_a[:, t], buf.logp_m[:, t] = sel.logp_a, sel.logp_m
            buf.values[:, t] = out.value.data
            for r, (s, b) in enumerate(agent_rows):
                buf.starts[r, t] = slots[s].fresh[b]
                slots[s].fresh[b] = False
                slots[s].h[b] = out.next_state.h.data[r]
                slots[s].c[b] = out.next_state.c.data[r]
                actions[s, b], tokens[s, b] = sel.action[r], sel.token[r]

        for s, slot in enumerate(slots):
            route_messages(slot.world, (int(tokens[s, 0]), int(tokens[s, 1])))
            result = step(slot.world, (int(actions[s, 0]), int(actions[s, 1])))
            slot.episode_return += result.reward
            for b in (0, 1):
                k, r = where[(s, b)]
                buffers[k].rewards[r, t] = result.reward
                buffers[k].dones[r, t] = result.done
                if result.done:
                    buffers[k].episode_returns.append(slot.episode_return)
                    buffers[k].episode_lengths.append(result.info.length)
                    buffers[k].successes.append(result.info.success)
            if result.done:
                slot.restart()
            else:
                slot.obs = result.obs

    for k, agent_rows in enumerate(rows):
        if not agent_rows:
            continue
        batch = ObsBatch.stack([slots[s].obs[b] for s, b in agent_rows])
        state = PolicyState.from_arrays(
            np.stack([slots[s].h[b] for s, b in agent_rows]),
            np.stack([slots[s].c[b] for s, b in agent_rows]),
        )
        buffers[k].bootstrap[:] = policy_forward(agents[k], state, batch).value.data
    return buffers


def clipped_surrogate(ratio: Tensor, advantages: np.ndarray, clip_coef: float) -> Tensor:
    """Elementwise ``min(ratio * A, clip(ratio, 1 - eps, 1 + eps) * A)``.

    Args:
        ratio: Probability ratios new/old.
        advantages: Advantages, same shape.
        clip_coef: Clip radius.

    Returns:
        The clipped surrogate per transition.
    """
    adv = Tensor(advantages)
    return minimum(mul(ratio, adv), mul(clip(ratio, 1 - clip_coef, 1 + clip_coef), adv))


@dataclass(frozen=True)
class LossParts:
    """Scalar components of one minibatch loss."""

    loss: float
    action_objective: float
    message_objective: float
    value_loss: float
    action_entropy: float
    message_entropy: float
    approx_kl: float
    clip_fraction: float


def _flat(array: np.ndarray) -> np.ndarray:
    """(N, T, ...) -> (T*N, ...) in time-major order, matching the unrolled tensors."""
    return np.swapaxes(array, 0, 1).reshape(-1, *array.shape[2:])


def ppo_loss(
    params: AgentParams, buf: RolloutBuffer, rows: np.ndarray, cfg: PPOConfig
) -> tuple[Tensor, LossParts]:
    """Recurrent PPO loss over whole sequences.

    Sequences are unrolled from their stored entry state, with the LSTM state zeroed
    wherever ``starts`` is set. The action and message surrogates share one advantage.

    Args:
        params: The agent's parameters.
        buf: Finalized rollout buffer.
        rows: Sequence indices of the minibatch.
        cfg: PPO settings.

    Returns:
        The loss tensor and its components.

    Raises:
        NumericError: If the loss or any logit is non-finite.
    """
    if buf.advantages is None or buf.returns is None:
        raise ValueError("buffer must be finalized before computing the loss")
    hidden = buf.h0.shape[1]
    h, c = Tensor(buf.h0[rows]), Tensor(buf.c0[rows])
    logp_a: list[Tensor] = []
    logp_m: list[Tensor] = []
    ent_a: list[Tensor] = []
    ent_m: list[Tensor] = []
    values: list[Tensor] = []
    for t in range(buf.rewards.shape[1]):
        starts = buf.starts[rows, t]
        if starts.any():
            keep = Tensor(np.repeat((~starts)[:, None], hidden, axis=1))
            h, c = mul(h, keep), mul(c, keep)
        obs = ObsBatch(grid=buf.grid[rows, t], pos=buf.pos[rows, t], msg=buf.msg[rows, t])
        out = policy_forward(params, PolicyState(h=h, c=c), obs)
        dist_a = Categorical(out.action_logits)
        dist_m = Categorical(out.msg_logits)
        logp_a.append(dist_a.log_prob(buf.actions[rows, t]))
        logp_m.append(dist_m.log_prob(buf.tokens[rows, t]))
        ent_a.append(dist_a.entropy())
        ent_m.append(dist_m.entropy())
        values.append(out.value)
        h, c = out.next_state.h, out.next_state.c

    sub_buf = {name: getattr(buf, name)[rows] for name in ("logp_a", "logp_m", "values")}
    adv = _flat(buf.advantages[rows])
    ret = Tensor(_flat(buf.returns[rows]))
    ratio_a = exp(sub(concat(logp_a), Tensor(_flat(sub_buf["logp_a"]))))
    ratio_m = exp(sub(concat(logp_m), Tensor(_flat(sub_buf["logp_m"]))))
    j_a = mean(clipped_surrogate(ratio_a, adv, cfg.clip_coef))
    j_m = mean(clipped_surrogate(ratio_m, adv, cfg.clip_coef))

    v = concat(values)
    err = sub(v, ret)
    if cfg.clip_value_loss:
        old_v = Tensor(_flat(sub_buf["values"]))
        v_clipped = add(old_v, clip(sub(v, old_v), -cfg.clip_coef, cfg.clip_coef))
        err_clipped = sub(v_clipped, ret)
        value_loss = mul(mean(maximum(mul(err, err), mul(err_clipped, err_clipped))), 0.5)
    else:
        value_loss = mul(mean(mul(err, err)), 0.5)

    h_a = mean(concat(ent_a))
    h_m = mean(concat(ent_m))
    loss = add(
        add(neg(add(j_a, j_m)), mul(value_loss, cfg.vf_coef)),
        neg(add(mul(h_a, cfg.action_entropy_coef), mul(h_m, cfg.message_entropy_coef))),
    )

    if not np.isfinite(loss.item()):
        raise NumericError(
            f"non-finite PPO loss {loss.item()}: advantages mean={adv.mean():.4g} "
            f"std={adv.std():.4g}, value loss={value_loss.item():.4g}, "
            f"action entropy={h_a.item():.4g}, message entropy={h_m.item():.4g}"
        )

    ratios = np.concatenate([ratio_a.data, ratio_m.data]).astype(np.float64)
    parts = LossParts(
        loss=loss.item(),
        action_objective=j_a.item(),
        message_objective=j_m.item(),
        value_loss=value_loss.item(),
        action_entropy=h_a.item(),
        message_entropy=h_m.item(),
        approx_kl=float(np.mean((ratios - 1) - np.log(ratios))),
        clip_fraction=float(np.mean(np.abs(ratios - 1) > cfg.clip_coef)),
    )
    return loss, parts


@dataclass(frozen=True)
class TrainStats:
    """Averages over one agent's update."""

    mean_return: float
    action_entropy: float
    message_entropy: float
    value_loss: float
    approx_kl: float
    clip_fraction: float
    grad_scale: float
    lr: float
    n_sequences: int


def ppo_update(
    params: AgentParams,
    opt_state: AdamState,
    buf: RolloutBuffer,
    cfg: PPOConfig,
    lr: float,
    rng: np.random.Generator,
) -> TrainStats:
    """Update one agent on its own rollout buffer.

    ``cfg.epochs`` passes over ``min(cfg.minibatches, N)`` minibatches of whole
    sequences; one clipped-gradient Adam step per minibatch.

    Args:
        params: The agent's parameters; updated in place.
        opt_state: The agent's Adam state; updated in place.
        buf: The agent's buffer (finalized here if needed).
        cfg: PPO settings.
        lr: Learning rate for this update.
        rng: Minibatch shuffling stream.

    Returns:
        Averaged statistics.
    """
    if buf.n_sequences == 0:
        nan = math.nan
        return TrainStats(nan, nan, nan, nan, nan, nan, nan, lr, 0)
    if buf.advantages is None:
        buf.finalize(cfg)

    n_mb = min(cfg.minibatches, buf.n_sequences)
    history: list[LossParts] = []
    scales: list[float] = []
    for epoch in range(cfg.epochs):
        for rows in np.array_split(rng.permutation(buf.n_sequences), n_mb):
            with Tape() as tape:
                loss, parts = ppo_loss(params, buf, rows, cfg)
            backward(tape, loss)
            grads = {name: p.grad for name, p in params.items() if p.grad is not None}
            scales.append(clip_global_norm(grads, cfg.max_grad_norm))
            adam_step(params, grads, opt_state, lr, eps=cfg.adam_eps)
            for p in params.values():
                p.zero_grad()
            history.append(parts)
            logger.debug(
                "epoch %d: loss=%.4f value=%.4f H_a=%.4f H_m=%.4f kl=%.5f",
                epoch,
                parts.loss,
                parts.value_loss,
                parts.action_entropy,
                parts.message_entropy,
                parts.approx_kl,
            )

    return TrainStats(
        mean_return=buf.mean_return(),
        action_entropy=float(np.mean([p.action_entropy for p in history])),
        message_entropy=float(np.mean([p.message_entropy for p in history])),
        value_loss=float(np.mean([p.value_loss for p in history])),
        approx_kl=float(np.mean([p.approx_kl for p in history])),
        clip_fraction=float(np.mean([p.clip_fraction for p in history])),
        grad_scale=float(np.mean(scales)),
        lr=lr,
        n_sequences=buf.n_sequences,
    )
