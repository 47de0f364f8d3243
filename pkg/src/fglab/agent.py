"""One agent's recurrent policy network.

Grid, position and incoming-message encoders feed an LSTM whose hidden state is read
by three heads: action logits, message logits and a value estimate. Each agent looks
received tokens up in its own message table; tokens travel between agents as plain
integers.

Example:
    >>> from fglab.models.agent import ArchConfig
    >>> from fglab.models.env import EnvConfig
    >>> params = init_agent(0, EnvConfig(), ArchConfig())
    >>> parameter_count(params)
    191734
"""

from collections.abc import Sequence
from dataclasses import dataclass
from enum import StrEnum
from fglab.autodiff import Categorical
from fglab.autodiff import Tensor
from fglab.autodiff import concat
from fglab.autodiff import embedding_lookup
from fglab.autodiff import linear
from fglab.autodiff import lstm_cell
from fglab.autodiff import orthogonal_init
from fglab.autodiff import relu
from fglab.autodiff import reshape
from fglab.env import N_ACTIONS
from fglab.env import Observation
from fglab.errors import TokenError
from fglab.models.agent import ArchConfig
from fglab.models.env import EnvConfig
import numpy as np


AgentParams = dict[str, Tensor]


def param_shapes(env: EnvConfig, arch: ArchConfig) -> dict[str, tuple[int, ...]]:
    """Shapes of every parameter, in initialization and serialization order.

    Args:
        env: World configuration (observation width, vocabulary size).
        arch: Layer widths.

    Returns:
        Shapes by parameter name.
    """
    shapes: dict[str, tuple[int, ...]] = {}
    widths = [env.grid_features, *arch.grid_hidden, arch.grid_out]
    for k, (n_in, n_out) in enumerate(zip(widths[:-1], widths[1:], strict=True)):
        shapes[f"grid.{k}.weight"] = (n_out, n_in)
        shapes[f"grid.{k}.bias"] = (n_out,)
    shapes["pos.weight"] = (arch.pos_out, 2)
    shapes["pos.bias"] = (arch.pos_out,)
    shapes["msg.table"] = (env.vocab_size, arch.msg_embed)
    shapes["msg.weight"] = (arch.msg_out, arch.msg_embed)
    shapes["msg.bias"] = (arch.msg_out,)
    hidden = arch.lstm_hidden
    shapes["lstm.weight_ih"] = (4 * hidden, arch.lstm_input)
    shapes["lstm.weight_hh"] = (4 * hidden, hidden)
    shapes["lstm.bias"] = (4 * hidden,)
    heads = (("action_head", N_ACTIONS), ("message_head", env.vocab_size), ("value_head", 1))
    for head, width in heads:
        shapes[f"{head}.weight"] = (width, hidden)
        shapes[f"{head}.bias"] = (width,)
    return shapes


def init_agent(seed: int, env: EnvConfig, arch: ArchConfig) -> AgentParams:
    """Initialize an agent's parameters deterministically from ``seed``.

    Weights are orthogonal with gain ``arch.weight_gain`` (LSTM weights per gate
    block), heads use ``arch.head_gain``, biases start at zero.

    Args:
        seed: Any integer.
        env: World configuration.
        arch: Layer widths.

    Returns:
        Trainable parameters by name.
    """
    rng = np.random.default_rng(seed & 0xFFFFFFFFFFFFFFFF)
    params: AgentParams = {}
    for name, shape in param_shapes(env, arch).items():
        if name.endswith("bias"):
            tensor = Tensor(np.zeros(shape), requires_grad=True)
        elif name.startswith("lstm."):
            blocks = [
                orthogonal_init(shape[0] // 4, shape[1], arch.weight_gain, rng) for _ in range(4)
            ]
            tensor = Tensor(np.concatenate([b.data for b in blocks]), requires_grad=True)
        else:
            gain = arch.head_gain if "_head." in name else arch.weight_gain
            tensor = orthogonal_init(shape[0], shape[1], gain, rng)
        tensor.name = name
        params[name] = tensor
    return params


def parameter_count(params: AgentParams) -> int:
    """Total number of scalar parameters."""
    return sum(p.data.size for p in params.values())


def grid_layers(params: AgentParams) -> int:
    """Number of affine layers in the grid encoder."""
    return sum(1 for name in params if name.startswith("grid.") and name.endswith(".weight"))


@dataclass(frozen=True)
class ObsBatch:
    """Observations of several bodies stacked for one forward pass.

    Attributes:
        grid: (batch, 9C) flattened receptive fields.
        pos: (batch, 2) normalized positions.
        msg: (batch,) received tokens.
    """

    grid: np.ndarray
    pos: np.ndarray
    msg: np.ndarray

    @classmethod
    def stack(cls, observations: Sequence[Observation]) -> "ObsBatch":
        """Stack single observations."""
        return cls(
            grid=np.stack([o.grid.reshape(-1) for o in observations]),
            pos=np.stack([o.pos for o in observations]),
            msg=np.array([o.msg_in for o in observations], dtype=np.int64),
        )

    def __len__(self) -> int:
        return int(self.msg.shape[0])


@dataclass(frozen=True)
class PolicyState:
    """LSTM hidden and cell state, (H,) for one body or (batch, H)."""

    h: Tensor
    c: Tensor

    @classmethod
    def zeros(cls, hidden: int, batch: int | None = None) -> "PolicyState":
        """Fresh state for one body (``batch=None``) or a batch of bodies."""
        shape = (hidden,) if batch is None else (batch, hidden)
        return cls(h=Tensor(np.zeros(shape)), c=Tensor(np.zeros(shape)))

    @classmethod
    def from_arrays(cls, h: np.ndarray, c: np.ndarray) -> "PolicyState":
        """Constant state from plain arrays."""
        return cls(h=Tensor(h), c=Tensor(c))


@dataclass(frozen=True)
class PolicyOutput:
    """Outputs of one forward pass.

    Attributes:
        action_logits: (5,) or (batch, 5).
        msg_logits: (vocab,) or (batch, vocab).
        value: Scalar or (batch,).
        next_state: LSTM state after this step.
    """

    action_logits: Tensor
    msg_logits: Tensor
    value: Tensor
    next_state: PolicyState


def policy_forward(
    params: AgentParams, state: PolicyState, obs: Observation | ObsBatch
) -> PolicyOutput:
    """Run the network for one step.

    The received token is looked up in this agent's own message table.

    Args:
        params: The agent's parameters.
        state: LSTM state entering the step.
        obs: One observation or a batch.

    Returns:
        Action and message logits, value and next state.

    Raises:
        TokenError: If a received token is outside the vocabulary.
        ShapeError: If the observation or state does not match the parameters.
    """
    if isinstance(obs, Observation):
        grid, pos, msg = obs.grid.reshape(-1), obs.pos, np.asarray(obs.msg_in, dtype=np.int64)
    else:
        grid, pos, msg = obs.grid, obs.pos, obs.msg
    vocab = params["msg.table"].shape[0]
    if msg.size and (msg.min() < 0 or msg.max() >= vocab):
        raise TokenError(f"received token outside [0, {vocab}): {msg.tolist()}")

    g = Tensor(grid)
    for k in range(grid_layers(params)):
        g = relu(linear(g, params[f"grid.{k}.weight"], params[f"grid.{k}.bias"]))
    p = relu(linear(Tensor(pos), params["pos.weight"], params["pos.bias"]))
    m = embedding_lookup(params["msg.table"], msg)
    m = relu(linear(m, params["msg.weight"], params["msg.bias"]))

    h, c = lstm_cell(
        concat([g, p, m]),
        state.h,
        state.c,
        params["lstm.weight_ih"],
        params["lstm.weight_hh"],
        params["lstm.bias"],
    )
    value = linear(h, params["value_head.weight"], params["value_head.bias"])
    return PolicyOutput(
        action_logits=linear(h, params["action_head.weight"], params["action_head.bias"]),
        msg_logits=linear(h, params["message_head.weight"], params["message_head.bias"]),
        value=reshape(value, value.shape[:-1]),
        next_state=PolicyState(h=h, c=c),
    )


class DecodeMode(StrEnum):
    """How actions and tokens are chosen from the policy."""

    SAMPLE = "sample"
    GREEDY = "greedy"


@dataclass(frozen=True)
class Selection:
    """Chosen action and token with their log-probabilities (scalars or per row)."""

    action: np.ndarray
    token: np.ndarray
    logp_a: np.ndarray
    logp_m: np.ndarray


def select(
    output: PolicyOutput, mode: DecodeMode, rng: np.random.Generator | None = None
) -> Selection:
    """Choose an action and a token.

    Args:
        output: Policy output.
        mode: Sample from both distributions or take their argmax.
        rng: Generator for sampling (action drawn before token).

    Returns:
        Chosen indices and their log-probabilities.

    Raises:
        ValueError: If sampling is requested without a generator.
    """
    actions = Categorical(output.action_logits)
    tokens = Categorical(output.msg_logits)
    if mode == DecodeMode.SAMPLE:
        if rng is None:
            raise ValueError("sampling requires a random generator")
        a = actions.sample(rng)
        m = tokens.sample(rng)
    else:
        a = np.argmax(output.action_logits.data, axis=-1)
        m = np.argmax(output.msg_logits.data, axis=-1)
    return Selection(
        action=np.asarray(a),
        token=np.asarray(m),
        logp_a=np.asarray(actions.log_prob(a).data),
        logp_m=np.asarray(tokens.log_prob(m).data),
    )


def sample_rows(output: PolicyOutput, rngs: Sequence[np.random.Generator]) -> Selection:
    """Sample a batch where every row draws from its own generator.

    Args:
        output: Batched policy output.
        rngs: One generator per row; each draws the action first, then the token.

    Returns:
        Per-row choices and log-probabilities.
    """
    actions = Categorical(output.action_logits)
    tokens = Categorical(output.msg_logits)
    draws = np.array([[rng.random(), rng.random()] for rng in rngs])
    a = actions.inverse_cdf(draws[:, 0])
    m = tokens.inverse_cdf(draws[:, 1])
    return Selection(
        action=a,
        token=m,
        logp_a=actions.log_prob(a).data,
        logp_m=tokens.log_prob(m).data,
    )


def flat_state(params: AgentParams) -> dict[str, np.ndarray]:
    """Copies of the parameter arrays, for serialization and checksums."""
    return {name: p.data.copy() for name, p in params.items()}


def load_state(env: EnvConfig, arch: ArchConfig, arrays: dict[str, np.ndarray]) -> AgentParams:
    """Rebuild parameters from arrays, checking names and shapes.

    Args:
        env: World configuration.
        arch: Layer widths.
        arrays: Arrays by parameter name.

    Returns:
        Trainable parameters.

    Raises:
        KeyError: If a parameter is missing.
        ValueError: If a shape differs from the architecture.
    """
    params: AgentParams = {}
    for name, shape in param_shapes(env, arch).items():
        array = arrays[name]
        if tuple(array.shape) != shape:
            raise ValueError(f"{name}: expected shape {shape}, found {tuple(array.shape)}")
        params[name] = Tensor(array, requires_grad=True, name=name)
    return params
