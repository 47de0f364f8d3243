"""Dense numpy tensors with tape-based reverse-mode differentiation.

Primitives record a node on the active :class:`Tape` whenever one of their inputs
requires a gradient. :func:`backward` walks the tape once in reverse, accumulating
gradients into leaf tensors, and then clears the tape.

Training runs in float32; wrap code in ``precision(np.float64)`` for finite-difference
checks.

Example:
    >>> W = Tensor(np.eye(2), requires_grad=True)
    >>> x = Tensor([1.0, 2.0])
    >>> with Tape() as tape:
    ...     loss = sum_(linear(x, W))
    >>> backward(tape, loss)
    >>> W.grad
    array([[1., 2.],
           [1., 2.]], dtype=float32)
"""

from collections.abc import Callable
from collections.abc import Iterator
from collections.abc import Mapping
from collections.abc import Sequence
from contextlib import contextmanager
from contextvars import ContextVar
from contextvars import Token
from dataclasses import dataclass
from dataclasses import field
from fglab.errors import AutodiffError
from fglab.errors import ConfigError
from fglab.errors import NumericError
from fglab.errors import ShapeError
import numpy as np
from typing import Any


_DTYPE: ContextVar[type[np.floating[Any]]] = ContextVar("fglab_dtype", default=np.float32)
_TAPE: ContextVar["Tape | None"] = ContextVar("fglab_tape", default=None)

Backward = Callable[[np.ndarray], Sequence[np.ndarray | None]]


def default_dtype() -> type[np.floating[Any]]:
    """The float dtype new tensors are created with."""
    return _DTYPE.get()


@contextmanager
def precision(dtype: type[np.floating[Any]]) -> Iterator[None]:
    """Create tensors with ``dtype`` inside the block.

    Args:
        dtype: ``np.float32`` or ``np.float64``.

    Yields:
        Nothing.
    """
    token = _DTYPE.set(dtype)
    try:
        yield
    finally:
        _DTYPE.reset(token)


class Tensor:
    """A real array with an optional gradient accumulator.

    Attributes:
        data: Row-major values.
        requires_grad: Whether gradients flow to this tensor.
        grad: Accumulated gradient (leaf tensors only), same shape as ``data``.
        name: Optional label used in diagnostics.
    """

    __slots__ = ("data", "requires_grad", "grad", "name", "is_leaf")

    def __init__(self, data: Any, requires_grad: bool = False, name: str = "") -> None:
        """Wrap ``data`` as a tensor of the current default dtype.

        Args:
            data: Array-like values.
            requires_grad: Whether this tensor is trainable.
            name: Optional label.
        """
        self.data: np.ndarray = np.asarray(data, dtype=default_dtype())
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self.name = name
        self.is_leaf = True

    @property
    def shape(self) -> tuple[int, ...]:
        """Dimensions of the tensor."""
        return tuple(self.data.shape)

    def numpy(self) -> np.ndarray:
        """The underlying array (not a copy)."""
        return self.data

    def item(self) -> float:
        """The value of a one-element tensor."""
        return float(self.data.reshape(-1)[0])

    def zero_grad(self) -> None:
        """Drop the accumulated gradient."""
        self.grad = None

    def __repr__(self) -> str:
        label = f" {self.name!r}" if self.name else ""
        return f"Tensor{label}(shape={self.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other: "Tensor | float") -> "Tensor":
        return add(self, other)

    def __sub__(self, other: "Tensor | float") -> "Tensor":
        return sub(self, other)

    def __mul__(self, other: "Tensor | float") -> "Tensor":
        return mul(self, other)

    def __neg__(self) -> "Tensor":
        return neg(self)


@dataclass
class Node:
    """One recorded primitive application."""

    out: Tensor
    inputs: tuple[Tensor, ...]
    backward: Backward


@dataclass
class Tape:
    """Ordered record of primitive applications.

    Use as a context manager; primitives called inside the block are recorded.
    A tape can be differentiated once.
    """

    nodes: list[Node] = field(default_factory=list)
    consumed: bool = False
    _token: Token["Tape | None"] | None = field(default=None, repr=False)

    def __enter__(self) -> "Tape":
        self._token = _TAPE.set(self)
        return self

    def __exit__(self, *exc: object) -> None:
        if self._token is not None:
            _TAPE.reset(self._token)
            self._token = None

    def record(self, node: Node) -> None:
        """Append a node.

        Args:
            node: The node.

        Raises:
            AutodiffError: If the tape was already differentiated.
        """
        if self.consumed:
            raise AutodiffError("tape already consumed by backward(); re-run the forward pass")
        self.nodes.append(node)


def _emit(data: np.ndarray, inputs: tuple[Tensor, ...], grad_fn: Backward) -> Tensor:
    """Create a primitive's output and record it when any input needs a gradient."""
    tape = _TAPE.get()
    track = tape is not None and any(t.requires_grad for t in inputs)
    out = Tensor(data, requires_grad=track)
    if track and tape is not None:
        out.is_leaf = False
        tape.record(Node(out=out, inputs=inputs, backward=grad_fn))
    return out


def _as_tensor(value: "Tensor | float | np.ndarray") -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def _check_same(op: str, a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape and a.data.ndim != 0 and b.data.ndim != 0:
        raise ShapeError(op, a.shape, b.shape)


def _reduce_to(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    return np.asarray(grad.sum()).reshape(shape)


def backward(tape: Tape, loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into every trainable leaf on the tape.

    Args:
        tape: The tape the loss was computed on.
        loss: One-element tensor.

    Raises:
        AutodiffError: If the tape was already consumed, the loss is not a scalar,
            or the loss was not recorded on the tape.
    """
    if tape.consumed:
        raise AutodiffError("backward called twice on the same tape; re-run the forward pass")
    if loss.data.size != 1:
        raise AutodiffError(f"loss must be a scalar, got shape {loss.shape}")
    if not loss.requires_grad or not any(node.out is loss for node in tape.nodes):
        raise AutodiffError("backward on a detached scalar (loss is not on this tape)")

    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(tape.nodes):
        g = grads.pop(id(node.out), None)
        if g is None:
            continue
        for inp, gi in zip(node.inputs, node.backward(g), strict=True):
            if gi is None or not inp.requires_grad:
                continue
            gi = _reduce_to(np.asarray(gi, dtype=inp.data.dtype), inp.shape)
            if inp.is_leaf:
                inp.grad = gi.copy() if inp.grad is None else inp.grad + gi
            else:
                prev = grads.get(id(inp))
                grads[id(inp)] = gi if prev is None else prev + gi
    tape.nodes.clear()
    tape.consumed = True


# --- primitives ---------------------------------------------------------------


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """Affine map ``x @ weight.T + bias``.

    Args:
        x: Input of shape (in,) or (batch, in).
        weight: Matrix of shape (out, in).
        bias: Optional vector of shape (out,).

    Returns:
        Output of shape (out,) or (batch, out).

    Raises:
        ShapeError: If the shapes do not line up.
    """
    if weight.data.ndim != 2 or x.data.ndim not in (1, 2) or x.shape[-1] != weight.shape[1]:
        raise ShapeError("linear", x.shape, weight.shape)
    if bias is not None and bias.shape != (weight.shape[0],):
        raise ShapeError("linear", weight.shape, bias.shape)
    y = x.data @ weight.data.T
    if bias is not None:
        y = y + bias.data

    def grad_fn(g: np.ndarray) -> list[np.ndarray | None]:
        gx = g @ weight.data
        gw = np.outer(g, x.data) if x.data.ndim == 1 else g.T @ x.data
        grads: list[np.ndarray | None] = [gx, gw]
        if bias is not None:
            grads.append(g if g.ndim == 1 else g.sum(axis=0))
        return grads

    inputs = (x, weight) if bias is None else (x, weight, bias)
    return _emit(y, inputs, grad_fn)


def relu(x: Tensor) -> Tensor:
    """Elementwise ``max(x, 0)``."""
    mask = x.data > 0
    return _emit(np.where(mask, x.data, 0), (x,), lambda g: [g * mask])


def tanh(x: Tensor) -> Tensor:
    """Elementwise hyperbolic tangent."""
    y = np.tanh(x.data)
    return _emit(y, (x,), lambda g: [g * (1 - y * y)])


def sigmoid(x: Tensor) -> Tensor:
    """Elementwise logistic function."""
    y = 0.5 * (1 + np.tanh(0.5 * x.data))
    return _emit(y, (x,), lambda g: [g * y * (1 - y)])


def exp(x: Tensor) -> Tensor:
    """Elementwise exponential."""
    y = np.exp(x.data)
    return _emit(y, (x,), lambda g: [g * y])


def softmax(x: Tensor) -> Tensor:
    """Softmax over the last axis."""
    shifted = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=-1, keepdims=True)
    return _emit(y, (x,), lambda g: [y * (g - (g * y).sum(axis=-1, keepdims=True))])


def log_softmax(x: Tensor) -> Tensor:
    """Log-softmax over the last axis."""
    shifted = x.data - x.data.max(axis=-1, keepdims=True)
    y = shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    p = np.exp(y)
    return _emit(y, (x,), lambda g: [g - p * g.sum(axis=-1, keepdims=True)])


def concat(xs: Sequence[Tensor]) -> Tensor:
    """Concatenate along the last axis.

    Raises:
        ShapeError: If the leading dimensions differ.
    """
    lead = {t.shape[:-1] for t in xs}
    if len(lead) != 1:
        raise ShapeError("concat", *(t.shape for t in xs))
    bounds = np.cumsum([0, *(t.shape[-1] for t in xs)])
    y = np.concatenate([t.data for t in xs], axis=-1)

    def grad_fn(g: np.ndarray) -> list[np.ndarray | None]:
        return [g[..., bounds[k] : bounds[k + 1]] for k in range(len(xs))]

    return _emit(y, tuple(xs), grad_fn)


def embedding_lookup(table: Tensor, index: int | np.ndarray) -> Tensor:
    """Rows of ``table`` selected by integer ``index``.

    Args:
        table: Matrix of shape (vocab, dim).
        index: Row index or integer array of row indices.

    Returns:
        Shape (dim,) for a scalar index, (n, dim) for an index vector.

    Raises:
        ShapeError: If ``table`` is not a matrix.
        IndexError: If an index is out of range.
    """
    if table.data.ndim != 2:
        raise ShapeError("embedding_lookup", table.shape)
    idx = np.asarray(index, dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= table.shape[0]):
        raise IndexError(f"embedding index out of range [0, {table.shape[0]})")

    def grad_fn(g: np.ndarray) -> list[np.ndarray | None]:
        gt = np.zeros_like(table.data)
        np.add.at(gt, idx, g)
        return [gt]

    return _emit(table.data[idx], (table,), grad_fn)


def add(a: Tensor | float, b: Tensor | float) -> Tensor:
    """Elementwise sum of equal shapes, or with a scalar."""
    ta, tb = _as_tensor(a), _as_tensor(b)
    _check_same("add", ta, tb)
    return _emit(ta.data + tb.data, (ta, tb), lambda g: [g, g])


def sub(a: Tensor | float, b: Tensor | float) -> Tensor:
    """Elementwise difference of equal shapes, or with a scalar."""
    ta, tb = _as_tensor(a), _as_tensor(b)
    _check_same("sub", ta, tb)
    return _emit(ta.data - tb.data, (ta, tb), lambda g: [g, -g])


def mul(a: Tensor | float, b: Tensor | float) -> Tensor:
    """Elementwise product of equal shapes, or with a scalar."""
    ta, tb = _as_tensor(a), _as_tensor(b)
    _check_same("mul", ta, tb)
    return _emit(ta.data * tb.data, (ta, tb), lambda g: [g * tb.data, g * ta.data])


def neg(x: Tensor) -> Tensor:
    """Elementwise negation."""
    return _emit(-x.data, (x,), lambda g: [-g])


def clip(x: Tensor, low: float, high: float) -> Tensor:
    """Clamp to ``[low, high]``; the gradient passes inside the closed interval."""
    inside = (x.data >= low) & (x.data <= high)
    return _emit(np.clip(x.data, low, high), (x,), lambda g: [g * inside])


def minimum(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise minimum; ties send the gradient to ``a``."""
    _check_same("minimum", a, b)
    pick_a = a.data <= b.data
    y = np.where(pick_a, a.data, b.data)
    return _emit(y, (a, b), lambda g: [g * pick_a, g * ~pick_a])


def maximum(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise maximum; ties send the gradient to ``a``."""
    _check_same("maximum", a, b)
    pick_a = a.data >= b.data
    y = np.where(pick_a, a.data, b.data)
    return _emit(y, (a, b), lambda g: [g * pick_a, g * ~pick_a])


def sum_(x: Tensor, axis: int | None = None) -> Tensor:
    """Sum over all elements (``axis=None``) or over the last axis (``axis=-1``)."""
    if axis is None:
        return _emit(np.asarray(x.data.sum()), (x,), lambda g: [np.broadcast_to(g, x.shape)])
    if axis != -1:
        raise ShapeError("sum", x.shape)
    y = x.data.sum(axis=-1)
    return _emit(y, (x,), lambda g: [np.broadcast_to(g[..., None], x.shape)])


def mean(x: Tensor) -> Tensor:
    """Mean over all elements."""
    n = x.data.size
    return _emit(np.asarray(x.data.mean()), (x,), lambda g: [np.broadcast_to(g / n, x.shape)])


def take(x: Tensor, index: int | np.ndarray) -> Tensor:
    """Pick one entry of the last axis per row.

    Args:
        x: Shape (k,) or (batch, k).
        index: Integer (for 1-D ``x``) or integer vector of length batch.

    Returns:
        Scalar or shape (batch,).
    """
    idx = np.asarray(index, dtype=np.int64)
    if x.data.ndim == 1:
        rows: Any = ()
    elif x.data.ndim == 2 and idx.shape == (x.shape[0],):
        rows = np.arange(x.shape[0])
    else:
        raise ShapeError("take", x.shape, idx.shape)
    y = x.data[rows, idx] if x.data.ndim == 2 else x.data[idx]

    def grad_fn(g: np.ndarray) -> list[np.ndarray | None]:
        gx = np.zeros_like(x.data)
        if x.data.ndim == 2:
            gx[rows, idx] = g
        else:
            gx[idx] = g
        return [gx]

    return _emit(np.asarray(y), (x,), grad_fn)


def slice_last(x: Tensor, start: int, stop: int) -> Tensor:
    """``x[..., start:stop]``."""

    def grad_fn(g: np.ndarray) -> list[np.ndarray | None]:
        gx = np.zeros_like(x.data)
        gx[..., start:stop] = g
        return [gx]

    return _emit(x.data[..., start:stop], (x,), grad_fn)


def reshape(x: Tensor, shape: tuple[int, ...]) -> Tensor:
    """Reshape without copying values."""
    return _emit(x.data.reshape(shape), (x,), lambda g: [g.reshape(x.shape)])


def lstm_cell(
    x: Tensor,
    h: Tensor,
    c: Tensor,
    weight_ih: Tensor,
    weight_hh: Tensor,
    bias: Tensor,
) -> tuple[Tensor, Tensor]:
    """One LSTM step with gate order input, forget, candidate, output.

    Args:
        x: Input, (in,) or (batch, in).
        h: Hidden state, (H,) or (batch, H).
        c: Cell state, same shape as ``h``.
        weight_ih: (4H, in).
        weight_hh: (4H, H).
        bias: (4H,).

    Returns:
        Next hidden and cell states.

    Raises:
        ShapeError: If the state or weight shapes are inconsistent.
    """
    hidden = weight_hh.shape[-1]
    if h.shape != c.shape or h.shape[-1] != hidden or weight_hh.shape[0] != 4 * hidden:
        raise ShapeError("lstm_cell", h.shape, c.shape, weight_hh.shape)
    gates = add(linear(x, weight_ih, bias), linear(h, weight_hh))
    i = sigmoid(slice_last(gates, 0, hidden))
    f = sigmoid(slice_last(gates, hidden, 2 * hidden))
    g = tanh(slice_last(gates, 2 * hidden, 3 * hidden))
    o = sigmoid(slice_last(gates, 3 * hidden, 4 * hidden))
    c_next = add(mul(f, c), mul(i, g))
    h_next = mul(o, tanh(c_next))
    return h_next, c_next


class Categorical:
    """Categorical distribution over the last axis of ``logits``.

    Attributes:
        logits: Unnormalized log-probabilities, (k,) or (batch, k).
        log_probs: Normalized log-probabilities (on the tape when logits are).
    """

    def __init__(self, logits: Tensor) -> None:
        """Build the distribution.

        Args:
            logits: Unnormalized log-probabilities.

        Raises:
            NumericError: If any logit is NaN or infinite.
        """
        if not np.all(np.isfinite(logits.data)):
            raise NumericError(f"non-finite logits: {logits.data!r}")
        self.logits = logits
        self.log_probs = log_softmax(logits)

    @property
    def probs(self) -> np.ndarray:
        """Probabilities as a plain array."""
        return np.exp(self.log_probs.data)

    def inverse_cdf(self, u: np.ndarray | float) -> np.ndarray:
        """Map uniform draws in [0, 1) to category indices.

        Args:
            u: One uniform draw per distribution in the batch.

        Returns:
            Category indices.
        """
        cdf = np.cumsum(self.probs.astype(np.float64), axis=-1)
        k = (cdf <= np.asarray(u)[..., None]).sum(axis=-1)
        return np.minimum(k, cdf.shape[-1] - 1)

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        """Draw one index per distribution with one uniform draw each.

        Args:
            rng: Random generator.

        Returns:
            Category index (0-d array for a single distribution).
        """
        return self.inverse_cdf(rng.random(self.log_probs.shape[:-1]))

    def log_prob(self, k: int | np.ndarray) -> Tensor:
        """Log-probability of category ``k`` (one per batch row)."""
        return take(self.log_probs, k)

    def entropy(self) -> Tensor:
        """``-sum p log p`` over the last axis."""
        return neg(sum_(mul(exp(self.log_probs), self.log_probs), axis=-1))


# --- initialization and optimization --------------------------------------------


def orthogonal_init(rows: int, cols: int, gain: float, rng: np.random.Generator) -> Tensor:
    """Orthogonal matrix scaled by ``gain``.

    ``W @ W.T == gain**2 * I`` when ``rows <= cols``, ``W.T @ W == gain**2 * I`` otherwise.

    Args:
        rows: Output dimension.
        cols: Input dimension.
        gain: Scale factor.
        rng: Random generator.

    Returns:
        Trainable tensor of shape (rows, cols).

    Raises:
        ConfigError: If ``gain`` is not positive.
    """
    if gain <= 0:
        raise ConfigError(f"orthogonal gain must be positive, got {gain}")
    a = rng.standard_normal((max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(a)
    d = np.sign(np.diag(r))
    q = q * np.where(d == 0, 1.0, d)
    w = q.T if rows < cols else q
    return Tensor(gain * w, requires_grad=True)


@dataclass
class AdamState:
    """Per-parameter Adam moments and the shared step counter."""

    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0

    @classmethod
    def zeros(cls, params: Mapping[str, Tensor]) -> "AdamState":
        """Fresh state with zero moments shaped like ``params``."""
        return cls(
            m={k: np.zeros_like(p.data) for k, p in params.items()},
            v={k: np.zeros_like(p.data) for k, p in params.items()},
        )


def adam_step(
    params: Mapping[str, Tensor],
    grads: Mapping[str, np.ndarray],
    state: AdamState,
    lr: float,
    eps: float = 1e-5,
    betas: tuple[float, float] = (0.9, 0.999),
) -> None:
    """Apply one bias-corrected Adam update in place.

    Args:
        params: Parameters by name.
        grads: Gradients by name; missing names are skipped.
        state: Moments, updated in place.
        lr: Learning rate.
        eps: Denominator epsilon.
        betas: Moment decay rates.
    """
    b1, b2 = betas
    state.step += 1
    c1 = 1 - b1**state.step
    c2 = 1 - b2**state.step
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            continue
        m = state.m[name] = b1 * state.m[name] + (1 - b1) * g
        v = state.v[name] = b2 * state.v[name] + (1 - b2) * g * g
        update = lr * (m / c1) / (np.sqrt(v / c2) + eps)
        p.data -= update.astype(p.data.dtype)


def clip_global_norm(grads: Mapping[str, np.ndarray], max_norm: float = 0.5) -> float:
    """Scale all gradients in place so their joint L2 norm is at most ``max_norm``.

    Args:
        grads: Gradients by name.
        max_norm: Norm limit.

    Returns:
        The scale applied, ``min(1, max_norm / norm)``.
    """
    total = sum(float(np.sum(np.square(g, dtype=np.float64))) for g in grads.values())
    norm = float(np.sqrt(total))
    if norm <= max_norm:
        return 1.0
    scale = max_norm / norm
    for g in grads.values():
        g *= scale
    return scale
