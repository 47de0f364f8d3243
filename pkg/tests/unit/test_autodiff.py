"""Unit tests for the tape-based autodiff.

Gradients of every primitive are checked against central finite differences in 64-bit
precision.
"""

from fglab.autodiff import Tensor
from fglab.autodiff import precision
import numpy as np
import pytest


TOLERANCE = 1e-6


def param(rng: np.random.Generator, *shape: int, scale: float = 1.0) -> Tensor:
    return Tensor(scale * rng.standard_normal(shape), requires_grad=True)


class TestGradients:
    """Finite-difference checks per primitive."""

    def test_linear(self, rng, grad_check) -> None:
        """linear should differentiate through input, weight and bias."""
        from fglab.autodiff import linear
        from fglab.autodiff import sum_
        from fglab.autodiff import tanh

        with precision(np.float64):
            x, w, b = param(rng, 3, 4), param(rng, 2, 4), param(rng, 2)
            assert grad_check(lambda: sum_(tanh(linear(x, w, b))), [x, w, b]) < TOLERANCE

    def test_linear_vector_input(self, rng, grad_check) -> None:
        """linear should accept a single input vector."""
        from fglab.autodiff import linear
        from fglab.autodiff import sum_
        from fglab.autodiff import tanh

        with precision(np.float64):
            x, w = param(rng, 4), param(rng, 3, 4)
            assert grad_check(lambda: sum_(tanh(linear(x, w))), [x, w]) < TOLERANCE

    def test_elementwise(self, rng, grad_check) -> None:
        """sigmoid, exp, mul, sub and neg should chain correctly."""
        from fglab.autodiff import exp
        from fglab.autodiff import mean
        from fglab.autodiff import mul
        from fglab.autodiff import neg
        from fglab.autodiff import sigmoid
        from fglab.autodiff import sub

        with precision(np.float64):
            a, b = param(rng, 2, 3, scale=0.5), param(rng, 2, 3, scale=0.5)
            fn = lambda: mean(mul(sigmoid(a), neg(exp(sub(a, b)))))  # noqa: E731
            assert grad_check(fn, [a, b]) < TOLERANCE

    def test_relu_away_from_kink(self, grad_check) -> None:
        """relu should pass gradients only for positive inputs."""
        from fglab.autodiff import mul
        from fglab.autodiff import relu
        from fglab.autodiff import sum_

        with precision(np.float64):
            x = Tensor([[-1.0, 0.5], [2.0, -0.3]], requires_grad=True)
            assert grad_check(lambda: sum_(mul(relu(x), x)), [x]) < TOLERANCE

    def test_softmax_family(self, rng, grad_check) -> None:
        """softmax and log_softmax gradients should match finite differences."""
        from fglab.autodiff import log_softmax
        from fglab.autodiff import mul
        from fglab.autodiff import softmax
        from fglab.autodiff import sum_

        with precision(np.float64):
            x = param(rng, 3, 5)
            weights = Tensor(rng.standard_normal((3, 5)))
            assert grad_check(lambda: sum_(mul(softmax(x), weights)), [x]) < TOLERANCE
            assert grad_check(lambda: sum_(mul(log_softmax(x), weights)), [x]) < TOLERANCE

    def test_concat_and_slices(self, rng, grad_check) -> None:
        """concat, slice_last and reshape should route gradients to their sources."""
        from fglab.autodiff import concat
        from fglab.autodiff import mul
        from fglab.autodiff import reshape
        from fglab.autodiff import slice_last
        from fglab.autodiff import sum_

        with precision(np.float64):
            a, b = param(rng, 2, 3), param(rng, 2, 2)

            def fn() -> Tensor:
                joined = concat([a, b])
                part = slice_last(joined, 1, 4)
                return sum_(mul(reshape(part, (3, 2)), reshape(part, (3, 2))))

            assert grad_check(fn, [a, b]) < TOLERANCE

    def test_embedding_lookup_repeats(self, rng, grad_check) -> None:
        """Repeated indices should accumulate into the same table row."""
        from fglab.autodiff import embedding_lookup
        from fglab.autodiff import mul
        from fglab.autodiff import sum_

        with precision(np.float64):
            table = param(rng, 4, 3)
            idx = np.array([1, 1, 3])
            def fn() -> Tensor:
                rows = embedding_lookup(table, idx)
                return sum_(mul(rows, rows))

            assert grad_check(fn, [table]) < TOLERANCE

    def test_clip_min_max(self, grad_check) -> None:
        """clip, minimum and maximum should pick the active branch."""
        from fglab.autodiff import clip
        from fglab.autodiff import maximum
        from fglab.autodiff import minimum
        from fglab.autodiff import mul
        from fglab.autodiff import sum_

        with precision(np.float64):
            a = Tensor([0.3, 1.5, -0.7, 0.95], requires_grad=True)
            b = Tensor([-0.5, 2.4, -0.2, 1.2], requires_grad=True)

            def fn() -> Tensor:
                low = minimum(mul(a, b), clip(a, 0.0, 1.0))
                return sum_(maximum(low, mul(b, 0.5)))

            assert grad_check(fn, [a, b]) < TOLERANCE

    def test_take_and_sum_last(self, rng, grad_check) -> None:
        """take should pick one entry per row and sum_(axis=-1) should broadcast back."""
        from fglab.autodiff import add
        from fglab.autodiff import mean
        from fglab.autodiff import mul
        from fglab.autodiff import sum_
        from fglab.autodiff import take

        with precision(np.float64):
            x = param(rng, 4, 3)
            idx = np.array([0, 2, 1, 2])
            fn = lambda: mean(add(mul(take(x, idx), 2.0), sum_(mul(x, x), axis=-1)))  # noqa: E731
            assert grad_check(fn, [x]) < TOLERANCE

    def test_lstm_cell(self, rng, grad_check) -> None:
        """One LSTM step should differentiate through every input."""
        from fglab.autodiff import add
        from fglab.autodiff import lstm_cell
        from fglab.autodiff import sum_

        with precision(np.float64):
            hidden = 3
            x, h, c = param(rng, 2, 4), param(rng, 2, hidden), param(rng, 2, hidden)
            w_ih, w_hh = param(rng, 4 * hidden, 4, scale=0.5), param(rng, 4 * hidden, hidden)
            bias = param(rng, 4 * hidden, scale=0.1)

            def fn() -> Tensor:
                h1, c1 = lstm_cell(x, h, c, w_ih, w_hh, bias)
                h2, c2 = lstm_cell(x, h1, c1, w_ih, w_hh, bias)
                return add(sum_(h2), sum_(c2))

            assert grad_check(fn, [x, h, c, w_ih, w_hh, bias]) < TOLERANCE

    def test_categorical_entropy_and_log_prob(self, rng, grad_check) -> None:
        """Entropy and log-probabilities should differentiate through the logits."""
        from fglab.autodiff import Categorical
        from fglab.autodiff import add
        from fglab.autodiff import sum_

        with precision(np.float64):
            logits = param(rng, 3, 5)

            def fn() -> Tensor:
                dist = Categorical(logits)
                return add(sum_(dist.entropy()), sum_(dist.log_prob(np.array([0, 4, 2]))))

            assert grad_check(fn, [logits]) < TOLERANCE


class TestTapeContract:
    """Tests for the backward-pass contract."""

    def test_float32_by_default(self) -> None:
        """Tensors should be 32-bit outside a precision block."""
        assert Tensor([1.0]).data.dtype == np.float32
        with precision(np.float64):
            assert Tensor([1.0]).data.dtype == np.float64
        assert Tensor([1.0]).data.dtype == np.float32

    def test_backward_twice(self) -> None:
        """A tape should be differentiable once."""
        from fglab.autodiff import Tape
        from fglab.autodiff import backward
        from fglab.autodiff import sum_
        from fglab.errors import AutodiffError

        x = Tensor([1.0, 2.0], requires_grad=True)
        with Tape() as tape:
            loss = sum_(x)
        backward(tape, loss)
        assert x.grad.tolist() == [1.0, 1.0]
        with pytest.raises(AutodiffError, match="twice"):
            backward(tape, loss)

    def test_gradients_accumulate_on_leaves(self) -> None:
        """A leaf used twice should receive both contributions."""
        from fglab.autodiff import Tape
        from fglab.autodiff import add
        from fglab.autodiff import backward
        from fglab.autodiff import sum_

        x = Tensor([1.0, 2.0], requires_grad=True)
        with Tape() as tape:
            loss = sum_(add(x, x))
        backward(tape, loss)
        assert x.grad.tolist() == [2.0, 2.0]

    def test_non_scalar_loss(self) -> None:
        """The loss should be a scalar."""
        from fglab.autodiff import Tape
        from fglab.autodiff import backward
        from fglab.autodiff import tanh
        from fglab.errors import AutodiffError

        x = Tensor([1.0, 2.0], requires_grad=True)
        with Tape() as tape:
            y = tanh(x)
        with pytest.raises(AutodiffError, match="scalar"):
            backward(tape, y)

    def test_detached_loss(self) -> None:
        """A loss computed off the tape should be rejected."""
        from fglab.autodiff import Tape
        from fglab.autodiff import backward
        from fglab.autodiff import sum_
        from fglab.errors import AutodiffError

        x = Tensor([1.0, 2.0], requires_grad=True)
        loss = sum_(x)
        with Tape() as tape, pytest.raises(AutodiffError, match="detached"):
            backward(tape, loss)

    def test_shape_error(self) -> None:
        """Mismatched operands should raise ShapeError naming the primitive."""
        from fglab.autodiff import add
        from fglab.autodiff import linear
        from fglab.errors import ShapeError

        with pytest.raises(ShapeError, match="linear"):
            linear(Tensor(np.ones(3)), Tensor(np.ones((2, 4))))
        with pytest.raises(ShapeError, match="add"):
            add(Tensor(np.ones(3)), Tensor(np.ones(2)))

    def test_embedding_index_out_of_range(self) -> None:
        """Indices outside the table should raise IndexError."""
        from fglab.autodiff import embedding_lookup

        with pytest.raises(IndexError):
            embedding_lookup(Tensor(np.ones((4, 2))), np.array([4]))


class TestCategorical:
    """Tests for the categorical distribution."""

    def test_inverse_cdf(self) -> None:
        """Uniform draws should map through the cumulative distribution."""
        from fglab.autodiff import Categorical

        dist = Categorical(Tensor(np.log([0.2, 0.3, 0.5])))
        assert dist.inverse_cdf(np.array([0.1, 0.25, 0.6, 0.999])).tolist() == [0, 1, 2, 2]

    def test_entropy_of_uniform(self) -> None:
        """A uniform distribution should have entropy log k."""
        from fglab.autodiff import Categorical

        dist = Categorical(Tensor(np.zeros(5)))
        assert dist.entropy().item() == pytest.approx(np.log(5), rel=1e-6)

    def test_non_finite_logits(self) -> None:
        """NaN logits should raise NumericError."""
        from fglab.autodiff import Categorical
        from fglab.errors import NumericError

        with pytest.raises(NumericError):
            Categorical(Tensor([0.0, np.nan]))

    def test_sampling_frequencies(self) -> None:
        """A million draws should reproduce the probabilities to within half a percent."""
        from fglab.autodiff import Categorical

        probs = [0.1, 0.2, 0.3, 0.4]
        dist = Categorical(Tensor(np.tile(np.log(probs), (1_000_000, 1))))
        draws = dist.sample(np.random.default_rng(5))
        frequencies = np.bincount(draws, minlength=4) / draws.size
        np.testing.assert_allclose(frequencies, probs, atol=0.005)


class TestInitAndOptimizer:
    """Tests for initialization and Adam."""

    def test_orthogonal_rows(self, rng) -> None:
        """A wide orthogonal matrix should have orthogonal rows scaled by the gain."""
        from fglab.autodiff import orthogonal_init

        w = orthogonal_init(3, 5, 2.0, rng).data.astype(np.float64)
        np.testing.assert_allclose(w @ w.T, 4.0 * np.eye(3), atol=1e-5)

    def test_orthogonal_columns(self, rng) -> None:
        """A tall orthogonal matrix should have orthogonal columns scaled by the gain."""
        from fglab.autodiff import orthogonal_init

        w = orthogonal_init(6, 2, 0.5, rng).data.astype(np.float64)
        np.testing.assert_allclose(w.T @ w, 0.25 * np.eye(2), atol=1e-6)

    def test_orthogonal_gain_positive(self, rng) -> None:
        """A non-positive gain should be a config error."""
        from fglab.autodiff import orthogonal_init
        from fglab.errors import ConfigError

        with pytest.raises(ConfigError):
            orthogonal_init(2, 2, 0.0, rng)

    def test_adam_first_step(self) -> None:
        """The first bias-corrected Adam step should move each entry by about lr."""
        from fglab.autodiff import AdamState
        from fglab.autodiff import adam_step

        p = Tensor([1.0, -1.0], requires_grad=True)
        state = AdamState.zeros({"p": p})
        adam_step({"p": p}, {"p": np.array([0.5, -2.0], dtype=np.float32)}, state, lr=0.1)
        np.testing.assert_allclose(p.data, [0.9, -0.9], atol=1e-4)
        assert state.step == 1

    def test_adam_minimizes_quadratic(self) -> None:
        """Repeated Adam steps on sum(w * w) should drive w to the origin."""
        from fglab.autodiff import AdamState
        from fglab.autodiff import Tape
        from fglab.autodiff import adam_step
        from fglab.autodiff import backward
        from fglab.autodiff import mul
        from fglab.autodiff import sum_

        w = Tensor([2.0, -3.0], requires_grad=True)
        state = AdamState.zeros({"w": w})
        for _ in range(3000):
            with Tape() as tape:
                loss = sum_(mul(w, w))
            backward(tape, loss)
            adam_step({"w": w}, {"w": w.grad}, state, lr=0.01)
            w.zero_grad()
        assert np.all(np.abs(w.data) < 0.05)
        assert state.step == 3000

    def test_clip_global_norm(self) -> None:
        """Gradients above the limit should be rescaled jointly."""
        from fglab.autodiff import clip_global_norm

        grads = {"a": np.array([3.0]), "b": np.array([4.0])}
        assert clip_global_norm(grads, 0.5) == pytest.approx(0.1)
        assert np.sqrt(grads["a"][0] ** 2 + grads["b"][0] ** 2) == pytest.approx(0.5)

    def test_clip_global_norm_below_limit(self) -> None:
        """Small gradients should be left alone."""
        from fglab.autodiff import clip_global_norm

        grads = {"a": np.array([0.1])}
        assert clip_global_norm(grads, 0.5) == 1.0
        assert grads["a"][0] == 0.1
