import io
import math

import numpy as np
import pytest

from troikit.errors import ContractError, DataError, DimensionError
from troikit.tensor import (
    Tensor,
    add,
    backward,
    conv2d,
    cross_entropy,
    layer_norm,
    matmul,
    max_pool2d,
    mean_pool2d,
    mul,
    no_grad,
    precision,
    read_tensor,
    reduce_max,
    reduce_mean,
    reduce_sum,
    relu,
    softmax_rows,
    transpose,
    write_tensor,
    zero_grad,
)

import oracles


class TestMatmul:
    def test_identity(self):
        out = matmul(Tensor(np.eye(2)), Tensor([[5.0, 6.0], [7.0, 8.0]]))
        assert np.array_equal(out.data, [[5.0, 6.0], [7.0, 8.0]])

    def test_hand_case(self):
        out = matmul(Tensor([[1.0, 2.0], [3.0, 4.0]]), Tensor([[1.0], [1.0]]))
        assert np.array_equal(out.data, [[3.0], [7.0]])

    def test_against_triple_loop(self, rng):
        with precision("f64"):
            a = rng.normal(size=(3, 4))
            b = rng.normal(size=(4, 2))
            out = matmul(Tensor(a), Tensor(b))
            assert np.allclose(out.data, oracles.matmul_loops(a, b), atol=1e-12, rtol=0)

    def test_shape_mismatch_names_both_shapes(self):
        with pytest.raises(DimensionError, match=r"\(2, 3\).*\(2, 3\)"):
            matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((2, 3))))

    def test_gradients(self, rng):
        with precision("f64"):
            a = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
            b = Tensor(rng.normal(size=(4, 2)), requires_grad=True)
            backward(reduce_sum(matmul(a, b)))
            assert np.allclose(a.grad, np.tile(b.data.sum(axis=1), (3, 1)))
            assert np.allclose(b.grad, np.tile(a.data.sum(axis=0)[:, None], (1, 2)))


class TestSoftmax:
    def test_equal_pair_rows(self):
        for c in (-3.0, 0.0, 17.5):
            out = softmax_rows(Tensor([[c, c]]))
            assert np.allclose(out.data, [[0.5, 0.5]])

    def test_single_element_row(self):
        assert np.allclose(softmax_rows(Tensor([[4.2]])).data, [[1.0]])

    def test_frozen_reference_row(self):
        # exp/sum oracle on [1, 2, 3]
        expected = oracles.softmax_loops([[1.0, 2.0, 3.0]])
        assert np.allclose(expected, [[0.090031, 0.244728, 0.665241]], atol=1e-5)
        out = softmax_rows(Tensor([[1.0, 2.0, 3.0]]))
        assert np.allclose(out.data, expected, atol=1e-5)

    def test_matches_loops(self, rng):
        with precision("f64"):
            x = rng.normal(size=(5, 7)) * 3
            out = softmax_rows(Tensor(x))
            assert np.allclose(out.data, oracles.softmax_loops(x), atol=1e-9, rtol=0)

    def test_rows_sum_to_one_for_large_values(self, rng):
        x = rng.uniform(-1e4, 1e4, size=(20, 9))
        out = softmax_rows(Tensor(x))
        assert np.all(np.isfinite(out.data))
        assert np.allclose(out.data.sum(axis=1), 1.0, atol=1e-6)

    def test_rejects_non_matrix(self):
        with pytest.raises(DimensionError):
            softmax_rows(Tensor([1.0, 2.0]))


class TestLayerNorm:
    def _params(self, c):
        return Tensor(np.ones(c)), Tensor(np.zeros(c))

    def test_constant_row_maps_to_zero(self):
        gamma, beta = self._params(4)
        out = layer_norm(Tensor([[3.0, 3.0, 3.0, 3.0]]), gamma, beta)
        assert np.allclose(out.data, 0.0)

    def test_two_point_row(self):
        gamma, beta = self._params(2)
        out = layer_norm(Tensor([[1.0, 3.0]]), gamma, beta, eps=1e-5)
        assert np.allclose(out.data, [[-0.999995, 0.999995]], atol=1e-5)

    def test_zero_gamma_broadcasts_beta(self, rng):
        x = rng.normal(size=(3, 5))
        beta = rng.normal(size=5)
        out = layer_norm(Tensor(x), Tensor(np.zeros(5)), Tensor(beta))
        assert np.allclose(out.data, np.tile(beta, (3, 1)), atol=1e-6)

    def test_matches_loops(self, rng):
        with precision("f64"):
            x = rng.normal(size=(4, 6))
            gamma = rng.normal(size=6)
            beta = rng.normal(size=6)
            out = layer_norm(Tensor(x), Tensor(gamma), Tensor(beta), eps=1e-5)
            assert np.allclose(out.data, oracles.layer_norm_loops(x, gamma, beta, 1e-5), atol=1e-9, rtol=0)

    def test_rejects_nonpositive_eps(self):
        gamma, beta = self._params(2)
        with pytest.raises(ContractError):
            layer_norm(Tensor([[1.0, 2.0]]), gamma, beta, eps=0.0)


class TestElementwiseAndPooling:
    def test_relu_sign_cases(self):
        out = relu(Tensor([-1.0, 0.0, 2.0]))
        assert np.array_equal(out.data, [0.0, 0.0, 2.0])

    def test_relu_derivative_at_zero_is_zero(self):
        x = Tensor([0.0], requires_grad=True)
        backward(reduce_sum(relu(x)))
        assert x.grad[0] == 0.0

    def test_mean_pool_block(self):
        x = Tensor(np.array([[0.0, 1.0], [2.0, 3.0]]).reshape(1, 2, 2, 1))
        assert mean_pool2d(x, 2).data.ravel()[0] == pytest.approx(1.5)

    def test_conv_ones_counting_case(self):
        x = Tensor(np.ones((1, 5, 5, 1)))
        w = Tensor(np.ones((3, 3, 1, 1)))
        out = conv2d(x, w)
        assert out.data.shape == (1, 3, 3, 1)
        assert np.allclose(out.data, 9.0)

    def test_conv_matches_loops(self, rng):
        with precision("f64"):
            for stride, pad in ((1, 0), (1, 1), (2, 1)):
                x = rng.normal(size=(2, 6, 6, 3))
                w = rng.normal(size=(3, 3, 3, 4))
                b = rng.normal(size=4)
                out = conv2d(Tensor(x), Tensor(w), Tensor(b), stride=stride, pad=pad)
                ref = oracles.conv2d_loops(x, w, b, stride=stride, pad=pad)
                assert np.allclose(out.data, ref, atol=1e-12, rtol=0)

    def test_max_pool_matches_loops(self, rng):
        x = rng.normal(size=(2, 6, 6, 3))
        out = max_pool2d(Tensor(x), 2)
        assert np.allclose(out.data, oracles.max_pool_loops(x), atol=1e-6)

    def test_pool_gradient_goes_to_first_max_on_ties(self):
        x = Tensor(np.ones((1, 2, 2, 1)), requires_grad=True)
        backward(reduce_sum(max_pool2d(x, 2)))
        assert x.grad.ravel().tolist() == [1.0, 0.0, 0.0, 0.0]

    def test_bias_broadcast_over_rows(self):
        out = add(Tensor(np.zeros((3, 2))), Tensor([1.0, 2.0]))
        assert np.array_equal(out.data, np.tile([1.0, 2.0], (3, 1)))

    def test_general_broadcast_rejected(self):
        with pytest.raises(DimensionError):
            add(Tensor(np.zeros((3, 2))), Tensor(np.zeros((3, 1))))
        with pytest.raises(DimensionError):
            mul(Tensor(np.zeros((3, 2))), Tensor(np.zeros(2)))

    def test_reduce_max_first_index_ties(self):
        x = Tensor(np.array([[2.0, 2.0], [0.0, 1.0]]), requires_grad=True)
        out = reduce_max(x, axis=0)
        assert np.array_equal(out.data, [2.0, 2.0])
        backward(reduce_sum(out))
        assert np.array_equal(x.grad, [[1.0, 1.0], [0.0, 0.0]])


class TestBackward:
    def test_sum_gives_ones(self, rng):
        x = Tensor(rng.normal(size=(3, 4, 2)), requires_grad=True)
        backward(reduce_sum(x))
        assert np.array_equal(x.grad, np.ones((3, 4, 2)))

    def test_quadratic(self):
        x = Tensor([1.0, 2.0], requires_grad=True)
        backward(reduce_sum(mul(x, x)))
        assert np.allclose(x.grad, [2.0, 4.0])

    def test_double_backward_without_reset_errors(self):
        x = Tensor([1.0, 2.0], requires_grad=True)
        backward(reduce_sum(mul(x, x)))
        with pytest.raises(ContractError, match="zero_grad"):
            backward(reduce_sum(mul(x, x)))
        zero_grad([x])
        backward(reduce_sum(mul(x, x)))  # fine after reset
        assert np.allclose(x.grad, [2.0, 4.0])

    def test_non_scalar_loss_rejected(self):
        x = Tensor([1.0, 2.0], requires_grad=True)
        with pytest.raises(ContractError, match="scalar"):
            backward(mul(x, x))

    def test_grad_accumulates_across_branches(self):
        x = Tensor([3.0], requires_grad=True)
        backward(reduce_sum(add(x, x)))
        assert np.allclose(x.grad, [2.0])

    def test_no_grad_skips_graph(self):
        x = Tensor([1.0], requires_grad=True)
        with no_grad():
            out = mul(x, x)
        assert not out.requires_grad and out._parents == ()

    def test_composite_ops_match_finite_differences(self, rng):
        with precision("f64"):
            cases = {
                "softmax": lambda t: reduce_sum(mul(softmax_rows(t), proj)),
                "layer_norm": lambda t: reduce_sum(mul(layer_norm(t, ln_g, ln_b), proj)),
            }
            for name, fn in cases.items():
                x = Tensor(rng.normal(size=(3, 5)), requires_grad=True)
                proj = Tensor(rng.normal(size=(3, 5)))
                ln_g = Tensor(rng.normal(size=5))
                ln_b = Tensor(rng.normal(size=5))
                backward(fn(x))
                for idx in rng.choice(x.size, size=6, replace=False):
                    num = oracles.central_difference(lambda: fn(x).item(), x.data, idx)
                    ana = x.grad.flat[idx]
                    assert abs(num - ana) / max(abs(num), abs(ana), 1e-4) < 1e-4, name


class TestCrossEntropy:
    def test_uniform_logits(self):
        out = cross_entropy(Tensor([0.3, 0.3, 0.3, 0.3]), 2)
        assert out.item() == pytest.approx(math.log(4.0), abs=1e-6)

    def test_dominant_logit_goes_to_zero(self):
        out = cross_entropy(Tensor([100.0, 0.0, 0.0]), 0)
        assert out.item() < 1e-6

    def test_matches_log_sum_exp_oracle(self, rng):
        with precision("f64"):
            z = rng.normal(size=7) * 3
            label = 4
            expected = oracles.log_sum_exp_loops(list(z)) - z[label]
            assert cross_entropy(Tensor(z), label).item() == pytest.approx(expected, abs=1e-9)

    def test_out_of_range_label(self):
        with pytest.raises(ContractError):
            cross_entropy(Tensor([0.0, 1.0]), 2)

    def test_batch_mean(self, rng):
        z = rng.normal(size=(3, 4))
        losses = [cross_entropy(Tensor(z[i]), i).item() for i in range(3)]
        batched = cross_entropy(Tensor(z), [0, 1, 2]).item()
        assert batched == pytest.approx(np.mean(losses), abs=1e-6)


class TestPrecisionAndSerialization:
    def test_precision_switch(self):
        assert Tensor([1.0]).data.dtype == np.float32
        with precision("f64"):
            assert Tensor([1.0]).data.dtype == np.float64
        assert Tensor([1.0]).data.dtype == np.float32

    def test_round_trip(self, rng):
        arr = rng.normal(size=(2, 3, 4)).astype(np.float32)
        buf = io.BytesIO()
        write_tensor(buf, arr)
        buf.seek(0)
        back = read_tensor(buf)
        assert back.dtype == np.float32
        assert np.array_equal(back, arr)

    def test_header_layout(self):
        buf = io.BytesIO()
        write_tensor(buf, np.zeros((2, 3), dtype=np.float32))
        raw = buf.getvalue()
        assert raw[:4] == (2).to_bytes(4, "little")
        assert raw[4:8] == (2).to_bytes(4, "little")
        assert raw[8:12] == (3).to_bytes(4, "little")
        assert len(raw) == 12 + 4 * 6

    def test_truncated_payload(self):
        buf = io.BytesIO()
        write_tensor(buf, np.zeros(4, dtype=np.float32))
        data = buf.getvalue()[:-4]
        with pytest.raises(DataError, match="truncated"):
            read_tensor(io.BytesIO(data))

    def test_finite_after_ops(self, rng):
        x = Tensor(rng.uniform(-50, 50, size=(4, 8)))
        for out in (softmax_rows(x), relu(x), reduce_mean(x), transpose(x)):
            assert np.all(np.isfinite(out.data))
