import math

import numpy as np
import pytest

from netrecon.errors import FormatError
from netrecon.network import (
    Mlp,
    activation,
    activation_prime,
    backward_mse,
    forward,
    init_mlp,
    load_mlp,
    mse_loss,
    save_mlp,
)


def random_net(rng, r, d, c):
    return Mlp(
        W=rng.normal(size=(r, d)),
        b=rng.normal(size=r),
        A=rng.normal(size=(c, r)),
        c_out=rng.normal(size=c),
    )


class TestActivation:
    def test_value_at_zero(self):
        assert activation(0.0) == pytest.approx(math.log(2) + 0.5, abs=1e-12)

    def test_negative_tail(self):
        # softplus(-50) + sigmoid(-200) ~ exp(-50) ~ 1.93e-22, no overflow
        value = activation(-50.0)
        assert 1.8e-22 < value < 2.1e-22
        assert np.isfinite(value)

    def test_positive_tail(self):
        # softplus -> z and sigmoid -> 1 for large z
        assert activation(50.0) - 50.0 == pytest.approx(1.0, abs=1e-9)

    def test_no_overflow_for_huge_inputs(self):
        z = np.array([-1e4, -100.0, 0.0, 100.0, 1e4])
        for f in (activation, activation_prime):
            assert np.all(np.isfinite(f(z)))

    def test_prime_at_zero(self):
        # sigmoid(0) + 4 * 0.25
        assert activation_prime(0.0) == pytest.approx(1.5, abs=1e-12)

    def test_prime_matches_finite_differences(self):
        h = 1e-5
        for z in (-2.0, -0.3, 0.7, 3.0):
            numeric = (activation(z + h) - activation(z - h)) / (2 * h)
            assert activation_prime(z) == pytest.approx(numeric, rel=1e-6)

    def test_strictly_increasing(self):
        z = np.linspace(-20, 20, 4001)
        assert np.all(activation_prime(z) > 0)

    def test_elementwise_shape(self):
        z = np.arange(12.0).reshape(3, 4)
        assert activation(z).shape == (3, 4)
        assert activation_prime(z).shape == (3, 4)


class TestForward:
    def test_zero_network(self):
        net = Mlp(W=np.zeros((3, 4)), b=np.zeros(3), A=np.zeros((2, 3)),
                  c_out=np.zeros(2))
        trace = forward(net, np.random.default_rng(0).normal(size=(5, 4)))
        assert np.allclose(trace.out, 0.0)
        assert np.allclose(trace.hidden, activation(0.0))

    def test_scalar_composition(self):
        net = Mlp(W=[[1.0]], b=[0.0], A=[[1.0]], c_out=[0.0])
        trace = forward(net, np.array([[0.0]]))
        assert trace.out[0, 0] == pytest.approx(math.log(2) + 0.5, abs=1e-12)

    def test_matches_loop_oracle(self):
        rng = np.random.default_rng(42)
        net = random_net(rng, r=4, d=5, c=3)
        X = rng.normal(size=(3, 5))
        got = forward(net, X).out
        for n in range(3):
            for k in range(3):
                expected = net.c_out[k]
                for i in range(4):
                    pre = net.b[i]
                    for j in range(5):
                        pre += net.W[i, j] * X[n, j]
                    expected += net.A[k, i] * float(activation(pre))
                assert abs(got[n, k] - expected) < 1e-12

    def test_hidden_equals_activation_of_pre(self):
        rng = np.random.default_rng(3)
        net = random_net(rng, 6, 4, 2)
        trace = forward(net, rng.normal(size=(7, 4)))
        assert np.max(np.abs(trace.hidden - activation(trace.pre))) < 1e-12

    def test_shape_mismatch(self):
        net = init_mlp(3, 4, 2, seed=0)
        with pytest.raises(ValueError):
            forward(net, np.zeros((5, 7)))


class TestBackwardMse:
    def test_perfect_fit_zero_gradients(self):
        rng = np.random.default_rng(7)
        net = random_net(rng, 3, 4, 2)
        X = rng.normal(size=(6, 4))
        Y = forward(net, X).out
        grads, loss = backward_mse(net, X, Y)
        assert loss == 0.0
        for block in (grads.W, grads.b, grads.A, grads.c_out):
            assert np.max(np.abs(block)) < 1e-12

    def test_matches_finite_differences(self):
        rng = np.random.default_rng(11)
        net = random_net(rng, 3, 4, 2)
        X = rng.normal(size=(5, 4))
        Y = rng.normal(size=(5, 2))
        grads, _ = backward_mse(net, X, Y)
        h = 1e-5
        for attr in ("W", "b", "A", "c_out"):
            analytic = getattr(grads, attr)
            param = getattr(net, attr)
            numeric = np.zeros_like(param)
            for idx in np.ndindex(param.shape):
                bumped = {a: getattr(net, a).copy() for a in ("W", "b", "A", "c_out")}
                bumped[attr][idx] = param[idx] + h
                up = mse_loss(Mlp(**bumped), X, Y)
                bumped[attr][idx] = param[idx] - h
                down = mse_loss(Mlp(**bumped), X, Y)
                numeric[idx] = (up - down) / (2 * h)
            assert np.allclose(analytic, numeric, rtol=1e-5, atol=1e-8), attr

    def test_quadratic_scaling(self):
        rng = np.random.default_rng(13)
        net = random_net(rng, 3, 4, 2)
        X = rng.normal(size=(5, 4))
        out = forward(net, X).out
        Y = rng.normal(size=(5, 2))
        _, loss = backward_mse(net, X, Y)
        _, loss_doubled = backward_mse(net, X, 2 * Y - out)
        assert loss_doubled == pytest.approx(4 * loss, rel=1e-9)

    def test_batch_decomposability(self):
        rng = np.random.default_rng(17)
        net = random_net(rng, 4, 3, 2)
        X = rng.normal(size=(8, 3))
        Y = rng.normal(size=(8, 2))
        per_sample = [mse_loss(net, X[i:i + 1], Y[i:i + 1]) for i in range(8)]
        assert mse_loss(net, X, Y) == pytest.approx(np.mean(per_sample), abs=1e-12)

    def test_no_nan_for_large_preactivations(self):
        net = Mlp(W=np.full((2, 2), 100.0), b=[0.0, 0.0],
                  A=np.ones((1, 2)), c_out=[0.0])
        X = np.array([[1e2, 1e2], [-1e2, -1e2]])
        trace = forward(net, X)
        assert np.all(np.isfinite(trace.out))


class TestInit:
    def test_deterministic(self):
        a = init_mlp(4, 6, 3, seed=5)
        b = init_mlp(4, 6, 3, seed=5)
        for attr in ("W", "b", "A", "c_out"):
            assert np.array_equal(getattr(a, attr), getattr(b, attr))

    def test_biases_zero(self):
        net = init_mlp(4, 6, 3, seed=1)
        assert np.all(net.b == 0.0)
        assert np.all(net.c_out == 0.0)

    def test_uniform_moments(self):
        # U[-s, s] has standard deviation s / sqrt(3)
        net = init_mlp(200, 500, 1, seed=2)  # 1e5 draws
        s = (1.0 / 500) ** 0.5
        assert net.W.std() == pytest.approx(s / np.sqrt(3), rel=0.05)
        assert abs(net.W).max() <= s

    def test_rejects_bad_dims_and_scheme(self):
        with pytest.raises(ValueError):
            init_mlp(0, 3, 2)
        with pytest.raises(ValueError):
            init_mlp(2, 3, 2, scheme="orthogonal")


class TestModelFile:
    def test_round_trip_bitwise(self, tmp_path):
        rng = np.random.default_rng(23)
        net = random_net(rng, 5, 7, 3)
        path = str(tmp_path / "net.mlp")
        save_mlp(net, path)
        loaded = load_mlp(path)
        for attr in ("W", "b", "A", "c_out"):
            assert np.array_equal(getattr(net, attr), getattr(loaded, attr))

    def test_forward_identical_after_reload(self, tmp_path):
        rng = np.random.default_rng(29)
        net = random_net(rng, 4, 6, 2)
        X = rng.normal(size=(10, 6))
        path = str(tmp_path / "net.mlp")
        save_mlp(net, path)
        assert np.array_equal(forward(net, X).out, forward(load_mlp(path), X).out)

    def test_dims_vs_payload_mismatch(self, tmp_path):
        net = init_mlp(3, 4, 2, seed=0)
        path = str(tmp_path / "net.mlp")
        save_mlp(net, path)
        blob = bytearray(open(path, "rb").read())
        blob[4 + 4:4 + 12] = (99).to_bytes(8, "little")  # corrupt declared r
        bad = tmp_path / "bad.mlp"
        bad.write_bytes(bytes(blob))
        with pytest.raises(FormatError):
            load_mlp(str(bad))

    def test_truncated_file(self, tmp_path):
        net = init_mlp(3, 4, 2, seed=0)
        path = str(tmp_path / "net.mlp")
        save_mlp(net, path)
        blob = open(path, "rb").read()
        bad = tmp_path / "trunc.mlp"
        bad.write_bytes(blob[:len(blob) // 2])
        with pytest.raises(FormatError):
            load_mlp(str(bad))

    def test_bad_magic(self, tmp_path):
        bad = tmp_path / "junk.mlp"
        bad.write_bytes(b"JUNKJUNKJUNKJUNKJUNKJUNK")
        with pytest.raises(FormatError):
            load_mlp(str(bad))

    def test_checksum_detects_corruption(self, tmp_path):
        net = init_mlp(3, 4, 2, seed=0)
        path = str(tmp_path / "net.mlp")
        save_mlp(net, path)
        blob = bytearray(open(path, "rb").read())
        blob[-12] ^= 0xFF  # flip a bit inside the last parameter block
        bad = tmp_path / "bit.mlp"
        bad.write_bytes(bytes(blob))
        with pytest.raises(FormatError):
            load_mlp(str(bad))
