import numpy as np
import pytest

from mpcolor import autograd as ag
from mpcolor.nn import (
    Adam,
    CheckpointError,
    Mlp,
    MlpSpec,
    ParamSet,
    load_checkpoint,
    save_checkpoint,
    uniform_fan_in,
)


class TestInit:
    def test_fan_in_bound(self):
        rng = np.random.default_rng(0)
        w = uniform_fan_in((24, 8), rng)
        bound = np.sqrt(6.0 / 24)
        assert w.shape == (24, 8)
        assert np.abs(w).max() <= bound

    def test_deterministic(self):
        a = uniform_fan_in((5, 5), np.random.default_rng(3))
        b = uniform_fan_in((5, 5), np.random.default_rng(3))
        np.testing.assert_array_equal(a, b)


class TestMlpSpec:
    def test_needs_two_widths(self):
        with pytest.raises(ValueError):
            MlpSpec(widths=(4,))

    def test_unknown_activation(self):
        with pytest.raises(ValueError):
            MlpSpec(widths=(4, 2), out_activation="tanh")


class TestParamSet:
    def test_register_and_lookup(self):
        ps = ParamSet()
        t = ps.register("w", np.ones((2, 2)))
        assert "w" in ps and ps["w"] is t and len(ps) == 1

    def test_duplicate_rejected(self):
        ps = ParamSet()
        ps.register("w", np.ones(2))
        with pytest.raises(ValueError):
            ps.register("w", np.ones(2))

    def test_load_arrays_roundtrip(self):
        ps = ParamSet()
        ps.register("a", np.arange(4.0))
        snap = ps.arrays()
        ps["a"].value[:] = 0.0
        ps.load_arrays(snap)
        np.testing.assert_array_equal(ps["a"].value, np.arange(4.0))

    def test_load_arrays_name_mismatch(self):
        ps = ParamSet()
        ps.register("a", np.ones(2))
        with pytest.raises(CheckpointError):
            ps.load_arrays({"b": np.ones(2)})

    def test_load_arrays_shape_mismatch(self):
        ps = ParamSet()
        ps.register("a", np.ones(2))
        with pytest.raises(CheckpointError):
            ps.load_arrays({"a": np.ones(3)})

    def test_zero_grads(self):
        ps = ParamSet()
        t = ps.register("a", np.ones(2))
        t.grad = np.ones(2)
        ps.zero_grads()
        assert t.grad is None


class TestMlp:
    def make(self, spec=None, seed=0):
        params = ParamSet()
        spec = spec or MlpSpec(widths=(4, 8, 3))
        return Mlp(spec, params, "mlp", np.random.default_rng(seed)), params

    def test_output_shape(self):
        mlp, _ = self.make()
        out = mlp(ag.Tensor(np.zeros((5, 4))))
        assert out.value.shape == (5, 3)

    def test_input_width_checked(self):
        mlp, _ = self.make()
        with pytest.raises(ValueError):
            mlp(ag.Tensor(np.zeros((5, 3))))

    def test_registers_expected_params(self):
        _, params = self.make()
        assert params.names() == ["mlp.w0", "mlp.b0", "mlp.w1", "mlp.b1"]

    def test_zero_bias_init(self):
        _, params = self.make()
        assert np.all(params["mlp.b0"].value == 0.0)

    def test_softmax_output_rows_stochastic(self):
        mlp, _ = self.make(MlpSpec(widths=(4, 8, 3), out_activation="softmax"))
        out = mlp(ag.Tensor(np.random.default_rng(1).normal(size=(6, 4))))
        np.testing.assert_allclose(out.value.sum(axis=1), 1.0, atol=1e-12)
        assert out.value.min() > 0

    def test_sigmoid_output_range(self):
        mlp, _ = self.make(MlpSpec(widths=(4, 8, 1), out_activation="sigmoid"))
        out = mlp(ag.Tensor(np.random.default_rng(2).normal(size=(6, 4))))
        assert out.value.min() > 0 and out.value.max() < 1

    def test_manual_recompute_matches(self):
        """Straight-line numpy recomputation of a 2-layer forward pass."""
        mlp, params = self.make()
        x = np.random.default_rng(3).normal(size=(5, 4))
        out = mlp(ag.Tensor(x)).value
        h = x @ params["mlp.w0"].value + params["mlp.b0"].value
        h = np.where(h > 0, h, 0.01 * h)
        expected = h @ params["mlp.w1"].value + params["mlp.b1"].value
        np.testing.assert_allclose(out, expected, rtol=1e-12)

    def test_gradients_reach_all_params(self):
        mlp, params = self.make()
        out = mlp(ag.Tensor(np.random.default_rng(4).normal(size=(5, 4))))
        ag.backward(ag.sum_all(ag.mul(out, out)))
        for name, t in params.items():
            assert t.grad is not None, name
            assert np.any(t.grad != 0.0), name


class TestAdam:
    def test_single_step_closed_form(self):
        ps = ParamSet()
        p = ps.register("p", np.array([1.0, -2.0]))
        opt = Adam(ps, lr=0.1)
        p.grad = np.array([0.5, -1.0])
        opt.step()
        # first step moves by ~lr * sign(grad) regardless of magnitude
        expected = np.array([1.0, -2.0]) - 0.1 * np.array([0.5, -1.0]) / (
            np.abs(np.array([0.5, -1.0])) + 1e-8)
        np.testing.assert_allclose(p.value, expected, rtol=1e-6)

    def test_step_consumes_grad(self):
        ps = ParamSet()
        p = ps.register("p", np.ones(2))
        opt = Adam(ps)
        p.grad = np.ones(2)
        opt.step()
        assert p.grad is None

    def test_missing_grad_still_updates_moments(self):
        ps = ParamSet()
        p = ps.register("p", np.ones(2))
        opt = Adam(ps, lr=0.1)
        before = p.value.copy()
        opt.step()  # no gradient: momentum is zero, parameter unchanged
        np.testing.assert_array_equal(p.value, before)
        assert opt.t == 1

    def test_descends_quadratic(self):
        ps = ParamSet()
        p = ps.register("p", np.array([5.0]))
        opt = Adam(ps, lr=0.2)
        for _ in range(400):
            p.grad = 2.0 * p.value
            opt.step()
        assert abs(p.value[0]) < 1e-2


class TestCheckpoints:
    def test_round_trip(self, tmp_path):
        path = tmp_path / "ck.npz"
        arrays = {"w": np.random.default_rng(0).normal(size=(3, 2)), "b": np.zeros(2)}
        save_checkpoint(path, arrays, {"kind": "test", "k": 3})
        loaded, fp = load_checkpoint(path)
        assert fp == {"kind": "test", "k": 3}
        for name in arrays:
            np.testing.assert_array_equal(loaded[name], arrays[name])

    def test_byte_identical_for_same_arrays(self, tmp_path):
        arrays = {"w": np.random.default_rng(1).normal(size=(4, 4))}
        save_checkpoint(tmp_path / "a", arrays, {})
        save_checkpoint(tmp_path / "b", arrays, {})
        assert (tmp_path / "a").read_bytes() == (tmp_path / "b").read_bytes()

    def test_not_json(self, tmp_path):
        p = tmp_path / "bad"
        p.write_text("not json at all{")
        with pytest.raises(CheckpointError):
            load_checkpoint(p)

    def test_wrong_format_marker(self, tmp_path):
        p = tmp_path / "bad"
        p.write_text('{"format": "other", "arrays": {}}')
        with pytest.raises(CheckpointError):
            load_checkpoint(p)

    def test_size_mismatch(self, tmp_path):
        p = tmp_path / "bad"
        p.write_text(
            '{"format": "mpcolor-checkpoint-v1", "fingerprint": {},'
            ' "arrays": {"w": {"shape": [2, 2], "data": [1.0, 2.0]}}}'
        )
        with pytest.raises(CheckpointError):
            load_checkpoint(p)
