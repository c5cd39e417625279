import numpy as np
import pytest

from znorm_lab.nn import Dense, Network, ParamGrad, make_residual_mlp
from znorm_lab.optim import (Optimizer, OptimizerConfig, adam_update_magnitude_bound_check,
                             first_adam_update, lr_at_epoch)
from znorm_lab.tensor import ShapeError
from znorm_lab.transforms import TransformPipeline


def single_weight_net(values):
    d = Dense(len(values), 1, bias=False)
    d.params["weight"] = np.array([values], dtype=float)
    return Network([d]), d


def grad_for(d, values):
    return [ParamGrad("layer0.weight", d.params["weight"], np.array([values], dtype=float))]


def test_first_adam_step_hand_example():
    delta = first_adam_update([[1.0, -1.0]], lr=0.001)
    np.testing.assert_allclose(delta, [[-0.001, 0.001]], atol=1e-6)


def test_zero_gradient_leaves_parameters_unchanged():
    net, d = single_weight_net([0.3, -0.2])
    before = d.params["weight"].copy()
    Optimizer(kind="adam").step(net, grad_for(d, [0.0, 0.0]))
    assert np.array_equal(d.params["weight"], before)


def test_adamw_decay_only_step():
    net, d = single_weight_net([0.5, -2.0])
    before = d.params["weight"].copy()
    Optimizer(kind="adamw", lr=1e-3, weight_decay=1.0).step(net, grad_for(d, [0.0, 0.0]))
    assert np.array_equal(d.params["weight"], before * (1 - 0.001))


def test_coupled_l2_feeds_decay_through_moments():
    net, d = single_weight_net([0.5, -2.0])
    Optimizer(kind="adamw", lr=1e-3, weight_decay=0.1, coupled_l2=True).step(net, grad_for(d, [0.0, 0.0]))
    # the decay term acts as the gradient, so the first step is sign(theta) * lr
    np.testing.assert_allclose(d.params["weight"], [[0.5 - 0.001, -2.0 + 0.001]], atol=1e-9)


def test_update_magnitude_bound_random_trials():
    rng = np.random.default_rng(0)
    cfg = OptimizerConfig(kind="adam", lr=1e-3)
    for _ in range(100):
        g = rng.normal(size=(3, 5)) * 10 ** rng.uniform(-6, 6)
        assert adam_update_magnitude_bound_check(cfg, g)


def test_bias_correction_identity():
    net, d = single_weight_net([0.0, 0.0, 0.0])
    opt = Optimizer(kind="adam")
    ghat = np.array([0.7, -1.3, 2e-3])
    for t in range(1, 101):
        opt.step(net, grad_for(d, ghat))
        m_hat, v_hat = opt.bias_corrected_moments("layer0.weight")
        np.testing.assert_allclose(m_hat[0], ghat, rtol=1e-12)
        np.testing.assert_allclose(v_hat[0], ghat * ghat, rtol=1e-12)


def test_sgd_and_momentum():
    net, d = single_weight_net([1.0])
    opt = Optimizer(kind="sgd", lr=0.1)
    opt.step(net, grad_for(d, [2.0]))
    assert d.params["weight"][0, 0] == pytest.approx(0.8, abs=1e-15)
    net, d = single_weight_net([0.0])
    opt = Optimizer(kind="momentum", lr=0.1, momentum=0.5)
    opt.step(net, grad_for(d, [1.0]))
    opt.step(net, grad_for(d, [1.0]))
    # u1 = 1, u2 = 1.5
    assert d.params["weight"][0, 0] == pytest.approx(-0.25, abs=1e-15)


def test_pipeline_runs_before_moments():
    net, d = single_weight_net([0.0, 0.0])
    pipe = TransformPipeline.from_config([{"name": "znorm", "min_rank": 0, "min_count": 1}])
    opt = Optimizer(OptimizerConfig(kind="sgd", lr=1.0), pipe)
    out = opt.step(net, grad_for(d, [3.0, 5.0]))
    np.testing.assert_allclose(out[0].grad, [[-1 / (1 + 1e-8), 1 / (1 + 1e-8)]], rtol=1e-14)
    np.testing.assert_allclose(d.params["weight"], -out[0].grad, rtol=0)


def test_step_validates_gradients():
    net, d = single_weight_net([0.0, 0.0])
    with pytest.raises(ShapeError):
        Optimizer().step(net, [ParamGrad("layer0.weight", d.params["weight"], np.zeros((1, 2)))][:0])
    with pytest.raises(ShapeError):
        Optimizer().step(net, [ParamGrad("other", d.params["weight"], np.zeros((1, 2)))])


def test_config_validation():
    for bad in ({"kind": "rmsprop"}, {"lr": 0}, {"beta1": 1.0}, {"weight_decay": -1}):
        with pytest.raises(ValueError):
            OptimizerConfig(**bad)


def test_training_is_deterministic():
    def run():
        net = make_residual_mlp(8, 2, 2, 2, 3)
        x = np.random.default_rng(0).normal(size=(16, 2))
        y = np.arange(16) % 2
        opt = Optimizer(OptimizerConfig(kind="adamw", weight_decay=1e-3),
                        TransformPipeline.from_config([{"name": "znorm"}]))
        for _ in range(20):
            _, grads = net.backward(x, y)
            opt.step(net, grads)
        return b"".join(p.tobytes() for _, p in net.parameters())
    assert run() == run()


def test_lr_schedule():
    assert lr_at_epoch(0.01, 29, 0.1, 5, 30) == 0.01
    assert lr_at_epoch(0.01, 30, 0.1, 5, 30) == pytest.approx(1e-3)
    assert lr_at_epoch(0.01, 34, 0.1, 5, 30) == pytest.approx(1e-3)
    assert lr_at_epoch(0.01, 35, 0.1, 5, 30) == pytest.approx(1e-4)
    assert lr_at_epoch(0.01, 100) == 0.01
