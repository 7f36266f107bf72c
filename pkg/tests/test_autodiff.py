import numpy as np
import pytest

from hegnn import autodiff as ad
from hegnn.geomgraph import random_graph
from hegnn.model import init_features, init_params, messages
from hegnn.verify import model_grad_error, primitive_cases, small_config


def test_square_gradient():
    tape = ad.Tape()
    x = tape.variable(3.0)
    assert ad.grad(tape, ad.square(x), x) == pytest.approx(6.0)


def test_inner_gradient(rng):
    a, b = rng.standard_normal(4), rng.standard_normal(4)
    tape = ad.Tape()
    va, vb = tape.variable(a), tape.variable(b)
    ga, gb = ad.grad(tape, ad.inner(va, vb), [va, vb])
    assert np.allclose(ga, b) and np.allclose(gb, a)


def test_non_scalar_loss_rejected():
    tape = ad.Tape()
    x = tape.variable(np.ones(3))
    with pytest.raises(ValueError):
        ad.grad(tape, x * 2.0, x)


def test_disconnected_parameter_gets_zero():
    tape = ad.Tape()
    x, y = tape.variable(np.ones(3)), tape.variable(np.ones((2, 2)))
    gx, gy = ad.grad(tape, ad.sum_(x * x), [x, y])
    assert np.allclose(gx, 2) and np.array_equal(gy, np.zeros((2, 2)))


def test_untaped_vars_record_nothing():
    a = ad.Var(np.ones(3))
    out = ad.silu(a * 2.0 + 1.0)
    assert out.tape is None


def test_mixed_tapes_rejected():
    a, b = ad.Tape().variable(1.0), ad.Tape().variable(2.0)
    with pytest.raises(ValueError):
        a + b


def test_division_by_var_rejected():
    tape = ad.Tape()
    with pytest.raises(TypeError):
        tape.variable(1.0) / tape.variable(2.0)


def test_tape_is_topologically_ordered(rng):
    tape = ad.Tape()
    cfg = small_config(max_degree=2, hidden_width=8)
    params = {k: tape.variable(v) for k, v in init_params(cfg, 0).items()}
    g = random_graph(rng, 4, node_in=2, edge_in=1)
    m, _ = messages(init_features(g, cfg, params), cfg, params, 0)
    seen = {id(v) for v in params.values()}
    for out, parents, _ in tape.nodes:
        for p in parents:
            assert p.tape is None or id(p) in seen
        seen.add(id(out))


@pytest.mark.parametrize("name", sorted(primitive_cases(np.random.default_rng(0))))
def test_primitive_gradients_over_seeds(name):
    worst = 0.0
    for seed in range(100):
        fn, params = primitive_cases(np.random.default_rng(seed))[name]
        worst = max(worst, ad.grad_check(fn, params, seed=seed))
    assert worst < 1e-6


def test_dense_layer_gradient():
    fn, params = primitive_cases(np.random.default_rng(3))["dense"]
    assert ad.grad_check(fn, params, seed=3) < 1e-7


def test_message_gradient(rng):
    cfg = small_config(max_degree=3, hidden_width=8)
    g = random_graph(rng, 5, node_in=2, edge_in=1)
    w = rng.standard_normal((g.n_edges, cfg.hidden_width))

    def fn(p):
        m, _ = messages(init_features(g, cfg, p), cfg, p, 0)
        return ad.sum_(m * w)

    assert ad.grad_check(fn, init_params(cfg, 1), seed=1) < 1e-6


def test_full_model_gradient():
    assert max(model_grad_error(s) for s in range(10)) < 1e-5


def test_linearity_of_gradients(rng):
    a, b = rng.standard_normal((3, 4)), rng.standard_normal((4, 2))

    def grads(which):
        tape = ad.Tape()
        va, vb = tape.variable(a), tape.variable(b)
        l1 = ad.sum_(ad.silu(va @ vb))
        l2 = ad.sum_(ad.square(va))
        loss = {"1": l1, "2": l2, "both": l1 + l2}[which]
        return ad.grad(tape, loss, [va, vb])

    g1, g2, g12 = grads("1"), grads("2"), grads("both")
    for x, y, z in zip(g1, g2, g12):
        assert np.allclose(x + y, z, rtol=0, atol=1e-14)


def test_train_config_validation():
    with pytest.raises(ValueError):
        ad.TrainConfig(lr=0)
    with pytest.raises(ValueError):
        ad.TrainConfig(beta1=1.0)
    with pytest.raises(ValueError):
        ad.TrainConfig(batch_size=0)


def test_adam_minimizes_quadratic():
    params = {"w": np.array([3.0, -2.0])}
    opt = ad.Adam(params, lr=0.1)
    for _ in range(300):
        opt.step({"w": 2 * params["w"]})
    assert np.abs(params["w"]).max() < 1e-2


def test_grad_check_detects_wrong_vjp():
    def bad(a):
        a = ad.as_var(a)
        return ad.custom_op(a.value**2, (a,), lambda g: (g * a.value,))

    params = {"a": np.array([1.0, 2.0, -0.5])}
    assert ad.grad_check(lambda p: ad.sum_(bad(p["a"])), params) > 0.1
