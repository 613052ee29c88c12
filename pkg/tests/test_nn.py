import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tandemq.nn import (MAGIC, Adam, CheckpointError, Mlp, MlpSpec, load_checkpoint,
                        save_checkpoint, soft_update)

from oracles import finite_difference_errors, random_mlp_case


def test_spec_shapes():
    spec = MlpSpec((6, 64, 64, 1))
    assert spec.n_params == 6 * 64 + 64 + 64 * 64 + 64 + 64 + 1
    with pytest.raises(ValueError):
        MlpSpec((3, 1))
    with pytest.raises(ValueError):
        MlpSpec((3, 4, 1), "relu")


def test_zero_net_outputs_zero():
    net = Mlp(MlpSpec((3, 5, 2)))
    assert np.array_equal(net(np.ones(3)), np.zeros(2))


def test_identity_like_net():
    net = Mlp(MlpSpec((1, 1, 1)), np.array([1.0, 0.0, 1.0, 0.0]))
    assert net(np.array([2.5]))[0] == 2.5
    assert net(np.array([-2.5]))[0] == 0.0


@given(st.lists(st.floats(-1e3, 1e3), min_size=4, max_size=4))
def test_tanh_output_bounded(x):
    net = Mlp.init(MlpSpec((4, 8, 3), "tanh"), np.random.default_rng(0), final_scale=5.0)
    out = net(np.asarray(x))
    assert np.all(np.abs(out) <= 1.0)


def test_init_ranges():
    net = Mlp.init(MlpSpec((6, 64, 64, 1)), np.random.default_rng(1))
    assert np.abs(net.weights[0]).max() <= 1 / np.sqrt(6)
    assert np.abs(net.weights[1]).max() <= 1 / 8
    assert np.abs(net.weights[2]).max() <= 3e-3 and np.abs(net.biases[2]).max() <= 3e-3


def test_forward_shape_mismatch():
    net = Mlp(MlpSpec((3, 4, 1)))
    with pytest.raises(ValueError):
        net(np.ones(2))
    _, cache = net.forward(np.ones(3))
    with pytest.raises(ValueError):
        net.backward(cache, np.ones(2))


def test_forward_is_pure_and_batched():
    net = Mlp.init(MlpSpec((3, 7, 2), "tanh"), np.random.default_rng(2))
    x = np.random.default_rng(3).normal(size=(5, 3))
    batch = net(x)
    assert np.array_equal(batch, net(x))
    assert np.allclose(batch[2], net(x[2]), rtol=0, atol=1e-15)


def test_zero_output_gradient():
    net = Mlp.init(MlpSpec((3, 7, 2)), np.random.default_rng(4))
    _, cache = net.forward(np.ones(3))
    gp, gx = net.backward(cache, np.zeros(2))
    assert not gp.any() and not gx.any()


@pytest.mark.parametrize("seed", range(10))
def test_backward_matches_finite_differences(seed):
    ep, ex = finite_difference_errors(*random_mlp_case(np.random.default_rng(seed)))
    assert ep < 1e-4 and ex < 1e-4


def test_adam_first_step_is_learning_rate():
    opt = Adam(1, lr=1e-3)
    p = np.array([0.5])
    opt.update(p, np.array([42.0]))
    assert p[0] == pytest.approx(0.5 - 1e-3, rel=1e-6)


def test_adam_zero_gradient_keeps_params():
    opt = Adam(3, lr=1e-3)
    p = np.array([1.0, 2.0, 3.0])
    opt.update(p, np.zeros(3))
    assert p.tolist() == [1.0, 2.0, 3.0] and opt.t == 1


def test_adam_ascend_is_descend_on_negated_gradient():
    g = np.random.default_rng(5).normal(size=(20, 4))
    a, b = np.ones(4), np.ones(4)
    oa, ob = Adam(4, 1e-2), Adam(4, 1e-2)
    for gi in g:
        oa.update(a, gi, ascend=True)
        ob.update(b, -gi)
    assert np.array_equal(a, b)


def test_adam_minimizes_quadratic():
    opt = Adam(2, lr=0.05)
    p = np.array([3.0, -2.0])
    for _ in range(2000):
        opt.update(p, 2 * (p - np.array([1.0, 0.5])))
    assert np.allclose(p, [1.0, 0.5], atol=1e-3)


def test_soft_update_values():
    spec = MlpSpec((2, 3, 1))
    target, online = Mlp(spec), Mlp(spec, np.ones(spec.n_params))
    soft_update(target, online, 0.01)
    assert np.allclose(target.params, 0.01, rtol=0, atol=1e-15)
    for k in range(50):
        before = np.abs(target.params - online.params).max()
        soft_update(target, online, 0.01)
        assert np.abs(target.params - online.params).max() == pytest.approx(0.99 * before)
    soft_update(target, online, 1.0)
    assert np.array_equal(target.params, online.params)
    with pytest.raises(ValueError):
        soft_update(Mlp(MlpSpec((2, 4, 1))), online, 0.5)
    with pytest.raises(ValueError):
        soft_update(target, online, 0.0)


# -- checkpoint file -------------------------------------------------------------

def _pair(seed=0):
    rng = np.random.default_rng(seed)
    actor = Mlp.init(MlpSpec((3, 8, 3), "tanh"), rng)
    opt = Adam(actor.spec.n_params, 1e-4)
    opt.update(actor.params, rng.normal(size=actor.spec.n_params))
    critic = Mlp.init(MlpSpec((6, 8, 1)), rng)
    return actor, opt, critic


def test_checkpoint_round_trip(tmp_path):
    actor, opt, critic = _pair()
    save_checkpoint(tmp_path / "a.ckpt", {"actor": (actor, opt), "critic": (critic, None)})
    a2 = Mlp(actor.spec)
    o2 = Adam(actor.spec.n_params, 0.5)
    c2 = Mlp(critic.spec)
    load_checkpoint(tmp_path / "a.ckpt", {"actor": (a2, o2), "critic": (c2, None)})
    assert np.array_equal(a2.params, actor.params) and np.array_equal(c2.params, critic.params)
    assert o2.t == 1 and o2.lr == 1e-4
    assert np.array_equal(o2.m, opt.m) and np.array_equal(o2.v, opt.v)


def test_checkpoint_header(tmp_path):
    actor, opt, critic = _pair()
    save_checkpoint(tmp_path / "a.ckpt", {"actor": (actor, None)})
    raw = (tmp_path / "a.ckpt").read_bytes()
    assert raw.startswith(MAGIC)
    assert struct.unpack_from("<I", raw, len(MAGIC))[0] == 1


def test_checkpoint_rejects_shape_mismatch(tmp_path):
    actor, opt, critic = _pair()
    save_checkpoint(tmp_path / "a.ckpt", {"actor": (actor, None)})
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "a.ckpt", {"actor": (Mlp(MlpSpec((2, 8, 2), "tanh")), None)})
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "a.ckpt", {"actor": (Mlp(MlpSpec((3, 8, 3))), None)})
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "a.ckpt", {"critic": (critic, None)})


def test_checkpoint_rejects_bad_files(tmp_path):
    actor, _, _ = _pair()
    path = tmp_path / "a.ckpt"
    save_checkpoint(path, {"actor": (actor, None)})
    raw = path.read_bytes()
    (tmp_path / "magic").write_bytes(b"X" + raw[1:])
    (tmp_path / "version").write_bytes(raw[:len(MAGIC)] + struct.pack("<I", 99) + raw[len(MAGIC) + 4:])
    (tmp_path / "short").write_bytes(raw[:-8])
    for name in ("magic", "version", "short"):
        with pytest.raises(CheckpointError):
            load_checkpoint(tmp_path / name, {"actor": (Mlp(actor.spec), None)})


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10**6))
def test_checkpoint_round_trip_property(seed):
    import tempfile
    rng = np.random.default_rng(seed)
    net, _, _ = random_mlp_case(rng)
    with tempfile.TemporaryDirectory() as d:
        save_checkpoint(f"{d}/n.ckpt", {"net": (net, None)})
        back = Mlp(net.spec)
        load_checkpoint(f"{d}/n.ckpt", {"net": (back, None)})
    assert np.array_equal(back.params, net.params)
