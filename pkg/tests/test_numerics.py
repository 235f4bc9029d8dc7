"""Core engine: gradients, optimizer, RNG, file formats."""
import numpy as np
import pytest

from alignedit.numerics import (ConfigError, FormatError, NumericsError,
                                ParamStore, RngStream, ShapeError, Tensor,
                                adam_step, fd_check, forward_backward,
                                load_checkpoint, load_tensor, save_checkpoint,
                                save_tensor)
from alignedit.numerics import tensor as T
from alignedit.numerics import nn


def test_sum_gradient_is_ones():
    p = ParamStore()
    p.add("x", np.array([1.0, -2.0, 3.0], dtype=np.float32))
    loss, grads = forward_backward(lambda P: P["x"].sum(), p)
    assert loss == pytest.approx(2.0)
    assert np.array_equal(grads["x"], np.ones(3, dtype=np.float32))


def test_mse_identity_is_zero():
    p = ParamStore()
    p.add("x", np.array([0.5, -1.0], dtype=np.float32))
    loss, grads = forward_backward(lambda P: T.mse(P["x"], P["x"]), p)
    assert loss == 0.0
    assert np.array_equal(grads["x"], np.zeros(2, dtype=np.float32))


def test_unreachable_param_gets_exact_zero_grad():
    p = ParamStore()
    p.add("used", np.ones(2, dtype=np.float32))
    p.add("unused", np.ones(4, dtype=np.float32))
    _, grads = forward_backward(lambda P: P["used"].sum(), p)
    assert np.array_equal(grads["unused"], np.zeros(4, dtype=np.float32))


def _random_mlp(seed):
    rng = RngStream(seed, "init")
    p = ParamStore()
    nn.add_affine(p, rng, "fc1", 4, 5)
    nn.add_affine(p, rng, "fc2", 5, 3)
    x = rng.spawn("x").normal((6, 4))
    y = rng.spawn("y").integers(0, 3, (6,))

    def loss_fn(P):
        h = T.gelu(nn.affine(P, "fc1", Tensor(x.astype(np.float64))))
        logits = nn.affine(P, "fc2", h)
        return T.cross_entropy(logits, y).mean()

    return loss_fn, p


def test_mlp_grads_match_finite_differences():
    loss_fn, p = _random_mlp(0)
    errs = fd_check(loss_fn, p, h=1e-3, max_coords=8)
    assert max(errs.values()) <= 1e-4


def test_fd_check_quadratic_is_near_exact():
    p = ParamStore()
    p.add("w", np.array([0.3, -1.2, 2.0], dtype=np.float32))
    errs = fd_check(lambda P: (P["w"] * P["w"]).sum(), p, h=1e-3)
    assert errs["w"] <= 1e-6


def test_fd_check_flags_corrupted_gradient():
    loss_fn, p = _random_mlp(1)
    _, grads = forward_backward(loss_fn, p)
    grads = {k: v + 0.1 for k, v in grads.items()}
    errs = fd_check(loss_fn, p, h=1e-3, max_coords=8, analytic=grads)
    assert max(errs.values()) > 1e-2


def _away_from_zero(rng, shape):
    # keeps |x| in [0.25, 1.75] so piecewise/zero-crossing derivatives
    # stay well-conditioned for the relative-error formula
    sign = np.where(rng.spawn("sign").uniform(shape=shape) < 0.5, -1.0, 1.0)
    return (sign * rng.spawn("mag").uniform(0.25, 1.75, shape)).astype(np.float32)


def _gelu_range(rng, shape):
    # the gelu derivative crosses zero near -0.75; sample clear of it
    return rng.spawn("g").uniform(-0.6, 0.6, shape)


OPS = [
    ("add", lambda P: T.add(P["a"], P["b"]).sum(), None),
    ("sub", lambda P: T.sub(P["a"], P["b"]).mean(), None),
    ("mul", lambda P: T.mul(P["a"], P["b"]).sum(), None),
    ("matmul", lambda P: T.matmul(P["a"], T.transpose(P["b"], (1, 0))).sum(), None),
    ("affine", lambda P: T.affine(P["a"], T.transpose(P["b"], (1, 0)),
                                  T.tsum(P["a"], axis=1)).sum(), None),
    ("relu", lambda P: T.relu(P["a"]).sum(), _away_from_zero),
    ("gelu", lambda P: T.gelu(P["a"]).sum(), _gelu_range),
    ("exp", lambda P: T.exp(P["a"]).mean(), None),
    ("log", lambda P: T.log(T.exp(P["a"])).mean(), None),
    ("mean", lambda P: T.tmean(P["a"], axis=1).sum(), None),
    ("sum_axis", lambda P: T.tsum(P["a"], axis=0).mean(), None),
    ("reshape", lambda P: T.reshape(P["a"], (4, 3)).mean(), None),
    ("transpose", lambda P: T.transpose(P["a"], (1, 0)).sum(), None),
    ("slice", lambda P: P["a"][1:, :2].sum(), None),
    ("concat", lambda P: T.concat([P["a"], P["b"]], axis=1).mean(), None),
    ("softmax", lambda P: T.mul(T.softmax(P["a"]), P["b"]).sum(), None),
    ("layer_norm", lambda P: T.layer_norm(P["a"], P["g"], P["c"]).sum(), None),
    ("cosine_sim", lambda P: T.cosine_sim(P["a"], P["b"]).sum(), None),
    ("cross_entropy", lambda P: T.cross_entropy(P["a"], np.array([1, 3, 0])).mean(), None),
    ("mse", lambda P: T.mse(P["a"], P["b"]), None),
]


@pytest.mark.parametrize("name,loss_fn,sampler", OPS, ids=[o[0] for o in OPS])
def test_every_op_passes_fd_check(name, loss_fn, sampler):
    shape = (3, 4)
    worst = 0.0
    for seed in range(100):
        rng = RngStream(seed, f"op/{name}")
        draw = sampler or (lambda r, s: r.spawn("n").normal(s))
        p = ParamStore()
        p.add("a", draw(rng.spawn("a"), shape))
        p.add("b", draw(rng.spawn("b"), shape))
        if name == "layer_norm":
            p.add("g", 1.0 + 0.1 * rng.spawn("g").normal((shape[1],)))
            p.add("c", 0.1 * rng.spawn("c").normal((shape[1],)))
        errs = fd_check(loss_fn, p, h=1e-3, max_coords=4, seed=seed)
        worst = max(worst, max(errs.values()))
    assert worst <= 1e-4


def test_cosine_sim_bounds_and_identities():
    rng = RngStream(3, "cos")
    for _ in range(50):
        z = rng.normal((8,)).astype(np.float64)
        s_self = float(T.cosine_sim(Tensor(z), Tensor(z)).data)
        s_anti = float(T.cosine_sim(Tensor(z), Tensor(-z)).data)
        assert s_self == pytest.approx(1.0, abs=1e-6)
        assert s_anti == pytest.approx(-1.0, abs=1e-6)
        w = rng.normal((8,)).astype(np.float64)
        assert abs(float(T.cosine_sim(Tensor(z), Tensor(w)).data)) <= 1.0 + 1e-7


def test_cosine_sim_zero_vector_is_defined_zero():
    z = np.zeros(4, dtype=np.float32)
    x = np.array([1.0, 2.0, 3.0, 4.0], dtype=np.float32)
    assert float(T.cosine_sim(Tensor(z), Tensor(x)).data) == 0.0


def test_shape_error_names_op_and_dims():
    with pytest.raises(ShapeError) as exc:
        T.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((4, 2))))
    assert "matmul" in str(exc.value) and "3" in str(exc.value)


def test_nonfinite_intermediate_names_op():
    x = Tensor(np.array([800.0], dtype=np.float32))
    with pytest.raises(NumericsError) as exc:
        T.exp(x)
    assert "exp" in str(exc.value)


def test_adam_zero_grad_leaves_params_unchanged():
    p = ParamStore()
    p.add("w", np.array([1.0, -2.0], dtype=np.float32))
    before = p["w"].data.copy()
    adam_step(p, {"w": np.zeros(2, dtype=np.float32)}, lr=0.1)
    assert np.array_equal(p["w"].data, before)


def test_adam_first_step_is_signed_lr():
    p = ParamStore()
    p.add("w", np.zeros(3, dtype=np.float32))
    g = np.array([0.5, -2.0, 1e-3], dtype=np.float32)
    adam_step(p, {"w": g}, lr=0.01)
    assert np.allclose(p["w"].data, -0.01 * np.sign(g), atol=1e-5)


def test_adam_rejects_nonpositive_lr():
    p = ParamStore()
    p.add("w", np.zeros(1, dtype=np.float32))
    with pytest.raises(ConfigError):
        adam_step(p, {"w": np.zeros(1, dtype=np.float32)}, lr=0.0)


def test_adam_descends_convex_quadratic():
    rng = RngStream(11, "quad")
    target = rng.normal((6,))
    p = ParamStore()
    p.add("w", rng.spawn("w0").normal((6,)) * 3.0)

    def loss_fn(P):
        return T.mse(P["w"], Tensor(target))

    losses = []
    for _ in range(100):
        loss, grads = forward_backward(loss_fn, p)
        losses.append(loss)
        adam_step(p, grads, lr=0.05)
    warm = losses[10:]
    assert all(b <= a + 1e-7 for a, b in zip(warm, warm[1:]))
    assert losses[-1] < losses[0] * 0.05


def test_training_trajectory_is_bit_identical():
    def run():
        rng = RngStream(5, "init")
        p = ParamStore()
        nn.add_affine(p, rng, "fc", 4, 2)
        x = RngStream(5, "data").normal((8, 4))
        y = RngStream(5, "data").normal((8, 2))
        traj = []
        for _ in range(30):
            loss, grads = forward_backward(
                lambda P: T.mse(nn.affine(P, "fc", Tensor(x)), Tensor(y)), p)
            traj.append(loss)
            adam_step(p, grads, lr=1e-2)
        return traj, p.arrays()

    t1, a1 = run()
    t2, a2 = run()
    assert t1 == t2
    assert all(np.array_equal(a1[k], a2[k]) for k in a1)


def test_rng_streams_are_independent_and_counter_addressable():
    a = RngStream(9, "noise")
    _ = a.normal((4,))
    second = a.normal((4,))
    jumped = RngStream(9, "noise", counter=1).normal((4,))
    assert np.array_equal(second, jumped)
    other = RngStream(9, "init").normal((4,))
    assert not np.array_equal(second, other)


def test_param_store_iterates_lexicographically_and_rejects_dupes():
    p = ParamStore()
    p.add("b", np.zeros(1, dtype=np.float32))
    p.add("a", np.zeros(1, dtype=np.float32))
    assert p.names() == ["a", "b"]
    with pytest.raises(ConfigError):
        p.add("a", np.zeros(1, dtype=np.float32))


def test_tensor_file_roundtrip_bit_exact(tmp_path):
    arr = RngStream(1, "io").normal((3, 5, 2))
    path = tmp_path / "t.ict"
    save_tensor(path, arr)
    save_tensor(tmp_path / "t2.ict", arr)
    assert (tmp_path / "t.ict").read_bytes() == (tmp_path / "t2.ict").read_bytes()
    assert np.array_equal(load_tensor(path), arr)


def test_checkpoint_roundtrip_and_truncation_offset(tmp_path):
    arrays = {"fc/w": np.ones((2, 2), dtype=np.float32), "fc/b": np.zeros(2, dtype=np.float32)}
    path = tmp_path / "c.ckpt"
    save_checkpoint(path, arrays)
    loaded = load_checkpoint(path)
    assert set(loaded) == set(arrays)
    assert all(np.array_equal(loaded[k], arrays[k]) for k in arrays)
    truncated = path.read_bytes()[:-5]
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(truncated)
    with pytest.raises(FormatError) as exc:
        load_checkpoint(bad)
    assert "offset" in str(exc.value)


def test_conv3x3_gradients():
    rng = RngStream(2, "conv")
    p = ParamStore()
    nn.add_conv3x3(p, rng, "conv", 2, 3)
    x = rng.spawn("x").normal((2, 4, 4, 2)).astype(np.float64)

    def loss_fn(P):
        return nn.conv3x3(P, "conv", Tensor(x)).mean()

    errs = fd_check(loss_fn, p, h=1e-3, max_coords=8)
    assert max(errs.values()) <= 1e-4


def test_patchify_roundtrip():
    rng = RngStream(4, "patch")
    x = rng.normal((2, 8, 8, 3))
    t = nn.patchify(Tensor(x), 4)
    assert t.shape == (2, 4, 48)
    back = nn.unpatchify(t, 4, 2, 3)
    assert np.array_equal(back.data, x)
