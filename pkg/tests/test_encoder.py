import numpy as np
import pytest

from cmta.encoder import (EncoderLayerParams, EncoderParams, embed_sequence,
                          encoder_forward, feed_forward, fuse_frame,
                          self_attention, temporal_pool)
from cmta.tensor import ShapeError, Tensor, default_dtype, grad_check


@pytest.fixture(autouse=True)
def f64():
    with default_dtype(np.float64):
        yield


def make_layer(d, f, rng):
    return EncoderLayerParams(
        w_q=Tensor(rng.standard_normal((d, d)), requires_grad=True),
        w_k=Tensor(rng.standard_normal((d, d)), requires_grad=True),
        w_v=Tensor(rng.standard_normal((d, d)), requires_grad=True),
        w_o=Tensor(rng.standard_normal((d, d)), requires_grad=True),
        w_1=Tensor(rng.standard_normal((f, d)), requires_grad=True),
        b_1=Tensor(rng.standard_normal(f), requires_grad=True),
        w_2=Tensor(rng.standard_normal((d, f)), requires_grad=True),
        b_2=Tensor(rng.standard_normal(d), requires_grad=True),
        ln1_scale=Tensor(np.ones(d), requires_grad=True),
        ln1_shift=Tensor(np.zeros(d), requires_grad=True),
        ln2_scale=Tensor(np.ones(d), requires_grad=True),
        ln2_shift=Tensor(np.zeros(d), requires_grad=True))


def make_params(t, d, d_in, n_layers, heads, rng):
    return EncoderParams(
        w_p=Tensor(rng.standard_normal((d, d_in)), requires_grad=True),
        b_p=Tensor(rng.standard_normal(d), requires_grad=True),
        pos=Tensor(rng.standard_normal((t, d)), requires_grad=True),
        layers=[make_layer(d, 2 * d, rng) for _ in range(n_layers)],
        heads=heads)


def softmax(x, axis=-1):
    e = np.exp(x - x.max(axis=axis, keepdims=True))
    return e / e.sum(axis=axis, keepdims=True)


def attention_oracle(u, layer, heads):
    """Independent transcription: per-head scaled dot-product, then W_o."""
    d = u.shape[-1]
    d_k = d // heads
    q, k, v = u @ layer.w_q.data, u @ layer.w_k.data, u @ layer.w_v.data
    outs = []
    for h in range(heads):
        sl = slice(h * d_k, (h + 1) * d_k)
        a = softmax(q[:, sl] @ k[:, sl].T / np.sqrt(d_k))
        outs.append(a @ v[:, sl])
    return np.concatenate(outs, axis=-1) @ layer.w_o.data


def layer_norm_oracle(x, scale, shift, eps=1e-5):
    mu = x.mean(axis=-1, keepdims=True)
    var = ((x - mu) ** 2).mean(axis=-1, keepdims=True)
    return (x - mu) / np.sqrt(var + eps) * scale + shift


# ---- fuse_frame -------------------------------------------------------------

def test_fuse_frame_order():
    out = fuse_frame(Tensor([1.0, 2.0]), Tensor([3.0]))
    assert np.allclose(out.data, [1.0, 2.0, 3.0])


def test_fuse_frame_width():
    out = fuse_frame(Tensor(np.zeros(512)), Tensor(np.zeros(512)))
    assert out.shape == (1024,)


def test_fuse_frame_rejects_empty():
    with pytest.raises(ShapeError):
        fuse_frame(Tensor(np.zeros((1, 0))), Tensor(np.zeros((1, 3))))


# ---- embed_sequence ---------------------------------------------------------

def test_embed_zero_params():
    rng = np.random.default_rng(0)
    p = make_params(3, 4, 6, 0, 1, rng)
    p.w_p.data[:] = 0.0
    p.b_p.data[:] = 0.0
    p.pos.data[:] = 0.0
    out = embed_sequence(Tensor(rng.standard_normal((3, 6))), p)
    assert np.allclose(out.data, 0.0)


def test_embed_identity_projection():
    rng = np.random.default_rng(0)
    p = make_params(3, 4, 4, 0, 1, rng)
    p.w_p.data = np.eye(4)
    p.b_p.data[:] = 0.0
    p.pos.data[:] = 0.0
    x = rng.standard_normal((3, 4))
    assert np.allclose(embed_sequence(Tensor(x), p).data, x)


def test_embed_matches_affine_oracle():
    rng = np.random.default_rng(1)
    p = make_params(4, 5, 7, 0, 1, rng)
    x = rng.standard_normal((4, 7))
    got = embed_sequence(Tensor(x), p).data
    for t in range(4):
        expected = p.w_p.data @ x[t] + p.b_p.data + p.pos.data[t]
        assert np.abs(got[t] - expected).max() < 1e-12


def test_embed_length_mismatch():
    rng = np.random.default_rng(0)
    p = make_params(8, 4, 6, 0, 1, rng)
    with pytest.raises(ShapeError):
        embed_sequence(Tensor(np.zeros((5, 6))), p)


# ---- self_attention ---------------------------------------------------------

def test_attention_single_key():
    rng = np.random.default_rng(0)
    layer = make_layer(4, 8, rng)
    u = rng.standard_normal((1, 4))
    got = self_attention(Tensor(u), layer, 1).data
    expected = (u @ layer.w_v.data) @ layer.w_o.data  # weights are [[1.0]]
    assert np.abs(got - expected).max() < 1e-12


def test_attention_identical_rows_uniform():
    rng = np.random.default_rng(0)
    layer = make_layer(4, 8, rng)
    row = rng.standard_normal(4)
    u = np.tile(row, (5, 1))
    got = self_attention(Tensor(u), layer, 2).data
    # uniform weights over identical rows: output equals the single-row case
    single = self_attention(Tensor(row.reshape(1, 4)), layer, 2).data
    assert np.abs(got - single).max() < 1e-10


@pytest.mark.parametrize("heads", [1, 2])
def test_attention_matches_oracle(heads):
    rng = np.random.default_rng(2)
    layer = make_layer(4, 8, rng)
    u = rng.standard_normal((3, 4))
    got = self_attention(Tensor(u), layer, heads).data
    assert np.abs(got - attention_oracle(u, layer, heads)).max() < 1e-12


def test_attention_rows_are_distributions():
    rng = np.random.default_rng(3)
    layer = make_layer(6, 8, rng)
    u = rng.standard_normal((4, 6))
    d_k = 3
    q, k = u @ layer.w_q.data, u @ layer.w_k.data
    for h in range(2):
        sl = slice(h * d_k, (h + 1) * d_k)
        a = softmax(q[:, sl] @ k[:, sl].T / np.sqrt(d_k))
        assert (a >= 0).all()
        assert np.abs(a.sum(axis=1) - 1.0).max() < 1e-6


def test_attention_rejects_bad_head_count():
    rng = np.random.default_rng(0)
    layer = make_layer(4, 8, rng)
    with pytest.raises(ShapeError):
        self_attention(Tensor(np.zeros((2, 4))), layer, 3)


# ---- encoder_forward --------------------------------------------------------

def test_zero_layers_identity():
    rng = np.random.default_rng(0)
    p = make_params(3, 4, 6, 0, 2, rng)
    u = rng.standard_normal((3, 4))
    assert np.array_equal(encoder_forward(Tensor(u), p).data, u)


def test_output_shape_contract():
    rng = np.random.default_rng(1)
    p = make_params(5, 8, 6, 2, 4, rng)
    u = rng.standard_normal((5, 8))
    assert encoder_forward(Tensor(u), p).shape == (5, 8)


def test_single_layer_matches_composed_oracle():
    rng = np.random.default_rng(4)
    p = make_params(3, 4, 6, 1, 2, rng)
    layer = p.layers[0]
    u = rng.standard_normal((3, 4))
    mid = layer_norm_oracle(u + attention_oracle(u, layer, 2),
                            layer.ln1_scale.data, layer.ln1_shift.data)
    ff = np.maximum(mid @ layer.w_1.data.T + layer.b_1.data, 0.0) \
        @ layer.w_2.data.T + layer.b_2.data
    expected = layer_norm_oracle(mid + ff, layer.ln2_scale.data,
                                 layer.ln2_shift.data)
    got = encoder_forward(Tensor(u), p).data
    assert np.abs(got - expected).max() < 1e-10


def test_permutation_sensitivity_with_positions():
    rng = np.random.default_rng(5)
    p = make_params(4, 4, 6, 1, 2, rng)
    x = rng.standard_normal((4, 6))
    perm = [2, 0, 3, 1]
    out1 = temporal_pool(encoder_forward(embed_sequence(Tensor(x), p), p)).data
    out2 = temporal_pool(encoder_forward(embed_sequence(Tensor(x[perm]), p), p)).data
    assert np.abs(out1 - out2).max() > 1e-6


def test_permutation_invariance_without_positions():
    rng = np.random.default_rng(5)
    p = make_params(4, 4, 6, 1, 2, rng)
    p.pos.data[:] = 0.0
    x = rng.standard_normal((4, 6))
    perm = [2, 0, 3, 1]
    out1 = temporal_pool(encoder_forward(embed_sequence(Tensor(x), p), p)).data
    out2 = temporal_pool(encoder_forward(embed_sequence(Tensor(x[perm]), p), p)).data
    assert np.abs(out1 - out2).max() < 1e-10


# ---- temporal_pool ----------------------------------------------------------

def test_pool_identical_rows():
    row = np.array([1.0, 2.0, 3.0])
    u = np.tile(row, (4, 1))
    assert np.allclose(temporal_pool(Tensor(u)).data, row)


def test_pool_two_rows():
    u = np.array([[1.0, 0.0], [0.0, 1.0]])
    assert np.allclose(temporal_pool(Tensor(u)).data, [0.5, 0.5])


def test_pool_matches_mean():
    rng = np.random.default_rng(6)
    u = rng.standard_normal((8, 5))
    assert np.array_equal(temporal_pool(Tensor(u)).data, u.mean(axis=0))


# ---- gradients --------------------------------------------------------------

@pytest.mark.parametrize("seed", range(3))
def test_fine_branch_gradients(seed):
    rng = np.random.default_rng(seed)
    p = make_params(3, 4, 6, 1, 2, rng)
    x = Tensor(rng.standard_normal((3, 6)))
    tensors = [t for _, t in p.named()]

    def f():
        return temporal_pool(encoder_forward(embed_sequence(x, p), p)).sum()
    assert grad_check(f, tensors) < 1e-4
