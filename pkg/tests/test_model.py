import math

import numpy as np
import pytest
import torch

from ampprune.exceptions import ContextOverflowError, NumericError
from ampprune.models import (
    ModelConfig, LayerWeights, TransformerWeights, build_config, init_weights, count_params,
    rms_norm, attention_head, mha_standard, mha_decomposed, swiglu_mlp, forward, generate,
    greedy_argmax
)
from ampprune.pruning import prune_layer

from conftest import rand


def make_layer(d_model, n_heads, d_head, d_intermediate, seed=0, **overrides):
    g = torch.Generator()
    g.manual_seed(seed)
    width = n_heads * d_head

    def m(rows, cols):
        return torch.randn(rows, cols, generator=g) / math.sqrt(rows)

    tensors = dict(
        attn_norm=torch.ones(d_model), Wq=m(d_model, width), Wk=m(d_model, width),
        Wv=m(d_model, width), Wo=m(width, d_model), mlp_norm=torch.ones(d_model),
        Wgate=m(d_model, d_intermediate), Wup=m(d_model, d_intermediate),
        Wdown=m(d_intermediate, d_model))
    tensors.update(overrides)
    return LayerWeights(d_head=d_head, **tensors)


def rope_oracle(vec, pos, theta=10000.):
    out = list(vec)
    d = len(vec)
    for i in range(d // 2):
        angle = pos * theta ** (-2. * i / d)
        x0, x1 = vec[2 * i], vec[2 * i + 1]
        out[2 * i] = x0 * math.cos(angle) - x1 * math.sin(angle)
        out[2 * i + 1] = x0 * math.sin(angle) + x1 * math.cos(angle)
    return out


def head_oracle(X, layer, n):
    """Per-position loops over one head in float64."""
    X = X.double().numpy()
    dh = layer.d_head
    cols = slice(n * dh, (n + 1) * dh)
    Wq, Wk, Wv = (w[:, cols].double().numpy() for w in (layer.Wq, layer.Wk, layer.Wv))
    S = X.shape[0]
    q = [rope_oracle(list(X[s] @ Wq), s) for s in range(S)]
    k = [rope_oracle(list(X[s] @ Wk), s) for s in range(S)]
    v = [X[s] @ Wv for s in range(S)]
    out = np.zeros((S, dh))
    for i in range(S):
        scores = [sum(q[i][d] * k[j][d] for d in range(dh)) / math.sqrt(dh) for j in range(i + 1)]
        top = max(scores)
        e = [math.exp(s - top) for s in scores]
        for j in range(i + 1):
            out[i] += e[j] / sum(e) * v[j]
    return out


def mlp_oracle(X, layer):
    X = X.double().numpy()
    gate = layer.Wgate.double().numpy()
    up = layer.Wup.double().numpy()
    down = layer.Wdown.double().numpy()
    S, d_model = X.shape
    d_i = gate.shape[1]
    out = np.zeros((S, d_model))
    for s in range(S):
        for m in range(d_i):
            g = sum(X[s, p] * gate[p, m] for p in range(d_model))
            u = sum(X[s, p] * up[p, m] for p in range(d_model))
            a = g / (1. + math.exp(-g)) * u
            for j in range(d_model):
                out[s, j] += a * down[m, j]
    return out


def test_config_rejects_inconsistent_width():
    with pytest.raises(ValueError):
        ModelConfig(d_model=10, n_heads=4, d_head=2)
    with pytest.raises(ValueError):
        ModelConfig(d_model=12, n_heads=4, d_head=3)


def test_build_config_unknown_preset():
    with pytest.raises(KeyError):
        build_config('huge')


def test_count_params_matches_tensors(tiny_weights):
    total, prunable = count_params(tiny_weights.config)
    assert total == tiny_weights.num_params()
    c = tiny_weights.config
    assert prunable == c.n_layers * (4 * c.d_model * c.d_model + 3 * c.d_model * c.d_intermediate)


def test_init_weights_is_seeded(micro_config):
    a, b = init_weights(micro_config, seed=1), init_weights(micro_config, seed=1)
    c = init_weights(micro_config, seed=2)
    assert all(torch.equal(x, y) for (_, x), (_, y) in zip(a.parameters(), b.parameters()))
    assert not torch.equal(a.lm_head, c.lm_head)


def test_rms_norm_unit_rms():
    x = rand(5, 16, seed=2) * 7.
    y = rms_norm(x, torch.ones(16), 1e-5)
    rms = y.pow(2).mean(dim=-1).sqrt()
    assert torch.allclose(rms, torch.ones(5), atol=1e-4)


def test_attention_head_zero_values():
    layer = make_layer(8, 2, 4, 6)
    layer.Wv[:, 0:4] = 0.
    assert torch.equal(attention_head(rand(5, 8), layer, 0), torch.zeros(5, 4))


def test_attention_head_single_token_returns_value():
    layer = make_layer(8, 2, 4, 6, seed=1)
    X = rand(1, 8, seed=3)
    expected = X @ layer.Wv[:, 4:8]
    assert torch.allclose(attention_head(X, layer, 1), expected, atol=1e-6)


def test_attention_head_matches_loop_oracle():
    layer = make_layer(8, 2, 4, 6, seed=2)
    X = rand(3, 8, seed=4)
    for n in range(2):
        np.testing.assert_allclose(attention_head(X, layer, n).numpy(), head_oracle(X, layer, n),
                                   atol=1e-5)


def test_attention_head_index_out_of_range():
    layer = make_layer(8, 2, 4, 6)
    with pytest.raises(IndexError):
        attention_head(rand(2, 8), layer, 2)


def test_mha_single_head_identity_wo():
    layer = make_layer(4, 1, 4, 6, seed=5, Wo=torch.eye(4))
    X = rand(3, 4, seed=6)
    assert torch.allclose(mha_standard(X, layer), attention_head(X, layer, 0), atol=1e-6)


def test_mha_zero_values_give_zero_output():
    layer = make_layer(8, 2, 4, 6, Wv=torch.zeros(8, 8))
    assert torch.equal(mha_standard(rand(4, 8), layer), torch.zeros(4, 8))


def test_mha_decomposed_identity_wo():
    layer = make_layer(4, 2, 2, 3, Wv=torch.eye(4), Wo=torch.eye(4))
    out, contribs = mha_decomposed(torch.tensor([[2., 0., 3., 0.]]), layer)
    assert contribs[0].tolist() == [[2., 0., 0., 0.]]
    assert contribs[1].tolist() == [[0., 0., 3., 0.]]
    assert out.tolist() == [[2., 0., 3., 0.]]


def test_mha_decomposed_zeroed_head():
    layer = make_layer(8, 2, 4, 6, seed=7)
    layer.Wv[:, 4:8] = 0.
    _, contribs = mha_decomposed(rand(4, 8), layer)
    assert torch.equal(contribs[1], torch.zeros(4, 8))
    assert contribs[0].abs().sum() > 0


@pytest.mark.parametrize('seed', range(10))
def test_decomposition_identity(seed):
    n_heads = 2 + seed % 7
    d_head = 4
    d_model = n_heads * d_head
    layer = make_layer(d_model, n_heads, d_head, 12, seed=seed)
    X = rand(6, d_model, seed=100 + seed)
    standard = mha_standard(X, layer)
    out, contribs = mha_decomposed(X, layer)
    assert len(contribs) == n_heads
    assert (standard - out).abs().max().item() <= 1e-4
    heads = torch.cat([attention_head(X, layer, n) for n in range(n_heads)], dim=1)
    assert (heads @ layer.Wo - out).abs().max().item() <= 1e-4


def test_swiglu_zero_input():
    layer = make_layer(8, 2, 4, 6)
    out, down_input = swiglu_mlp(torch.zeros(3, 8), layer, capture=True)
    assert torch.equal(out, torch.zeros(3, 8))
    assert torch.equal(down_input, torch.zeros(3, 6))


def test_swiglu_zero_gate_column():
    layer = make_layer(8, 2, 4, 6, seed=3)
    layer.Wgate[:, 2] = 0.
    _, down_input = swiglu_mlp(rand(5, 8), layer, capture=True)
    assert torch.equal(down_input[:, 2], torch.zeros(5))


def test_swiglu_capture_flag():
    layer = make_layer(8, 2, 4, 6)
    assert swiglu_mlp(rand(2, 8), layer)[1] is None


def test_swiglu_matches_scalar_oracle():
    layer = make_layer(8, 2, 4, 6, seed=9)
    X = rand(4, 8, seed=10)
    out, _ = swiglu_mlp(X, layer)
    np.testing.assert_allclose(out.numpy(), mlp_oracle(X, layer), atol=1e-5)


def _zero_layers(w):
    layers = [layer.map(torch.zeros_like) for layer in w.layers]
    return TransformerWeights(w.config, w.token_embedding, layers, w.final_norm, w.lm_head)


def test_forward_zero_layers_pass_residual(micro_weights):
    w = _zero_layers(micro_weights)
    tokens = [5, 77, 200, 3]
    expected = rms_norm(w.token_embedding[tokens], w.final_norm, w.config.rms_norm_eps) @ w.lm_head
    assert torch.allclose(forward(w, tokens), expected, atol=1e-6)


def test_forward_shape_ignores_layer_widths(tiny_weights):
    layers = [prune_layer(tiny_weights.layers[0], [0, 3], list(range(40))),
              prune_layer(tiny_weights.layers[1], [1], [5])]
    pruned = TransformerWeights(tiny_weights.config, tiny_weights.token_embedding, layers,
                                tiny_weights.final_norm, tiny_weights.lm_head)
    assert pruned.layer_dims() == [(2, 46), (3, 85)]
    for S in (1, 7):
        assert tuple(forward(pruned, list(range(S))).shape) == (S, 257)


def test_forward_rejects_bad_tokens(micro_weights):
    with pytest.raises(ValueError):
        forward(micro_weights, [1, 257])
    with pytest.raises(ContextOverflowError):
        forward(micro_weights, [1] * 33)
    with pytest.raises(ValueError):
        forward(micro_weights, [])


def test_forward_hook_sees_every_layer(tiny_weights):
    seen = []
    logits = forward(tiny_weights, [1, 2, 3], hook=lambda i, c, d: seen.append((i, len(c), d.shape)))
    assert seen == [(0, 4, (3, 86)), (1, 4, (3, 86))]
    assert torch.allclose(logits, forward(tiny_weights, [1, 2, 3]), atol=1e-5)


def test_generate_zero_new(micro_weights):
    assert generate(micro_weights, [1, 2], 0) == []


def test_generate_cache_matches_recompute(tiny_weights):
    prompt = [104, 101, 108, 108, 111]
    cached = generate(tiny_weights, prompt, 20, use_cache=True)
    full = generate(tiny_weights, prompt, 20, use_cache=False)
    assert len(cached) == 20
    assert cached == full


def test_generate_is_deterministic(micro_weights):
    assert generate(micro_weights, [9, 8, 7], 10) == generate(micro_weights, [9, 8, 7], 10)


def test_generate_context_overflow(micro_weights):
    with pytest.raises(ContextOverflowError):
        generate(micro_weights, [1] * 30, 3)


def test_greedy_argmax_tie_takes_lowest_id():
    assert greedy_argmax(torch.tensor([0., 2., 5., 5., 1.])) == 2
    assert greedy_argmax(torch.zeros(257)) == 0


def test_greedy_argmax_rejects_nan():
    with pytest.raises(NumericError):
        greedy_argmax(torch.tensor([0., float('nan'), 1.]))
