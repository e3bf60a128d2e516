"""LLaMA-style decoder: pre-norm RMSNorm, rotary embeddings, causal multi-head
attention, SwiGLU MLP and an untied LM head. No biases, no grouped KV heads."""
from __future__ import absolute_import
from __future__ import division

__all__ = ['rms_norm', 'rope_tables', 'apply_rope', 'attention_head', 'mha_standard',
           'mha_decomposed', 'swiglu_mlp', 'forward', 'KVCache', 'generate', 'check_tokens',
           'greedy_argmax']

import math

import torch

from ampprune import tensor_core as tc
from ampprune.exceptions import ContextOverflowError, NumericError


DEFAULT_ROPE_THETA = 10000.


def rms_norm(x, weight, eps):
    inv_rms = torch.rsqrt((x * x).mean(dim=-1, keepdim=True) + eps)
    return x * inv_rms * weight


def rope_tables(positions, d_head, theta=DEFAULT_ROPE_THETA, dtype=tc.STORAGE_DTYPE):
    """Returns ``(cos, sin)`` of shape (len(positions), d_head/2).

    Angles are computed in float64 and rounded once, so tables are identical for
    the cached and the full-recompute decoding paths.
    """
    pos = torch.as_tensor(positions, dtype=torch.float64).reshape(-1)
    inv_freq = theta ** (-torch.arange(0, d_head, 2, dtype=torch.float64) / d_head)
    angles = torch.outer(pos, inv_freq)
    return angles.cos().to(dtype), angles.sin().to(dtype)


def apply_rope(x, cos, sin, inverse=False):
    """Rotates adjacent dimension pairs ``(2i, 2i+1)`` of the last axis.

    ``inverse=True`` applies the transposed rotation, which is also the
    backward pass of the forward rotation.
    """
    if inverse:
        sin = -sin
    pairs = x.reshape(x.shape[:-1] + (x.shape[-1] // 2, 2))
    x0, x1 = pairs[..., 0], pairs[..., 1]
    out = torch.stack((x0 * cos - x1 * sin, x0 * sin + x1 * cos), dim=-1)
    return out.reshape(x.shape)


def split_heads(x, d_head):
    """(S, n_heads*d_head) -> (n_heads, S, d_head)"""
    return x.reshape(x.shape[0], -1, d_head).transpose(0, 1).contiguous()


def merge_heads(h):
    """(n_heads, S, d_head) -> (S, n_heads*d_head)"""
    return h.transpose(0, 1).reshape(h.shape[1], -1)


def causal_mask(s_query, s_key, offset=0, dtype=tc.STORAGE_DTYPE):
    # query i sits at absolute position offset+i and sees keys 0..offset+i
    mask = torch.full((s_query, s_key), float('-inf'), dtype=dtype)
    return torch.triu(mask, diagonal=offset + 1)


def attend(q, k, v, offset=0):
    """Scaled dot-product attention over (H, S, d) blocks.

    Returns:
        tuple: ``(h, probs)``.
    """
    scale = 1. / math.sqrt(q.shape[-1])
    scores = tc.matmul(q, k.transpose(1, 2)) * scale
    scores = scores + causal_mask(q.shape[1], k.shape[1], offset, dtype=q.dtype)
    probs = tc.softmax_rows(scores)
    return tc.matmul(probs, v), probs


def _positions(X, positions):
    if positions is None:
        return torch.arange(X.shape[0])
    positions = torch.as_tensor(positions).reshape(-1)
    if positions.shape[0] != X.shape[0]:
        raise ValueError('got {} positions for {} tokens'.format(positions.shape[0], X.shape[0]))
    return positions


def _heads(X, layer, positions, rope_theta, tables):
    if tables is None:
        tables = rope_tables(_positions(X, positions), layer.d_head, rope_theta, X.dtype)
    cos, sin = tables
    q = apply_rope(split_heads(tc.matmul(X, layer.Wq), layer.d_head), cos, sin)
    k = apply_rope(split_heads(tc.matmul(X, layer.Wk), layer.d_head), cos, sin)
    v = split_heads(tc.matmul(X, layer.Wv), layer.d_head)
    h, _ = attend(q, k, v)
    return h


def attention_head(X, layer, n, positions=None, rope_theta=DEFAULT_ROPE_THETA):
    """Output ``h_n`` (S x d_head) of head ``n`` alone.

    Args:
        X (torch.Tensor): normalized input, S x d_model.
        layer (LayerWeights): layer weights.
        n (int): head index.
        positions (sequence, optional): absolute token positions for RoPE.
            Default is ``0..S-1``.
    """
    if not 0 <= n < layer.n_heads:
        raise IndexError('head index {} out of range for {} heads'.format(n, layer.n_heads))
    cols = slice(n * layer.d_head, (n + 1) * layer.d_head)
    cos, sin = rope_tables(_positions(X, positions), layer.d_head, rope_theta, X.dtype)
    q = apply_rope(tc.matmul(X, layer.Wq[:, cols]), cos, sin).unsqueeze(0)
    k = apply_rope(tc.matmul(X, layer.Wk[:, cols]), cos, sin).unsqueeze(0)
    v = tc.matmul(X, layer.Wv[:, cols]).unsqueeze(0)
    h, _ = attend(q, k, v)
    return h[0]


def mha_standard(X, layer, positions=None, rope_theta=DEFAULT_ROPE_THETA, tables=None):
    """``Concat(h_1..h_N) @ Wo``"""
    h = _heads(X, layer, positions, rope_theta, tables)
    return tc.matmul(merge_heads(h), layer.Wo)


def mha_decomposed(X, layer, positions=None, rope_theta=DEFAULT_ROPE_THETA, tables=None):
    """MHA written as a sum of per-head contributions ``h_n @ W_n``.

    ``W_n`` is the n-th ``d_head``-row block of ``Wo``. Contributions are summed in
    head order.

    Returns:
        tuple: ``(output, contribs)`` with ``contribs`` a list of S x d_model tensors.
    """
    h = _heads(X, layer, positions, rope_theta, tables)
    dh = layer.d_head
    contribs = [tc.matmul(h[n], layer.Wo[n * dh:(n + 1) * dh]) for n in range(layer.n_heads)]
    output = contribs[0].clone()
    for contrib in contribs[1:]:
        output = tc.add(output, contrib)
    return output, contribs


def swiglu_mlp(X, layer, capture=False):
    """``(SiLU(X Wgate) * (X Wup)) Wdown``

    Returns:
        tuple: ``(output, down_input)``; ``down_input`` is None unless ``capture``.
    """
    down_input = tc.elementwise_mul(tc.silu(tc.matmul(X, layer.Wgate)), tc.matmul(X, layer.Wup))
    output = tc.matmul(down_input, layer.Wdown)
    return output, (down_input if capture else None)


def check_tokens(config, tokens, max_len=None):
    """Converts ``tokens`` to a 1-D LongTensor and validates range and length."""
    ids = torch.as_tensor(tokens, dtype=torch.long).reshape(-1)
    max_len = config.max_seq_len if max_len is None else max_len
    if ids.numel() < 1:
        raise ValueError('token sequence is empty')
    if ids.numel() > max_len:
        raise ContextOverflowError('sequence of {} tokens exceeds max_seq_len {}'.format(
            ids.numel(), max_len))
    if ids.min().item() < 0 or ids.max().item() >= config.vocab_size:
        bad = ids[(ids < 0) | (ids >= config.vocab_size)][0].item()
        raise ValueError('token id {} out of range for vocab_size {}'.format(bad, config.vocab_size))
    return ids


def forward(w, tokens, hook=None):
    """Full forward pass.

    Args:
        w (TransformerWeights): model weights.
        tokens (sequence): token ids, 1 <= S <= max_seq_len.
        hook (callable, optional): called as ``hook(layer_index, contribs, down_input)``
            after each layer. When given, attention runs in decomposed form and the
            MLP Down-projection input is captured.

    Returns:
        torch.Tensor: logits, S x vocab_size.
    """
    c = w.config
    ids = check_tokens(c, tokens)
    x = w.token_embedding.index_select(0, ids)
    tables = rope_tables(torch.arange(ids.numel()), c.d_head, c.rope_theta, x.dtype)
    for i, layer in enumerate(w.layers):
        a = rms_norm(x, layer.attn_norm, c.rms_norm_eps)
        if hook is None:
            attn = mha_standard(a, layer, tables=tables)
        else:
            attn, contribs = mha_decomposed(a, layer, tables=tables)
        x = tc.add(x, attn)
        mlp, down_input = swiglu_mlp(rms_norm(x, layer.mlp_norm, c.rms_norm_eps), layer,
                                     capture=hook is not None)
        x = tc.add(x, mlp)
        if hook is not None:
            hook(i, contribs, down_input)
    return tc.matmul(rms_norm(x, w.final_norm, c.rms_norm_eps), w.lm_head)


class KVCache(object):
    """Per-generation key/value store, one (n_heads_l, capacity, d_head) pair per layer.

    Keys are stored after rotation. A cache belongs to exactly one generation.
    """

    def __init__(self, w, capacity):
        self.capacity = int(capacity)
        self.keys = []
        self.values = []
        for layer in w.layers:
            shape = (layer.n_heads, self.capacity, layer.d_head)
            self.keys.append(torch.zeros(shape, dtype=w.dtype))
            self.values.append(torch.zeros(shape, dtype=w.dtype))
        self.length = 0


def forward_cached(w, tokens, cache):
    """Runs ``tokens`` at positions ``cache.length..`` and returns last-row logits."""
    c = w.config
    ids = check_tokens(c, tokens, max_len=cache.capacity - cache.length)
    start, end = cache.length, cache.length + ids.numel()
    x = w.token_embedding.index_select(0, ids)
    cos, sin = rope_tables(torch.arange(start, end), c.d_head, c.rope_theta, x.dtype)
    for i, layer in enumerate(w.layers):
        a = rms_norm(x, layer.attn_norm, c.rms_norm_eps)
        q = apply_rope(split_heads(tc.matmul(a, layer.Wq), layer.d_head), cos, sin)
        cache.keys[i][:, start:end] = apply_rope(
            split_heads(tc.matmul(a, layer.Wk), layer.d_head), cos, sin)
        cache.values[i][:, start:end] = split_heads(tc.matmul(a, layer.Wv), layer.d_head)
        h, _ = attend(q, cache.keys[i][:, :end], cache.values[i][:, :end], offset=start)
        x = tc.add(x, tc.matmul(merge_heads(h), layer.Wo))
        mlp, _ = swiglu_mlp(rms_norm(x, layer.mlp_norm, c.rms_norm_eps), layer)
        x = tc.add(x, mlp)
    cache.length = end
    return tc.matmul(rms_norm(x[-1:], w.final_norm, c.rms_norm_eps), w.lm_head)[0]


def greedy_argmax(logits):
    """Index of the largest logit; ties go to the lowest token id.

    Raises:
        NumericError: a logit is NaN.
    """
    if torch.isnan(logits).any():
        raise NumericError('greedy_argmax got NaN logits')
    best = logits.max()
    return int(torch.nonzero(logits == best)[0, 0].item())


def generate(w, prompt, n_new, use_cache=True):
    """Greedy decoding.

    Args:
        w (TransformerWeights): model weights.
        prompt (sequence): non-empty prompt token ids.
        n_new (int): number of tokens to produce.
        use_cache (bool, optional): decode incrementally with a KV cache. When False,
            every step recomputes the full forward pass. Default is True.

    Returns:
        list: exactly ``n_new`` new token ids.

    Raises:
        ContextOverflowError: ``len(prompt) + n_new > max_seq_len``.
    """
    prompt = check_tokens(w.config, prompt, max_len=float('inf'))
    n_new = int(n_new)
    if n_new < 0:
        raise ValueError('n_new must be >= 0, got {}'.format(n_new))
    total = prompt.numel() + n_new
    if total > w.config.max_seq_len:
        raise ContextOverflowError('prompt of {} tokens plus {} new exceeds max_seq_len {}'.format(
            prompt.numel(), n_new, w.config.max_seq_len))
    out = []
    if n_new == 0:
        return out
    with torch.no_grad():
        if use_cache:
            cache = KVCache(w, total)
            logits = forward_cached(w, prompt, cache)
            while True:
                out.append(greedy_argmax(logits))
                if len(out) == n_new:
                    break
                logits = forward_cached(w, out[-1:], cache)
        else:
            seq = prompt.tolist()
            while len(out) < n_new:
                token = greedy_argmax(forward(w, seq)[-1])
                out.append(token)
                seq.append(token)
    return out
