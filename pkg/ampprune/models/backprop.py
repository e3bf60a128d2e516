"""Hand-derived backward pass of the decoder for next-token cross entropy.

The forward below mirrors :func:`ampprune.models.llama.forward` step for step
while keeping every intermediate the backward needs.
"""
from __future__ import absolute_import
from __future__ import division

__all__ = ['loss_and_grads']

import math

import torch

from ampprune import tensor_core as tc
from ampprune.losses import CrossEntropyLoss
from .llama import (
    rms_norm, rope_tables, apply_rope, split_heads, merge_heads, attend, check_tokens
)
from .weights import LayerWeights, TransformerWeights


def _rms_backward(x, weight, eps, dy):
    inv_rms = torch.rsqrt((x * x).mean(dim=-1, keepdim=True) + eps)
    n = x * inv_rms
    dweight = (dy * n).sum(dim=0)
    dn = dy * weight
    dx = inv_rms * (dn - n * (dn * n).mean(dim=-1, keepdim=True))
    return dx, dweight


def _forward_tape(w, ids):
    c = w.config
    x = w.token_embedding.index_select(0, ids)
    cos, sin = rope_tables(torch.arange(ids.numel()), c.d_head, c.rope_theta, x.dtype)
    tape = []
    for layer in w.layers:
        t = {'x_in': x}
        a = rms_norm(x, layer.attn_norm, c.rms_norm_eps)
        q = apply_rope(split_heads(tc.matmul(a, layer.Wq), layer.d_head), cos, sin)
        k = apply_rope(split_heads(tc.matmul(a, layer.Wk), layer.d_head), cos, sin)
        v = split_heads(tc.matmul(a, layer.Wv), layer.d_head)
        h, probs = attend(q, k, v)
        hc = merge_heads(h)
        x = tc.add(x, tc.matmul(hc, layer.Wo))
        b = rms_norm(x, layer.mlp_norm, c.rms_norm_eps)
        gate = tc.matmul(b, layer.Wgate)
        up = tc.matmul(b, layer.Wup)
        act = tc.silu(gate)
        m = tc.elementwise_mul(act, up)
        t.update(a=a, q=q, k=k, v=v, probs=probs, hc=hc, x_mid=x, b=b,
                 gate=gate, up=up, act=act, m=m)
        x = tc.add(x, tc.matmul(m, layer.Wdown))
        tape.append(t)
    final = rms_norm(x, w.final_norm, c.rms_norm_eps)
    logits = tc.matmul(final, w.lm_head)
    return tape, x, final, logits, (cos, sin)


def _layer_backward(layer, t, dx, eps, tables):
    cos, sin = tables
    dh = layer.d_head
    # MLP block
    dy = dx
    dWdown = tc.matmul(t['m'].t(), dy)
    dm = tc.matmul(dy, layer.Wdown.t())
    dact = dm * t['up']
    dup = dm * t['act']
    dgate = dact * tc.silu_grad(t['gate'])
    dWgate = tc.matmul(t['b'].t(), dgate)
    dWup = tc.matmul(t['b'].t(), dup)
    db = tc.matmul(dgate, layer.Wgate.t()) + tc.matmul(dup, layer.Wup.t())
    dx_mid, dmlp_norm = _rms_backward(t['x_mid'], layer.mlp_norm, eps, db)
    dx = dx + dx_mid
    # attention block
    dWo = tc.matmul(t['hc'].t(), dx)
    dh_heads = split_heads(tc.matmul(dx, layer.Wo.t()), dh)
    probs = t['probs']
    dprobs = tc.matmul(dh_heads, t['v'].transpose(1, 2))
    dv = tc.matmul(probs.transpose(1, 2).contiguous(), dh_heads)
    dscores = probs * (dprobs - (dprobs * probs).sum(dim=-1, keepdim=True))
    dscores = dscores * (1. / math.sqrt(dh))
    dq = apply_rope(tc.matmul(dscores, t['k']), cos, sin, inverse=True)
    dk = apply_rope(tc.matmul(dscores.transpose(1, 2).contiguous(), t['q']), cos, sin, inverse=True)
    dq, dk, dv = merge_heads(dq), merge_heads(dk), merge_heads(dv)
    a_t = t['a'].t()
    dWq, dWk, dWv = tc.matmul(a_t, dq), tc.matmul(a_t, dk), tc.matmul(a_t, dv)
    da = tc.matmul(dq, layer.Wq.t()) + tc.matmul(dk, layer.Wk.t()) + tc.matmul(dv, layer.Wv.t())
    dx_in, dattn_norm = _rms_backward(t['x_in'], layer.attn_norm, eps, da)
    grads = LayerWeights(attn_norm=dattn_norm, Wq=dWq, Wk=dWk, Wv=dWv, Wo=dWo,
                         mlp_norm=dmlp_norm, Wgate=dWgate, Wup=dWup, Wdown=dWdown, d_head=dh)
    return dx + dx_in, grads


def loss_and_grads(w, tokens, criterion=None):
    """Mean next-token cross entropy and its analytic gradient.

    Positions ``0..S-2`` predict tokens ``1..S-1``; the final token is a target only,
    so a sequence of ``max_seq_len + 1`` tokens is accepted.

    Args:
        w (TransformerWeights): model weights.
        tokens (sequence): token ids, at least 2.
        criterion (CrossEntropyLoss, optional): loss; plain cross entropy by default.

    Returns:
        tuple: ``(loss, grads)`` where ``grads`` is a ``TransformerWeights`` holding one
        gradient tensor per parameter tensor.
    """
    c = w.config
    ids = torch.as_tensor(tokens, dtype=torch.long).reshape(-1)
    if ids.numel() < 2:
        raise ValueError('need at least 2 tokens for a next-token loss, got {}'.format(ids.numel()))
    inputs = check_tokens(c, ids[:-1])
    targets = check_tokens(c, ids[1:])
    if criterion is None:
        criterion = CrossEntropyLoss(c.vocab_size)

    with torch.no_grad():
        tape, x, final, logits, tables = _forward_tape(w, inputs)
        loss, dlogits = criterion(logits, targets)

        dlm_head = tc.matmul(final.t(), dlogits)
        dfinal = tc.matmul(dlogits, w.lm_head.t())
        dx, dfinal_norm = _rms_backward(x, w.final_norm, c.rms_norm_eps, dfinal)
        layer_grads = [None] * len(w.layers)
        for i in reversed(range(len(w.layers))):
            dx, layer_grads[i] = _layer_backward(w.layers[i], tape[i], dx, c.rms_norm_eps, tables)
        dembedding = torch.zeros_like(w.token_embedding)
        dembedding.index_add_(0, inputs, dx)

    grads = TransformerWeights(c, dembedding, layer_grads, dfinal_norm, dlm_head)
    return loss, grads
