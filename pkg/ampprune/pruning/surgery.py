from __future__ import absolute_import
from __future__ import division

__all__ = ['apply_plan', 'achieved_ratio', 'prune_layer']

import torch

from ampprune.models import LayerWeights, TransformerWeights
from .plan import ratio_from_counts


def _keep(n, removed):
    removed = set(removed)
    return torch.tensor([i for i in range(n) if i not in removed], dtype=torch.long)


def prune_layer(layer, heads, mlp):
    """Slices removed heads and MLP pairs out of one layer.

    Head ``n`` drops columns ``[n*d_head, (n+1)*d_head)`` of Wq/Wk/Wv and the same rows
    of Wo; pair ``m`` drops column ``m`` of Wgate/Wup and row ``m`` of Wdown.
    """
    dh = layer.d_head
    keep_heads = _keep(layer.n_heads, heads)
    cols = (keep_heads.unsqueeze(1) * dh + torch.arange(dh).unsqueeze(0)).reshape(-1)
    keep_mlp = _keep(layer.d_intermediate, mlp)
    return LayerWeights(
        attn_norm=layer.attn_norm.clone(),
        Wq=layer.Wq.index_select(1, cols),
        Wk=layer.Wk.index_select(1, cols),
        Wv=layer.Wv.index_select(1, cols),
        Wo=layer.Wo.index_select(0, cols),
        mlp_norm=layer.mlp_norm.clone(),
        Wgate=layer.Wgate.index_select(1, keep_mlp),
        Wup=layer.Wup.index_select(1, keep_mlp),
        Wdown=layer.Wdown.index_select(0, keep_mlp),
        d_head=dh,
    )


def apply_plan(w, plan):
    """Returns new weights with the plan's heads and MLP pairs removed.

    Embeddings, norms and the LM head are copied unchanged and ``w`` is not modified.
    An empty plan yields a bit-identical copy.

    Raises:
        ValueError: the plan was built for different layer dimensions.
    """
    if plan.config.d_model != w.config.d_model or plan.config.d_head != w.config.d_head \
            or plan.layer_dims != w.layer_dims():
        raise ValueError('plan built for layer dims {} does not match model dims {}'.format(
            plan.layer_dims, w.layer_dims()))
    if plan.is_empty():
        return w.clone()
    layers = [prune_layer(layer, heads, mlp)
              for layer, heads, mlp in zip(w.layers, plan.heads, plan.mlp)]
    return TransformerWeights(w.config, w.token_embedding.clone(), layers,
                              w.final_norm.clone(), w.lm_head.clone())


def achieved_ratio(original, pruned, exclude_embeddings=False):
    """``1 - Q/P`` between two models of the same config family.

    Args:
        original (TransformerWeights): model before pruning.
        pruned (TransformerWeights): model after pruning.
        exclude_embeddings (bool, optional): leave the token embedding and LM head out
            of both counts. Default is False.
    """
    if original.config != pruned.config:
        raise ValueError('models have different configs')
    return ratio_from_counts(original.config, original.layer_dims(), pruned.layer_dims(),
                             exclude_embeddings=exclude_embeddings)
