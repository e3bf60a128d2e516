from __future__ import absolute_import, division, print_function

__all__ = ['compute_model_complexity']


def _layer_macs(layer, d_model, context_len):
    width = layer.n_heads * layer.d_head
    return {
        'qkv': 3 * d_model * width,
        'attn': 2 * width * context_len,
        'wo': width * d_model,
        'mlp': 3 * d_model * layer.d_intermediate,
    }


def compute_model_complexity(w, context_len=1, verbose=False):
    """Returns number of parameters and multiply-accumulates per decoded token.

    .. note::
        This is a shape census, not a measurement: it counts the dense MACs a
        single new token costs at ``context_len`` cached positions (projections,
        attention over the cache, SwiGLU MLP and the LM head). Embedding lookup
        and norms are ignored.

    Args:
        w (TransformerWeights): model weights.
        context_len (int, optional): number of positions attended to. Default is 1.
        verbose (bool, optional): prints a per-layer table. Default is False.

    Returns:
        tuple: ``(num_params, macs)``

    Examples::
        >>> from ampprune.utils import compute_model_complexity
        >>> num_params, macs = compute_model_complexity(weights, context_len=140)
    """
    d_model = w.config.d_model
    total_macs = 0
    rows = []
    for i, layer in enumerate(w.layers):
        macs = _layer_macs(layer, d_model, context_len)
        total_macs += sum(macs.values())
        rows.append((i, layer.n_heads, layer.d_intermediate, sum(macs.values())))
    total_macs += d_model * w.config.vocab_size
    num_params = w.num_params()

    if verbose:
        print('  -------------------------------------------------------')
        print('  {:<6} {:>8} {:>8} {:>14}'.format('layer', 'heads', 'mlp', 'MACs/token'))
        for i, n_heads, d_intermediate, macs in rows:
            print('  {:<6} {:>8} {:>8} {:>14,}'.format(i, n_heads, d_intermediate, macs))
        print('  lm_head {:>29,}'.format(d_model * w.config.vocab_size))
        print('  -------------------------------------------------------')
        print('  Total params: {:,}  MACs/token: {:,}'.format(num_params, total_macs))

    return num_params, total_macs
