from __future__ import absolute_import

from .config import ModelConfig
from .weights import LayerWeights, TransformerWeights, count_params, init_weights
from .llama import (
    rms_norm, attention_head, mha_standard, mha_decomposed, swiglu_mlp,
    forward, KVCache, generate, greedy_argmax
)
from .backprop import loss_and_grads


__model_factory = {
    # gradient-check size: every parameter group checked by finite differences
    'micro': dict(vocab_size=257, d_model=8, n_layers=1, n_heads=2, d_head=4,
                  d_intermediate=16, max_seq_len=32),
    'tiny': dict(vocab_size=257, d_model=32, n_layers=2, n_heads=4, d_head=8,
                 d_intermediate=86, max_seq_len=128),
    # desk-scale model for the coherence, recovery and latency experiments
    'toy': dict(vocab_size=257, d_model=128, n_layers=4, n_heads=4, d_head=32,
                d_intermediate=344, max_seq_len=512),
}


def show_avai_models():
    """Displays available model presets.

    Examples::
        >>> from ampprune import models
        >>> models.show_avai_models()
    """
    print(list(__model_factory.keys()))


def build_config(name, **overrides):
    """A function wrapper for building a model configuration from a preset.

    Args:
        name (str): preset name, one of ``micro``, ``tiny``, ``toy``.
        overrides: ModelConfig fields replacing the preset values.

    Returns:
        ModelConfig

    Examples::
        >>> from ampprune import models
        >>> config = models.build_config('toy', max_seq_len=256)
    """
    avai_models = list(__model_factory.keys())
    if name not in avai_models:
        raise KeyError('Unknown model: {}. Must be one of {}'.format(name, avai_models))
    kwargs = dict(__model_factory[name])
    kwargs.update(overrides)
    return ModelConfig(**kwargs)
