from __future__ import absolute_import
from __future__ import division

__all__ = ['LayerWeights', 'TransformerWeights', 'count_params', 'init_weights']

import math
from collections import OrderedDict

import torch

from ampprune.tensor_core import STORAGE_DTYPE
from .config import ModelConfig


LAYER_TENSORS = ('attn_norm', 'Wq', 'Wk', 'Wv', 'Wo', 'mlp_norm', 'Wgate', 'Wup', 'Wdown')


class LayerWeights(object):
    """Weights of one decoder layer.

    Projections are stored input-major so that ``x @ W`` applies them: head ``n``
    owns columns ``[n*d_head, (n+1)*d_head)`` of ``Wq``/``Wk``/``Wv`` and the same row
    block of ``Wo``; MLP pair ``m`` owns column ``m`` of ``Wgate``/``Wup`` and row ``m``
    of ``Wdown``.
    """

    def __init__(self, attn_norm, Wq, Wk, Wv, Wo, mlp_norm, Wgate, Wup, Wdown, d_head):
        self.attn_norm = attn_norm
        self.Wq = Wq
        self.Wk = Wk
        self.Wv = Wv
        self.Wo = Wo
        self.mlp_norm = mlp_norm
        self.Wgate = Wgate
        self.Wup = Wup
        self.Wdown = Wdown
        self.d_head = int(d_head)
        self.validate()

    @property
    def n_heads(self):
        return self.Wq.shape[1] // self.d_head

    @property
    def d_intermediate(self):
        return self.Wgate.shape[1]

    @property
    def d_model(self):
        return self.attn_norm.shape[0]

    def expected_shapes(self):
        return expected_layer_shapes(self.d_model, self.n_heads, self.d_head, self.d_intermediate)

    def validate(self):
        d_model = self.attn_norm.shape[0]
        width = self.Wq.shape[1]
        if width < self.d_head or width % self.d_head != 0:
            raise ValueError('Wq width {} is not a positive multiple of d_head {}'.format(
                width, self.d_head))
        if self.Wgate.dim() != 2 or self.Wgate.shape[1] < 1:
            raise ValueError('Wgate must be a non-empty matrix, got {}'.format(list(self.Wgate.shape)))
        for name, shape in self.expected_shapes().items():
            actual = tuple(getattr(self, name).shape)
            if actual != shape:
                raise ValueError('{} has shape {}, expected {} (d_model={})'.format(
                    name, list(actual), list(shape), d_model))

    def tensors(self):
        return OrderedDict((name, getattr(self, name)) for name in LAYER_TENSORS)

    def map(self, fn):
        return LayerWeights(d_head=self.d_head, **{k: fn(v) for k, v in self.tensors().items()})


def expected_layer_shapes(d_model, n_heads, d_head, d_intermediate):
    width = n_heads * d_head
    return OrderedDict([
        ('attn_norm', (d_model,)),
        ('Wq', (d_model, width)),
        ('Wk', (d_model, width)),
        ('Wv', (d_model, width)),
        ('Wo', (width, d_model)),
        ('mlp_norm', (d_model,)),
        ('Wgate', (d_model, d_intermediate)),
        ('Wup', (d_model, d_intermediate)),
        ('Wdown', (d_intermediate, d_model)),
    ])


class TransformerWeights(object):
    """The full parameter set of a decoder-only transformer.

    Treated as immutable: every transformation in the package returns a new
    instance and leaves its input untouched.

    Args:
        config (ModelConfig): base configuration.
        token_embedding (torch.Tensor): vocab_size x d_model.
        layers (list): ``LayerWeights``, one per layer.
        final_norm (torch.Tensor): d_model.
        lm_head (torch.Tensor): d_model x vocab_size, untied from the embedding.
    """

    def __init__(self, config, token_embedding, layers, final_norm, lm_head):
        if not isinstance(config, ModelConfig):
            raise TypeError('config must be a ModelConfig')
        self.config = config
        self.token_embedding = token_embedding
        self.layers = list(layers)
        self.final_norm = final_norm
        self.lm_head = lm_head
        self.validate()

    def validate(self):
        c = self.config
        if len(self.layers) != c.n_layers:
            raise ValueError('expected {} layers, got {}'.format(c.n_layers, len(self.layers)))
        if tuple(self.token_embedding.shape) != (c.vocab_size, c.d_model):
            raise ValueError('token_embedding has shape {}, expected {}'.format(
                list(self.token_embedding.shape), [c.vocab_size, c.d_model]))
        if tuple(self.final_norm.shape) != (c.d_model,):
            raise ValueError('final_norm has shape {}, expected {}'.format(
                list(self.final_norm.shape), [c.d_model]))
        if tuple(self.lm_head.shape) != (c.d_model, c.vocab_size):
            raise ValueError('lm_head has shape {}, expected {}'.format(
                list(self.lm_head.shape), [c.d_model, c.vocab_size]))
        for i, layer in enumerate(self.layers):
            if layer.d_model != c.d_model or layer.d_head != c.d_head:
                raise ValueError('layer {} does not match config d_model/d_head'.format(i))
            if layer.n_heads > c.n_heads or layer.d_intermediate > c.d_intermediate:
                raise ValueError('layer {} is wider than the base config'.format(i))

    @property
    def dtype(self):
        return self.token_embedding.dtype

    def parameters(self):
        """Yields ``(canonical_name, tensor)`` in checkpoint order."""
        yield 'token_embedding', self.token_embedding
        for i, layer in enumerate(self.layers):
            for name, tensor in layer.tensors().items():
                yield 'layers.{}.{}'.format(i, name), tensor
        yield 'final_norm', self.final_norm
        yield 'lm_head', self.lm_head

    def named_tensors(self):
        return OrderedDict(self.parameters())

    def layer_dims(self):
        """Returns ``[(n_heads_l, d_intermediate_l), ...]``."""
        return [(layer.n_heads, layer.d_intermediate) for layer in self.layers]

    def num_params(self):
        return sum(t.numel() for _, t in self.parameters())

    def map(self, fn):
        return TransformerWeights(
            self.config,
            fn(self.token_embedding),
            [layer.map(fn) for layer in self.layers],
            fn(self.final_norm),
            fn(self.lm_head),
        )

    def clone(self):
        return self.map(lambda t: t.clone())

    def to(self, dtype):
        return self.map(lambda t: t.to(dtype).contiguous())

    @classmethod
    def from_named_tensors(cls, config, tensors):
        """Builds weights from a ``{canonical_name: tensor}`` mapping.

        Every canonical name must be present exactly once.
        """
        tensors = dict(tensors)
        layers = []
        for i in range(config.n_layers):
            kwargs = {name: tensors.pop('layers.{}.{}'.format(i, name)) for name in LAYER_TENSORS}
            layers.append(LayerWeights(d_head=config.d_head, **kwargs))
        weights = cls(
            config,
            tensors.pop('token_embedding'),
            layers,
            tensors.pop('final_norm'),
            tensors.pop('lm_head'),
        )
        if tensors:
            raise KeyError('Unexpected tensors: {}'.format(sorted(tensors)))
        return weights


def count_params(config, layer_dims=None):
    """Counts parameters exactly from shapes.

    Args:
        config (ModelConfig): model configuration.
        layer_dims (list, optional): ``[(n_heads_l, d_intermediate_l), ...]``; the base
            dims of ``config`` are used when omitted.

    Returns:
        tuple: ``(total, prunable)`` where prunable counts the per-layer
        Wq/Wk/Wv/Wo/Wgate/Wup/Wdown entries.
    """
    if layer_dims is None:
        layer_dims = [(config.n_heads, config.d_intermediate)] * config.n_layers
    d = config.d_model
    total = 2 * config.vocab_size * d + d
    prunable = 0
    for n_heads, d_intermediate in layer_dims:
        layer_prunable = 4 * d * n_heads * config.d_head + 3 * d * d_intermediate
        prunable += layer_prunable
        total += layer_prunable + 2 * d
    return total, prunable


def init_weights(config, seed=0):
    """Deterministic seeded initialization.

    Matrices are drawn from N(0, 1) and scaled by ``1/sqrt(fan_in)``, where fan_in is
    the number of rows (the input side of ``x @ W``); norm gains start at 1.

    Args:
        config (ModelConfig): model configuration.
        seed (int, optional): seed of the private generator. Default is 0.

    Examples::
        >>> from ampprune.models import build_config, init_weights
        >>> w = init_weights(build_config('tiny'), seed=1)
    """
    g = torch.Generator()
    g.manual_seed(int(seed))

    def matrix(rows, cols):
        w = torch.randn(rows, cols, generator=g, dtype=STORAGE_DTYPE)
        return w * (1. / math.sqrt(rows))

    def ones(n):
        return torch.ones(n, dtype=STORAGE_DTYPE)

    d = config.d_model
    width = config.n_heads * config.d_head
    token_embedding = matrix(config.vocab_size, d)
    layers = []
    for _ in range(config.n_layers):
        layers.append(LayerWeights(
            attn_norm=ones(d),
            Wq=matrix(d, width),
            Wk=matrix(d, width),
            Wv=matrix(d, width),
            Wo=matrix(width, d),
            mlp_norm=ones(d),
            Wgate=matrix(d, config.d_intermediate),
            Wup=matrix(d, config.d_intermediate),
            Wdown=matrix(config.d_intermediate, d),
            d_head=config.d_head,
        ))
    return TransformerWeights(config, token_embedding, layers, ones(d), matrix(d, config.vocab_size))
