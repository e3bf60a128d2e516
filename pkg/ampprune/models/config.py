from __future__ import absolute_import
from __future__ import division

__all__ = ['ModelConfig']


class ModelConfig(object):
    """Architectural hyperparameters of a LLaMA-style decoder.

    ``n_heads`` and ``d_intermediate`` describe the base (unpruned) model; a pruned
    layer may carry fewer heads or MLP pairs, which its weights record.

    Args:
        vocab_size (int): number of token ids. Default is 257 (bytes plus BOS).
        d_model (int): hidden size.
        n_layers (int): number of decoder layers.
        n_heads (int): attention heads per layer.
        d_head (int): per-head width, must be even for RoPE pair rotation.
        d_intermediate (int): SwiGLU intermediate size.
        max_seq_len (int): longest sequence a forward pass accepts.
        rms_norm_eps (float, optional): RMSNorm epsilon. Default is 1e-5.
        rope_theta (float, optional): RoPE base. Default is 10000.
    """
    fields = ('vocab_size', 'd_model', 'n_layers', 'n_heads', 'd_head',
              'd_intermediate', 'max_seq_len', 'rms_norm_eps', 'rope_theta')

    def __init__(self, vocab_size=257, d_model=128, n_layers=4, n_heads=4, d_head=32,
                 d_intermediate=344, max_seq_len=512, rms_norm_eps=1e-5, rope_theta=10000.):
        self.vocab_size = int(vocab_size)
        self.d_model = int(d_model)
        self.n_layers = int(n_layers)
        self.n_heads = int(n_heads)
        self.d_head = int(d_head)
        self.d_intermediate = int(d_intermediate)
        self.max_seq_len = int(max_seq_len)
        self.rms_norm_eps = float(rms_norm_eps)
        self.rope_theta = float(rope_theta)
        self.validate()

    def validate(self):
        for name in ('vocab_size', 'd_model', 'n_layers', 'n_heads', 'd_head',
                     'd_intermediate', 'max_seq_len'):
            if getattr(self, name) < 1:
                raise ValueError('{} must be >= 1, got {}'.format(name, getattr(self, name)))
        if self.d_model != self.n_heads * self.d_head:
            raise ValueError('d_model ({}) must equal n_heads * d_head ({} * {})'.format(
                self.d_model, self.n_heads, self.d_head))
        if self.d_head % 2 != 0:
            raise ValueError('d_head must be even for rotary embeddings, got {}'.format(self.d_head))
        if not self.rms_norm_eps > 0:
            raise ValueError('rms_norm_eps must be > 0, got {}'.format(self.rms_norm_eps))
        if not self.rope_theta > 0:
            raise ValueError('rope_theta must be > 0, got {}'.format(self.rope_theta))

    def to_dict(self):
        return {name: getattr(self, name) for name in self.fields}

    @classmethod
    def from_dict(cls, d):
        unknown = set(d) - set(cls.fields)
        if unknown:
            raise KeyError('Unknown model config keys: {}'.format(sorted(unknown)))
        return cls(**d)

    def __eq__(self, other):
        return isinstance(other, ModelConfig) and self.to_dict() == other.to_dict()

    def __ne__(self, other):
        return not self.__eq__(other)

    def __repr__(self):
        return 'ModelConfig({})'.format(', '.join(
            '{}={}'.format(name, getattr(self, name)) for name in self.fields))
