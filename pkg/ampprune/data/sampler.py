from __future__ import absolute_import
from __future__ import division

__all__ = ['build_train_sampler']

import torch
from torch.utils.data.sampler import RandomSampler, SequentialSampler


def build_train_sampler(data_source, train_sampler='RandomSampler', seed=0):
    """Builds a training sampler with its own seeded generator.

    The generator lives as long as the sampler, so successive epochs draw
    different but reproducible permutations.

    Args:
        data_source (Dataset): windows to sample from.
        train_sampler (str): ``RandomSampler`` or ``SequentialSampler``.
        seed (int): seed of the sampler generator.
    """
    if train_sampler == 'RandomSampler':
        g = torch.Generator()
        g.manual_seed(int(seed))
        return RandomSampler(data_source, generator=g)
    if train_sampler == 'SequentialSampler':
        return SequentialSampler(data_source)
    raise KeyError('Unknown sampler: {}. Must be one of {}'.format(
        train_sampler, ['RandomSampler', 'SequentialSampler']))
