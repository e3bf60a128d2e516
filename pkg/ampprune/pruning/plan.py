from __future__ import absolute_import
from __future__ import print_function
from __future__ import division

__all__ = ['PruningPlan', 'STRATEGIES', 'RATIO_BASES', 'per_layer_count', 'build_plan',
           'save_plan', 'load_plan', 'ratio_from_counts']

import math

import torch

from ampprune.exceptions import InfeasibleRatioError
from ampprune.models import ModelConfig, count_params
from ampprune.utils import read_json, write_json

PLAN_VERSION = 1
STRATEGIES = ('amp', 'random', 'reversed')
RATIO_BASES = ('per_layer', 'overall')


def _normalize_basis(basis):
    basis = basis.replace('-', '_')
    if basis not in RATIO_BASES:
        raise KeyError('Unknown ratio basis: {}. Must be one of {}'.format(basis, list(RATIO_BASES)))
    return basis


def ratio_from_counts(config, original_dims, pruned_dims, exclude_embeddings=False):
    """``1 - Q/P`` from shapes alone.

    With ``exclude_embeddings`` the token embedding and LM head are left out of both
    counts.
    """
    total_p, _ = count_params(config, original_dims)
    total_q, _ = count_params(config, pruned_dims)
    if exclude_embeddings:
        embed = 2 * config.vocab_size * config.d_model
        total_p -= embed
        total_q -= embed
    return 1. - total_q / total_p


class PruningPlan(object):
    """Which heads and MLP pairs to remove from each layer.

    Args:
        strategy (str): ``amp``, ``random`` or ``reversed``.
        ratio_basis (str): ``per_layer`` or ``overall``.
        requested_ratio (float): ratio asked for.
        seed (int or None): seed of the random strategy.
        heads (list): per layer, sorted head indices to remove.
        mlp (list): per layer, sorted MLP pair indices to remove.
        layer_dims (list): ``[(n_heads_l, d_intermediate_l), ...]`` of the source model.
        config (ModelConfig): base config of the source model.
        model_fingerprint (str, optional): fingerprint of the source model.
    """

    def __init__(self, strategy, ratio_basis, requested_ratio, seed, heads, mlp, layer_dims,
                 config, model_fingerprint=None):
        if strategy not in STRATEGIES:
            raise KeyError('Unknown strategy: {}. Must be one of {}'.format(strategy, list(STRATEGIES)))
        self.strategy = strategy
        self.ratio_basis = _normalize_basis(ratio_basis)
        self.requested_ratio = float(requested_ratio)
        self.seed = seed
        self.heads = [sorted(int(i) for i in layer) for layer in heads]
        self.mlp = [sorted(int(i) for i in layer) for layer in mlp]
        self.layer_dims = [tuple(int(x) for x in d) for d in layer_dims]
        self.config = config
        self.model_fingerprint = model_fingerprint
        self.validate()

    def validate(self):
        if not (len(self.heads) == len(self.mlp) == len(self.layer_dims)):
            raise ValueError('plan covers {} head layers and {} MLP layers for {} model layers'.format(
                len(self.heads), len(self.mlp), len(self.layer_dims)))
        for i, (n_heads, d_intermediate) in enumerate(self.layer_dims):
            for kind, removed, n in (('head', self.heads[i], n_heads),
                                     ('mlp', self.mlp[i], d_intermediate)):
                if len(set(removed)) != len(removed):
                    raise ValueError('layer {} removes a {} index twice'.format(i, kind))
                if removed and (removed[0] < 0 or removed[-1] >= n):
                    raise ValueError('layer {} {} index out of range [0, {})'.format(i, kind, n))
                if len(removed) >= n:
                    raise ValueError('layer {} would lose every {}'.format(i, kind))

    def pruned_dims(self):
        return [(n_heads - len(h), d_intermediate - len(m))
                for (n_heads, d_intermediate), h, m in zip(self.layer_dims, self.heads, self.mlp)]

    @property
    def achieved_overall_ratio(self):
        return ratio_from_counts(self.config, self.layer_dims, self.pruned_dims())

    @property
    def achieved_non_embedding_ratio(self):
        return ratio_from_counts(self.config, self.layer_dims, self.pruned_dims(),
                                 exclude_embeddings=True)

    def is_empty(self):
        return not any(self.heads) and not any(self.mlp)

    def to_dict(self):
        return {
            'version': PLAN_VERSION,
            'strategy': self.strategy,
            'ratio_basis': self.ratio_basis,
            'requested_ratio': self.requested_ratio,
            'seed': self.seed,
            'achieved_overall_ratio': self.achieved_overall_ratio,
            'achieved_non_embedding_ratio': self.achieved_non_embedding_ratio,
            'model_fingerprint': self.model_fingerprint,
            'config': self.config.to_dict(),
            'layer_dims': [list(d) for d in self.layer_dims],
            'layers': [{'heads': h, 'mlp': m} for h, m in zip(self.heads, self.mlp)],
        }

    @classmethod
    def from_dict(cls, d):
        if d.get('version') != PLAN_VERSION:
            raise ValueError('unsupported pruning plan version: {}'.format(d.get('version')))
        return cls(
            d['strategy'], d['ratio_basis'], d['requested_ratio'], d['seed'],
            [layer['heads'] for layer in d['layers']],
            [layer['mlp'] for layer in d['layers']],
            d['layer_dims'], ModelConfig.from_dict(d['config']),
            model_fingerprint=d.get('model_fingerprint'),
        )

    def __repr__(self):
        return 'PruningPlan(strategy={}, basis={}, requested={:.4f}, achieved={:.4f})'.format(
            self.strategy, self.ratio_basis, self.requested_ratio, self.achieved_overall_ratio)


def per_layer_count(n_items, fraction):
    """Items to remove: ``floor(n_items * fraction + 0.5)`` clamped to ``[0, n_items - 1]``.

    Examples::
        >>> per_layer_count(32, 0.30)
        10
        >>> per_layer_count(4, 0.99)
        3
    """
    if n_items < 1:
        raise ValueError('n_items must be >= 1, got {}'.format(n_items))
    if not 0. <= fraction < 1.:
        raise ValueError('fraction must be in [0, 1), got {}'.format(fraction))
    count = int(math.floor(n_items * fraction + 0.5))
    return max(0, min(count, n_items - 1))


def _select(scores, count, strategy, generator):
    n = scores.numel()
    if count == 0:
        return []
    if strategy == 'random':
        return sorted(torch.randperm(n, generator=generator)[:count].tolist())
    values = scores.tolist()
    if strategy == 'amp':
        order = sorted(range(n), key=lambda i: (values[i], i))
    else:
        order = sorted(range(n), key=lambda i: (-values[i], i))
    return sorted(order[:count])


def _max_ratio(config, layer_dims):
    keep_one = [(1, 1)] * len(layer_dims)
    return ratio_from_counts(config, layer_dims, keep_one)


def build_plan(report, ratio, config, basis='per_layer', strategy='amp', seed=None,
               mlp_ratio=None):
    """Turns an importance report into a pruning plan.

    ``amp`` removes the lowest-scoring heads and MLP pairs of every layer,
    ``reversed`` the highest-scoring, ``random`` a seeded uniform sample without
    replacement. On equal scores the lower index is removed first.

    With ``basis='overall'`` the per-layer fraction is ``ratio * P / P_prunable`` so
    that removed parameters over all parameters approximate ``ratio``.

    Args:
        report (ImportanceReport): scores of the model to prune.
        ratio (float): requested ratio.
        config (ModelConfig): base config of the scored model.
        basis (str, optional): ``per_layer`` or ``overall``. Default is ``per_layer``.
        strategy (str, optional): ``amp``, ``random`` or ``reversed``. Default is ``amp``.
        seed (int, optional): required by the random strategy.
        mlp_ratio (float, optional): separate per-layer MLP fraction; per-layer basis only.

    Returns:
        PruningPlan

    Raises:
        InfeasibleRatioError: ``ratio`` cannot be reached while keeping one head and one
            MLP pair in every layer.
    """
    basis = _normalize_basis(basis)
    if strategy not in STRATEGIES:
        raise KeyError('Unknown strategy: {}. Must be one of {}'.format(strategy, list(STRATEGIES)))
    if strategy == 'random' and seed is None:
        raise ValueError('the random strategy requires a seed')
    if len(report.head_scores) != config.n_layers:
        raise ValueError('report has {} layers, config has {}'.format(
            len(report.head_scores), config.n_layers))
    ratio = float(ratio)
    if ratio < 0:
        raise ValueError('ratio must be >= 0, got {}'.format(ratio))

    layer_dims = report.layer_dims()
    max_ratio = _max_ratio(config, layer_dims)
    if basis == 'overall':
        if mlp_ratio is not None:
            raise ValueError('mlp_ratio is only supported with the per_layer basis')
        if ratio > max_ratio:
            raise InfeasibleRatioError(ratio, max_ratio)
        total, prunable = count_params(config, layer_dims)
        head_fraction = mlp_fraction = ratio * total / prunable
    else:
        if ratio >= 1:
            raise InfeasibleRatioError(ratio, max_ratio)
        head_fraction = ratio
        mlp_fraction = ratio if mlp_ratio is None else float(mlp_ratio)
        if not 0. <= mlp_fraction < 1.:
            raise InfeasibleRatioError(mlp_fraction, max_ratio)

    generator = None
    if strategy == 'random':
        generator = torch.Generator()
        generator.manual_seed(int(seed))
    heads, mlp = [], []
    for head_scores, mlp_scores in zip(report.head_scores, report.mlp_scores):
        heads.append(_select(head_scores, per_layer_count(head_scores.numel(), head_fraction),
                             strategy, generator))
        mlp.append(_select(mlp_scores, per_layer_count(mlp_scores.numel(), mlp_fraction),
                           strategy, generator))

    return PruningPlan(strategy, basis, ratio, seed if strategy == 'random' else None,
                       heads, mlp, layer_dims, config, model_fingerprint=report.model_fingerprint)


def save_plan(plan, fpath):
    write_json(plan.to_dict(), fpath)
    print('Pruning plan saved to "{}"'.format(fpath))


def load_plan(fpath):
    return PruningPlan.from_dict(read_json(fpath))
