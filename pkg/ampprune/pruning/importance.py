"""Activation-magnitude importance of attention heads and MLP neuron pairs.

A head is scored by the l1 norm of its additive contribution ``h_n @ W_n`` to the
attention output, per token. An MLP pair ``m`` is scored by the token-averaged
absolute value of the m-th coordinate of the Down-projection input
``SiLU(x Wgate) * (x Wup)``. Per-sample scores are averaged with equal weight
per sample.
"""
from __future__ import absolute_import
from __future__ import print_function
from __future__ import division

__all__ = ['ImportanceReport', 'score_heads_layer', 'score_mlp_layer', 'compute_importance',
           'save_report', 'load_report', 'rank_heads']

from concurrent.futures import ThreadPoolExecutor

import torch

from ampprune import tensor_core as tc
from ampprune.exceptions import CalibrationError
from ampprune.models import forward
from ampprune.utils import fingerprint, read_json, write_json

REPORT_VERSION = 1


class ImportanceReport(object):
    """Per-layer head and MLP scores of one model.

    Args:
        model_fingerprint (str): fingerprint of the scored weights.
        num_samples (int): calibration samples scored.
        total_tokens (int): calibration tokens scored.
        head_scores (list): one float64 tensor of length ``n_heads_l`` per layer.
        mlp_scores (list): one float64 tensor of length ``d_intermediate_l`` per layer.
    """

    def __init__(self, model_fingerprint, num_samples, total_tokens, head_scores, mlp_scores):
        self.model_fingerprint = model_fingerprint
        self.num_samples = int(num_samples)
        self.total_tokens = int(total_tokens)
        self.head_scores = [torch.as_tensor(s, dtype=torch.float64) for s in head_scores]
        self.mlp_scores = [torch.as_tensor(s, dtype=torch.float64) for s in mlp_scores]
        self.validate()

    def validate(self):
        if len(self.head_scores) != len(self.mlp_scores):
            raise ValueError('report has {} head layers but {} MLP layers'.format(
                len(self.head_scores), len(self.mlp_scores)))
        for i, (heads, mlp) in enumerate(zip(self.head_scores, self.mlp_scores)):
            for kind, scores in (('head', heads), ('mlp', mlp)):
                if scores.dim() != 1 or scores.numel() < 1:
                    raise ValueError('layer {} {} scores must be a non-empty vector'.format(i, kind))
                if not torch.isfinite(scores).all() or (scores < 0).any():
                    raise ValueError('layer {} {} scores must be finite and >= 0'.format(i, kind))

    @property
    def num_layers(self):
        return len(self.head_scores)

    def layer_dims(self):
        return [(h.numel(), m.numel()) for h, m in zip(self.head_scores, self.mlp_scores)]

    def check_dims(self, layer_dims):
        """Raises ``ValueError`` unless the report matches ``[(n_heads_l, d_i_l), ...]``."""
        if [tuple(d) for d in layer_dims] != self.layer_dims():
            raise ValueError('report dims {} do not match model dims {}'.format(
                self.layer_dims(), [tuple(d) for d in layer_dims]))

    def to_dict(self):
        return {
            'version': REPORT_VERSION,
            'model_fingerprint': self.model_fingerprint,
            'num_samples': self.num_samples,
            'total_tokens': self.total_tokens,
            'layers': [{'head_scores': h.tolist(), 'mlp_scores': m.tolist()}
                       for h, m in zip(self.head_scores, self.mlp_scores)],
        }

    @classmethod
    def from_dict(cls, d):
        if d.get('version') != REPORT_VERSION:
            raise ValueError('unsupported importance report version: {}'.format(d.get('version')))
        return cls(
            d['model_fingerprint'], d['num_samples'], d['total_tokens'],
            [layer['head_scores'] for layer in d['layers']],
            [layer['mlp_scores'] for layer in d['layers']],
        )


def score_heads_layer(contribs):
    """Scores each head by ``l1_norm(contrib) / S``.

    Args:
        contribs (list): per-head S x d_model contributions of one sample.

    Returns:
        torch.Tensor: one score per head.
    """
    if len(contribs) == 0:
        raise ValueError('empty contribution list')
    return torch.stack([tc.l1_norm(c) / c.shape[0] for c in contribs])


def score_mlp_layer(down_input):
    """``score[m] = (1/S) * sum_s |down_input[s, m]|``"""
    tc.check_tensor(down_input, 'down_input')
    if down_input.dim() != 2:
        raise ValueError('down_input must be S x d_intermediate, got {}'.format(
            list(down_input.shape)))
    return tc.l1_norm(down_input, dim=0) / down_input.shape[0]


def _check_sample(w, index, sample):
    ids = torch.as_tensor(sample, dtype=torch.long).reshape(-1)
    if ids.numel() < 1:
        raise CalibrationError('empty sample', index=index)
    if ids.numel() > w.config.max_seq_len:
        raise CalibrationError('{} tokens exceed max_seq_len {}'.format(
            ids.numel(), w.config.max_seq_len), index=index)
    if ids.min().item() < 0 or ids.max().item() >= w.config.vocab_size:
        raise CalibrationError('token id out of range for vocab_size {}'.format(
            w.config.vocab_size), index=index)
    return ids


def _score_sample(w, ids):
    heads = [None] * len(w.layers)
    mlp = [None] * len(w.layers)

    def hook(i, contribs, down_input):
        heads[i] = score_heads_layer(contribs)
        mlp[i] = score_mlp_layer(down_input)

    with torch.no_grad():
        forward(w, ids, hook=hook)
    return heads, mlp


def compute_importance(w, calib, workers=1, model_fingerprint=None, verbose=False):
    """Scores every head and MLP pair over a calibration set.

    One decomposed forward pass runs per sample. Samples may be scored on a
    thread pool; per-sample results are summed in sample order, so the report
    does not depend on ``workers``.

    Args:
        w (TransformerWeights): model weights, read only.
        calib (list): token sequences, each within ``max_seq_len``.
        workers (int, optional): scoring threads. Default is 1.
        model_fingerprint (str, optional): fingerprint of ``w``; computed when omitted.
        verbose (bool, optional): prints the per-layer head ranking.

    Returns:
        ImportanceReport

    Raises:
        CalibrationError: empty set, or a sample that is empty, too long or out of
            vocabulary (the error carries the sample index).
    """
    if len(calib) == 0:
        raise CalibrationError('calibration set is empty')
    if workers < 1:
        raise ValueError('workers must be >= 1, got {}'.format(workers))
    samples = [_check_sample(w, i, s) for i, s in enumerate(calib)]

    if workers == 1:
        results = [_score_sample(w, ids) for ids in samples]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda ids: _score_sample(w, ids), samples))

    n = len(samples)
    head_sums = [torch.zeros(layer.n_heads, dtype=torch.float64) for layer in w.layers]
    mlp_sums = [torch.zeros(layer.d_intermediate, dtype=torch.float64) for layer in w.layers]
    for heads, mlp in results:
        for i in range(len(w.layers)):
            head_sums[i] += heads[i].to(torch.float64)
            mlp_sums[i] += mlp[i].to(torch.float64)

    if model_fingerprint is None:
        model_fingerprint = fingerprint(w)
    report = ImportanceReport(
        model_fingerprint, n, sum(ids.numel() for ids in samples),
        [s / n for s in head_sums], [s / n for s in mlp_sums],
    )
    if verbose:
        for i in range(report.num_layers):
            print('=> layer {} heads by ascending importance: {}'.format(i, rank_heads(report, i)))
    return report


def rank_heads(report, layer):
    """Head indices of ``layer`` sorted by ascending score, lower index first on ties."""
    scores = report.head_scores[layer].tolist()
    return sorted(range(len(scores)), key=lambda n: (scores[n], n))


def save_report(report, fpath):
    write_json(report.to_dict(), fpath)
    print('Importance report saved to "{}"'.format(fpath))


def load_report(fpath):
    return ImportanceReport.from_dict(read_json(fpath))
