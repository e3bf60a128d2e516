"""Coherence check: pruning by importance must hurt least, pruning against it most.

From one importance report the harness builds an ``amp`` plan, a ``reversed`` plan
and one ``random`` plan per seed, applies each without recovery and compares
perplexities. The check passes when ``PPL(amp) < median PPL(random) < PPL(reversed)``.
"""
from __future__ import absolute_import
from __future__ import print_function
from __future__ import division

__all__ = ['CoherenceReport', 'coherence_check']

import numpy as np

from ampprune.exceptions import BaselineNotBeatenError
from ampprune.metrics import perplexity, format_table
from ampprune.pruning import compute_importance, build_plan, apply_plan
from ampprune.utils import fingerprint

# relative margin below vocab_size a dense model must reach
BASELINE_RTOL = 1e-3


class CoherenceReport(object):
    """Perplexities of the dense model and of every pruned variant.

    Args:
        dense (float): dense perplexity.
        amp (float): perplexity after pruning the least important structures.
        random (dict): seed -> perplexity after random pruning.
        reversed_ (float): perplexity after pruning the most important structures.
        ratio (float): requested ratio.
        achieved_ratio (float): achieved overall ratio of the amp plan.
        model_fingerprint (str): fingerprint of the dense model.
    """

    def __init__(self, dense, amp, random, reversed_, ratio, achieved_ratio, model_fingerprint,
                 chunk_len):
        self.dense = float(dense)
        self.amp = float(amp)
        self.random = {int(k): float(v) for k, v in random.items()}
        self.reversed = float(reversed_)
        self.ratio = float(ratio)
        self.achieved_ratio = float(achieved_ratio)
        self.model_fingerprint = model_fingerprint
        self.chunk_len = int(chunk_len)

    @property
    def random_median(self):
        return float(np.median(list(self.random.values())))

    @property
    def passed(self):
        return self.amp < self.random_median < self.reversed

    def verdict(self):
        return '{}: PPL(amp) {:.4f} {} median PPL(random) {:.4f} {} PPL(reversed) {:.4f}'.format(
            'PASS' if self.passed else 'FAIL',
            self.amp, '<' if self.amp < self.random_median else '>=',
            self.random_median, '<' if self.random_median < self.reversed else '>=',
            self.reversed)

    def rows(self):
        rows = [('dense', 'ppl', self.dense), ('amp', 'ppl', self.amp)]
        for seed in sorted(self.random):
            rows.append(('random (seed {})'.format(seed), 'ppl', self.random[seed]))
        rows.append(('random (median)', 'ppl', self.random_median))
        rows.append(('reversed', 'ppl', self.reversed))
        return rows

    def format(self):
        return format_table(self.rows(), headers=('model', 'metric', 'value')) + '\n' + self.verdict()

    def to_dict(self):
        return {
            'model_fingerprint': self.model_fingerprint,
            'ratio': self.ratio,
            'achieved_overall_ratio': self.achieved_ratio,
            'chunk_len': self.chunk_len,
            'dense': self.dense,
            'amp': self.amp,
            'random': {str(k): v for k, v in sorted(self.random.items())},
            'random_median': self.random_median,
            'reversed': self.reversed,
            'passed': self.passed,
            'verdict': self.verdict(),
        }


def coherence_check(w, calib, corpus, ratio=0.25, seeds=(1, 2, 3), chunk_len=512,
                    basis='per_layer', workers=1, report=None, verbose=True):
    """Runs the coherence check on a trained model.

    Args:
        w (TransformerWeights): trained dense model.
        calib (list): calibration token sequences.
        corpus (torch.LongTensor): evaluation token stream.
        ratio (float, optional): pruning ratio. Default is 0.25.
        seeds (sequence, optional): seeds of the random plans. Default is (1, 2, 3).
        chunk_len (int, optional): perplexity chunk length, capped by ``max_seq_len``.
        basis (str, optional): ratio basis. Default is ``per_layer``.
        workers (int, optional): scoring and perplexity threads. Default is 1.
        report (ImportanceReport, optional): reuse an existing report.

    Returns:
        CoherenceReport

    Raises:
        BaselineNotBeatenError: the dense model does not beat uniform prediction.
    """
    if not seeds:
        raise ValueError('coherence_check needs at least one random seed')
    chunk_len = min(chunk_len, w.config.max_seq_len)
    digest = fingerprint(w)

    def ppl(model):
        return perplexity(model, corpus, chunk_len=chunk_len, workers=workers).value

    dense = ppl(w)
    if not dense < w.config.vocab_size * (1. - BASELINE_RTOL):
        raise BaselineNotBeatenError(
            'dense perplexity {:.4f} does not beat the uniform baseline {} by {:g}'.format(
                dense, w.config.vocab_size, BASELINE_RTOL))
    if verbose:
        print('=> Dense perplexity {:.4f}'.format(dense))
    if report is None:
        report = compute_importance(w, calib, workers=workers, model_fingerprint=digest)

    def pruned_ppl(strategy, seed=None):
        plan = build_plan(report, ratio, w.config, basis=basis, strategy=strategy, seed=seed)
        value = ppl(apply_plan(w, plan))
        if verbose:
            print('=> {} (seed {}): achieved ratio {:.4f}, perplexity {:.4f}'.format(
                strategy, seed, plan.achieved_overall_ratio, value))
        return plan, value

    amp_plan, amp = pruned_ppl('amp')
    random = {seed: pruned_ppl('random', seed)[1] for seed in seeds}
    _, reversed_ = pruned_ppl('reversed')
    result = CoherenceReport(dense, amp, random, reversed_, ratio, amp_plan.achieved_overall_ratio,
                             digest, chunk_len)
    if verbose:
        print(result.format())
    return result
