"""Greedy-decoding latency: warm-up generations untimed, then timed runs, batch size 1."""
from __future__ import absolute_import
from __future__ import division

__all__ = ['latency_bench', 'latency_pair', 'speedup', 'bench_prompt']

import time

import torch

from ampprune.exceptions import ContextOverflowError
from ampprune.models import generate
from .result import EvalResult


def bench_prompt(prompt_len, seed=0):
    """Deterministic byte-range prompt."""
    g = torch.Generator()
    g.manual_seed(int(seed))
    return torch.randint(0, 256, (int(prompt_len),), generator=g).tolist()


def _check_protocol(w, prompt_len, gen_len, runs, warmup):
    if prompt_len < 1 or gen_len < 1 or runs < 1 or warmup < 0:
        raise ValueError('invalid protocol prompt_len={} gen_len={} runs={} warmup={}'.format(
            prompt_len, gen_len, runs, warmup))
    if prompt_len + gen_len > w.config.max_seq_len:
        raise ContextOverflowError('prompt_len {} + gen_len {} exceeds max_seq_len {}'.format(
            prompt_len, gen_len, w.config.max_seq_len))


def _timed(w, prompt, gen_len):
    start = time.perf_counter()
    generate(w, prompt, gen_len, use_cache=True)
    return time.perf_counter() - start


def latency_bench(w, prompt_len=12, gen_len=128, runs=20, warmup=10, seed=0,
                  model_fingerprint=None):
    """Mean wall-clock seconds to greedily generate ``gen_len`` tokens with a KV cache.

    Returns:
        EvalResult: kind ``latency`` with the raw per-run seconds.
    """
    _check_protocol(w, prompt_len, gen_len, runs, warmup)
    prompt = bench_prompt(prompt_len, seed)
    for _ in range(warmup):
        generate(w, prompt, gen_len, use_cache=True)
    per_run = [_timed(w, prompt, gen_len) for _ in range(runs)]
    protocol = {'prompt_len': prompt_len, 'gen_len': gen_len, 'runs': runs, 'warmup': warmup}
    return EvalResult('latency', sum(per_run) / runs, protocol, model_fingerprint, per_run)


def latency_pair(dense, pruned, prompt_len=12, gen_len=128, runs=20, warmup=10, seed=0,
                 fingerprints=(None, None)):
    """Measures two models in one session, alternating dense and pruned runs.

    Returns:
        tuple: ``(dense_result, pruned_result)``.
    """
    for w in (dense, pruned):
        _check_protocol(w, prompt_len, gen_len, runs, warmup)
    prompt = bench_prompt(prompt_len, seed)
    for _ in range(warmup):
        generate(dense, prompt, gen_len, use_cache=True)
        generate(pruned, prompt, gen_len, use_cache=True)
    dense_runs, pruned_runs = [], []
    for _ in range(runs):
        dense_runs.append(_timed(dense, prompt, gen_len))
        pruned_runs.append(_timed(pruned, prompt, gen_len))
    protocol = {'prompt_len': prompt_len, 'gen_len': gen_len, 'runs': runs, 'warmup': warmup}
    return (EvalResult('latency', sum(dense_runs) / runs, protocol, fingerprints[0], dense_runs),
            EvalResult('latency', sum(pruned_runs) / runs, protocol, fingerprints[1], pruned_runs))


def _latency_value(result):
    if isinstance(result, EvalResult):
        if result.kind != 'latency':
            raise ValueError('speedup needs latency results, got {}'.format(result.kind))
        return result.value
    value = float(result)
    if not value > 0:
        raise ValueError('latency must be > 0, got {}'.format(value))
    return value


def speedup(dense, pruned):
    """``dense / pruned`` mean latency; plain seconds are accepted as well.

    Examples::
        >>> round(speedup(2.90, 2.31), 3)
        1.255
    """
    return _latency_value(dense) / _latency_value(pruned)
