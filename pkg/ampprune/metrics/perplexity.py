from __future__ import absolute_import
from __future__ import division

__all__ = ['perplexity', 'chunk_nll']

import math
from concurrent.futures import ThreadPoolExecutor

import torch

from ampprune.data import TokenWindowDataset
from ampprune.losses import CrossEntropyLoss
from ampprune.models import forward
from .result import EvalResult


def chunk_nll(w, chunk, criterion=None):
    """Summed next-token NLL of one chunk: positions ``0..L-1`` predict ``1..L``."""
    if criterion is None:
        criterion = CrossEntropyLoss(w.config.vocab_size)
    with torch.no_grad():
        logits = forward(w, chunk[:-1])
    return criterion.nll(logits, chunk[1:])


def perplexity(w, corpus, chunk_len=512, workers=1, model_fingerprint=None):
    """Perplexity over non-overlapping chunks.

    The stream is cut into windows of ``chunk_len + 1`` tokens with stride
    ``chunk_len``: each window runs ``chunk_len`` inputs and scores their next
    tokens, so every target is scored exactly once and a trailing partial chunk is
    dropped. PPL is ``exp`` of the mean per-token NLL over all chunks.

    Args:
        w (TransformerWeights): model weights.
        corpus (torch.LongTensor): token stream of at least ``chunk_len + 1`` tokens.
        chunk_len (int, optional): scored positions per chunk. Default is 512.
        workers (int, optional): chunks evaluated concurrently; the reduction runs in
            chunk order. Default is 1.
        model_fingerprint (str, optional): recorded in the result.

    Returns:
        EvalResult: kind ``perplexity``.
    """
    corpus = torch.as_tensor(corpus, dtype=torch.long).reshape(-1)
    if corpus.numel() < chunk_len + 1:
        raise ValueError('corpus of {} tokens is too short for one chunk of {} (+1)'.format(
            corpus.numel(), chunk_len))
    chunks = TokenWindowDataset(corpus, chunk_len)
    criterion = CrossEntropyLoss(w.config.vocab_size)
    indices = range(len(chunks))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            nlls = list(pool.map(lambda i: chunk_nll(w, chunks[i], criterion), indices))
    else:
        nlls = [chunk_nll(w, chunks[i], criterion) for i in indices]
    mean_nll = math.fsum(nlls) / (len(chunks) * chunk_len)
    return EvalResult('perplexity', math.exp(mean_nll), {'chunk_len': chunk_len},
                      model_fingerprint=model_fingerprint)
