from __future__ import absolute_import
from __future__ import print_function
from __future__ import division

__all__ = ['TokenWindowDataset', 'load_corpus', 'load_calibration']

import io
import warnings

import numpy as np
import torch
from torch.utils.data import Dataset

from ampprune.exceptions import CalibrationError
from .tokenizer import ByteTokenizer


class TokenWindowDataset(Dataset):
    """Non-overlapping windows over a token stream.

    Item ``i`` holds ``seq_len + 1`` tokens starting at ``i * seq_len``: the first
    ``seq_len`` are model inputs and the last ``seq_len`` are their next-token
    targets, so consecutive windows share exactly one boundary token and every
    target position is used once. A trailing partial window is dropped.

    Args:
        tokens (torch.LongTensor): 1-D token stream.
        seq_len (int): input length per window.
    """

    def __init__(self, tokens, seq_len):
        self.tokens = torch.as_tensor(tokens, dtype=torch.long).reshape(-1)
        self.seq_len = int(seq_len)
        if self.seq_len < 1:
            raise ValueError('seq_len must be >= 1, got {}'.format(self.seq_len))
        if self.tokens.numel() < self.seq_len + 1:
            raise ValueError('token stream of {} tokens is shorter than one window of {}'.format(
                self.tokens.numel(), self.seq_len + 1))

    def __len__(self):
        return (self.tokens.numel() - 1) // self.seq_len

    def __getitem__(self, index):
        if not 0 <= index < len(self):
            raise IndexError('window {} out of range [0, {})'.format(index, len(self)))
        start = index * self.seq_len
        return self.tokens[start:start + self.seq_len + 1]


def load_corpus(path):
    """Reads a whole file as a byte-level token stream.

    Returns:
        torch.LongTensor: 1-D ids; empty for an empty file.
    """
    with open(path, 'rb') as f:
        data = f.read()
    return torch.from_numpy(np.frombuffer(data, dtype=np.uint8).astype(np.int64))


def load_calibration(path, max_samples=50, max_len=512, seed=0):
    """Loads a calibration set, one sample per non-empty UTF-8 line.

    Lines are tokenized byte-wise and truncated to ``max_len``. When the file has more
    than ``max_samples`` lines a seeded uniform subsample without replacement is
    taken, kept in file order.

    Returns:
        list: token id lists.

    Raises:
        CalibrationError: the file holds no non-empty line.
    """
    if max_samples < 1:
        raise ValueError('max_samples must be >= 1, got {}'.format(max_samples))
    if max_len < 1:
        raise ValueError('max_len must be >= 1, got {}'.format(max_len))
    tokenizer = ByteTokenizer()
    with io.open(path, 'r', encoding='utf-8', newline='') as f:
        lines = [line.rstrip('\r\n') for line in f]
    lines = [line for line in lines if line.strip()]
    if not lines:
        raise CalibrationError('calibration file "{}" has no non-empty lines'.format(path))

    if len(lines) < max_samples:
        warnings.warn('calibration file "{}" has {} lines, fewer than the {} requested; '
                      'using all of them'.format(path, len(lines), max_samples))
        chosen = range(len(lines))
    else:
        rng = np.random.RandomState(seed)
        chosen = sorted(rng.choice(len(lines), size=max_samples, replace=False).tolist())

    return [tokenizer.encode(lines[i])[:max_len] for i in chosen]
