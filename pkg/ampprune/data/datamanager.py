from __future__ import absolute_import
from __future__ import print_function
from __future__ import division

__all__ = ['TextDataManager']

import torch

from .datasets import TokenWindowDataset
from .sampler import build_train_sampler


class TextDataManager(object):
    r"""Feeds fixed-length token windows for training.

    Args:
        corpus (torch.LongTensor): 1-D training token stream.
        seq_len (int): input tokens per window.
        batch_tokens (int): tokens per optimization step; each batch holds
            ``max(1, batch_tokens // seq_len)`` windows.
        seed (int, optional): sampler seed. Default is 0.
        workers (int, optional): DataLoader workers. Default is 0. Batch order is
            fixed by the sampler whatever the worker count.
        train_sampler (str, optional): sampler name. Default is ``RandomSampler``.
        eval_windows (int, optional): windows in the fixed held-in evaluation slice.
            Default is 4.

    Examples::

        datamanager = TextDataManager(corpus, seq_len=128, batch_tokens=1024, seed=1)
        batch = datamanager.next_batch()
    """

    def __init__(self, corpus, seq_len, batch_tokens, seed=0, workers=0,
                 train_sampler='RandomSampler', eval_windows=4, verbose=True):
        self.corpus = torch.as_tensor(corpus, dtype=torch.long).reshape(-1)
        self.seq_len = int(seq_len)
        self.batch_size = max(1, int(batch_tokens) // self.seq_len)

        self.trainset = TokenWindowDataset(self.corpus, self.seq_len)
        sampler = build_train_sampler(self.trainset, train_sampler, seed=seed)
        self.trainloader = torch.utils.data.DataLoader(
            self.trainset,
            sampler=sampler,
            batch_size=self.batch_size,
            shuffle=False,
            num_workers=workers,
            drop_last=False
        )
        self._iterator = None
        self.epoch = 0

        eval_len = min(self.corpus.numel(), eval_windows * self.seq_len + 1)
        self.eval_tokens = self.corpus[:eval_len]

        if verbose:
            print('  **************** Summary ****************')
            print('  # corpus tokens  : {}'.format(self.corpus.numel()))
            print('  # windows        : {}'.format(len(self.trainset)))
            print('  window length    : {}'.format(self.seq_len))
            print('  windows / batch  : {}'.format(self.batch_size))
            print('  *****************************************')

    def next_batch(self):
        """Returns the next (B, seq_len + 1) batch, starting a new epoch when needed."""
        if self._iterator is None:
            self._iterator = iter(self.trainloader)
        try:
            return next(self._iterator)
        except StopIteration:
            self.epoch += 1
            self._iterator = iter(self.trainloader)
            return next(self._iterator)
