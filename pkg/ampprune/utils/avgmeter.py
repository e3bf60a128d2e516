from __future__ import absolute_import
from __future__ import division

__all__ = ['AverageMeter']


class AverageMeter(object):
    """Computes and stores the average and current value.

    ``n`` weights each update, so feeding per-step mean losses with the
    number of predicted tokens gives the token-weighted running loss.

    Examples::
        >>> losses = AverageMeter()
        >>> losses.update(loss_value, num_tokens)
    """
    def __init__(self):
        self.reset()

    def reset(self):
        self.val = 0.
        self.avg = 0.
        self.sum = 0.
        self.count = 0

    def update(self, val, n=1):
        if n <= 0:
            raise ValueError('n must be positive, got {}'.format(n))
        self.val = val
        self.sum += val * n
        self.count += n
        self.avg = self.sum / self.count
