from __future__ import absolute_import
from __future__ import print_function

__all__ = ['Logger', 'LossCurveLogger']

import sys
import os
import os.path as osp

from .tools import mkdir_if_missing


class Logger(object):
    """Writes console output to external text file.

    Imported from `<https://github.com/Cysu/open-reid/blob/master/reid/utils/logging.py>`_

    Args:
        fpath (str): path of the log file; its directory is created if missing.

    Examples::
       >>> import sys
       >>> import os.path as osp
       >>> from ampprune.utils import Logger
       >>> sys.stdout = Logger(osp.join('log/toy', 'train.log'))
    """
    def __init__(self, fpath=None):
        self.console = sys.stdout
        self.file = None
        if fpath is not None:
            mkdir_if_missing(osp.dirname(fpath))
            self.file = open(fpath, 'w')

    def __enter__(self):
        return self

    def __exit__(self, *args):
        self.close()

    def write(self, msg):
        self.console.write(msg)
        if self.file is not None:
            self.file.write(msg)

    def flush(self):
        self.console.flush()
        if self.file is not None:
            self.file.flush()
            os.fsync(self.file.fileno())

    def close(self):
        if self.file is not None:
            self.file.close()
            self.file = None


class LossCurveLogger(object):
    """Records the training loss curve and writes it as CSV.

    Each row is ``step,loss,tokens_seen``; held-in perplexity measured every
    ``eval_every`` steps is kept on the side and summarized by
    :meth:`show_summary`.

    Examples::
        >>> curve = LossCurveLogger()
        >>> curve.write(1, 5.41, 256)
        >>> curve.write(2, 5.12, 512)
        >>> curve.save('log/toy/model.ampc.loss.csv')
    """
    header = 'step,loss,tokens_seen'

    def __init__(self):
        self.rows = []
        self.evals = []

    def write(self, step, loss, tokens_seen):
        self.rows.append((int(step), float(loss), int(tokens_seen)))

    def write_eval(self, step, ppl):
        self.evals.append((int(step), float(ppl)))

    @property
    def losses(self):
        return [row[1] for row in self.rows]

    def to_csv(self):
        lines = [self.header]
        for step, loss, tokens_seen in self.rows:
            lines.append('{},{!r},{}'.format(step, loss, tokens_seen))
        return '\n'.join(lines) + '\n'

    def save(self, fpath):
        mkdir_if_missing(osp.dirname(fpath))
        with open(fpath, 'w') as f:
            f.write(self.to_csv())
        print('Loss curve saved to "{}"'.format(fpath))

    def show_summary(self):
        """Shows first/last loss and the held-in perplexity trace."""
        print('=> Show training summary')
        if self.rows:
            print('- step {}\t loss {:.4f}'.format(self.rows[0][0], self.rows[0][1]))
            print('- step {}\t loss {:.4f}'.format(self.rows[-1][0], self.rows[-1][1]))
        for step, ppl in self.evals:
            print('- step {}\t held-in ppl {:.3f}'.format(step, ppl))
