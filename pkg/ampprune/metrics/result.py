from __future__ import absolute_import
from __future__ import division

__all__ = ['EvalResult', 'format_table', 'save_result']

import math

from ampprune.utils import write_json

KINDS = ('perplexity', 'latency')


class EvalResult(object):
    """One measurement of a model.

    Args:
        kind (str): ``perplexity`` or ``latency``.
        value (float): perplexity, or mean latency in seconds.
        protocol (dict): ``{'chunk_len'}`` for perplexity;
            ``{'prompt_len', 'gen_len', 'runs', 'warmup'}`` for latency.
        model_fingerprint (str, optional): fingerprint of the measured model.
        per_run (list, optional): raw per-run seconds of a latency measurement.
    """

    def __init__(self, kind, value, protocol, model_fingerprint=None, per_run=None):
        if kind not in KINDS:
            raise ValueError('Unknown result kind: {}. Must be one of {}'.format(kind, list(KINDS)))
        self.kind = kind
        self.value = float(value)
        self.protocol = dict(protocol)
        self.model_fingerprint = model_fingerprint
        self.per_run = None if per_run is None else [float(t) for t in per_run]
        if not (self.value > 0 and math.isfinite(self.value)):
            raise ValueError('{} value must be finite and > 0, got {}'.format(kind, self.value))
        if kind == 'latency' and self.per_run is not None \
                and len(self.per_run) != self.protocol.get('runs'):
            raise ValueError('recorded {} runs, protocol says {}'.format(
                len(self.per_run), self.protocol.get('runs')))

    def to_dict(self):
        d = {
            'kind': self.kind,
            'value': self.value,
            'protocol': self.protocol,
            'model_fingerprint': self.model_fingerprint,
        }
        if self.per_run is not None:
            d['per_run'] = self.per_run
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(d['kind'], d['value'], d['protocol'], d.get('model_fingerprint'), d.get('per_run'))

    def __repr__(self):
        return 'EvalResult(kind={}, value={:.6g})'.format(self.kind, self.value)


def format_table(rows, headers=('model', 'metric', 'value')):
    """Renders rows of cells as a plain-text table with a header rule.

    Floats are printed with 4 decimals.
    """
    def cell(x):
        return '{:.4f}'.format(x) if isinstance(x, float) else str(x)

    cells = [[cell(x) for x in row] for row in rows]
    widths = [len(h) for h in headers]
    for row in cells:
        if len(row) != len(headers):
            raise ValueError('row {} has {} cells, expected {}'.format(row, len(row), len(headers)))
        widths = [max(w, len(c)) for w, c in zip(widths, row)]
    lines = ['  '.join(h.ljust(w) for h, w in zip(headers, widths)).rstrip()]
    lines.append('  '.join('-' * w for w in widths))
    for row in cells:
        lines.append('  '.join(c.ljust(w) for c, w in zip(row, widths)).rstrip())
    return '\n'.join(lines)


def save_result(result, fpath):
    write_json(result.to_dict(), fpath)
