from __future__ import absolute_import
from __future__ import print_function

__version__ = '0.1.0'
__description__ = 'Structured pruning of attention heads and MLP neurons by activation magnitude'

from ampprune import (
    tensor_core,
    models,
    losses,
    utils,
    data,
    pruning,
    optim,
    metrics,
    engine
)
