from __future__ import absolute_import
from __future__ import print_function

from ampprune.models import init_weights, loss_and_grads
from .engine import TrainConfig, Engine, train, recover
from .coherence import CoherenceReport, coherence_check
