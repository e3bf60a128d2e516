from __future__ import absolute_import

from .avgmeter import *
from .loggers import *
from .tools import *
from .torchtools import *
from .gradcheck import check_gradients
from .model_complexity import compute_model_complexity
