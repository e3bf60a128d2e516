from __future__ import absolute_import

from .optimizer import build_optimizer, AVAI_OPTIMS
