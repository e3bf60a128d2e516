from __future__ import absolute_import
from __future__ import print_function
from __future__ import division

__all__ = ['mkdir_if_missing', 'read_json', 'write_json',
           'set_random_seed', 'set_num_threads', 'collect_env_info']

import os
import os.path as osp
import errno
import json
import random
import numpy as np

import torch


def mkdir_if_missing(dirname):
    """Creates dirname if it is missing."""
    if dirname and not osp.exists(dirname):
        try:
            os.makedirs(dirname)
        except OSError as e:
            if e.errno != errno.EEXIST:
                raise


def read_json(fpath):
    """Reads json file from a path."""
    with open(fpath, 'r') as f:
        obj = json.load(f)
    return obj


def write_json(obj, fpath):
    """Writes to a json file.

    Floats are written with ``repr``, which round-trips every float64 exactly,
    and the output is byte-stable for equal inputs.
    """
    mkdir_if_missing(osp.dirname(fpath))
    with open(fpath, 'w') as f:
        json.dump(obj, f, indent=4, separators=(',', ': '))
        f.write('\n')


def set_random_seed(seed):
    random.seed(seed)
    np.random.seed(seed)
    torch.manual_seed(seed)


def set_num_threads(env_var='AMP_THREADS'):
    """Caps torch intra-op parallelism from an environment variable.

    Returns:
        int: number of threads in use afterwards.
    """
    value = os.environ.get(env_var, '').strip()
    if value:
        try:
            num_threads = int(value)
        except ValueError:
            raise ValueError('{} must be a positive integer, got "{}"'.format(env_var, value))
        if num_threads < 1:
            raise ValueError('{} must be a positive integer, got "{}"'.format(env_var, value))
        torch.set_num_threads(num_threads)
    return torch.get_num_threads()


def collect_env_info():
    """Returns env info as a string.

    Code source: github.com/facebookresearch/maskrcnn-benchmark
    """
    from torch.utils.collect_env import get_pretty_env_info
    env_str = get_pretty_env_info()
    env_str += '\n        numpy ({})'.format(np.__version__)
    env_str += '\n        torch threads ({})'.format(torch.get_num_threads())
    return env_str
