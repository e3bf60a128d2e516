from __future__ import absolute_import
from __future__ import print_function

from .tokenizer import ByteTokenizer, BOS_ID, VOCAB_SIZE
from .datasets import TokenWindowDataset, load_corpus, load_calibration
from .sampler import build_train_sampler
from .datamanager import TextDataManager
