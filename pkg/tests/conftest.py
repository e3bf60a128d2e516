import os.path as osp
import sys

import numpy as np
import pytest
import torch

sys.path.insert(0, osp.dirname(osp.dirname(osp.abspath(__file__))))

from ampprune.data import ByteTokenizer
from ampprune.models import LayerWeights, TransformerWeights, build_config, init_weights

SUBJECTS = ['the cat', 'a dog', 'my friend', 'the old man', 'her sister', 'the bird']
VERBS = ['sees', 'likes', 'finds', 'carries', 'watches', 'follows']
OBJECTS = ['the ball', 'a red box', 'the garden', 'some bread', 'the river', 'a small stone']
ENDINGS = ['.', ' today.', ' again.', ' at night.']


def pytest_addoption(parser):
    parser.addoption('--runslow', action='store_true', default=False,
                     help='run the slow end-to-end experiments')


def pytest_configure(config):
    config.addinivalue_line('markers', 'slow: trains a toy model, minutes of CPU time')


def pytest_collection_modifyitems(config, items):
    if config.getoption('--runslow'):
        return
    skip_slow = pytest.mark.skip(reason='needs --runslow')
    for item in items:
        if 'slow' in item.keywords:
            item.add_marker(skip_slow)


def synthetic_text(num_sentences, seed=0):
    """Templated sentences: low entropy, so small models learn them quickly."""
    rng = np.random.RandomState(seed)
    lines = []
    for _ in range(num_sentences):
        lines.append('{} {} {}{}'.format(
            SUBJECTS[rng.randint(len(SUBJECTS))], VERBS[rng.randint(len(VERBS))],
            OBJECTS[rng.randint(len(OBJECTS))], ENDINGS[rng.randint(len(ENDINGS))]))
    return '\n'.join(lines) + '\n'


def rand(*shape, seed=0):
    g = torch.Generator()
    g.manual_seed(seed)
    return torch.randn(*shape, generator=g, dtype=torch.float32)


def permute_units(w, layer_index, head_perm=None, mlp_perm=None):
    """Reorders heads and MLP pairs of one layer; new unit j is old unit perm[j]."""
    layer = w.layers[layer_index]
    dh = layer.d_head
    head_perm = list(range(layer.n_heads)) if head_perm is None else head_perm
    mlp_perm = list(range(layer.d_intermediate)) if mlp_perm is None else mlp_perm
    cols = torch.tensor([p * dh + k for p in head_perm for k in range(dh)])
    pairs = torch.tensor(mlp_perm)
    permuted = LayerWeights(layer.attn_norm.clone(), layer.Wq[:, cols], layer.Wk[:, cols],
                            layer.Wv[:, cols], layer.Wo[cols, :], layer.mlp_norm.clone(),
                            layer.Wgate[:, pairs], layer.Wup[:, pairs], layer.Wdown[pairs, :],
                            dh)
    layers = [permuted if i == layer_index else l.map(torch.clone)
              for i, l in enumerate(w.layers)]
    return TransformerWeights(w.config, w.token_embedding.clone(), layers, w.final_norm.clone(),
                              w.lm_head.clone())


@pytest.fixture
def micro_config():
    return build_config('micro')


@pytest.fixture
def tiny_config():
    return build_config('tiny')


@pytest.fixture
def micro_weights(micro_config):
    return init_weights(micro_config, seed=3)


@pytest.fixture
def tiny_weights(tiny_config):
    return init_weights(tiny_config, seed=7)


@pytest.fixture
def tokenizer():
    return ByteTokenizer()


@pytest.fixture
def corpus_tokens(tokenizer):
    return torch.tensor(tokenizer.encode(synthetic_text(400, seed=1)), dtype=torch.long)


@pytest.fixture
def calib_samples(tokenizer):
    lines = synthetic_text(5, seed=2).splitlines()
    return [tokenizer.encode(line) for line in lines]


@pytest.fixture
def corpus_file(tmp_path):
    path = tmp_path / 'corpus.txt'
    path.write_text(synthetic_text(400, seed=1), encoding='utf-8')
    return str(path)


@pytest.fixture
def calib_file(tmp_path):
    path = tmp_path / 'calib.txt'
    path.write_text(synthetic_text(20, seed=2), encoding='utf-8')
    return str(path)
