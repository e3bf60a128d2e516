import glob
import importlib
import os.path as osp

import pytest
import torch

from ampprune.data import ByteTokenizer, TextDataManager
from ampprune.engine import TrainConfig, Engine, train, recover
from ampprune.exceptions import DivergenceError
from ampprune.metrics import perplexity
from ampprune.optim import build_optimizer
from ampprune.pruning import ImportanceReport, build_plan, apply_plan
from ampprune.utils import AverageMeter, LossCurveLogger, serialize


def repeated_corpus(text='hello world. ', times=60):
    return torch.tensor(ByteTokenizer().encode(text * times), dtype=torch.long)


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(steps=-1)
    with pytest.raises(ValueError):
        TrainConfig(learning_rate=0.)
    with pytest.raises(ValueError):
        TrainConfig(adam_beta2=1.)
    with pytest.raises(ValueError):
        TrainConfig(batch_tokens=0)
    assert TrainConfig().to_dict()['learning_rate'] == 3e-4


def test_zero_steps_returns_unchanged_copy(micro_weights):
    trained, curve = train(micro_weights, repeated_corpus(), TrainConfig(steps=0, seq_len=16))
    assert trained is not micro_weights
    assert serialize(trained) == serialize(micro_weights)
    assert curve.rows == []


def test_memorizes_repeated_text(tiny_weights):
    cfg = TrainConfig(steps=200, batch_tokens=128, seq_len=32, learning_rate=1e-2, print_freq=50)
    _, curve = train(tiny_weights, repeated_corpus(), cfg)
    losses = curve.losses
    assert len(losses) == 200
    assert losses[0] > 4.
    assert sum(losses[-10:]) / 10 < 1.


def test_memorizes_three_token_cycle(tiny_weights):
    corpus = torch.tensor([97, 98, 99] * 400, dtype=torch.long)
    cfg = TrainConfig(steps=200, batch_tokens=128, seq_len=32, learning_rate=1e-2, print_freq=50)
    trained, curve = train(tiny_weights, corpus, cfg)
    assert curve.losses[-1] < 0.1
    assert perplexity(trained, corpus[:321], chunk_len=32).value < 1.2


def test_training_does_not_touch_input(micro_weights):
    before = serialize(micro_weights)
    train(micro_weights, repeated_corpus(), TrainConfig(steps=3, batch_tokens=32, seq_len=16))
    assert serialize(micro_weights) == before


def test_training_is_reproducible(micro_weights):
    cfg = TrainConfig(steps=5, batch_tokens=64, seq_len=16, learning_rate=1e-2, seed=4)
    a, curve_a = train(micro_weights, repeated_corpus(), cfg)
    b, curve_b = train(micro_weights, repeated_corpus(), cfg)
    assert curve_a.losses == curve_b.losses
    assert serialize(a) == serialize(b)


def test_curve_records_tokens(micro_weights):
    cfg = TrainConfig(steps=4, batch_tokens=64, seq_len=16)
    _, curve = train(micro_weights, repeated_corpus(), cfg)
    assert [row[0] for row in curve.rows] == [1, 2, 3, 4]
    assert [row[2] for row in curve.rows] == [64, 128, 192, 256]
    assert curve.to_csv().splitlines()[0] == 'step,loss,tokens_seen'


def test_seq_len_is_capped_by_model(micro_weights):
    engine = Engine(micro_weights, repeated_corpus(), TrainConfig(steps=1, seq_len=128))
    assert engine.seq_len == micro_weights.config.max_seq_len
    # 779 // 32 windows, fewer than one full batch of 1024 // 32
    assert tuple(engine.datamanager.next_batch().shape) == (24, 33)


def test_corpus_too_short(micro_weights):
    with pytest.raises(ValueError):
        Engine(micro_weights, torch.tensor([1, 2, 3]), TrainConfig(seq_len=16, batch_tokens=64))


def test_nan_weights_raise_divergence(micro_weights):
    w = micro_weights.clone()
    w.lm_head[0, 0] = float('nan')
    with pytest.raises(DivergenceError) as e:
        train(w, repeated_corpus(), TrainConfig(steps=3, batch_tokens=32, seq_len=16))
    assert e.value.step == 1


def test_nan_gradient_raises_before_update(micro_weights, monkeypatch):
    engine_module = importlib.import_module('ampprune.engine.engine')
    real = engine_module.loss_and_grads

    def nan_wq_grad(w, tokens, criterion=None):
        loss, grads = real(w, tokens, criterion)
        grads.layers[0].Wq[0, 0] = float('nan')
        return loss, grads

    monkeypatch.setattr(engine_module, 'loss_and_grads', nan_wq_grad)
    engine = Engine(micro_weights, repeated_corpus(), TrainConfig(steps=2, batch_tokens=32,
                                                                  seq_len=16))
    before = serialize(engine.weights)
    with pytest.raises(DivergenceError) as e:
        engine.run()
    assert e.value.step == 1
    assert e.value.what == 'gradient of layers.0.Wq'
    assert serialize(engine.weights) == before


def test_held_in_perplexity_is_logged(micro_weights, tmp_path):
    cfg = TrainConfig(steps=4, batch_tokens=32, seq_len=16, eval_every=2, learning_rate=1e-2)
    _, curve = train(micro_weights, repeated_corpus(), cfg, save_dir=str(tmp_path))
    assert [step for step, _ in curve.evals] == [2, 4]
    assert all(ppl > 1. for _, ppl in curve.evals)
    assert glob.glob(osp.join(str(tmp_path), 'events.out.tfevents*'))


def test_recover_keeps_pruned_dims(tiny_weights):
    config = tiny_weights.config
    report = ImportanceReport('fp', 1, 1, [[1., 2., 3., 4.]] * 2, [list(range(1, 87))] * 2)
    pruned = apply_plan(tiny_weights, build_plan(report, 0.5, config))
    cfg = TrainConfig(steps=3, batch_tokens=64, seq_len=32, learning_rate=1e-3)
    recovered, curve = recover(pruned, repeated_corpus(), cfg)
    assert recovered.layer_dims() == pruned.layer_dims() == [(2, 43), (2, 43)]
    assert len(curve.losses) == 3
    assert serialize(recovered) != serialize(pruned)


def test_label_smoothing_trains(micro_weights):
    cfg = TrainConfig(steps=3, batch_tokens=32, seq_len=16, label_smooth=0.1)
    _, curve = train(micro_weights, repeated_corpus(), cfg)
    assert all(loss > 0 for loss in curve.losses)


def test_data_manager_batches():
    dm = TextDataManager(torch.arange(101) % 257, seq_len=10, batch_tokens=40, seed=0,
                         verbose=False)
    assert len(dm.trainset) == 10
    shapes = [tuple(dm.next_batch().shape) for _ in range(4)]
    assert shapes == [(4, 11), (4, 11), (2, 11), (4, 11)]
    assert dm.epoch == 1
    assert dm.eval_tokens.numel() == 41


def test_data_manager_seed_controls_order():
    corpus = torch.arange(201) % 257
    a = TextDataManager(corpus, 10, 20, seed=1, verbose=False).next_batch()
    b = TextDataManager(corpus, 10, 20, seed=1, verbose=False).next_batch()
    assert torch.equal(a, b)


def test_build_optimizer():
    params = [torch.zeros(3)]
    assert isinstance(build_optimizer(params, optim='sgd', lr=0.1), torch.optim.SGD)
    with pytest.raises(ValueError):
        build_optimizer(params, optim='lbfgs')
    with pytest.raises(ValueError):
        build_optimizer([], optim='adam')


def test_average_meter():
    meter = AverageMeter()
    meter.update(2., 3)
    meter.update(4., 1)
    assert meter.avg == pytest.approx(2.5)
    assert meter.val == 4.


def test_loss_curve_file(tmp_path):
    curve = LossCurveLogger()
    curve.write(1, 5.5, 128)
    curve.write(2, 5.25, 256)
    fpath = str(tmp_path / 'sub' / 'loss.csv')
    curve.save(fpath)
    with open(fpath) as f:
        assert f.read() == 'step,loss,tokens_seen\n1,5.5,128\n2,5.25,256\n'
