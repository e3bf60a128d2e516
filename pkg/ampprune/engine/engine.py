from __future__ import absolute_import
from __future__ import print_function
from __future__ import division

__all__ = ['TrainConfig', 'Engine', 'train', 'recover']

import math
import time
import datetime

import torch
from torch.utils.tensorboard import SummaryWriter

from ampprune.data import TextDataManager
from ampprune.exceptions import DivergenceError, NumericError
from ampprune.losses import CrossEntropyLoss
from ampprune.models import loss_and_grads
from ampprune.optim import build_optimizer
from ampprune.utils import AverageMeter, LossCurveLogger, set_random_seed
from ampprune import metrics


class TrainConfig(object):
    """Training hyperparameters.

    Args:
        steps (int): optimization steps; 0 returns the weights unchanged.
        batch_tokens (int): input tokens per step.
        learning_rate (float): constant learning rate. Default is 3e-4.
        adam_beta1 (float): Default is 0.9.
        adam_beta2 (float): Default is 0.999.
        adam_eps (float): Default is 1e-8.
        grad_clip (float): max global gradient norm; 0 disables clipping. Default is 1.0.
        seed (int): sampler seed. Default is 0.
        eval_every (int): held-in perplexity every N steps; 0 disables. Default is 0.
        seq_len (int): window length; capped by ``max_seq_len`` and the corpus. Default is 128.
        print_freq (int): steps between progress lines. Default is 10.
        optim (str): optimizer name for ``build_optimizer``. Default is ``adam``.
        weight_decay (float): Default is 0.
        label_smooth (float): label smoothing epsilon. Default is 0.
        workers (int): DataLoader workers. Default is 0.
    """
    fields = ('steps', 'batch_tokens', 'learning_rate', 'adam_beta1', 'adam_beta2', 'adam_eps',
              'grad_clip', 'seed', 'eval_every', 'seq_len', 'print_freq', 'optim',
              'weight_decay', 'label_smooth', 'workers')

    def __init__(self, steps=500, batch_tokens=1024, learning_rate=3e-4, adam_beta1=0.9,
                 adam_beta2=0.999, adam_eps=1e-8, grad_clip=1.0, seed=0, eval_every=0,
                 seq_len=128, print_freq=10, optim='adam', weight_decay=0., label_smooth=0.,
                 workers=0):
        self.steps = int(steps)
        self.batch_tokens = int(batch_tokens)
        self.learning_rate = float(learning_rate)
        self.adam_beta1 = float(adam_beta1)
        self.adam_beta2 = float(adam_beta2)
        self.adam_eps = float(adam_eps)
        self.grad_clip = float(grad_clip)
        self.seed = int(seed)
        self.eval_every = int(eval_every)
        self.seq_len = int(seq_len)
        self.print_freq = int(print_freq)
        self.optim = optim
        self.weight_decay = float(weight_decay)
        self.label_smooth = float(label_smooth)
        self.workers = int(workers)
        self.validate()

    def validate(self):
        if self.steps < 0:
            raise ValueError('steps must be >= 0, got {}'.format(self.steps))
        if not self.learning_rate > 0:
            raise ValueError('learning_rate must be > 0, got {}'.format(self.learning_rate))
        for name in ('adam_beta1', 'adam_beta2'):
            if not 0. < getattr(self, name) < 1.:
                raise ValueError('{} must be in (0, 1), got {}'.format(name, getattr(self, name)))
        for name in ('batch_tokens', 'seq_len', 'print_freq'):
            if getattr(self, name) < 1:
                raise ValueError('{} must be >= 1, got {}'.format(name, getattr(self, name)))
        if self.grad_clip < 0:
            raise ValueError('grad_clip must be >= 0, got {}'.format(self.grad_clip))

    def to_dict(self):
        return {name: getattr(self, name) for name in self.fields}


class Engine(object):
    r"""Next-token training of a transformer with hand-derived gradients.

    Every step draws ``batch_tokens // seq_len`` windows, averages the loss and the
    analytic gradients over them, clips the global gradient norm and applies one
    optimizer step. With ``workers=0`` the run is bit-reproducible for a fixed seed.

    Args:
        weights (TransformerWeights): starting weights; copied, never modified.
        corpus (torch.LongTensor): training token stream.
        cfg (TrainConfig): hyperparameters.
        save_dir (str, optional): tensorboard log directory; no writer when None.

    Examples::

        engine = ampprune.engine.Engine(weights, corpus, TrainConfig(steps=500))
        trained, curve = engine.run()
    """

    def __init__(self, weights, corpus, cfg, save_dir=None):
        self.cfg = cfg
        self.weights = weights.clone()
        corpus = torch.as_tensor(corpus, dtype=torch.long).reshape(-1)
        if corpus.numel() < 2:
            raise ValueError('corpus must hold at least 2 tokens, got {}'.format(corpus.numel()))
        if corpus.numel() < min(cfg.batch_tokens, cfg.seq_len) + 1:
            raise ValueError('corpus of {} tokens is shorter than one batch of {} tokens'.format(
                corpus.numel(), min(cfg.batch_tokens, cfg.seq_len) + 1))
        self.seq_len = min(cfg.seq_len, cfg.batch_tokens, weights.config.max_seq_len,
                           corpus.numel() - 1)
        self.datamanager = TextDataManager(corpus, self.seq_len, cfg.batch_tokens, seed=cfg.seed,
                                           workers=cfg.workers, verbose=cfg.steps > 0)
        self.params = [t for _, t in self.weights.parameters()]
        self.optimizer = build_optimizer(
            self.params,
            optim=cfg.optim,
            lr=cfg.learning_rate,
            weight_decay=cfg.weight_decay,
            adam_beta1=cfg.adam_beta1,
            adam_beta2=cfg.adam_beta2,
            adam_eps=cfg.adam_eps
        )
        self.criterion = CrossEntropyLoss(weights.config.vocab_size, epsilon=cfg.label_smooth)
        self.save_dir = save_dir
        self.writer = None
        self.curve = LossCurveLogger()

    def step(self, batch, step=0):
        """One optimization step on a (B, seq_len + 1) batch; returns the mean loss.

        Weights are left untouched when the loss is not finite. A non-finite
        gradient raises ``DivergenceError`` before the optimizer runs.
        """
        total_loss = 0.
        summed = None
        for window in batch:
            try:
                loss, grads = loss_and_grads(self.weights, window, self.criterion)
            except NumericError:
                return float('nan')
            total_loss += loss
            g = [t for _, t in grads.parameters()]
            summed = g if summed is None else [a + b for a, b in zip(summed, g)]
        n = len(batch)
        if not math.isfinite(total_loss):
            return total_loss / n
        for (name, _), g in zip(self.weights.parameters(), summed):
            if not torch.isfinite(g).all():
                raise DivergenceError(step, 'non-finite', what='gradient of {}'.format(name))
        for p, g in zip(self.params, summed):
            p.grad = g / n
        if self.cfg.grad_clip > 0:
            torch.nn.utils.clip_grad_norm_(self.params, self.cfg.grad_clip)
        self.optimizer.step()
        self.optimizer.zero_grad(set_to_none=True)
        return total_loss / n

    def evaluate(self):
        """Held-in perplexity on the fixed evaluation slice."""
        tokens = self.datamanager.eval_tokens
        return metrics.perplexity(self.weights, tokens, chunk_len=self.seq_len).value

    def run(self):
        """Trains for ``cfg.steps`` steps.

        Returns:
            tuple: ``(weights, curve)``; ``curve`` is a ``LossCurveLogger``.

        Raises:
            DivergenceError: the loss or a gradient became NaN or infinite.
        """
        cfg = self.cfg
        set_random_seed(cfg.seed)
        if cfg.steps == 0:
            return self.weights, self.curve
        if self.save_dir is not None and self.writer is None:
            self.writer = SummaryWriter(log_dir=self.save_dir)

        losses = AverageMeter()
        batch_time = AverageMeter()
        tokens_seen = 0
        time_start = time.time()
        end = time.time()
        print('=> Start training')
        for step in range(1, cfg.steps + 1):
            batch = self.datamanager.next_batch()
            loss = self.step(batch, step)
            if not math.isfinite(loss):
                raise DivergenceError(step, loss)
            tokens_seen += batch.shape[0] * self.seq_len
            losses.update(loss)
            batch_time.update(time.time() - end)
            self.curve.write(step, loss, tokens_seen)

            if step % cfg.print_freq == 0 or step == cfg.steps:
                eta_seconds = batch_time.avg * (cfg.steps - step)
                eta_str = str(datetime.timedelta(seconds=int(eta_seconds)))
                print('Step: [{0}/{1}]\t'
                      'Time {batch_time.val:.3f} ({batch_time.avg:.3f})\t'
                      'Loss {loss:.4f} ({losses.avg:.4f})\t'
                      'Tokens {tokens}\t'
                      'Lr {lr:.6f}\t'
                      'eta {eta}'.format(
                          step, cfg.steps,
                          batch_time=batch_time,
                          loss=loss,
                          losses=losses,
                          tokens=tokens_seen,
                          lr=self.optimizer.param_groups[0]['lr'],
                          eta=eta_str
                      ))

            if cfg.eval_every > 0 and step % cfg.eval_every == 0:
                ppl = self.evaluate()
                self.curve.write_eval(step, ppl)
                print('=> Held-in perplexity at step {}: {:.3f}'.format(step, ppl))
                if self.writer is not None:
                    self.writer.add_scalar('Eval/Perplexity', ppl, step)

            if self.writer is not None:
                self.writer.add_scalar('Train/Loss', loss, step)
                self.writer.add_scalar('Train/Lr', self.optimizer.param_groups[0]['lr'], step)
            end = time.time()

        elapsed = str(datetime.timedelta(seconds=round(time.time() - time_start)))
        print('Elapsed {}'.format(elapsed))
        if self.writer is not None:
            self.writer.close()
            self.writer = None
        return self.weights, self.curve


def train(w, corpus, cfg, save_dir=None):
    """Trains ``w`` on ``corpus``; returns ``(weights, curve)``."""
    return Engine(w, corpus, cfg, save_dir=save_dir).run()


def recover(w_pruned, corpus, cfg, save_dir=None):
    """Post-pruning recovery: the training loop with every remaining parameter trainable.

    Shapes never change, so the layer dims of the result equal those of ``w_pruned``.
    """
    return Engine(w_pruned, corpus, cfg, save_dir=save_dir).run()
