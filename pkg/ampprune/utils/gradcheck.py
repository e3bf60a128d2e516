from __future__ import absolute_import
from __future__ import division

__all__ = ['check_gradients', 'param_group']

import torch

from ampprune.losses import CrossEntropyLoss
from ampprune.models import forward, loss_and_grads


def param_group(name):
    """Maps a canonical tensor name to its parameter group (``layers.0.Wq`` -> ``Wq``)."""
    return name.split('.')[-1]


def _loss(w, ids, criterion):
    return criterion(forward(w, ids[:-1]), ids[1:])[0]


def check_gradients(w, tokens, h=1e-6, entries_per_tensor=12, floor=1e-6, seed=0):
    """Compares analytic gradients with central finite differences.

    Runs in float64 on a copy of ``w``. The loss for the numerical side comes from
    the plain forward pass, independently of the backward tape.

    Args:
        w (TransformerWeights): model weights.
        tokens (sequence): token ids, at least 2.
        h (float, optional): finite-difference step. Default is 1e-6.
        entries_per_tensor (int, optional): sampled entries per tensor. Default is 12.
        floor (float, optional): lower bound of the relative-error denominator.
        seed (int, optional): seed for picking the sampled entries.

    Returns:
        dict: parameter group -> maximum relative error
        ``|analytic - numeric| / max(|analytic|, |numeric|, floor)``.
    """
    w64 = w.to(torch.float64)
    ids = torch.as_tensor(tokens, dtype=torch.long).reshape(-1)
    criterion = CrossEntropyLoss(w.config.vocab_size)
    _, grads = loss_and_grads(w64, ids, criterion)
    analytic = grads.named_tensors()
    g = torch.Generator()
    g.manual_seed(seed)

    errors = {}
    used_rows = torch.unique(ids[:-1])
    for name, tensor in w64.parameters():
        flat = tensor.view(-1)
        if name == 'token_embedding':
            # only rows of input tokens receive gradient
            rows = used_rows[torch.randint(len(used_rows), (entries_per_tensor,), generator=g)]
            cols = torch.randint(tensor.shape[1], (entries_per_tensor,), generator=g)
            picks = (rows * tensor.shape[1] + cols).tolist()
        else:
            picks = torch.randint(flat.numel(), (entries_per_tensor,), generator=g).tolist()
        worst = 0.
        for idx in picks:
            original = flat[idx].item()
            flat[idx] = original + h
            loss_plus = _loss(w64, ids, criterion)
            flat[idx] = original - h
            loss_minus = _loss(w64, ids, criterion)
            flat[idx] = original
            numeric = (loss_plus - loss_minus) / (2 * h)
            exact = analytic[name].view(-1)[idx].item()
            rel = abs(exact - numeric) / max(abs(exact), abs(numeric), floor)
            worst = max(worst, rel)
        group = param_group(name)
        errors[group] = max(errors.get(group, 0.), worst)
    return errors
