import pytest
import torch

from ampprune.losses import CrossEntropyLoss
from ampprune.models import TransformerWeights, LayerWeights, forward, loss_and_grads
from ampprune.utils import check_gradients

from conftest import permute_units

GROUPS = ['token_embedding', 'attn_norm', 'Wq', 'Wk', 'Wv', 'Wo', 'mlp_norm', 'Wgate', 'Wup',
          'Wdown', 'final_norm', 'lm_head']


def autograd_grads(w, tokens):
    """Reference gradients from torch autograd through the plain forward pass."""
    w = w.map(lambda t: t.detach().clone().requires_grad_())
    ids = torch.as_tensor(tokens)
    logits = forward(w, ids[:-1])
    loss = torch.nn.functional.cross_entropy(logits, ids[1:])
    loss.backward()
    return loss.item(), {name: t.grad for name, t in w.parameters()}


def test_micro_gradients_match_finite_differences(micro_weights):
    tokens = [256, 104, 101, 108, 108, 111, 32, 119, 111, 114, 108, 100]
    errors = check_gradients(micro_weights, tokens, entries_per_tensor=8)
    assert sorted(errors) == sorted(GROUPS)
    for group, err in errors.items():
        assert err < 1e-2, '{} relative error {}'.format(group, err)


def test_gradients_match_autograd(tiny_weights):
    w = tiny_weights.to(torch.float64)
    tokens = list(range(40, 60)) + [40, 41, 42]
    loss, grads = loss_and_grads(w, tokens)
    ref_loss, ref = autograd_grads(w, tokens)
    assert loss == pytest.approx(ref_loss, rel=1e-10)
    for name, g in grads.parameters():
        assert torch.allclose(g, ref[name], rtol=1e-6, atol=1e-10), name


def test_gradients_of_pruned_model(tiny_weights):
    from ampprune.pruning import prune_layer
    layers = [prune_layer(tiny_weights.layers[0], [1], list(range(0, 86, 3))),
              tiny_weights.layers[1]]
    pruned = TransformerWeights(tiny_weights.config, tiny_weights.token_embedding, layers,
                                tiny_weights.final_norm, tiny_weights.lm_head).to(torch.float64)
    tokens = [3, 1, 4, 1, 5, 9, 2, 6, 5, 3]
    _, grads = loss_and_grads(pruned, tokens)
    _, ref = autograd_grads(pruned, tokens)
    for name, g in grads.parameters():
        assert g.shape == ref[name].shape
        assert torch.allclose(g, ref[name], rtol=1e-6, atol=1e-10), name


def test_loss_matches_criterion(micro_weights):
    tokens = [1, 2, 3, 4, 5, 6]
    loss, _ = loss_and_grads(micro_weights, tokens)
    expected, _ = CrossEntropyLoss(257)(forward(micro_weights, tokens[:-1]), torch.tensor(tokens[1:]))
    assert loss == pytest.approx(expected, rel=1e-6)


def test_accepts_max_seq_len_plus_one(micro_weights):
    loss, _ = loss_and_grads(micro_weights, list(range(33)))
    assert loss > 0


def test_needs_two_tokens(micro_weights):
    with pytest.raises(ValueError):
        loss_and_grads(micro_weights, [5])


def test_unused_embedding_rows_get_zero_gradient(micro_weights):
    _, grads = loss_and_grads(micro_weights, [10, 11, 12, 13])
    used = grads.token_embedding[[10, 11, 12]]
    assert used.abs().sum() > 0
    assert grads.token_embedding[13].abs().sum() == 0
    assert grads.token_embedding[200].abs().sum() == 0


def test_label_smoothing_gradient_matches_finite_difference(micro_weights):
    w = micro_weights.to(torch.float64)
    tokens = [7, 8, 9, 10, 11]
    criterion = CrossEntropyLoss(257, epsilon=0.1)
    _, grads = loss_and_grads(w, tokens, criterion)
    ids = torch.tensor(tokens)
    h = 1e-6
    for idx in [(0, 0), (3, 100), (7, 256)]:
        original = w.lm_head[idx].item()
        w.lm_head[idx] = original + h
        plus = criterion(forward(w, ids[:-1]), ids[1:])[0]
        w.lm_head[idx] = original - h
        minus = criterion(forward(w, ids[:-1]), ids[1:])[0]
        w.lm_head[idx] = original
        assert grads.lm_head[idx].item() == pytest.approx((plus - minus) / (2 * h), rel=1e-4, abs=1e-8)


def test_cross_entropy_rejects_bad_shapes():
    criterion = CrossEntropyLoss(5)
    with pytest.raises(ValueError):
        criterion(torch.zeros(3, 4), torch.zeros(3, dtype=torch.long))
    with pytest.raises(ValueError):
        criterion(torch.zeros(3, 5), torch.zeros(2, dtype=torch.long))
    with pytest.raises(ValueError):
        CrossEntropyLoss(5, epsilon=1.)


def test_uniform_logits_nll():
    criterion = CrossEntropyLoss(257)
    nll = criterion.nll(torch.zeros(4, 257), torch.tensor([0, 5, 100, 256]))
    assert nll == pytest.approx(4 * torch.log(torch.tensor(257.)).item(), rel=1e-6)


def test_layer_weights_reject_bad_shapes():
    d = 8
    with pytest.raises(ValueError):
        LayerWeights(
            attn_norm=torch.ones(d), Wq=torch.zeros(d, 8), Wk=torch.zeros(d, 8),
            Wv=torch.zeros(d, 8), Wo=torch.zeros(8, d), mlp_norm=torch.ones(d),
            Wgate=torch.zeros(d, 6), Wup=torch.zeros(d, 5), Wdown=torch.zeros(6, d), d_head=4)


def test_loss_invariant_under_unit_permutation(tiny_weights):
    w = tiny_weights.to(torch.float64)
    tokens = list(range(60, 90))
    loss, grads = loss_and_grads(w, tokens)
    head_perm, mlp_perm = [3, 1, 0, 2], list(range(1, 86)) + [0]
    permuted = permute_units(w, 1, head_perm, mlp_perm)
    permuted_loss, permuted_grads = loss_and_grads(permuted, tokens)
    assert permuted_loss == pytest.approx(loss, rel=1e-10)
    # gradients move with their units
    cols = torch.tensor([p * 8 + k for p in head_perm for k in range(8)])
    assert torch.allclose(permuted_grads.layers[1].Wq, grads.layers[1].Wq[:, cols], atol=1e-12)
    assert torch.allclose(permuted_grads.layers[1].Wdown, grads.layers[1].Wdown[mlp_perm],
                          atol=1e-12)
