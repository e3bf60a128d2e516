from __future__ import absolute_import
from __future__ import division

import torch

from ampprune import tensor_core as tc


class CrossEntropyLoss(object):
    r"""Next-token cross entropy with label smoothing regularizer and its gradient.

    Reference:
        Szegedy et al. Rethinking the Inception Architecture for Computer Vision. CVPR 2016.

    With label smoothing, the label :math:`y` for a class is computed by

    .. math::
        \begin{equation}
        (1 - \epsilon) \times y + \frac{\epsilon}{K},
        \end{equation}

    where :math:`K` denotes the number of classes and :math:`\epsilon` is a weight. When
    :math:`\epsilon = 0`, the loss function reduces to the normal cross entropy, which is
    what training and perplexity use by default.

    Args:
        num_classes (int): number of classes (vocabulary size).
        epsilon (float, optional): smoothing weight. Default is 0.
    """

    def __init__(self, num_classes, epsilon=0.):
        if not 0. <= epsilon < 1.:
            raise ValueError('epsilon must be in [0, 1), got {}'.format(epsilon))
        self.num_classes = num_classes
        self.epsilon = epsilon

    def _smoothed_targets(self, log_probs, targets):
        onehot = torch.zeros_like(log_probs).scatter_(1, targets.unsqueeze(1), 1)
        return (1 - self.epsilon) * onehot + self.epsilon / self.num_classes

    def __call__(self, inputs, targets):
        """
        Args:
            inputs (torch.Tensor): logits with shape (num_positions, num_classes).
            targets (torch.LongTensor): next-token ids with shape (num_positions).

        Returns:
            tuple: ``(loss, dinputs)``; ``loss`` is the mean over positions as a Python
            float and ``dinputs`` its gradient with respect to ``inputs``.
        """
        if inputs.dim() != 2 or inputs.shape[1] != self.num_classes:
            raise ValueError('inputs must have shape (N, {}), got {}'.format(
                self.num_classes, list(inputs.shape)))
        if targets.shape[0] != inputs.shape[0]:
            raise ValueError('got {} targets for {} positions'.format(targets.shape[0], inputs.shape[0]))
        log_probs = tc.log_softmax_rows(inputs)
        smoothed = self._smoothed_targets(log_probs, targets)
        num_positions = inputs.shape[0]
        loss = (-smoothed * log_probs).sum() / num_positions
        dinputs = (torch.exp(log_probs) - smoothed) / num_positions
        return loss.item(), dinputs

    def nll(self, inputs, targets):
        """Summed negative log-likelihood of ``targets``, ignoring smoothing."""
        log_probs = tc.log_softmax_rows(inputs)
        return -log_probs.gather(1, targets.unsqueeze(1)).sum().item()
