from __future__ import absolute_import
from __future__ import print_function

__all__ = ['AVAI_OPTIMS', 'build_optimizer']

import torch


AVAI_OPTIMS = ['adam', 'amsgrad', 'sgd']


def build_optimizer(
        params,
        optim='adam',
        lr=0.0003,
        weight_decay=0.,
        momentum=0.9,
        adam_beta1=0.9,
        adam_beta2=0.999,
        adam_eps=1e-8
    ):
    """A function wrapper for building an optimizer over plain weight tensors.

    The tensors need not require grad: the trainer assigns hand-derived gradients to
    ``.grad`` before every ``step()``.

    Args:
        params (list): ``torch.Tensor`` leaves updated in place.
        optim (str, optional): optimizer. Default is "adam".
        lr (float, optional): learning rate. Default is 0.0003.
        weight_decay (float, optional): weight decay (L2 penalty). Default is 0.
        momentum (float, optional): momentum factor in sgd. Default is 0.9.
        adam_beta1 (float, optional): beta-1 value in adam. Default is 0.9.
        adam_beta2 (float, optional): beta-2 value in adam. Default is 0.999.
        adam_eps (float, optional): epsilon in adam. Default is 1e-8.

    Examples::
        >>> params = [t for _, t in weights.parameters()]
        >>> optimizer = ampprune.optim.build_optimizer(params, optim='adam', lr=3e-4)
    """
    if optim not in AVAI_OPTIMS:
        raise ValueError('Unsupported optim: {}. Must be one of {}'.format(optim, AVAI_OPTIMS))
    params = list(params)
    if not params:
        raise ValueError('build_optimizer got an empty parameter list')
    if not lr > 0:
        raise ValueError('lr must be > 0, got {}'.format(lr))
    for beta in (adam_beta1, adam_beta2):
        if not 0. < beta < 1.:
            raise ValueError('adam betas must be in (0, 1), got {}'.format(beta))

    if optim == 'adam':
        optimizer = torch.optim.Adam(
            params,
            lr=lr,
            weight_decay=weight_decay,
            betas=(adam_beta1, adam_beta2),
            eps=adam_eps,
        )

    elif optim == 'amsgrad':
        optimizer = torch.optim.Adam(
            params,
            lr=lr,
            weight_decay=weight_decay,
            betas=(adam_beta1, adam_beta2),
            eps=adam_eps,
            amsgrad=True,
        )

    elif optim == 'sgd':
        optimizer = torch.optim.SGD(
            params,
            lr=lr,
            momentum=momentum,
            weight_decay=weight_decay,
        )

    return optimizer
