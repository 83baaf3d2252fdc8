"""Pure-numpy implementations of the training kernels.

This is the fallback backend; the compiled extension in ``_core`` computes
the same quantities with fused loops. Both operate on C-contiguous float64
arrays and agree to floating-point roundoff.
"""

from __future__ import annotations

import numpy as np

NAME = "numpy"


def infonce_loss_grad(xs, es, W):
    """Contrastive classification loss over a batch of aligned pairs.

    For each explanan vector the batch's input vectors are the candidate
    set; the loss is the mean cross-entropy of picking the aligned input.
    Returns ``(loss, dloss/dW)``.
    """
    n = xs.shape[0]
    # st[i, j]: logit of input j as the candidate for explanan i
    st = es @ (xs @ W).T
    m = st.max(axis=1, keepdims=True)
    z = np.exp(st - m)
    denom = z.sum(axis=1, keepdims=True)
    diag = np.arange(n)
    log_p_aligned = st[diag, diag] - m[:, 0] - np.log(denom[:, 0])
    loss = -log_p_aligned.mean()
    g = z / denom
    g[diag, diag] -= 1.0
    dW = xs.T @ (g.T @ es)
    dW /= n
    return float(loss), dW


def xent_loss_grad(inputs, labels, W, b):
    """Softmax cross-entropy of a linear classifier, with gradients.

    Returns ``(loss, dW, db)`` for mean negative log-likelihood over the
    batch.
    """
    n = inputs.shape[0]
    z = inputs @ W + b
    m = z.max(axis=1, keepdims=True)
    ez = np.exp(z - m)
    denom = ez.sum(axis=1, keepdims=True)
    rows = np.arange(n)
    log_p = (z[rows, labels] - m[:, 0]) - np.log(denom[:, 0])
    loss = -log_p.mean()
    p = ez / denom
    p[rows, labels] -= 1.0
    p /= n
    dW = inputs.T @ p
    db = p.sum(axis=0)
    return float(loss), dW, db


def adam_update(param, grad, m, v, t, lr, beta1, beta2, eps):
    """One bias-corrected Adam update, in place, on flat float64 views.

    ``t`` is the already-incremented step count (1 on the first update).
    """
    m *= beta1
    m += (1.0 - beta1) * grad
    v *= beta2
    v += (1.0 - beta2) * (grad * grad)
    mhat = m / (1.0 - beta1**t)
    vhat = v / (1.0 - beta2**t)
    param -= lr * mhat / (np.sqrt(vhat) + eps)
