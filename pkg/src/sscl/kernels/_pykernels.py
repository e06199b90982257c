"""Pure numpy implementations of the hot kernels.

Every function here has a twin with the same signature in ``_ckernels.pyx``.
Inputs are assumed validated by the caller: C-contiguous float64, shapes
composing.
"""
import numpy as np

NAME = "python"


def mlp_forward(weights, biases, x):
    """Return the activation list ``[x, h1, ..., z]``; hidden layers use ReLU."""
    acts = [x]
    h = x
    last = len(weights) - 1
    for i, W in enumerate(weights):
        h = h @ W
        b = biases[i]
        if b is not None:
            h += b
        if i < last:
            np.maximum(h, 0.0, out=h)
        acts.append(h)
    return acts


def mlp_backward(weights, acts, upstream):
    """Reverse pass. Returns ``(weight_grads, bias_grads, input_grad)``."""
    n = len(weights)
    wgrads = [None] * n
    bgrads = [None] * n
    delta = upstream
    for i in range(n - 1, -1, -1):
        a_in = acts[i]
        wgrads[i] = a_in.T @ delta
        bgrads[i] = delta.sum(axis=0)
        dx = delta @ weights[i].T
        if i > 0:
            dx *= a_in > 0.0
        delta = dx
    return wgrads, bgrads, delta


def softmax_rows(z):
    shifted = z - z.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def xent_rows(z, y):
    """Per-row cross-entropy and ``softmax(z) - onehot(y)``."""
    shifted = z - z.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    s = e.sum(axis=1, keepdims=True)
    rows = np.arange(z.shape[0])
    losses = np.log(s[:, 0]) - shifted[rows, y]
    grad = e / s
    grad[rows, y] -= 1.0
    return losses, grad


def soft_xent_rows(z, target):
    """Cross-entropy against soft targets and its logit gradient ``softmax(z) - target``."""
    shifted = z - z.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    s = e.sum(axis=1, keepdims=True)
    logp = shifted - np.log(s)
    losses = -(target * logp).sum(axis=1)
    return losses, e / s - target


def qp_dual_pg(P, q, step, max_iters, tol):
    """Projected gradient on ``min 1/2 v'Pv + q'v, v >= 0``.

    Stops when the projected-gradient residual ``||v - max(0, v - (Pv+q))||_inf``
    drops below ``tol``. Returns ``(v, iterations, converged)``.
    """
    k = q.shape[0]
    v = np.zeros(k)
    for it in range(1, max_iters + 1):
        grad = P @ v + q
        resid = np.max(np.abs(v - np.maximum(v - grad, 0.0)))
        if resid < tol:
            return v, it - 1, True
        v = np.maximum(v - step * grad, 0.0)
    grad = P @ v + q
    resid = np.max(np.abs(v - np.maximum(v - grad, 0.0)))
    return v, max_iters, bool(resid < tol)
