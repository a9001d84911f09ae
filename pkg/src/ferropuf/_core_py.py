"""NumPy implementation of the attack kernels.

Mirrors ``ferropuf._core`` (Cython) function for function; used when the
compiled extension is unavailable or ``FERROPUF_PURE_PYTHON=1`` is set.

Conventions shared by both backends: ``phi`` is the (N, D) feature matrix,
``signs`` holds the +/-1 responses (+1 for bit 0, -1 for bit 1), ``W`` is the
(k, D) weight matrix.  The model value is ``t = prod_j (W_j . phi)`` and the
probability of bit 1 is ``logistic(-t)``.
"""
import numpy as np
from scipy.special import expit


def _others(T):
    # product over all arms except j, without dividing (T may contain zeros)
    k = T.shape[1]
    out = np.ones_like(T)
    for j in range(k):
        for m in range(k):
            if m != j:
                out[:, j] *= T[:, m]
    return out


def xor_loss_grad(phi, signs, W):
    """Mean logistic loss, its gradient w.r.t. ``W`` and the number of correct predictions."""
    phi = np.ascontiguousarray(phi, dtype=np.float64)
    signs = np.ascontiguousarray(signs, dtype=np.float64)
    W = np.ascontiguousarray(W, dtype=np.float64)
    T = phi @ W.T
    t = T.prod(axis=1)
    z = signs * t
    loss = float(np.logaddexp(0.0, -z).mean())
    dldt = -signs * expit(-z) / len(signs)
    grad = (_others(T) * dldt[:, None]).T @ phi
    correct = int(np.count_nonzero((t < 0) == (signs < 0)))
    return loss, grad, correct


def xor_predict(phi, W):
    """Predicted bits: 1 iff the arm product is negative."""
    T = np.asarray(phi, dtype=np.float64) @ np.asarray(W, dtype=np.float64).T
    return (T.prod(axis=1) < 0).astype(np.uint8)


def rprop_fit(phi, signs, W0, eta_plus, eta_minus, delta_init, delta_min, delta_max,
              max_epochs, patience):
    """Full-batch RProp with gradient zeroing on sign change.

    Stops after ``patience`` epochs without a new best training accuracy or
    after ``max_epochs``.  Returns ``(W_best, best_correct, epochs, losses)``
    where ``W_best`` are the weights at the best-accuracy epoch.
    """
    W = np.array(W0, dtype=np.float64, copy=True)
    delta = np.full_like(W, delta_init)
    g_prev = np.zeros_like(W)
    best_W = W.copy()
    best_correct = -1
    stale = 0
    losses = []
    epoch = 0
    while epoch < max_epochs:
        loss, g, correct = xor_loss_grad(phi, signs, W)
        losses.append(loss)
        epoch += 1
        if correct > best_correct:
            best_correct = correct
            best_W[...] = W
            stale = 0
        else:
            stale += 1
            if stale >= patience:
                break
        if best_correct == len(signs):
            break
        s = g * g_prev
        up = s > 0
        down = s < 0
        delta[up] = np.minimum(delta[up] * eta_plus, delta_max)
        delta[down] = np.maximum(delta[down] * eta_minus, delta_min)
        g[down] = 0.0
        W -= np.sign(g) * delta
        g_prev = g
    return best_W, best_correct, epoch, np.array(losses)
