# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled attack kernels.  Same contract as ``ferropuf._core_py``.

The fused pass computes arm values, loss, gradient and accuracy in one sweep
over the CRPs without temporaries, and ``rprop_fit`` keeps the whole epoch
loop out of the interpreter.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log1p, fabs

cnp.import_array()


cdef inline double _softplus_sigmoid(double x, double *sig) noexcept nogil:
    # softplus(x) and logistic(x) from one shared exp(-|x|)
    cdef double e = exp(-fabs(x))
    if x >= 0:
        sig[0] = 1.0 / (1.0 + e)
        return x + log1p(e)
    sig[0] = e / (1.0 + e)
    return log1p(e)


cdef inline double _dot(const double[:, ::1] phi, Py_ssize_t n, const double[:, ::1] W,
                        Py_ssize_t j, Py_ssize_t D) noexcept nogil:
    # four independent partial sums so the adds pipeline instead of chaining
    cdef double a0 = 0.0, a1 = 0.0, a2 = 0.0, a3 = 0.0
    cdef Py_ssize_t d = 0
    while d + 4 <= D:
        a0 = a0 + phi[n, d] * W[j, d]
        a1 = a1 + phi[n, d + 1] * W[j, d + 1]
        a2 = a2 + phi[n, d + 2] * W[j, d + 2]
        a3 = a3 + phi[n, d + 3] * W[j, d + 3]
        d += 4
    while d < D:
        a0 = a0 + phi[n, d] * W[j, d]
        d += 1
    return (a0 + a1) + (a2 + a3)


cdef long _loss_grad(const double[:, ::1] phi, const double[::1] signs,
                     const double[:, ::1] W, double[:, ::1] grad,
                     double[::1] T, double *loss_out) noexcept nogil:
    cdef Py_ssize_t N = phi.shape[0], D = phi.shape[1], k = W.shape[0]
    cdef Py_ssize_t n, d, j, m
    cdef double t, z, s, sig, dldt, others, acc, loss = 0.0
    cdef long correct = 0
    for j in range(k):
        for d in range(D):
            grad[j, d] = 0.0
    for n in range(N):
        t = 1.0
        for j in range(k):
            acc = _dot(phi, n, W, j, D)
            T[j] = acc
            t = t * acc
        s = signs[n]
        z = s * t
        loss = loss + _softplus_sigmoid(-z, &sig)
        if (t < 0) == (s < 0):
            correct += 1
        dldt = -s * sig
        for j in range(k):
            others = dldt
            for m in range(k):
                if m != j:
                    others = others * T[m]
            for d in range(D):
                grad[j, d] = grad[j, d] + others * phi[n, d]
    for j in range(k):
        for d in range(D):
            grad[j, d] = grad[j, d] / N
    loss_out[0] = loss / N
    return correct


def xor_loss_grad(phi, signs, W):
    cdef double[:, ::1] phi_v = np.ascontiguousarray(phi, dtype=np.float64)
    cdef double[::1] s_v = np.ascontiguousarray(signs, dtype=np.float64)
    cdef double[:, ::1] W_v = np.ascontiguousarray(W, dtype=np.float64)
    grad = np.zeros((W_v.shape[0], W_v.shape[1]))
    cdef double[:, ::1] g_v = grad
    cdef double[::1] T = np.zeros(W_v.shape[0])
    cdef double loss = 0.0
    cdef long correct
    with nogil:
        correct = _loss_grad(phi_v, s_v, W_v, g_v, T, &loss)
    return loss, grad, int(correct)


def xor_predict(phi, W):
    cdef double[:, ::1] phi_v = np.ascontiguousarray(phi, dtype=np.float64)
    cdef double[:, ::1] W_v = np.ascontiguousarray(W, dtype=np.float64)
    cdef Py_ssize_t N = phi_v.shape[0], D = phi_v.shape[1], k = W_v.shape[0]
    out = np.zeros(N, dtype=np.uint8)
    cdef unsigned char[::1] o = out
    cdef Py_ssize_t n, j, d
    cdef double t
    with nogil:
        for n in range(N):
            t = 1.0
            for j in range(k):
                t = t * _dot(phi_v, n, W_v, j, D)
            o[n] = 1 if t < 0 else 0
    return out


def rprop_fit(phi, signs, W0, double eta_plus, double eta_minus, double delta_init,
              double delta_min, double delta_max, long max_epochs, long patience):
    cdef double[:, ::1] phi_v = np.ascontiguousarray(phi, dtype=np.float64)
    cdef double[::1] s_v = np.ascontiguousarray(signs, dtype=np.float64)
    W = np.array(W0, dtype=np.float64, copy=True, order="C")
    cdef double[:, ::1] W_v = W
    cdef Py_ssize_t k = W_v.shape[0], D = W_v.shape[1], N = phi_v.shape[0]
    best = W.copy()
    cdef double[:, ::1] best_v = best
    cdef double[:, ::1] g = np.zeros((k, D))
    cdef double[:, ::1] g_prev = np.zeros((k, D))
    cdef double[:, ::1] delta = np.full((k, D), delta_init)
    cdef double[::1] T = np.zeros(k)
    losses = np.zeros(max(max_epochs, 0))
    cdef double[::1] loss_v = losses
    cdef long epoch = 0, stale = 0, correct, best_correct = -1
    cdef double loss, s
    cdef Py_ssize_t j, d
    with nogil:
        while epoch < max_epochs:
            correct = _loss_grad(phi_v, s_v, W_v, g, T, &loss)
            loss_v[epoch] = loss
            epoch += 1
            if correct > best_correct:
                best_correct = correct
                best_v[:, :] = W_v
                stale = 0
            else:
                stale += 1
                if stale >= patience:
                    break
            if best_correct == N:
                break
            for j in range(k):
                for d in range(D):
                    s = g[j, d] * g_prev[j, d]
                    if s > 0:
                        delta[j, d] = delta[j, d] * eta_plus
                        if delta[j, d] > delta_max:
                            delta[j, d] = delta_max
                    elif s < 0:
                        delta[j, d] = delta[j, d] * eta_minus
                        if delta[j, d] < delta_min:
                            delta[j, d] = delta_min
                        g[j, d] = 0.0
                    if g[j, d] > 0:
                        W_v[j, d] = W_v[j, d] - delta[j, d]
                    elif g[j, d] < 0:
                        W_v[j, d] = W_v[j, d] + delta[j, d]
                    g_prev[j, d] = g[j, d]
    return best, int(best_correct), int(epoch), losses[:epoch].copy()
