# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled training kernels: fused softmax/gradient passes.

Matrix products go through numpy (BLAS); the per-row softmax, loss, and
gradient accumulation run as single typed loops without temporaries.
Semantics match ``numpy_backend`` exactly up to roundoff.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, log, sqrt

cnp.import_array()

NAME = "cython"


def infonce_loss_grad(cnp.ndarray[cnp.float64_t, ndim=2] xs,
                      cnp.ndarray[cnp.float64_t, ndim=2] es,
                      cnp.ndarray[cnp.float64_t, ndim=2] W):
    """Contrastive classification loss over a batch of aligned pairs.

    Returns ``(loss, dloss/dW)``; see the numpy backend for the contract.
    """
    cdef cnp.ndarray[cnp.float64_t, ndim=2] st = np.dot(es, np.dot(xs, W).T)
    cdef Py_ssize_t n = st.shape[0]
    cdef double[:, ::1] g = st
    cdef double loss = 0.0
    cdef double mx, s, val
    cdef Py_ssize_t i, j
    for i in range(n):
        mx = g[i, 0]
        for j in range(1, n):
            if g[i, j] > mx:
                mx = g[i, j]
        s = 0.0
        for j in range(n):
            s += exp(g[i, j] - mx)
        loss -= g[i, i] - mx - log(s)
        # overwrite the logit row with softmax probabilities
        for j in range(n):
            g[i, j] = exp(g[i, j] - mx) / s
        g[i, i] -= 1.0
    loss /= n
    cdef cnp.ndarray[cnp.float64_t, ndim=2] dW = np.dot(xs.T, np.dot(st.T, es))
    dW /= n
    return loss, dW


def xent_loss_grad(cnp.ndarray[cnp.float64_t, ndim=2] inputs,
                   cnp.ndarray[cnp.int64_t, ndim=1] labels,
                   cnp.ndarray[cnp.float64_t, ndim=2] W,
                   cnp.ndarray[cnp.float64_t, ndim=1] b):
    """Softmax cross-entropy of a linear classifier, with gradients."""
    cdef cnp.ndarray[cnp.float64_t, ndim=2] z = np.dot(inputs, W)
    cdef Py_ssize_t n = z.shape[0]
    cdef Py_ssize_t c = z.shape[1]
    cdef double[:, ::1] zv = z
    cdef double[::1] bv = b
    cdef cnp.int64_t[::1] yv = labels
    cdef double loss = 0.0
    cdef double mx, s
    cdef Py_ssize_t i, j
    for i in range(n):
        for j in range(c):
            zv[i, j] += bv[j]
        mx = zv[i, 0]
        for j in range(1, c):
            if zv[i, j] > mx:
                mx = zv[i, j]
        s = 0.0
        for j in range(c):
            s += exp(zv[i, j] - mx)
        loss -= zv[i, yv[i]] - mx - log(s)
        for j in range(c):
            zv[i, j] = exp(zv[i, j] - mx) / s
        zv[i, yv[i]] -= 1.0
        for j in range(c):
            zv[i, j] /= n
    loss /= n
    cdef cnp.ndarray[cnp.float64_t, ndim=2] dW = np.dot(inputs.T, z)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] db = z.sum(axis=0)
    return loss, dW, db


def adam_update(cnp.ndarray[cnp.float64_t, ndim=1] param,
                cnp.ndarray[cnp.float64_t, ndim=1] grad,
                cnp.ndarray[cnp.float64_t, ndim=1] m,
                cnp.ndarray[cnp.float64_t, ndim=1] v,
                long t, double lr, double beta1, double beta2, double eps):
    """One bias-corrected Adam update, in place, on flat float64 views."""
    cdef Py_ssize_t k = param.shape[0]
    cdef double bc1 = 1.0 - beta1 ** t
    cdef double bc2 = 1.0 - beta2 ** t
    cdef double[::1] p = param
    cdef double[::1] g = grad
    cdef double[::1] mv = m
    cdef double[::1] vv = v
    cdef double gi, mhat, vhat
    cdef Py_ssize_t i
    for i in range(k):
        gi = g[i]
        mv[i] = beta1 * mv[i] + (1.0 - beta1) * gi
        vv[i] = beta2 * vv[i] + (1.0 - beta2) * gi * gi
        mhat = mv[i] / bc1
        vhat = vv[i] / bc2
        p[i] -= lr * mhat / (sqrt(vhat) + eps)
