# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled Q-network kernels; same contract as ``_kernels_py``.

Matrices are row-major in the flat parameter vector. BLAS is column-major,
so each row-major product below is issued as its transpose.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, fabs, fmax, pow
from libc.string cimport memcpy, memset
from scipy.linalg.cython_blas cimport dgemm, dgemv

cnp.import_array()

NAME = "cython"


def n_params(sizes):
    n, h1, h2, o = sizes
    return h1 * n + h1 + h2 * h1 + h2 + o * h2 + o


cdef struct Layout:
    int n, h1, h2, o
    Py_ssize_t w1, b1, w2, b2, w3, b3, total


cdef Layout make_layout(sizes):
    cdef Layout L
    n, h1, h2, o = sizes
    L.n = n
    L.h1 = h1
    L.h2 = h2
    L.o = o
    L.w1 = 0
    L.b1 = L.w1 + L.h1 * L.n
    L.w2 = L.b1 + L.h1
    L.b2 = L.w2 + L.h2 * L.h1
    L.w3 = L.b2 + L.h2
    L.b3 = L.w3 + L.o * L.h2
    L.total = L.b3 + L.o
    return L


cdef void forward_one(double* th, Layout* L, int s, double* h1, double* h2, double* q) nogil:
    cdef int k
    cdef char tr = b'T'
    cdef double one = 1.0, zero = 0.0
    cdef int inc = 1
    for k in range(L.h1):
        h1[k] = th[L.w1 + k * L.n + s] + th[L.b1 + k]
        if h1[k] < 0.0:
            h1[k] = 0.0
    dgemv(&tr, &L.h1, &L.h2, &one, th + L.w2, &L.h1, h1, &inc, &zero, h2, &inc)
    for k in range(L.h2):
        h2[k] += th[L.b2 + k]
        if h2[k] < 0.0:
            h2[k] = 0.0
    dgemv(&tr, &L.h2, &L.o, &one, th + L.w3, &L.h2, h2, &inc, &zero, q, &inc)
    for k in range(L.o):
        q[k] += th[L.b3 + k]


cdef int argmax(double* q, int n) nogil:
    cdef int a = 0, k
    for k in range(1, n):
        if q[k] > q[a]:
            a = k
    return a


def q_values(double[::1] theta, sizes, obs):
    cdef Layout L = make_layout(sizes)
    cdef int[::1] o = np.ascontiguousarray(obs, dtype=np.int32)
    cdef Py_ssize_t B = o.shape[0], b
    out = np.empty((B, L.o))
    cdef double[:, ::1] q = out
    cdef double[::1] h1 = np.empty(L.h1), h2 = np.empty(L.h2)
    for b in range(B):
        forward_one(&theta[0], &L, o[b], &h1[0], &h2[0], &q[b, 0])
    return out


cdef double batch_grad(double* th, Layout* L, int B, int* obs, int* act, double* y,
                       double* z1, double* z2, double* q, double* dz1, double* dz2,
                       double* grad) nogil:
    """Fill ``grad`` with the Huber-loss gradient; returns the loss. Work arrays are B-sized."""
    cdef int b, k, j, a
    cdef char tn = b'N', tt = b'T'
    cdef double one = 1.0, zero = 0.0
    cdef double d, ad, loss = 0.0, gb
    cdef double* h1 = dz1  # reuse: h1 is consumed before dz1 is written
    cdef double* h2 = q + B * L.o

    memset(grad, 0, L.total * sizeof(double))
    # forward
    for b in range(B):
        for k in range(L.h1):
            z1[b * L.h1 + k] = th[L.w1 + k * L.n + obs[b]] + th[L.b1 + k]
            h1[b * L.h1 + k] = fmax(z1[b * L.h1 + k], 0.0)
    dgemm(&tt, &tn, &L.h2, &B, &L.h1, &one, th + L.w2, &L.h1, h1, &L.h1, &zero, z2, &L.h2)
    for b in range(B):
        for k in range(L.h2):
            z2[b * L.h2 + k] += th[L.b2 + k]
            h2[b * L.h2 + k] = fmax(z2[b * L.h2 + k], 0.0)
    dgemm(&tt, &tn, &L.o, &B, &L.h2, &one, th + L.w3, &L.h2, h2, &L.h2, &zero, q, &L.o)

    # gradients of W2 need h1 before dz1 overwrites it
    for b in range(B):
        a = act[b]
        d = q[b * L.o + a] + th[L.b3 + a] - y[b]
        ad = fabs(d)
        if ad < 1.0:
            loss += 0.5 * d * d
            gb = d / B
        else:
            loss += ad - 0.5
            gb = (1.0 if d > 0 else -1.0) / B
        grad[L.b3 + a] += gb
        for k in range(L.h2):
            grad[L.w3 + a * L.h2 + k] += gb * h2[b * L.h2 + k]
            dz2[b * L.h2 + k] = gb * th[L.w3 + a * L.h2 + k] * (z2[b * L.h2 + k] > 0.0)
    for b in range(B):
        for k in range(L.h2):
            grad[L.b2 + k] += dz2[b * L.h2 + k]
    dgemm(&tn, &tt, &L.h1, &L.h2, &B, &one, h1, &L.h1, dz2, &L.h2, &zero, grad + L.w2, &L.h1)
    # dz1 <- dz2 @ W2, masked by the first-layer activation
    dgemm(&tn, &tn, &L.h1, &B, &L.h2, &one, th + L.w2, &L.h1, dz2, &L.h2, &zero, dz1, &L.h1)
    for b in range(B):
        for k in range(L.h1):
            dz1[b * L.h1 + k] *= (z1[b * L.h1 + k] > 0.0)
            grad[L.w1 + k * L.n + obs[b]] += dz1[b * L.h1 + k]
            grad[L.b1 + k] += dz1[b * L.h1 + k]
    return loss / B


def loss_and_grad(double[::1] theta, sizes, obs, act, y):
    cdef Layout L = make_layout(sizes)
    cdef int[::1] o = np.ascontiguousarray(obs, dtype=np.int32)
    cdef int[::1] a = np.ascontiguousarray(act, dtype=np.int32)
    cdef double[::1] yy = np.ascontiguousarray(y, dtype=np.float64)
    cdef int B = o.shape[0]
    grad = np.zeros(L.total)
    cdef double[::1] g = grad
    cdef double[::1] z1 = np.empty(B * L.h1), z2 = np.empty(B * L.h2)
    cdef double[::1] q = np.empty(B * (L.o + L.h2)), dz1 = np.empty(B * L.h1), dz2 = np.empty(B * L.h2)
    loss = batch_grad(&theta[0], &L, B, &o[0], &a[0], &yy[0], &z1[0], &z2[0], &q[0], &dz1[0], &dz2[0], &g[0])
    return loss, grad


cdef double clip_norm(double* g, Py_ssize_t n, double max_norm) nogil:
    cdef Py_ssize_t k
    cdef double s = 0.0, coef
    for k in range(n):
        s += g[k] * g[k]
    s = sqrt(s)
    coef = max_norm / (s + 1e-6)
    if coef < 1.0:
        for k in range(n):
            g[k] *= coef
    return s


def clip_grad_norm(double[::1] grad, double max_norm):
    return clip_norm(&grad[0], grad.shape[0], max_norm)


cdef void adam(double* th, double* g, double* m, double* v, Py_ssize_t n, long long t,
               double lr, double b1, double b2, double eps) nogil:
    cdef Py_ssize_t k
    cdef double bc1 = 1.0 - pow(b1, <double>t)
    cdef double inv_sbc2 = 1.0 / sqrt(1.0 - pow(b2, <double>t))
    cdef double step = lr / bc1
    cdef double c1 = 1.0 - b1, c2 = 1.0 - b2
    for k in range(n):
        m[k] = b1 * m[k] + c1 * g[k]
        v[k] = b2 * v[k] + c2 * g[k] * g[k]
        th[k] -= step * m[k] / (sqrt(v[k]) * inv_sbc2 + eps)


def adam_update(double[::1] theta, double[::1] grad, double[::1] m, double[::1] v, long long t,
                double lr, double beta1, double beta2, double eps):
    adam(&theta[0], &grad[0], &m[0], &v[0], theta.shape[0], t, lr, beta1, beta2, eps)


cdef void target_values(double* tg, Layout* L, int n_states, double* next_v,
                        double* h1, double* h2, double* q) nogil:
    cdef int s
    for s in range(n_states):
        forward_one(tg, L, s, h1, h2, q)
        next_v[s] = q[argmax(q, L.o)]


def train_loop(double[::1] theta, double[::1] target, double[::1] adam_m, double[::1] adam_v,
               cnp.int64_t[::1] counters, sizes,
               int[::1] buf_obs, int[::1] buf_act, double[::1] buf_rew, int[::1] buf_next,
               cnp.uint8_t[::1] buf_done, cnp.int64_t[::1] buf_state,
               double[:, ::1] reward_table, double[::1] eps_u, int[::1] rand_act, double[::1] batch_u,
               long long timesteps, int batch_size, double lr, double gamma, long long target_interval,
               double eps_start, double eps_end, double exploration_fraction, double max_grad_norm,
               int train_freq, long long learning_starts, double beta1, double beta2, double adam_eps):
    cdef Layout L = make_layout(sizes)
    cdef int n_states = reward_table.shape[0]
    cdef Py_ssize_t capacity = buf_obs.shape[0]
    cdef int B = batch_size
    cdef double[::1] next_v = np.empty(n_states)
    cdef double[::1] h1 = np.empty(L.h1), h2 = np.empty(L.h2), qs = np.empty(L.o)
    cdef double[::1] z1 = np.empty(B * L.h1), z2 = np.empty(B * L.h2)
    cdef double[::1] qb = np.empty(B * (L.o + L.h2)), dz1 = np.empty(B * L.h1), dz2 = np.empty(B * L.h2)
    cdef double[::1] grad = np.empty(L.total), yb = np.empty(B)
    cdef int[::1] ob = np.empty(B, dtype=np.int32), ab = np.empty(B, dtype=np.int32)
    cdef double* th = &theta[0]
    cdef double* tg = &target[0]
    cdef double explore = exploration_fraction * timesteps
    cdef double eps
    cdef long long step, total, g = 0, pos, size
    cdef int s = 0, a, done, b, idx

    with nogil:
        target_values(tg, &L, n_states, &next_v[0], &h1[0], &h2[0], &qs[0])
        for step in range(timesteps):
            if step < explore:
                eps = eps_start + (eps_end - eps_start) * (step / explore)
            else:
                eps = eps_end
            if eps_u[step] < eps:
                a = rand_act[step]
            else:
                forward_one(th, &L, s, &h1[0], &h2[0], &qs[0])
                a = argmax(&qs[0], L.o)
            done = s == n_states - 1
            pos = buf_state[0]
            buf_obs[pos] = s
            buf_act[pos] = a
            buf_rew[pos] = reward_table[s, a]
            buf_next[pos] = s if done else s + 1
            buf_done[pos] = done
            buf_state[0] = (pos + 1) % capacity
            if buf_state[1] < capacity:
                buf_state[1] += 1
            counters[1] += 1
            total = counters[1]

            size = buf_state[1]
            if step >= learning_starts and (step + 1) % train_freq == 0 and size >= B:
                for b in range(B):
                    idx = <int>(batch_u[g * B + b] * size)
                    if idx > size - 1:
                        idx = <int>(size - 1)
                    ob[b] = buf_obs[idx]
                    ab[b] = buf_act[idx]
                    yb[b] = buf_rew[idx]
                    if not buf_done[idx]:
                        yb[b] += gamma * next_v[buf_next[idx]]
                g += 1
                batch_grad(th, &L, B, &ob[0], &ab[0], &yb[0], &z1[0], &z2[0], &qb[0], &dz1[0], &dz2[0], &grad[0])
                clip_norm(&grad[0], L.total, max_grad_norm)
                counters[0] += 1
                counters[2] += 1
                adam(th, &grad[0], &adam_m[0], &adam_v[0], L.total, counters[0], lr, beta1, beta2, adam_eps)
            if total % target_interval == 0:
                memcpy(tg, th, L.total * sizeof(double))
                target_values(tg, &L, n_states, &next_v[0], &h1[0], &h2[0], &qs[0])
            s = 0 if done else s + 1
