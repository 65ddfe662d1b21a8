# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled E-step for online LDA.

Mirrors ``_kernels_py.e_step``; see that module for the contract.
"""

import numpy as np

from cython.parallel cimport prange
from libc.math cimport exp, fabs
from libc.stdint cimport int64_t
from libc.stdlib cimport free, malloc
from scipy.special.cython_special cimport psi

BACKEND = "cython"

cdef double PHINORM_EPS = 1e-100


cdef inline void _expect(const double* gamma, double* etheta, Py_ssize_t K) noexcept nogil:
    cdef Py_ssize_t k
    cdef double total = 0.0
    for k in range(K):
        total += gamma[k]
    total = psi(total)
    for k in range(K):
        etheta[k] = exp(psi(gamma[k]) - total)


cdef inline void _ratio(const double* ebd, Py_ssize_t K, const double* etheta,
                        const double* cts, Py_ssize_t n, double* ratio) noexcept nogil:
    cdef Py_ssize_t k, w
    cdef double norm
    for w in range(n):
        norm = 0.0
        for k in range(K):
            norm += etheta[k] * ebd[w * K + k]
        ratio[w] = cts[w] / (norm + PHINORM_EPS)


cdef int _fixed_point(const double* eb, Py_ssize_t V, Py_ssize_t K, const double* alpha,
                      const int64_t* ids, const double* cts, Py_ssize_t n,
                      double* gamma, double* last, double* etheta, double* ratio,
                      int max_iter, double tol) noexcept nogil:
    cdef Py_ssize_t k, w
    cdef int it
    cdef double total = 0.0, change, r
    # the document's columns of exp(E[log phi]), token-major so the loops run contiguously
    cdef double* ebd = <double*> malloc(max(1, n * K) * sizeof(double))
    if ebd == NULL:
        return -1
    for w in range(n):
        for k in range(K):
            ebd[w * K + k] = eb[k * V + ids[w]]
    for w in range(n):
        total += cts[w]
    for k in range(K):
        gamma[k] = alpha[k] + total / K
    _expect(gamma, etheta, K)
    _ratio(ebd, K, etheta, cts, n, ratio)
    for it in range(max_iter):
        for k in range(K):
            last[k] = gamma[k]
            gamma[k] = 0.0
        for w in range(n):
            r = ratio[w]
            for k in range(K):
                gamma[k] += r * ebd[w * K + k]
        for k in range(K):
            gamma[k] = alpha[k] + etheta[k] * gamma[k]
        _expect(gamma, etheta, K)
        _ratio(ebd, K, etheta, cts, n, ratio)
        change = 0.0
        for k in range(K):
            change += fabs(gamma[k] - last[k])
        if change / K < tol:
            break
    free(ebd)
    return 0


def e_step(const double[:, ::1] exp_elog_beta, const double[::1] alpha,
           const int64_t[::1] indptr, const int64_t[::1] ids, const double[::1] cts,
           const int64_t[::1] doc_index, int max_iter, double tol, int n_threads=1):
    cdef Py_ssize_t K = exp_elog_beta.shape[0]
    cdef Py_ssize_t V = exp_elog_beta.shape[1]
    cdef Py_ssize_t B = doc_index.shape[0]
    cdef Py_ssize_t b, d, lo, n, k, w, off
    cdef double r

    offsets_arr = np.zeros(B + 1, dtype=np.int64)
    cdef int64_t[::1] offsets = offsets_arr
    for b in range(B):
        d = doc_index[b]
        offsets[b + 1] = offsets[b] + indptr[d + 1] - indptr[d]

    gamma_arr = np.empty((B, K), dtype=np.float64)
    etheta_arr = np.empty((B, K), dtype=np.float64)
    last_arr = np.empty((B, K), dtype=np.float64)
    ratio_arr = np.empty(max(1, offsets[B]), dtype=np.float64)
    sstats_arr = np.zeros((K, V), dtype=np.float64)
    status_arr = np.zeros(max(1, B), dtype=np.intc)
    cdef int[::1] status = status_arr
    cdef double[:, ::1] gamma = gamma_arr
    cdef double[:, ::1] etheta = etheta_arr
    cdef double[:, ::1] last = last_arr
    cdef double[::1] ratio = ratio_arr
    cdef double[:, ::1] sstats = sstats_arr
    cdef const double* eb = &exp_elog_beta[0, 0]
    cdef const int64_t* ids_p = &ids[0] if ids.shape[0] else NULL
    cdef const double* cts_p = &cts[0] if cts.shape[0] else NULL

    if B == 0:
        return gamma_arr, sstats_arr

    with nogil:
        for b in prange(B, num_threads=max(1, n_threads), schedule="dynamic"):
            d = doc_index[b]
            lo = indptr[d]
            n = indptr[d + 1] - lo
            status[b] = _fixed_point(eb, V, K, &alpha[0], ids_p + lo, cts_p + lo, n,
                                     &gamma[b, 0], &last[b, 0], &etheta[b, 0], &ratio[offsets[b]],
                                     max_iter, tol)
    if np.any(status_arr):
        raise MemoryError("E-step scratch allocation failed")
    with nogil:
        # fixed document order keeps the reduction independent of n_threads
        for b in range(B):
            d = doc_index[b]
            lo = indptr[d]
            off = offsets[b]
            for w in range(offsets[b + 1] - off):
                r = ratio[off + w]
                for k in range(K):
                    sstats[k, ids_p[lo + w]] += etheta[b, k] * r
    return gamma_arr, sstats_arr
