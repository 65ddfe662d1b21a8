"""Pure-numpy E-step, used when the compiled kernel is unavailable.

``e_step`` runs the per-document variational fixed point for the documents
listed in ``doc_index`` (rows of a CSR corpus) against a frozen
``exp_elog_beta = exp(E[log phi])``. It returns ``gamma`` (one row per listed
document) and the raw sufficient statistics
``sum_d n_dw * exp(E[log theta_dk]) / phinorm_dw``; the caller multiplies by
``exp_elog_beta`` to finish them.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

import numpy as np
from scipy.special import psi

BACKEND = "python"

PHINORM_EPS = 1e-100


def _fixed_point(ebd, alpha, cts, max_iter, tol):
    K = alpha.shape[0]
    gamma = alpha + cts.sum() / K
    etheta = np.exp(psi(gamma) - psi(gamma.sum()))
    ratio = cts / (etheta @ ebd + PHINORM_EPS)
    for _ in range(max_iter):
        last = gamma
        gamma = alpha + etheta * (ebd @ ratio)
        etheta = np.exp(psi(gamma) - psi(gamma.sum()))
        ratio = cts / (etheta @ ebd + PHINORM_EPS)
        if np.abs(gamma - last).sum() / K < tol:
            break
    return gamma, etheta, ratio


def e_step(exp_elog_beta, alpha, indptr, ids, cts, doc_index, max_iter, tol, n_threads=1):
    K, V = exp_elog_beta.shape
    B = len(doc_index)

    def run(b):
        d = doc_index[b]
        lo, hi = indptr[d], indptr[d + 1]
        return _fixed_point(exp_elog_beta[:, ids[lo:hi]], alpha, cts[lo:hi], max_iter, tol)

    if n_threads > 1 and B > 1:
        with ThreadPoolExecutor(max_workers=n_threads) as pool:
            results = list(pool.map(run, range(B)))
    else:
        results = [run(b) for b in range(B)]

    gamma = np.empty((B, K))
    sstats = np.zeros((K, V))
    for b, (g, etheta, ratio) in enumerate(results):
        gamma[b] = g
        d = doc_index[b]
        sstats[:, ids[indptr[d]:indptr[d + 1]]] += np.outer(etheta, ratio)
    return gamma, sstats
