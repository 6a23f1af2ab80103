"""Hot numeric kernels: numba-jitted implementations with numpy fallbacks.

The backend is chosen once at import time. Set STRUCTEMBED_NUMBA=0 to force
the pure-numpy path (e.g. for debugging or on platforms without numba);
anything else uses numba when it is importable.

Both paths implement identical arithmetic: per-column damped fixed-point
iteration for the link-analysis solve, and per-document top-K weighted
similarity aggregation for index scoring. `benchmarks/bench_kernels.py`
compares the two.
"""

from __future__ import annotations

import os

import numpy as np

_flag = os.environ.get("STRUCTEMBED_NUMBA", "1").strip().lower()
_want_numba = _flag not in ("0", "false", "off", "no")

USING_NUMBA = False
if _want_numba:
    try:
        from numba import njit, prange

        USING_NUMBA = True
    except ImportError:  # pragma: no cover - exercised via env flag instead
        USING_NUMBA = False


def backend_name() -> str:
    return "numba" if USING_NUMBA else "numpy"


# ---------------------------------------------------------------------------
# Damped fixed-point solve: one column j of A(i,j) = alpha * inv(I-(1-a)A')
# solves (I - (1-a)A') x = alpha * e_j by iterating
#     x <- alpha * e_j + (1-a) * A' x.
# The step x_k - x_{k+1} equals the residual of x_k exactly, so iteration
# stops once the step max-norm is <= tol and returns the verified iterate.
# ---------------------------------------------------------------------------


def _intimacy_columns_numpy(indptr, indices, data, n, alpha, tol, max_iters):
    from scipy.sparse import csr_matrix

    a_prime = csr_matrix((data, indices, indptr), shape=(n, n))
    x = np.zeros((n, n), dtype=np.float64)
    residuals = np.full(n, alpha, dtype=np.float64)
    for _ in range(max_iters):
        x_next = (1.0 - alpha) * (a_prime @ x)
        x_next[np.arange(n), np.arange(n)] += alpha
        residuals = np.abs(x - x_next).max(axis=0)
        if residuals.max() <= tol:
            return x, residuals
        x = x_next
    return x, residuals


if USING_NUMBA:

    @njit(parallel=True, cache=True)
    def _intimacy_columns_numba(indptr, indices, data, n, alpha, tol, max_iters):  # pragma: no cover - jitted
        out = np.zeros((n, n), dtype=np.float64)
        residuals = np.empty(n, dtype=np.float64)
        for j in prange(n):
            x = np.zeros(n, dtype=np.float64)
            x_next = np.zeros(n, dtype=np.float64)
            residual = alpha
            for _ in range(max_iters):
                for i in range(n):
                    acc = 0.0
                    for k in range(indptr[i], indptr[i + 1]):
                        acc += data[k] * x[indices[k]]
                    x_next[i] = (1.0 - alpha) * acc
                x_next[j] += alpha
                residual = 0.0
                for i in range(n):
                    d = abs(x[i] - x_next[i])
                    if d > residual:
                        residual = d
                if residual <= tol:
                    break
                for i in range(n):
                    x[i] = x_next[i]
            residuals[j] = residual
            for i in range(n):
                out[i, j] = x[i]
        return out, residuals


def intimacy_columns(indptr, indices, data, n, alpha, tol, max_iters):
    """Solve all n columns; returns (matrix, per-column residuals).

    Column j of the returned matrix satisfies
    ``max|.| ((I-(1-alpha)A') x - alpha e_j) <= residuals[j]``.
    Columns whose residual exceeds tol did not converge within max_iters.
    """
    indptr = np.ascontiguousarray(indptr, dtype=np.int64)
    indices = np.ascontiguousarray(indices, dtype=np.int64)
    data = np.ascontiguousarray(data, dtype=np.float64)
    if USING_NUMBA:
        return _intimacy_columns_numba(
            indptr, indices, data, n, float(alpha), float(tol), int(max_iters)
        )
    return _intimacy_columns_numpy(
        indptr, indices, data, n, float(alpha), float(tol), int(max_iters)
    )


def intimacy_row(indptr_t, indices_t, data_t, n, i, alpha, tol, max_iters):
    """Solve one row of the intimacy matrix via the transposed system.

    Row i of alpha*inv(M) is column i of alpha*inv(M^T), so the caller
    passes CSR arrays of the TRANSPOSED column-normalized adjacency.
    Returns (row, residual).
    """
    from scipy.sparse import csr_matrix

    a_t = csr_matrix((data_t, indices_t, indptr_t), shape=(n, n))
    x = np.zeros(n, dtype=np.float64)
    residual = alpha
    for _ in range(max_iters):
        x_next = (1.0 - alpha) * (a_t @ x)
        x_next[i] += alpha
        residual = np.abs(x - x_next).max()
        if residual <= tol:
            return x, residual
        x = x_next
    return x, residual


# ---------------------------------------------------------------------------
# Top-K weighted fragment score aggregation (per document).
# sims holds one cosine similarity per index entry; fragments of document d
# occupy sims[offsets[d]:offsets[d+1]]. weights[k] is the rank-k weight
# exp(-omega*(k+1)). Selection is by descending similarity with
# first-occurrence tie break, matching a stable descending argsort.
# ---------------------------------------------------------------------------


def _doc_scores_numpy(sims, offsets, weights):
    n_docs = len(offsets) - 1
    k_max = len(weights)
    scores = np.zeros(n_docs, dtype=np.float64)
    top_idx = np.full((n_docs, k_max), -1, dtype=np.int64)
    for d in range(n_docs):
        lo, hi = offsets[d], offsets[d + 1]
        block = sims[lo:hi]
        order = np.argsort(-block, kind="stable")[:k_max]
        acc = 0.0
        for k, ordinal in enumerate(order):
            acc += weights[k] * block[ordinal]
            top_idx[d, k] = lo + ordinal
        scores[d] = acc
    return scores, top_idx


if USING_NUMBA:

    @njit(parallel=True, cache=True)
    def _doc_scores_numba(sims, offsets, weights):  # pragma: no cover - jitted
        n_docs = len(offsets) - 1
        k_max = len(weights)
        scores = np.zeros(n_docs, dtype=np.float64)
        top_idx = np.full((n_docs, k_max), -1, dtype=np.int64)
        for d in prange(n_docs):
            lo = offsets[d]
            hi = offsets[d + 1]
            size = hi - lo
            used = np.zeros(size, dtype=np.bool_)
            acc = 0.0
            n_take = min(k_max, size)
            for k in range(n_take):
                best = -1
                best_val = -np.inf
                for s in range(size):
                    if not used[s] and sims[lo + s] > best_val:
                        best = s
                        best_val = sims[lo + s]
                used[best] = True
                acc += weights[k] * best_val
                top_idx[d, k] = lo + best
            scores[d] = acc
        return scores, top_idx


def doc_scores(sims, offsets, weights):
    """Aggregate fragment similarities into per-document scores.

    Returns (scores[n_docs], top_idx[n_docs, K]) where top_idx holds global
    fragment indices of the contributing similarities in descending order,
    -1-padded for documents with fewer than K fragments.
    """
    sims = np.ascontiguousarray(sims, dtype=np.float64)
    offsets = np.ascontiguousarray(offsets, dtype=np.int64)
    weights = np.ascontiguousarray(weights, dtype=np.float64)
    if USING_NUMBA:
        return _doc_scores_numba(sims, offsets, weights)
    return _doc_scores_numpy(sims, offsets, weights)
