"""Link analysis: damped-resolvent connectivity scores and neighbor ranking.

The connectivity ("intimacy") matrix is alpha * inv(I - (1-alpha) * A')
where A' is the column-normalized adjacency matrix. Small systems are
solved by direct dense inversion; larger ones by per-column damped
fixed-point iteration (a contraction for alpha > 0). Very large corpora
skip materializing the full matrix and solve rows on demand.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.sparse import csr_matrix

from structembed import _kernels
from structembed.corpus import AdjacencyMatrix

# direct dense solve below this size; on-demand row solves above the lazy bound
DENSE_SOLVE_MAX_N = 256
LAZY_THRESHOLD_N = 20_000

CACHE_MAGIC = b"SEIM"


class IntimacyConvergenceError(RuntimeError):
    """Raised when the iterative solve fails to reach tolerance."""

    def __init__(self, residual: float, max_iters: int):
        super().__init__(
            f"intimacy solve did not converge within {max_iters} iterations "
            f"(max residual {residual:.3e})"
        )
        self.residual = residual


def column_normalize(adj: AdjacencyMatrix) -> csr_matrix:
    """Return A' with every nonzero column scaled to sum 1.

    All-zero (dangling) columns are left all-zero; there is no teleport
    correction, keeping the resolvent formula literal.
    """
    rows, cols, vals = adj.coo()
    mat = csr_matrix(
        (np.asarray(vals, dtype=np.float64), (rows, cols)), shape=(adj.n, adj.n)
    )
    col_sums = np.asarray(mat.sum(axis=0)).ravel()
    scale = np.divide(1.0, col_sums, out=np.zeros_like(col_sums), where=col_sums > 0)
    mat = mat @ csr_matrix(
        (scale, (np.arange(adj.n), np.arange(adj.n))), shape=(adj.n, adj.n)
    )
    return mat.tocsr()


class IntimacyMatrix:
    """Pairwise connectivity strengths; row(i) ranks everything against doc i.

    Either densely backed (values is an (n, n) float64 array) or lazy, in
    which case rows are solved on first access and cached.
    """

    def __init__(
        self,
        n: int,
        alpha: float,
        values: np.ndarray | None = None,
        a_prime: csr_matrix | None = None,
        tol: float = 1e-8,
        max_iters: int = 1000,
    ):
        self.n = n
        self.alpha = alpha
        self.values = values
        self.tol = tol
        self.max_iters = max_iters
        self._row_cache: dict[int, np.ndarray] = {}
        self._a_prime_t = a_prime.T.tocsr() if a_prime is not None else None
        if values is None and self._a_prime_t is None:
            raise ValueError("need dense values or A' for lazy row solves")

    def row(self, i: int) -> np.ndarray:
        if not 0 <= i < self.n:
            raise IndexError(f"row {i} out of range for n={self.n}")
        if self.values is not None:
            return self.values[i]
        cached = self._row_cache.get(i)
        if cached is not None:
            return cached
        t = self._a_prime_t
        row, residual = _kernels.intimacy_row(
            t.indptr, t.indices, t.data, self.n, i, self.alpha, self.tol, self.max_iters
        )
        if residual > self.tol:
            raise IntimacyConvergenceError(float(residual), self.max_iters)
        self._row_cache[i] = row
        return row

    def entry(self, i: int, j: int) -> float:
        return float(self.row(i)[j])

    def save_cache(self, path: str | Path) -> None:
        """Write rows as little-endian float32, row-major, after an 8-byte
        header (magic + n). Lazy matrices are materialized first."""
        if self.values is not None:
            dense = self.values
        else:
            dense = np.stack([self.row(i) for i in range(self.n)])
        with open(path, "wb") as fh:
            fh.write(CACHE_MAGIC)
            fh.write(struct.pack("<I", self.n))
            fh.write(np.ascontiguousarray(dense, dtype="<f4").tobytes())

    @classmethod
    def load_cache(cls, path: str | Path, alpha: float) -> "IntimacyMatrix":
        with open(path, "rb") as fh:
            magic = fh.read(4)
            if magic != CACHE_MAGIC:
                raise ValueError(f"not an intimacy cache file: {path}")
            (n,) = struct.unpack("<I", fh.read(4))
            raw = fh.read()
        values = np.frombuffer(raw, dtype="<f4").astype(np.float64).reshape(n, n)
        return cls(n=n, alpha=alpha, values=values)


def compute_intimacy(
    adj: AdjacencyMatrix,
    alpha: float,
    tol: float = 1e-8,
    max_iters: int = 1000,
    method: str = "auto",
    lazy: bool | None = None,
) -> IntimacyMatrix:
    """Compute alpha * inv(I - (1-alpha)A') within `tol` per column.

    `method` is "auto" (dense direct solve for n <= 256, iterative above),
    "dense", or "iterative". `lazy` defers row computation entirely;
    defaults to True only for n > 20000.
    """
    if not 0.0 < alpha <= 1.0:
        raise ValueError("alpha must be in (0, 1]")
    n = adj.n
    if n < 1:
        raise ValueError("adjacency must have n >= 1")
    a_prime = column_normalize(adj)

    if lazy is None:
        lazy = n > LAZY_THRESHOLD_N
    if lazy:
        return IntimacyMatrix(
            n=n, alpha=alpha, a_prime=a_prime, tol=tol, max_iters=max_iters
        )

    if method == "auto":
        method = "dense" if n <= DENSE_SOLVE_MAX_N else "iterative"
    if method == "dense":
        m = np.eye(n) - (1.0 - alpha) * a_prime.toarray()
        values = np.linalg.solve(m, alpha * np.eye(n))
        residual = float(np.abs(m @ values - alpha * np.eye(n)).max())
        if residual > tol:
            raise IntimacyConvergenceError(residual, max_iters=1)
    elif method == "iterative":
        values, residuals = _kernels.intimacy_columns(
            a_prime.indptr, a_prime.indices, a_prime.data, n, alpha, tol, max_iters
        )
        worst = float(residuals.max())
        if worst > tol:
            raise IntimacyConvergenceError(worst, max_iters)
    else:
        raise ValueError(f"unknown method: {method!r}")
    return IntimacyMatrix(n=n, alpha=alpha, values=values)


@dataclass(frozen=True)
class RankedNeighbors:
    """All other documents ordered for partitioning around one anchor.

    `order` lists doc indices with the connected block first (positions
    1..n, strongest connection at position 1) followed by zero-connectivity
    documents; ties and the zero block are ordered by ascending doc index
    for determinism. Position k (1-based) is order[k-1].
    """

    anchor: int
    order: np.ndarray
    n: int

    @property
    def total(self) -> int:
        return len(self.order)

    def doc_at(self, position: int) -> int:
        """Map a 1-based position to a document index."""
        return int(self.order[position - 1])


def rank_neighbors(intimacy: IntimacyMatrix, i: int) -> RankedNeighbors:
    """Rank all documents except `i` by connectivity strength to it."""
    row = intimacy.row(i)
    others = np.concatenate([np.arange(i), np.arange(i + 1, intimacy.n)])
    vals = row[others]
    # primary: descending strength; secondary: ascending doc index
    order = others[np.lexsort((others, -vals))]
    n = int((vals > 0).sum())
    return RankedNeighbors(anchor=i, order=order, n=n)
