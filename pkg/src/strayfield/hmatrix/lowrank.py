"""Low-rank block construction: adaptive cross approximation (partial and
full pivoting) and SVD-based rank truncation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["LowRankBlock", "aca", "aca_full", "truncate_lowrank"]


@dataclass
class LowRankBlock:
    """Outer-product factorization A @ B.T of a matrix block.

    ``converged`` is False when the rank cap was hit before the stopping
    criterion was met; callers may then fall back to dense assembly.
    """

    a: np.ndarray        # (n_rows, k)
    b: np.ndarray        # (n_cols, k)
    converged: bool = True

    @property
    def rank(self) -> int:
        return self.a.shape[1]

    def dense(self) -> np.ndarray:
        return self.a @ self.b.T

    def storage_bytes(self) -> int:
        return (self.a.size + self.b.size) * 8


def aca(
    row_eval,
    col_eval,
    n_rows: int,
    n_cols: int,
    epsilon: float,
    max_rank: int | None = None,
) -> LowRankBlock:
    """Partially pivoted adaptive cross approximation.

    ``row_eval(i)`` returns row i of the block (length n_cols) and
    ``col_eval(j)`` returns column j (length n_rows).  Stops once the rank-1
    update satisfies ||a_k|| * ||b_k|| <= epsilon * ||sum of updates||_F,
    where the Frobenius norm of the accumulated approximation is tracked
    incrementally.
    """
    if epsilon <= 0.0:
        raise ValueError("epsilon must be positive")
    cap = min(n_rows, n_cols) if max_rank is None else min(max_rank, n_rows, n_cols)

    a_cols: list[np.ndarray] = []
    b_cols: list[np.ndarray] = []
    used_rows: set[int] = set()
    used_cols: set[int] = set()
    frob_sq = 0.0
    next_row = 0
    converged = False

    while len(a_cols) < cap:
        # find a usable pivot row: residual row with a nonzero maximum
        pivot = None
        tried = 0
        i = next_row
        while tried < n_rows:
            if i not in used_rows:
                orig = row_eval(i).astype(np.float64, copy=True)
                res_row = orig.copy()
                for a_l, b_l in zip(a_cols, b_cols):
                    res_row -= a_l[i] * b_l
                j = int(np.argmax(np.abs(res_row)))
                # rows cancelled to rounding level are exhausted
                floor = 1e-14 * (np.linalg.norm(orig) + np.sqrt(frob_sq))
                if abs(res_row[j]) > floor:
                    pivot = (i, j, res_row)
                    break
                used_rows.add(i)
            i = (i + 1) % n_rows
            tried += 1
        if pivot is None:
            converged = True     # residual is exactly zero on all rows
            break

        i, j, res_row = pivot
        delta = res_row[j]
        res_col = col_eval(j).astype(np.float64, copy=True)
        for a_l, b_l in zip(a_cols, b_cols):
            res_col -= b_l[j] * a_l
        a_new = res_col / delta
        b_new = res_row

        # incremental Frobenius norm of the accumulated approximation
        norm_a = float(np.linalg.norm(a_new))
        norm_b = float(np.linalg.norm(b_new))
        cross = 0.0
        for a_l, b_l in zip(a_cols, b_cols):
            cross += float(a_new @ a_l) * float(b_new @ b_l)
        frob_sq += norm_a * norm_a * norm_b * norm_b + 2.0 * cross
        frob_sq = max(frob_sq, 0.0)

        a_cols.append(a_new)
        b_cols.append(b_new)
        used_rows.add(i)
        used_cols.add(j)
        next_row = int(np.argmax(np.where(
            np.isin(np.arange(n_rows), list(used_rows)), -np.inf, np.abs(a_new)
        )))

        if norm_a * norm_b <= epsilon * np.sqrt(frob_sq):
            converged = True
            break

    k = len(a_cols)
    a = np.column_stack(a_cols) if k else np.zeros((n_rows, 0))
    b = np.column_stack(b_cols) if k else np.zeros((n_cols, 0))
    if k == cap and not converged and cap == min(n_rows, n_cols):
        converged = True         # full rank reached: representation is exact
    return LowRankBlock(a=a, b=b, converged=converged)


def aca_full(s: np.ndarray, epsilon: float) -> tuple[np.ndarray, np.ndarray]:
    """Fully pivoted ACA on an explicit matrix.

    Returns the selected pivot rows tau and columns sigma such that the cross
    S[tau, :], S[:, sigma] reproduces S to a relative Frobenius accuracy of
    about ``epsilon``.
    """
    res = np.array(s, dtype=np.float64, copy=True)
    norm0 = float(np.linalg.norm(res))
    tau: list[int] = []
    sigma: list[int] = []
    if norm0 == 0.0:
        return np.array(tau, dtype=np.int64), np.array(sigma, dtype=np.int64)
    cap = min(res.shape)
    while len(tau) < cap:
        flat = int(np.argmax(np.abs(res)))
        i, j = divmod(flat, res.shape[1])
        piv = res[i, j]
        if abs(piv) <= epsilon * norm0 / np.sqrt(res.size):
            break
        tau.append(i)
        sigma.append(j)
        res -= np.outer(res[:, j] / piv, res[i, :])
        if float(np.linalg.norm(res)) <= epsilon * norm0:
            break
    return np.array(tau, dtype=np.int64), np.array(sigma, dtype=np.int64)


def truncate_lowrank(a: np.ndarray, b: np.ndarray, epsilon: float) -> tuple[np.ndarray, np.ndarray]:
    """Recompress an A @ B.T factorization with QR + SVD, dropping singular
    values below epsilon relative to the largest."""
    if a.shape[1] == 0:
        return a, b
    qa, ra = np.linalg.qr(a)
    qb, rb = np.linalg.qr(b)
    u, s, vt = np.linalg.svd(ra @ rb.T)
    if s.size == 0 or s[0] == 0.0:
        return a[:, :0], b[:, :0]
    keep = int(np.sum(s > epsilon * s[0]))
    return qa @ (u[:, :keep] * s[:keep]), qb @ vt[:keep].T
