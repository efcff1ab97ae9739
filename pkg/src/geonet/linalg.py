"""Small dense kernels shared by the constructor.

Inner products are sample means, ``<u, v> = (1/N) sum_i u_i v_i``, so norms of
residuals on [0, 1]-normalized targets stay bounded by one regardless of N.
"""

import numpy as np

RANK_RCOND = 1e-10


def _as_vector(u, name="u"):
    u = np.asarray(u, dtype=float)
    if u.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {u.shape}")
    if u.size == 0:
        raise ValueError(f"{name} is empty")
    if not np.all(np.isfinite(u)):
        raise ValueError(f"{name} has non-finite entries")
    return u


def mean_inner(u, v):
    u = _as_vector(u, "u")
    v = _as_vector(v, "v")
    if u.shape != v.shape:
        raise ValueError(f"length mismatch: {u.size} vs {v.size}")
    return float(np.dot(u, v) / u.size)


def norm_sq(u):
    u = _as_vector(u)
    return float(np.dot(u, u) / u.size)


def column_inner(A, B):
    """Columnwise mean inner products between matching columns of ``A`` and ``B``.

    Broadcasting is allowed, so ``column_inner(G, e[:, None])`` scores every
    column of ``G`` against one residual in a single pass.
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if A.shape[0] != B.shape[0]:
        raise ValueError(f"row mismatch: {A.shape[0]} vs {B.shape[0]}")
    return np.einsum("ij,ij->j", *np.broadcast_arrays(A, B)) / A.shape[0]


def _as_matrix(A, name):
    A = np.asarray(A, dtype=float)
    if A.ndim == 1:
        A = A[:, None]
    if A.ndim != 2:
        raise ValueError(f"{name} must be a matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValueError(f"{name} has non-finite entries")
    return A


def solve_least_squares(H, F):
    """Minimum-norm minimizer of ``||F - H beta||`` (Frobenius), shape ``(L, m)``.

    Columns are scaled to unit norm before the rank cut at ``RANK_RCOND``, so a
    column that is tiny but not collinear (a sigmoid saturated near zero) is
    kept, while nearly collinear columns do not blow ``beta`` up.
    """
    H = _as_matrix(H, "H")
    F = _as_matrix(F, "F")
    N, L = H.shape
    if N < 1 or L < 1:
        raise ValueError(f"H must have at least one row and column, got {H.shape}")
    if F.shape[0] != N:
        raise ValueError(f"dimension mismatch: H has {N} rows, F has {F.shape[0]}")
    norms = np.linalg.norm(H, axis=0)
    norms = np.where(norms > 0, norms, 1.0)
    beta, *_ = np.linalg.lstsq(H / norms, F, rcond=RANK_RCOND)
    return beta / norms[:, None]
