"""Dense linear-algebra oracle.

Everything here is deliberately direct: eigendecompositions and explicit
pseudoinverses on small matrices.  The distributed pipeline is always judged
against these routines, so they stay independent of the pipeline code paths
(no shared shortcuts, no reuse of pipeline operators).

Spectral comparisons follow the multiplicative convention: A and B are
eps-close when exp(-eps) A <= B <= exp(+eps) A in the Loewner order on their
common range.  Matrices with mismatched kernels are rejected rather than
silently projected.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg

from .graphs import laplacian

KERNEL_RTOL = 1e-9


class KernelMismatch(ValueError):
    """Raised when two operators compared spectrally disagree on their kernels."""


def _eig_range_split(A, rtol=KERNEL_RTOL):
    """Symmetric eigendecomposition split into (null basis, range basis, range eigs)."""
    A = np.asarray(A, dtype=float)
    vals, vecs = np.linalg.eigh((A + A.T) / 2.0)
    scale = max(np.max(np.abs(vals)), 1.0)
    mask = np.abs(vals) > rtol * scale
    return vecs[:, ~mask], vecs[:, mask], vals[mask]


def pseudo_inverse(A, rtol=KERNEL_RTOL):
    """Moore-Penrose pseudoinverse of a symmetric PSD matrix via eigh."""
    null, Q, lam = _eig_range_split(A, rtol)
    if np.any(lam < 0):
        lo = float(np.min(lam))
        scale = max(np.max(np.abs(lam)), 1.0)
        if lo < -1e-8 * scale:
            raise ValueError(f"matrix is not PSD (eigenvalue {lo})")
        lam = np.abs(lam)
    return (Q / lam) @ Q.T


def exact_solve(L, b, rtol=KERNEL_RTOL):
    """L^+ b for symmetric PSD L; b is projected onto range(L) first."""
    null, Q, lam = _eig_range_split(L, rtol)
    coeff = Q.T @ b
    return Q @ (coeff / lam)


def mahalanobis_norm(A, x):
    """sqrt(x^T A x), clamped at zero against round-off."""
    q = float(np.asarray(x) @ (np.asarray(A) @ np.asarray(x)))
    return float(np.sqrt(max(q, 0.0)))


def schur_complement(A, keep):
    """Schur complement of A onto index set ``keep`` (eliminating the rest).

    keep is an index sequence into A's rows; the result is ordered by keep.
    The eliminated block is inverted exactly (it must be nonsingular, which
    holds for proper subsets of a connected Laplacian's vertex set).
    """
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    keep = list(keep)
    drop = [i for i in range(n) if i not in set(keep)]
    if not drop:
        return A[np.ix_(keep, keep)]
    A_tt = A[np.ix_(keep, keep)]
    A_ts = A[np.ix_(keep, drop)]
    A_ss = A[np.ix_(drop, drop)]
    return A_tt - A_ts @ np.linalg.solve(A_ss, A_ts.T)


def kernels_match(A, B, rtol=KERNEL_RTOL):
    """True when null(A) == null(B) up to tolerance (principal angle test)."""
    nullA, _, _ = _eig_range_split(A, rtol)
    nullB, _, _ = _eig_range_split(B, rtol)
    if nullA.shape[1] != nullB.shape[1]:
        return False
    if nullA.shape[1] == 0:
        return True
    s = np.linalg.svd(nullA.T @ nullB, compute_uv=False)
    return bool(np.min(s) > 1 - 1e-7)


def generalized_eig_range(A, B, rtol=KERNEL_RTOL):
    """(min, max) generalized eigenvalue of pencil (B, A) on range(A).

    Requires matching kernels; raises KernelMismatch otherwise.  The returned
    range characterizes the tightest c1, c2 with c1*A <= B <= c2*A.
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if not kernels_match(A, B, rtol):
        raise KernelMismatch("operators have different kernels")
    _, Q, lam = _eig_range_split(A, rtol)
    if lam.size == 0:
        return (1.0, 1.0)
    root = Q / np.sqrt(np.abs(lam))
    M = root.T @ B @ root
    vals = np.linalg.eigvalsh((M + M.T) / 2.0)
    return float(vals[0]), float(vals[-1])


def loewner_sandwich_check(A, B, lo, hi, slack=1e-9):
    """Check lo*A <= B <= hi*A on the common range; returns (ok, gmin, gmax)."""
    gmin, gmax = generalized_eig_range(A, B)
    pad = slack * max(abs(lo), abs(hi), 1.0)
    return (gmin >= lo - pad and gmax <= hi + pad), gmin, gmax


def spectral_approx_check(A, B, eps, slack=1e-9):
    """Check exp(-eps) A <= B <= exp(+eps) A; returns (ok, gmin, gmax)."""
    return loewner_sandwich_check(A, B, float(np.exp(-eps)), float(np.exp(eps)),
                                  slack=slack)


def effective_resistance(graph, u, v, Lpinv=None):
    if Lpinv is None:
        Lpinv = pseudo_inverse(laplacian(graph))
    b = np.zeros(graph.n)
    b[u] += 1.0
    b[v] -= 1.0
    return float(b @ Lpinv @ b)


def leverage_scores_exact(graph):
    """Per-edge leverage lev(e) = w_e * b_e^T L^+ b_e; self-loops score zero.

    With resistances r_e = 1/w_e this is the usual w_e * R_eff(e); scores over
    a connected graph sum to n - 1 (rank of the Laplacian).
    """
    Lp = pseudo_inverse(laplacian(graph))
    out = np.zeros(graph.m)
    for eid, (u, v, w) in enumerate(graph.edges):
        if u == v:
            continue
        out[eid] = w * (Lp[u, u] + Lp[v, v] - 2.0 * Lp[u, v])
    return out


def solve_error(L, x, b):
    """||x - L^+ b||_L, the solver's figure of merit."""
    return mahalanobis_norm(L, x - exact_solve(L, b))


def dense_operator(apply_fn, n):
    """Materialize a linear operator given by a callable on R^n (oracle use only)."""
    M = np.zeros((n, n))
    eye = np.eye(n)
    for i in range(n):
        M[:, i] = apply_fn(eye[:, i])
    return M
