"""Dense symmetric generalized eigenproblems S u = lam M u."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)

CLUSTER_TOL = 1e-6


class SingularMassError(np.linalg.LinAlgError):
    pass


class ClusteredEigenvalueError(ValueError):
    pass


@dataclass
class EigenResult:
    values: np.ndarray                 # ascending
    vectors: np.ndarray                # (p, r), M-orthonormal columns
    min_mass_eig: float = float("nan")
    discarded: int = 0
    warnings: list[str] = field(default_factory=list)

    def __len__(self) -> int:
        return self.values.size


def jacobi_eigh(A, tol: float = 1e-13, max_sweeps: int = 100):
    """Cyclic Jacobi eigendecomposition of a symmetric matrix.

    Returns ascending eigenvalues and orthonormal eigenvectors (columns).
    """
    A = np.array(A, dtype=float)
    n = A.shape[0]
    V = np.eye(n)
    scale = np.linalg.norm(A)
    if n == 1 or scale == 0.0:
        return np.diag(A).copy(), V
    for _ in range(max_sweeps):
        off = np.sqrt(np.sum(np.tril(A, -1) ** 2))
        if off < tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if apq == 0.0:
                    continue
                theta = (A[q, q] - A[p, p]) / (2.0 * apq)
                t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                if theta == 0.0:
                    t = 1.0
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                ap = A[:, p].copy()
                aq = A[:, q].copy()
                A[:, p] = c * ap - s * aq
                A[:, q] = s * ap + c * aq
                ap = A[p, :].copy()
                aq = A[q, :].copy()
                A[p, :] = c * ap - s * aq
                A[q, :] = s * ap + c * aq
                A[p, q] = A[q, p] = 0.0
                vp = V[:, p].copy()
                V[:, p] = c * vp - V[:, q] * s
                V[:, q] = s * vp + c * V[:, q]
    w = np.diag(A).copy()
    order = np.argsort(w, kind="stable")
    return w[order], V[:, order]


def _eigh(A, method: str):
    if method == "lapack":
        return np.linalg.eigh(A)
    if method == "jacobi":
        return jacobi_eigh(A)
    raise ValueError(f"unknown eigensolver {method!r}")


def fix_signs(U: np.ndarray) -> np.ndarray:
    """Flip columns so the largest-magnitude entry of each is positive."""
    if U.size == 0:
        return U
    idx = np.argmax(np.abs(U), axis=0)
    s = np.sign(U[idx, np.arange(U.shape[1])])
    s[s == 0] = 1.0
    return U * s


def solve_generalized(S, M, tau: float = 1e-12, method: str = "lapack") -> EigenResult:
    """Eigenpairs of S u = lam M u with M truncated to its well-conditioned part.

    M = V diag(m) V^T; directions with m <= tau * max(m) are dropped, the
    remaining problem is reduced to a standard symmetric one and solved.
    """
    S = np.asarray(S, dtype=float)
    M = np.asarray(M, dtype=float)
    p = M.shape[0]
    if S.shape != (p, p) or M.shape != (p, p):
        raise ValueError("S and M must be square and of equal size")
    S = 0.5 * (S + S.T)
    M = 0.5 * (M + M.T)
    m, V = _eigh(M, method)
    mmax = m.max(initial=0.0)
    if not mmax > 0 or not np.isfinite(mmax):
        raise SingularMassError("mass matrix is numerically zero")
    keep = m > tau * mmax
    r = int(keep.sum())
    B = V[:, keep] / np.sqrt(m[keep])
    A = B.T @ S @ B
    A = 0.5 * (A + A.T)
    lam, Y = _eigh(A, method)
    U = fix_signs(B @ Y)
    res = EigenResult(lam, U, float(m[keep].min()), p - r)
    if p - r > p / 2:
        msg = f"mass stabilization discarded {p - r} of {p} directions"
        res.warnings.append(msg)
        log.warning(msg)
    return res


def clusters(values, tol: float = CLUSTER_TOL) -> list[list[int]]:
    """Group sorted eigenvalues whose relative gap is below ``tol``."""
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        return []
    groups = [[0]]
    for k in range(1, values.size):
        a, b = values[k - 1], values[k]
        scale = max(abs(a), abs(b), np.finfo(float).tiny)
        if abs(b - a) < tol * scale:
            groups[-1].append(k)
        else:
            groups.append([k])
    return groups


def eigenvalue_sensitivity(lam: float, u, dS, dM) -> float:
    """d lam = u^T (dS - lam dM) u for a simple, M-normalized eigenpair."""
    u = np.asarray(u, dtype=float)
    return float(u @ (np.asarray(dS) - lam * np.asarray(dM)) @ u)


def subspace_trace_sensitivity(cluster, result: EigenResult, dS, dM) -> float:
    """Derivative of the sum of the eigenvalues in ``cluster``.

    Well defined even when the cluster is exactly degenerate.
    """
    idx = list(cluster)
    if idx != list(range(idx[0], idx[0] + len(idx))):
        raise ValueError("cluster indices must be contiguous")
    lam_bar = float(np.mean(result.values[idx]))
    U = result.vectors[:, idx]
    G = np.asarray(dS) - lam_bar * np.asarray(dM)
    return float(np.einsum("ik,ij,jk->", U, G, U))


def checked_sensitivity(k: int, result: EigenResult, dS, dM,
                        tol: float = CLUSTER_TOL) -> float:
    """Simple-eigenvalue sensitivity that refuses clustered eigenvalues."""
    for c in clusters(result.values, tol):
        if k in c and len(c) > 1:
            raise ClusteredEigenvalueError(
                f"eigenvalue {k} belongs to cluster {c}; use subspace_trace_sensitivity")
    return eigenvalue_sensitivity(result.values[k], result.vectors[:, k], dS, dM)
