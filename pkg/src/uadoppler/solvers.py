"""Jacobi-preconditioned conjugate gradient for sparse SPD systems."""

import numpy as np

from .errors import SolverDidNotConverge


def default_max_iter(n):
    return int(10 * np.sqrt(n) + 1000)


def conjugate_gradient(A, b, x0=None, tol=1e-6, max_iter=None):
    """Solve ``A x = b`` for symmetric positive (semi-)definite ``A``.

    Parameters
    ----------
    A : scipy.sparse matrix or ndarray, shape (n, n)
    b : ndarray, shape (n,)
    x0 : ndarray, optional
        Initial guess; zeros by default.
    tol : float
        Stop when ``||b - A x|| <= tol * ||b||`` (absolute ``tol`` when b = 0).
    max_iter : int, optional
        Defaults to ``10 * sqrt(n) + 1000``.

    Returns
    -------
    x : ndarray
    info : dict
        ``iterations`` and final ``residual`` (relative).

    Raises
    ------
    SolverDidNotConverge
        The iteration cap was reached before the tolerance.
    """
    b = np.asarray(b, dtype=float)
    n = b.shape[0]
    if max_iter is None:
        max_iter = default_max_iter(n)
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)

    diag = np.asarray(A.diagonal(), dtype=float)
    inv_diag = np.where(diag > 0, 1.0 / np.where(diag > 0, diag, 1.0), 1.0)

    norm_b = np.linalg.norm(b)
    scale = norm_b if norm_b > 0 else 1.0

    r = b - A @ x
    res = np.linalg.norm(r) / scale
    if res <= tol:
        return x, {"iterations": 0, "residual": res}

    z = inv_diag * r
    p = z.copy()
    rz = r @ z
    for it in range(1, max_iter + 1):
        Ap = A @ p
        pAp = p @ Ap
        if pAp <= 0:
            break
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        res = np.linalg.norm(r) / scale
        if res <= tol:
            return x, {"iterations": it, "residual": res}
        z = inv_diag * r
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new

    # recompute the true residual before giving up; the recurrence can drift
    res = np.linalg.norm(b - A @ x) / scale
    if res <= tol:
        return x, {"iterations": max_iter, "residual": res}
    raise SolverDidNotConverge(
        f"conjugate gradient stopped at relative residual {res:.3e} "
        f"after {max_iter} iterations"
    )
