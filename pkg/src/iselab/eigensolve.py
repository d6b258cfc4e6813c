"""Windowed symmetric eigensolves.

Small problems go through a dense solver; larger ones use ARPACK's
shift-invert Lanczos.  Every returned pair is residual-checked against
tol_eig, and failures surface as SolverError with telemetry instead of
silently truncated results.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.linalg import eigh
from scipy.sparse.linalg import eigsh

from .errors import SolverError
from .operators import SparseSymmetricOperator, assemble_interpolated

TOL_EIG = 1e-8
TOL_GAP = 1e-6
DENSE_CUTOFF = 4096
MAX_ITER_K = 768


def _matrix(op):
    if isinstance(op, SparseSymmetricOperator):
        return op.matrix
    return sparse.csr_matrix(op)


def start_vector(n):
    """Deterministic Lanczos starting vector.

    ARPACK otherwise seeds itself from the global NumPy RNG, which makes
    repeated solves differ at the last few ulps and breaks byte-identical
    reruns.
    """
    return np.random.Generator(np.random.Philox(key=0x1ab0)).standard_normal(n)


@dataclass
class SpectralWindowResult:
    values: np.ndarray
    vectors: np.ndarray = field(repr=False)
    residuals: np.ndarray
    method: str
    k_used: int

    @property
    def count(self):
        return int(self.values.size)


def _check_residuals(mat, values, vectors, method, k_used):
    if values.size == 0:
        return SpectralWindowResult(values, vectors, np.empty(0), method, k_used)
    res = np.linalg.norm(mat @ vectors - vectors * values[None, :], axis=0)
    bad = res > TOL_EIG * (np.abs(values) + 1.0)
    if bad.any():
        raise SolverError(
            "residual bound violated",
            telemetry={"method": method, "k": k_used,
                       "worst_residual": float(res.max())},
        )
    order = np.argsort(values, kind="stable")
    return SpectralWindowResult(values[order], vectors[:, order], res[order],
                                method, k_used)


def _dense_pairs(mat):
    values, vectors = eigh(mat.toarray())
    return values, vectors


def eigs_below(op, threshold):
    """All eigenpairs with value < threshold - tol_eig."""
    mat = _matrix(op)
    n = mat.shape[0]
    if n <= DENSE_CUTOFF:
        values, vectors = _dense_pairs(mat)
        keep = values < threshold - TOL_EIG
        return _check_residuals(mat, values[keep], vectors[:, keep], "dense", n)
    k = 16
    while True:
        if k >= min(n - 1, MAX_ITER_K):
            k = min(n - 1, MAX_ITER_K)
        try:
            values, vectors = eigsh(mat, k=k, which="SA",
                                    v0=start_vector(n))
        except Exception as exc:  # ARPACK non-convergence
            raise SolverError(f"iterative solver failed: {exc}",
                              telemetry={"k": k, "which": "SA"})
        if values.max() >= threshold - TOL_EIG:
            keep = values < threshold - TOL_EIG
            return _check_residuals(mat, values[keep], vectors[:, keep],
                                    "iterative", k)
        if k >= min(n - 1, MAX_ITER_K):
            raise SolverError(
                "window exhausted: too many eigenvalues below threshold",
                telemetry={"k": k, "threshold": threshold},
            )
        k *= 2


def _shift_invert(mat, sigma, k):
    v0 = start_vector(mat.shape[0])
    try:
        return eigsh(mat, k=min(k, mat.shape[0] - 1), sigma=sigma,
                     which="LM", v0=v0)
    except Exception:
        # sigma may coincide with an eigenvalue; nudge and retry once
        sigma = sigma + 100 * TOL_EIG * (1.0 + abs(sigma))
        try:
            return eigsh(mat, k=min(k, mat.shape[0] - 1), sigma=sigma,
                         which="LM", v0=v0)
        except Exception as exc:
            raise SolverError(f"shift-invert failed: {exc}",
                              telemetry={"sigma": sigma, "k": k})


SMALL_DENSE = 1024


def min_eig_above(op, b, k=8):
    """Smallest eigenvalue classified as >= b (values within tol_eig count).

    Uses shift-invert already on mid-sized problems: only the value is
    needed, and a factorization is far cheaper than a full dense solve.
    """
    mat = _matrix(op)
    n = mat.shape[0]
    if n <= SMALL_DENSE:
        values = np.sort(eigh(mat.toarray(), eigvals_only=True))
        above = values[values >= b - TOL_EIG]
        if above.size == 0:
            raise SolverError("no eigenvalue at or above b", telemetry={"b": b})
        return float(above[0])
    while k <= 64:
        values, _ = _shift_invert(mat, b + 10 * TOL_EIG, k)
        above = np.sort(values[values >= b - TOL_EIG])
        if above.size:
            return float(above[0])
        k *= 2
    raise SolverError("window exhausted above b", telemetry={"b": b})


def lowest_eig_above(op, b):
    """(k0, lambda): the lowest eigenvalue in [b, inf) and its 1-based index."""
    mat = _matrix(op)
    n = mat.shape[0]
    if n <= DENSE_CUTOFF:
        values = np.sort(eigh(mat.toarray(), eigvals_only=True))
        below = int(np.sum(values < b - TOL_EIG))
        if below == n:
            raise SolverError("no eigenvalue at or above b", telemetry={"b": b})
        return below + 1, float(values[below])
    value = min_eig_above(op, b)
    below = eigs_below(op, b).count
    return below + 1, value


def eigs_in_window(op, a, b):
    """All eigenvalues in (a + tol_gap, b - tol_gap), sorted ascending."""
    if b <= a:
        raise ValueError("need a < b")
    mat = _matrix(op)
    n = mat.shape[0]
    lo, hi = a + TOL_GAP, b - TOL_GAP
    if n <= DENSE_CUTOFF:
        values = np.sort(eigh(mat.toarray(), eigvals_only=True))
        return values[(values > lo) & (values < hi)]
    sigma = 0.5 * (a + b)
    half = 0.5 * (b - a)
    k = 8
    while True:
        values, _ = _shift_invert(mat, sigma, k)
        # the k returned values are the k closest to sigma; once the
        # farthest lies outside the window, the window is fully enumerated
        if np.max(np.abs(values - sigma)) > half or k >= min(n - 1, MAX_ITER_K):
            inside = np.sort(values[(values > lo) & (values < hi)])
            if np.max(np.abs(values - sigma)) <= half:
                raise SolverError("window enumeration budget exhausted",
                                  telemetry={"k": k, "window": (a, b)})
            return inside
        k *= 2


def smallest_eigs(op, k):
    """The k smallest eigenpairs."""
    mat = _matrix(op)
    n = mat.shape[0]
    if n <= DENSE_CUTOFF:
        values, vectors = _dense_pairs(mat)
        return _check_residuals(mat, values[:k], vectors[:, :k], "dense", n)
    values, vectors = eigsh(mat, k=min(k, n - 1), which="SA",
                            v0=start_vector(n))
    return _check_residuals(mat, values, vectors, "iterative", k)


def track_family(grid, v0, profiles, t_grid, window):
    """Eigenvalues of H0 + t W inside the window, for each t."""
    t_grid = list(t_grid)
    if any(t1 >= t2 for t1, t2 in zip(t_grid, t_grid[1:])):
        raise ValueError("t_grid must be strictly increasing")
    if t_grid and (t_grid[0] < 0 or t_grid[-1] > 1):
        raise ValueError("t_grid must lie in [0, 1]")
    a, b = window
    out = []
    for t in t_grid:
        op = assemble_interpolated(grid, v0, t, profiles)
        out.append(eigs_in_window(op, a, b))
    return out
