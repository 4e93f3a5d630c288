"""Closed-form coefficient step: the (m+1) x (m+1) weighted ridge system.

For fixed prototypes the objective is an ordinary weighted ridge
regression in the similarity features, so the coefficients and bias come
from one symmetric linear solve.  A conjugate-gradient variant with warm
starts is provided as the iterative alternative; both reach the same
fixed point.
"""

from dataclasses import dataclass

import numpy as np

from .errors import SingularSystemError

# Acceptable relative residual of a direct solve; beyond it the system
# counts as numerically singular and gets one diagonal-jitter retry.
RESIDUAL_RTOL = 1e-9


@dataclass(frozen=True)
class RidgeSystem:
    """Normal equations M [coef; bias] = rhs for the similarity features."""

    matrix: np.ndarray  # (m+1, m+1), symmetric
    rhs: np.ndarray  # (m+1,)

    @property
    def m(self) -> int:
        return self.rhs.shape[0] - 1


def assemble(S, weights, targets, lam: float) -> RidgeSystem:
    """Build the system from similarities S (n x m), weights and targets.

    Block structure: [[S'US + lam*I, S'u], [u'S, sum(u)]] with right-hand
    side [S'(u*y); sum(u*y)].
    """
    S = np.asarray(getattr(S, "values", S), dtype=float)
    u = np.ravel(np.asarray(weights, dtype=float))
    y = np.ravel(np.asarray(targets, dtype=float))
    n, m = S.shape
    if u.shape[0] != n or y.shape[0] != n:
        raise ValueError(f"similarities have {n} rows but {u.shape[0]} weights / {y.shape[0]} targets")
    if lam < 0:
        raise ValueError(f"lam must be >= 0, got {lam}")
    uS = u[:, None] * S
    matrix = np.empty((m + 1, m + 1))
    matrix[:m, :m] = S.T @ uS + lam * np.eye(m)
    matrix[:m, m] = uS.sum(axis=0)
    matrix[m, :m] = matrix[:m, m]
    matrix[m, m] = u.sum()
    uy = u * y
    rhs = np.empty(m + 1)
    rhs[:m] = S.T @ uy
    rhs[m] = uy.sum()
    return RidgeSystem(matrix=matrix, rhs=rhs)


def _solve_linear(M: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Symmetric direct solve with one jittered retry on near-singularity.

    A solution only counts if its residual against the original matrix is
    below RESIDUAL_RTOL; otherwise the matrix is treated as numerically
    singular (equivalently, condition number beyond roughly 1/RESIDUAL_RTOL).
    """
    scale = np.linalg.norm(B)

    def attempt(mat):
        try:
            x = np.linalg.solve(mat, B)
        except np.linalg.LinAlgError:
            return None
        if not np.all(np.isfinite(x)):
            return None
        # Residual measured against the original, unjittered matrix.
        if np.linalg.norm(M @ x - B) > RESIDUAL_RTOL * max(scale, 1e-300):
            return None
        return x

    x = attempt(M)
    if x is not None:
        return x
    jitter = 1e-10 * np.trace(M) / M.shape[0]
    x = attempt(M + jitter * np.eye(M.shape[0]))
    if x is None:
        cond = np.linalg.cond(M)
        raise SingularSystemError(
            f"coefficient system is numerically singular (cond ~ {cond:.3e})"
        )
    return x


def solve(system: RidgeSystem):
    """Exact minimizer (coefficients, bias) of the ridge objective.

    The residual of the returned solution satisfies
    ||M x - rhs|| <= 1e-9 ||rhs||; a numerically singular system gets one
    diagonal-jitter retry before raising SingularSystemError.
    """
    x = _solve_linear(system.matrix, system.rhs)
    return x[:-1], float(x[-1])


def solve_against(system: RidgeSystem, B: np.ndarray) -> np.ndarray:
    """Apply the system's inverse to arbitrary right-hand sides.

    Shares the factorization policy of :func:`solve`; the inverse is never
    formed explicitly.
    """
    return _solve_linear(system.matrix, np.asarray(B, dtype=float))


def solve_iterative(system: RidgeSystem, warm_start=None, tol: float = 1e-12, max_iter: int = None):
    """Conjugate-gradient solve, optionally warm-started.

    Returns (coefficients, bias, iterations).  The warm start changes the
    iteration count only; the fixed point matches the direct solve.
    """
    M, rhs = system.matrix, system.rhs
    size = rhs.shape[0]
    if max_iter is None:
        max_iter = 50 * size
    if warm_start is None:
        x = np.zeros(size)
    else:
        coef, bias = warm_start
        x = np.concatenate([np.ravel(coef), [float(bias)]])
        if x.shape[0] != size:
            raise ValueError(f"warm start has length {x.shape[0]}, expected {size}")
    bound = tol * max(np.linalg.norm(rhs), 1e-300)
    r = rhs - M @ x
    p = r.copy()
    rs = float(r @ r)
    iterations = 0
    while np.sqrt(rs) > bound and iterations < max_iter:
        Mp = M @ p
        alpha = rs / float(p @ Mp)
        x += alpha * p
        r -= alpha * Mp
        rs_new = float(r @ r)
        p = r + (rs_new / rs) * p
        rs = rs_new
        iterations += 1
    return x[:-1], float(x[-1]), iterations
