"""Dense matrix helpers and the Lyapunov / Sylvester / Riccati solvers.

All routines work on small real matrices (n up to about 10).  Linear matrix
equations are solved by Kronecker vectorization, and the continuous
algebraic Riccati equation by Kleinman's Newton iteration, where every
Newton step is one Lyapunov solve.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from dobotc.errors import (
    DimensionError,
    NumericalError,
    SingularEquationError,
    StabilizabilityError,
)

LYAP_TOL = 1e-10
CARE_TOL = 1e-8
NEWTON_TOL = 1e-10
NEWTON_MAX_ITER = 100


def as_matrix(M, name="matrix", *, square=False) -> np.ndarray:
    """Coerce ``M`` to a finite 2-D float array (scalars become 1x1)."""
    arr = np.array(M, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise DimensionError(f"{name} must be a non-empty 2-D matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise NumericalError(f"{name} contains non-finite entries")
    if square and arr.shape[0] != arr.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {arr.shape}")
    return arr


def fro(M) -> float:
    return float(np.linalg.norm(M, "fro"))


def vec(M: np.ndarray) -> np.ndarray:
    """Stack the columns of ``M``."""
    return M.reshape(-1, order="F")


def unvec(v: np.ndarray, rows: int, cols: int) -> np.ndarray:
    return v.reshape((rows, cols), order="F")


@dataclass(frozen=True)
class Spectrum:
    """Eigenvalues as ``(real, imag)`` pairs, sorted by descending real part."""

    eigenvalues: tuple

    def __len__(self):
        return len(self.eigenvalues)

    def __iter__(self):
        return iter(self.eigenvalues)

    def as_complex(self) -> np.ndarray:
        return np.array([complex(re, im) for re, im in self.eigenvalues])

    @property
    def max_real(self) -> float:
        return self.eigenvalues[0][0]

    @property
    def min_real(self) -> float:
        return min(re for re, _ in self.eigenvalues)

    def is_hurwitz(self) -> bool:
        return self.max_real < 0.0

    def to_list(self) -> list:
        return [[re, im] for re, im in self.eigenvalues]


def eigenvalues(M) -> Spectrum:
    """Spectrum of a square matrix.

    Ordering is by descending real part, ties broken by ascending imaginary
    part.  Imaginary parts below ``1e-12`` relative to the matrix norm are
    snapped to zero so that real eigenvalues report as exactly real.
    """
    M = as_matrix(M, "M", square=True)
    try:
        lam = np.linalg.eigvals(M)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigenvalue iteration did not converge: {exc}") from exc
    scale = 1.0 + fro(M)
    pairs = []
    for z in lam:
        re, im = float(z.real), float(z.imag)
        if abs(im) <= 1e-12 * scale:
            im = 0.0
        pairs.append((re, im))
    pairs.sort(key=lambda p: (-p[0], p[1]))
    return Spectrum(tuple(pairs))


def is_hurwitz(M) -> bool:
    return eigenvalues(M).is_hurwitz()


def _check_disjoint(A1: np.ndarray, A2: np.ndarray, what: str) -> None:
    lam1 = np.linalg.eigvals(A1)
    lam2 = np.linalg.eigvals(A2)
    gap = np.min(np.abs(lam1[:, None] + lam2[None, :]))
    scale = 1.0 + fro(A1) + fro(A2)
    if gap <= LYAP_TOL * scale:
        raise SingularEquationError(
            f"{what}: spectra of the coefficient matrices are not disjoint "
            f"(min |l1 + l2| = {gap:.3e})"
        )


def solve_sylvester(A1, A2, C) -> np.ndarray:
    """Solve ``A1 X + X A2 = C`` for ``X``.

    Uses the vectorized form ``(I (x) A1 + A2^T (x) I) vec(X) = vec(C)``.
    Raises SingularEquationError when ``eig(A1)`` and ``eig(-A2)`` intersect.
    """
    A1 = as_matrix(A1, "A1", square=True)
    A2 = as_matrix(A2, "A2", square=True)
    C = as_matrix(C, "C")
    n, m = A1.shape[0], A2.shape[0]
    if C.shape != (n, m):
        raise DimensionError(f"C must be {n}x{m}, got {C.shape}")
    _check_disjoint(A1, A2, "Sylvester equation")
    K = np.kron(np.eye(m), A1) + np.kron(A2.T, np.eye(n))
    try:
        x = np.linalg.solve(K, vec(C))
    except np.linalg.LinAlgError as exc:
        raise SingularEquationError(f"Sylvester equation is singular: {exc}") from exc
    X = unvec(x, n, m)
    resid = fro(A1 @ X + X @ A2 - C)
    if resid > LYAP_TOL * (1.0 + fro(C)) * (1.0 + fro(A1) + fro(A2)):
        raise NumericalError(f"Sylvester residual too large: {resid:.3e}")
    return X


def solve_lyapunov(A_h, W) -> np.ndarray:
    """Solve ``A_h^T P + P A_h + W = 0`` and return the symmetric ``P``."""
    A_h = as_matrix(A_h, "A_h", square=True)
    W = as_matrix(W, "W", square=True)
    if W.shape != A_h.shape:
        raise DimensionError(f"W must be {A_h.shape}, got {W.shape}")
    P = solve_sylvester(A_h.T, A_h, -W)
    return 0.5 * (P + P.T)


def lyapunov_residual(A_h, P, W) -> float:
    return fro(A_h.T @ P + P @ A_h + W)


def care_residual(A, B, Q, R, P) -> float:
    """Frobenius norm of ``A^T P + P A - P B R^-1 B^T P + Q``."""
    A, B, Q, R, P = (np.asarray(M, dtype=float) for M in (A, B, Q, R, P))
    return fro(A.T @ P + P @ A - P @ B @ np.linalg.solve(R, B.T @ P) + Q)


def stabilizing_gain_init(A, B) -> np.ndarray:
    """Return some ``K0`` with ``A - B K0`` Hurwitz.

    A Hurwitz ``A`` gets ``K0 = 0``.  Otherwise Bass's construction is used:
    with ``beta = 1 + max(0, -min Re eig(A))`` (so ``A + beta I`` is
    anti-stable) solve ``(A + beta I) Z + Z (A + beta I)^T = 2 B B^T`` and
    take ``K0 = B^T Z^-1``, which places every closed-loop eigenvalue at real
    part ``-beta`` or below.  The result is always checked before it is
    returned.
    """
    A = as_matrix(A, "A", square=True)
    B = as_matrix(B, "B")
    n = A.shape[0]
    if B.shape[0] != n:
        raise DimensionError(f"B must have {n} rows, got {B.shape}")
    spec = eigenvalues(A)
    if spec.is_hurwitz():
        return np.zeros((B.shape[1], n))
    beta = 1.0 + max(0.0, -spec.min_real)
    A_h = -(A + beta * np.eye(n)).T
    Z = solve_lyapunov(A_h, 2.0 * B @ B.T)
    if np.linalg.matrix_rank(Z) < n:
        raise StabilizabilityError("(A, B) is not controllable; Bass construction failed")
    K0 = B.T @ np.linalg.inv(Z)
    closed = eigenvalues(A - B @ K0)
    if not closed.is_hurwitz():
        raise StabilizabilityError(
            f"could not find a stabilizing gain (max Re eig = {closed.max_real:.3e})"
        )
    return K0


def solve_care(A, B, Q, R, *, K0=None, max_iter=NEWTON_MAX_ITER) -> np.ndarray:
    """Stabilizing solution of ``A^T P + P A - P B R^-1 B^T P + Q = 0``.

    Kleinman-Newton iteration: starting from a stabilizing ``K``, repeatedly
    solve ``(A - B K)^T P + P (A - B K) + Q + K^T R K = 0`` and update
    ``K = R^-1 B^T P``.  Once the Riccati residual is below
    ``1e-10 (1 + |Q|)`` the iteration continues only while the residual still
    improves, and it never runs past ``max_iter`` steps; the returned ``P`` is
    certified to residual ``1e-8 (1 + |Q|)`` with ``A - B R^-1 B^T P``
    Hurwitz.
    """
    A = as_matrix(A, "A", square=True)
    B = as_matrix(B, "B")
    Q = as_matrix(Q, "Q", square=True)
    R = as_matrix(R, "R", square=True)
    n, m = A.shape[0], B.shape[1]
    if B.shape[0] != n or Q.shape != (n, n) or R.shape != (m, m):
        raise DimensionError(
            f"incompatible shapes A{A.shape} B{B.shape} Q{Q.shape} R{R.shape}"
        )
    Q = 0.5 * (Q + Q.T)
    R = 0.5 * (R + R.T)
    if np.min(np.linalg.eigvalsh(R)) <= 0.0:
        raise NumericalError("R must be positive definite")

    K = stabilizing_gain_init(A, B) if K0 is None else as_matrix(K0, "K0")
    qscale = 1.0 + fro(Q)
    P, resid = None, np.inf
    for _ in range(max_iter):
        A_k = A - B @ K
        P_new = solve_lyapunov(A_k, Q + K.T @ R @ K)
        if not np.all(np.isfinite(P_new)):
            raise NumericalError("Newton iteration produced non-finite iterate")
        resid_new = care_residual(A, B, Q, R, P_new)
        if resid <= NEWTON_TOL * qscale and resid_new >= resid:
            break  # converged and stagnating at rounding level
        P, resid = P_new, resid_new
        K = np.linalg.solve(R, B.T @ P)

    resid = care_residual(A, B, Q, R, P)
    if resid > CARE_TOL * qscale:
        raise NumericalError(f"Newton iteration did not converge (residual {resid:.3e})")
    if not is_hurwitz(A - B @ np.linalg.solve(R, B.T @ P)):
        raise NumericalError("Riccati solution is not stabilizing")
    return P


def pinv(M) -> np.ndarray:
    """Moore-Penrose pseudoinverse; a zero matrix maps to its zero transpose."""
    M = as_matrix(M, "M")
    if not np.any(M):
        return np.zeros(M.T.shape)
    return np.linalg.pinv(M)
