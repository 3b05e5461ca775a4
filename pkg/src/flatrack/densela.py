"""Small dense linear algebra: solves, matrix exponentials, Lyapunov and Routh.

Matrices and vectors are plain 2-D / 1-D float ``numpy`` arrays. Everything
here targets the tiny systems that show up in flat-system control (n <= ~20),
so clarity wins over asymptotic speed.
"""
from __future__ import annotations

import enum
from fractions import Fraction
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInput, NotPositiveDefinite, SingularMatrix

SINGULAR_RTOL = 1e-12
ROUTH_EPS = 1e-9


class StabilityVerdict(str, enum.Enum):
    STABLE = "stable"
    UNSTABLE = "unstable"
    MARGINAL = "marginal"


def as_matrix(a, name="matrix") -> np.ndarray:
    """Coerce ``a`` to a finite 2-D float array."""
    m = np.array(a, dtype=float)
    if m.ndim == 0:
        m = m.reshape(1, 1)
    elif m.ndim == 1:
        m = m.reshape(-1, 1)
    if m.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{name} has non-finite entries")
    return m


def as_vector(a, name="vector") -> np.ndarray:
    v = np.array(a, dtype=float).reshape(-1)
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{name} has non-finite entries")
    return v


@dataclass(frozen=True)
class Polynomial:
    """Real polynomial, coefficients highest degree first."""

    coeffs: tuple[float, ...]

    def __post_init__(self):
        c = [float(x) for x in self.coeffs]
        while len(c) > 1 and c[0] == 0.0:
            c.pop(0)
        object.__setattr__(self, "coeffs", tuple(c))

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    def is_zero(self) -> bool:
        return all(c == 0.0 for c in self.coeffs)

    def __call__(self, s):
        acc = 0.0
        for c in self.coeffs:
            acc = acc * s + c
        return acc

    def as_array(self) -> np.ndarray:
        return np.array(self.coeffs)


def solve_linear(A, b) -> np.ndarray:
    """Solve ``A X = b`` by Gaussian elimination with partial (row) pivoting.

    Raises SingularMatrix when a pivot drops below ``1e-12`` times the largest
    entry magnitude of ``A``.
    """
    A = as_matrix(A, "A")
    n = A.shape[0]
    if A.shape[1] != n:
        raise ValueError(f"A must be square, got {A.shape}")
    b_arr = np.array(b, dtype=float)
    vector_rhs = b_arr.ndim == 1
    B = as_matrix(b_arr, "b")
    if B.shape[0] != n:
        raise ValueError(f"b has {B.shape[0]} rows, A has {n}")

    scale = np.max(np.abs(A)) if A.size else 0.0
    tol = SINGULAR_RTOL * scale
    M = np.hstack([A, B])
    for k in range(n):
        p = k + int(np.argmax(np.abs(M[k:, k])))
        if scale == 0.0 or abs(M[p, k]) < tol:
            raise SingularMatrix(f"pivot {k} is {M[p, k]:.3e} (scale {scale:.3e})")
        if p != k:
            M[[k, p]] = M[[p, k]]
        if k + 1 < n:
            factors = M[k + 1:, k] / M[k, k]
            M[k + 1:, k:] -= np.outer(factors, M[k, k:])
    X = np.empty_like(B)
    for k in range(n - 1, -1, -1):
        X[k] = (M[k, n:] - M[k, k + 1:n] @ X[k + 1:]) / M[k, k]
    return X.reshape(-1) if vector_rhs else X


def _taylor_exp(A: np.ndarray, order: int = 18) -> np.ndarray:
    n = A.shape[0]
    result = np.eye(n)
    term = np.eye(n)
    for k in range(1, order + 1):
        term = term @ A / k
        result = result + term
        if not term.any():
            break
    return result


def mat_exp(A, t: float = 1.0) -> np.ndarray:
    """Matrix exponential ``exp(A t)`` by scaling and squaring a Taylor core."""
    At = as_matrix(A, "A") * float(t)
    if At.shape[0] != At.shape[1]:
        raise ValueError("A must be square")
    norm = np.max(np.sum(np.abs(At), axis=1)) if At.size else 0.0
    squarings = 0
    if norm > 0.5:
        squarings = int(np.ceil(np.log2(norm / 0.5)))
    E = _taylor_exp(At / 2.0**squarings)
    for _ in range(squarings):
        E = E @ E
    return E


def exp_integral(A, B, T: float) -> np.ndarray:
    """Zero-order-hold input matrix ``S = (int_0^T exp(A tau) dtau) B``.

    Read off the top-right block of ``exp([[A, B], [0, 0]] T)``.
    """
    if T < 0:
        raise ValueError("T must be non-negative")
    A = as_matrix(A, "A")
    B = as_matrix(B, "B")
    n, m = B.shape
    aug = np.zeros((n + m, n + m))
    aug[:n, :n] = A
    aug[:n, n:] = B
    return mat_exp(aug, T)[:n, n:]


def is_positive_definite(P) -> bool:
    P = as_matrix(P, "P")
    try:
        np.linalg.cholesky(0.5 * (P + P.T))
    except np.linalg.LinAlgError:
        return False
    return True


def lyapunov_solve(Acl, Q) -> np.ndarray:
    """Solve ``Acl^T P + P Acl = -Q`` for symmetric positive definite ``P``."""
    Acl = as_matrix(Acl, "Acl")
    Q = as_matrix(Q, "Q")
    n = Acl.shape[0]
    eye = np.eye(n)
    # column-major vec: vec(Acl^T P) = (I kron Acl^T) vec(P), vec(P Acl) = (Acl^T kron I) vec(P)
    K = np.kron(eye, Acl.T) + np.kron(Acl.T, eye)
    p = solve_linear(K, -Q.reshape(-1, order="F"))
    P = p.reshape(n, n, order="F")
    P = 0.5 * (P + P.T)
    if not is_positive_definite(P):
        raise NotPositiveDefinite("Lyapunov solution is not positive definite")
    return P


def spd_extreme_eig(S, which: str = "max", tol: float = 1e-10, max_iter: int = 10000) -> float:
    """Largest or smallest eigenvalue of a symmetric positive definite matrix.

    ``max`` uses power iteration on ``S``, ``min`` uses inverse iteration
    (power iteration on ``S^-1``). Iteration stops once the eigen-residual
    ``||S x - lam x||`` falls below ``tol * ||S||_inf``.
    """
    S = as_matrix(S, "S")
    S = 0.5 * (S + S.T)
    if which not in ("max", "min"):
        raise ValueError("which must be 'max' or 'min'")
    if not is_positive_definite(S):
        raise NotPositiveDefinite("extreme eigenvalues need a positive definite matrix")
    n = S.shape[0]
    M = S if which == "max" else solve_linear(S, np.eye(n))
    scale = float(np.max(np.sum(np.abs(S), axis=1)))
    x = np.linspace(1.0, 2.0, n)  # deterministic start touching every axis
    x /= np.linalg.norm(x)
    lam = float(x @ S @ x)
    for _ in range(max_iter):
        if np.linalg.norm(S @ x - lam * x) <= tol * scale:
            break
        y = M @ x
        x = y / np.linalg.norm(y)
        lam = float(x @ S @ x)
    return lam


def char_poly(A) -> Polynomial:
    """Monic characteristic polynomial via the Faddeev-LeVerrier recurrence.

    The recurrence runs in exact rational arithmetic on the (exactly
    representable) float entries and rounds once at the end. In floating
    point it cancels catastrophically once eigenvalue magnitudes spread over
    a few decades, which the stacked Newton-flow matrices do at large alpha.
    """
    A = as_matrix(A, "A")
    n = A.shape[0]
    if A.shape[1] != n:
        raise ValueError("A must be square")
    a = [[Fraction(float(v)) for v in row] for row in A]
    one, zero = Fraction(1), Fraction(0)
    M = [[zero] * n for _ in range(n)]
    coeffs = [one]
    c = one
    for k in range(1, n + 1):
        # M_k = A M_{k-1} + c_{k-1} I
        M = [[sum((a[i][l] * M[l][j] for l in range(n)), zero) + (c if i == j else zero)
              for j in range(n)] for i in range(n)]
        tr = sum((a[i][l] * M[l][i] for i in range(n) for l in range(n)), zero)
        c = -tr / k
        coeffs.append(c)
    return Polynomial(tuple(float(x) for x in coeffs))


def routh_array(p: Polynomial, eps: float = ROUTH_EPS):
    """Build the Routh array; returns (rows, touched_zero).

    Rows are rescaled to unit max-magnitude (signs are unaffected). A new
    entry counts as zero when it cancels to within ``eps`` of the two products
    forming it; a vanishing pivot, or a row of zeros, is replaced by ``eps``.
    """
    c = list(p.coeffs)
    width = (len(c) + 1) // 2
    r0 = np.array(c[0::2] + [0.0] * (width - len(c[0::2])))
    r1 = np.array(c[1::2] + [0.0] * (width - len(c[1::2])))
    rows = [_normalize(r0), _normalize(r1)]
    touched_zero = False
    for _ in range(p.degree - 1):
        prev, cur = rows[-2], rows[-1].copy()
        if abs(cur[0]) < eps:
            cur[0] = eps
            rows[-1] = cur
            touched_zero = True
        nxt = np.zeros(width)
        for j in range(width - 1):
            a, b = cur[0] * prev[j + 1], prev[0] * cur[j + 1]
            # an entry that is pure cancellation noise is a true zero
            if abs(a - b) > eps * (abs(a) + abs(b)):
                nxt[j] = (a - b) / cur[0]
        rows.append(_normalize(nxt))
    if abs(rows[-1][0]) < eps:
        rows[-1] = rows[-1].copy()
        rows[-1][0] = eps
        touched_zero = True
    return rows[: p.degree + 1], touched_zero


def _normalize(row: np.ndarray) -> np.ndarray:
    m = np.max(np.abs(row))
    return row / m if m > 0 else row


def routh_hurwitz(p: Polynomial) -> StabilityVerdict:
    """Routh-Hurwitz verdict: stable iff every first-column entry is positive."""
    if not isinstance(p, Polynomial):
        p = Polynomial(tuple(p))
    if p.is_zero():
        raise DegenerateInput("zero polynomial")
    if p.degree < 1:
        raise DegenerateInput("polynomial must have degree >= 1")
    if p.coeffs[0] < 0:
        p = Polynomial(tuple(-c for c in p.coeffs))
    rows, touched_zero = routh_array(p)
    first = np.array([r[0] for r in rows])
    if np.any(np.diff(np.sign(first)) != 0):
        return StabilityVerdict.UNSTABLE
    if touched_zero:
        return StabilityVerdict.MARGINAL
    return StabilityVerdict.STABLE
