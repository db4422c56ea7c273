"""The N-periodic limit operator: one-period products, classification, conjugators.

Everything in this module depends only on the periodic data (alpha, beta).
The central object is the one-period product at energy 0, which in the
regime treated by this library is a non-trivial parabolic element of
SL(2, R): |trace| = 2 but not a multiple of the identity.  Such a matrix
is conjugate to eps * J with the model Jordan block

    J = [[0, 1], [-1, 2]],     eps = sign of the trace,

and the conjugators T_i are fixed here by a reproducible canonical choice.
"""

import enum
from dataclasses import dataclass

import numpy as np

from . import mat2
from .errors import (
    AmbiguousCaseError,
    ConfigError,
    InternalConsistencyError,
    UnsupportedCaseError,
)
from .family import PeriodicData, symmetric_bd_periodic

JORDAN_BLOCK = np.array([[0.0, 1.0], [-1.0, 2.0]])

CLASSIFY_TOL = 1e-9
RECONSTRUCTION_TOL = 1e-10
TRACE_DERIVATIVE_FD_TOL = 1e-5


class Case(enum.Enum):
    """Classification of the one-period product at energy 0 by its trace."""

    I = "I"        # |tr| < 2: elliptic
    IIa = "IIa"    # |tr| = 2, diagonalizable (a multiple of the identity)
    IIb = "IIb"    # |tr| = 2, non-diagonalizable (non-trivial parabolic)
    III = "III"    # |tr| > 2: hyperbolic


def frak_B(periodic: PeriodicData, n: int, x: float) -> np.ndarray:
    """One-step periodic transfer matrix [[0, 1], [-alpha_{n-1}/alpha_n, (x - beta_n)/alpha_n]]."""
    an = periodic.alpha_at(n)
    return np.array([
        [0.0, 1.0],
        [-periodic.alpha_at(n - 1) / an, (x - periodic.beta_at(n)) / an],
    ])


def frak_X(periodic: PeriodicData, n: int, x: float) -> np.ndarray:
    """One-period ordered product frak_B_{n+N-1} ... frak_B_n."""
    return mat2.ordered_product(lambda j: frak_B(periodic, j, x), n, n + periodic.N - 1)


def classify(periodic: PeriodicData, tol: float = CLASSIFY_TOL) -> Case:
    """Classify the period-0 product by its trace at energy 0.

    Within tol of |trace| = 2 the matrix is checked against +-identity to
    split IIa from IIb; a matrix sitting within an order of magnitude of
    that secondary threshold raises AmbiguousCaseError with both distances.
    """
    if not tol > 0:
        raise ConfigError("classification tolerance must be positive")
    X0 = frak_X(periodic, 0, 0.0)
    t = float(mat2.tr(X0))
    if abs(t) < 2.0 - tol:
        return Case.I
    if abs(t) > 2.0 + tol:
        return Case.III
    eps = 1.0 if t >= 0 else -1.0
    dist_id = float(np.linalg.norm(X0 - eps * mat2.IDENTITY))
    if dist_id < tol:
        return Case.IIa
    if dist_id < 10.0 * tol:
        raise AmbiguousCaseError(
            "one-period product sits on the IIa/IIb boundary",
            trace_distance=abs(abs(t) - 2.0),
            identity_distance=dist_id,
        )
    return Case.IIb


def canonical_T0(X0: np.ndarray, epsilon: int) -> np.ndarray:
    """Reproducible conjugator with eps * T0 J T0^{-1} == X0.

    The defining system only pins T0 up to symmetry, so a representative is
    fixed: s is the eigenvector of eps*X0 for eigenvalue 1 scaled so its
    first nonzero coordinate equals +1, t2 the minimal-norm solution of
    (eps*X0 - Id) t2 = s, and T0 = [s - t2 | t2].  Quantities downstream
    that depend on the T0 normalization (the overall scale of the phase
    function amplitude) are representative-dependent by construction.
    """
    A = epsilon * X0 - mat2.IDENTITY
    # rank-1 nilpotent; its kernel vector read off the larger row
    if abs(A[0, 0]) + abs(A[0, 1]) >= abs(A[1, 0]) + abs(A[1, 1]):
        s = np.array([A[0, 1], -A[0, 0]])
    else:
        s = np.array([A[1, 1], -A[1, 0]])
    norm = np.linalg.norm(s)
    if norm == 0.0:
        raise UnsupportedCaseError("matrix is a multiple of the identity; no Jordan conjugator")
    lead = s[0] if abs(s[0]) > 1e-14 * norm else s[1]
    s = s / lead
    t2 = np.linalg.lstsq(A, s, rcond=None)[0]
    t1 = s - t2
    T0 = np.column_stack([t1, t2])
    resid = np.linalg.norm(X0 - epsilon * T0 @ JORDAN_BLOCK @ mat2.inv(T0))
    if resid > RECONSTRUCTION_TOL:
        raise InternalConsistencyError(
            "canonical conjugator reconstruction residual %.3e exceeds %.1e"
            % (resid, RECONSTRUCTION_TOL)
        )
    return T0


def trace_derivative(periodic: PeriodicData) -> float:
    """d/dx trace of the one-period product at x = 0.

    Primary evaluation is the closed sum -sum_i [X_i(0)]_{21} / alpha_{i-1};
    a central finite difference of the trace (step 1e-6) cross-checks it and
    a discrepancy beyond 1e-5 raises InternalConsistencyError.
    """
    N = periodic.N
    closed = -sum(
        frak_X(periodic, i, 0.0)[1, 0] / periodic.alpha_at(i - 1) for i in range(N)
    )
    h = 1e-6
    fd = (mat2.tr(frak_X(periodic, 0, h)) - mat2.tr(frak_X(periodic, 0, -h))) / (2.0 * h)
    if abs(closed - fd) > TRACE_DERIVATIVE_FD_TOL * (1.0 + abs(closed)):
        raise InternalConsistencyError(
            "trace derivative mismatch: closed sum %.12g vs finite difference %.12g"
            % (closed, fd)
        )
    return float(closed)


@dataclass(frozen=True)
class ParabolicDecomposition:
    """Energy-0 data of the periodic limit: products, sign, conjugators, case."""

    epsilon: int
    X0: np.ndarray
    T: np.ndarray | None          # (N, 2, 2) conjugators, IIb only
    Xi: np.ndarray                # (N, 2, 2) one-period products at 0
    case: Case
    trace_derivative: float
    periodic: PeriodicData

    def T_at(self, i: int) -> np.ndarray:
        if self.T is None:
            raise UnsupportedCaseError("conjugators exist only in case IIb")
        return self.T[i % self.periodic.N]

    def Xi_at(self, i: int) -> np.ndarray:
        return self.Xi[i % self.periodic.N]


def conjugator_T(periodic: PeriodicData, epsilon: int) -> np.ndarray:
    """All N conjugators: T_i = frak_B_{i-1}(0) ... frak_B_0(0) T_0."""
    N = periodic.N
    T = np.empty((N, 2, 2))
    T[0] = canonical_T0(frak_X(periodic, 0, 0.0), epsilon)
    for i in range(1, N):
        T[i] = frak_B(periodic, i - 1, 0.0) @ T[i - 1]
    return T


def decompose(periodic: PeriodicData, tol: float = CLASSIFY_TOL) -> ParabolicDecomposition:
    """Classify and, in case IIb, build the full conjugation data."""
    case = classify(periodic, tol)
    N = periodic.N
    Xi = np.stack([frak_X(periodic, i, 0.0) for i in range(N)])
    X0 = Xi[0]
    eps = 1 if mat2.tr(X0) >= 0 else -1
    T = conjugator_T(periodic, eps) if case is Case.IIb else None
    return ParabolicDecomposition(
        epsilon=eps,
        X0=X0,
        T=T,
        Xi=Xi,
        case=case,
        trace_derivative=trace_derivative(periodic),
        periodic=periodic,
    )


# ---------------------------------------------------------------------------
# symmetric birth-death closed forms
# ---------------------------------------------------------------------------


def bd_weights(tilde_alpha, upto: int) -> np.ndarray:
    """Alternating weights w_k = (-1)^k ta_0 ta_2 ... ta_{2k-2} / (ta_1 ... ta_{2k-1})."""
    ta = np.asarray(tilde_alpha, dtype=float)
    at = lambda k: ta[k % ta.size]
    w = np.empty(upto + 1)
    w[0] = 1.0
    for k in range(1, upto + 1):
        w[k] = -w[k - 1] * at(2 * k - 2) / at(2 * k - 1)
    return w


def periodic_poly_at_zero(tilde_alpha, n: int, return_weights: bool = False):
    """Value at 0 of the n-th orthogonal polynomial of the symmetric-bd periodic data.

    Closed form (ta_0 / (ta_{2n} w_n)) * sum_{k<=n} w_k^2 with the
    alternating weights from bd_weights.  Set return_weights=True to get
    (value, w) for test oracles.
    """
    ta = np.asarray(tilde_alpha, dtype=float)
    at = lambda k: ta[k % ta.size]
    w = bd_weights(ta, n)
    value = at(0) / (at(2 * n) * w[n]) * float(np.sum(w**2))
    if return_weights:
        return value, w
    return value


def bd_identity_check(tilde_alpha) -> float:
    """Max residual of the symmetric-bd cancellation identity over one period.

    (1 - eps [X_n(0)]_11) alpha_{n-1}/alpha_n
        - (ta_{2n}^2 / (ta_{2n+1} ta_{2n+2})) eps [X_n(0)]_21   == 0
    holds exactly for balanced tilde_alpha; the return value is the max
    absolute defect over n in [0, N).
    """
    ta = np.asarray(tilde_alpha, dtype=float)
    periodic = symmetric_bd_periodic(ta)
    N = periodic.N
    eps = float((-1.0) ** N)
    at = lambda k: ta[k % ta.size]
    worst = 0.0
    for n in range(N):
        Xn = frak_X(periodic, n, 0.0)
        lhs = (1.0 - eps * Xn[0, 0]) * periodic.alpha_at(n - 1) / periodic.alpha_at(n)
        lhs -= at(2 * n) ** 2 / (at(2 * n + 1) * at(2 * n + 2)) * eps * Xn[1, 0]
        worst = max(worst, abs(lhs))
    return worst


def symmetric_bd_trace_derivative(tilde_alpha) -> float:
    """Closed-form trace derivative for balanced symmetric-bd periodic data.

    -eps * sum_i (1/alpha_i) (ta_{2i+2}/ta_{2i+1})
               * sum_{k=0}^{N-1} prod_{j=1}^{k} (ta_{2i+2j}/ta_{2i+2j+1})^2

    Note the shift: the inner weight products start at ta_{2i+2}.  A widely
    circulated variant of this formula starts them at ta_{2i} (and uses the
    prefactor ta_{2i}/ta_{2i-1}); that variant disagrees with the defining
    derivative whenever alpha is non-constant, see tests.
    """
    ta = np.asarray(tilde_alpha, dtype=float)
    periodic = symmetric_bd_periodic(ta)
    N = periodic.N
    eps = float((-1.0) ** N)
    at = lambda k: ta[k % ta.size]
    total = 0.0
    for i in range(N):
        inner = 1.0
        prod = 1.0
        for k in range(1, N):
            prod *= (at(2 * i + 2 * k) / at(2 * i + 2 * k + 1)) ** 2
            inner += prod
        total += inner / periodic.alpha_at(i) * (at(2 * i + 2) / at(2 * i + 1))
    return -eps * total


def random_balanced_tilde_alpha(N: int, rng) -> np.ndarray:
    """Random positive 2N-vector satisfying the even/odd product balance."""
    ta = rng.uniform(0.5, 2.0, size=2 * N)
    even = np.prod(ta[0::2])
    odd = np.prod(ta[1::2][:-1]) if N > 1 else 1.0
    ta[2 * N - 1] = even / odd
    return ta
