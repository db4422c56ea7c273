"""Forward evaluation of a family: transfer matrices and generalized eigenvectors.

The transfer matrix at n = 0 uses the convention a_{-1} := 1, independent of
any a_{-1} a family's own b_0 definition may use; the two conventions touch
different formulas.
"""

from dataclasses import dataclass

import numpy as np

from . import mat2
from .family import FamilyDescriptor

OVERFLOW_LIMIT = 1e280
RENORM_LIMIT = 1e150


def transfer_B(fam: FamilyDescriptor, n: int, x: float) -> np.ndarray:
    """Transfer matrix [[0, 1], [-a_{n-1}/a_n, (x - b_n)/a_n]] with a_{-1} := 1."""
    an = fam.a_at(n)
    am1 = 1.0 if n == 0 else fam.a_at(n - 1)
    return np.array([[0.0, 1.0], [-am1 / an, (x - fam.b_at(n)) / an]])


def transfer_B_stack(fam: FamilyDescriptor, ns: np.ndarray, x: float) -> np.ndarray:
    """Stacked transfer matrices for an index array, shape (len(ns), 2, 2)."""
    ns = np.asarray(ns)
    a = fam.a_at(ns)
    am1 = np.where(ns >= 1, fam.a_at(np.maximum(ns - 1, 0)), 1.0)
    b = fam.b_at(ns)
    out = np.zeros(ns.shape + (2, 2))
    out[..., 0, 1] = 1.0
    out[..., 1, 0] = -am1 / a
    out[..., 1, 1] = (x - b) / a
    return out


def transfer_X(fam: FamilyDescriptor, n: int, x: float) -> np.ndarray:
    """N-step product B_{n+N-1} ... B_n over one period of the limit data."""
    N = fam.periodic.N
    return mat2.product_of_stack(transfer_B_stack(fam, np.arange(n, n + N), x))


def transfer_X_stack(fam: FamilyDescriptor, ns: np.ndarray, x: float) -> np.ndarray:
    """Stacked N-step products X_n for an array of starting indices."""
    N = fam.periodic.N
    ns = np.asarray(ns)
    out = transfer_B_stack(fam, ns, x)
    for k in range(1, N):
        out = transfer_B_stack(fam, ns + k, x) @ out
    return out


@dataclass(frozen=True)
class EigenTrace:
    """Samples u_0..u_n of a generalized eigenvector at fixed (eta, x).

    In renormalized mode `u` holds unit-scale values and `log_scale` the
    per-index log magnitudes: the true value is u[n] * exp(log_scale[n]).
    In plain mode log_scale is None; if the recurrence overflowed, the
    trace is truncated (trailing entries nan) and overflow_at records the
    first bad index.
    """

    x: float
    eta_angle: float
    u: np.ndarray
    family_label: str
    log_scale: np.ndarray | None = None
    overflow_at: int | None = None

    def __len__(self):
        return self.u.size

    def value(self, n):
        """True value(s) u_n, exponentiating the log scale when tracked."""
        if self.log_scale is None:
            return self.u[n]
        return self.u[n] * np.exp(self.log_scale[n])

    def log_abs(self, n):
        """log |u_n| (well-defined also in the growing regime)."""
        if self.log_scale is None:
            return np.log(np.abs(self.u[n]))
        return np.log(np.abs(self.u[n])) + self.log_scale[n]

    def vec(self, n: int) -> np.ndarray:
        """The propagated 2-vector: eta at n = 0, (u_{n-1}, u_n) for n >= 1."""
        if n == 0:
            return np.array([np.cos(self.eta_angle), np.sin(self.eta_angle)])
        return np.array([self.value(n - 1), self.value(n)])


def _recurrence_coefficients(fam: FamilyDescriptor, n_max: int, x: float):
    n = np.arange(n_max, dtype=float)
    a = fam.a_at(n)
    am1 = np.concatenate([[1.0], a[:-1]])
    b = fam.b_at(n)
    return (x - b) / a, am1 / a


def eigenvector_trace(fam: FamilyDescriptor, eta_angle: float, x: float, n_max: int,
                      renormalize: bool = False) -> EigenTrace:
    """Iterate the transfer recurrence u_{n+1} = ((x - b_n) u_n - a_{n-1} u_{n-1}) / a_n.

    The initial vector is eta = (cos eta_angle, sin eta_angle); u_0 = eta_2
    and the first component of eta occupies the "u_{-1} slot" of the n = 0
    step.  With renormalize=True the running pair is rescaled to unit size
    every step and the accumulated log magnitude is stored per index, which
    keeps exponentially growing traces representable.
    """
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    c1, c2 = _recurrence_coefficients(fam, n_max, x)
    c1 = c1.tolist()
    c2 = c2.tolist()
    eta1, eta2 = float(np.cos(eta_angle)), float(np.sin(eta_angle))
    u = np.empty(n_max + 1)
    u[0] = eta2
    prev, cur = eta1, eta2
    if not renormalize:
        overflow_at = None
        out = u
        for n in range(n_max):
            nxt = c1[n] * cur - c2[n] * prev
            if abs(nxt) > OVERFLOW_LIMIT:
                out[n + 1 :] = np.nan
                overflow_at = n + 1
                break
            out[n + 1] = nxt
            prev, cur = cur, nxt
        return EigenTrace(x, eta_angle, u, fam.label, None, overflow_at)

    log_scale = np.zeros(n_max + 1)
    scale = 0.0
    for n in range(n_max):
        nxt = c1[n] * cur - c2[n] * prev
        mag = max(abs(nxt), abs(cur))
        if mag > RENORM_LIMIT or (0.0 < mag < 1.0 / RENORM_LIMIT):
            prev_scaled, nxt = cur / mag, nxt / mag
            scale += np.log(mag)
            prev, cur = prev_scaled, nxt
        else:
            prev, cur = cur, nxt
        u[n + 1] = cur
        log_scale[n + 1] = scale
    return EigenTrace(x, eta_angle, u, fam.label, log_scale, None)


def orthopoly(fam: FamilyDescriptor, x: float, n: int) -> float:
    """Orthonormal polynomial p_n(x): the eta = (0, 1) generalized eigenvector."""
    if n == 0:
        return 1.0
    return float(eigenvector_trace(fam, np.pi / 2.0, x, n).u[n])
