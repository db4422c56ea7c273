"""Dense 2x2 matrix kernel.

A "matrix" here is a plain numpy array of shape (2, 2) (real or complex);
stacked variants have shape (..., 2, 2) and every routine broadcasts over
the leading axes.  The closed forms below avoid LAPACK calls so that tight
loops over millions of indices stay cheap and bit-reproducible.
"""

import warnings

import numpy as np

# right-angle rotation used by the Wronskian-type pairings
E = np.array([[0.0, -1.0], [1.0, 0.0]])

IDENTITY = np.eye(2)


class EmptyProductWarning(UserWarning):
    """An ordered product over an empty index range collapsed to the identity."""


def det(m):
    """Determinant, broadcasting over stacked matrices."""
    m = np.asarray(m)
    return m[..., 0, 0] * m[..., 1, 1] - m[..., 0, 1] * m[..., 1, 0]


def tr(m):
    """Trace, broadcasting over stacked matrices."""
    m = np.asarray(m)
    return m[..., 0, 0] + m[..., 1, 1]


def discr(m):
    """Discriminant (tr m)^2 - 4 det m."""
    return tr(m) ** 2 - 4.0 * det(m)


def sym(m):
    """Symmetrization (m + m*)/2; for real input this is (m + m^t)/2."""
    m = np.asarray(m)
    return 0.5 * (m + np.conj(np.swapaxes(m, -1, -2)))


def inv(m):
    """Closed-form inverse, broadcasting over stacked matrices."""
    m = np.asarray(m)
    d = det(m)
    out = np.empty_like(m)
    out[..., 0, 0] = m[..., 1, 1]
    out[..., 0, 1] = -m[..., 0, 1]
    out[..., 1, 0] = -m[..., 1, 0]
    out[..., 1, 1] = m[..., 0, 0]
    return out / d[..., None, None]


def ordered_product(factor, n0, n1):
    """Product factor(n1) @ factor(n1-1) @ ... @ factor(n0).

    Later indices multiply from the left.  The product is accumulated
    iteratively (not pairwise) so the rounding pattern is deterministic.
    An empty range (n0 > n1) returns the identity and emits
    EmptyProductWarning.
    """
    if n0 > n1:
        warnings.warn(
            "ordered_product over empty range [%d, %d]; returning identity" % (n0, n1),
            EmptyProductWarning,
            stacklevel=2,
        )
        return IDENTITY.copy()
    out = np.array(factor(n0), dtype=float, copy=True)
    for k in range(n0 + 1, n1 + 1):
        out = np.asarray(factor(k)) @ out
    return out


def scaled_ordered_product(factor, n0, n1, limit=1e150):
    """Like ordered_product but renormalized on the fly.

    Returns (m, log_scale) with the true product equal to m * exp(log_scale).
    Use this in the exponentially growing regime where the plain product
    overflows doubles (roughly beyond 1e5 growing factors).
    """
    if n0 > n1:
        warnings.warn(
            "scaled_ordered_product over empty range [%d, %d]; returning identity" % (n0, n1),
            EmptyProductWarning,
            stacklevel=2,
        )
        return IDENTITY.copy(), 0.0
    out = np.array(factor(n0), dtype=float, copy=True)
    log_scale = 0.0
    for k in range(n0 + 1, n1 + 1):
        out = np.asarray(factor(k)) @ out
        peak = np.max(np.abs(out))
        if peak > limit or (0.0 < peak < 1.0 / limit):
            out /= peak
            log_scale += np.log(peak)
    return out, log_scale


def product_of_stack(stack):
    """Ordered product of stack[-1] @ ... @ stack[0] for a (k, 2, 2) array."""
    out = np.array(stack[0], copy=True)
    for k in range(1, stack.shape[0]):
        out = stack[k] @ out
    return out
