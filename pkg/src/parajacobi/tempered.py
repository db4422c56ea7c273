"""Extraction of the tempered limits and the degree-<=1 polynomial they assemble.

All limits are estimated per residue class by window averages at three
geometric checkpoints n_max/4, n_max/2, n_max, followed by one
extrapolation step.  When the three averages show a clean geometric error
decay the step uses the empirically estimated order (Aitken form); this
matters because some catalog tails converge as slowly as n^{-0.05}, where
an extrapolation hard-wired to order 1/n removes almost nothing.
Otherwise it falls back to one Richardson step of order 1/n.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ExtractionError, OutOfScopeError, UnsupportedCaseError
from .family import FamilyDescriptor
from .parabolic import Case, ParabolicDecomposition

DEFAULT_WINDOW = 64
DEFAULT_TAIL_TOL = 0.25
SNAP_GUARD_LOW = 0.1
SNAP_GUARD_HIGH = 0.9
ZERO_TAU_TOL = 1e-12

Interval = tuple[float, float]


@dataclass(frozen=True)
class TemperedLimits:
    """Per-residue tempered limits and the assembled affine tau."""

    s: np.ndarray                 # off-diagonal defect limits, one per residue
    r: np.ndarray                 # diagonal defect limits
    t: int                        # gamma_n / a_n limit snapped to {0, 1}
    t_raw: float                  # the raw estimate before snapping
    u: np.ndarray                 # combined-defect limits
    S: float                      # sum of s_i / alpha_{i-1}
    U: float                      # sum of u_i / alpha_{i-1}
    tau_slope: float              # t * eps * trace_derivative
    tau_intercept: float          # S^2/4 + U
    x0: float | None              # root of tau when the slope term is active
    epsilon: int
    trace_derivative: float
    window: dict                  # extraction metadata (checkpoints, spreads)

    def to_json(self) -> dict:
        return {
            "s": [float(v) for v in self.s],
            "r": [float(v) for v in self.r],
            "t": int(self.t),
            "t_raw": float(self.t_raw),
            "u": [float(v) for v in self.u],
            "S": float(self.S),
            "U": float(self.U),
            "tau": {"slope": float(self.tau_slope), "intercept": float(self.tau_intercept)},
            "x0": None if self.x0 is None else float(self.x0),
            "diagnostics": self.window,
        }


@dataclass(frozen=True)
class TauPolynomial:
    """tau as an affine polynomial plus the sign sets it induces on R."""

    slope: float
    intercept: float
    lambda_minus: tuple[Interval, ...]
    lambda_plus: tuple[Interval, ...]
    x0: float | None


def _extrapolate(A1: float, A2: float, A3: float):
    """One extrapolation step from three doubling-checkpoint averages.

    Returns (limit, spread) where spread estimates the residual error.
    """
    d1 = A2 - A1
    d2 = A3 - A2
    scale = 1.0 + abs(A3)
    if abs(d2) < 1e-13 * scale or abs(d1) < 1e-13 * scale:
        return A3, abs(d2)
    ratio = d2 / d1
    if -0.95 < ratio < 0.9:
        limit = A3 + d2 * ratio / (1.0 - ratio)
        return limit, abs(limit - A3) * abs(ratio)
    # tail not geometric at these checkpoints: one order-1/n Richardson step
    return 2.0 * A3 - A2, abs(d2)


def _window_indices(checkpoint: int, residue: int, N: int, window: int) -> np.ndarray:
    top = checkpoint - ((checkpoint - residue) % N)
    ks = top - N * np.arange(window)
    return ks[ks >= max(1, residue)][::-1]


def _residue_limit(sample_fn, checkpoints, residue, N, window):
    averages = [float(np.mean(sample_fn(_window_indices(c, residue, N, window))))
                for c in checkpoints]
    return _extrapolate(*averages), averages


def estimate_limits(fam: FamilyDescriptor, decomp: ParabolicDecomposition,
                    n_max: int, window: int = DEFAULT_WINDOW,
                    tail_tol: float = DEFAULT_TAIL_TOL) -> TemperedLimits:
    """Estimate the tempered limits of a family at resolution n_max.

    Requires case IIb and n_max >= 1e3.  Raises ExtractionError when a tail
    has not stabilised (relative spread of the last two window averages
    above tail_tol) or when the gamma_n/a_n estimate falls inside the snap
    guard band (0.1, 0.9), which signals either a hypothesis violation or
    an n_max that is far too small.
    """
    if decomp.case is not Case.IIb:
        raise UnsupportedCaseError("tempered limits are defined for case IIb only")
    if n_max < 10**3:
        raise ExtractionError("n_max must be at least 1e3, got %d" % n_max)
    N = fam.periodic.N
    eps = float(decomp.epsilon)
    checkpoints = (n_max // 4, n_max // 2, n_max)
    alpha = fam.periodic.alpha_at
    beta = fam.periodic.beta_at

    def ratio_defect(ns):
        ns = np.asarray(ns)
        return alpha(ns - 1) / alpha(ns) - fam.a_at(ns - 1) / fam.a_at(ns)

    def diag_defect(ns):
        ns = np.asarray(ns)
        return beta(ns) / alpha(ns) - fam.b_at(ns) / fam.a_at(ns)

    def s_sample(ns):
        ns = np.asarray(ns)
        return np.sqrt(alpha(ns) * fam.gamma_at(ns)) * ratio_defect(ns)

    def r_sample(ns):
        ns = np.asarray(ns)
        return np.sqrt(alpha(ns) * fam.gamma_at(ns)) * diag_defect(ns)

    def u_sample(ns):
        ns = np.asarray(ns)
        X11 = decomp.Xi[np.mod(ns, N), 0, 0]
        X21 = decomp.Xi[np.mod(ns, N), 1, 0]
        return fam.gamma_at(ns) * (
            (1.0 - eps * X11) * ratio_defect(ns) - eps * X21 * diag_defect(ns)
        )

    def t_sample(ns):
        ns = np.asarray(ns)
        return fam.gamma_at(ns) / fam.a_at(ns)

    s = np.empty(N)
    r = np.empty(N)
    u = np.empty(N)
    t_per_residue = np.empty(N)
    spreads = {}
    for i in range(N):
        for name, fn, out in (("s", s_sample, s), ("r", r_sample, r), ("u", u_sample, u),
                              ("t", t_sample, t_per_residue)):
            (limit, spread), averages = _residue_limit(fn, checkpoints, i, N, window)
            tail_jump = abs(averages[2] - averages[1])
            if tail_jump > tail_tol * (1.0 + abs(averages[2])):
                raise ExtractionError(
                    "%s-limit tail for residue %d not convergent: window averages %r"
                    % (name, i, averages),
                    spread=tail_jump,
                )
            out[i] = limit
            spreads["%s[%d]" % (name, i)] = spread

    t_raw = float(np.mean(t_per_residue))
    if SNAP_GUARD_LOW < t_raw < SNAP_GUARD_HIGH:
        raise ExtractionError(
            "gamma_n/a_n estimate %.6g sits in the snap guard band (%g, %g)"
            % (t_raw, SNAP_GUARD_LOW, SNAP_GUARD_HIGH),
            spread=t_raw,
        )
    t = 0 if t_raw <= SNAP_GUARD_LOW else 1

    alpham1 = alpha(np.arange(N) - 1)
    S = float(np.sum(s / alpham1))
    U = float(np.sum(u / alpham1))
    trace_d = decomp.trace_derivative
    slope = float(t) * eps * trace_d
    intercept = 0.25 * S * S + U
    x0 = None
    if t != 0:
        x0 = -(U + 0.25 * S * S) / (eps * trace_d)
    return TemperedLimits(
        s=s, r=r, t=t, t_raw=t_raw, u=u, S=S, U=U,
        tau_slope=slope, tau_intercept=intercept, x0=x0,
        epsilon=decomp.epsilon, trace_derivative=trace_d,
        window={
            "n_max": int(n_max),
            "checkpoints": [int(c) for c in checkpoints],
            "window": int(window),
            "spreads": {k: float(v) for k, v in sorted(spreads.items())},
        },
    )


def tau(limits: TemperedLimits, x):
    """Evaluate tau(x) = slope * x + intercept (vectorized in x)."""
    return limits.tau_slope * np.asarray(x, dtype=float) + limits.tau_intercept


def lambda_sets(limits: TemperedLimits, zero_tol: float = ZERO_TAU_TOL) -> TauPolynomial:
    """Partition R by the sign of tau into the oscillatory and hyperbolic sets.

    Raises OutOfScopeError when tau is identically zero within zero_tol;
    that regime is excluded by assumption.
    """
    m, c = limits.tau_slope, limits.tau_intercept
    if abs(m) <= zero_tol and abs(c) <= zero_tol:
        raise OutOfScopeError("tau is identically zero within tolerance; sign sets undefined")
    inf = float("inf")
    if abs(m) <= zero_tol:
        if c < 0:
            return TauPolynomial(m, c, ((-inf, inf),), (), None)
        return TauPolynomial(m, c, (), ((-inf, inf),), None)
    x0 = -c / m
    if m > 0:
        return TauPolynomial(m, c, ((-inf, x0),), ((x0, inf),), x0)
    return TauPolynomial(m, c, ((x0, inf),), ((-inf, x0),), x0)


def d1n_diagnostic(seq, N: int, windows: int = 5, n0: int = 64) -> dict:
    """Doubling-window diagnostic for summability of n -> |seq(n+N) - seq(n)|.

    seq is a vectorized callable of the index.  Per window [n0 2^w, n0 2^{w+1})
    the partial sum of N-step differences is computed; a monotonically
    decaying tail is reported as a pass, anything else as a warning.  This
    is a report, never an enforcement: summability is not decidable from
    finitely many terms.
    """
    sums = []
    lo = n0
    for _ in range(windows):
        n = np.arange(lo, 2 * lo, dtype=float)
        sums.append(float(np.sum(np.abs(seq(n + N) - seq(n)))))
        lo *= 2
    decaying = all(sums[k + 1] <= sums[k] for k in range(len(sums) - 1))
    vanishing = sums[-1] <= sums[0] * 0.5 or sums[-1] < 1e-12
    return {
        "window_sums": sums,
        "n0": n0,
        "windows": windows,
        "verdict": "pass" if (decaying and vanishing) else "warn",
    }


def frak_S_check(fam: FamilyDescriptor, limits: TemperedLimits, n_max: int,
                 window: int = DEFAULT_WINDOW) -> float:
    """|S - tail estimate of sqrt(gamma_n/alpha_n)(1 - a_n/a_{n+N})|.

    The alternative expression for S is valid when the gamma ratios track
    the alpha ratios; that hypothesis is probed by a windowed decay check
    whose outcome is only reported through the returned residual.
    """
    N = fam.periodic.N
    alpha = fam.periodic.alpha_at

    def sample(ns):
        ns = np.asarray(ns)
        return np.sqrt(fam.gamma_at(ns) / alpha(ns)) * (1.0 - fam.a_at(ns) / fam.a_at(ns + N))

    checkpoints = (n_max // 4, n_max // 2, n_max)
    estimates = []
    for i in range(N):
        (limit, _), _ = _residue_limit(sample, checkpoints, i, N, window)
        estimates.append(limit)
    return abs(limits.S - float(np.mean(estimates)))
