"""Shifted conjugation, uniform diagonalization, Turan determinants,
phase-amplitude extraction, Christoffel-Darboux kernels, oscillatory averaging,
and the perturbation comparison matrices.

Notation used throughout: for residue i and block index j the relevant
tempering weight is gamma at index (j+1)N + i - 1, written g_j below, and
the small parameter is sqrt(alpha_{i-1} / g_j).  The change of variables

    Z_j = T_i [[1, 1], [e^{h_j}, e^{-h_j}]],   h_j = sqrt(alpha_{i-1} |tau(x)| / g_j)

turns the N-step transfer products into eps (Id + sqrt(alpha_{i-1}/g_j) R_j)
with R_j convergent; on the negative-tau set the R_j have complex conjugate
eigenvalues, which yields the sine asymptotics of the eigenvectors and, by
averaging, the kernel limit.
"""

from dataclasses import dataclass

import numpy as np

from . import mat2
from .errors import (
    ExtractionError,
    OutsideOscillatoryRegionError,
    SingularPointError,
    StartIndexTooSmallError,
)
from .evolve import EigenTrace, eigenvector_trace, transfer_B_stack, transfer_X, transfer_X_stack
from .family import FamilyDescriptor, PerturbedFamily
from .parabolic import ParabolicDecomposition
from .tempered import TemperedLimits, tau

DET_Z_FLOOR = 1e-300
ARCCOS_CLAMP = 1e-12
X0_PUNCTURE = 1e-3


# ---------------------------------------------------------------------------
# shifted conjugation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ConjugationStep:
    """One step of the shifted conjugation at block index j, residue i."""

    j: int
    i: int
    vartheta: float
    Z: np.ndarray
    Z_next: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    Y: np.ndarray
    scale: float       # sqrt(alpha_{i-1} / g_j)


def gamma_block_index(N: int, i: int, j: int) -> int:
    """Index (j+1)N + i - 1 of the tempering weight attached to block j."""
    return (j + 1) * N + i - 1


def vartheta(fam: FamilyDescriptor, limits: TemperedLimits, i: int, j: int, x: float) -> float:
    """h_j = sqrt(alpha_{i-1} |tau(x)| / gamma_{(j+1)N+i-1})."""
    N = fam.periodic.N
    g = fam.gamma_at(gamma_block_index(N, i, j))
    return float(np.sqrt(fam.periodic.alpha_at(i - 1) * abs(tau(limits, x)) / g))


def _check_not_singular(limits: TemperedLimits, x: float):
    if limits.t != 0 and limits.x0 is not None and abs(x - limits.x0) < X0_PUNCTURE:
        raise SingularPointError(
            "x = %.17g is within %g of the tau root %.17g" % (x, X0_PUNCTURE, limits.x0)
        )
    if abs(tau(limits, x)) < 1e-14:
        raise SingularPointError("tau(x) vanishes at x = %.17g" % x)


def z_matrix(decomp: ParabolicDecomposition, fam: FamilyDescriptor,
             limits: TemperedLimits, i: int, j: int, x: float) -> np.ndarray:
    """Conjugating matrix Z_j = T_i [[1, 1], [e^{h_j}, e^{-h_j}]]."""
    h = vartheta(fam, limits, i, j, x)
    core = np.array([[1.0, 1.0], [np.exp(h), np.exp(-h)]])
    return decomp.T_at(i) @ core


def conjugation_step(fam: FamilyDescriptor, decomp: ParabolicDecomposition,
                     limits: TemperedLimits, i: int, j: int, x: float) -> ConjugationStep:
    """Compute Z_j, the correction matrices Q_j and R_j, and Y_j at one index.

    Q_j and R_j are defined by exact rearrangement,
        Q_j = (1/scale) (Z_j^{-1} Z_{j+1} - Id),
        R_j = (1/scale) (eps Z_{j+1}^{-1} X_{jN+i} Z_j - Id),
    with scale = sqrt(alpha_{i-1}/g_j), so reconstructing the originals from
    them is exact up to roundoff.
    """
    if j < 1:
        raise ValueError("conjugation steps start at j = 1")
    _check_not_singular(limits, x)
    N = fam.periodic.N
    Z = z_matrix(decomp, fam, limits, i, j, x)
    Z_next = z_matrix(decomp, fam, limits, i, j + 1, x)
    if abs(mat2.det(Z)) < DET_Z_FLOOR:
        raise SingularPointError("det Z_j underflowed at j = %d" % j)
    g = fam.gamma_at(gamma_block_index(N, i, j))
    scale = float(np.sqrt(fam.periodic.alpha_at(i - 1) / g))
    X = transfer_X(fam, j * N + i, x)
    Y = mat2.inv(Z_next) @ X @ Z
    Q = (mat2.inv(Z) @ Z_next - mat2.IDENTITY) / scale
    R = (decomp.epsilon * Y - mat2.IDENTITY) / scale
    return ConjugationStep(j=j, i=i, vartheta=vartheta(fam, limits, i, j, x),
                           Z=Z, Z_next=Z_next, Q=Q, R=R, Y=Y, scale=scale)


def r_infinity(limits: TemperedLimits, x: float) -> np.ndarray:
    """Limit matrix of the R_j: built from |tau|, the residue sum S and
    upsilon(x) = S^2/4 - tau(x); its discriminant is 4 tau(x) and its trace -S."""
    t = float(tau(limits, x))
    if abs(t) < 1e-14:
        raise SingularPointError("tau(x) = 0: the limit matrix is singularly scaled")
    ups = 0.25 * limits.S**2 - t
    rt = np.sqrt(abs(t))
    return (
        0.5 * rt * np.array([[1.0, -1.0], [1.0, -1.0]])
        - 0.5 * ups / rt * np.array([[1.0, 1.0], [-1.0, -1.0]])
        - 0.5 * limits.S * np.array([[1.0, -1.0], [-1.0, 1.0]])
    )


# ---------------------------------------------------------------------------
# uniform diagonalization on the oscillatory set
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DiagonalizedStep:
    """Spectral data of one Y_j in the oscillatory regime."""

    j: int
    xi: complex
    lam: complex
    C: np.ndarray           # complex 2x2, second column conjugate of the first
    theta: float
    j0: int
    delta: float


def _theta_from_Y(Y: np.ndarray, clamp: float = ARCCOS_CLAMP) -> float:
    dY = float(mat2.det(Y))
    if dY <= 0:
        raise OutsideOscillatoryRegionError("det Y_j <= 0; not in the oscillatory regime")
    arg = float(mat2.tr(Y)) / (2.0 * np.sqrt(dY))
    if abs(arg) > 1.0:
        if abs(arg) - 1.0 <= clamp:
            arg = np.clip(arg, -1.0, 1.0)
        else:
            raise StartIndexTooSmallError(
                "arccos argument %.17g leaves [-1, 1]: j0 too small or x outside the "
                "oscillatory set" % arg
            )
    return float(np.arccos(arg))


def diagonalize(step: ConjugationStep, j0: int, epsilon: int,
                delta: float = 0.0) -> DiagonalizedStep:
    """Eigen-decomposition of R_j (hence Y_j) with the orientation fixed by eps.

    Requires discr R_j < 0 and [R_j]_12 != 0; the rotation angle is
    theta_j = arccos(tr Y_j / (2 sqrt(det Y_j))), taken in (0, pi).
    """
    if step.j < j0:
        raise StartIndexTooSmallError("step index %d precedes j0 = %d" % (step.j, j0))
    R = step.R
    d = float(mat2.discr(R))
    if d >= 0:
        raise OutsideOscillatoryRegionError("discr R_j = %.3e >= 0 at j = %d" % (d, step.j))
    if R[0, 1] == 0.0:
        raise OutsideOscillatoryRegionError("[R_j]_12 = 0 at j = %d" % step.j)
    xi = complex(0.5 * mat2.tr(R), 0.5 * epsilon * np.sqrt(-d))
    lam = epsilon * (1.0 + step.scale * xi)
    C = np.array([
        [1.0 + 0j, 1.0 + 0j],
        [(xi - R[0, 0]) / R[0, 1], (np.conj(xi) - R[0, 0]) / R[0, 1]],
    ])
    return DiagonalizedStep(j=step.j, xi=xi, lam=lam, C=C,
                            theta=_theta_from_Y(step.Y), j0=j0, delta=delta)


def select_j0(fam: FamilyDescriptor, decomp: ParabolicDecomposition,
              limits: TemperedLimits, i: int, xs, j_hi: int,
              lookahead: int = 32) -> tuple[int, float]:
    """Smallest j such that the next `lookahead` steps stay uniformly oscillatory.

    delta is half the grid minimum of |discr R_infinity| / 4; the window
    must satisfy discr R_j < -delta and |[R_j]_12| > delta at every x.
    """
    xs = np.atleast_1d(np.asarray(xs, dtype=float))
    delta = 0.5 * min(abs(mat2.discr(r_infinity(limits, x))) / 4.0 for x in xs)
    for j0 in range(1, max(2, j_hi - lookahead)):
        ok = True
        for dj in range(lookahead):
            for x in xs:
                step = conjugation_step(fam, decomp, limits, i, j0 + dj, x)
                if not (mat2.discr(step.R) < -delta and abs(step.R[0, 1]) > delta):
                    ok = False
                    break
            if not ok:
                break
        if ok:
            return j0, float(delta)
    raise StartIndexTooSmallError(
        "no admissible j0 found below %d (delta = %.3e)" % (j_hi - lookahead, delta)
    )


# ---------------------------------------------------------------------------
# batched step pipeline (used by phase extraction and its tests)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StepSeries:
    """Vectorized conjugation/diagonalization data for j in [j0, j_max]."""

    i: int
    j0: int
    js: np.ndarray
    theta: np.ndarray            # rotation angles
    lam: np.ndarray              # complex eigenvalues of Y_j
    R: np.ndarray                # stacked R_j
    Y: np.ndarray
    vartheta: np.ndarray
    scale: np.ndarray
    log_abs_lam_prefix: np.ndarray   # sum_{k=j0}^{j-1} log |lam_k| (exclusive)
    arg_lam_prefix: np.ndarray       # sum_{k=j0}^{j-1} arg lam_k (exclusive)
    theta_prefix: np.ndarray         # sum_{k=j0}^{j-1} theta_k (exclusive)


def step_series(fam: FamilyDescriptor, decomp: ParabolicDecomposition,
                limits: TemperedLimits, i: int, x: float,
                j0: int, j_max: int) -> StepSeries:
    """All conjugation data for j0 <= j <= j_max at once, via stacked 2x2 algebra."""
    _check_not_singular(limits, x)
    N = fam.periodic.N
    eps = float(decomp.epsilon)
    js = np.arange(j0, j_max + 1)
    alpha_im1 = fam.periodic.alpha_at(i - 1)
    abs_tau = abs(float(tau(limits, x)))

    g = fam.gamma_at((js + 1) * N + i - 1)
    g_next = fam.gamma_at((js + 2) * N + i - 1)
    h = np.sqrt(alpha_im1 * abs_tau / g)
    h_next = np.sqrt(alpha_im1 * abs_tau / g_next)
    scale = np.sqrt(alpha_im1 / g)

    Ti = decomp.T_at(i)
    core = np.zeros((js.size, 2, 2))
    core[:, 0, 0] = 1.0
    core[:, 0, 1] = 1.0
    core[:, 1, 0] = np.exp(h)
    core[:, 1, 1] = np.exp(-h)
    Z = Ti[None, :, :] @ core
    core_next = np.zeros_like(core)
    core_next[:, 0, 0] = 1.0
    core_next[:, 0, 1] = 1.0
    core_next[:, 1, 0] = np.exp(h_next)
    core_next[:, 1, 1] = np.exp(-h_next)
    Z_next = Ti[None, :, :] @ core_next

    X = transfer_X_stack(fam, js * N + i, x)
    Y = mat2.inv(Z_next) @ X @ Z
    R = (eps * Y - np.eye(2)[None, :, :]) / scale[:, None, None]

    d = mat2.discr(R)
    if np.any(d >= 0):
        bad = int(js[np.argmax(d >= 0)])
        raise OutsideOscillatoryRegionError("discr R_j >= 0 first at j = %d" % bad)
    xi = 0.5 * mat2.tr(R) + 0.5j * eps * np.sqrt(-d)
    lam = eps * (1.0 + scale * xi)

    detY = mat2.det(Y)
    if np.any(detY <= 0):
        raise OutsideOscillatoryRegionError("det Y_j <= 0 inside the series")
    arg = mat2.tr(Y) / (2.0 * np.sqrt(detY))
    over = np.abs(arg) - 1.0
    if np.any(over > ARCCOS_CLAMP):
        raise StartIndexTooSmallError("arccos argument leaves [-1, 1] beyond clamp")
    theta = np.arccos(np.clip(arg, -1.0, 1.0))

    def exclusive_cumsum(v):
        out = np.empty_like(v)
        out[0] = 0.0
        np.cumsum(v[:-1], out=out[1:])
        return out

    return StepSeries(
        i=i, j0=j0, js=js, theta=theta, lam=lam, R=R, Y=Y, vartheta=h, scale=scale,
        log_abs_lam_prefix=exclusive_cumsum(np.log(np.abs(lam))),
        arg_lam_prefix=exclusive_cumsum(np.angle(lam)),
        theta_prefix=exclusive_cumsum(theta),
    )


def growth_constant(fam: FamilyDescriptor, limits: TemperedLimits, i: int,
                    j0: int, x: float) -> float:
    """Limit of (a_{jN+i-1}/sqrt(g_{j-1})) prod_{k=j0}^{j-1} |lam_k|^2.

    Equals a_{j0 N + i - 1} sinh(h_{j0}) / sqrt(alpha_{i-1} |tau(x)|); the
    product telescopes through det Y, so this constant is exactly invariant
    under changing j0 together with the matching |lam| factors.
    """
    N = fam.periodic.N
    h0 = vartheta(fam, limits, i, j0, x)
    a0 = fam.a_at(j0 * N + i - 1)
    return float(a0 * np.sinh(h0) / np.sqrt(fam.periodic.alpha_at(i - 1) * abs(tau(limits, x))))


# ---------------------------------------------------------------------------
# Turan determinants
# ---------------------------------------------------------------------------


def turan(fam: FamilyDescriptor, trace: EigenTrace, n: int) -> float:
    """N-shifted weighted Turan determinant
    S_n = a_{n+N-1} sqrt(g_{n+N-1}) (u_{n+N-1} u_n - u_{n+N} u_{n-1}).

    For N = 1 this reduces to a_n sqrt(g_n) (u_n^2 - u_{n+1} u_{n-1}).
    Requires n >= 1 and a trace reaching index n + N.
    """
    N = fam.periodic.N
    if n < 1:
        raise ValueError("the shifted pairing needs n >= 1")
    if n + N >= len(trace):
        raise ValueError("trace too short: need index %d" % (n + N))
    u = trace.u
    w = fam.a_at(n + N - 1) * np.sqrt(fam.gamma_at(n + N - 1))
    return float(w * (u[n + N - 1] * u[n] - u[n + N] * u[n - 1]))


def turan_series(fam: FamilyDescriptor, trace: EigenTrace, ns) -> np.ndarray:
    """Vectorized S_n over an index array."""
    N = fam.periodic.N
    ns = np.asarray(ns)
    u = trace.u
    w = fam.a_at(ns + N - 1) * np.sqrt(fam.gamma_at(ns + N - 1))
    return w * (u[ns + N - 1] * u[ns] - u[ns + N] * u[ns - 1])


# ---------------------------------------------------------------------------
# phase-amplitude form of the eigenvectors
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PhaseAmplitude:
    """Tail-extracted amplitude/phase of a generalized eigenvector.

    The asymptotic form on the oscillatory set is

        u_{jN+i} / prod_{k=j0}^{j-1} |lam_k|
            = (phi_abs / sqrt(alpha_{i-1} |tau|)) sin(theta_prefix_j + phi_arg) + E_j,

    with sup |E_j| -> 0.  phi_abs == 0 happens exactly when the (2,1) entry
    of the limit one-period product at this residue vanishes; that case is
    reported through `degenerate` without running the dynamics.
    """

    i: int
    j0: int
    js: np.ndarray
    phi_abs: float
    phi_arg: float
    phi_series: np.ndarray | None
    theta_sum: np.ndarray | None
    residual: np.ndarray | None
    degenerate: bool

    def residual_sup(self, lo: int, hi: int) -> float:
        """sup |E_j| over j in [lo, hi]."""
        mask = (self.js >= lo) & (self.js <= hi)
        return float(np.max(np.abs(self.residual[mask])))


def extract_phase(fam: FamilyDescriptor, decomp: ParabolicDecomposition,
                  limits: TemperedLimits, i: int, eta_angle: float, x: float,
                  j_max: int, j0: int | None = None,
                  trace: EigenTrace | None = None) -> PhaseAmplitude:
    """Estimate phi and the residual series E_j for one (eta, x).

    phi is the tail average of sqrt(g_j) (u_{(j+1)N+i} - conj(lam_j) u_{jN+i})
    / prod lam_k over the last quarter of the window, with outliers beyond
    3 median absolute deviations discarded; the tail must have settled or
    an ExtractionError is raised.
    """
    N = fam.periodic.N
    if decomp.Xi_at(i)[1, 0] == 0.0:
        return PhaseAmplitude(i=i, j0=0, js=np.empty(0, dtype=int), phi_abs=0.0,
                              phi_arg=0.0, phi_series=None, theta_sum=None,
                              residual=None, degenerate=True)
    if j0 is None:
        j0, _ = select_j0(fam, decomp, limits, i, [x], j_hi=j_max)
    if j_max < j0 + 100:
        raise ExtractionError("j_max must exceed j0 = %d by at least 100 steps" % j0)
    series = step_series(fam, decomp, limits, i, x, j0, j_max)
    if trace is None:
        trace = eigenvector_trace(fam, eta_angle, x, (j_max + 2) * N + i)
    u = trace.u

    js = series.js
    g = fam.gamma_at((js + 1) * N + i - 1)
    u_j = u[js * N + i]
    u_next = u[(js + 1) * N + i]
    numer = u_next - np.conj(series.lam) * u_j
    phi_series = (np.sqrt(g) * numer
                  * np.exp(-series.log_abs_lam_prefix - 1j * series.arg_lam_prefix))

    tail = phi_series[-(phi_series.size // 4):]
    center = complex(np.median(tail.real), np.median(tail.imag))
    dev = np.abs(tail - center)
    mad = np.median(dev)
    keep = dev <= 3.0 * mad if mad > 0 else np.ones_like(dev, dtype=bool)
    if keep.sum() < max(8, tail.size // 4):
        raise ExtractionError("phi tail average rejected too many samples", spread=float(mad))
    phi = complex(np.mean(tail[keep]))
    spread = float(np.mean(np.abs(tail[keep] - phi)))
    if abs(phi) > 0 and spread > 0.5 * abs(phi):
        raise ExtractionError(
            "phi tail not settled: spread %.3e vs |phi| %.3e" % (spread, abs(phi)),
            spread=spread,
        )

    amp = abs(phi) / np.sqrt(fam.periodic.alpha_at(i - 1) * abs(tau(limits, x)))
    residual = (u_j * np.exp(-series.log_abs_lam_prefix)
                - amp * np.sin(series.theta_prefix + np.angle(phi)))
    return PhaseAmplitude(i=i, j0=j0, js=js, phi_abs=abs(phi), phi_arg=float(np.angle(phi)),
                          phi_series=phi_series, theta_sum=series.theta_prefix,
                          residual=residual, degenerate=False)


# ---------------------------------------------------------------------------
# Christoffel-Darboux kernel
# ---------------------------------------------------------------------------


def christoffel(fam: FamilyDescriptor, trace: EigenTrace, n: int) -> tuple[float, float]:
    """Diagonal kernel partial sum K_n = sum_{m<=n} u_m^2 and the weight sum
    rho_n = sum_{m<=n} sqrt(alpha_m gamma_m) / a_m."""
    if n >= len(trace):
        raise ValueError("trace too short for kernel cutoff %d" % n)
    m = np.arange(n + 1)
    K = float(np.sum(trace.u[: n + 1] ** 2))
    rho = float(np.sum(np.sqrt(fam.periodic.alpha_at(m) * fam.gamma_at(m)) / fam.a_at(m)))
    return K, rho


def christoffel_series(fam: FamilyDescriptor, trace: EigenTrace, n_max: int):
    """Cumulative (K_n, rho_n) arrays for n = 0..n_max."""
    m = np.arange(n_max + 1)
    K = np.cumsum(trace.u[: n_max + 1] ** 2)
    rho = np.cumsum(np.sqrt(fam.periodic.alpha_at(m) * fam.gamma_at(m)) / fam.a_at(m))
    return K, rho


def kernel_limit_assembly(fam: FamilyDescriptor, decomp: ParabolicDecomposition,
                          limits: TemperedLimits, x: float, eta_angle: float,
                          j_max: int) -> float:
    """Assemble the predicted limit of K_n / rho_n from per-residue phases.

    (1/2N) sum_i |phi_i|^2 a_{j0 N+i-1} sinh(h_{j0}) / (alpha_{i-1}^2 |tau|^{3/2});
    the combination |phi_i|^2 a_{j0 N+i-1} sinh(h_{j0}) is j0-invariant.
    """
    N = fam.periodic.N
    abs_tau = abs(float(tau(limits, x)))
    total = 0.0
    for i in range(N):
        pa = extract_phase(fam, decomp, limits, i, eta_angle, x, j_max)
        if pa.degenerate:
            continue
        h0 = vartheta(fam, limits, i, pa.j0, x)
        a0 = fam.a_at(pa.j0 * N + i - 1)
        alpha = fam.periodic.alpha_at(i - 1)
        total += pa.phi_abs**2 * a0 * np.sinh(h0) / (alpha**2 * abs_tau**1.5)
    return total / (2.0 * N)


# ---------------------------------------------------------------------------
# oscillatory averaging
# ---------------------------------------------------------------------------


def oscillatory_average(gamma, a, xi, psi, n: int) -> dict:
    """Weighted average (1/D_n) sum_{k<=n} (sqrt(gamma_k)/a_k) cos(Xi_k).

    Xi_k is the running sum of the phase increments xi; D_n the running sum
    of the weights.  The hypotheses (gamma -> infinity, divergent weight
    sum, sqrt(gamma_n) xi_n -> psi bounded away from 0 and infinity,
    gamma/a of bounded variation) are probed on the data and failures are
    attached as warnings rather than raised.
    """
    k = np.arange(n + 1, dtype=float)
    w = np.sqrt(gamma(k)) / a(k)
    Xi = np.cumsum(xi(k))
    D = float(np.sum(w))
    value = float(np.sum(w * np.cos(Xi)) / D)

    warnings = []
    g_tail = gamma(np.array([n / 2.0, float(n)]))
    if not g_tail[1] > g_tail[0] or g_tail[1] < 1e2:
        warnings.append("gamma does not appear to diverge")
    # doubling-window sums of the weights; clearly shrinking windows mean a
    # convergent weight sum (slowly divergent sums are indistinguishable at
    # finite n, so this stays a coarse advisory check)
    edges = [(n + 1) // 16, (n + 1) // 8, (n + 1) // 4, (n + 1) // 2, n + 1]
    wsums = [float(np.sum(w[a:b])) for a, b in zip(edges[:-1], edges[1:])]
    ratios = [s2 / s1 for s1, s2 in zip(wsums[:-1], wsums[1:]) if s1 > 0]
    if ratios and float(np.exp(np.mean(np.log(ratios)))) < 0.6:
        warnings.append("weight sum looks convergent")
    scaled = np.sqrt(gamma(k[1:])) * xi(k[1:])
    psi_ref = psi(k[1:]) if callable(psi) else np.full(k.size - 1, float(psi))
    tail = slice((n + 1) // 2, None)
    if np.any(psi_ref[tail] <= 0) or np.max(np.abs(scaled[tail] - psi_ref[tail])) > 0.1 * np.mean(
        np.abs(psi_ref[tail])
    ):
        warnings.append("sqrt(gamma_n) xi_n is not tracking a positive bounded profile")
    ratio = gamma(k) / a(k)
    var = float(np.sum(np.abs(np.diff(ratio))))
    tail_var = float(np.sum(np.abs(np.diff(ratio[(n + 1) // 2 :]))))
    if tail_var > 0.5 * var and var > 1e-12:
        warnings.append("gamma/a variation not summable on the window")
    return {"value": value, "cutoff": int(n), "weight_sum": D, "warnings": warnings}


# ---------------------------------------------------------------------------
# perturbation comparison matrices
# ---------------------------------------------------------------------------


def perturbation_M_series(pert: PerturbedFamily, js, x: float) -> np.ndarray:
    """Comparison matrices M_j = (B_j ... B_0)^{-1} (tilde_B_j ... tilde_B_0).

    Both cumulative products are tracked with per-factor renormalization and
    separate log scales; the scales recombine exactly in M_j, so the result
    stays well-conditioned on the oscillatory set even though the factors
    individually decay.  Returns a stack aligned with the sorted js.
    """
    js = np.asarray(sorted(int(j) for j in np.atleast_1d(js)))
    base = pert.base
    eff = pert.effective()
    top = int(js[-1])
    P = np.eye(2)
    Pt = np.eye(2)
    logP = 0.0
    logPt = 0.0
    out = np.empty((js.size, 2, 2))
    pos = 0
    chunk = 4096
    n0 = 0
    while n0 <= top:
        n1 = min(top, n0 + chunk - 1)
        ns = np.arange(n0, n1 + 1)
        Bs = transfer_B_stack(base, ns, x)
        Bts = transfer_B_stack(eff, ns, x)
        for idx, n in enumerate(ns):
            P = Bs[idx] @ P
            Pt = Bts[idx] @ Pt
            peak = np.max(np.abs(P))
            if peak > 1e100 or peak < 1e-100:
                P /= peak
                logP += np.log(peak)
            peak = np.max(np.abs(Pt))
            if peak > 1e100 or peak < 1e-100:
                Pt /= peak
                logPt += np.log(peak)
            if pos < js.size and n == js[pos]:
                out[pos] = (mat2.inv(P) @ Pt) * np.exp(logPt - logP)
                pos += 1
        n0 = n1 + 1
    return out


def perturbation_M(base: FamilyDescriptor, pert: PerturbedFamily, j: int, x: float) -> np.ndarray:
    """Single comparison matrix M_j (see perturbation_M_series)."""
    if pert.base is not base:
        pert = PerturbedFamily(base, pert.xi, pert.zeta)
    return perturbation_M_series(pert, [j], x)[0]
