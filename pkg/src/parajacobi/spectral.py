"""Spectral verdicts: self-adjointness, essential/absolutely continuous spectrum,
subordinate solutions on the hyperbolic set, and the assembled report.

Verdicts are three-valued ("yes" / "no" / "undetermined"); every reported
field carries a provenance string naming the finite diagnostic that
produced it.  Fields whose feeding diagnostics fail or are skipped stay
undetermined rather than guessing.
"""

from dataclasses import dataclass, field

import numpy as np

from . import mat2
from .asymptotics import conjugation_step
from .errors import ExtractionError, ParajacobiError
from .evolve import eigenvector_trace
from .family import FamilyDescriptor, PerturbedFamily
from .parabolic import ParabolicDecomposition, decompose
from .tempered import TauPolynomial, TemperedLimits, estimate_limits, lambda_sets, tau

RHO_SLOPE_THRESHOLD = 0.02
SIGN_CRITERION_TOL = 1e-6
GAP_TOL = 1e-6
ANCHOR_AGREEMENT_TOL = 1e-6


# ---------------------------------------------------------------------------
# weight-sum divergence
# ---------------------------------------------------------------------------


def rho_series(fam: FamilyDescriptor, ns) -> np.ndarray:
    """rho at the requested indices (cumulative sqrt(alpha_n gamma_n)/a_n)."""
    ns = np.asarray(ns)
    top = int(np.max(ns))
    m = np.arange(top + 1)
    rho = np.cumsum(np.sqrt(fam.periodic.alpha_at(m) * fam.gamma_at(m)) / fam.a_at(m))
    return rho[ns]


def rho_divergence(fam: FamilyDescriptor, n_max: int) -> dict:
    """Finite-window divergence ruling for the weight sum rho_n.

    Fits the slope of log rho against log n over the last two decades;
    slope > 0.02 rules divergent, a flat slope with a bounded tail rules
    convergent, anything else is undetermined.
    """
    ns = np.unique(np.geomspace(max(10, n_max // 100), n_max, 25).astype(int))
    rho = rho_series(fam, ns)
    slope = float(np.polyfit(np.log(ns), np.log(rho), 1)[0])
    growth = float(rho[-1] / rho[0])
    if slope > RHO_SLOPE_THRESHOLD:
        verdict = "divergent"
    elif growth < 1.5:
        verdict = "convergent"
    else:
        verdict = "undetermined"
    return {"verdict": verdict, "slope": slope, "growth": growth,
            "rho_at_n_max": float(rho[-1]), "n_max": int(n_max)}


# ---------------------------------------------------------------------------
# self-adjointness
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SelfAdjointVerdict:
    value: str            # "yes" | "no" | "undetermined"
    reason: str
    criterion: dict


def classify_selfadjoint(fam: FamilyDescriptor, limits: TemperedLimits,
                         n_max: int) -> SelfAdjointVerdict:
    """Self-adjointness ruling.

    With a nonempty negative-tau set the question reduces to divergence of
    the weight sum rho_n.  With tau positive everywhere it reduces to the
    sign of -S + sqrt(S^2 + 4U): positive means the growing solution leaves
    square-summability (self-adjoint), negative means every solution is
    square-summable (not self-adjoint).  A sign quantity inside tolerance,
    or S^2 + 4U < 0, stays undetermined.
    """
    sets = lambda_sets(limits)
    if sets.lambda_minus:
        diag = rho_divergence(fam, n_max)
        if diag["verdict"] == "divergent":
            return SelfAdjointVerdict("yes", "weight-sum divergence", diag)
        if diag["verdict"] == "convergent":
            return SelfAdjointVerdict("no", "weight-sum convergence", diag)
        return SelfAdjointVerdict("undetermined", "weight-sum diagnostic inconclusive", diag)
    disc = limits.S**2 + 4.0 * limits.U
    if disc < 0:
        return SelfAdjointVerdict(
            "undetermined", "sign criterion inapplicable (S^2 + 4U < 0)",
            {"S": limits.S, "U": limits.U},
        )
    q = -limits.S + np.sqrt(disc)
    crit = {"S": limits.S, "U": limits.U, "sign_quantity": float(q)}
    if q > SIGN_CRITERION_TOL:
        return SelfAdjointVerdict("yes", "hyperbolic-growth sign criterion", crit)
    if q < -SIGN_CRITERION_TOL:
        return SelfAdjointVerdict("no", "hyperbolic-growth sign criterion", crit)
    return SelfAdjointVerdict("undetermined", "sign quantity within tolerance", crit)


def lambda_plus_product_test(fam: FamilyDescriptor, decomp: ParabolicDecomposition,
                             limits: TemperedLimits, x: float, j_max: int,
                             j0: int = 4) -> dict:
    """Divergence diagnostic for sum_j prod_{k<=j} |lam_k^+|^2 on the positive-tau set.

    The growing eigenvalue branch lam^+ = eps(1 + scale * xi^+) is summed in
    log space.  Terms bounded away from zero (or growing) rule divergent;
    terms decaying faster than 1/j rule convergent.
    """
    N = fam.periodic.N
    i = 0
    js = np.arange(j0, j_max + 1)
    log_terms = np.empty(js.size)
    acc = 0.0
    for idx, j in enumerate(js):
        step = conjugation_step(fam, decomp, limits, i, int(j), x)
        d = mat2.discr(step.R)
        if d < 0:
            raise ParajacobiError("x = %g is not in the positive-tau regime" % x)
        xi_plus = 0.5 * (mat2.tr(step.R) + np.sqrt(d))
        lam_plus = decomp.epsilon * (1.0 + step.scale * xi_plus)
        acc += 2.0 * np.log(abs(lam_plus))
        log_terms[idx] = acc
    tail = log_terms[-1]
    slope = float(np.polyfit(np.log(js[js.size // 2 :]), log_terms[js.size // 2 :], 1)[0])
    if tail > 0 or slope > -0.5:
        verdict = "divergent"
    elif slope < -1.5:
        verdict = "convergent"
    else:
        verdict = "undetermined"
    return {"verdict": verdict, "log_last_term": float(tail), "tail_log_slope": slope,
            "x": float(x), "j_max": int(j_max)}


# ---------------------------------------------------------------------------
# subordinate solution on the hyperbolic set
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SubordinateReport:
    x: float
    n_max: int
    log_sum_sq: float          # log sum_n |u_n|^2 (normalized trace)
    tail_fraction: float       # share of the sum carried by n in (n_max/2, n_max]
    envelope_constant: float   # sup_j j * |u_{jN}| over the fitted range
    envelope_decaying: bool
    anchors_agree: float       # max relative deviation between the two anchors
    growing_solution_diverges: bool
    values_log_abs: np.ndarray
    values_sign: np.ndarray


def _backward_scaled(fam: FamilyDescriptor, x: float, top: int, terminal: np.ndarray):
    """Backward sweep u_{n-1} = ((x - b_n) u_n - a_n u_{n+1}) / a_{n-1}.

    terminal is (u_top, u_{top+1}); returns per-index (log|u_n|, sign) for
    n = 0..top with running renormalization, so exponentially growing
    backward sweeps never overflow.
    """
    n = np.arange(top + 1, dtype=float)
    a = fam.a_at(n)
    b = fam.b_at(n)
    log_abs = np.full(top + 1, -np.inf)
    sign = np.zeros(top + 1)
    hi = float(terminal[1])     # u_{n+1}
    lo = float(terminal[0])     # u_n
    scale = 0.0

    def record(idx, value):
        if value != 0.0:
            log_abs[idx] = np.log(abs(value)) + scale
            sign[idx] = np.sign(value)

    record(top, lo)
    for m in range(top, 0, -1):
        am1 = a[m - 1] if m >= 1 else 1.0
        nxt = ((x - b[m]) * lo - a[m] * hi) / am1
        hi, lo = lo, nxt
        mag = max(abs(hi), abs(lo))
        if mag > 1e150:
            hi /= mag
            lo /= mag
            scale += np.log(mag)
        record(m - 1, lo)
    return log_abs, sign


def _terminal_direction(fam, decomp, limits, x, j_top):
    """Contracting eigendirection of R at the anchor, mapped back through Z."""
    step = conjugation_step(fam, decomp, limits, 0, j_top, x)
    d = mat2.discr(step.R)
    if d < GAP_TOL:
        raise ExtractionError(
            "eigenvalue gap too small to isolate the contracting direction "
            "(discr R = %.3e)" % d
        )
    xi_minus = 0.5 * (mat2.tr(step.R) - np.sqrt(d))
    v = np.array([step.R[0, 1], xi_minus - step.R[0, 0]])
    if np.linalg.norm(v) < 1e-14:
        v = np.array([0.0, 1.0])
    vec = step.Z @ (v / np.linalg.norm(v))
    return vec / np.linalg.norm(vec)


def subordinate_decay(fam: FamilyDescriptor, decomp: ParabolicDecomposition,
                      limits: TemperedLimits, x: float, n_max: int) -> SubordinateReport:
    """Construct the contracting solution at x in the positive-tau set.

    Backward-stabilized sweep from two anchors (n_max and 2 n_max), each
    started in the contracting eigendirection; the anchors must agree to
    1e-6 relative on the first half of the window.  Reports square-sum
    tail behavior, the j |u_{jN}| envelope, and whether the generic
    (forward) solution is non-square-summable at the same x.
    """
    if float(tau(limits, x)) <= 0:
        raise ParajacobiError("subordinate construction needs tau(x) > 0, got x = %g" % x)
    N = fam.periodic.N
    reports = []
    for top_n in (n_max, 2 * n_max):
        j_top = (top_n - 0) // N - 2
        vec = _terminal_direction(fam, decomp, limits, x, j_top)
        top = j_top * N
        log_abs, sign = _backward_scaled(fam, x, top, vec)
        # normalize so that the initial pair has unit norm
        norm = 0.5 * np.logaddexp(2 * log_abs[0], 2 * log_abs[1])
        reports.append((log_abs - norm, sign, top))

    (L1, s1, top1), (L2, s2, _) = reports
    half = top1 // 2
    finite = np.isfinite(L1[:half]) & np.isfinite(L2[:half])
    agree = float(np.max(np.abs(np.exp(L1[:half][finite] - L2[:half][finite])
                                * s1[:half][finite] * s2[:half][finite] - 1.0)))
    if agree > ANCHOR_AGREEMENT_TOL:
        raise ExtractionError("anchor sweeps disagree: %.3e relative" % agree, spread=agree)

    log_sq = 2.0 * L1[np.isfinite(L1)]
    log_total = float(np.logaddexp.reduce(log_sq))
    tail_mask = np.isfinite(L1) & (np.arange(L1.size) > top1 // 2)
    log_tail = float(np.logaddexp.reduce(2.0 * L1[tail_mask])) if np.any(tail_mask) else -np.inf
    tail_fraction = float(np.exp(log_tail - log_total))

    js = np.unique(np.geomspace(2, max(3, top1 // N - 1), 512).astype(int))
    env = np.log(js) + L1[js * N]
    env = env[np.isfinite(env)]
    c_prime = float(np.exp(np.max(env)))
    first, second = env[: env.size // 2], env[env.size // 2 :]
    envelope_decaying = bool(np.max(second) <= np.max(first))

    grow = eigenvector_trace(fam, np.pi / 2.0, x, n_max, renormalize=True)
    gs = 2.0 * grow.log_abs(np.arange(n_max + 1))
    log_grow_total = float(np.logaddexp.reduce(gs))
    log_grow_half = float(np.logaddexp.reduce(gs[: n_max // 2]))
    growing_diverges = bool(log_grow_total - log_grow_half > np.log(10.0))

    return SubordinateReport(
        x=float(x), n_max=int(n_max), log_sum_sq=log_total,
        tail_fraction=tail_fraction, envelope_constant=c_prime,
        envelope_decaying=envelope_decaying, anchors_agree=agree,
        growing_solution_diverges=growing_diverges,
        values_log_abs=L1, values_sign=s1,
    )


# ---------------------------------------------------------------------------
# kernel uniformity surrogate
# ---------------------------------------------------------------------------


def kernel_eta_ratio(fam: FamilyDescriptor, x: float, eta_angles, ns) -> np.ndarray:
    """max/min over the eta grid of K_n(x, x; eta), per cutoff n.

    Boundedness of this ratio across n is the finite surrogate for the
    comparability of kernels over initial directions.
    """
    ns = np.asarray(ns)
    top = int(np.max(ns))
    kernels = []
    for angle in eta_angles:
        trace = eigenvector_trace(fam, float(angle), x, top)
        kernels.append(np.cumsum(trace.u[: top + 1] ** 2)[ns])
    kernels = np.array(kernels)
    return kernels.max(axis=0) / kernels.min(axis=0)


# ---------------------------------------------------------------------------
# report assembly
# ---------------------------------------------------------------------------


@dataclass
class SpectrumReport:
    family_label: str
    self_adjoint: str
    self_adjoint_reason: str
    lambda_minus: tuple
    lambda_plus: tuple
    sigma_ess: dict
    sigma_ac: dict
    criteria: list = field(default_factory=list)
    provenance: dict = field(default_factory=dict)

    def add_criterion(self, cid, value, threshold, passed):
        self.criteria.append({
            "id": cid,
            "value": None if value is None else float(value),
            "threshold": None if threshold is None else float(threshold),
            "pass": bool(passed),
        })

    @property
    def undetermined(self) -> bool:
        return (self.self_adjoint == "undetermined"
                or self.sigma_ess.get("kind") == "undetermined"
                or self.sigma_ac.get("kind") == "undetermined")

    def to_json(self) -> dict:
        return {
            "family": self.family_label,
            "self_adjoint": {"verdict": self.self_adjoint, "reason": self.self_adjoint_reason},
            "lambda_minus": [list(iv) for iv in self.lambda_minus],
            "lambda_plus": [list(iv) for iv in self.lambda_plus],
            "sigma_ess": self.sigma_ess,
            "sigma_ac": self.sigma_ac,
            "criteria": self.criteria,
            "provenance": self.provenance,
        }


def _closure(intervals):
    return [[float(a), float(b)] for a, b in intervals]


def _lambda_minus_midpoints(sets: TauPolynomial, count: int = 1):
    points = []
    for a, b in sets.lambda_minus:
        lo = a if np.isfinite(a) else b - 2.0 if np.isfinite(b) else -1.0
        hi = b if np.isfinite(b) else a + 2.0 if np.isfinite(a) else 1.0
        points.extend(np.linspace(lo + 0.25 * (hi - lo), hi - 0.25 * (hi - lo), count))
    return points


def spectrum_report(fam: FamilyDescriptor, decomp: ParabolicDecomposition,
                    limits: TemperedLimits, n_max: int = 10**5,
                    run_exclusion: bool = True, run_inclusion: bool = True,
                    diagnostic_n: int = 2 * 10**4) -> SpectrumReport:
    """Assemble the spectral verdicts for one family.

    sigma_ess = closure of the negative-tau set is asserted only when both
    feeding diagnostics pass: the subordinate-summability check on the
    positive-tau side (exclusion) and the kernel-ratio stabilization on the
    negative-tau side (inclusion).  Any failed or skipped diagnostic leaves
    the field undetermined with its reason recorded.
    """
    sets = lambda_sets(limits)
    verdict = classify_selfadjoint(fam, limits, n_max)
    report = SpectrumReport(
        family_label=fam.label,
        self_adjoint=verdict.value,
        self_adjoint_reason=verdict.reason,
        lambda_minus=sets.lambda_minus,
        lambda_plus=sets.lambda_plus,
        sigma_ess={"kind": "undetermined", "reason": "not evaluated"},
        sigma_ac={"kind": "undetermined", "reason": "not evaluated"},
    )
    report.provenance["self_adjoint"] = verdict.reason
    for key, value in verdict.criterion.items():
        if isinstance(value, (int, float)):
            report.add_criterion("self_adjoint/%s" % key, value, None, verdict.value != "undetermined")

    if verdict.value == "no":
        reason = "operator not self-adjoint; spectral sets not defined by these diagnostics"
        report.sigma_ess = {"kind": "undetermined", "reason": reason}
        report.sigma_ac = {"kind": "undetermined", "reason": reason}
        return report
    if verdict.value == "undetermined":
        reason = "self-adjointness undetermined"
        report.sigma_ess = {"kind": "undetermined", "reason": reason}
        report.sigma_ac = {"kind": "undetermined", "reason": reason}
        return report

    if not sets.lambda_minus:
        report.sigma_ess = {"kind": "empty", "intervals": []}
        report.sigma_ac = {"kind": "empty", "intervals": []}
        report.provenance["sigma_ess"] = "hyperbolic-growth sign criterion (positive case)"
        report.provenance["sigma_ac"] = report.provenance["sigma_ess"]
        return report

    exclusion_ok = True
    if sets.lambda_plus and run_exclusion:
        exclusion_ok = False
        for a, b in sets.lambda_plus:
            lo = a if np.isfinite(a) else b - 2.0
            hi = b if np.isfinite(b) else a + 2.0
            x_test = 0.5 * (lo + hi)
            try:
                sub = subordinate_decay(fam, decomp, limits, x_test, diagnostic_n)
                exclusion_ok = sub.tail_fraction < 1e-3 and sub.growing_solution_diverges
                report.add_criterion("exclusion/tail_fraction@x=%g" % x_test,
                                     sub.tail_fraction, 1e-3, exclusion_ok)
            except ParajacobiError:
                exclusion_ok = False
                report.add_criterion("exclusion/tail_fraction@x=%g" % x_test, None, 1e-3, False)
    elif sets.lambda_plus:
        exclusion_ok = False

    inclusion_ok = True
    if run_inclusion:
        inclusion_ok = False
        for x_test in _lambda_minus_midpoints(sets):
            trace = eigenvector_trace(fam, np.pi / 2.0, float(x_test), diagnostic_n)
            m = np.arange(diagnostic_n + 1)
            rho = np.cumsum(np.sqrt(fam.periodic.alpha_at(m) * fam.gamma_at(m)) / fam.a_at(m))
            ratio = np.cumsum(trace.u[: diagnostic_n + 1] ** 2) / rho
            window = ratio[diagnostic_n // 2 :]
            fluct = float((window.max() - window.min()) / window.mean())
            inclusion_ok = window.mean() > 0 and fluct < 0.25
            report.add_criterion("inclusion/kernel_ratio_fluct@x=%g" % x_test, fluct, 0.25,
                                 inclusion_ok)
    else:
        inclusion_ok = False

    if exclusion_ok and inclusion_ok:
        report.sigma_ess = {"kind": "closure_of_lambda_minus",
                            "intervals": _closure(sets.lambda_minus)}
        report.sigma_ac = {"kind": "closure_of_lambda_minus",
                           "intervals": _closure(sets.lambda_minus)}
        report.provenance["sigma_ess"] = (
            "subordinate summability on the positive-tau set and kernel-ratio "
            "stabilization on the negative-tau set"
        )
        report.provenance["sigma_ac"] = report.provenance["sigma_ess"]
    else:
        reason = "feeding diagnostics incomplete (exclusion=%s, inclusion=%s)" % (
            exclusion_ok, inclusion_ok)
        report.sigma_ess = {"kind": "undetermined", "reason": reason}
        report.sigma_ac = {"kind": "undetermined", "reason": reason}
    return report


def perturbed_report(pert: PerturbedFamily, n_max: int = 10**5,
                     det_check_j: int = 10**4, **kwargs) -> SpectrumReport:
    """Run the full pipeline on the perturbed parameters.

    The base and perturbed families share their periodic data and tempering
    sequence, so the same decomposition applies; the weight sum uses the
    perturbed off-diagonal.  A determinant check of the comparison matrix
    at one negative-tau point is attached to the criteria list.
    """
    from .asymptotics import perturbation_M_series

    diag = pert.summability_diagnostic()
    eff = pert.effective()
    decomp = decompose(eff.periodic)
    limits = estimate_limits(eff, decomp, n_max=max(10**5, n_max))
    report = spectrum_report(eff, decomp, limits, n_max=n_max, **kwargs)
    report.add_criterion("perturbation/summability_cauchy", None, None, diag["cauchy"])
    sets = lambda_sets(limits)
    if sets.lambda_minus:
        x_test = _lambda_minus_midpoints(sets)[0]
        M = perturbation_M_series(pert, [det_check_j], float(x_test))[0]
        det_defect = abs(float(mat2.det(M)) - 1.0)
        report.add_criterion("perturbation/det_M_minus_1@x=%g" % x_test, det_defect,
                             1e-6, det_defect < 1e-6)
    return report
