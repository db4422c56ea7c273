import numpy as np
import pytest

import parajacobi as pj
from parajacobi.errors import ParajacobiError
from parajacobi.spectral import (
    classify_selfadjoint,
    kernel_eta_ratio,
    lambda_plus_product_test,
    perturbed_report,
    rho_divergence,
    spectrum_report,
    subordinate_decay,
)
from parajacobi.tempered import estimate_limits


def test_rho_divergence_verdicts():
    assert rho_divergence(pj.build_yafaev(1.25, 1.0, 0.0), 10**6)["verdict"] == "divergent"
    assert rho_divergence(pj.build_yafaev(1.75, 1.5, 0.0), 10**6)["verdict"] == "convergent"
    assert rho_divergence(pj.build_bd_power(1.9), 10**6)["verdict"] == "divergent"


def test_selfadjoint_verdict_matrix(yaf_125_1_0, yaf_2_05_0, bd15, bd125):
    fam, dec, lim = yaf_125_1_0
    assert classify_selfadjoint(fam, lim, 10**6).value == "yes"

    fam_no = pj.build_yafaev(1.75, 1.5, 0.0)
    dec_no = pj.decompose(fam_no.periodic)
    lim_no = estimate_limits(fam_no, dec_no, 10**6)
    assert classify_selfadjoint(fam_no, lim_no, 10**6).value == "no"

    fam_p, _, lim_p = yaf_2_05_0
    v = classify_selfadjoint(fam_p, lim_p, 10**6)
    assert v.value == "yes"
    assert "sign criterion" in v.reason
    assert v.criterion["sign_quantity"] == pytest.approx(2.0, abs=1e-3)

    for fam_bd, _, lim_bd in (bd15, bd125):
        assert classify_selfadjoint(fam_bd, lim_bd, 10**6).value == "yes"


def test_verdict_stable_under_doubling(bd15, yaf_125_1_0, yaf_2_05_0):
    for fam, dec, lim in (bd15, yaf_125_1_0, yaf_2_05_0):
        v1 = classify_selfadjoint(fam, lim, 5 * 10**5).value
        v2 = classify_selfadjoint(fam, lim, 10**6).value
        assert v1 == v2 or v1 == "undetermined"


def test_product_test_agrees_with_sign_criterion(yaf_2_05_0):
    fam, dec, lim = yaf_2_05_0
    diag = lambda_plus_product_test(fam, dec, lim, 0.0, 2000)
    assert diag["verdict"] == "divergent"   # matches "self-adjoint" from the sign quantity


def _growth_family(rate=2.0, u0=-3.0 / 16.0):
    """a_n = exp(rate sqrt(n+1)), b tuned so the combined defect -> u0: the
    S > 0 regime where the sign quantity goes negative."""

    def a(n):
        n = np.asarray(n, dtype=float)
        return np.exp(rate * np.sqrt(n + 1.0))

    def b(n):
        n = np.asarray(n, dtype=float)
        ratio = np.exp(rate * (np.sqrt(np.maximum(n, 1.0)) - np.sqrt(n + 1.0)))
        ratio = np.where(n >= 1, ratio, np.exp(-rate))
        return a(n) * (1.0 + ratio - u0 / (n + 1.0))

    def gamma(n):
        return np.asarray(n, dtype=float) + 1.0

    return pj.FamilyDescriptor(a, b, gamma, pj.PeriodicData(np.array([1.0]), np.array([2.0])),
                               "growth(rate=%g,u0=%g)" % (rate, u0))


def test_sign_criterion_negative_case_not_selfadjoint():
    fam = _growth_family()
    dec = pj.decompose(fam.periodic)
    lim = estimate_limits(fam, dec, 10**6)
    assert lim.S == pytest.approx(1.0, abs=5e-3)
    assert lim.U == pytest.approx(-3.0 / 16.0, abs=5e-3)
    v = classify_selfadjoint(fam, lim, 10**6)
    assert v.value == "no"
    assert v.criterion["sign_quantity"] == pytest.approx(-0.5, abs=2e-2)
    diag = lambda_plus_product_test(fam, dec, lim, 0.0, 4000)
    assert diag["verdict"] == "convergent"   # every solution square-summable


def test_subordinate_decay_summable(yaf_2_05_0):
    fam, dec, lim = yaf_2_05_0
    rep = subordinate_decay(fam, dec, lim, 0.0, 2 * 10**4)
    assert rep.anchors_agree <= 1e-6
    assert rep.tail_fraction < 1e-3
    assert rep.envelope_constant > 0
    assert rep.envelope_decaying
    assert rep.growing_solution_diverges


def test_subordinate_needs_positive_tau(bd15):
    fam, dec, lim = bd15
    with pytest.raises(ParajacobiError):
        subordinate_decay(fam, dec, lim, 1.0, 10**4)   # tau(1) = -1 < 0


def test_kernel_eta_ratio_bounded(bd125):
    fam, _, _ = bd125
    ns = np.unique(np.geomspace(100, 3 * 10**4, 12).astype(int))
    ratios = kernel_eta_ratio(fam, 1.0, np.linspace(0.1, np.pi, 6, endpoint=False), ns)
    assert np.all(ratios >= 1.0)
    assert ratios[-1] <= 2.0 * ratios[0]
    assert np.max(ratios) < 50.0


def test_spectrum_report_bd(bd15):
    fam, dec, lim = bd15
    rep = spectrum_report(fam, dec, lim, n_max=10**5)
    assert rep.self_adjoint == "yes"
    assert rep.sigma_ess["kind"] == "closure_of_lambda_minus"
    ((lo, hi),) = rep.sigma_ess["intervals"]
    assert lo == pytest.approx(0.0, abs=1e-6)
    assert hi == float("inf")
    assert rep.sigma_ac == rep.sigma_ess
    assert not rep.undetermined


def test_spectrum_report_positive_tau(yaf_2_05_0):
    fam, dec, lim = yaf_2_05_0
    rep = spectrum_report(fam, dec, lim, n_max=10**5)
    assert rep.self_adjoint == "yes"
    assert rep.sigma_ess["kind"] == "empty"
    assert rep.sigma_ac["kind"] == "empty"


def test_spectrum_report_not_selfadjoint_gates_fields():
    fam = pj.build_yafaev(1.75, 1.5, 0.0)
    dec = pj.decompose(fam.periodic)
    lim = estimate_limits(fam, dec, 10**6)
    rep = spectrum_report(fam, dec, lim, n_max=10**6)
    assert rep.self_adjoint == "no"
    assert rep.sigma_ess["kind"] == "undetermined"
    assert rep.undetermined


def test_spectrum_report_json_roundtrip(bd15):
    import json

    fam, dec, lim = bd15
    rep = spectrum_report(fam, dec, lim, n_max=10**5, run_exclusion=False)
    payload = json.loads(json.dumps(rep.to_json()))
    assert payload["self_adjoint"]["verdict"] == "yes"
    assert "provenance" in payload


def test_perturbed_report_matches_base(yaf_125_1_0):
    fam, dec, lim = yaf_125_1_0
    base_rep = spectrum_report(fam, dec, lim, n_max=10**5)
    pert = pj.perturb_l1(fam, lambda n: (np.asarray(n, dtype=float) + 1.0) ** -1.6,
                         lambda n: np.zeros_like(np.asarray(n, dtype=float)))
    rep = perturbed_report(pert, n_max=10**5)
    assert rep.self_adjoint == base_rep.self_adjoint == "yes"
    assert rep.sigma_ess == base_rep.sigma_ess
    det_rows = [c for c in rep.criteria if c["id"].startswith("perturbation/det_M")]
    assert det_rows and det_rows[0]["pass"]
