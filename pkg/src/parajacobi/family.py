"""Jacobi parameter families and their periodic limit data.

A family is a triple of evaluable sequences (a_n, b_n, gamma_n) together
with the N-periodic limit data (alpha_n, beta_n) that the ratio structure
a_{n-1}/a_n, b_n/a_n approaches.  Sequences are exposed as vectorized
callables so that traces to n ~ 1e6 never require precomputed arrays;
scalar lookups are memoized.

Index conventions
-----------------
* Two distinct a_{-1} conventions coexist on purpose.  Birth-death style
  builders use a_{-1} := 0 inside b_0 = a_{-1} + a_0 (the natural
  extension of the closed forms).  Transfer matrices use a_{-1} := 1 in
  B_0; that convention lives in :mod:`parajacobi.evolve`, not here.
* Periodic data is indexed over all of Z: alpha_at(-1) == alpha_at(N-1).
"""

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ConfigError
from .expr import compile_expression

BALANCE_TOL = 1e-12


def _as_index_array(n):
    arr = np.asarray(n)
    return arr, arr.ndim == 0


def _as_int_indices(n):
    arr = np.asarray(n)
    if arr.dtype.kind == "f":
        arr = np.rint(arr).astype(np.int64)
    return arr


@dataclass(frozen=True)
class PeriodicData:
    """N-periodic limit coefficients (alpha positive, beta real)."""

    alpha: np.ndarray
    beta: np.ndarray

    def __post_init__(self):
        alpha = np.atleast_1d(np.asarray(self.alpha, dtype=float))
        beta = np.atleast_1d(np.asarray(self.beta, dtype=float))
        if alpha.shape != beta.shape or alpha.ndim != 1 or alpha.size == 0:
            raise ConfigError("alpha and beta must be 1-d arrays of equal positive length")
        if not np.all(alpha > 0):
            raise ConfigError("periodic alpha must be strictly positive")
        if not (np.all(np.isfinite(alpha)) and np.all(np.isfinite(beta))):
            raise ConfigError("periodic data must be finite")
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "beta", beta)

    @property
    def N(self) -> int:
        return self.alpha.size

    def alpha_at(self, n):
        n, scalar = _as_index_array(_as_int_indices(n))
        out = self.alpha[np.mod(n, self.N)]
        return float(out) if scalar else out

    def beta_at(self, n):
        n, scalar = _as_index_array(_as_int_indices(n))
        out = self.beta[np.mod(n, self.N)]
        return float(out) if scalar else out


@dataclass(frozen=True)
class FamilyDescriptor:
    """Evaluable Jacobi parameters with their tempering sequence.

    a, b, gamma accept float arrays (vectorized); use a_at/b_at/gamma_at
    for index access with scalar memoization.  Instances are immutable;
    the memo dict is only ever populated, so concurrent readers are safe.
    """

    a: Callable
    b: Callable
    gamma: Callable
    periodic: PeriodicData
    label: str
    _memo: dict = field(default_factory=dict, repr=False, compare=False)

    def _eval(self, fn, n):
        n_arr, scalar = _as_index_array(n)
        out = fn(n_arr.astype(float))
        return float(out) if scalar else np.asarray(out, dtype=float)

    def a_at(self, n):
        if np.isscalar(n) or getattr(n, "ndim", None) == 0:
            key = ("a", int(n))
            if key not in self._memo:
                self._memo[key] = float(self.a(float(n)))
            return self._memo[key]
        return self._eval(self.a, n)

    def b_at(self, n):
        if np.isscalar(n) or getattr(n, "ndim", None) == 0:
            key = ("b", int(n))
            if key not in self._memo:
                self._memo[key] = float(self.b(float(n)))
            return self._memo[key]
        return self._eval(self.b, n)

    def gamma_at(self, n):
        if np.isscalar(n) or getattr(n, "ndim", None) == 0:
            key = ("g", int(n))
            if key not in self._memo:
                self._memo[key] = float(self.gamma(float(n)))
            return self._memo[key]
        return self._eval(self.gamma, n)

    def validate_window(self, indices=None):
        """Check a_n > 0, gamma_n > 0 and finiteness on a sample window."""
        if indices is None:
            indices = np.unique(np.geomspace(1, 1e5, 200).astype(int)) - 1
        a = self.a_at(indices)
        g = self.gamma_at(indices)
        b = self.b_at(indices)
        if not (np.all(a > 0) and np.all(g > 0)):
            raise ConfigError("family %r: a_n and gamma_n must stay positive" % self.label)
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b)) and np.all(np.isfinite(g))):
            raise ConfigError("family %r: parameters must stay finite" % self.label)
        return True


def modulation_diagnostic(fam: FamilyDescriptor, n0_values=(256, 1024, 4096, 16384)):
    """Windowed sup of the modulation defects over n in [n0, 2*n0].

    Reports sup |alpha_{n-1}/alpha_n - a_{n-1}/a_n| and
    sup |beta_n/alpha_n - b_n/a_n|; a decaying sequence of sups over
    doubling windows is the numerical reading of asymptotic periodicity.
    """
    rows = []
    for n0 in n0_values:
        n = np.arange(n0, 2 * n0 + 1)
        a = fam.a_at(n)
        am1 = fam.a_at(n - 1)
        b = fam.b_at(n)
        alpha = fam.periodic.alpha_at(n)
        alpham1 = fam.periodic.alpha_at(n - 1)
        beta = fam.periodic.beta_at(n)
        da = np.max(np.abs(alpham1 / alpha - am1 / a))
        db = np.max(np.abs(beta / alpha - b / a))
        rows.append({"n0": int(n0), "sup_ratio_defect": float(da), "sup_diag_defect": float(db)})
    decaying = all(
        rows[k + 1]["sup_ratio_defect"] <= rows[k]["sup_ratio_defect"] * 1.1
        and rows[k + 1]["sup_diag_defect"] <= rows[k]["sup_diag_defect"] * 1.1
        for k in range(len(rows) - 1)
    )
    return {"windows": rows, "decaying": decaying}


# ---------------------------------------------------------------------------
# catalog builders
# ---------------------------------------------------------------------------


def build_yafaev(kappa: float, f: float, g: float) -> FamilyDescriptor:
    """Power family a_n = (n+1)^kappa (1 + f/(n+1)), b_n = 2 (n+1)^kappa (1 + g/(n+1)).

    Tempering sequence gamma_n = n + 1; periodic limits alpha = 1, beta = 2.
    Requires kappa > 1 and f, g > -1.
    """
    if not kappa > 1:
        raise ConfigError("yafaev family needs kappa > 1, got %r" % kappa)
    if not (f > -1 and g > -1):
        raise ConfigError("yafaev family needs f > -1 and g > -1, got f=%r g=%r" % (f, g))

    def a(n):
        return (n + 1.0) ** kappa * (1.0 + f / (n + 1.0))

    def b(n):
        return 2.0 * (n + 1.0) ** kappa * (1.0 + g / (n + 1.0))

    def gamma(n):
        return n + 1.0

    return FamilyDescriptor(
        a, b, gamma, PeriodicData(np.array([1.0]), np.array([2.0])),
        "yafaev(kappa=%g,f=%g,g=%g)" % (kappa, f, g),
    )


def build_bd_power(kappa: float) -> FamilyDescriptor:
    """Symmetric birth-death power family a_n = (n+1)^kappa, b_n = a_{n-1} + a_n.

    Uses a_{-1} := 0 inside b_0 (so b_0 = a_0) and gamma_n = a_n.
    Requires kappa in (1, 2).
    """
    if not (1.0 < kappa < 2.0):
        raise ConfigError("bd_power family needs kappa in (1, 2), got %r" % kappa)

    def a(n):
        return (n + 1.0) ** kappa

    def b(n):
        n = np.asarray(n, dtype=float)
        prev = np.where(n >= 1.0, np.maximum(n, 1.0) ** kappa, 0.0)
        return prev + (n + 1.0) ** kappa

    return FamilyDescriptor(
        a, b, a, PeriodicData(np.array([1.0]), np.array([2.0])),
        "bd_power(kappa=%g)" % kappa,
    )


def symmetric_bd_periodic(tilde_alpha) -> PeriodicData:
    """Periodic data alpha_n = ta_{2n+1} ta_{2n+2}, beta_n = ta_{2n}^2 + ta_{2n+1}^2.

    tilde_alpha is a 2N-periodic positive sequence given by one period of
    length 2N; it must satisfy the even/odd balance
    ta_0 ta_2 ... ta_{2N-2} == ta_1 ta_3 ... ta_{2N-1}.
    """
    ta = np.asarray(tilde_alpha, dtype=float)
    if ta.ndim != 1 or ta.size % 2 != 0 or ta.size == 0:
        raise ConfigError("tilde_alpha must have even positive length, got shape %r" % (ta.shape,))
    if not np.all(ta > 0):
        raise ConfigError("tilde_alpha must be strictly positive")
    even = float(np.prod(ta[0::2]))
    odd = float(np.prod(ta[1::2]))
    if abs(even - odd) > BALANCE_TOL * max(abs(even), abs(odd)):
        raise ConfigError(
            "tilde_alpha violates the even/odd product balance: %.17g vs %.17g" % (even, odd)
        )
    N = ta.size // 2
    idx = np.arange(N)
    at = lambda k: ta[np.mod(k, ta.size)]
    alpha = at(2 * idx + 1) * at(2 * idx + 2)
    beta = at(2 * idx) ** 2 + at(2 * idx + 1) ** 2
    return PeriodicData(alpha, beta)


def build_symmetric_bd(tilde_alpha, gamma: Callable) -> FamilyDescriptor:
    """Symmetric birth-death family a_n = gamma_n, b_n = gamma_{n-1} + gamma_n.

    gamma must be modulated by the alpha derived from tilde_alpha
    (gamma_{n-1}/gamma_n -> alpha_{n-1}/alpha_n along residues); the value
    gamma(-1) is used inside b_0 when the map supports it, else 0.
    """
    periodic = symmetric_bd_periodic(tilde_alpha)

    try:
        g_m1 = float(gamma(np.asarray(-1.0)))
        if not np.isfinite(g_m1):
            g_m1 = 0.0
    except Exception:
        g_m1 = 0.0

    def a(n):
        return gamma(n)

    def b(n):
        n = np.asarray(n, dtype=float)
        prev = np.where(n >= 1.0, gamma(np.maximum(n - 1.0, 0.0)), g_m1)
        return prev + gamma(n)

    return FamilyDescriptor(
        a, b, gamma, periodic, "symmetric_bd(N=%d)" % periodic.N
    )


def modulated_envelope_gamma(periodic: PeriodicData, envelope: Callable) -> Callable:
    """gamma_n = alpha_{n mod N} * envelope(n), the standard modulated tempering."""

    def gamma(n):
        n = np.asarray(n, dtype=float)
        return periodic.alpha_at(n.astype(int)) * envelope(n)

    return gamma


def build_km(periodic: PeriodicData, hat_a: Callable, delta: Callable,
             f: Callable, g: Callable) -> FamilyDescriptor:
    """Periodically modulated family with envelope hat_a and corrections f/delta, g/delta.

    a_n = alpha_n hat_a_n (1 + f_n/delta_n), b_n = beta_n hat_a_n (1 + g_n/delta_n),
    gamma_n = alpha_n delta_n.  hat_a and delta must be positive with
    summable 1/hat_a and delta_n (1 - hat_a_{n-1}/hat_a_n) -> kappa > 0
    (caller-asserted; positivity is checked on a sample window).
    """
    sample = np.arange(0.0, 64.0)
    ha = np.asarray(hat_a(sample), dtype=float)
    de = np.asarray(delta(sample), dtype=float)
    if not (np.all(ha > 0) and np.all(de > 0)):
        raise ConfigError("km family needs positive hat_a and delta")

    def a(n):
        n = np.asarray(n, dtype=float)
        return periodic.alpha_at(n.astype(int)) * hat_a(n) * (1.0 + f(n) / delta(n))

    def b(n):
        n = np.asarray(n, dtype=float)
        return periodic.beta_at(n.astype(int)) * hat_a(n) * (1.0 + g(n) / delta(n))

    def gamma(n):
        n = np.asarray(n, dtype=float)
        return periodic.alpha_at(n.astype(int)) * delta(n)

    return FamilyDescriptor(a, b, gamma, periodic, "km(N=%d)" % periodic.N)


def km_kappa_estimate(hat_a: Callable, delta: Callable, n: int = 10**6) -> float:
    """Tail value of delta_n (1 - hat_a_{n-1}/hat_a_n), the growth exponent."""
    nv = np.asarray(float(n))
    return float(delta(nv) * (1.0 - hat_a(nv - 1.0) / hat_a(nv)))


# ---------------------------------------------------------------------------
# l^1 perturbations
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PerturbedFamily:
    """Multiplicative perturbation a_n(1 + xi_n), b_n(1 + zeta_n) of a base family."""

    base: FamilyDescriptor
    xi: Callable
    zeta: Callable

    def effective(self) -> FamilyDescriptor:
        """The perturbed parameters as a plain family (same gamma and limits)."""
        base = self.base
        xi, zeta = self.xi, self.zeta

        def a(n):
            return base.a(np.asarray(n, dtype=float)) * (1.0 + xi(np.asarray(n, dtype=float)))

        def b(n):
            return base.b(np.asarray(n, dtype=float)) * (1.0 + zeta(np.asarray(n, dtype=float)))

        return FamilyDescriptor(
            a, b, base.gamma, base.periodic, base.label + "+l1perturbation"
        )

    def summability_diagnostic(self, n_max: int = 10**5):
        """Partial sums of sqrt(gamma_n)(|xi_n| + |zeta_n|) over doubling windows.

        Decaying window sums indicate a numerically Cauchy tail; a failure
        is reported, not fatal (summability is not decidable from finitely
        many terms).
        """
        windows = []
        n0 = max(16, n_max // 64)
        while 2 * n0 <= n_max:
            n = np.arange(n0, 2 * n0, dtype=float)
            w = np.sqrt(self.base.gamma(n)) * (np.abs(self.xi(n)) + np.abs(self.zeta(n)))
            windows.append({"n0": int(n0), "window_sum": float(np.sum(w))})
            n0 *= 2
        sums = [w["window_sum"] for w in windows]
        ok = all(sums[k + 1] <= sums[k] * 1.05 for k in range(len(sums) - 1))
        positivity = True
        n = np.arange(0.0, 4096.0)
        if np.any(1.0 + self.xi(n) <= 0):
            positivity = False
        return {"windows": windows, "cauchy": ok, "a_stays_positive": positivity}


def perturb_l1(base: FamilyDescriptor, xi: Callable, zeta: Callable) -> PerturbedFamily:
    """Wrap a family with multiplicative perturbations; 1 + xi_n must stay positive."""
    pert = PerturbedFamily(base, xi, zeta)
    n = np.arange(0.0, 4096.0)
    if np.any(1.0 + np.asarray(xi(n), dtype=float) <= 0.0):
        raise ConfigError("perturbation leaves a_n non-positive on the sampled window")
    return pert


# ---------------------------------------------------------------------------
# config interface
# ---------------------------------------------------------------------------


def _const_or_expr(value, default=None):
    if value is None:
        if default is None:
            raise ConfigError("missing required sequence parameter")
        value = default
    if isinstance(value, str):
        return compile_expression(value)
    if isinstance(value, (int, float)):
        c = float(value)
        return lambda n: np.full_like(np.asarray(n, dtype=float), c)
    raise ConfigError("sequence parameter must be a number or expression string, got %r" % (value,))


def family_from_config(cfg: dict):
    """Build a family (possibly perturbed) from a parsed JSON config dict.

    Schema: {"family": {"kind": ..., "params": {...}},
             "perturbation": {"xi": expr, "zeta": expr}}   (optional)
    Kinds: yafaev, bd_power, symmetric_bd, km, custom.
    """
    if "family" not in cfg:
        raise ConfigError('config must contain a "family" block')
    fam_cfg = cfg["family"]
    kind = fam_cfg.get("kind")
    params = fam_cfg.get("params", {})
    if kind == "yafaev":
        fam = build_yafaev(float(params["kappa"]), float(params.get("f", 0.0)),
                           float(params.get("g", 0.0)))
    elif kind == "bd_power":
        fam = build_bd_power(float(params["kappa"]))
    elif kind == "symmetric_bd":
        periodic = symmetric_bd_periodic(params["tilde_alpha"])
        envelope = _const_or_expr(params.get("gamma_envelope"), default="sqrt(n+1)")
        fam = build_symmetric_bd(params["tilde_alpha"],
                                 modulated_envelope_gamma(periodic, envelope))
    elif kind == "km":
        periodic = PeriodicData(np.asarray(params["alpha"], dtype=float),
                                np.asarray(params["beta"], dtype=float))
        fam = build_km(periodic,
                       _const_or_expr(params.get("hat_a")),
                       _const_or_expr(params.get("delta")),
                       _const_or_expr(params.get("f", 0.0)),
                       _const_or_expr(params.get("g", 0.0)))
    elif kind == "custom":
        periodic = PeriodicData(np.asarray(params["alpha"], dtype=float),
                                np.asarray(params["beta"], dtype=float))
        fam = FamilyDescriptor(
            _const_or_expr(params.get("a")),
            _const_or_expr(params.get("b")),
            _const_or_expr(params.get("gamma")),
            periodic,
            params.get("label", "custom"),
        )
    else:
        raise ConfigError("unknown family kind %r" % kind)

    fam.validate_window()
    pert_cfg = cfg.get("perturbation")
    if pert_cfg:
        xi = _const_or_expr(pert_cfg.get("xi", 0.0))
        zeta = _const_or_expr(pert_cfg.get("zeta", 0.0))
        return perturb_l1(fam, xi, zeta)
    return fam
