"""Batch experiment harness.

Subcommands read a JSON config describing a family, run one pipeline each,
write `<command>.csv` into the output directory and merge a summary into
`report.json` there.  Output formatting is pinned (17 significant digits,
'.' decimal separator, '\n' line endings, header row) so identical configs
produce byte-identical files.

Exit codes: 0 = all requested diagnostics decided, 2 = some verdict
undetermined, 1 = error.
"""

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import asymptotics, evolve, mat2, spectral, tempered
from .errors import ParajacobiError
from .family import FamilyDescriptor, PerturbedFamily, family_from_config
from .parabolic import decompose
from .tempered import estimate_limits, lambda_sets

ALL_COMMANDS = ("limits", "tau", "trace", "discr", "turan", "phase", "kernel",
                "classify", "report", "perturb")
DEFAULT_PUNCTURE = 1e-3


def _fmt(value) -> str:
    if value is None:
        return "nan"
    return "%.17g" % float(value)


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) if not isinstance(v, str) else v for v in row) + "\n")


def _merge_report(out_dir, key, payload):
    path = os.path.join(out_dir, "report.json")
    report = {}
    if os.path.exists(path):
        with open(path) as fh:
            report = json.load(fh)
    report[key] = payload
    with open(path, "w", newline="") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _thread_count(args):
    if args.threads is not None:
        return max(1, args.threads)
    env = os.environ.get("PARAJACOBI_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def _parallel_map(fn, items, threads):
    if threads <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


class RunContext:
    """Config plus lazily built family, decomposition and limits."""

    def __init__(self, cfg, args):
        self.cfg = cfg
        self.args = args
        built = family_from_config(cfg)
        if isinstance(built, PerturbedFamily):
            self.perturbed = built
            self.fam: FamilyDescriptor = built.effective()
        else:
            self.perturbed = None
            self.fam = built
        self._decomp = None
        self._limits = None

    @property
    def n_max(self):
        if self.args.n is not None:
            return self.args.n
        return int(self.cfg.get("n_max", 10**6))

    @property
    def j_max(self):
        if self.args.j is not None:
            return self.args.j
        return int(self.cfg.get("j_max", 10**4))

    @property
    def decomp(self):
        if self._decomp is None:
            self._decomp = decompose(self.fam.periodic)
        return self._decomp

    @property
    def limits(self):
        if self._limits is None:
            self._limits = estimate_limits(self.fam, self.decomp, self.n_max)
        return self._limits

    def x_grid(self):
        grid = self.cfg.get("grid", {"x_min": -2.0, "x_max": 2.0, "points": 11})
        points = int(grid.get("points", 11))
        if points < 1:
            raise ParajacobiError("grid needs points >= 1")
        xs = np.linspace(float(grid.get("x_min", -2.0)), float(grid.get("x_max", 2.0)), points)
        puncture = float(self.cfg.get("tolerances", {}).get("puncture", DEFAULT_PUNCTURE))
        x0 = self.limits.x0
        if x0 is not None:
            xs = xs[np.abs(xs - x0) >= puncture]
        return xs

    def x_single(self, default=None):
        if self.args.x is not None:
            return self.args.x
        if default is not None:
            return default
        xs = self.x_grid()
        return float(xs[len(xs) // 2])

    def eta(self):
        if self.args.eta is not None:
            return self.args.eta
        angles = self.cfg.get("eta_angles")
        return float(angles[0]) if angles else float(np.pi / 2.0)


def _geom_indices(lo, hi, count=256):
    return np.unique(np.geomspace(max(1, lo), max(2, hi), count).astype(int))


# ---------------------------------------------------------------------------
# subcommand implementations; each returns (exit_code, payload_for_report)
# ---------------------------------------------------------------------------


def cmd_limits(ctx, out_dir):
    lim = ctx.limits
    rows = [(i, lim.s[i], lim.r[i], lim.u[i]) for i in range(lim.s.size)]
    write_csv(os.path.join(out_dir, "limits.csv"), ["i", "s", "r", "u"], rows)
    return 0, lim.to_json()


def cmd_tau(ctx, out_dir):
    if ctx.args.x is not None:
        xs = np.array([ctx.args.x])
    else:
        xs = ctx.x_grid()
    threads = _thread_count(ctx.args)
    values = _parallel_map(lambda x: float(tempered.tau(ctx.limits, x)), list(xs), threads)
    write_csv(os.path.join(out_dir, "tau.csv"), ["x", "tau"], list(zip(xs, values)))
    if ctx.args.x is not None:
        print(_fmt(values[0]))
    return 0, {"slope": ctx.limits.tau_slope, "intercept": ctx.limits.tau_intercept,
               "grid": [float(v) for v in xs], "values": [float(v) for v in values]}


def cmd_trace(ctx, out_dir):
    n = ctx.n_max if ctx.args.n is not None else int(ctx.cfg.get("trace_n", 1000))
    trace = evolve.eigenvector_trace(ctx.fam, ctx.eta(), ctx.x_single(), n)
    rows = []
    for k in range(len(trace)):
        flag = "overflow" if trace.overflow_at is not None and k >= trace.overflow_at else ""
        logs = trace.log_scale[k] if trace.log_scale is not None else 0.0
        rows.append((k, trace.u[k], logs, flag))
    write_csv(os.path.join(out_dir, "trace.csv"), ["n", "u_n", "log_scale", "flags"], rows)
    return 0, {"x": trace.x, "eta": trace.eta_angle, "n": n,
               "overflow_at": trace.overflow_at}


def cmd_discr(ctx, out_dir):
    x = ctx.x_single()
    i = 0
    N = ctx.fam.periodic.N
    ref = 4.0 * float(tempered.tau(ctx.limits, x)) * ctx.fam.periodic.alpha_at(i - 1)
    js = _geom_indices(10, ctx.j_max, 64)
    rows = []
    for j in js:
        X = evolve.transfer_X(ctx.fam, int(j) * N + i, x)
        val = ctx.fam.gamma_at((int(j) + 1) * N + i - 1) * float(mat2.discr(X))
        rows.append((j, val, ref, abs(val - ref)))
    write_csv(os.path.join(out_dir, "discr.csv"), ["j", "value", "reference_limit", "abs_error"],
              rows)
    return 0, {"x": x, "reference": ref, "final_abs_error": rows[-1][3]}


def cmd_turan(ctx, out_dir):
    x = ctx.x_single()
    N = ctx.fam.periodic.N
    j_max = ctx.j_max
    trace = evolve.eigenvector_trace(ctx.fam, ctx.eta(), x, j_max * N + N + 1)
    js = _geom_indices(1, j_max, 256) * N
    S = asymptotics.turan_series(ctx.fam, trace, js)
    write_csv(os.path.join(out_dir, "turan.csv"), ["n", "S", "abs_S"],
              list(zip(js, S, np.abs(S))))
    tail = np.abs(S[js >= js[-1] // 10])
    return 0, {"x": x, "limit_estimate": float(np.mean(tail)),
               "tail_fluctuation": float((tail.max() - tail.min()) / tail.mean())}


def cmd_phase(ctx, out_dir):
    x = ctx.x_single()
    pa = asymptotics.extract_phase(ctx.fam, ctx.decomp, ctx.limits, 0, ctx.eta(), x, ctx.j_max)
    if pa.degenerate:
        write_csv(os.path.join(out_dir, "phase.csv"),
                  ["j", "phi_abs_j", "residual", "theta_sum"], [])
        return 0, {"x": x, "phi_abs": 0.0, "degenerate": True}
    rows = list(zip(pa.js, np.abs(pa.phi_series), pa.residual, pa.theta_sum))
    write_csv(os.path.join(out_dir, "phase.csv"),
              ["j", "phi_abs_j", "residual", "theta_sum"], rows)
    half = pa.js[0] + (pa.js[-1] - pa.js[0]) // 2
    return 0, {"x": x, "phi_abs": pa.phi_abs, "phi_arg": pa.phi_arg, "j0": pa.j0,
               "residual_sup_tail": pa.residual_sup(half, pa.js[-1]), "degenerate": False}


def cmd_kernel(ctx, out_dir):
    x = ctx.x_single()
    n_max = min(ctx.n_max, 10**6)
    trace = evolve.eigenvector_trace(ctx.fam, ctx.eta(), x, n_max)
    K, rho = asymptotics.christoffel_series(ctx.fam, trace, n_max)
    ns = _geom_indices(1, n_max, 256)
    rows = list(zip(ns, K[ns], rho[ns], K[ns] / rho[ns]))
    write_csv(os.path.join(out_dir, "kernel.csv"), ["n", "K", "rho", "ratio"], rows)
    window = (K / rho)[n_max // 10 :]
    return 0, {"x": x, "ratio_last": float(K[-1] / rho[-1]),
               "tail_fluctuation": float((window.max() - window.min()) / window.mean())}


def cmd_classify(ctx, out_dir):
    dec = ctx.decomp
    verdict = spectral.classify_selfadjoint(ctx.fam, ctx.limits, ctx.n_max)
    rows = [(dec.case.value, dec.epsilon, float(mat2.tr(dec.X0)), dec.trace_derivative,
             verdict.value, verdict.reason)]
    write_csv(os.path.join(out_dir, "classify.csv"),
              ["case", "epsilon", "trace_X0", "trace_derivative", "self_adjoint", "reason"],
              rows)
    code = 2 if verdict.value == "undetermined" else 0
    return code, {"case": dec.case.value, "epsilon": dec.epsilon,
                  "self_adjoint": verdict.value, "reason": verdict.reason}


def cmd_report(ctx, out_dir):
    rep = spectral.spectrum_report(ctx.fam, ctx.decomp, ctx.limits, n_max=ctx.n_max)
    for sub in ("limits", "tau", "classify"):
        code, payload = COMMANDS[sub](ctx, out_dir)
        _merge_report(out_dir, sub, payload)
    return (2 if rep.undetermined else 0), rep.to_json()


def cmd_perturb(ctx, out_dir):
    if ctx.perturbed is None:
        raise ParajacobiError('the "perturb" command needs a perturbation block in the config')
    sets = lambda_sets(ctx.limits)
    if sets.lambda_minus:
        lo, hi = sets.lambda_minus[0]
        lo = lo if np.isfinite(lo) else hi - 2.0 if np.isfinite(hi) else -1.0
        hi = hi if np.isfinite(hi) else lo + 2.0
        x = ctx.x_single(default=0.5 * (lo + hi))
    else:
        x = ctx.x_single(default=0.0)
    js = _geom_indices(1, ctx.j_max, 64)
    M = asymptotics.perturbation_M_series(ctx.perturbed, js, x)
    rows = [(j, m[0, 0], m[0, 1], m[1, 0], m[1, 1], float(mat2.det(m)))
            for j, m in zip(js, M)]
    write_csv(os.path.join(out_dir, "perturb.csv"),
              ["j", "m11", "m12", "m21", "m22", "det"], rows)
    rep = spectral.perturbed_report(ctx.perturbed, n_max=ctx.n_max)
    code = 2 if rep.undetermined else 0
    return code, {"x": x, "det_final": rows[-1][5], "report": rep.to_json()}


COMMANDS = {
    "limits": cmd_limits,
    "tau": cmd_tau,
    "trace": cmd_trace,
    "discr": cmd_discr,
    "turan": cmd_turan,
    "phase": cmd_phase,
    "kernel": cmd_kernel,
    "classify": cmd_classify,
    "report": cmd_report,
    "perturb": cmd_perturb,
}


def run(command, config_path, args) -> int:
    try:
        with open(config_path) as fh:
            cfg = json.load(fh)
    except json.JSONDecodeError as exc:
        print("config parse error at line %d column %d: %s" % (exc.lineno, exc.colno, exc.msg),
              file=sys.stderr)
        return 1
    except OSError as exc:
        print("cannot read config: %s" % exc, file=sys.stderr)
        return 1
    out_dir = args.out or cfg.get("output_dir", "out")
    os.makedirs(out_dir, exist_ok=True)
    try:
        ctx = RunContext(cfg, args)
        code, payload = COMMANDS[command](ctx, out_dir)
        _merge_report(out_dir, command, payload)
        return code
    except ParajacobiError as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 1


def build_parser():
    parser = argparse.ArgumentParser(
        prog="parajacobi",
        description="desk-scale diagnostics for periodically modulated Jacobi matrices",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ALL_COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON config path")
        p.add_argument("--out", default=None, help="output directory (default from config)")
        p.add_argument("--x", type=float, default=None, help="evaluation point")
        p.add_argument("--eta", type=float, default=None, help="initial angle on the unit circle")
        p.add_argument("--n", type=int, default=None, help="trace length / n_max override")
        p.add_argument("--j", type=int, default=None, help="block-index budget override")
        p.add_argument("--threads", type=int, default=None,
                       help="parallelism degree (default: PARAJACOBI_THREADS or machine)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return run(args.command, args.config, args)


if __name__ == "__main__":
    sys.exit(main())
