"""Command-line front end: `cbi <subcommand> --scenario s.json ...`.

Subcommands: classify, flow, renorm, law, simulate, verify, transience.
Exit codes: 0 success, 1 numeric failure, 2 hypothesis mismatch,
64 usage or domain error. Scalar answers print bare with 12 significant
digits; JSON/CSV outputs carry the scenario fingerprint and tool version.
"""

import argparse
import json
import os
import sys

from . import __version__
from .errors import (CbiError, DomainError, HypothesisMismatch,
                     NumericError)
from .flow import v_backward, v_forward
from .limitlaws import LimitLaw
from .renorm import RenormEvaluator, transience_test
from .scenarios import load_scenario
from .simulate import ChartStable, EulerJump, ExactQuadratic, SimConfig, \
    simulate_ensemble
from .stats import stationary_check, verify_theorem

_EXIT_OK = 0
_EXIT_NUMERIC = 1
_EXIT_HYPOTHESIS = 2
_EXIT_USAGE = 64


def _fmt(x):
    """12-significant-digit text form used for every printed number."""
    return "%.12g" % float(x)


def _round12(obj):
    """Recursively round floats to 12 significant digits for stable,
    diff-friendly JSON output."""
    if isinstance(obj, float):
        return float(_fmt(obj))
    if isinstance(obj, dict):
        return {k: _round12(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round12(v) for v in obj]
    return obj


def _emit_json(doc, out):
    blob = json.dumps(_round12(doc), indent=2, sort_keys=True) + "\n"
    if out:
        with open(out, "w") as fh:
            fh.write(blob)
    else:
        sys.stdout.write(blob)


def _emit_csv(header_cols, rows, out, fingerprint=None):
    lines = ["# cbiflow %s%s" % (__version__, " fingerprint=%s"
                                 % fingerprint if fingerprint else "")]
    lines.append(",".join(header_cols))
    for row in rows:
        lines.append(",".join(
            cell if isinstance(cell, str) else _fmt(cell) for cell in row))
    blob = "\n".join(lines) + "\n"
    if out:
        with open(out, "w") as fh:
            fh.write(blob)
    else:
        sys.stdout.write(blob)


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on bad flags; the contract here is 64."""

    def error(self, message):
        self.exit(_EXIT_USAGE, "%s: error: %s\n" % (self.prog, message))


def _grid(spec):
    """Parse 'start:stop:step' into an inclusive list of floats."""
    parts = spec.split(":")
    if len(parts) != 3:
        raise DomainError("grid must be start:stop:step, got %r" % spec)
    start, stop, step = (float(p) for p in parts)
    if step <= 0 or stop < start:
        raise DomainError("grid needs step > 0 and stop >= start")
    out, k = [], 0
    while True:
        theta = start + k * step
        if theta > stop + 1e-9 * max(1.0, abs(stop)):
            return out
        out.append(theta)
        k += 1


def _t_list(spec):
    try:
        return [float(p) for p in spec.split(",") if p]
    except ValueError:
        raise DomainError("t list must be comma-separated numbers, got %r"
                          % spec)


def _build_parser():
    top = _Parser(prog="cbi", description=__doc__.splitlines()[0])
    top.add_argument("--version", action="version",
                     version="cbiflow %s" % __version__)
    sub = top.add_subparsers(dest="command", metavar="command")

    def scenario_cmd(name, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--scenario", required=True,
                       help="scenario JSON file")
        return p

    scenario_cmd("classify", "divergence regime of the scenario (JSON)")

    p = scenario_cmd("flow", "cumulant flow v_t(lambda)")
    p.add_argument("--t", type=float, required=True)
    p.add_argument("--lambda", dest="lam", type=float, required=True)
    p.add_argument("--inverse", action="store_true",
                   help="evaluate the inverse flow v_{-t}(lambda)")

    p = scenario_cmd("renorm", "r_t(lambda) and the round-trip c_t(r)")
    p.add_argument("--t", type=float, required=True)
    p.add_argument("--lambda", dest="lam", type=float, required=True)

    p = sub.add_parser("law", help="limit-law Laplace transform on a grid")
    p.add_argument("--kind", required=True,
                   choices=["Exp1", "Uniform01", "UL", "UF", "VL", "VF",
                            "StationaryStable", "WLambda"])
    p.add_argument("--grid", required=True, help="theta grid start:stop:step")
    p.add_argument("--a", type=float)
    p.add_argument("--alpha", type=float)
    p.add_argument("--delta", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--x", type=float)
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--scenario", help="scenario JSON (WLambda only)")
    p.add_argument("--out", help="write CSV here instead of stdout")

    p = scenario_cmd("simulate", "terminal ensemble CSV")
    p.add_argument("--x0", type=float, help="override the scenario x0")
    p.add_argument("--t", type=float, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--scheme", required=True,
                   choices=["exact", "euler", "chart"])
    p.add_argument("--dt", type=float, help="step for euler/chart")
    p.add_argument("--out", help="write CSV here instead of stdout")

    p = scenario_cmd("verify", "run one theorem check, emit a verdict")
    p.add_argument("--theorem", required=True)
    p.add_argument("--t", required=True, help="comma-separated t list")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", help="write verdict JSON here")
    p.add_argument("--csv", help="write the diagnostics grid here")

    scenario_cmd("transience", "Recurrent / Transient / Inconclusive")
    return top


def _cmd_classify(args):
    scn = load_scenario(args.scenario)
    re = RenormEvaluator(scn.psi, scn.phi, scn.lambda0)
    report = re.classify_regime(
        s_threshold=scn.overrides.get("s_threshold", 0.06),
        f_threshold=scn.overrides.get("f_threshold", 20.0))
    doc = report.as_dict()
    doc["fingerprint"] = scn.fingerprint()
    doc["version"] = __version__
    _emit_json(doc, None)
    return _EXIT_OK


def _cmd_flow(args):
    scn = load_scenario(args.scenario)
    fn = v_backward if args.inverse else v_forward
    sys.stdout.write(_fmt(fn(scn.psi, args.t, args.lam, scn.lambda0)) + "\n")
    return _EXIT_OK


def _cmd_renorm(args):
    scn = load_scenario(args.scenario)
    re = RenormEvaluator(scn.psi, scn.phi, scn.lambda0)
    r = re.r_eval(args.t, args.lam)
    c = re.c_eval(args.t, r)
    sys.stdout.write(_fmt(r) + "\n" + _fmt(c) + "\n")
    return _EXIT_OK


def _need(args, attr, flag):
    val = getattr(args, attr)
    if val is None:
        raise DomainError("law kind %s needs %s" % (args.kind, flag))
    return val


def _cmd_law(args):
    kind, fingerprint = args.kind, None
    if kind == "Exp1":
        law = LimitLaw.exp1()
    elif kind == "Uniform01":
        law = LimitLaw.uniform01()
    elif kind == "UL":
        law = LimitLaw.ul(_need(args, "a", "--a"))
    elif kind == "UF":
        law = LimitLaw.uf(_need(args, "delta", "--delta"))
    elif kind == "VL":
        law = LimitLaw.vl(_need(args, "alpha", "--alpha"),
                          _need(args, "a", "--a"))
    elif kind == "VF":
        law = LimitLaw.vf(_need(args, "beta", "--beta"))
    elif kind == "StationaryStable":
        law = LimitLaw.stationary_stable(_need(args, "alpha", "--alpha"),
                                         _need(args, "beta", "--beta"))
    else:
        if not args.scenario:
            raise DomainError("law kind WLambda needs --scenario")
        scn = load_scenario(args.scenario)
        fingerprint = scn.fingerprint()
        law = LimitLaw.w_lambda(_need(args, "x", "--x"),
                                _need(args, "lam", "--lambda"),
                                scn.psi, scn.phi, scn.lambda0)
    thetas = _grid(args.grid)
    rows = [(theta, law.lt(theta)) for theta in thetas]
    _emit_csv(["theta", "lt"], rows, args.out, fingerprint)
    return _EXIT_OK


_SCHEMES = {
    "exact": lambda args: ExactQuadratic(),
    "euler": lambda args: EulerJump(args.dt),
    "chart": lambda args: ChartStable(args.dt),
}


def _cmd_simulate(args):
    scn = load_scenario(args.scenario)
    if args.scheme in ("euler", "chart") and args.dt is None:
        raise DomainError("scheme %r needs --dt" % args.scheme)
    x0 = scn.x0 if args.x0 is None else args.x0
    cfg = SimConfig(scn.psi, scn.phi, x0, args.t, _SCHEMES[args.scheme](args),
                    args.seed, args.n)
    ens = simulate_ensemble(cfg)
    rows = [(str(k), v) for k, v in enumerate(ens.terminal_values)]
    _emit_csv(["path_index", "terminal_value"], rows, args.out,
              ens.fingerprint)
    return _EXIT_OK


def _cmd_verify(args):
    scn = load_scenario(args.scenario)
    if args.theorem == "stationary":
        ts = _t_list(args.t)
        verdict = stationary_check(scn, ts[-1], args.n, args.seed)
    else:
        verdict = verify_theorem(scn, args.theorem, _t_list(args.t),
                                 args.n, args.seed)
    doc = verdict.as_dict()
    doc["fingerprint"] = scn.fingerprint()
    doc["version"] = __version__
    _emit_json(doc, args.out)
    if args.csv:
        _emit_csv(["probe", "empirical", "analytic", "stderr"],
                  verdict.diagnostics, args.csv, scn.fingerprint())
    return _EXIT_OK


def _cmd_transience(args):
    scn = load_scenario(args.scenario)
    sys.stdout.write(
        transience_test(scn.psi, scn.phi, scn.lambda0) + "\n")
    return _EXIT_OK


_COMMANDS = {
    "classify": _cmd_classify,
    "flow": _cmd_flow,
    "renorm": _cmd_renorm,
    "law": _cmd_law,
    "simulate": _cmd_simulate,
    "verify": _cmd_verify,
    "transience": _cmd_transience,
}


def _set_threads():
    """CBI_THREADS bounds the numba worker pool; absent = default."""
    raw = os.environ.get("CBI_THREADS")
    if not raw:
        return
    try:
        want = max(1, int(raw))
    except ValueError:
        return
    try:
        import numba
        numba.set_num_threads(min(want, numba.config.NUMBA_NUM_THREADS))
    except Exception:
        pass


def run(argv=None):
    """Dispatch one CLI invocation; returns the process exit code."""
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if exc.code is not None else _EXIT_OK
    if not args.command:
        parser.print_usage(sys.stderr)
        return _EXIT_USAGE
    _set_threads()
    try:
        return _COMMANDS[args.command](args)
    except HypothesisMismatch as exc:
        sys.stderr.write("hypothesis mismatch: %s\n" % exc)
        return _EXIT_HYPOTHESIS
    except NumericError as exc:
        sys.stderr.write("numeric failure: %s\n" % exc)
        return _EXIT_NUMERIC
    except (DomainError, CbiError) as exc:
        sys.stderr.write("error: %s\n" % exc)
        return _EXIT_USAGE


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
