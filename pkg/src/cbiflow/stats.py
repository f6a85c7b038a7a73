"""Empirical transforms and goodness-of-fit verdicts for the limit laws.

Each verifier turns Monte Carlo ensembles into a VerificationVerdict: the
relevant renormalized statistic is computed per horizon in t_list, compared
against the limiting law (Kolmogorov-Smirnov distance for closed-form CDFs,
max Laplace-transform error on a probe grid otherwise), and accepted when
the value at the largest horizon is below the threshold and the trend
across horizons is nonincreasing (the limits are t -> infinity statements
with no rates, so the trend is part of the evidence).

Registry:

  main_exp_limit          r_t(1/Y_t) vs the unit exponential
  ratio_corollary         Y/Y~ of independent copies escapes every
                          compact window of (0, inf); median stays 1
  noncrit_S / L / F       the slow / log / fast divergence regimes of a
                          noncritical mechanism
  crit_L / crit_F         the critical counterparts (stable branching)
  subordinator_exp_limit  t Phi(1/I_t) vs the unit exponential

plus stationary_check for convergent immigration (proper limits in law).

All statistics are computed in log state where ensembles carry log values:
heavy immigration tails produce values like e^(1/U) far beyond float64.
"""

import math

import numpy as np

from . import flow
from . import quadrature
from .errors import (DomainError, EmptyEnsemble, HypothesisMismatch,
                     UnsupportedKind)
from .limitlaws import LimitLaw
from .mechanisms import criticality, divergence_test
from .renorm import RenormEvaluator
from .simulate import (ChartStable, ExactQuadratic, SimConfig,
                       exact_transition_available, simulate_ensemble,
                       simulate_subordinator)

KS_THRESHOLD = 0.05        # default for KS-type verdicts
LT_THRESHOLD = 0.02        # default for Laplace-transform-type verdicts
TREND_SLACK = 0.005        # Monte Carlo allowance on the nonincreasing trend
THETA_GRID = (0.5, 1.0, 2.0)
RATIO_WINDOW = (0.2, 5.0)
RATIO_THRESHOLD = 0.1
RATIO_MEDIAN_BAND = 0.02
_PAIR_FLIP = 0x5851F42D4C957F2D   # second-stream seed scrambler
_X_LOG_FLOOR = -745.0             # ln of the smallest positive float


class VerificationVerdict:
    """Outcome of one theorem check.

    diagnostics is a list of (probe, empirical, analytic, stderr) rows;
    passed requires the statistic at the largest horizon to sit below the
    threshold and the per-horizon trend to be nonincreasing (within
    TREND_SLACK), plus any secondary condition the theorem states (the
    ratio corollary's median balance).
    """

    def __init__(self, theorem_id, statistic, threshold, passed,
                 diagnostics):
        self.theorem_id = theorem_id
        self.statistic = float(statistic)
        self.threshold = float(threshold)
        self.passed = bool(passed)
        self.diagnostics = list(diagnostics)

    def as_dict(self):
        return {"theorem_id": self.theorem_id,
                "statistic": self.statistic,
                "threshold": self.threshold,
                "pass": self.passed,
                "diagnostics": [list(row) for row in self.diagnostics]}

    def __repr__(self):
        return ("VerificationVerdict(%s, statistic=%.6g, threshold=%.6g, "
                "pass=%s)" % (self.theorem_id, self.statistic,
                              self.threshold, self.passed))


# ---------------------------------------------------------------------------
# empirical transforms
# ---------------------------------------------------------------------------

def _ensemble_weights(ens, theta, scale=1.0):
    """e^{-theta scale Y} per path, safe for log-domain ensembles."""
    if ens.log_terminal_values is not None:
        with np.errstate(over="ignore"):
            z = np.exp(ens.log_terminal_values + math.log(scale))
            return np.exp(-theta * z)
    return np.exp(-theta * scale * ens.terminal_values)


def empirical_lt(ens, theta_grid):
    """Sample means and standard errors of e^{-theta Y} per grid point."""
    n = len(ens)
    if n == 0:
        raise EmptyEnsemble("empirical_lt needs a nonempty ensemble")
    out = []
    for theta in theta_grid:
        theta = float(theta)
        if theta < 0:
            raise DomainError("empirical_lt needs theta >= 0")
        if theta == 0.0:
            out.append((0.0, 1.0, 0.0))
            continue
        w = _ensemble_weights(ens, theta)
        if n == 1 or w.max() == w.min():
            se = 0.0  # constant sample: exactly zero, not mean-roundoff noise
        else:
            se = float(w.std(ddof=1) / math.sqrt(n))
        out.append((theta, float(w.mean()), se))
    return out


def _law_cdf(law, z):
    """Vectorized closed-form CDF of the law at sorted z >= 0."""
    if law.kind == "Exp1":
        return -np.expm1(-z)
    if law.kind == "Uniform01":
        return np.minimum(z, 1.0)
    if law.kind == "UL":
        return np.where(np.isinf(z), 1.0,
                        (z / (1.0 + z)) ** law.a)
    if law.kind == "UF":
        with np.errstate(divide="ignore"):
            return np.where(z > 0, np.exp(-z ** -law.delta), 0.0)
    raise UnsupportedKind("no closed-form distribution function for "
                          "kind %r" % (law.kind,))


def ks_distance(samples, law):
    """sup_z |F_emp(z) - F_law(z)| over the sorted samples."""
    z = np.sort(np.asarray(samples, dtype=float))
    n = z.size
    if n == 0:
        raise EmptyEnsemble("ks_distance needs samples")
    if np.any(np.isnan(z)):
        raise DomainError("ks_distance got NaN samples")
    if z[0] < 0:
        raise DomainError("ks_distance needs nonnegative samples")
    if not law.has_cdf:
        raise UnsupportedKind("ks_distance needs a closed-form CDF; law "
                              "kind %r has none" % (law.kind,))
    f = _law_cdf(law, z)
    hi = np.arange(1, n + 1, dtype=float) / n
    lo = np.arange(0, n, dtype=float) / n
    return float(max(np.max(hi - f), np.max(f - lo)))


def _ks_noise(n):
    return 1.0 / math.sqrt(n)


# ---------------------------------------------------------------------------
# shared verifier plumbing
# ---------------------------------------------------------------------------

def _auto_scheme(psi, phi, horizon):
    """Exact transition when admissible, else chart stepping (which runs
    event-driven, dt-free, whenever branching is deterministic and
    immigration is compound Poisson)."""
    if exact_transition_available(psi, phi):
        return ExactQuadratic()
    return ChartStable(dt=min(1e-2, max(1e-3, horizon / 20000.0)))


def _simulate(scn, t, n_paths, seed, scheme):
    sch = scheme if scheme is not None else _auto_scheme(scn.psi, scn.phi, t)
    cfg = SimConfig(scn.psi, scn.phi, getattr(scn, "x0", 0.0), t, sch,
                    seed, n_paths)
    return simulate_ensemble(cfg)


def _log_values(ens):
    if ens.log_terminal_values is not None:
        return np.asarray(ens.log_terminal_values, dtype=float)
    with np.errstate(divide="ignore"):
        return np.log(ens.terminal_values)


def _trend_ok(values):
    return all(b <= a + TREND_SLACK for a, b in zip(values, values[1:]))


def _trend_row(values):
    worst = max((b - a for a, b in zip(values, values[1:])), default=0.0)
    return ("trend_max_increase", float(worst), 0.0, 0.0)


def _ks_verdict(theorem_id, per_t, n_paths, threshold):
    """Assemble a KS-trend verdict from [(t, ks), ...]."""
    rows = [("ks@t=%g" % t, ks, 0.0, _ks_noise(n_paths)) for t, ks in per_t]
    stats = [ks for _, ks in per_t]
    rows.append(_trend_row(stats))
    passed = stats[-1] <= threshold and _trend_ok(stats)
    return VerificationVerdict(theorem_id, stats[-1], threshold, passed,
                               rows)


def _require(cond, message):
    if not cond:
        raise HypothesisMismatch(message)


def _lambda0(scn):
    return getattr(scn, "lambda0", None)


# ---------------------------------------------------------------------------
# theorem verifiers
# ---------------------------------------------------------------------------

def _verify_main(scn, t_list, n_paths, seed, scheme):
    psi, phi = scn.psi, scn.phi
    _require(psi.b != 0.0,
             "the exponential limit needs a noncritical mechanism (b != 0)")
    _require(divergence_test(psi, phi) == "Infinite",
             "the exponential limit needs divergent immigration "
             "(integral of Phi/|Psi| at 0 infinite)")
    re = RenormEvaluator(psi, phi, lambda0=_lambda0(scn))
    xfloor = -math.log(flow.LAMBDA_BIG)   # Y = 0 maps to r_t(LAMBDA_BIG)
    per_t = []
    for t in t_list:
        ens = _simulate(scn, t, n_paths, seed, scheme)
        x = np.maximum(_log_values(ens), xfloor)
        samples = re.r_bulk_neglog(t, x)
        per_t.append((t, ks_distance(samples, LimitLaw.exp1())))
    return _ks_verdict("main_exp_limit", per_t, n_paths, KS_THRESHOLD)


def _verify_ratio(scn, t_list, n_paths, seed, scheme):
    psi, phi = scn.psi, scn.phi
    _require(psi.b != 0.0,
             "the ratio corollary needs a noncritical mechanism (b != 0)")
    _require(divergence_test(psi, phi) == "Infinite",
             "the ratio corollary needs divergent immigration")
    lo, hi = math.log(RATIO_WINDOW[0]), math.log(RATIO_WINDOW[1])
    rows, stats, balances = [], [], []
    for t in t_list:
        ens_a = _simulate(scn, t, n_paths, seed, scheme)
        ens_b = _simulate(scn, t, n_paths, seed ^ _PAIR_FLIP, scheme)
        lr = _log_values(ens_a) - _log_values(ens_b)
        lr = np.where(np.isnan(lr), 0.0, lr)   # both copies hit 0: ratio 1
        inwin = float(np.mean((lr >= lo) & (lr <= hi)))
        below = float(np.mean(lr < 0.0))
        se = math.sqrt(0.25 / n_paths)
        rows.append(("window@t=%g" % t, inwin, 0.0, se))
        rows.append(("below_one@t=%g" % t, below, 0.5, se))
        stats.append(inwin)
        balances.append(below)
    rows.append(_trend_row(stats))
    passed = (stats[-1] <= RATIO_THRESHOLD and _trend_ok(stats)
              and abs(balances[-1] - 0.5) <= RATIO_MEDIAN_BAND)
    return VerificationVerdict("ratio_corollary", stats[-1],
                               RATIO_THRESHOLD, passed, rows)


def _classified(psi, phi, scn, want):
    report = RenormEvaluator(psi, phi, lambda0=_lambda0(scn)) \
        .classify_regime()
    _require(report.regime == want,
             "scenario classifies as regime %s, theorem needs %s"
             % (report.regime, want))
    return report


def _verify_noncrit_s(scn, t_list, n_paths, seed, scheme):
    psi, phi = scn.psi, scn.phi
    _require(psi.b != 0.0, "regime (S) theorem needs b != 0")
    _classified(psi, phi, scn, "S")
    re = RenormEvaluator(psi, phi, lambda0=_lambda0(scn))
    absb = abs(psi.b)
    per_t = []
    for t in t_list:
        ens = _simulate(scn, t, n_paths, seed, scheme)
        lrho = math.log(flow.rho_t(psi, t, _lambda0(scn)))
        w1 = np.maximum(_log_values(ens) + lrho, _X_LOG_FLOOR)
        samples = re.m_log_ratio_logx(w1, absb * t)
        per_t.append((t, ks_distance(samples, LimitLaw.uniform01())))
    return _ks_verdict("noncrit_S", per_t, n_paths, KS_THRESHOLD)


def _verify_noncrit_l(scn, t_list, n_paths, seed, scheme):
    psi, phi = scn.psi, scn.phi
    _require(psi.b != 0.0, "noncritical regime (L) theorem needs b != 0")
    report = _classified(psi, phi, scn, "L")
    law = LimitLaw.ul(report.a)
    absb = abs(psi.b)
    per_t = []
    for t in t_list:
        ens = _simulate(scn, t, n_paths, seed, scheme)
        lrho = math.log(flow.rho_t(psi, t, _lambda0(scn)))
        z = np.maximum((_log_values(ens) + lrho) / (absb * t), 0.0)
        per_t.append((t, ks_distance(z, law)))
    return _ks_verdict("noncrit_L", per_t, n_paths, KS_THRESHOLD)


def _verify_noncrit_f(scn, t_list, n_paths, seed, scheme):
    psi, phi = scn.psi, scn.phi
    _require(psi.b != 0.0, "noncritical regime (F) theorem needs b != 0")
    report = _classified(psi, phi, scn, "F")
    law = LimitLaw.uf(report.delta)
    re = RenormEvaluator(psi, phi, lambda0=_lambda0(scn))
    per_t = []
    for t in t_list:
        ens = _simulate(scn, t, n_paths, seed, scheme)
        xh = re.h_inverse(abs(psi.b) * t)
        z = np.maximum(_log_values(ens) / xh, 0.0)
        per_t.append((t, ks_distance(z, law)))
    return _ks_verdict("noncrit_F", per_t, n_paths, KS_THRESHOLD)


def _lt_verdict(theorem_id, scn, t_list, n_paths, seed, scheme, law,
                scale_of_t, threshold):
    """Laplace-probe verdict: max_theta |emp - law.lt(theta)| per t."""
    rows, stats = [], []
    for t in t_list:
        ens = _simulate(scn, t, n_paths, seed, scheme)
        scale = scale_of_t(t)
        worst = 0.0
        for theta in THETA_GRID:
            w = _ensemble_weights(ens, theta, scale=scale)
            emp = float(w.mean())
            se = float(w.std(ddof=1) / math.sqrt(n_paths))
            target = law.lt(theta)
            rows.append(("t=%g theta=%g" % (t, theta), emp, target, se))
            worst = max(worst, abs(emp - target))
        stats.append(worst)
    rows.append(_trend_row(stats))
    passed = stats[-1] <= threshold and _trend_ok(stats)
    return VerificationVerdict(theorem_id, stats[-1], threshold, passed,
                               rows)


def _verify_crit_l(scn, t_list, n_paths, seed, scheme):
    psi, phi = scn.psi, scn.phi
    _require(psi.b == 0.0, "critical regime (L) theorem needs b = 0")
    _require(psi.kind == "stable",
             "critical (L) check needs a stable branching mechanism (the "
             "renormalization rate comes from its index)")
    report = _classified(psi, phi, scn, "L")
    a, d = psi.alpha, psi.d
    if phi.kind == "stable" and phi.beta_idx == a:
        law_a = phi.d_prime / (a * d)     # exact for the all-stable case
    else:
        law_a = report.a
    law = LimitLaw.vl(a, law_a)

    def scale(t):
        return (a * d * t) ** (-1.0 / a)

    return _lt_verdict("crit_L", scn, t_list, n_paths, seed, scheme, law,
                       scale, LT_THRESHOLD)


def _verify_crit_f(scn, t_list, n_paths, seed, scheme):
    psi, phi = scn.psi, scn.phi
    _require(psi.b == 0.0, "critical regime (F) theorem needs b = 0")
    report = _classified(psi, phi, scn, "F")
    if psi.kind == "stable" and phi.kind == "stable":
        delta = phi.beta_idx / psi.alpha  # exact for the all-stable case
    else:
        delta = report.delta
    law = LimitLaw.vf(delta)

    def scale(t):
        return float(phi.phi_inverse(1.0 / t))

    return _lt_verdict("crit_F", scn, t_list, n_paths, seed, scheme, law,
                       scale, 0.03)


def _verify_subordinator(scn, t_list, n_paths, seed, scheme):
    phi = scn.phi
    _require(phi.kind == "tailspec" and phi.nu_mass is not None
             and math.isfinite(phi.nu_mass) and phi.nu_mass > 0,
             "the subordinator limit needs finite-activity jump "
             "immigration (nu_bar(0+) finite and positive)")
    per_t = []
    for t in t_list:
        ens = simulate_subordinator(phi, t, seed, n_paths)
        x = np.maximum(ens.log_terminal_values, _X_LOG_FLOOR)
        samples = t * np.asarray(phi.phi_log(x), dtype=float)
        per_t.append((t, ks_distance(samples, LimitLaw.exp1())))
    return _ks_verdict("subordinator_exp_limit", per_t, n_paths,
                       KS_THRESHOLD)


_THEOREMS = {
    "main_exp_limit": _verify_main,
    "ratio_corollary": _verify_ratio,
    "noncrit_S": _verify_noncrit_s,
    "noncrit_L": _verify_noncrit_l,
    "noncrit_F": _verify_noncrit_f,
    "crit_L": _verify_crit_l,
    "crit_F": _verify_crit_f,
    "subordinator_exp_limit": _verify_subordinator,
}


def verify_theorem(scenario, theorem_id, t_list, n_paths, seed,
                   scheme=None):
    """Run one registered theorem check and return its verdict.

    scenario needs psi / phi / x0 (and optionally lambda0) attributes.
    The simulation scheme is chosen automatically unless given: exact
    transitions when admissible, chart stepping otherwise.
    """
    fn = _THEOREMS.get(theorem_id)
    if fn is None:
        raise UnsupportedKind(
            "unknown theorem id %r (known: %s)"
            % (theorem_id, ", ".join(sorted(_THEOREMS))))
    ts = sorted(float(t) for t in t_list)
    if not ts:
        raise DomainError("t_list must not be empty")
    if ts[0] <= 0:
        raise DomainError("t_list entries must be positive")
    return fn(scenario, ts, int(n_paths), int(seed), scheme)


# ---------------------------------------------------------------------------
# stationary / proper-limit check (convergent immigration)
# ---------------------------------------------------------------------------

def stationary_check(scenario, t, n_paths, seed, scheme=None,
                     theta_grid=THETA_GRID, lam=None,
                     threshold=LT_THRESHOLD):
    """LT error of Y_t (b >= 0) or v_{-t}(lam) Y_t (b < 0) vs its limit.

    Convergent immigration (integral of Phi/|Psi| finite at 0) makes Y_t
    converge to a proper limit: for b >= 0 the stationary law with
    LT exp(-int_0^lam Phi/Psi); for b < 0 the martingale-limit law W^lam
    observed through the renormalization v_{-t}(lam).
    """
    psi, phi = scenario.psi, scenario.phi
    _require(divergence_test(psi, phi) == "Finite",
             "stationary check needs convergent immigration "
             "(integral of Phi/|Psi| finite at 0)")
    t = float(t)
    x0 = getattr(scenario, "x0", 0.0)
    supercritical = psi.b < 0
    if supercritical:
        rho = criticality(psi).rho
        lam = rho / 2.0 if lam is None else float(lam)
        law = LimitLaw.w_lambda(x0, lam, psi, phi,
                                lambda0=_lambda0(scenario))

        def target(theta):
            return law.lt(theta)

        scale = flow.v_backward(psi, t, lam) if t > 0 else lam
    else:
        def ratio(u):
            return phi.phi(u) / psi.psi(u)

        def target(theta):
            return math.exp(-quadrature.quad_to_zero(ratio, theta))

        scale = 1.0
    if t == 0.0:
        vals = np.full(int(n_paths), float(x0))
        ens = None
    else:
        ens = _simulate(scenario, t, n_paths, seed, scheme)
    rows = []
    worst = 0.0
    for theta in theta_grid:
        theta = float(theta)
        if ens is None:
            emp, se = math.exp(-theta * scale * x0), 0.0
        else:
            w = _ensemble_weights(ens, theta, scale=scale)
            emp = float(w.mean())
            se = float(w.std(ddof=1) / math.sqrt(int(n_paths)))
        tgt = target(theta)
        rows.append(("theta=%g" % theta, emp, tgt, se))
        worst = max(worst, abs(emp - tgt))
    return VerificationVerdict("stationary_check", worst, threshold,
                               worst <= threshold, rows)
