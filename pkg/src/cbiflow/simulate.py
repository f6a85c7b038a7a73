"""Path simulation for CBI processes and subordinators.

Terminal values of the SDE

    dY = (beta0 - b Y) dt + sigma sqrt(Y) dB + branching jumps (pi, compensated)
         + immigration jumps (nu)

are sampled under three schemes:

  ExactQuadratic  one-shot exact transition of the square-root diffusion
                  (noncentral chi-square as Poisson-mixed gamma); requires
                  quadratic branching (no jumps) and linear immigration.
  EulerJump       explicit Euler with jump thinning above eps_trunc,
                  drift compensation of the sampled big jumps and a
                  matched-variance Gaussian for the dropped small ones.
  ChartStable     fixed-coefficient transition stepping: per step the
                  immigration subordinator increment is added exactly,
                  then the branching state advances with its coefficient
                  frozen (exact stable increment for Psi = d q^(1+alpha),
                  exact square-root transition for quadratic Psi).  When
                  branching is deterministic and immigration is compound
                  Poisson the scheme switches to event-driven stepping in
                  log state (exact jump times, exact decay, no dt error,
                  immune to e^(1/U)-sized jumps).

Every path owns an RNG stream derived from (seed, path index), so
ensembles are byte-for-byte reproducible and order-independent.
"""

import collections
import hashlib
import json
import math

import numpy as np
from scipy.special import gamma as gamma_fn

from . import flow
from . import quadrature
from ._rng import (njit, path_state, uniform, exponential, normal, poisson,
                   gamma as gamma_sample, positive_stable)
from .errors import (DomainError, InfiniteActivity, SchemeMismatch,
                     StepInstability)
from .mechanisms import (PiecewiseConstantTail, PointMassTail, criticality)
from .stable import sample_increment, spectral_tables

STEP_FACTOR = 1e6          # per-step growth that triggers StepInstability
DEFAULT_EPS_TRUNC = 1e-4
_GOLDEN64 = np.uint64(0x9E3779B97F4A7C15)
_LOG_MAX = 709.0           # exp() overflows float64 beyond this

_BUILTIN_CODES = {"one_over_log": 0, "c_over_log": 1,
                  "one_over_log_loglog": 2}


# ---------------------------------------------------------------------------
# schemes and config
# ---------------------------------------------------------------------------

class EulerJump:
    """Explicit Euler step with jump thinning above eps_trunc."""

    name = "euler"

    def __init__(self, dt, eps_trunc=DEFAULT_EPS_TRUNC):
        if dt <= 0:
            raise DomainError("EulerJump needs dt > 0")
        if eps_trunc <= 0:
            raise DomainError("EulerJump needs eps_trunc > 0")
        self.dt = float(dt)
        self.eps_trunc = float(eps_trunc)

    def params(self):
        return {"scheme": "euler", "dt": self.dt, "eps_trunc": self.eps_trunc}


class ExactQuadratic:
    """Exact square-root-diffusion transition (no time stepping)."""

    name = "exact"

    def params(self):
        return {"scheme": "exact"}


class ChartStable:
    """Fixed-coefficient transition stepping (exact increment laws)."""

    name = "chart"

    def __init__(self, dt=1e-3):
        if dt <= 0:
            raise DomainError("ChartStable needs dt > 0")
        self.dt = float(dt)

    def params(self):
        return {"scheme": "chart", "dt": self.dt}


def _tail_desc(tail):
    if tail is None:
        return None
    d = {"name": tail.name}
    d.update(tail.params())
    if tail.mass is not None:
        d["mass"] = tail.mass
    return d


class SimConfig:
    """Everything needed to reproduce one ensemble."""

    def __init__(self, psi, phi, x0, horizon, scheme, seed, n_paths):
        if x0 < 0:
            raise DomainError("x0 must be nonnegative")
        if horizon <= 0:
            raise DomainError("horizon must be positive")
        if int(n_paths) < 1:
            raise DomainError("n_paths must be at least 1")
        dt = getattr(scheme, "dt", None)
        if dt is not None and dt > horizon:
            raise DomainError("scheme dt exceeds the horizon")
        self.psi = psi
        self.phi = phi
        self.x0 = float(x0)
        self.horizon = float(horizon)
        self.scheme = scheme
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self.n_paths = int(n_paths)

    def fingerprint(self):
        """16-hex-digit hash of the full configuration."""
        psi, phi = self.psi, self.phi
        desc = {
            "psi": {"kind": psi.kind, "b": psi.b, "sigma": psi.sigma,
                    "d": psi.d, "alpha": psi.alpha,
                    "pi": _tail_desc(psi.pi_tail)},
            "phi": {"kind": phi.kind, "beta0": phi.beta0,
                    "d_prime": phi.d_prime, "beta_idx": phi.beta_idx,
                    "nu": _tail_desc(phi.nu_bar)},
            "x0": self.x0, "horizon": self.horizon,
            "scheme": self.scheme.params(),
            "seed": self.seed, "n_paths": self.n_paths,
        }
        blob = json.dumps(desc, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


class Ensemble:
    """Terminal values of one simulation run.

    log_terminal_values is carried when the sampler works in log state
    (subordinator tails reach e^(1e6), far beyond float64); statistics on
    such ensembles must use the log values.  jump_counts is recorded by
    the subordinator sampler.
    """

    def __init__(self, terminal_values, t, fingerprint, path_seeds,
                 log_terminal_values=None, jump_counts=None):
        self.terminal_values = np.asarray(terminal_values, dtype=float)
        self.t = float(t)
        self.fingerprint = fingerprint
        self.path_seeds = path_seeds
        self.log_terminal_values = log_terminal_values
        self.jump_counts = jump_counts

    def __len__(self):
        return self.terminal_values.size


def _path_seeds(seed, n):
    ks = np.arange(1, n + 1, dtype=np.uint64)
    return np.uint64(seed) ^ (ks * _GOLDEN64)


# ---------------------------------------------------------------------------
# numba device helpers
# ---------------------------------------------------------------------------

@njit(cache=True, inline="always")
def _pick_atom(s, cdf):
    u = uniform(s)
    j = 0
    while cdf[j] < u:
        j += 1
    return j


@njit(cache=True, inline="always")
def _loglog_solve(y, kink):
    """The s >= kink with s*ln(s) = y (Newton; f is convex increasing)."""
    s = y / math.log(y + 3.0)
    if s < kink:
        s = kink
    for _ in range(40):
        sn = (s + y) / (1.0 + math.log(s))
        if abs(sn - s) <= 1e-14 * sn:
            return sn
        s = sn
    return s


@njit(cache=True, inline="always")
def _log_jump_size(s, code, cpar, rate, kink):
    """ln of a jump drawn from a built-in tail conditioned on tail <= rate."""
    u = uniform(s)
    if code == 0:
        return 1.0 / (u * rate)
    if code == 1:
        return cpar / (u * rate)
    return _loglog_solve(1.0 / (u * rate), kink)


# ---------------------------------------------------------------------------
# kernels
# ---------------------------------------------------------------------------

@njit(cache=True)
def _cir_kernel(seed, n, x0, t, b, sig2, beta0):
    """Exact square-root-diffusion transition over [0, t]."""
    out = np.empty(n)
    df_half = 2.0 * beta0 / sig2
    q = math.exp(-b * t)
    if b == 0.0:
        cc = sig2 * t / 4.0
    else:
        cc = sig2 * -math.expm1(-b * t) / (4.0 * b)
    nc_half = x0 * q / (2.0 * cc)
    for k in range(n):
        s = path_state(seed, k)
        if nc_half > 1e12:
            # relative fluctuation < 1e-6; Poisson inversion would
            # overflow int64 long before this matters statistically
            out[k] = 2.0 * cc * (df_half + nc_half)
        else:
            kp = poisson(s, nc_half)
            shape = df_half + kp
            if shape == 0.0:
                out[k] = 0.0
            else:
                out[k] = 2.0 * cc * gamma_sample(s, shape)
    return out


@njit(cache=True)
def _euler_kernel(seed, n, x0, t, dt, b_eff, sig2, drift0,
                  pi_mode, pi_rate, pi_invp, pi_eps, pi_locs, pi_cdf,
                  nu_mode, nu_rate, nu_invp, nu_eps, nu_code, nu_c,
                  nu_kink, nu_locs, nu_cdf):
    nsteps = int(math.ceil(t / dt - 1e-12))
    if nsteps < 1:
        nsteps = 1
    out = np.empty(n)
    flags = np.zeros(n, dtype=np.uint8)
    for k in range(n):
        s = path_state(seed, k)
        y = x0
        bad = False
        for i in range(nsteps):
            h = dt if i + 1 < nsteps else t - dt * (nsteps - 1)
            incr = (drift0 - b_eff * y) * h
            if sig2 > 0.0 and y > 0.0:
                incr += math.sqrt(sig2 * y * h) * normal(s)
            # instability guard on the continuous update only: jump
            # increments are heavy-tailed by design and a huge jump is
            # legitimate dynamics, not a too-large time step
            if not math.isfinite(incr) or abs(incr) > \
                    STEP_FACTOR * max(1.0, y):
                bad = True
                break
            if pi_mode == 1:
                m = pi_rate * y * h
                if m > 0.0:
                    for _ in range(poisson(s, m)):
                        incr += pi_eps * uniform(s) ** -pi_invp
            elif pi_mode == 2:
                m = pi_rate * y * h
                if m > 0.0:
                    for _ in range(poisson(s, m)):
                        incr += pi_locs[_pick_atom(s, pi_cdf)]
            if nu_mode == 1:
                for _ in range(poisson(s, nu_rate * h)):
                    incr += nu_eps * uniform(s) ** -nu_invp
            elif nu_mode == 2:
                for _ in range(poisson(s, nu_rate * h)):
                    incr += nu_locs[_pick_atom(s, nu_cdf)]
            elif nu_mode == 3:
                for _ in range(poisson(s, nu_rate * h)):
                    lnj = _log_jump_size(s, nu_code, nu_c, nu_rate, nu_kink)
                    incr += math.exp(lnj) if lnj < _LOG_MAX else math.inf
            ynew = y + incr
            if ynew < 0.0:
                ynew = 0.0
            if not math.isfinite(ynew):
                bad = True
                break
            y = ynew
        out[k] = y
        flags[k] = 1 if bad else 0
    return out, flags


@njit(cache=True)
def _chart_kernel(seed, n, x0, t, dt, br_mode, b, sig2, dcoef, gbr,
                  bulk, left, right, coef, shift,
                  imm_drift, imm_mode, dprime, beta_idx,
                  nu_mode, nu_rate, nu_code, nu_c, nu_kink,
                  nu_locs, nu_cdf):
    nsteps = int(math.ceil(t / dt - 1e-12))
    if nsteps < 1:
        nsteps = 1
    out = np.empty(n)
    flags = np.zeros(n, dtype=np.uint8)
    for k in range(n):
        s = path_state(seed, k)
        y = x0
        bad = False
        for i in range(nsteps):
            h = dt if i + 1 < nsteps else t - dt * (nsteps - 1)
            # immigration substep (exact subordinator increment)
            y += imm_drift * h
            if imm_mode == 1:
                y += (dprime * h) ** (1.0 / beta_idx) \
                    * positive_stable(s, beta_idx)
            elif imm_mode == 2:
                for _ in range(poisson(s, nu_rate * h)):
                    if nu_mode == 2:
                        y += nu_locs[_pick_atom(s, nu_cdf)]
                    else:
                        lnj = _log_jump_size(s, nu_code, nu_c, nu_rate,
                                             nu_kink)
                        y += math.exp(lnj) if lnj < _LOG_MAX else math.inf
            # branching substep with frozen coefficient
            if br_mode == 0:
                if sig2 == 0.0:
                    y *= math.exp(-b * h)
                else:
                    if b == 0.0:
                        cc = sig2 * h / 4.0
                    else:
                        cc = sig2 * -math.expm1(-b * h) / (4.0 * b)
                    nc_half = y * math.exp(-b * h) / (2.0 * cc)
                    if nc_half > 1e12:
                        # relative fluctuation ~ nc_half^{-1/2} < 1e-6:
                        # below Monte Carlo resolution, and the Poisson
                        # inversion would overflow int64 anyway
                        y = y * math.exp(-b * h)
                    else:
                        kp = poisson(s, nc_half)
                        if kp == 0:
                            y = 0.0
                        else:
                            y = 2.0 * cc * gamma_sample(s, float(kp))
            else:
                if y > 0.0:
                    y += (dcoef * y * h) ** (1.0 / gbr) * sample_increment(
                        s, bulk, left, right, coef, shift, gbr)
                    if y < 0.0:
                        y = 0.0
            # every substep is exact in law, so magnitude alone is never
            # instability here -- only float overflow is
            if not math.isfinite(y):
                bad = True
                break
        out[k] = y
        flags[k] = 1 if bad else 0
    return out, flags


@njit(cache=True)
def _event_kernel(seed, n, lx0, t, b, beta0, rate, code, cpar, kink,
                  log_locs, cdf, use_atoms):
    """Event-driven linear decay + compound-Poisson immigration, in log
    state: L = ln Y survives jumps of size e^(1/U) that overflow floats."""
    out = np.empty(n)
    lout = np.empty(n)
    for k in range(n):
        s = path_state(seed, k)
        ll = lx0
        tau = 0.0
        while True:
            remain = t - tau
            if rate > 0.0:
                wgap = exponential(s) / rate
            else:
                wgap = math.inf
            step = wgap if wgap < remain else remain
            # exact decay/relaxation over `step`
            l1 = ll - b * step
            if beta0 > 0.0 and step > 0.0:
                if b == 0.0:
                    val = beta0 * step
                else:
                    val = beta0 * -math.expm1(-b * step) / b
                l1 = np.logaddexp(l1, math.log(val))
            ll = l1
            if wgap >= remain:
                break
            tau += wgap
            if use_atoms:
                lnj = log_locs[_pick_atom(s, cdf)]
            else:
                lnj = _log_jump_size(s, code, cpar, rate, kink)
            ll = np.logaddexp(ll, lnj)
        lout[k] = ll
        out[k] = math.exp(ll) if ll < _LOG_MAX else math.inf
    return out, lout


@njit(cache=True)
def _subordinator_kernel(seed, n, t, beta0, ldrift, rate, code, cpar, kink,
                         log_locs, cdf, use_atoms):
    out = np.empty(n)
    lout = np.empty(n)
    counts = np.empty(n, dtype=np.int64)
    for k in range(n):
        s = path_state(seed, k)
        kj = poisson(s, rate * t)
        counts[k] = kj
        ll = ldrift
        tot = beta0 * t
        for _ in range(kj):
            if use_atoms:
                lnj = log_locs[_pick_atom(s, cdf)]
            else:
                lnj = _log_jump_size(s, code, cpar, rate, kink)
            ll = np.logaddexp(ll, lnj)
            tot += math.exp(lnj) if lnj < _LOG_MAX else math.inf
        out[k] = tot
        lout[k] = ll
    return out, lout, counts


# ---------------------------------------------------------------------------
# scheme drivers
# ---------------------------------------------------------------------------

_EMPTY = np.empty(0, dtype=np.float64)


def _atoms_of(tail):
    if isinstance(tail, PointMassTail):
        return np.array([tail.z]), np.array([tail.mass])
    return tail.atoms()


def _atom_tables(locs, weights):
    total = float(weights.sum())
    cdf = np.cumsum(weights) / total
    cdf[-1] = 1.0
    return total, np.asarray(locs, dtype=float), cdf


def _quadratic_like(psi):
    return (psi.kind in ("quadratic", "quadratic_logistic")
            or (psi.kind == "stable" and psi.alpha == 1.0)
            or (psi.kind == "general" and psi.pi_tail is None))


def _linear_like(phi):
    """Immigration that is a pure drift (beta = 1 stable included)."""
    return (phi.kind == "linear"
            or (phi.kind == "stable" and phi.beta_idx == 1.0))


def _drift_rate(phi):
    """Deterministic drift rate of the immigration subordinator."""
    return phi.d_prime if phi.kind == "stable" else phi.beta0


def exact_transition_available(psi, phi):
    """True when ExactQuadratic covers the pair (no jumps anywhere)."""
    return _quadratic_like(psi) and _linear_like(phi)


def _raise_unstable(flags):
    bad = np.flatnonzero(flags)
    if bad.size:
        raise StepInstability(
            "a step moved the state by more than a factor %g on %d of %d "
            "paths (first: path %d)"
            % (STEP_FACTOR, bad.size, flags.size, bad[0]))


def _run_exact(cfg):
    psi, phi = cfg.psi, cfg.phi
    if not exact_transition_available(psi, phi):
        raise SchemeMismatch(
            "ExactQuadratic needs quadratic branching without jumps and "
            "linear immigration")
    b, sig2, beta0 = psi.b, psi.sigma ** 2, _drift_rate(phi)
    t, x0, n = cfg.horizon, cfg.x0, cfg.n_paths
    if sig2 == 0.0:
        if b == 0.0:
            y = x0 + beta0 * t
        else:
            y = x0 * math.exp(-b * t) + beta0 * -math.expm1(-b * t) / b
        return np.full(n, max(y, 0.0))
    return _cir_kernel(cfg.seed, n, x0, t, b, sig2, beta0)


def _dropped_tail_mean(tail, eps):
    """integral of z nu(dz) over (0, eps] via the layer-cake identity."""
    head = quadrature.integrate(lambda z: tail.value(z), 0.0, eps,
                                rel_tol=1e-10)
    return head - eps * float(tail.value(eps))


def _imm_params(phi, eps):
    """(drift0, nu_mode, rate, invp, code, c, kink, locs, cdf) for a
    thinned compound-Poisson reading of the immigration mechanism."""
    drift0 = phi.beta0
    nu_mode, rate, invp = 0, 0.0, 0.0
    code, cpar, kink = 0, 1.0, 1.0
    locs, cdf = _EMPTY, _EMPTY
    if phi.kind == "linear":
        pass
    elif phi.kind == "stable":
        bidx = phi.beta_idx
        if bidx == 1.0:
            drift0 = phi.d_prime
        else:
            cnu = phi.d_prime * bidx / gamma_fn(1.0 - bidx)
            nu_mode = 1
            rate = cnu / bidx * eps ** -bidx
            invp = 1.0 / bidx
            drift0 = cnu / (1.0 - bidx) * eps ** (1.0 - bidx)
    else:
        tail = phi.nu_bar
        if isinstance(tail, (PiecewiseConstantTail, PointMassTail)):
            alocs, asizes = _atoms_of(tail)
            big = alocs >= eps
            if np.any(big):
                rate, locs, cdf = _atom_tables(alocs[big], asizes[big])
                nu_mode = 2
            drift0 += float((alocs[~big] * asizes[~big]).sum())
        elif tail.name in _BUILTIN_CODES:
            nu_mode = 3
            rate = float(tail.value(eps))
            code = _BUILTIN_CODES[tail.name]
            cpar = getattr(tail, "c", 1.0)
            kink = tail.log_kinks[0]
            if eps > math.exp(kink):
                drift0 += _dropped_tail_mean(tail, eps)
        else:
            raise SchemeMismatch(
                "EulerJump needs a structured immigration tail (built-in, "
                "table, or point mass)")
    return drift0, nu_mode, rate, invp, code, cpar, kink, locs, cdf


def _run_euler(cfg):
    psi, phi, scheme = cfg.psi, cfg.phi, cfg.scheme
    eps = scheme.eps_trunc
    b, sig2 = psi.b, psi.sigma ** 2
    pi_mode, pi_rate, pi_invp = 0, 0.0, 0.0
    pi_locs, pi_cdf = _EMPTY, _EMPTY
    m1_tail, var_small = 0.0, 0.0
    if psi.kind == "stable" and psi.alpha < 1.0:
        a = psi.alpha
        cpi = psi.d * a * (1.0 + a) / gamma_fn(1.0 - a)
        pi_mode = 1
        pi_rate = cpi / (1.0 + a) * eps ** -(1.0 + a)
        pi_invp = 1.0 / (1.0 + a)
        m1_tail = cpi / a * eps ** -a
        var_small = cpi / (1.0 - a) * eps ** (1.0 - a)
    elif psi.kind == "general" and psi.pi_tail is not None:
        tail = psi.pi_tail
        if not isinstance(tail, (PiecewiseConstantTail, PointMassTail)):
            raise SchemeMismatch(
                "EulerJump needs a structured branching jump tail (stable, "
                "table, or point mass)")
        alocs, asizes = _atoms_of(tail)
        big = alocs >= eps
        if np.any(big):
            pi_rate, pi_locs, pi_cdf = _atom_tables(alocs[big], asizes[big])
            pi_mode = 2
        m1_tail = float((alocs[big] * asizes[big]).sum())
        var_small = float((alocs[~big] ** 2 * asizes[~big]).sum())
    (drift0, nu_mode, nu_rate, nu_invp, nu_code, nu_c, nu_kink,
     nu_locs, nu_cdf) = _imm_params(phi, eps)
    return _euler_kernel(
        cfg.seed, cfg.n_paths, cfg.x0, cfg.horizon, scheme.dt,
        b + m1_tail, sig2 + var_small, drift0,
        pi_mode, pi_rate, pi_invp, eps, pi_locs, pi_cdf,
        nu_mode, nu_rate, nu_invp, eps, nu_code, nu_c, nu_kink,
        nu_locs, nu_cdf)


def _event_eligible(cfg):
    psi, phi = cfg.psi, cfg.phi
    branch_det = (psi.kind in ("quadratic", "general")
                  and psi.sigma == 0.0 and psi.pi_tail is None)
    if not branch_det:
        return False
    if _linear_like(phi):
        return True
    if phi.kind != "tailspec" or phi.nu_mass is None \
            or not math.isfinite(phi.nu_mass):
        return False
    tail = phi.nu_bar
    return (isinstance(tail, (PiecewiseConstantTail, PointMassTail))
            or tail.name in _BUILTIN_CODES)


def _run_event(cfg):
    psi, phi = cfg.psi, cfg.phi
    rate, code, cpar, kink = 0.0, 0, 1.0, 1.0
    log_locs, cdf, use_atoms = _EMPTY, _EMPTY, False
    if phi.kind == "tailspec":
        tail = phi.nu_bar
        if isinstance(tail, (PiecewiseConstantTail, PointMassTail)):
            alocs, asizes = _atoms_of(tail)
            rate, locs, cdf = _atom_tables(alocs, asizes)
            log_locs = np.log(locs)
            use_atoms = True
        else:
            rate = float(tail.mass)
            code = _BUILTIN_CODES[tail.name]
            cpar = getattr(tail, "c", 1.0)
            kink = tail.log_kinks[0]
    lx0 = math.log(cfg.x0) if cfg.x0 > 0 else -math.inf
    return _event_kernel(cfg.seed, cfg.n_paths, lx0, cfg.horizon, psi.b,
                         _drift_rate(phi), rate, code, cpar, kink, log_locs,
                         cdf, use_atoms)


def _run_chart(cfg):
    psi, phi, scheme = cfg.psi, cfg.phi, cfg.scheme
    if _event_eligible(cfg):
        vals, logs = _run_event(cfg)
        return vals, logs, np.zeros(cfg.n_paths, dtype=np.uint8)
    br_mode, dcoef, gbr = 0, 0.0, 1.5
    bulk = left = right = _EMPTY
    coef = shift = 0.0
    b, sig2 = psi.b, psi.sigma ** 2
    if psi.kind == "stable" and psi.alpha < 1.0:
        br_mode = 1
        dcoef, gbr = psi.d, 1.0 + psi.alpha
        tables = spectral_tables(gbr)
        bulk, left, right, coef, shift, gbr = tables.pack()
        b = 0.0
    elif not _quadratic_like(psi):
        raise SchemeMismatch(
            "ChartStable needs stable or quadratic branching (general jump "
            "tails are not supported)")
    imm_drift, imm_mode, dprime, beta_idx = phi.beta0, 0, 1.0, 0.5
    nu_mode, nu_rate = 0, 0.0
    nu_code, nu_c, nu_kink = 0, 1.0, 1.0
    nu_locs, nu_cdf = _EMPTY, _EMPTY
    if phi.kind == "stable":
        if phi.beta_idx == 1.0:
            imm_drift = phi.d_prime
        else:
            imm_mode, imm_drift = 1, 0.0
            dprime, beta_idx = phi.d_prime, phi.beta_idx
    elif phi.kind == "tailspec":
        tail = phi.nu_bar
        if phi.nu_mass is None or not math.isfinite(phi.nu_mass):
            raise SchemeMismatch(
                "ChartStable immigration needs a finite jump rate")
        imm_mode = 2
        if isinstance(tail, (PiecewiseConstantTail, PointMassTail)):
            alocs, asizes = _atoms_of(tail)
            nu_rate, nu_locs, nu_cdf = _atom_tables(alocs, asizes)
            nu_mode = 2
        elif tail.name in _BUILTIN_CODES:
            nu_mode = 3
            nu_rate = float(tail.mass)
            nu_code = _BUILTIN_CODES[tail.name]
            nu_c = getattr(tail, "c", 1.0)
            nu_kink = tail.log_kinks[0]
        else:
            raise SchemeMismatch(
                "ChartStable needs a structured immigration tail")
    vals, flags = _chart_kernel(
        cfg.seed, cfg.n_paths, cfg.x0, cfg.horizon, scheme.dt,
        br_mode, b, sig2, dcoef, gbr, bulk, left, right, coef, shift,
        imm_drift, imm_mode, dprime, beta_idx,
        nu_mode, nu_rate, nu_code, nu_c, nu_kink, nu_locs, nu_cdf)
    return vals, None, flags


# ---------------------------------------------------------------------------
# spec operations
# ---------------------------------------------------------------------------

def simulate_ensemble(cfg):
    """n_paths independent samples of Y_horizon under cfg's scheme."""
    psi, phi = cfg.psi, cfg.phi
    fp = cfg.fingerprint()
    seeds = _path_seeds(cfg.seed, cfg.n_paths)
    if psi.is_zero and _linear_like(phi):
        # pure deterministic drift: exact under every scheme
        vals = np.full(cfg.n_paths, cfg.x0 + _drift_rate(phi) * cfg.horizon)
        return Ensemble(vals, cfg.horizon, fp, seeds)
    if isinstance(cfg.scheme, ExactQuadratic):
        return Ensemble(_run_exact(cfg), cfg.horizon, fp, seeds)
    if isinstance(cfg.scheme, EulerJump):
        vals, flags = _run_euler(cfg)
        _raise_unstable(flags)
        return Ensemble(vals, cfg.horizon, fp, seeds)
    if isinstance(cfg.scheme, ChartStable):
        vals, logs, flags = _run_chart(cfg)
        _raise_unstable(flags)
        return Ensemble(vals, cfg.horizon, fp, seeds,
                        log_terminal_values=logs)
    raise SchemeMismatch("unknown scheme %r" % (cfg.scheme,))


def simulate_subordinator(phi, horizon, seed, n_paths):
    """Exact compound-Poisson sampling of the immigration subordinator."""
    if horizon <= 0:
        raise DomainError("horizon must be positive")
    if int(n_paths) < 1:
        raise DomainError("n_paths must be at least 1")
    seed = int(seed) & 0xFFFFFFFFFFFFFFFF
    n = int(n_paths)
    seeds = _path_seeds(seed, n)
    desc = {"phi": {"kind": phi.kind, "beta0": phi.beta0,
                    "d_prime": phi.d_prime, "beta_idx": phi.beta_idx,
                    "nu": _tail_desc(phi.nu_bar)},
            "horizon": float(horizon), "seed": seed, "n_paths": n,
            "sampler": "subordinator"}
    fp = hashlib.sha256(json.dumps(desc, sort_keys=True).encode()) \
        .hexdigest()[:16]
    if phi.kind == "stable":
        if phi.beta_idx < 1.0:
            raise InfiniteActivity(
                "stable immigration with beta < 1 has an infinite jump "
                "rate; exact compound-Poisson sampling needs nu_bar(0+) "
                "finite")
        vals = np.full(n, phi.d_prime * float(horizon))
        return Ensemble(vals, horizon, fp, seeds,
                        log_terminal_values=np.log(np.maximum(vals, 1e-300)),
                        jump_counts=np.zeros(n, dtype=np.int64))
    rate, code, cpar, kink = 0.0, 0, 1.0, 1.0
    log_locs, cdf, use_atoms = _EMPTY, _EMPTY, False
    if phi.kind == "tailspec":
        if phi.nu_mass is None or not math.isfinite(phi.nu_mass):
            raise InfiniteActivity(
                "exact subordinator sampling needs nu_bar(0+) finite")
        tail = phi.nu_bar
        if isinstance(tail, (PiecewiseConstantTail, PointMassTail)):
            alocs, asizes = _atoms_of(tail)
            rate, locs, cdf = _atom_tables(alocs, asizes)
            log_locs = np.log(locs)
            use_atoms = True
        elif tail.name in _BUILTIN_CODES:
            rate = float(tail.mass)
            code = _BUILTIN_CODES[tail.name]
            cpar = getattr(tail, "c", 1.0)
            kink = tail.log_kinks[0]
        else:
            raise SchemeMismatch(
                "subordinator sampling needs a built-in, table, or point "
                "mass tail")
    beta0 = phi.beta0
    ldrift = math.log(beta0 * horizon) if beta0 * horizon > 0 else -math.inf
    vals, logs, counts = _subordinator_kernel(
        seed, n, float(horizon), beta0, ldrift, rate, code, cpar, kink,
        log_locs, cdf, use_atoms)
    return Ensemble(vals, horizon, fp, seeds, log_terminal_values=logs,
                    jump_counts=counts)


MartingalePoint = collections.namedtuple(
    "MartingalePoint", ["t", "mean", "stderr", "ci_low", "ci_high"])


def martingale_check(cfg, lam, times):
    """Monte Carlo means of M_t = kappa(t) exp(-v_{-t}(lam) Y_t).

    For a supercritical mechanism and lam below the largest root, M_t is a
    martingale with mean exp(-lam x0) at every t.  kappa is finite at each
    finite t regardless of the immigration divergence class; the
    convergent-immigration hypothesis matters only for the t -> oo limit.
    """
    psi, phi = cfg.psi, cfg.phi
    if psi.b >= 0:
        raise DomainError("martingale check needs a supercritical "
                          "branching mechanism (b < 0)")
    rho = criticality(psi).rho
    if not (0.0 < lam < rho):
        raise DomainError("lambda must lie in (0, rho)")

    def ratio(u):
        return phi.phi(u) / psi.psi(u)

    out = []
    for t in times:
        if t == 0:
            m0 = math.exp(-lam * cfg.x0)
            out.append(MartingalePoint(0.0, m0, 0.0, m0, m0))
            continue
        vbt = flow.v_backward(psi, t, lam)
        # kappa = exp(int_lam^{v_{-t}} Phi/Psi) with v_{-t} < lam
        val = quadrature.integrate_log(ratio, vbt, lam, rel_tol=1e-10)
        kappa = math.exp(-val)
        sub = SimConfig(psi, phi, cfg.x0, t, cfg.scheme, cfg.seed,
                        cfg.n_paths)
        ens = simulate_ensemble(sub)
        m = kappa * np.exp(-vbt * ens.terminal_values)
        mean = float(m.mean())
        se = float(m.std(ddof=1) / math.sqrt(len(ens)))
        out.append(MartingalePoint(float(t), mean, se, mean - 1.96 * se,
                                   mean + 1.96 * se))
    return out
