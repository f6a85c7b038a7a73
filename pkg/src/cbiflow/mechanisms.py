"""Branching and immigration mechanisms.

A branching mechanism is the convex function

    Psi(q) = b*q + (sigma^2/2)*q^2 + integral (e^{-qu} - 1 + qu) pi(du)

with drift b = Psi'(0+), and an immigration mechanism is the concave function

    Phi(q) = beta0*q + integral (1 - e^{-qt}) nu(dt).

Jump measures enter only through their right tails pi((u, inf)) and
nu([t, inf)); all integrals are rewritten against the tails by parts:

    jump part of Psi(q)  = q * integral_0^inf (1 - e^{-qu}) pi_bar(u) du
    jump part of Phi(q)  = q * integral_0^inf e^{-qt} nu_bar(t) dt

Evaluation of Phi at q = e^{-x} for huge x (needed by the divergence-regime
machinery) substitutes t = e^{u+x}, which turns the integral into a fixed
window against the kernel exp(u - e^u) and never forms e^x.
"""

import math

import numpy as np
from scipy.optimize import brentq

from . import quadrature as quad
from .errors import (DomainError, InconclusiveQuadrature, QuadratureFailure,
                     RootBracketFailure, UnsupportedKind)

# Search window and bisection depth for the largest root of Psi.
RHO_WINDOW = (1e-10, 1e6)
RHO_BISECTIONS = 200

# Window in u for the kernel exp(u - e^u); the kernel mass outside it is
# below 1e-20 on both sides.  Integrals against shifted tails extend the
# window blockwise on the left until the contribution is negligible.
_KERNEL_LO = -46.0
_KERNEL_HI = 6.0

# s1 solves s*ln(s) = 1; switch point of the 1/(ln t * ln ln t) tail.
_S1 = brentq(lambda s: s * math.log(s) - 1.0, 1.0, 2.0, xtol=1e-15)


def _composite_rule(npanels, order):
    """Composite Gauss-Legendre rule on [0, 1]: nodes and weights."""
    gx, gw = quad._nodes(order)
    edges = np.linspace(0.0, 1.0, npanels + 1)
    mid = 0.5 * (edges[1:] + edges[:-1])
    half = 0.5 * np.diff(edges)
    x = (mid[:, None] + half[:, None] * gx[None, :]).ravel()
    w = (half[:, None] * gw[None, :]).ravel()
    return x, w


_CORE_RULE = _composite_rule(64, 12)
_EXT_RULE = _composite_rule(8, 12)
_EXT_WIDTH = 2.0
_CHUNK = 2048


def _shifted_kernel_integral(kernel, fn_log, shifts, kinks,
                             core_lo, core_hi, extend_right=False,
                             rel_tol=1e-10, floor_pad=750.0):
    """integral over r of kernel(r) * fn_log(r - shift), elementwise in
    shifts.

    kernel is vectorized, nonnegative, and decays at least like e^r as
    r -> -inf; fn_log is a nonnegative shifted factor whose formula may
    switch at the given kink locations (panel edges are placed on every
    r = kink + shift so no panel straddles a switch).  The core window is
    extended blockwise to the left -- and to the right when requested --
    until a block contributes negligibly after having peaked.
    """
    shifts = np.atleast_1d(np.asarray(shifts, dtype=float))
    n = shifts.shape[0]
    ks = sorted(kinks)
    out = np.empty(n)
    span = np.max(np.abs(shifts)) + floor_pad if n else floor_pad
    # the integrand's mass sits near r = shift (argument of order 1);
    # an element that has contributed nothing yet is not allowed to stop
    # before the window has moved past its shift
    pad = 50.0 + max((abs(k) for k in ks), default=0.0)
    for start in range(0, n, _CHUNK):
        sl = shifts[start:start + _CHUNK]
        m = sl.shape[0]

        def block(lo, hi, rule):
            rx, rw = rule
            cuts = [np.clip(k + sl, lo, hi) for k in ks]
            bounds = [np.full(m, lo)] + cuts + [np.full(m, hi)]
            tot = np.zeros(m)
            for a, b in zip(bounds[:-1], bounds[1:]):
                w = b - a
                live = w > 0
                if not np.any(live):
                    continue
                r = a[live, None] + w[live, None] * rx[None, :]
                vals = kernel(r) * fn_log(r - sl[live, None])
                tot[live] += (vals @ rw) * w[live]
            return tot

        total = block(core_lo, core_hi, _CORE_RULE)
        for direction in (-1, 1) if extend_right else (-1,):
            prev = np.full(m, np.inf)
            edge = core_lo if direction < 0 else core_hi
            while abs(edge) < span + abs(core_lo) + abs(core_hi):
                lo = edge - _EXT_WIDTH if direction < 0 else edge
                hi = edge if direction < 0 else edge + _EXT_WIDTH
                c = block(lo, hi, _EXT_RULE)
                total += c
                past = lo < sl - pad if direction < 0 else hi > sl + pad
                done = (c <= prev) & \
                    (c <= rel_tol * np.maximum(total, 1e-300)) & \
                    ((total > 0.0) | past)
                if np.all(done):
                    break
                prev = c
                edge = lo if direction < 0 else hi
            else:
                raise QuadratureFailure(
                    "shifted-kernel window failed to close",
                    partial=total)
        out[start:start + _CHUNK] = total
    return out


# ---------------------------------------------------------------------------
# tail functions
# ---------------------------------------------------------------------------

class Tail:
    """Nonincreasing right tail of a measure on (0, inf).

    value(t) is the tail at t; value_log(s) is the tail at e^s for s far
    beyond float range.  log_kinks lists s-locations where the formula
    switches (used to split quadrature panels).  mass is the total mass
    when finite, else None.
    """

    name = "custom"
    mass = None
    log_kinks = ()

    def value(self, t):
        raise NotImplementedError

    def value_log(self, s):
        s = np.asarray(s, dtype=float)
        if np.any(s > 700.0):
            raise UnsupportedKind(
                "tail %r has no log-argument form for huge arguments"
                % self.name)
        return self.value(np.exp(s))

    def params(self):
        return {}


class OneOverLogTail(Tail):
    """Tail 1 for t <= e, 1/ln(t) beyond; total mass 1."""

    name = "one_over_log"
    mass = 1.0
    log_kinks = (1.0,)

    def value(self, t):
        t = np.asarray(t, dtype=float)
        return self.value_log(np.log(np.maximum(t, 1e-300)))

    def value_log(self, s):
        s = np.asarray(s, dtype=float)
        return np.where(s <= 1.0, 1.0, 1.0 / np.maximum(s, 1.0))


class COverLogTail(Tail):
    """Tail 1 for t <= e^c, c/ln(t) beyond; total mass 1."""

    name = "c_over_log"
    mass = 1.0

    def __init__(self, c):
        if c <= 0:
            raise DomainError("c_over_log needs c > 0")
        self.c = float(c)
        self.log_kinks = (self.c,)

    def value(self, t):
        t = np.asarray(t, dtype=float)
        return self.value_log(np.log(np.maximum(t, 1e-300)))

    def value_log(self, s):
        s = np.asarray(s, dtype=float)
        return np.where(s <= self.c, 1.0, self.c / np.maximum(s, self.c))

    def params(self):
        return {"c": self.c}


class OneOverLogLogLogTail(Tail):
    """Tail 1 up to the point where ln(t)*ln(ln(t)) reaches 1, then
    1/(ln(t)*ln(ln(t))); total mass 1."""

    name = "one_over_log_loglog"
    mass = 1.0
    log_kinks = (_S1,)

    def value(self, t):
        t = np.asarray(t, dtype=float)
        return self.value_log(np.log(np.maximum(t, 1e-300)))

    def value_log(self, s):
        s = np.asarray(s, dtype=float)
        ss = np.maximum(s, _S1)
        return np.where(s <= _S1, 1.0, 1.0 / (ss * np.log(ss)))


class PiecewiseConstantTail(Tail):
    """Tail given by a table [(x_i, value at x_i)], x increasing.

    The tail equals v_1 on (0, x_1], v_i on [x_i, x_{i+1}), and must end at
    0 (finite support).  The measure consists of atoms at x_2..x_n of sizes
    v_{i-1} - v_i.
    """

    name = "table"

    def __init__(self, points):
        pts = [(float(x), float(v)) for x, v in points]
        if not pts:
            raise DomainError("empty tail table")
        xs = np.array([p[0] for p in pts])
        vs = np.array([p[1] for p in pts])
        if np.any(xs <= 0) or np.any(np.diff(xs) <= 0):
            raise DomainError("tail table abscissae must be positive and "
                              "strictly increasing")
        if np.any(vs < 0) or np.any(np.diff(vs) > 0):
            raise DomainError("tail table values must be nonnegative and "
                              "nonincreasing")
        if vs[-1] != 0.0:
            raise DomainError("tail table must end at value 0")
        self.xs = xs
        self.vs = vs
        self.mass = float(vs[0])
        self.log_kinks = tuple(np.log(xs))

    def value(self, t):
        t = np.asarray(t, dtype=float)
        idx = np.searchsorted(self.xs, t, side="right")
        vals = np.concatenate(([self.vs[0]], self.vs))
        return vals[idx]

    def value_log(self, s):
        s = np.asarray(s, dtype=float)
        idx = np.searchsorted(np.log(self.xs), s, side="right")
        vals = np.concatenate(([self.vs[0]], self.vs))
        return vals[idx]

    def atoms(self):
        """Atom locations and sizes (x_2.., v_{i-1} - v_i)."""
        locs = self.xs[1:]
        sizes = -np.diff(self.vs)
        keep = sizes > 0
        return locs[keep], sizes[keep]

    def params(self):
        return {"points": [[float(x), float(v)]
                           for x, v in zip(self.xs, self.vs)]}


class PointMassTail(Tail):
    """Tail of mass * delta_z: equals mass below z, 0 from z on."""

    name = "point_mass"

    def __init__(self, z, mass):
        if z <= 0 or mass <= 0:
            raise DomainError("point mass needs z > 0 and mass > 0")
        self.z = float(z)
        self.mass = float(mass)
        self.log_kinks = (math.log(z),)

    def value(self, t):
        t = np.asarray(t, dtype=float)
        return np.where(t < self.z, self.mass, 0.0)

    def value_log(self, s):
        s = np.asarray(s, dtype=float)
        return np.where(s < math.log(self.z), self.mass, 0.0)

    def params(self):
        return {"z": self.z, "mass": self.mass}


class CustomTail(Tail):
    """Wrap a user-supplied vectorized tail function.

    fn_log(s) should return the tail at e^s; without it, operations that
    need arguments beyond float range raise UnsupportedKind.
    """

    def __init__(self, fn, fn_log=None, mass=None, log_kinks=()):
        self.fn = fn
        self.fn_log = fn_log
        self.mass = mass
        self.log_kinks = tuple(log_kinks)

    def value(self, t):
        return np.asarray(self.fn(np.asarray(t, dtype=float)), dtype=float)

    def value_log(self, s):
        s = np.asarray(s, dtype=float)
        if self.fn_log is not None:
            return np.asarray(self.fn_log(s), dtype=float)
        return super().value_log(s)


BUILTIN_TAILS = ("one_over_log", "c_over_log", "one_over_log_loglog")


def make_builtin_tail(name, c=None):
    if name == "one_over_log":
        return OneOverLogTail()
    if name == "c_over_log":
        return COverLogTail(c if c is not None else 1.0)
    if name == "one_over_log_loglog":
        return OneOverLogLogLogTail()
    raise DomainError("unknown built-in tail %r" % (name,))


# ---------------------------------------------------------------------------
# branching mechanism
# ---------------------------------------------------------------------------

class BranchingMechanism:
    """Branching mechanism; build via the stable/quadratic/
    quadratic_logistic/general classmethods."""

    def __init__(self, kind, b, sigma, d=None, alpha=None, pi_tail=None):
        self.kind = kind
        self.b = float(b)
        self.sigma = float(sigma)
        self.d = d
        self.alpha = alpha
        self.pi_tail = pi_tail

    @classmethod
    def stable(cls, d=1.0, alpha=0.5):
        """Psi(q) = d * q^(1+alpha), alpha in (0, 1]; critical (b = 0)."""
        if not (0.0 < alpha <= 1.0):
            raise DomainError("stable branching index must be in (0, 1]")
        if d <= 0:
            raise DomainError("stable branching scale must be positive")
        return cls("stable", 0.0, math.sqrt(2.0 * d) if alpha == 1.0 else 0.0,
                   d=float(d), alpha=float(alpha))

    @classmethod
    def quadratic(cls, b=0.0, sigma=0.0):
        """Psi(q) = b*q + (sigma^2/2)*q^2."""
        if sigma < 0:
            raise DomainError("sigma must be nonnegative")
        return cls("quadratic", b, sigma)

    @classmethod
    def quadratic_logistic(cls):
        """Psi(q) = q^2 - q."""
        return cls("quadratic_logistic", -1.0, math.sqrt(2.0))

    @classmethod
    def general(cls, b=0.0, sigma=0.0, pi_tail=None):
        """Psi from (b, sigma, pi) with pi given by its right tail."""
        if sigma < 0:
            raise DomainError("sigma must be nonnegative")
        if pi_tail is not None and not isinstance(pi_tail, Tail):
            pi_tail = CustomTail(pi_tail)
        return cls("general", b, sigma, pi_tail=pi_tail)

    # -- evaluation ---------------------------------------------------------

    @property
    def is_zero(self):
        """True when Psi vanishes identically (pure-immigration process)."""
        return (self.kind == "quadratic" and self.b == 0.0
                and self.sigma == 0.0)

    def psi(self, q):
        q = np.asarray(q, dtype=float)
        if np.any(q < 0):
            raise DomainError("psi is defined for q >= 0")
        if self.kind == "stable":
            return self.d * q ** (1.0 + self.alpha)
        if self.kind == "quadratic_logistic":
            return q * q - q
        base = self.b * q + 0.5 * self.sigma ** 2 * q * q
        if self.kind == "quadratic" or self.pi_tail is None:
            return base
        return base + self._jump_part(q)

    def psi_prime(self, q):
        q = np.asarray(q, dtype=float)
        if self.kind == "stable":
            return self.d * (1.0 + self.alpha) * q ** self.alpha
        if self.kind == "quadratic_logistic":
            return 2.0 * q - 1.0
        base = self.b + self.sigma ** 2 * q
        if self.kind == "quadratic" or self.pi_tail is None:
            return base
        return base + self._jump_prime_part(q)

    # After substituting u = e^{r - ln q} the jump integral becomes
    #   integral e^r (1 - e^{-e^r}) pi_bar(e^{r - ln q}) dr
    # and its derivative in q gets the kernel e^r(1-e^{-e^r}) + e^{2r}e^{-e^r}
    # divided by q; both are handled by the shifted-kernel engine.

    @staticmethod
    def _em1p(x):
        """e^{-x} - 1 + x without cancellation for small x >= 0."""
        x = np.asarray(x, dtype=float)
        xs = np.where(x < 1e-4, x, 0.0)
        series = xs * xs * (0.5 - xs / 6.0 + xs * xs / 24.0)
        return np.where(x < 1e-4, series, np.expm1(-x) + x)

    @staticmethod
    def _k_jump(r):
        er = np.exp(np.minimum(r, 705.0))
        return er * -np.expm1(-er)

    @staticmethod
    def _k_jump_prime(r):
        er = np.exp(np.minimum(r, 705.0))
        second = np.where(r < 30.0, er * er * np.exp(-er), 0.0)
        return er * -np.expm1(-er) + second

    def _jump_part(self, q):
        """q * integral (1 - e^{-qu}) pi_bar(u) du, elementwise in q."""
        tail = self.pi_tail
        if tail is None:
            return np.zeros_like(np.asarray(q, dtype=float))
        if isinstance(tail, PointMassTail):
            return tail.mass * self._em1p(q * tail.z)
        if isinstance(tail, PiecewiseConstantTail):
            locs, sizes = tail.atoms()
            qz = np.multiply.outer(q, locs)
            return (sizes * self._em1p(qz)).sum(axis=-1)
        scalar = np.ndim(q) == 0
        qs = np.atleast_1d(np.asarray(q, dtype=float))
        out = np.zeros_like(qs)
        pos = qs > 0
        if np.any(pos):
            out[pos] = _shifted_kernel_integral(
                self._k_jump, tail.value_log, np.log(qs[pos]),
                tail.log_kinks, -40.0, 8.0, extend_right=True)
        return out[0] if scalar else out

    def _jump_prime_part(self, q):
        """integral [(1 - e^{-qu}) + q u e^{-qu}] pi_bar(u) du."""
        tail = self.pi_tail
        if tail is None:
            return np.zeros_like(np.asarray(q, dtype=float))
        if isinstance(tail, PointMassTail):
            return tail.mass * tail.z * -np.expm1(-q * tail.z)
        if isinstance(tail, PiecewiseConstantTail):
            locs, sizes = tail.atoms()
            qz = np.multiply.outer(q, locs)
            return (sizes * locs * -np.expm1(-qz)).sum(axis=-1)
        scalar = np.ndim(q) == 0
        qs = np.atleast_1d(np.asarray(q, dtype=float))
        out = np.zeros_like(qs)
        pos = qs > 0
        if np.any(pos):
            out[pos] = _shifted_kernel_integral(
                self._k_jump_prime, tail.value_log, np.log(qs[pos]),
                tail.log_kinks, -40.0, 8.0, extend_right=True) / qs[pos]
        return out[0] if scalar else out


# ---------------------------------------------------------------------------
# immigration mechanism
# ---------------------------------------------------------------------------

class ImmigrationMechanism:
    """Immigration mechanism; build via stable/linear/tailspec."""

    def __init__(self, kind, beta0, d_prime=None, beta_idx=None, nu_bar=None,
                 nu_mass=None):
        self.kind = kind
        self.beta0 = float(beta0)
        self.d_prime = d_prime
        self.beta_idx = beta_idx
        self.nu_bar = nu_bar
        self.nu_mass = nu_mass

    @classmethod
    def stable(cls, d_prime=1.0, beta_idx=0.5):
        """Phi(q) = d' * q^beta, beta in (0, 1]."""
        if not (0.0 < beta_idx <= 1.0):
            raise DomainError("stable immigration index must be in (0, 1]")
        if d_prime <= 0:
            raise DomainError("stable immigration scale must be positive")
        return cls("stable", 0.0, d_prime=float(d_prime),
                   beta_idx=float(beta_idx))

    @classmethod
    def linear(cls, beta0=1.0):
        """Phi(q) = beta0 * q (pure drift)."""
        if beta0 < 0:
            raise DomainError("beta0 must be nonnegative")
        return cls("linear", beta0)

    @classmethod
    def tailspec(cls, beta0=0.0, nu_bar=None, nu_mass=None):
        """Phi from drift beta0 and jump tail nu_bar."""
        if beta0 < 0:
            raise DomainError("beta0 must be nonnegative")
        if nu_bar is None:
            raise DomainError("tailspec needs a tail function")
        if not isinstance(nu_bar, Tail):
            nu_bar = CustomTail(nu_bar, mass=nu_mass)
        if nu_mass is None:
            nu_mass = nu_bar.mass
        return cls("tailspec", beta0, nu_bar=nu_bar, nu_mass=nu_mass)

    @classmethod
    def zero(cls):
        """Phi identically 0 (no immigration)."""
        return cls("linear", 0.0)

    # -- evaluation ---------------------------------------------------------

    @property
    def is_zero(self):
        return self.kind == "linear" and self.beta0 == 0.0

    @property
    def strictly_positive(self):
        """Phi(q) > 0 for q > 0."""
        if self.kind == "stable":
            return True
        if self.kind == "linear":
            return self.beta0 > 0
        has_jumps = not (self.nu_mass == 0.0)
        return self.beta0 > 0 or has_jumps

    def phi(self, q):
        q = np.asarray(q, dtype=float)
        if np.any(q < 0):
            raise DomainError("phi is defined for q >= 0")
        if self.kind == "stable":
            return self.d_prime * q ** self.beta_idx
        if self.kind == "linear":
            return self.beta0 * q
        out = self.beta0 * q + self._jump(q)
        return out

    def phi_log(self, x):
        """Phi(e^{-x}), stable for x far beyond float range."""
        x = np.asarray(x, dtype=float)
        if self.kind == "stable":
            return self.d_prime * np.exp(-self.beta_idx * x)
        # beta0 == 0 must short-circuit: 0 * exp(-x) is nan once exp
        # overflows (x < -709), and the jump part alone is the answer
        if self.kind == "linear":
            if self.beta0 == 0.0:
                return np.zeros_like(x)
            return self.beta0 * np.exp(-x)
        if self.beta0 == 0.0:
            return self._jump_log(x)
        return self.beta0 * np.exp(-x) + self._jump_log(x)

    def _jump(self, q):
        """q * integral e^{-qt} nu_bar(t) dt  (= Phi(q) - beta0*q)."""
        tail = self.nu_bar
        if isinstance(tail, PiecewiseConstantTail):
            locs, sizes = tail.atoms()
            qz = np.multiply.outer(q, locs)
            return (sizes * -np.expm1(-qz)).sum(axis=-1)
        with np.errstate(divide="ignore"):
            x = np.where(q > 0, -np.log(np.maximum(q, 1e-300)), 0.0)
        out = np.where(q > 0, self._jump_log(x), 0.0)
        return out

    @staticmethod
    def _k_imm(u):
        return np.exp(u - np.exp(u))

    def _jump_log(self, x):
        """Jump part of Phi at q = e^{-x}: with t = e^{u+x} the integral
        q * int e^{-qt} nu_bar(t) dt becomes int e^{u-e^u} nu_bar(e^{u+x}) du.
        """
        tail = self.nu_bar
        x = np.asarray(x, dtype=float)
        if isinstance(tail, PiecewiseConstantTail):
            locs, sizes = tail.atoms()
            qz = np.multiply.outer(np.exp(-x), locs)
            return (sizes * -np.expm1(-qz)).sum(axis=-1)
        scalar = np.ndim(x) == 0
        xs = np.atleast_1d(x)
        out = _shifted_kernel_integral(
            self._k_imm, tail.value_log, -xs, tail.log_kinks,
            _KERNEL_LO, _KERNEL_HI)
        return out[0] if scalar else out

    def phi_inverse(self, y):
        """The q with Phi(q) = y, for y in the range of Phi."""
        if y <= 0:
            raise DomainError("phi_inverse needs y > 0")
        if self.kind == "stable":
            return (y / self.d_prime) ** (1.0 / self.beta_idx)
        if self.kind == "linear":
            if self.beta0 == 0:
                raise DomainError("phi is identically zero")
            return y / self.beta0
        hi = 1.0
        while float(self.phi(hi)) < y:
            hi *= 4.0
            if hi > 1e300:
                raise DomainError("y above the range of phi")
        root = brentq(lambda lq: float(self.phi(math.exp(lq))) - y,
                      math.log(1e-300), math.log(hi), xtol=1e-13,
                      rtol=8.9e-16)
        return math.exp(root)


# ---------------------------------------------------------------------------
# spec operations
# ---------------------------------------------------------------------------

class Criticality:
    """Criticality tag plus the largest root of Psi."""

    def __init__(self, tag, rho):
        self.tag = tag
        self.rho = rho

    def __repr__(self):
        return "Criticality(%r, rho=%g)" % (self.tag, self.rho)

    def __eq__(self, other):
        return (isinstance(other, Criticality) and self.tag == other.tag
                and self.rho == other.rho)


def psi_eval(mech, q):
    """Evaluate the branching mechanism at q >= 0."""
    return mech.psi(q)


def phi_eval(mech, q):
    """Evaluate the immigration mechanism at q >= 0."""
    return mech.phi(q)


def criticality(mech):
    """Criticality tag from the sign of b, plus the largest root of Psi."""
    b = mech.b
    if b > 0:
        return Criticality("Subcritical", 0.0)
    if b == 0:
        return Criticality("Critical", 0.0)
    # supercritical: find the positive root
    if mech.kind == "quadratic_logistic":
        return Criticality("Supercritical", 1.0)
    if mech.kind == "quadratic":
        if mech.sigma > 0:
            return Criticality("Supercritical", -2.0 * b / mech.sigma ** 2)
        return Criticality("Supercritical", math.inf)
    lo, hi = RHO_WINDOW
    grid = np.geomspace(lo, hi, 241)
    vals = np.asarray(mech.psi(grid), dtype=float)
    pos = np.nonzero(vals > 0)[0]
    if len(pos) == 0:
        if mech.sigma == 0.0 and np.all(vals <= 0) and \
                np.all(np.diff(-vals) >= -1e-12 * np.abs(vals[1:])):
            return Criticality("Supercritical", math.inf)
        raise RootBracketFailure(
            "no positive root of psi in [%g, %g]" % RHO_WINDOW)
    i = pos[0]
    if i == 0:
        raise RootBracketFailure("psi already positive at window start")
    a, c = grid[i - 1], grid[i]
    for _ in range(RHO_BISECTIONS):
        m = 0.5 * (a + c)
        if float(mech.psi(m)) > 0:
            c = m
        else:
            a = m
    return Criticality("Supercritical", 0.5 * (a + c))


def greys_condition(mech):
    """True iff the upper integral of dq/Psi(q) converges."""
    if mech.is_zero:
        return False
    if mech.kind == "stable":
        return True
    if mech.kind == "quadratic_logistic":
        return True
    if mech.kind == "quadratic":
        return mech.sigma > 0
    if mech.sigma > 0:
        return True
    crit = criticality(mech)
    if math.isinf(crit.rho):
        return False
    q0 = 2.0 * max(crit.rho, 1.0)

    def f(q):
        return 1.0 / mech.psi(q)

    contrib = quad.octave_contributions(f, q0, 60)
    ratios = contrib[1:] / contrib[:-1]
    if np.max(ratios[-5:]) <= 0.98:
        return True
    if np.min(ratios[-5:]) >= 1.0 - 1e-6:
        return False

    def total_estimate(n):
        partial = float(np.sum(contrib[:n]))
        r = contrib[n - 1] / contrib[n - 2]
        if r >= 1.0:
            return math.inf
        return partial + contrib[n - 1] * r / (1.0 - r)

    t1, t2 = total_estimate(40), total_estimate(60)
    if math.isinf(t1) and math.isinf(t2):
        return False
    if math.isfinite(t1) and math.isfinite(t2) and abs(t1 - t2) <= 0.2 * t2:
        return True
    raise InconclusiveQuadrature(
        "tail of dq/psi inconclusive", trace=contrib.tolist())


def _log_moment_windows(tail):
    """Window sums of nu_bar(e^s) over s in [10^k, 10^(k+1))."""
    out = []
    for k in range(0, 9):
        lo, hi = 10.0 ** k, 10.0 ** (k + 1)
        bps = [kk for kk in tail.log_kinks if lo < kk < hi]
        out.append(quad.integrate(tail.value_log, lo, hi, break_points=bps))
    return np.array(out)


def divergence_test(psi, phi):
    """Decide whether the lower integral of Phi/|Psi| converges.

    Returns "Finite" or "Infinite".
    """
    if psi.is_zero:
        raise DomainError("divergence test needs a nonzero branching "
                          "mechanism")
    if phi.is_zero:
        return "Finite"
    if psi.kind == "stable" and phi.kind == "stable":
        return "Finite" if phi.beta_idx > psi.alpha else "Infinite"
    if psi.b != 0.0:
        # equivalent to a finite log-moment of nu
        if phi.kind in ("linear", "stable"):
            return "Finite"
        tail = phi.nu_bar
        if isinstance(tail, (PiecewiseConstantTail, PointMassTail)):
            return "Finite"
        if tail.name == "one_over_log" or tail.name == "c_over_log":
            return "Infinite"
        if tail.name == "one_over_log_loglog":
            return "Infinite"
        w = _log_moment_windows(tail)
        if all(w[k] >= 0.5 * w[k - 3] for k in range(4, 9)):
            return "Infinite"
        r3 = w[8] / w[5] if w[5] > 0 else 0.0
        if r3 < 1.0:
            tail_est = w[8] * r3 / (1.0 - r3)
            if tail_est <= 10.0 * w[8]:
                return "Finite"
        raise InconclusiveQuadrature(
            "log-moment windows inconclusive", trace=w.tolist())
    # critical/general: windows of Phi/|Psi| toward 0
    def f(u):
        return phi.phi(u) / np.abs(psi.psi(u))

    w = np.array([quad.integrate_log(f, 10.0 ** (-k - 3), 10.0 ** (-k))
                  for k in range(0, 9)])
    if all(w[k] >= 0.5 * w[k - 3] for k in range(4, 9)):
        return "Infinite"
    r3 = w[8] / w[5] if w[5] > 0 else 0.0
    if r3 < 1.0:
        tail_est = w[8] * r3 / (1.0 - r3)
        if tail_est <= 10.0 * w[8]:
            return "Finite"
    raise InconclusiveQuadrature(
        "divergence windows inconclusive", trace=w.tolist())
