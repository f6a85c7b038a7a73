"""Limit laws of rescaled CBI terminal values.

Closed-form Laplace transforms (and, where available, distribution
functions) of the laws that show up as t -> infinity limits of the
renormalized process, plus the exact finite-t Laplace transform
E_x exp(-lam Y_t) = exp(-x v_t(lam) - r_t(lam)) that serves as the master
oracle for every Monte Carlo check.

Kinds:

  Exp1               unit exponential; LT 1/(1+theta), CDF 1-e^{-z}
  Uniform01          uniform on [0,1]; LT (1-e^{-theta})/theta
  UL{a}              slowly-diverging limit ratio; CDF (z/(1+z))^a
  UF{delta}          fast-divergence extreme-type limit; CDF exp(-1/z^delta)
  VL{alpha,a}        critical slow-divergence value law; LT (1+theta^a)^-a
  VF{beta}           critical fast-divergence value law; LT exp(-theta^b)
  StationaryStable   all-stable stationary law; LT exp(-t^(b-a)/(b-a))
  WLambda            supercritical martingale limit W^lam for convergent
                     immigration; LT from the flow and the Phi/Psi integral

UL and UF have no closed LT; those are integrated numerically from the
closed densities (Stieltjes route).  VL, VF, StationaryStable and WLambda
are LT-only (no closed CDF).
"""

import math

import numpy as np

from . import quadrature as quad
from .errors import DomainError, UnsupportedKind
from .flow import _as_evaluator
from .mechanisms import divergence_test
from .renorm import r_eval

# relative tolerance of the Stieltjes LT integrals for UL / UF
LT_REL_TOL = 1e-9

_CDF_KINDS = ("Exp1", "Uniform01", "UL", "UF")


class LimitLaw:
    """One limit law: a kind tag plus its parameters.

    Immutable value object; lt() and cdf() are pure.
    """

    def __init__(self, kind, **params):
        self.kind = kind
        self.params = dict(params)
        if kind in ("Exp1", "Uniform01"):
            pass
        elif kind == "UL":
            self.a = float(params["a"])
            if not self.a > 0:
                raise DomainError("UL needs a > 0")
        elif kind == "UF":
            self.delta = float(params["delta"])
            if not self.delta > 0:
                raise DomainError("UF needs delta > 0")
        elif kind == "VL":
            self.alpha = float(params["alpha"])
            self.a = float(params["a"])
            if not (0.0 < self.alpha <= 1.0 and self.a > 0):
                raise DomainError("VL needs 0 < alpha <= 1 and a > 0")
        elif kind == "VF":
            self.beta_idx = float(params["beta_idx"])
            if not 0.0 < self.beta_idx <= 1.0:
                raise DomainError("VF needs 0 < beta_idx <= 1")
        elif kind == "StationaryStable":
            self.alpha = float(params["alpha"])
            self.beta_idx = float(params["beta_idx"])
            if not (0.0 < self.alpha <= 1.0 and
                    self.alpha < self.beta_idx <= 1.0):
                raise DomainError("stationary stable law needs "
                                  "0 < alpha < beta_idx <= 1")
        elif kind == "WLambda":
            self.x = float(params["x"])
            self.lam = float(params["lam"])
            self.psi = params["psi"]
            self.phi = params["phi"]
            self.lambda0 = params.get("lambda0")
            if self.x < 0:
                raise DomainError("WLambda needs x >= 0")
            if self.psi.b >= 0:
                raise DomainError("WLambda needs a supercritical branching "
                                  "mechanism (b < 0)")
            if divergence_test(self.psi, self.phi) != "Finite":
                raise DomainError("WLambda needs convergent immigration "
                                  "(finite Phi/Psi integral at 0)")
            self._fe = _as_evaluator(self.psi, self.lambda0)
            rho = self._fe.crit.rho
            if not 0.0 < self.lam < rho:
                raise DomainError("WLambda needs lam in (0, rho)")
        else:
            raise UnsupportedKind("unknown limit-law kind %r" % (kind,))

    # -- constructors -----------------------------------------------------------

    @classmethod
    def exp1(cls):
        return cls("Exp1")

    @classmethod
    def uniform01(cls):
        return cls("Uniform01")

    @classmethod
    def ul(cls, a):
        return cls("UL", a=a)

    @classmethod
    def uf(cls, delta):
        return cls("UF", delta=delta)

    @classmethod
    def vl(cls, alpha, a):
        return cls("VL", alpha=alpha, a=a)

    @classmethod
    def vf(cls, beta_idx):
        return cls("VF", beta_idx=beta_idx)

    @classmethod
    def stationary_stable(cls, alpha, beta_idx):
        return cls("StationaryStable", alpha=alpha, beta_idx=beta_idx)

    @classmethod
    def w_lambda(cls, x, lam, psi, phi, lambda0=None):
        return cls("WLambda", x=x, lam=lam, psi=psi, phi=phi,
                   lambda0=lambda0)

    # -- Laplace transform ------------------------------------------------------

    def lt(self, theta):
        """Laplace transform E exp(-theta Z) at theta >= 0."""
        theta = float(theta)
        if theta < 0:
            raise DomainError("lt needs theta >= 0")
        if theta == 0.0:
            return 1.0
        if self.kind == "Exp1":
            return 1.0 / (1.0 + theta)
        if self.kind == "Uniform01":
            return -math.expm1(-theta) / theta
        if self.kind == "UL":
            return _stieltjes_lt(self._ul_density, theta)
        if self.kind == "UF":
            return _stieltjes_lt(self._uf_density, theta)
        if self.kind == "VL":
            return (1.0 + theta ** self.alpha) ** (-self.a)
        if self.kind == "VF":
            return math.exp(-theta ** self.beta_idx)
        if self.kind == "StationaryStable":
            p = self.beta_idx - self.alpha
            return math.exp(-theta ** p / p)
        return self._w_lambda_lt(theta)

    def _w_lambda_lt(self, theta):
        # E exp(-theta W^lam) = exp(-x v_s(lam) + int_0^{v_s(lam)} Phi/Psi)
        # with s = -ln(theta)/b; theta < 1 runs the flow backward
        b = self.psi.b
        s = -math.log(theta) / b
        if s >= 0:
            v = self._fe.v_forward(s, self.lam)
        else:
            v = self._fe.v_backward(-s, self.lam)

        def f(u):
            return self.phi.phi(u) / self.psi.psi(u)

        tail = quad.quad_to_zero(f, v) if v > 0 else 0.0
        return math.exp(-self.x * v + tail)

    # -- distribution function --------------------------------------------------

    def cdf(self, z):
        """Distribution function at z >= 0 (closed-form kinds only)."""
        z = float(z)
        if z < 0:
            raise DomainError("cdf needs z >= 0")
        if self.kind == "Exp1":
            return -math.expm1(-z)
        if self.kind == "Uniform01":
            return min(z, 1.0)
        if self.kind == "UL":
            return (z / (1.0 + z)) ** self.a
        if self.kind == "UF":
            return math.exp(-z ** -self.delta) if z > 0 else 0.0
        raise UnsupportedKind("no closed-form distribution function for "
                              "kind %r" % (self.kind,))

    @property
    def has_cdf(self):
        return self.kind in _CDF_KINDS

    # -- densities for the Stieltjes LTs ----------------------------------------

    def _ul_density(self, z):
        a = self.a
        return a * (z / (1.0 + z)) ** (a - 1.0) / (1.0 + z) ** 2

    def _uf_density(self, z):
        d = self.delta
        w = z ** -d
        return np.exp(-w) * d * w / z

    def __repr__(self):
        inner = ", ".join("%s=%r" % (k, v) for k, v in self.params.items()
                          if k not in ("psi", "phi"))
        return "LimitLaw(%s%s%s)" % (self.kind, ", " if inner else "", inner)


def _stieltjes_lt(density, theta):
    """integral of e^{-theta z} density(z) dz over (0, inf)."""

    def g(z):
        return np.exp(-theta * z) * density(z)

    return quad.quad_to_zero(g, 1.0, rel_tol=LT_REL_TOL) \
        + quad.quad_to_inf(g, 1.0, rel_tol=LT_REL_TOL)


def finite_t_lt(psi, phi, x, t, lam, lambda0=None):
    """Exact E_x exp(-lam Y_t) = exp(-x v_t(lam) - r_t(lam))."""
    x = float(x)
    t = float(t)
    lam = float(lam)
    if x < 0 or t < 0 or lam < 0:
        raise DomainError("finite_t_lt needs nonnegative arguments")
    fe = _as_evaluator(psi, lambda0)
    v = fe.v_forward(t, lam)
    r = r_eval(psi, phi, t, lam, lambda0)
    return math.exp(-x * v - r)
