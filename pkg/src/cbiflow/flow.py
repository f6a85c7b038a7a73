"""Cumulant flow of a branching mechanism.

v_t(lambda) solves dv/dt = -Psi(v), v_0 = lambda.  The chart

    varphi(lam) = integral_lam^lambda0 du / |Psi(u)|,   g = varphi^{-1}

linearizes the flow: v_t(lam) = g(varphi(lam) + t) while the trajectory
stays in (0, lambda0) for b >= 0, and g(varphi(lam) - t) for b < 0.
Outside that strip the flow is integrated directly (stiff-aware, with an
exact exponential tail once the trajectory enters a small tube around the
root rho where Psi' is effectively constant).
"""

import math

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import PchipInterpolator
from scipy.optimize import brentq

from . import quadrature as quad
from .errors import (BisectionFailure, DomainError, IntegrationFailure)
from .mechanisms import criticality as _criticality

# lambda values above this cap count as infinity for domain checks
LAMBDA_BIG = 1e8
# chart table range and size
TABLE_MIN = 1e-12
TABLE_N = 4096
ODE_RTOL = 1e-9
# relative half-width of the tube around rho where the linearized
# solution v - rho ~ e^{-Psi'(rho) t} takes over
RHO_TUBE = 1e-4
# fraction of lambda0 at which a decreasing trajectory re-enters the chart
CHART_REENTRY = 0.9

_GL16_X, _GL16_W = np.polynomial.legendre.leggauss(16)


class FlowEvaluator:
    """Precomputes chart tables for one branching mechanism; immutable and
    pure after construction."""

    def __init__(self, psi, lambda0=None):
        self.psi = psi
        self.crit = _criticality(psi)
        rho = self.crit.rho
        if lambda0 is None:
            if psi.b < 0 and math.isfinite(rho):
                lambda0 = 0.5 * rho
            else:
                lambda0 = 1.0
        lambda0 = float(lambda0)
        if lambda0 <= 0:
            raise DomainError("lambda0 must be positive")
        if psi.b < 0 and math.isfinite(rho) and lambda0 >= rho:
            raise DomainError("lambda0 must lie below the root rho when "
                              "supercritical")
        self.lambda0 = lambda0
        self._closed = psi.kind in ("stable", "quadratic",
                                    "quadratic_logistic")
        self._phi_interp = None     # built lazily for general mechanisms
        self._ginv_interp = None
        self._x_max = None
        self._asym = None

    # -- chart ---------------------------------------------------------------

    def varphi(self, lam):
        """integral_lam^lambda0 du/|Psi(u)| for lam in (0, lambda0)."""
        lam_arr = np.asarray(lam, dtype=float)
        if self.psi.is_zero:
            raise DomainError("chart undefined for a vanishing branching "
                              "mechanism")
        if np.any(lam_arr <= 0) or np.any(lam_arr >= self.lambda0):
            raise DomainError("varphi needs 0 < lam < lambda0")
        out = self._varphi_any(lam_arr)
        return float(out) if np.ndim(lam) == 0 else out

    def _varphi_any(self, lam):
        psi = self.psi
        l0 = self.lambda0
        if psi.kind == "stable":
            a, d = psi.alpha, psi.d
            return (lam ** -a - l0 ** -a) / (a * d)
        if self._closed:
            b, s2 = psi.b, psi.sigma ** 2
            if b == 0.0:
                return (2.0 / s2) * (1.0 / lam - 1.0 / l0)
            ab = abs(b)
            sg = 1.0 if b > 0 else -1.0
            # |Psi(u)| = u|b + s2 u/2|; on (0, lambda0) the sign is fixed
            return (1.0 / ab) * np.log(
                l0 * (ab + sg * 0.5 * s2 * lam)
                / (lam * (ab + sg * 0.5 * s2 * l0)))
        self._build_tables()
        out = np.where(lam >= TABLE_MIN,
                       self._phi_table(np.maximum(lam, TABLE_MIN)),
                       self._varphi_asym(np.minimum(lam, TABLE_MIN)))
        return out

    def _phi_table(self, lam):
        """Tabulated varphi plus an exact one-panel correction in the cell."""
        lam = np.asarray(lam, dtype=float)
        shape = lam.shape
        flat = np.atleast_1d(lam).ravel()
        nodes = self._table_nodes
        i = np.clip(np.searchsorted(nodes, flat), 1, len(nodes) - 1)
        la, lb = np.log(flat), np.log(nodes[i])
        half = 0.5 * (lb - la)
        s = 0.5 * (la + lb)[:, None] + half[:, None] * _GL16_X
        u = np.exp(s)
        g = u / np.abs(self.psi.psi(u))
        corr = half * (g * _GL16_W).sum(axis=1)
        return (self._table_phi[i] + corr).reshape(shape)

    def g_inv(self, x):
        """Inverse chart: the lam in (0, lambda0] with varphi(lam) = x."""
        x_arr = np.asarray(x, dtype=float)
        if np.any(x_arr < 0):
            raise DomainError("g_inv needs x >= 0")
        out = self._g_any(x_arr)
        return float(out) if np.ndim(x) == 0 else out

    def _g_any(self, x):
        psi = self.psi
        l0 = self.lambda0
        x = np.asarray(x, dtype=float)
        scalar = x.ndim == 0
        x1 = np.atleast_1d(x)
        if psi.kind == "stable":
            a, d = psi.alpha, psi.d
            out = (a * d * x1 + l0 ** -a) ** (-1.0 / a)
        elif self._closed:
            b, s2 = psi.b, psi.sigma ** 2
            if b == 0.0:
                out = 1.0 / (0.5 * s2 * x1 + 1.0 / l0)
            else:
                ab = abs(b)
                sg = 1.0 if b > 0 else -1.0
                k = (ab + sg * 0.5 * s2 * l0) / l0
                with np.errstate(over="ignore"):
                    out = ab / (k * np.exp(ab * x1) - sg * 0.5 * s2)
        else:
            self._build_tables()
            out = np.empty_like(x1)
            inside = x1 <= self._x_max
            if np.any(inside):
                lam = self._ginv_interp(x1[inside])
                # Newton polish against the exact chart (d varphi/d lam is
                # -1/|Psi|), so residual interpolation error drops out
                for _ in range(3):
                    step = (self._phi_table(lam) - x1[inside]) \
                        * np.abs(self.psi.psi(lam))
                    lam = np.clip(lam + step, TABLE_MIN, self.lambda0)
                out[inside] = lam
            if np.any(~inside):
                with np.errstate(over="ignore", under="ignore"):
                    out[~inside] = self._g_asym(x1[~inside])
        out = np.clip(out, 0.0, self.lambda0)
        return float(out[0]) if scalar else out

    def _build_tables(self):
        if self._phi_interp is not None:
            return
        psi = self.psi

        def f(u):
            return 1.0 / np.abs(psi.psi(u))

        nodes, phi_vals = quad.cumulative_log_table(f, TABLE_MIN, self.lambda0,
                                                    n=TABLE_N, reverse=True)
        self._table_nodes = nodes
        self._table_phi = phi_vals
        self._phi_interp = PchipInterpolator(nodes, phi_vals)
        self._ginv_interp = PchipInterpolator(phi_vals[::-1], nodes[::-1])
        self._x_max = float(phi_vals[0])
        # asymptotics of varphi as lam -> 0
        b = psi.b
        if b != 0.0:
            ab = abs(b)
            sg = -1.0 if b > 0.0 else 1.0

            def h(u):
                # 1/|psi(u)| - 1/(|b| u), written without the catastrophic
                # cancellation of the raw difference near u -> 0
                u = np.asarray(u, dtype=float)
                excess = 0.5 * psi.sigma ** 2 * u * u + psi._jump_part(u)
                return sg * excess / (np.abs(psi.psi(u)) * ab * u)

            i0 = quad.quad_to_zero(h, self.lambda0, abs_tol=1e-12)
            #   varphi(lam) = ln(lambda0/lam)/|b| + i0 + O(lam)
            self._asym = ("exp", ab, float(i0))
        else:
            # critical: varphi is asymptotically a power A lam^{-p}
            i, j = 0, 200
            p = -(math.log(phi_vals[j]) - math.log(phi_vals[i])) \
                / (math.log(nodes[j]) - math.log(nodes[i]))
            a_coef = phi_vals[0] * nodes[0] ** p
            self._asym = ("pow", float(p), float(a_coef))

    def _varphi_asym(self, lam):
        kind, p1, p2 = self._asym
        if kind == "exp":
            ab, i0 = p1, p2
            return np.log(self.lambda0 / lam) / ab + i0
        p, a_coef = p1, p2
        return a_coef * lam ** -p

    def _g_asym(self, x):
        kind, p1, p2 = self._asym
        if kind == "exp":
            ab, i0 = p1, p2
            return self.lambda0 * np.exp(-ab * (x - i0))
        p, a_coef = p1, p2
        return (x / a_coef) ** (-1.0 / p)

    # -- forward flow ---------------------------------------------------------

    def v_forward(self, t, lam):
        """v_t(lam), the cumulant flow after time t >= 0."""
        t = float(t)
        lam = float(lam)
        if t < 0:
            raise DomainError("v_forward needs t >= 0")
        if lam < 0:
            raise DomainError("v_forward needs lam >= 0")
        if lam == 0.0 or t == 0.0:
            return lam
        psi = self.psi
        if psi.is_zero:
            return lam
        if psi.kind == "stable":
            a, d = psi.alpha, psi.d
            return (lam ** -a + a * d * t) ** (-1.0 / a)
        if psi.kind == "quadratic_logistic":
            em = math.exp(-t)
            return lam / (lam + (1.0 - lam) * em)
        if psi.kind == "quadratic":
            return self._v_quadratic(t, lam)
        return self._v_general(t, lam)

    def _v_quadratic(self, t, lam):
        b, s2 = self.psi.b, self.psi.sigma ** 2
        w = 1.0 / lam
        if b == 0.0:
            return 1.0 / (w + 0.5 * s2 * t)
        c = 0.5 * s2 / b
        ebt = math.exp(b * t) if b * t < 700 else math.inf
        wt = (w + c) * ebt - c
        if not (0.0 < wt < math.inf):
            if b > 0:
                return 0.0
            # b < 0: converged onto the root (or grew beyond float range
            # in the driftless-subordinator case sigma = 0)
            return -2.0 * b / s2 if s2 > 0 else math.inf
        return 1.0 / wt

    def _v_general(self, t, lam):
        b = self.psi.b
        l0 = self.lambda0
        if b >= 0:
            if lam < l0:
                return self._g_any(self._varphi_any(
                    np.asarray(lam, dtype=float)) + t)
            return self._ode_step(t, lam)
        # supercritical / subordinator-like
        rho = self.crit.rho
        if math.isfinite(rho) and lam == rho:
            return rho
        if lam < l0:
            t_exit = float(self._varphi_any(np.asarray(lam, dtype=float)))
            if t <= t_exit:
                return self._g_any(t_exit - t)
            return self._ode_step(t - t_exit, l0)
        return self._ode_step(t, lam)

    def _ode_step(self, t, v0):
        """Direct integration of dv/dt = -Psi(v) from v0 over time t,
        switching to the chart (b >= 0) or to the linearized solution near
        rho (b < 0) as soon as possible."""
        psi = self.psi
        b = psi.b
        rho = self.crit.rho if psi.b < 0 else 0.0
        l0 = self.lambda0

        if b < 0 and math.isfinite(rho) and abs(v0 - rho) <= RHO_TUBE * rho:
            rate = float(psi.psi_prime(rho))
            return rho + (v0 - rho) * math.exp(-rate * t)

        def rhs(_, y):
            return [-float(psi.psi(y[0]))]

        def jac(_, y):
            return [[-float(psi.psi_prime(y[0]))]]

        events = []
        if b >= 0:
            def reenter(_, y):
                return y[0] - CHART_REENTRY * l0
            reenter.terminal = True
            reenter.direction = -1
            events.append(reenter)
        elif math.isfinite(rho):
            tube = RHO_TUBE * rho

            def near_rho(_, y):
                return abs(y[0] - rho) - tube
            near_rho.terminal = True
            near_rho.direction = -1
            events.append(near_rho)

        sol = solve_ivp(rhs, (0.0, t), [v0], method="Radau", jac=jac,
                        rtol=ODE_RTOL, atol=1e-30, events=events,
                        dense_output=False)
        if sol.status == -1:
            raise IntegrationFailure("flow integration failed",
                                     last_t=float(sol.t[-1]),
                                     last_v=float(sol.y[0, -1]))
        if sol.status == 0:
            return max(float(sol.y[0, -1]), 0.0)
        # terminal event fired
        t_ev = float(sol.t_events[0][0])
        v_ev = float(sol.y_events[0][0][0])
        rest = t - t_ev
        if b >= 0:
            return self._g_any(self._varphi_any(
                np.asarray(v_ev, dtype=float)) + rest)
        rate = float(psi.psi_prime(rho))
        return rho + (v_ev - rho) * math.exp(-rate * rest)

    # -- backward flow ---------------------------------------------------------

    def v_bar(self, t):
        """Estimate of the boundary v̄_t = lim of v_t(lam) for huge lam."""
        psi = self.psi
        if psi.kind == "stable":
            a, d = psi.alpha, psi.d
            return (a * d * t) ** (-1.0 / a) if t > 0 else math.inf
        if psi.kind == "quadratic_logistic":
            return 1.0 / -math.expm1(-t) if t > 0 else math.inf
        if psi.kind == "quadratic":
            b, s2 = psi.b, psi.sigma ** 2
            if s2 == 0.0 or t == 0.0:
                return math.inf
            if b == 0.0:
                return 2.0 / (s2 * t)
            c = 0.5 * s2 / b
            ebt = math.exp(b * t) if b * t < 700 else math.inf
            wt = c * (ebt - 1.0)
            return 1.0 / wt if wt > 0 else math.inf
        return self.v_forward(t, LAMBDA_BIG)

    def v_backward(self, t, lam):
        """v_{-t}(lam): the mu with v_t(mu) = lam, for 0 <= lam < v̄_t."""
        t = float(t)
        lam = float(lam)
        if t < 0:
            raise DomainError("v_backward needs t >= 0")
        if lam < 0:
            raise DomainError("v_backward needs lam >= 0")
        if t == 0.0 or lam == 0.0:
            return lam
        psi = self.psi
        if psi.is_zero:
            return lam
        if psi.kind == "stable":
            a, d = psi.alpha, psi.d
            disc = lam ** -a - a * d * t
            if disc <= 0:
                raise DomainError("lam is at or beyond v̄_t")
            return disc ** (-1.0 / a)
        if psi.kind == "quadratic_logistic":
            em = math.exp(-t)
            den = 1.0 - lam * (1.0 - em)
            if den <= 0:
                raise DomainError("lam is at or beyond v̄_t")
            return lam * em / den
        if psi.kind == "quadratic":
            b, s2 = psi.b, psi.sigma ** 2
            w = 1.0 / lam
            if b == 0.0:
                wt = w - 0.5 * s2 * t
            else:
                c = 0.5 * s2 / b
                wt = (w + c) * math.exp(-b * t) - c
            if wt <= 0:
                raise DomainError("lam is at or beyond v̄_t")
            return 1.0 / wt
        return self._v_backward_general(t, lam)

    def _v_backward_general(self, t, lam):
        vbar = self.v_bar(t)
        if lam >= vbar:
            raise DomainError("lam is at or beyond the v̄_t estimate")
        b = self.psi.b
        rho = self.crit.rho if b < 0 else 0.0
        if b < 0 and math.isfinite(rho) and lam == rho:
            return rho
        if b >= 0 or (math.isfinite(rho) and lam > rho):
            lo, hi = lam, LAMBDA_BIG
        else:
            lo = max(1e-300, lam * math.exp(b * t) * 1e-6)
            hi = lam
        f = lambda lm: self.v_forward(t, math.exp(lm)) - lam
        flo, fhi = f(math.log(lo)), f(math.log(hi))
        if flo > 0 or fhi < 0:
            raise BisectionFailure("v_backward bracket failed")
        root = brentq(f, math.log(lo), math.log(hi), xtol=1e-13,
                      rtol=8.9e-16)
        mu = math.exp(root)
        if abs(self.v_forward(t, mu) - lam) > 1e-7 * max(lam, 1e-300):
            raise BisectionFailure("v_backward did not converge to "
                                   "tolerance")
        return mu

    def rho_t(self, t):
        """1 when b > 0; v_{-t}(lambda0) when b < 0."""
        b = self.psi.b
        if b > 0:
            return 1.0
        if b == 0:
            raise DomainError("rho_t undefined for critical mechanisms")
        return self.v_backward(t, self.lambda0)


# ---------------------------------------------------------------------------
# operations on a bare mechanism (evaluators are cached on the mechanism)
# ---------------------------------------------------------------------------

def _as_evaluator(psi, lambda0=None):
    if isinstance(psi, FlowEvaluator):
        return psi
    cached = getattr(psi, "_flow_cache", None)
    if cached is not None and cached[0] == lambda0:
        return cached[1]
    fe = FlowEvaluator(psi, lambda0=lambda0)
    psi._flow_cache = (lambda0, fe)
    return fe


def varphi(psi, lam, lambda0=None):
    return _as_evaluator(psi, lambda0).varphi(lam)


def g_inv(psi, x, lambda0=None):
    return _as_evaluator(psi, lambda0).g_inv(x)


def v_forward(psi, t, lam, lambda0=None):
    return _as_evaluator(psi, lambda0).v_forward(t, lam)


def v_backward(psi, t, lam, lambda0=None):
    return _as_evaluator(psi, lambda0).v_backward(t, lam)


def v_bar(psi, t, lambda0=None):
    return _as_evaluator(psi, lambda0).v_bar(t)


def rho_t(psi, t, lambda0=None):
    return _as_evaluator(psi, lambda0).rho_t(t)
