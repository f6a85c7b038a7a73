"""Adaptive quadrature tuned for endpoint singularities on log grids.

All integrands must be vectorized (take and return numpy arrays).  The
workhorses are:

  * integrate       -- adaptive Gauss panels on a finite interval
  * integrate_log   -- same, but in s = ln(u) coordinates (geometric panels)
  * quad_to_zero    -- integral down to 0 by descending decades
  * quad_to_inf     -- integral up to infinity by ascending octaves
  * cumulative_log_table -- vectorized cumulative integral on a log grid

Integrands near 0 or infinity behave like powers times slowly varying
factors here, so geometric panels give uniform relative accuracy per decade.
"""

import numpy as np

from .errors import QuadratureFailure

REL_TOL = 1e-8
ABS_TOL = 1e-12

_gl_cache = {}


def _nodes(n):
    if n not in _gl_cache:
        _gl_cache[n] = np.polynomial.legendre.leggauss(n)
    return _gl_cache[n]


def _panel(f, a, b, n):
    x, w = _nodes(n)
    half = 0.5 * (b - a)
    return half * float(np.dot(w, f(0.5 * (a + b) + half * x)))


def integrate(f, a, b, rel_tol=REL_TOL, abs_tol=ABS_TOL, break_points=(),
              max_splits=4000):
    """Adaptive integral of vectorized f over finite [a, b].

    Panels are accepted when the 16- and 32-point Gauss rules agree within
    the panel's share of the tolerance, else bisected.  Known kinks or jumps
    of f should be passed as break_points so they sit on panel edges.
    """
    if a == b:
        return 0.0
    sign = 1.0
    if b < a:
        a, b = b, a
        sign = -1.0
    edges = [a]
    for p in sorted(set(float(p) for p in break_points)):
        if a < p < b:
            edges.append(p)
    edges.append(b)
    width = b - a
    stack = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        k = max(1, min(8, int(round((hi - lo) / width * 8))))
        sub = np.linspace(lo, hi, k + 1)
        stack.extend(zip(sub[:-1], sub[1:]))
    # crude scale estimate for the relative tolerance
    scale = sum(abs(_panel(f, lo, hi, 16)) for lo, hi in stack)
    total = 0.0
    splits = 0
    while stack:
        lo, hi = stack.pop()
        coarse = _panel(f, lo, hi, 16)
        fine = _panel(f, lo, hi, 32)
        tol = max(abs_tol, rel_tol * max(scale, abs(total))) * (hi - lo) / width
        if abs(fine - coarse) <= tol or (hi - lo) <= width * 1e-14:
            total += fine
        else:
            mid = 0.5 * (lo + hi)
            stack.append((lo, mid))
            stack.append((mid, hi))
            splits += 1
            if splits > max_splits:
                raise QuadratureFailure(
                    "adaptive quadrature did not converge on [%g, %g]"
                    % (a, b), partial=total)
    return sign * total


def integrate_log(f, a, b, rel_tol=REL_TOL, abs_tol=ABS_TOL, break_points=()):
    """Integral of f over [a, b], 0 < a < b, in s = ln(u) coordinates."""
    if a <= 0 or b <= 0:
        raise ValueError("integrate_log needs positive endpoints")
    if a == b:
        return 0.0

    def g(s):
        u = np.exp(s)
        return f(u) * u

    bps = [np.log(p) for p in break_points if min(a, b) < p < max(a, b)]
    return integrate(g, np.log(a), np.log(b), rel_tol, abs_tol, bps)


def quad_to_zero(f, upper, rel_tol=REL_TOL, abs_tol=ABS_TOL, break_points=()):
    """Integral of f over (0, upper] for f with an integrable singularity
    or vanishing limit at 0.  Descends decade by decade until two consecutive
    contributions fall below tolerance."""
    if upper <= 0:
        return 0.0
    total = 0.0
    hi = float(upper)
    small_run = 0
    while hi > 1e-280:
        lo = hi / 10.0
        c = integrate_log(f, lo, hi, rel_tol, abs_tol, break_points)
        total += c
        if abs(c) <= max(abs_tol, rel_tol * abs(total)):
            small_run += 1
            if small_run >= 2:
                return total
        else:
            small_run = 0
        hi = lo
    raise QuadratureFailure(
        "integral toward 0 did not settle (last decade %g)" % hi,
        partial=total)


def quad_to_inf(f, lower, rel_tol=REL_TOL, abs_tol=ABS_TOL, break_points=()):
    """Integral of f over [lower, infinity) by ascending octaves.

    Stops once two consecutive octave contributions are negligible; raises
    QuadratureFailure (carrying the partial sum) when contributions fail to
    decay before the representable range runs out.
    """
    if lower <= 0:
        raise ValueError("quad_to_inf needs a positive lower endpoint")
    total = 0.0
    lo = float(lower)
    small_run = 0
    while lo < 1e300:
        hi = 2.0 * lo
        c = integrate_log(f, lo, hi, rel_tol, abs_tol, break_points)
        total += c
        if abs(c) <= max(abs_tol, rel_tol * abs(total)):
            small_run += 1
            if small_run >= 2:
                return total
        else:
            small_run = 0
        lo = hi
    raise QuadratureFailure(
        "integral toward infinity looks divergent (reached %g)" % lo,
        partial=total)


def octave_contributions(f, lower, n_octaves, rel_tol=REL_TOL,
                         abs_tol=ABS_TOL):
    """Contributions of f over [lower*2^k, lower*2^(k+1)) for k < n_octaves."""
    out = np.empty(n_octaves)
    lo = float(lower)
    for k in range(n_octaves):
        out[k] = integrate_log(f, lo, 2.0 * lo, rel_tol, abs_tol)
        lo *= 2.0
    return out


def cumulative_log_table(f, a, b, n=4096, order=16, reverse=False):
    """Cumulative integral of f on an n-point log grid over [a, b].

    Returns (nodes, cum) with cum[i] = integral of f from a to nodes[i],
    computed per panel with a fixed Gauss rule in log space.  Panels are a
    small fraction of a decade wide, so the fixed rule sits far below the
    package tolerance for smooth integrands.

    With reverse=True, cum[i] = integral from nodes[i] to b instead.  Use
    this when the integral blows up toward a, so that upper-range values
    are sums of small panels rather than differences of huge ones.
    """
    nodes = np.geomspace(a, b, n)
    s = np.log(nodes)
    x, w = _nodes(order)
    mid = 0.5 * (s[1:] + s[:-1])
    half = 0.5 * np.diff(s)
    pts = mid[:, None] + half[:, None] * x[None, :]
    u = np.exp(pts)
    vals = f(u.reshape(-1)).reshape(u.shape) * u
    panels = half * (vals @ w)
    if reverse:
        cum = np.concatenate((np.cumsum(panels[::-1])[::-1], [0.0]))
    else:
        cum = np.concatenate(([0.0], np.cumsum(panels)))
    return nodes, cum


def cumulative_linear_table(f, a, b, n=4096, order=16):
    """Cumulative integral of f on an n-point uniform grid over [a, b]."""
    nodes = np.linspace(a, b, n)
    x, w = _nodes(order)
    mid = 0.5 * (nodes[1:] + nodes[:-1])
    half = 0.5 * np.diff(nodes)
    pts = mid[:, None] + half[:, None] * x[None, :]
    vals = f(pts.reshape(-1)).reshape(pts.shape)
    panels = half * (vals @ w)
    return nodes, np.concatenate(([0.0], np.cumsum(panels)))
