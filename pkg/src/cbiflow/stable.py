"""Tabulated sampler for the zero-mean spectrally positive stable law.

The branching noise of a stable CBI step is a spectrally positive
gamma-stable increment (gamma = 1 + alpha in (1, 2)) normalized so that
E exp(-lam X) = exp(+lam^gamma) and E X = 0.  scipy's levy_stable (S1
parametrization, beta = 1, scale (-cos(pi gamma/2))^(1/gamma)) supplies
the distribution function once per gamma; sampling is inverse-CDF with
three linearly interpolated tables:

  bulk   u in [2^-8, 1-2^-8], 4097 equispaced nodes
  left   v = -log2(u) in [8, 32], 769 nodes, clamped beyond (mass 2^-32)
  right  w = -log2(1-u) in [8, 20], 385 nodes, analytic Pareto tail beyond

scipy resolves the heavy right tail only down to sf ~ 2^-13; deeper
right-tail nodes come from the exact power series of the survival
function (_tail_quantile).

The tables are shifted so the sampler's own measure has mean exactly zero
(the interpolation and clamp would otherwise leave an O(1e-6) bias that a
martingale check over many steps can see).  Tests validate the sampler's
Laplace transform against exp(+lam^gamma) directly.
"""

import math

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.special import gamma as _gamma_fn
from scipy.stats import levy_stable

from ._rng import njit, uniform
from .errors import NumericError

BULK_N = 4097
BULK_U_LO = 2.0 ** -8
LEFT_V_LO, LEFT_V_HI, LEFT_N = 8.0, 32.0, 769
RIGHT_W_LO, RIGHT_W_HI, RIGHT_N = 8.0, 20.0, 385
# scipy's survival function is exact down to about 2^-13 and then snaps to
# an exact 0 (its tail quadrature gives up near x ~ a few hundred); deeper
# right-tail quantiles come from the power series of the survival function
SCIPY_W_MAX = 12.0

_CACHE = {}


class SpectralTables:
    """Quantile tables of one zero-mean spectrally positive stable law."""

    def __init__(self, gamma, bulk, left, right, pareto_coef, shift):
        self.gamma = gamma
        self.bulk = bulk
        self.left = left
        self.right = right
        self.pareto_coef = pareto_coef
        self.shift = shift

    def pack(self):
        """Arguments for the numba kernel, in positional order."""
        return (self.bulk, self.left, self.right, self.pareto_coef,
                self.shift, self.gamma)


def spectral_tables(gamma):
    """Build (or fetch) the sampler tables for one gamma in (1, 2)."""
    gamma = float(gamma)
    if not 1.0 < gamma < 2.0:
        raise NumericError("spectral tables need gamma strictly inside "
                           "(1, 2); got %g" % gamma)
    key = round(gamma, 12)
    if key not in _CACHE:
        _CACHE[key] = _build(gamma)
    return _CACHE[key]


def _build(gamma):
    sigma = (-math.cos(math.pi * gamma / 2.0)) ** (1.0 / gamma)
    dist = levy_stable(gamma, 1.0, loc=0.0, scale=sigma)

    # bracket the needed quantile range
    x_lo = -2.0
    while dist.cdf(x_lo) > 2.0 ** -33:
        x_lo *= 1.5
    x_hi = 10.0
    while dist.sf(x_hi) > 2.0 ** -13:
        x_hi *= 2.0

    # scipy's piecewise cdf returns the exact at-zeta constant on a small
    # window around x = 0 (the S1 zero is Nolan's zeta point); leave a gap
    # there and let the monotone interpolant bridge it -- the quantile
    # function is smoothest right at the density peak
    gap = 0.02
    xg = np.concatenate([
        np.linspace(x_lo, -0.5, 900, endpoint=False),
        np.linspace(-0.5, -gap, 350, endpoint=False),
        np.linspace(gap, 2.0, 650, endpoint=False),
        np.geomspace(2.0, x_hi, 1100),
    ])
    cdf = dist.cdf(xg)
    sf = dist.sf(xg)
    live = (cdf > 0) & (sf > 0)  # far tails saturate to exact 0/1

    with np.errstate(divide="ignore"):
        left_inv = _monotone_inverse(np.log2(np.maximum(cdf, 1e-300)), xg,
                                     live & (cdf <= 2.0 ** -7))
        bulk_inv = _monotone_inverse(
            cdf, xg, live & (cdf >= 2.0 ** -9) & (sf >= 2.0 ** -9))
        right_inv = _monotone_inverse(
            -np.log2(np.maximum(sf, 1e-300)), xg,
            live & (sf <= 2.0 ** -7) & (sf >= 2.0 ** -13))

    u = np.linspace(BULK_U_LO, 1.0 - BULK_U_LO, BULK_N)
    bulk = bulk_inv(u)
    v = np.linspace(LEFT_V_LO, LEFT_V_HI, LEFT_N)
    left = left_inv(-v)
    w = np.linspace(RIGHT_W_LO, RIGHT_W_HI, RIGHT_N)
    right = np.empty_like(w)
    shallow = w <= SCIPY_W_MAX
    right[shallow] = right_inv(w[shallow])
    right[~shallow] = _tail_quantile(w[~shallow], gamma)

    pareto_coef = float(right[-1])
    shift = _interpolant_mean(gamma, bulk, left, right, pareto_coef)
    return SpectralTables(gamma, bulk - shift, left - shift, right - shift,
                          pareto_coef, shift)


def _monotone_inverse(key, x, mask):
    k = key[mask]
    xv = x[mask]
    keep = np.concatenate([[True], np.diff(k) > 0])
    return PchipInterpolator(k[keep], xv[keep])


def _tail_quantile(w, gamma):
    """Deep right-tail quantiles x with sf(x) = 2^-w from the tail series.

    The survival function of the law with E exp(-lam X) = exp(+lam^gamma)
    expands as sf(x) = sum_k c_k x^(-k gamma) with
    c_k = -Gamma(k gamma) sin(k pi gamma) / (pi k!); eight terms resolve
    sf <= 2^-12 to better than 1e-6 relative over gamma in (1, 2).
    Solved by Newton in y = x^-gamma, which makes sf a polynomial.
    """
    ks = np.arange(1.0, 9.0)
    c = (-_gamma_fn(ks * gamma) * np.sin(ks * np.pi * gamma)
         / (np.pi * _gamma_fn(ks + 1.0)))
    s = 2.0 ** -np.asarray(w, dtype=float)
    poly = np.append(c[::-1], 0.0)
    dpoly = (ks * c)[::-1]
    y = s / c[0]
    for _ in range(4):
        y -= (np.polyval(poly, y) - s) / np.polyval(dpoly, y)
    return y ** (-1.0 / gamma)


def _interpolant_mean(gamma, bulk, left, right, pareto_coef):
    """Exact mean of the piecewise-linear inverse-CDF sampler."""
    du = (1.0 - 2.0 * BULK_U_LO) / (BULK_N - 1)
    mean = float(np.sum(0.5 * (bulk[1:] + bulk[:-1]) * du))
    mean += _exp2_weighted(left, LEFT_V_LO, LEFT_V_HI)
    mean += float(left[-1]) * 2.0 ** -LEFT_V_HI  # clamp atom
    mean += _exp2_weighted(right, RIGHT_W_LO, RIGHT_W_HI)
    # analytic Pareto tail: X = coef * (2^-W_HI / (1-u))^{1/gamma}
    mean += pareto_coef * 2.0 ** -RIGHT_W_HI * gamma / (gamma - 1.0)
    return mean


def _exp2_weighted(q, v_lo, v_hi):
    """integral of Q(v) ln2 2^{-v} dv for piecewise-linear Q on [lo, hi]."""
    n = len(q)
    h = (v_hi - v_lo) / (n - 1)
    v0 = v_lo + h * np.arange(n - 1)
    ln2 = math.log(2.0)
    w0 = np.exp2(-v0)
    w1 = np.exp2(-(v0 + h))
    i0 = (w0 - w1) / ln2              # integral of 2^{-v}
    i1 = (-h * w1 + i0) / ln2         # integral of (v - v0) 2^{-v}
    slope = (q[1:] - q[:-1]) / h
    return float(np.sum(ln2 * (q[:-1] * i0 + slope * i1)))


def quantiles(tables, u):
    """Vectorized numpy mirror of the numba sampler (tests, diagnostics)."""
    bulk, left, right, coef, shift, gamma = tables.pack()
    u = np.asarray(u, dtype=float)
    out = np.empty(u.shape)

    lo = u < BULK_U_LO
    hi = u > 1.0 - BULK_U_LO
    mid = ~(lo | hi)

    pos = (u[mid] - BULK_U_LO) / (1.0 - 2.0 * BULK_U_LO) * (BULK_N - 1)
    j = np.minimum(pos.astype(np.int64), BULK_N - 2)
    t = pos - j
    out[mid] = bulk[j] * (1.0 - t) + bulk[j + 1] * t

    v = -np.log2(u[lo])
    vc = np.minimum(v, LEFT_V_HI)
    pos = (vc - LEFT_V_LO) / (LEFT_V_HI - LEFT_V_LO) * (LEFT_N - 1)
    j = np.minimum(pos.astype(np.int64), LEFT_N - 2)
    t = pos - j
    out[lo] = left[j] * (1.0 - t) + left[j + 1] * t

    w = -np.log2(1.0 - u[hi])
    tail = w >= RIGHT_W_HI
    pos = (np.minimum(w, RIGHT_W_HI) - RIGHT_W_LO) \
        / (RIGHT_W_HI - RIGHT_W_LO) * (RIGHT_N - 1)
    j = np.minimum(pos.astype(np.int64), RIGHT_N - 2)
    t = pos - j
    vals = right[j] * (1.0 - t) + right[j + 1] * t
    if np.any(tail):
        ratio = 2.0 ** -RIGHT_W_HI / (1.0 - u[hi][tail])
        vals[tail] = coef * ratio ** (1.0 / gamma) - shift
    out[hi] = vals
    return out


@njit(cache=True, inline="always")
def sample_increment(s, bulk, left, right, pareto_coef, shift, gamma):
    """One zero-mean spectrally positive stable draw from packed tables."""
    u = uniform(s)
    if u < 0.00390625:  # 2^-8
        v = -np.log2(u)
        if v >= 32.0:
            return left[768]
        pos = (v - 8.0) * 32.0
        j = int(pos)
        t = pos - j
        return left[j] * (1.0 - t) + left[j + 1] * t
    if u > 0.99609375:  # 1 - 2^-8
        w = -np.log2(1.0 - u)
        if w >= 20.0:
            return pareto_coef \
                * (9.5367431640625e-07 / (1.0 - u)) ** (1.0 / gamma) - shift
        pos = (w - 8.0) * 32.0
        j = int(pos)
        t = pos - j
        return right[j] * (1.0 - t) + right[j + 1] * t
    pos = (u - 0.00390625) * (4096.0 / 0.9921875)
    j = int(pos)
    t = pos - j
    if j >= 4096:
        j = 4095
        t = 1.0
    return bulk[j] * (1.0 - t) + bulk[j + 1] * t
