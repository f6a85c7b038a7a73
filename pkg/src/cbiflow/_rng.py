"""Counter-seeded RNG streams and distribution samplers for the simulators.

Each sample path gets its own xoshiro256++ state derived from
(master seed, path index) through splitmix64, so ensembles are
byte-for-byte reproducible and independent of evaluation order.  All
samplers are classical textbook algorithms (Box-Muller normal,
Knuth / PTRS Poisson, Marsaglia-Tsang gamma, Kanter positive stable)
written as tiny kernels that numba can inline into the path loops.
"""

import math

import numpy as np

try:
    from numba import njit
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is an install requirement
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(f):
            return f
        if args and callable(args[0]):
            return args[0]
        return wrap

U64 = np.uint64
_MASK = U64(0xFFFFFFFFFFFFFFFF)
_GOLDEN = U64(0x9E3779B97F4A7C15)
# 2^-53; uniforms are ((x >> 11) + 0.5) * 2^-53, strictly inside (0, 1)
_INV53 = 1.1102230246251565e-16


@njit(cache=True, inline="always")
def _splitmix64(z):
    z = (z + _GOLDEN) & _MASK
    z = ((z ^ (z >> U64(30))) * U64(0xBF58476D1CE4E5B9)) & _MASK
    z = ((z ^ (z >> U64(27))) * U64(0x94D049BB133111EB)) & _MASK
    return z ^ (z >> U64(31))


@njit(cache=True, inline="always")
def _rotl(x, k):
    return ((x << U64(k)) | (x >> U64(64 - k))) & _MASK


@njit(cache=True)
def path_state(seed, k):
    """xoshiro256++ state for path k of the ensemble with this seed."""
    s = np.empty(4, dtype=np.uint64)
    z = U64(seed) ^ ((U64(k) + U64(1)) * _GOLDEN) & _MASK
    for i in range(4):
        z = _splitmix64(z)
        s[i] = z
    return s


@njit(cache=True, inline="always")
def next_u64(s):
    r = (_rotl((s[0] + s[3]) & _MASK, 23) + s[0]) & _MASK
    t = (s[1] << U64(17)) & _MASK
    s[2] ^= s[0]
    s[3] ^= s[1]
    s[1] ^= s[2]
    s[0] ^= s[3]
    s[2] ^= t
    s[3] = _rotl(s[3], 45)
    return r


@njit(cache=True, inline="always")
def uniform(s):
    """Uniform on the open interval (0, 1)."""
    return (np.float64(next_u64(s) >> U64(11)) + 0.5) * _INV53


@njit(cache=True, inline="always")
def exponential(s):
    return -np.log(uniform(s))


@njit(cache=True, inline="always")
def normal(s):
    u1 = uniform(s)
    u2 = uniform(s)
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(6.283185307179586 * u2)


@njit(cache=True, inline="always")
def poisson(s, mean):
    """Poisson sampler: Knuth's product method below 10, Hormann's PTRS
    transformed rejection above."""
    if mean <= 0.0:
        return 0
    if mean < 10.0:
        limit = np.exp(-mean)
        k = 0
        prod = uniform(s)
        while prod > limit:
            k += 1
            prod *= uniform(s)
        return k
    b = 0.931 + 2.53 * np.sqrt(mean)
    a = -0.059 + 0.02483 * b
    inv_alpha = 1.1239 + 1.1328 / (b - 3.4)
    v_r = 0.9277 - 3.6224 / (b - 2.0)
    log_mean = np.log(mean)
    while True:
        u = uniform(s) - 0.5
        v = uniform(s)
        us = 0.5 - abs(u)
        k = int(np.floor((2.0 * a / us + b) * u + mean + 0.43))
        if us >= 0.07 and v <= v_r:
            return k
        if k < 0 or (us < 0.013 and v > us):
            continue
        if (np.log(v * inv_alpha / (a / (us * us) + b))
                <= k * log_mean - mean - math.lgamma(k + 1.0)):
            return k


@njit(cache=True, inline="always")
def gamma(s, shape):
    """Marsaglia-Tsang gamma with unit scale; the shape < 1 boost uses
    gamma(shape + 1) * U^{1/shape}."""
    boost = 1.0
    if shape < 1.0:
        boost = uniform(s) ** (1.0 / shape)
        shape = shape + 1.0
    d = shape - 1.0 / 3.0
    c = 1.0 / np.sqrt(9.0 * d)
    while True:
        x = normal(s)
        v = 1.0 + c * x
        if v <= 0.0:
            continue
        v = v * v * v
        u = uniform(s)
        if np.log(u) < 0.5 * x * x + d - d * v + d * np.log(v):
            return boost * d * v


@njit(cache=True, inline="always")
def positive_stable(s, alpha):
    """Kanter's sampler for the one-sided stable law with Laplace
    transform exp(-lam^alpha), alpha in (0, 1)."""
    theta = np.pi * uniform(s)
    w = exponential(s)
    frac = (1.0 - alpha) / alpha
    # A(theta)^{(1-alpha)/alpha} of Zolotarev's function, expanded so the
    # outer power is already applied; divide by W^{(1-alpha)/alpha} only
    a_pow = (np.sin(alpha * theta)
             * np.sin((1.0 - alpha) * theta) ** frac
             / np.sin(theta) ** (1.0 / alpha))
    return a_pow / w ** frac
