"""Scalar building blocks shared by both kernel backends.

Plain Python on purpose: the numba backend compiles these with ``njit`` and
the numpy backend calls them directly for per-draw setup, so both backends
evaluate the same expressions in the same order.

Binomial probabilities avoid ``lgamma`` (numba and CPython ship different
implementations); the pmf at the mode uses Loader's saddle-point form, which
needs only ``log``.
"""

import math

# Stirling-series error lgamma(n+1) - (n+.5)log(n) + n - log(sqrt(2pi)), n = 0..15
STIRLERR_TABLE = (
    0.0,
    0.0810614667953272582196702,
    0.0413406959554092940938221,
    0.02767792568499833914878929,
    0.02079067210376509311152277,
    0.01664469118982119216319487,
    0.01387612882307074799874573,
    0.01189670994589177009505572,
    0.010411265261972096497478567,
    0.009255462182712732917728637,
    0.008330563433362871256469318,
    0.007573675487951840794972024,
    0.006942840107209529865664152,
    0.006408994188004207068439631,
    0.005951370112758847735624416,
    0.005554733551962801371038690,
)

S0 = 1.0 / 12.0
S1 = 1.0 / 360.0
S2 = 1.0 / 1260.0
S3 = 1.0 / 1680.0
S4 = 1.0 / 1188.0
LOG_2PI = 1.8378770664093454835606594728112

# binomial inversion switches from chop-down-from-zero to mode-centred search here
INVERSION_MAX_N = 1000
# truncated-normal rejection attempts before falling back to clamping
TRUNC_MAX_TRIES = 1000


def stirlerr(n):
    if n <= 15:
        return STIRLERR_TABLE[n]
    nn = float(n) * float(n)
    if n > 500:
        return (S0 - S1 / nn) / n
    if n > 80:
        return (S0 - (S1 - S2 / nn) / nn) / n
    if n > 35:
        return (S0 - (S1 - (S2 - S3 / nn) / nn) / nn) / n
    return (S0 - (S1 - (S2 - (S3 - S4 / nn) / nn) / nn) / nn) / n


def bd0(x, npr):
    """Deviance term x*log(x/np) + np - x, evaluated stably near x == np."""
    d = x - npr
    if abs(d) < 0.1 * (x + npr):
        v = d / (x + npr)
        s = d * v
        ej = 2.0 * x * v
        v = v * v
        for j in range(1, 1000):
            ej = ej * v
            s1 = s + ej / (2 * j + 1)
            if s1 == s:
                return s1
            s = s1
        return s
    return x * math.log(x / npr) + npr - x


def binomial_mode(n, p):
    m = int(math.floor((n + 1) * p))
    if m > n:
        m = n
    return m


def pmf_at_mode(n, p):
    """Binomial(n, p) probability of its mode, for 0 < p <= 0.5."""
    m = binomial_mode(n, p)
    if m == 0:
        return math.exp(n * math.log1p(-p))
    q = 1.0 - p
    lf = (
        stirlerr(n)
        - stirlerr(m)
        - stirlerr(n - m)
        - bd0(float(m), n * p)
        - bd0(float(n - m), n * q)
        + 0.5 * (math.log(float(n) / (float(m) * float(n - m))) - LOG_2PI)
    )
    return math.exp(lf)
