"""numba-compiled kernels."""

import math
import types

import numba as nb
import numpy as np

from adskew.kernels import scalar

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_MUL1 = np.uint64(0xBF58476D1CE4E5B9)
_MUL2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_TWO_NEG_53 = 1.0 / 9007199254740992.0
_INVERSION_MAX_N = scalar.INVERSION_MAX_N
_TRUNC_MAX_TRIES = scalar.TRUNC_MAX_TRIES

# the bundled TBB is too old for numba; skip it instead of warning on every run
nb.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]

_jit = nb.njit(cache=True, nogil=True)


def _rebind(fn, namespace):
    return types.FunctionType(fn.__code__, namespace, fn.__name__, fn.__defaults__)


# pmf_at_mode looks its helpers up by global name, so compile the scalar
# module's functions against a private namespace holding jitted versions
_ns = dict(vars(scalar))
for _name in ("stirlerr", "bd0", "binomial_mode", "pmf_at_mode"):
    _ns[_name] = _jit(_rebind(getattr(scalar, _name), _ns))
_binomial_mode = _ns["binomial_mode"]
_pmf_at_mode = _ns["pmf_at_mode"]


@_jit
def _next_unit(state):
    state = state + _GAMMA
    z = state
    z = (z ^ (z >> _S30)) * _MUL1
    z = (z ^ (z >> _S27)) * _MUL2
    z = z ^ (z >> _S31)
    return state, ((z >> _S11) + 0.5) * _TWO_NEG_53


@_jit
def _binomial(n, p, state):
    if n == 0 or p <= 0.0:
        return 0, state
    if p >= 1.0:
        return n, state
    flip = p > 0.5
    pp = 1.0 - p if flip else p
    r = pp / (1.0 - pp)
    state, u = _next_unit(state)
    if n < _INVERSION_MAX_N:
        f = math.exp(n * math.log1p(-pp))
        k = 0
        while True:
            u = u - f
            if u <= 0.0 or k >= n:
                break
            f = f * (n - k) / (k + 1) * r
            k += 1
    else:
        m = _binomial_mode(n, pp)
        fm = _pmf_at_mode(n, pp)
        u = u - fm
        k = m
        if u > 0.0:
            lo = m
            hi = m
            flo = fm
            fhi = fm
            while True:
                if hi < n:
                    fhi = fhi * (n - hi) / (hi + 1) * r
                    hi += 1
                    u = u - fhi
                    if u <= 0.0:
                        k = hi
                        break
                if lo > 0:
                    flo = flo * lo / (n - lo + 1) / r
                    lo -= 1
                    u = u - flo
                    if u <= 0.0:
                        k = lo
                        break
                if hi >= n and lo <= 0:
                    k = m
                    break
    if flip:
        k = n - k
    return k, state


@_jit
def _truncated_normal(mean, sigma, state):
    p = mean
    for _ in range(_TRUNC_MAX_TRIES):
        while True:
            state, u1 = _next_unit(state)
            state, u2 = _next_unit(state)
            v1 = 2.0 * u1 - 1.0
            v2 = 2.0 * u2 - 1.0
            s = v1 * v1 + v2 * v2
            if 0.0 < s < 1.0:
                break
        p = mean + sigma * (v1 * math.sqrt(-2.0 * math.log(s) / s))
        if 0.0 <= p <= 1.0:
            return p, state
    return min(max(p, 0.0), 1.0), state


@nb.njit(cache=True, parallel=True)
def sample_unknown_male(keys, n_unknown, p, sigma, normal_prior):
    """Unknown-pool male counts, one independent stream per draw."""
    out = np.empty(keys.size, dtype=np.int64)
    for i in nb.prange(keys.size):
        state = keys[i]
        pi = p
        if normal_prior:
            pi, state = _truncated_normal(p, sigma, state)
        k, state = _binomial(n_unknown, pi, state)
        out[i] = k
    return out


@_jit
def binomial_draws(keys, n, probs):
    out = np.empty(keys.size, dtype=np.int64)
    for i in range(keys.size):
        k, _ = _binomial(n, probs[i], keys[i])
        out[i] = k
    return out


@_jit
def allocate_campaign(scores, cpc_cents, click, convert, label, budget_cents):
    """Greedy fill of one campaign's daily budget.

    Opportunities are taken in ascending score order (stable) while the
    potential click cost still fits in the remaining budget; the first one that
    does not fit ends the day. Returns counts[label, (impr, clicks, conv, spend)].
    """
    counts = np.zeros((3, 4), dtype=np.int64)
    order = np.argsort(scores, kind="mergesort")
    spent = 0
    for j in range(order.size):
        i = order[j]
        if spent + cpc_cents[i] > budget_cents:
            break
        g = label[i]
        counts[g, 0] += 1
        if click[i]:
            counts[g, 1] += 1
            counts[g, 3] += cpc_cents[i]
            spent += cpc_cents[i]
            if convert[i]:
                counts[g, 2] += 1
    return counts
