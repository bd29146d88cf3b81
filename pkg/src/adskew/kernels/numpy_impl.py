"""Pure-numpy kernels, vectorized across draws / opportunities.

Each loop advances every still-active draw by one step of the scalar
algorithm, so results match the numba backend bit for bit.
"""

import numpy as np

from adskew import rng
from adskew.kernels import scalar

_GAMMA = np.uint64(rng.GAMMA)


def _next_unit(states, idx):
    """Advance the streams at ``idx`` one step; return their uniforms."""
    with np.errstate(over="ignore"):
        states[idx] = states[idx] + _GAMMA
    return rng.to_unit(rng.mix64_array(states[idx]))


def _binomial(n, p, states):
    p = np.asarray(p, dtype=np.float64)
    out = np.zeros(p.size, dtype=np.int64)
    if n == 0:
        return out
    out[p >= 1.0] = n
    work = np.flatnonzero((p > 0.0) & (p < 1.0))
    if work.size == 0:
        return out
    pw = p[work]
    flip = pw > 0.5
    pp = np.where(flip, 1.0 - pw, pw)
    r = pp / (1.0 - pp)
    u = _next_unit(states, work)

    if n < scalar.INVERSION_MAX_N:
        f = rng.libm_exp(n * rng.libm_log1p(-pp))
        k = np.zeros(work.size, dtype=np.int64)
        active = np.ones(work.size, dtype=bool)
        while True:
            a = np.flatnonzero(active)
            if a.size == 0:
                break
            u[a] = u[a] - f[a]
            stop = (u[a] <= 0.0) | (k[a] >= n)
            active[a[stop]] = False
            a = a[~stop]
            f[a] = f[a] * (n - k[a]) / (k[a] + 1) * r[a]
            k[a] += 1
    else:
        uniq, inverse = np.unique(pp, return_inverse=True)
        m = np.array([scalar.binomial_mode(n, float(x)) for x in uniq], dtype=np.int64)[inverse]
        fm = np.array([scalar.pmf_at_mode(n, float(x)) for x in uniq])[inverse]
        u = u - fm
        k = m.copy()
        lo, hi = m.copy(), m.copy()
        flo, fhi = fm.copy(), fm.copy()
        active = u > 0.0
        while True:
            a = np.flatnonzero(active & (hi < n))
            fhi[a] = fhi[a] * (n - hi[a]) / (hi[a] + 1) * r[a]
            hi[a] += 1
            u[a] = u[a] - fhi[a]
            hit = a[u[a] <= 0.0]
            k[hit] = hi[hit]
            active[hit] = False

            a = np.flatnonzero(active & (lo > 0))
            flo[a] = flo[a] * lo[a] / (n - lo[a] + 1) / r[a]
            lo[a] -= 1
            u[a] = u[a] - flo[a]
            hit = a[u[a] <= 0.0]
            k[hit] = lo[hit]
            active[hit] = False

            spent = np.flatnonzero(active & (hi >= n) & (lo <= 0))
            k[spent] = m[spent]
            active[spent] = False
            if not active.any():
                break
    out[work] = np.where(flip, n - k, k)
    return out


def _truncated_normal(mean, sigma, states):
    size = states.size
    p = np.full(size, mean, dtype=np.float64)
    tries = np.zeros(size, dtype=np.int64)
    active = np.ones(size, dtype=bool)
    while True:
        a = np.flatnonzero(active)
        if a.size == 0:
            return p
        # polar method draws two uniforms per attempt
        u1 = _next_unit(states, a)
        u2 = _next_unit(states, a)
        v1 = 2.0 * u1 - 1.0
        v2 = 2.0 * u2 - 1.0
        s = v1 * v1 + v2 * v2
        ok = (s > 0.0) & (s < 1.0)
        a, v1, s = a[ok], v1[ok], s[ok]
        cand = mean + sigma * (v1 * np.sqrt(-2.0 * rng.libm_log(s) / s))
        p[a] = cand
        tries[a] += 1
        inside = (cand >= 0.0) & (cand <= 1.0)
        active[a[inside]] = False
        out_of_tries = a[~inside & (tries[a] >= scalar.TRUNC_MAX_TRIES)]
        p[out_of_tries] = np.clip(p[out_of_tries], 0.0, 1.0)
        active[out_of_tries] = False


def sample_unknown_male(keys, n_unknown, p, sigma, normal_prior):
    states = np.array(keys, dtype=np.uint64, copy=True)
    if normal_prior:
        probs = _truncated_normal(p, sigma, states)
    else:
        probs = np.full(states.size, p, dtype=np.float64)
    return _binomial(n_unknown, probs, states)


def binomial_draws(keys, n, probs):
    states = np.array(keys, dtype=np.uint64, copy=True)
    return _binomial(n, probs, states)


def allocate_campaign(scores, cpc_cents, click, convert, label, budget_cents):
    counts = np.zeros((3, 4), dtype=np.int64)
    order = np.argsort(scores, kind="stable")
    cpc = cpc_cents[order]
    charged = np.where(click[order], cpc, 0)
    spent_before = np.cumsum(charged) - charged
    fits = spent_before + cpc <= budget_cents
    n_take = order.size if fits.all() else int(np.argmin(fits))
    take = order[:n_take]
    g = label[take]
    clicked = click[take].astype(bool)
    counts[:, 0] = np.bincount(g, minlength=3)
    counts[:, 1] = np.bincount(g[clicked], minlength=3)
    counts[:, 2] = np.bincount(g[clicked & convert[take].astype(bool)], minlength=3)
    counts[:, 3] = np.bincount(g[clicked], weights=cpc_cents[take][clicked], minlength=3).astype(np.int64)
    return counts
