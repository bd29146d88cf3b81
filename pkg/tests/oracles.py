"""Independent reference implementations used to check the package."""

import mpmath as mp


def agresti_coull_mp(successes: int, trials: int, level: float, dps: int = 40) -> tuple[float, float]:
    """Agresti-Coull interval evaluated in arbitrary precision.

    The quantile comes from the inverse error function rather than the
    rational approximation the package uses.
    """
    with mp.workdps(dps):
        z = mp.sqrt(2) * mp.erfinv(mp.mpf(level))
        n_adj = trials + z * z
        p_adj = (successes + z * z / 2) / n_adj
        half = z * mp.sqrt(p_adj * (1 - p_adj) / n_adj)
        return float(max(mp.mpf(0), p_adj - half)), float(min(mp.mpf(1), p_adj + half))


def stirlerr_mp(n: int, dps: int = 40) -> float:
    with mp.workdps(dps):
        if n == 0:
            return 0.0
        return float(mp.loggamma(n + 1) - (n + mp.mpf(0.5)) * mp.log(n) + n - mp.log(mp.sqrt(2 * mp.pi)))


def binom_pmf_mp(k: int, n: int, p: float, dps: int = 40) -> float:
    with mp.workdps(dps):
        return float(mp.binomial(n, k) * mp.mpf(p) ** k * (1 - mp.mpf(p)) ** (n - k))
