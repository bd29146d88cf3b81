"""Monte Carlo skew under assumed gender distributions for unknown-label users.

Each draw splits the unknown impressions into simulated male and female
counts, ``U_M ~ Binomial(p, N_U)``, and reports
``(N_M + U_M) / (N_M + N_F + N_U)``. Priors differ only in how ``p`` is chosen.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from adskew import kernels, rng
from adskew.core import InvalidArgumentError

SIMILARWEB_MALE_SHARE = 0.58
SYMMETRIC_MALE_SHARE = 0.5


class PriorKind(str, enum.Enum):
    BINOMIAL_SYMMETRIC = "binomial_symmetric"
    BINOMIAL_INFORMATIVE = "binomial_informative"
    NORMAL_INFORMATIVE = "normal_informative"
    BINOMIAL_SIMILARWEB = "binomial_similarweb"
    SYMMETRIC_SOLVE = "symmetric_solve"
    SIMILARWEB_SOLVE = "similarweb_solve"


_DEFAULT_P = {
    PriorKind.BINOMIAL_SYMMETRIC: SYMMETRIC_MALE_SHARE,
    PriorKind.BINOMIAL_SIMILARWEB: SIMILARWEB_MALE_SHARE,
    PriorKind.SYMMETRIC_SOLVE: SYMMETRIC_MALE_SHARE,
    PriorKind.SIMILARWEB_SOLVE: SIMILARWEB_MALE_SHARE,
}
_INFORMATIVE = (PriorKind.BINOMIAL_INFORMATIVE, PriorKind.NORMAL_INFORMATIVE)
_SOLVE = (PriorKind.SYMMETRIC_SOLVE, PriorKind.SIMILARWEB_SOLVE)


@dataclass(frozen=True)
class ObservedCounts:
    n_male: int
    n_female: int
    n_unknown: int

    def __post_init__(self):
        if min(self.n_male, self.n_female, self.n_unknown) < 0:
            raise InvalidArgumentError("observed counts must be non-negative")

    @property
    def n_total(self) -> int:
        return self.n_male + self.n_female + self.n_unknown

    @property
    def known_skew(self) -> float:
        return self.n_male / (self.n_male + self.n_female)


@dataclass(frozen=True)
class PriorModel:
    """A prior on the male share of unknown users.

    ``p_fixed`` is the assumed share for the fixed priors and the target total
    share for the solve variants. ``sigma_p`` applies to the normal prior only;
    left as None it defaults to the standard error of the observed share.
    """

    kind: PriorKind
    p_fixed: float | None = None
    sigma_p: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", PriorKind(self.kind))
        if self.p_fixed is None and self.kind in _DEFAULT_P:
            object.__setattr__(self, "p_fixed", _DEFAULT_P[self.kind])
        if self.p_fixed is not None and not 0.0 <= self.p_fixed <= 1.0:
            raise InvalidArgumentError(f"p_fixed must be in [0, 1], got {self.p_fixed}")
        if self.sigma_p is not None and self.sigma_p < 0:
            raise InvalidArgumentError("sigma_p must be non-negative")

    @property
    def name(self) -> str:
        return self.kind.value


def prior_p(prior: PriorModel, observed: ObservedCounts) -> float:
    """Probability that an unknown impression is male under ``prior``.

    For the normal prior this is the mean of the per-draw distribution; see
    ``prior_sigma`` for its spread.
    """
    kind = prior.kind
    if kind in _INFORMATIVE:
        known = observed.n_male + observed.n_female
        if known < 1:
            raise InvalidArgumentError(f"{kind.value} needs at least one male or female impression")
        return observed.n_male / known
    if kind in _SOLVE:
        if observed.n_unknown < 1:
            raise InvalidArgumentError(f"{kind.value} needs at least one unknown impression")
        solved = (prior.p_fixed * observed.n_total - observed.n_male) / observed.n_unknown
        return min(max(solved, 0.0), 1.0)
    return prior.p_fixed


def unclamped_solve_p(prior: PriorModel, observed: ObservedCounts) -> float:
    if prior.kind not in _SOLVE:
        raise InvalidArgumentError("only solve priors have an unclamped p")
    return (prior.p_fixed * observed.n_total - observed.n_male) / observed.n_unknown


def prior_sigma(prior: PriorModel, observed: ObservedCounts) -> float:
    if prior.kind is not PriorKind.NORMAL_INFORMATIVE:
        return 0.0
    if prior.sigma_p is not None:
        return prior.sigma_p
    p = prior_p(prior, observed)
    return math.sqrt(p * (1.0 - p) / (observed.n_male + observed.n_female))


@dataclass(frozen=True)
class SkewDistribution:
    draws: np.ndarray = field(repr=False)
    prior: PriorModel
    observed: ObservedCounts
    seed: int

    @property
    def support(self) -> tuple[float, float]:
        """Smallest and largest skew any draw could produce."""
        total = self.observed.n_total
        return self.observed.n_male / total, (self.observed.n_male + self.observed.n_unknown) / total


def simulate_unknown_skew(
    observed: ObservedCounts,
    prior: PriorModel,
    draws: int = 1000,
    seed: int = 0,
    backend: str | None = None,
) -> SkewDistribution:
    """Simulated skew including unknown users, ``draws`` independent samples.

    Draw ``i`` uses the stream ``stream_key(seed, i)``, so results do not
    depend on how the draws are scheduled. With no unknown impressions every
    prior collapses to the observed male / (male + female) share.
    """
    if draws < 1:
        raise InvalidArgumentError("draws must be >= 1")
    if observed.n_total == 0:
        raise InvalidArgumentError("observed counts are all zero")
    if observed.n_unknown == 0:
        if observed.n_male + observed.n_female < 1:
            raise InvalidArgumentError("observed counts are all zero")
        values = np.full(draws, observed.n_male / observed.n_total)
        return SkewDistribution(values, prior, observed, seed)

    p = prior_p(prior, observed)
    sigma = prior_sigma(prior, observed)
    keys = rng.draw_keys(rng.stream_key(seed), draws)
    u_male = kernels.sample_unknown_male(
        keys,
        observed.n_unknown,
        p,
        sigma,
        normal_prior=prior.kind is PriorKind.NORMAL_INFORMATIVE,
        backend=backend,
    )
    values = (observed.n_male + u_male) / observed.n_total
    return SkewDistribution(values, prior, observed, seed)


def analytic_mean(observed: ObservedCounts, prior: PriorModel) -> float:
    """E[skew] for the binomial priors: (N_M + p * N_U) / N_total."""
    if observed.n_unknown == 0:
        return observed.n_male / observed.n_total
    return (observed.n_male + prior_p(prior, observed) * observed.n_unknown) / observed.n_total


@dataclass(frozen=True)
class DistributionSummary:
    bin_edges: np.ndarray = field(repr=False)
    counts: np.ndarray = field(repr=False)
    mode_bin: int
    mode: float
    mean: float
    std: float
    q01: float
    q50: float
    q99: float
    n: int

    def as_dict(self) -> dict:
        return {
            "mode_bin": [float(self.bin_edges[self.mode_bin]), float(self.bin_edges[self.mode_bin + 1])],
            "mode": self.mode,
            "mean": self.mean,
            "std": self.std,
            "q01": self.q01,
            "q50": self.q50,
            "q99": self.q99,
            "n": self.n,
        }


def summarize_distribution(dist: SkewDistribution | np.ndarray, bins: int = 50) -> DistributionSummary:
    """Histogram over [0, 1] in ``bins`` equal bins plus mode, mean and quantiles.

    Bin ``k`` covers ``[k/bins, (k+1)/bins)``; a draw of exactly 1.0 goes in
    the last bin. The mode is the centre of the fullest bin (lowest on ties).
    """
    values = np.asarray(dist.draws if isinstance(dist, SkewDistribution) else dist, dtype=np.float64)
    if values.size == 0:
        raise InvalidArgumentError("no draws to summarize")
    if bins < 1:
        raise InvalidArgumentError("bins must be >= 1")
    idx = np.clip(np.floor(values * bins).astype(np.int64), 0, bins - 1)
    counts = np.bincount(idx, minlength=bins)
    edges = np.arange(bins + 1) / bins
    mode_bin = int(np.argmax(counts))
    q01, q50, q99 = np.quantile(values, [0.01, 0.5, 0.99])
    return DistributionSummary(
        bin_edges=edges,
        counts=counts,
        mode_bin=mode_bin,
        mode=(mode_bin + 0.5) / bins,
        mean=float(values.mean()),
        std=float(values.std(ddof=1)) if values.size > 1 else 0.0,
        q01=float(q01),
        q50=float(q50),
        q99=float(q99),
        n=int(values.size),
    )


STANDARD_PRIORS = (
    PriorModel(PriorKind.BINOMIAL_SYMMETRIC),
    PriorModel(PriorKind.BINOMIAL_INFORMATIVE),
    PriorModel(PriorKind.NORMAL_INFORMATIVE),
    PriorModel(PriorKind.BINOMIAL_SIMILARWEB),
)
SOLVE_PRIORS = (
    PriorModel(PriorKind.SYMMETRIC_SOLVE),
    PriorModel(PriorKind.SIMILARWEB_SOLVE),
)
