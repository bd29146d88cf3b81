"""Hot numeric kernels with a numba path and a pure-numpy fallback.

The backend is picked once from ``ADSKEW_BACKEND`` (``numba`` or ``numpy``);
numba is the default when it imports. Every public function also accepts an
explicit ``backend=`` so tests and the benchmark can compare the two. Both
backends return identical arrays for identical inputs.
"""

from __future__ import annotations

import importlib
import logging
import os

import numpy as np

log = logging.getLogger(__name__)

BACKENDS = ("numba", "numpy")
_loaded: dict[str, object] = {}


def _resolve_default() -> str:
    wanted = os.environ.get("ADSKEW_BACKEND", "numba").strip().lower()
    if wanted not in BACKENDS:
        raise ValueError(f"ADSKEW_BACKEND must be one of {BACKENDS}, got {wanted!r}")
    if wanted == "numba" and importlib.util.find_spec("numba") is None:
        log.warning("numba not installed; using the numpy kernels")
        return "numpy"
    return wanted


DEFAULT_BACKEND = _resolve_default()


def get_backend(backend: str | None = None):
    name = backend or DEFAULT_BACKEND
    if name not in BACKENDS:
        raise ValueError(f"unknown kernel backend {name!r}")
    if name not in _loaded:
        _loaded[name] = importlib.import_module(f"adskew.kernels.{name}_impl")
    return _loaded[name]


def sample_unknown_male(
    keys: np.ndarray,
    n_unknown: int,
    p: float,
    sigma: float = 0.0,
    normal_prior: bool = False,
    backend: str | None = None,
) -> np.ndarray:
    """Male count among ``n_unknown`` unknown-label impressions, one per key.

    With ``normal_prior`` each draw first samples its own probability from a
    Normal(p, sigma) truncated to [0, 1].
    """
    keys = np.ascontiguousarray(keys, dtype=np.uint64)
    impl = get_backend(backend)
    return impl.sample_unknown_male(keys, int(n_unknown), float(p), float(sigma), bool(normal_prior))


def binomial_draws(keys: np.ndarray, n: int, probs: np.ndarray, backend: str | None = None) -> np.ndarray:
    keys = np.ascontiguousarray(keys, dtype=np.uint64)
    probs = np.ascontiguousarray(np.broadcast_to(probs, keys.shape), dtype=np.float64)
    return get_backend(backend).binomial_draws(keys, int(n), probs)


def allocate_campaign(scores, cpc_cents, click, convert, label, budget_cents: int, backend: str | None = None):
    """Greedy budget fill for one campaign-slot; returns int64[3, 4] counts
    indexed by label (male, female, unknown) x (impr, clicks, conv, spend_cents)."""
    impl = get_backend(backend)
    return impl.allocate_campaign(
        np.ascontiguousarray(scores, dtype=np.float64),
        np.ascontiguousarray(cpc_cents, dtype=np.int64),
        np.ascontiguousarray(click, dtype=np.bool_),
        np.ascontiguousarray(convert, dtype=np.bool_),
        np.ascontiguousarray(label, dtype=np.int64),
        int(budget_cents),
    )
