"""Feed diversity, echo-chamber aggregates and state comparison."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .estimation import compute_echo_profile
from .graph import NewsfeedState, RecommendationPolicy, UserGraph

DEFAULT_BINS = 20

RECOMMENDED_SHARE_NOTE = (
    "recommended share of party s for user n is x[n, s] / sum_s' x[n, s']; "
    "reported values are means over users"
)


def phi(p_row) -> float:
    """Diversity of one feed: 0 for a single-party feed, 1 when all parties are equal.

    >>> phi([0.5, 0.5, 0.0, 0.0, 0.0])
    0.625
    """
    p = np.asarray(p_row, dtype=float)
    if p.ndim != 1 or p.size < 2:
        raise ValueError("diversity needs a probability vector over at least two parties")
    if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-6:
        raise ValueError("feed row is not a probability vector")
    s = p.size
    return float(s / (s - 1) * np.sum(p * (1.0 - p)))


def diversity(p) -> np.ndarray:
    """Row-wise diversity of an ``(N, S)`` array, without validation (NaN rows stay NaN)."""
    p = np.asarray(p, dtype=float)
    s = p.shape[1]
    if s < 2:
        raise ValueError("diversity needs at least two parties")
    return s / (s - 1) * np.sum(p * (1.0 - p), axis=1)


def mean_diversity(p) -> float:
    return float(np.nanmean(diversity(p)))


def histogram(values, bins=DEFAULT_BINS):
    """Counts over equal bins of [0, 1], right-closed; 0 lands in the first bin."""
    values = np.asarray(values, dtype=float)
    values = values[~np.isnan(values)]
    edges = np.linspace(0.0, 1.0, bins + 1)
    idx = np.clip(np.searchsorted(edges, values, side="left") - 1, 0, bins - 1)
    return edges, np.bincount(idx, minlength=bins)


@dataclass(eq=False)
class DiversityReport:
    diversity: np.ndarray
    echo: np.ndarray
    mean_diversity: float
    mean_echo: float
    content_share: np.ndarray
    recommended_share: np.ndarray | None
    diversity_hist: tuple[np.ndarray, np.ndarray]
    echo_hist: tuple[np.ndarray, np.ndarray]
    n_valid: int
    n_masked: int
    metadata: dict = field(default_factory=dict)

    def summary(self, parties=None) -> dict:
        labels = list(parties.labels) if parties is not None else list(range(len(self.content_share)))
        out = {
            "mean_diversity": self.mean_diversity,
            "mean_echo": self.mean_echo,
            "n_valid": self.n_valid,
            "n_masked": self.n_masked,
            "content_share": dict(zip(labels, self.content_share.tolist())),
            "echo_above_0.9": float(np.nanmean(self.echo > 0.9)) if self.n_valid else None,
            "echo_equal_1": float(np.nanmean(np.isclose(self.echo, 1.0))) if self.n_valid else None,
        }
        if self.recommended_share is not None:
            out["recommended_share"] = dict(zip(labels, self.recommended_share.tolist()))
        out.update(self.metadata)
        return out


def aggregate(state: NewsfeedState, graph: UserGraph, policy: RecommendationPolicy | None = None,
              bins: int = DEFAULT_BINS) -> DiversityReport:
    valid = state.valid
    if not valid.any():
        raise ValueError("every row of the feed state is masked")
    div = np.full(graph.n_users, np.nan)
    div[valid] = diversity(state.p[valid])
    echo = compute_echo_profile(state, graph)
    metadata = {}
    rec_share = None
    if policy is not None:
        nu = policy.shares()
        has = ~np.isnan(nu).any(axis=1)
        if has.any():
            rec_share = nu[has].mean(axis=0)
        metadata["recommended_share_definition"] = RECOMMENDED_SHARE_NOTE
        metadata["budget"] = policy.budget
    return DiversityReport(
        diversity=div,
        echo=echo,
        mean_diversity=float(div[valid].mean()),
        mean_echo=float(echo[valid].mean()),
        content_share=state.p[valid].mean(axis=0),
        recommended_share=rec_share,
        diversity_hist=histogram(div, bins),
        echo_hist=histogram(echo, bins),
        n_valid=int(valid.sum()),
        n_masked=int((~valid).sum()),
        metadata=metadata,
    )


@dataclass(eq=False)
class ComparisonStats:
    mean_abs_error: float
    correlation: list  # per party; None where either side has zero variance
    mean_echo_a: float | None
    mean_echo_b: float | None
    n_users: int

    def to_dict(self, parties=None):
        labels = list(parties.labels) if parties is not None else list(range(len(self.correlation)))
        return {
            "mean_abs_error": self.mean_abs_error,
            "correlation": {str(k): ("n/a" if c is None else c) for k, c in zip(labels, self.correlation)},
            "mean_echo_a": self.mean_echo_a,
            "mean_echo_b": self.mean_echo_b,
            "n_users": self.n_users,
        }


def pearson(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    da, db = a - a.mean(), b - b.mean()
    va, vb = np.dot(da, da), np.dot(db, db)
    if a.size < 2 or va <= 0 or vb <= 0:
        return None
    return float(np.clip(np.dot(da, db) / np.sqrt(va * vb), -1.0, 1.0))


def compare(a: NewsfeedState, b: NewsfeedState, graph: UserGraph | None = None) -> ComparisonStats:
    """Mean absolute entry error and per-party Pearson correlation over users valid in both."""
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    both = a.valid & b.valid
    pa, pb = a.p[both], b.p[both]
    err = float(np.mean(np.abs(pa - pb))) if pa.size else float("nan")
    corr = [pearson(pa[:, s], pb[:, s]) for s in range(a.shape[1])]
    echo_a = echo_b = None
    if graph is not None and both.any():
        echo_a = float(np.mean(compute_echo_profile(a, graph)[both]))
        echo_b = float(np.mean(compute_echo_profile(b, graph)[both]))
    return ComparisonStats(err, corr, echo_a, echo_b, int(both.sum()))
