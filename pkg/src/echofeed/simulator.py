"""Continuous-time simulation of finite newsfeeds.

Every user holds a feed of at most ``feed_size`` labelled posts. Selfposts
(rate ``selfpost_by_party[n, s]``) and reposts (rate ``repost[n]``, item drawn
uniformly from the reposter's own feed) are pushed to all followers;
recommendations (rate ``x[n, s]``) are pushed to ``n`` alone. A push into a
full feed evicts a uniformly chosen slot. All clocks are exponential with
state-independent rates, so the superposed event stream is drawn exactly
as a Poisson process.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .graph import ActivityRates, NewsfeedState, RecommendationPolicy, UserGraph, validate

_SELF, _REPOST, _REC = 0, 1, 2


class SimulationError(ValueError):
    pass


@dataclass(frozen=True)
class SimConfig:
    horizon: float
    feed_size: int = 10
    burn_in: float = 0.2
    seed: int = 0
    policy: RecommendationPolicy | None = None
    batches: int = 10

    def __post_init__(self):
        if self.feed_size < 1:
            raise SimulationError("feed size must be at least 1")
        if not self.horizon > 0:
            raise SimulationError("horizon must be positive")
        if not 0.0 <= self.burn_in < 1.0:
            raise SimulationError("burn-in fraction must lie in [0, 1)")
        if self.batches < 1:
            raise SimulationError("need at least one batch")


@dataclass(eq=False)
class SimulationResult:
    state: NewsfeedState
    counts: dict
    half_width: np.ndarray  # 99% batch-means confidence half-width per entry
    batch_p: np.ndarray = field(repr=False)

    def diagnostics(self) -> dict:
        return dict(self.counts)


def _channels(graph, rates, policy):
    kinds, users, labels, weights = [], [], [], []
    n_idx, s_idx = np.nonzero(rates.selfpost_by_party > 0)
    kinds.append(np.full(n_idx.size, _SELF))
    users.append(n_idx)
    labels.append(s_idx)
    weights.append(rates.selfpost_by_party[n_idx, s_idx])
    r_idx = np.flatnonzero(rates.repost > 0)
    kinds.append(np.full(r_idx.size, _REPOST))
    users.append(r_idx)
    labels.append(np.full(r_idx.size, -1))
    weights.append(rates.repost[r_idx])
    if policy is not None:
        x_n, x_s = np.nonzero(policy.rates > 0)
        kinds.append(np.full(x_n.size, _REC))
        users.append(x_n)
        labels.append(x_s)
        weights.append(policy.rates[x_n, x_s])
    return (np.concatenate(kinds), np.concatenate(users), np.concatenate(labels),
            np.concatenate(weights).astype(float))


def simulate(graph: UserGraph, rates: ActivityRates, cfg: SimConfig) -> SimulationResult:
    """Time-averaged feed composition after burn-in; deterministic given ``cfg.seed``.

    Feeds start empty and empty-feed time is excluded from the averages.
    Reposts attempted from an empty feed are skipped and counted.
    """
    diag = validate(graph, rates)
    if not diag.ok:
        raise SimulationError("invalid instance: " + "; ".join(diag.failures))
    policy = cfg.policy
    if policy is not None and policy.rates.shape != (graph.n_users, graph.n_parties):
        raise SimulationError("policy shape does not match graph")

    kinds, users, labels, weights = _channels(graph, rates, policy)
    total_rate = float(weights.sum())
    if total_rate <= 0:
        raise SimulationError("no events")

    n, s, K = graph.n_users, graph.n_parties, cfg.feed_size
    T = float(cfg.horizon)
    t0 = cfg.burn_in * T
    nb = cfg.batches
    bounds = [t0 + (T - t0) * (b + 1) / nb for b in range(nb)]

    rng = np.random.default_rng(cfg.seed)
    pyrng = random.Random(int(rng.integers(2**63)))
    cum = np.cumsum(weights) / total_rate
    kinds, users, labels = kinds.tolist(), users.tolist(), labels.tolist()
    fol = graph.followers
    followers = [fol.indices[fol.indptr[k]:fol.indptr[k + 1]].tolist() for k in range(n)]

    feeds = [[] for _ in range(n)]
    counts = [[0] * s for _ in range(n)]
    last = [0.0] * n
    occ = np.zeros((nb, n, s))
    tot = np.zeros((nb, n))
    occ_rows = [[[0.0] * s for _ in range(n)] for _ in range(nb)]
    tot_rows = [[0.0] * n for _ in range(nb)]
    batch = -1  # -1 while in burn-in
    occ_b = tot_b = None
    event_counts = {"selfpost": 0, "repost": 0, "recommendation": 0, "skipped_repost": 0}

    def flush(f, t):
        # accumulate feed f's composition over [last[f], t] into the current batch
        if batch >= 0:
            dt = t - last[f]
            size = len(feeds[f])
            if dt > 0 and size:
                w = dt / size
                row = occ_b[f]
                for lab, c in enumerate(counts[f]):
                    if c:
                        row[lab] += w * c
                tot_b[f] += dt
        last[f] = t

    def push(f, lab, t):
        flush(f, t)
        feed = feeds[f]
        cnt = counts[f]
        if len(feed) < K:
            feed.append(lab)
        else:
            j = int(pyrng.random() * K)
            cnt[feed[j]] -= 1
            feed[j] = lab
        cnt[lab] += 1

    def cross(t_boundary):
        nonlocal batch, occ_b, tot_b
        for f in range(n):
            flush(f, t_boundary)
        batch += 1
        if batch < nb:
            occ_b, tot_b = occ_rows[batch], tot_rows[batch]

    next_boundary = t0 if t0 > 0 else None
    if next_boundary is None:
        cross(0.0)
        next_boundary = bounds[0]
    t = 0.0
    chunk = 65536
    done = False
    while not done:
        gaps = rng.exponential(1.0 / total_rate, size=chunk)
        picks = np.searchsorted(cum, rng.random(chunk), side="right")
        np.minimum(picks, cum.size - 1, out=picks)
        times = (t + np.cumsum(gaps)).tolist()
        for t, ch in zip(times, picks.tolist()):
            while next_boundary is not None and t > next_boundary:
                cross(next_boundary)
                next_boundary = bounds[batch] if batch < nb else None
            if t > T:
                done = True
                break
            kind = kinds[ch]
            u = users[ch]
            if kind == _SELF:
                event_counts["selfpost"] += 1
                lab = labels[ch]
                for f in followers[u]:
                    push(f, lab, t)
            elif kind == _REPOST:
                feed = feeds[u]
                if not feed:
                    event_counts["skipped_repost"] += 1
                    continue
                event_counts["repost"] += 1
                lab = feed[int(pyrng.random() * len(feed))]
                for f in followers[u]:
                    push(f, lab, t)
            else:
                event_counts["recommendation"] += 1
                push(u, labels[ch], t)
    while batch < nb:
        cross(next_boundary if next_boundary is not None else T)
        next_boundary = bounds[batch] if batch < nb else None

    occ[:] = np.asarray(occ_rows)
    tot[:] = np.asarray(tot_rows)
    all_occ = occ.sum(axis=0)
    all_tot = tot.sum(axis=0)
    valid = all_tot > 0
    p = np.full((n, s), np.nan)
    p[valid] = all_occ[valid] / all_tot[valid, None]
    with np.errstate(invalid="ignore", divide="ignore"):
        batch_p = occ / tot[:, :, None]
    if nb > 1:
        q = stats.t.ppf(0.995, nb - 1)
        half = q * np.std(batch_p, axis=0, ddof=1) / np.sqrt(nb)
    else:
        half = np.full((n, s), np.nan)

    event_counts["empty_feed_time"] = float(n * (T - t0) - all_tot.sum())
    event_counts["horizon"] = T
    event_counts["measured_time"] = T - t0
    expected = {
        "selfpost": float(rates.selfpost.sum() * T),
        "repost": float(rates.repost.sum() * T),
        "recommendation": float(policy.rates.sum() * T) if policy is not None else 0.0,
    }
    event_counts["expected"] = expected
    state = NewsfeedState(p, valid, meta={"source": "simulation", "seed": cfg.seed, "feed_size": K})
    return SimulationResult(state, event_counts, half, batch_p)


def convergence_sweep(graph, rates, cfg: SimConfig, horizons, reference: NewsfeedState | None = None):
    """Mean and max absolute deviation from the model equilibrium for each horizon."""
    horizons = [float(h) for h in horizons]
    if any(h <= 0 for h in horizons):
        raise SimulationError("no measurement window")
    if any(b <= a for a, b in zip(horizons, horizons[1:])):
        raise SimulationError("horizons must be increasing")
    if reference is None:
        from .equilibrium import solve_equilibrium, solve_with_recommendations

        if cfg.policy is None:
            reference = solve_equilibrium(graph, rates)
        else:
            reference = solve_with_recommendations(graph, rates, cfg.policy)
    rows = []
    for h in horizons:
        run = simulate(graph, rates, SimConfig(h, cfg.feed_size, cfg.burn_in, cfg.seed, cfg.policy, cfg.batches))
        ok = run.state.valid & reference.valid
        err = np.abs(run.state.p[ok] - reference.p[ok])
        rows.append({
            "horizon": h,
            "mean_abs_error": float(err.mean()) if err.size else float("nan"),
            "max_abs_error": float(err.max()) if err.size else float("nan"),
            "events": run.counts["selfpost"] + run.counts["repost"] + run.counts["recommendation"],
        })
    return rows
