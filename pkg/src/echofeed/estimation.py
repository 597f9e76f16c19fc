"""Activity-rate estimation and empirical newsfeed replay."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import REPOST, SELFPOST, ActivityRates, EventLog, NewsfeedState, UserGraph


@dataclass(frozen=True)
class ReplayConfig:
    """Fixed replay conventions.

    Periods during which a feed shows an unknown-origin post are excluded,
    equal timestamps are applied in input order, and every feed holds a
    single post.
    """

    exclude_unknown: bool = True
    stable_ties: bool = True
    feed_size: int = 1

    def __post_init__(self):
        if self.feed_size != 1:
            raise ValueError("replay is defined for feeds of size 1 only")
        if not (self.exclude_unknown and self.stable_ties):
            raise ValueError("replay conventions are fixed")


def estimate_rates(events: EventLog, graph: UserGraph) -> ActivityRates:
    """Selfpost/repost counts per user divided by the log duration.

    Each user's selfposts are attributed to their affiliation; a dual
    affiliation splits the rate equally between both parties.
    """
    duration = events.t_end - events.t_start
    if not duration > 0:
        raise ValueError("log span has zero length")
    index = graph.index_of()
    selfposts = np.zeros(graph.n_users)
    reposts = np.zeros(graph.n_users)
    for ev in events.events:
        try:
            n = index[ev.user]
        except KeyError:
            raise ValueError(f"event actor {ev.user!r} is not a graph user") from None
        if ev.kind == SELFPOST:
            selfposts[n] += 1
        elif ev.kind == REPOST:
            reposts[n] += 1
    lam = selfposts / duration
    by_party = graph.affiliation_matrix() * lam[:, None]
    # exact row sums, independent of the half split rounding
    return ActivityRates(by_party.sum(axis=1), reposts / duration, by_party)


class NewsfeedReplay:
    """Incremental replay of an event log on size-1 feeds.

    Each feed starts with an unknown-origin post. Every event by a leader
    replaces the feed content of all their followers with the event's label;
    ``occupation`` holds, per user and party, the time the feed showed that
    label (dual labels count half for each party). Arithmetic stays in the
    timestamps' number type, so ``fractions.Fraction`` input gives exact
    occupation times.
    """

    def __init__(self, graph: UserGraph, t_start):
        self.graph = graph
        self.index = graph.index_of()
        fol = graph.followers
        self._followers = [fol.indices[fol.indptr[k]:fol.indptr[k + 1]].tolist() for k in range(graph.n_users)]
        n, s = graph.n_users, graph.n_parties
        self.t_start = t_start
        self.now = t_start
        self.label = [()] * n
        self.since = [t_start] * n
        self.occupation = [[0] * s for _ in range(n)]

    def _close(self, f, t):
        label = self.label[f]
        dt = t - self.since[f]
        if dt < 0:
            raise ValueError("negative occupation interval")
        if label and dt:
            share = dt / len(label)
            row = self.occupation[f]
            for s in label:
                row[s] += share
        self.since[f] = t

    def advance(self, events):
        for ev in events:
            if ev.ts < self.now:
                raise ValueError(f"events are not sorted: {ev.ts} after {self.now}")
            try:
                k = self.index[ev.user]
            except KeyError:
                raise ValueError(f"event actor {ev.user!r} is not a graph user") from None
            self.now = ev.ts
            for f in self._followers[k]:
                self._close(f, ev.ts)
                self.label[f] = ev.label
        return self

    def finish(self, t_end):
        """Close all open intervals at ``t_end`` and return the occupation table."""
        if t_end < self.now:
            raise ValueError("t_end precedes the last replayed event")
        for f in range(self.graph.n_users):
            self._close(f, t_end)
        self.now = t_end
        return self.occupation


def occupation_times(events: EventLog, graph: UserGraph, cfg: ReplayConfig | None = None):
    """Per-user, per-party time each feed displayed a labelled post."""
    cfg = cfg or ReplayConfig()
    return NewsfeedReplay(graph, events.t_start).advance(events.events).finish(events.t_end)


def replay_empirical(events: EventLog, graph: UserGraph, cfg: ReplayConfig | None = None) -> NewsfeedState:
    """Empirical feed composition from the occupation times.

    Users whose feed never showed a labelled post are masked.
    """
    occ = np.array(occupation_times(events, graph, cfg), dtype=float).reshape(graph.n_users, graph.n_parties)
    total = occ.sum(axis=1)
    valid = total > 0
    p = np.full_like(occ, np.nan)
    p[valid] = occ[valid] / total[valid, None]
    return NewsfeedState(p, valid, meta={"source": "replay", "masked": int((~valid).sum())})


def compute_echo_profile(state: NewsfeedState, graph: UserGraph) -> np.ndarray:
    """Share of each user's feed supporting their own party (summed for dual affiliations).

    Masked users get NaN.
    """
    if state.shape != (graph.n_users, graph.n_parties):
        raise ValueError("state shape does not match graph")
    echo = np.full(graph.n_users, np.nan)
    for n, a in enumerate(graph.affiliations):
        if state.valid[n]:
            echo[n] = state.p[n, list(a)].sum()
    return echo
