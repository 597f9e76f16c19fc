"""Homophilic block-model follower graphs with planted affiliations."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import ActivityRates, PartySet, UserGraph, validate

DEFAULT_LABELS = ("FI", "PS", "EM", "LR", "FN")


@dataclass(frozen=True)
class SyntheticSpec:
    n_users: int
    n_parties: int = 5
    party_shares: tuple[float, ...] | None = None
    p_intra: float = 0.1
    p_inter: float = 0.01
    selfpost_range: tuple[float, float] = (0.1, 1.0)
    repost_range: tuple[float, float] = (0.1, 3.0)
    seed: int = 0
    labels: tuple[str, ...] | None = None

    def __post_init__(self):
        if self.n_users < 1 or self.n_parties < 1:
            raise ValueError("need at least one user and one party")
        for prob in (self.p_intra, self.p_inter):
            if not 0.0 <= prob <= 1.0:
                raise ValueError("edge probabilities must lie in [0, 1]")
        if self.p_intra < self.p_inter:
            raise ValueError("homophily requires p_intra >= p_inter")
        if self.p_intra == 0.0 and self.n_users > 1:
            raise ValueError("zero edge probabilities cannot produce a connected graph")
        shares = self.shares()
        if shares.size != self.n_parties or np.any(shares < 0) or not np.isclose(shares.sum(), 1.0):
            raise ValueError("party shares must be a distribution over the parties")
        for lo, hi in (self.selfpost_range, self.repost_range):
            if not 0.0 <= lo <= hi:
                raise ValueError("rate ranges must satisfy 0 <= low <= high")
        if self.selfpost_range[1] <= 0:
            raise ValueError("some user must create content")

    def shares(self) -> np.ndarray:
        if self.party_shares is None:
            return np.full(self.n_parties, 1.0 / self.n_parties)
        return np.asarray(self.party_shares, dtype=float)

    def party_labels(self) -> tuple[str, ...]:
        if self.labels is not None:
            return tuple(self.labels)
        if self.n_parties <= len(DEFAULT_LABELS):
            return DEFAULT_LABELS[: self.n_parties]
        return tuple(f"P{i}" for i in range(self.n_parties))


def _block_edges(rng, party, p_intra, p_inter, chunk=512):
    n = party.size
    rows, cols = [], []
    for lo in range(0, n, chunk):
        hi = min(n, lo + chunk)
        same = party[lo:hi, None] == party[None, :]
        prob = np.where(same, p_intra, p_inter)
        hit = rng.random((hi - lo, n)) < prob
        hit[np.arange(hi - lo), np.arange(lo, hi)] = False
        r, c = np.nonzero(hit)
        rows.append(r + lo)
        cols.append(c)
    return np.concatenate(rows), np.concatenate(cols)


def generate(spec: SyntheticSpec) -> tuple[UserGraph, ActivityRates]:
    """Draw a strongly connected follower graph and activity rates.

    Follow edges appear with probability ``p_intra`` inside a party and
    ``p_inter`` across parties. When the draw is not strongly connected a
    random Hamiltonian cycle is added; its edges are listed in
    ``graph.metadata["repair_edges"]``. Every user selfposts only about their
    own party.
    """
    rng = np.random.default_rng(spec.seed)
    n, s = spec.n_users, spec.n_parties
    party = rng.choice(s, size=n, p=spec.shares())
    rows, cols = _block_edges(rng, party, spec.p_intra, spec.p_inter)
    parties = PartySet(spec.party_labels())
    affiliations = [(int(a),) for a in party]
    edges = set(zip(rows.tolist(), cols.tolist()))
    graph = UserGraph.from_edges(parties, affiliations, sorted(edges))

    repair = []
    if n > 1 and not graph.is_strongly_connected():
        order = rng.permutation(n)
        cycle = [(int(order[i]), int(order[(i + 1) % n])) for i in range(n)]
        repair = sorted(e for e in cycle if e not in edges)
        edges.update(cycle)
        graph = UserGraph.from_edges(parties, affiliations, sorted(edges))
    graph = UserGraph(
        graph.parties, graph.affiliations, graph.leaders, graph.user_ids,
        {"repair_edges": repair, "seed": spec.seed, "generator": "block_model"},
    )

    lam = rng.uniform(*spec.selfpost_range, size=n)
    mu = rng.uniform(*spec.repost_range, size=n)
    if not np.any(lam > 0):
        lam[rng.integers(n)] = spec.selfpost_range[1]
    by_party = np.zeros((n, s))
    by_party[np.arange(n), party] = lam
    rates = ActivityRates.from_party_rates(by_party, mu)

    diag = validate(graph, rates)
    if n > 1 and not diag.ok:
        raise ValueError("generated instance is invalid: " + "; ".join(diag.failures))
    return graph, rates
