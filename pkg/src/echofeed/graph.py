"""Core domain types, dataset ingestion and graph preprocessing.

A follower graph is stored as a sparse ``N x N`` matrix ``leaders`` with
``leaders[n, k] == 1`` iff user ``n`` follows user ``k``. Users are dense
integers ``0..N-1`` ordered by their original id; the original ids are kept
in ``UserGraph.user_ids`` for reports.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

UNKNOWN = "?"
SELFPOST = "selfpost"
REPOST = "repost"
_KINDS = {"tweet": SELFPOST, "retweet": REPOST}


class DatasetError(ValueError):
    """Raised on malformed or inconsistent input files."""

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)


class InactiveLeaderError(ValueError):
    """A user's leaders have zero combined activity."""


@dataclass(frozen=True)
class PartySet:
    labels: tuple[str, ...]

    def __post_init__(self):
        labels = tuple(str(label) for label in self.labels)
        object.__setattr__(self, "labels", labels)
        if not labels:
            raise ValueError("party set is empty")
        if len(set(labels)) != len(labels):
            raise ValueError(f"duplicate party labels in {labels}")
        for label in labels:
            if not label or "/" in label or label == UNKNOWN:
                raise ValueError(f"invalid party label {label!r}")

    @property
    def size(self) -> int:
        return len(self.labels)

    def __len__(self):
        return len(self.labels)

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise KeyError(f"unknown party {label!r}") from None

    def parse_affiliation(self, code: str) -> tuple[int, ...] | None:
        """Parse ``"EM"`` or ``"PS/EM"``; ``"?"`` gives None."""
        code = code.strip()
        if code == UNKNOWN:
            return None
        parts = [c.strip() for c in code.split("/")]
        if not 1 <= len(parts) <= 2 or len(set(parts)) != len(parts):
            raise ValueError(f"bad affiliation {code!r}")
        return tuple(sorted(self.index(p) for p in parts))

    def format_affiliation(self, affiliation: Sequence[int]) -> str:
        if not affiliation:
            return UNKNOWN
        return "/".join(self.labels[s] for s in affiliation)


@dataclass(frozen=True, eq=False)
class UserGraph:
    """Follower graph with party affiliations.

    ``affiliations[n]`` is a sorted tuple of one or two party indices.
    """

    parties: PartySet
    affiliations: tuple[tuple[int, ...], ...]
    leaders: sp.csr_matrix
    user_ids: tuple[str, ...]
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        n = len(self.affiliations)
        coo = sp.coo_matrix(self.leaders)
        if coo.shape != (n, n):
            raise ValueError(f"leader matrix shape {coo.shape} does not match {n} users")
        if len(self.user_ids) != n:
            raise ValueError("user_ids length mismatch")
        off = (coo.row != coo.col) & (coo.data != 0)
        leaders = sp.csr_matrix(
            (np.ones(int(off.sum())), (coo.row[off], coo.col[off])), shape=(n, n)
        )
        leaders.sum_duplicates()
        leaders.data[:] = 1.0
        leaders.sort_indices()
        leaders.data.flags.writeable = False
        object.__setattr__(self, "leaders", leaders)
        object.__setattr__(self, "affiliations", tuple(tuple(sorted(a)) for a in self.affiliations))
        object.__setattr__(self, "user_ids", tuple(str(u) for u in self.user_ids))
        for a in self.affiliations:
            if not 1 <= len(a) <= 2 or any(not 0 <= s < self.parties.size for s in a):
                raise ValueError(f"invalid affiliation {a}")

    @classmethod
    def from_edges(cls, parties, affiliations, edges, user_ids=None, metadata=None):
        """Build from ``(follower, leader)`` pairs of dense indices."""
        n = len(affiliations)
        edges = np.asarray(list(edges), dtype=np.int64).reshape(-1, 2)
        if not isinstance(parties, PartySet):
            parties = PartySet(tuple(parties))
        mat = sp.csr_matrix(
            (np.ones(len(edges)), (edges[:, 0], edges[:, 1])), shape=(n, n)
        )
        if user_ids is None:
            user_ids = tuple(str(i) for i in range(n))
        return cls(parties, tuple(affiliations), mat, tuple(user_ids), dict(metadata or {}))

    @property
    def n_users(self) -> int:
        return len(self.affiliations)

    @property
    def n_parties(self) -> int:
        return self.parties.size

    @property
    def n_edges(self) -> int:
        return int(self.leaders.nnz)

    @property
    def followers(self) -> sp.csr_matrix:
        """``followers[k, n] == 1`` iff ``n`` follows ``k``."""
        return self.leaders.T.tocsr()

    def leaders_of(self, n: int) -> np.ndarray:
        return self.leaders.indices[self.leaders.indptr[n]:self.leaders.indptr[n + 1]]

    def edge_list(self) -> list[tuple[int, int]]:
        coo = self.leaders.tocoo()
        order = np.lexsort((coo.col, coo.row))
        return [(int(coo.row[i]), int(coo.col[i])) for i in order]

    def index_of(self) -> dict[str, int]:
        return {uid: i for i, uid in enumerate(self.user_ids)}

    def affiliation_matrix(self) -> np.ndarray:
        """``(N, S)`` weights, 1 for single affiliations, 1/2 each for dual ones."""
        out = np.zeros((self.n_users, self.n_parties))
        for n, a in enumerate(self.affiliations):
            out[n, list(a)] = 1.0 / len(a)
        return out

    def subgraph(self, keep: Sequence[int] | np.ndarray) -> "UserGraph":
        keep = np.sort(np.asarray(keep, dtype=np.int64))
        mat = self.leaders[keep][:, keep]
        return UserGraph(
            self.parties,
            tuple(self.affiliations[i] for i in keep),
            mat,
            tuple(self.user_ids[i] for i in keep),
            dict(self.metadata),
        )

    def is_strongly_connected(self) -> bool:
        if self.n_users == 0:
            return False
        ncomp, _ = connected_components(self.leaders, directed=True, connection="strong")
        return ncomp == 1


@dataclass(frozen=True, eq=False)
class ActivityRates:
    """Per-user posting activity.

    ``selfpost_by_party[n, s]`` is the rate at which ``n`` creates posts
    supporting party ``s``; ``selfpost`` is its row sum and ``repost`` the
    rate at which ``n`` re-shares an item picked from their own feed.
    """

    selfpost: np.ndarray
    repost: np.ndarray
    selfpost_by_party: np.ndarray

    def __post_init__(self):
        lam = np.array(self.selfpost, dtype=float)
        mu = np.array(self.repost, dtype=float)
        by_party = np.atleast_2d(np.array(self.selfpost_by_party, dtype=float))
        if lam.ndim != 1 or mu.shape != lam.shape or by_party.shape[0] != lam.shape[0]:
            raise ValueError("rate arrays have inconsistent shapes")
        for name, arr in (("selfpost", lam), ("repost", mu), ("selfpost_by_party", by_party)):
            if not np.all(np.isfinite(arr)) or np.any(arr < 0):
                raise ValueError(f"{name} rates must be finite and nonnegative")
        gap = np.abs(by_party.sum(axis=1) - lam)
        if np.any(gap > 1e-12 * np.maximum(1.0, lam)):
            raise ValueError("per-party selfpost rates do not sum to the total selfpost rate")
        for arr in (lam, mu, by_party):
            arr.flags.writeable = False
        object.__setattr__(self, "selfpost", lam)
        object.__setattr__(self, "repost", mu)
        object.__setattr__(self, "selfpost_by_party", by_party)

    @classmethod
    def from_party_rates(cls, selfpost_by_party, repost) -> "ActivityRates":
        by_party = np.atleast_2d(np.asarray(selfpost_by_party, dtype=float))
        return cls(by_party.sum(axis=1), np.asarray(repost, dtype=float), by_party)

    @property
    def n_users(self) -> int:
        return self.selfpost.shape[0]

    @property
    def n_parties(self) -> int:
        return self.selfpost_by_party.shape[1]

    @property
    def activity(self) -> np.ndarray:
        return self.selfpost + self.repost


@dataclass(frozen=True)
class Event:
    ts: float
    user: str
    kind: str
    origin: str | None
    label: tuple[int, ...]


@dataclass(frozen=True)
class EventLog:
    """Time-ordered selfpost/repost events over ``[t_start, t_end]``.

    ``Event.label`` holds the party indices of the post's original creator,
    empty when the creator's affiliation is unknown.
    """

    events: tuple[Event, ...]
    t_start: float
    t_end: float

    def __post_init__(self):
        if not self.t_end > self.t_start:
            raise ValueError(f"empty log span [{self.t_start}, {self.t_end}]")
        prev = self.t_start
        for ev in self.events:
            if ev.ts < self.t_start or ev.ts > self.t_end:
                raise ValueError(f"event at {ev.ts} outside log span")
            if ev.ts < prev:
                raise ValueError("events are not sorted by timestamp")
            prev = ev.ts

    @property
    def duration(self):
        return self.t_end - self.t_start

    def __len__(self):
        return len(self.events)

    def restrict(self, graph: UserGraph) -> "EventLog":
        """Drop events whose actor is not a user of ``graph``."""
        ids = set(graph.user_ids)
        return EventLog(tuple(ev for ev in self.events if ev.user in ids), self.t_start, self.t_end)


@dataclass(frozen=True, eq=False)
class NewsfeedState:
    """Average feed composition, one row per user.

    Rows with ``valid[n] == False`` carry no information (``p`` is NaN there).
    """

    p: np.ndarray
    valid: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        p = np.array(self.p, dtype=float)
        if p.ndim != 2:
            raise ValueError("feed state must be a 2-D array")
        valid = np.ones(p.shape[0], dtype=bool) if self.valid is None else np.array(self.valid, dtype=bool)
        if valid.shape != (p.shape[0],):
            raise ValueError("validity mask has wrong shape")
        p[~valid] = np.nan
        if np.any(p[valid] < 0):
            raise ValueError("feed state has negative entries")
        p.flags.writeable = False
        valid.flags.writeable = False
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "valid", valid)

    @property
    def shape(self):
        return self.p.shape

    def row_sums(self) -> np.ndarray:
        return self.p.sum(axis=1)


@dataclass(frozen=True, eq=False)
class RecommendationPolicy:
    """Insertion rates ``rates[n, s]`` of recommended ``s``-posts into ``n``'s feed."""

    rates: np.ndarray
    budget: float

    def __post_init__(self):
        x = np.array(self.rates, dtype=float)
        if x.ndim != 2:
            raise ValueError("policy rates must be a 2-D array")
        if not np.all(np.isfinite(x)) or np.any(x < 0):
            raise ValueError("policy rates must be finite and nonnegative")
        if not 0.0 <= self.budget < 1.0:
            raise ValueError(f"budget must lie in [0, 1), got {self.budget}")
        x.flags.writeable = False
        object.__setattr__(self, "rates", x)
        object.__setattr__(self, "budget", float(self.budget))

    @classmethod
    def zeros(cls, n_users, n_parties, budget=0.0):
        return cls(np.zeros((n_users, n_parties)), budget)

    def shares(self) -> np.ndarray:
        """Row-normalised rates; rows with no recommendations are NaN."""
        tot = self.rates.sum(axis=1, keepdims=True)
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(tot > 0, self.rates / np.where(tot > 0, tot, 1.0), np.nan)


def leader_activity(graph: UserGraph, rates: ActivityRates) -> np.ndarray:
    """Combined selfpost + repost rate of each user's leaders."""
    return np.asarray(graph.leaders @ rates.activity).ravel()


# -- ingestion ---------------------------------------------------------------

def _id_sort_key(ids):
    if all(i.lstrip("-").isdigit() for i in ids):
        return lambda i: (int(i), i)
    return lambda i: i


def load_parties(path) -> PartySet:
    """Read an ordered party list: CSV with a ``party`` column, or one label per line."""
    path = Path(path)
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and r[0].strip()]
    if not rows:
        raise DatasetError("party list is empty", path)
    if rows[0][0].strip().lower() == "party":
        rows = rows[1:]
    return PartySet(tuple(r[0].strip() for r in rows))


def _read_csv(path, header):
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            first = next(reader)
        except StopIteration:
            raise DatasetError("file is empty", path, 1) from None
        if [c.strip() for c in first] != list(header):
            raise DatasetError(f"expected header {','.join(header)!r}", path, 1)
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DatasetError(f"expected {len(header)} fields, got {len(row)}", path, lineno)
            yield lineno, [c.strip() for c in row]


def read_user_table(path, parties: PartySet | None = None):
    """Return ``(parties, {user_id: affiliation or None})`` in file order."""
    rows = list(_read_csv(path, ("user_id", "affiliation")))
    if parties is None:
        seen = []
        for lineno, (_, code) in rows:
            for p in code.split("/"):
                p = p.strip()
                if p and p != UNKNOWN and p not in seen:
                    seen.append(p)
        if not seen:
            raise DatasetError("no known affiliations to infer parties from", path)
        parties = PartySet(tuple(seen))
    table = {}
    for lineno, (uid, code) in rows:
        if not uid:
            raise DatasetError("empty user id", path, lineno)
        if uid in table:
            raise DatasetError(f"duplicate user id {uid!r}", path, lineno)
        try:
            table[uid] = parties.parse_affiliation(code)
        except (ValueError, KeyError) as exc:
            raise DatasetError(str(exc), path, lineno) from None
    return parties, table


def read_edge_table(path, known_ids: Iterable[str]):
    known = set(known_ids)
    edges = []
    for lineno, (follower, leader) in _read_csv(path, ("follower_id", "leader_id")):
        for uid in (follower, leader):
            if uid not in known:
                raise DatasetError(f"edge references unknown user {uid!r}", path, lineno)
        edges.append((follower, leader))
    return edges


def read_event_log(path, known_ids: Iterable[str], parties: PartySet | None = None):
    """Parse the JSON-lines event log; returns ``(t_start, t_end, raw events)``.

    An optional ``label`` field (affiliation code of the original creator)
    overrides the label derived from the user table.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    known = set(known_ids)
    raw = []
    header = None
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetError(f"invalid JSON ({exc.msg})", path, lineno) from None
            if not isinstance(obj, dict):
                raise DatasetError("expected a JSON object", path, lineno)
            if header is None:
                try:
                    header = (float(obj["t_start"]), float(obj["t_end"]))
                except (KeyError, TypeError, ValueError):
                    raise DatasetError("first line must be a {t_start, t_end} header", path, lineno) from None
                if not header[1] > header[0]:
                    raise DatasetError("t_end must exceed t_start", path, lineno)
                continue
            try:
                ts = float(obj["ts"])
                user = str(obj["user"])
                kind = _KINDS[obj["kind"]]
            except (KeyError, TypeError, ValueError):
                raise DatasetError("event needs ts, user and kind tweet|retweet", path, lineno) from None
            origin = obj.get("origin", UNKNOWN)
            origin = None if origin is None or str(origin) == UNKNOWN else str(origin)
            label = obj.get("label")
            if label is not None and parties is not None:
                try:
                    label = parties.parse_affiliation(str(label)) or ()
                except (ValueError, KeyError) as exc:
                    raise DatasetError(str(exc), path, lineno) from None
            if not np.isfinite(ts):
                raise DatasetError("non-finite timestamp", path, lineno)
            if not header[0] <= ts <= header[1]:
                raise DatasetError(f"timestamp {ts} outside log span {header}", path, lineno)
            if user not in known:
                raise DatasetError(f"event references unknown user {user!r}", path, lineno)
            raw.append((ts, user, kind, origin, label))
    if header is None:
        raise DatasetError("missing header line", path)
    raw.sort(key=lambda r: r[0])  # stable: equal timestamps keep file order
    return header[0], header[1], raw


def load_graph(user_table, edge_table, parties=None) -> UserGraph:
    """Load users with known affiliations and the edges between them (no activity filter)."""
    if parties is not None and not isinstance(parties, PartySet):
        parties = load_parties(parties) if isinstance(parties, (str, Path)) else PartySet(tuple(parties))
    parties, table = read_user_table(user_table, parties)
    edges = read_edge_table(edge_table, table)
    keep = sorted((u for u, a in table.items() if a is not None), key=_id_sort_key(list(table)))
    return _assemble(parties, table, keep, edges)


def _assemble(parties, table, keep, edges, metadata=None):
    index = {u: i for i, u in enumerate(keep)}
    dense = [(index[f], index[l]) for f, l in edges if f in index and l in index and f != l]
    return UserGraph.from_edges(
        parties, [table[u] for u in keep], dense, user_ids=keep, metadata=metadata
    )


def load_dataset(user_table, edge_table, event_log, parties=None) -> tuple[UserGraph, EventLog]:
    """Load and preprocess a dataset, before strongly-connected restriction.

    Users of unknown affiliation and users with neither tweets nor retweets
    are removed, together with their edges and events. Each event is
    labelled with the affiliation of the post's original creator (unknown
    when the creator is unknown or has no known affiliation).
    """
    if parties is not None and not isinstance(parties, PartySet):
        parties = load_parties(parties) if isinstance(parties, (str, Path)) else PartySet(tuple(parties))
    parties, table = read_user_table(user_table, parties)
    edges = read_edge_table(edge_table, table)
    t_start, t_end, raw = read_event_log(event_log, table, parties)

    active = {r[1] for r in raw}
    keep = sorted(
        (u for u, a in table.items() if a is not None and u in active),
        key=_id_sort_key(list(table)),
    )
    kept = set(keep)
    events = []
    for ts, user, kind, origin, label in raw:
        if user not in kept:
            continue
        if label is None:
            creator = user if kind == SELFPOST else origin
            label = table.get(creator) if creator is not None else None
        events.append(Event(ts, user, kind, origin if kind == REPOST else None, label or ()))
    graph = _assemble(parties, table, keep, edges)
    return graph, EventLog(tuple(events), t_start, t_end)


def largest_scc(graph: UserGraph) -> UserGraph:
    """Induced subgraph on the largest strongly connected component.

    Ties go to the component holding the smallest user index.
    """
    if graph.n_users == 0:
        raise ValueError("graph is empty")
    _, labels = connected_components(graph.leaders, directed=True, connection="strong")
    sizes = np.bincount(labels)
    best = sizes.max()
    # first user (smallest index) whose component has maximal size
    winner = labels[np.flatnonzero(sizes[labels] == best)[0]]
    return graph.subgraph(np.flatnonzero(labels == winner))


def preprocess(graph: UserGraph, events: EventLog | None = None):
    """Restrict to the largest SCC and drop events of removed users."""
    sub = largest_scc(graph)
    if events is None:
        return sub
    return sub, events.restrict(sub)


# -- validation --------------------------------------------------------------

@dataclass
class Diagnostics:
    checks: dict[str, bool]
    failures: list[str]

    @property
    def ok(self) -> bool:
        return not self.failures

    def to_dict(self):
        return {"ok": self.ok, "checks": dict(self.checks), "failures": list(self.failures)}


def validate(graph: UserGraph, rates: ActivityRates) -> Diagnostics:
    """Check the preconditions under which the feed equilibrium is unique."""
    checks, failures = {}, []
    shapes = rates.n_users == graph.n_users and rates.n_parties == graph.n_parties
    checks["shapes"] = shapes
    if not shapes:
        failures.append(
            f"shape mismatch: graph has {graph.n_users} users x {graph.n_parties} parties, "
            f"rates have {rates.n_users} x {rates.n_parties}"
        )
        return Diagnostics(checks, failures)

    checks["strongly_connected"] = graph.is_strongly_connected()
    if not checks["strongly_connected"]:
        failures.append("not strongly connected")

    checks["has_creator"] = bool(np.any(rates.selfpost > 0))
    if not checks["has_creator"]:
        failures.append("no creator")

    c = leader_activity(graph, rates)
    checks["active_leaders"] = bool(np.all(c > 0))
    if not checks["active_leaders"]:
        bad = [graph.user_ids[i] for i in np.flatnonzero(c <= 0)[:5]]
        failures.append(f"inactive leader set (users {', '.join(bad)})")

    gap = np.abs(rates.selfpost_by_party.sum(axis=1) - rates.selfpost)
    checks["party_rates_consistent"] = bool(np.all(gap <= 1e-12 * np.maximum(1.0, rates.selfpost)))
    if not checks["party_rates_consistent"]:
        failures.append("party rates inconsistent")
    return Diagnostics(checks, failures)
