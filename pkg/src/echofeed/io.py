"""File formats: canonical dataset tables, rate/state/policy CSVs and JSON reports.

Floats are written with 12 significant digits and all files are written
atomically (temporary file, then rename) so reruns give identical bytes.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from pathlib import Path

import numpy as np

from .graph import REPOST, ActivityRates, DatasetError, EventLog, NewsfeedState, RecommendationPolicy, UserGraph

REPOST_COLUMN = "_repost"


def fmt(value) -> str:
    value = float(value)
    if math.isnan(value):
        return "nan"
    return f"{value:.12g}"


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if not math.isfinite(v):
            return None
        return float(f"{v:.12g}")
    return obj


def atomic_write(path, text: str):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json(path, obj):
    atomic_write(path, json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n")


def write_csv(path, header, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    atomic_write(path, buf.getvalue())


def write_state_csv(path, state: NewsfeedState, graph: UserGraph):
    """One ``user_id,party,value`` row per valid user and party; masked users are omitted."""
    rows = [
        (uid, label, fmt(state.p[n, s]))
        for n, uid in enumerate(graph.user_ids) if state.valid[n]
        for s, label in enumerate(graph.parties.labels)
    ]
    write_csv(path, ("user_id", "party", "value"), rows)


def write_policy_csv(path, policy: RecommendationPolicy, graph: UserGraph):
    rows = [
        (uid, label, fmt(policy.rates[n, s]))
        for n, uid in enumerate(graph.user_ids)
        for s, label in enumerate(graph.parties.labels)
    ]
    write_csv(path, ("user_id", "party", "rate"), rows)


def write_rates_csv(path, rates: ActivityRates, graph: UserGraph):
    """Selfpost rate per party, plus a ``_repost`` pseudo-party row for the repost rate."""
    rows = []
    for n, uid in enumerate(graph.user_ids):
        for s, label in enumerate(graph.parties.labels):
            rows.append((uid, label, fmt(rates.selfpost_by_party[n, s])))
        rows.append((uid, REPOST_COLUMN, fmt(rates.repost[n])))
    write_csv(path, ("user_id", "party", "value"), rows)


def _read_table(path, header):
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        first = next(reader, None)
        if first is None or [c.strip() for c in first] != list(header):
            raise DatasetError(f"expected header {','.join(header)!r}", path, 1)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DatasetError(f"expected {len(header)} fields", path, lineno)
            yield lineno, [c.strip() for c in row]


def _read_matrix(path, header, graph, extra=()):
    index = graph.index_of()
    cols = {label: s for s, label in enumerate(graph.parties.labels)}
    for k, name in enumerate(extra):
        cols[name] = graph.n_parties + k
    out = np.zeros((graph.n_users, graph.n_parties + len(extra)))
    for lineno, (uid, party, value) in _read_table(path, header):
        if uid not in index:
            continue  # user outside the (restricted) graph
        if party not in cols:
            raise DatasetError(f"unknown party {party!r}", path, lineno)
        try:
            out[index[uid], cols[party]] = float(value)
        except ValueError:
            raise DatasetError(f"bad number {value!r}", path, lineno) from None
    return out


def read_rates_csv(path, graph: UserGraph) -> ActivityRates:
    table = _read_matrix(path, ("user_id", "party", "value"), graph, extra=(REPOST_COLUMN,))
    return ActivityRates.from_party_rates(table[:, :-1], table[:, -1])


def read_policy_csv(path, graph: UserGraph, budget: float) -> RecommendationPolicy:
    return RecommendationPolicy(_read_matrix(path, ("user_id", "party", "rate"), graph), budget)


def read_state_csv(path, graph: UserGraph) -> NewsfeedState:
    index = graph.index_of()
    p = np.full((graph.n_users, graph.n_parties), np.nan)
    for lineno, (uid, party, value) in _read_table(path, ("user_id", "party", "value")):
        if uid in index:
            p[index[uid], graph.parties.index(party)] = float(value)
    valid = ~np.isnan(p).any(axis=1)
    return NewsfeedState(p, valid)


def write_histograms_csv(path, report):
    rows = []
    for name, (edges, counts) in (("diversity", report.diversity_hist), ("echo", report.echo_hist)):
        for lo, hi, c in zip(edges[:-1], edges[1:], counts):
            rows.append((name, fmt(lo), fmt(hi), int(c)))
    write_csv(path, ("metric", "bin_low", "bin_high", "count"), rows)


def write_graph(directory, graph: UserGraph):
    """Canonical ``users.csv``, ``edges.csv`` and ``parties.csv``."""
    directory = Path(directory)
    write_csv(directory / "parties.csv", ("party",), [(label,) for label in graph.parties.labels])
    write_csv(
        directory / "users.csv", ("user_id", "affiliation"),
        [(uid, graph.parties.format_affiliation(a)) for uid, a in zip(graph.user_ids, graph.affiliations)],
    )
    write_csv(
        directory / "edges.csv", ("follower_id", "leader_id"),
        [(graph.user_ids[f], graph.user_ids[k]) for f, k in graph.edge_list()],
    )


def write_event_log(path, events: EventLog, parties=None):
    """JSON-lines log; with ``parties`` each event also records its resolved ``label``."""
    lines = [json.dumps({"t_start": events.t_start, "t_end": events.t_end})]
    for ev in events.events:
        kind = "retweet" if ev.kind == REPOST else "tweet"
        origin = ev.origin if ev.origin is not None else ("?" if ev.kind == REPOST else ev.user)
        row = {"ts": ev.ts, "user": ev.user, "kind": kind, "origin": origin}
        if parties is not None:
            row["label"] = parties.format_affiliation(ev.label)
        lines.append(json.dumps(row))
    atomic_write(path, "\n".join(lines) + "\n")
