import json

import numpy as np
import pytest

from echofeed.graph import (
    ActivityRates,
    DatasetError,
    PartySet,
    UserGraph,
    largest_scc,
    load_dataset,
    preprocess,
    validate,
)


def write_dataset(tmp_path, users, edges, events, span=(0.0, 10.0)):
    (tmp_path / "users.csv").write_text("user_id,affiliation\n" + "".join(f"{u},{a}\n" for u, a in users))
    (tmp_path / "edges.csv").write_text("follower_id,leader_id\n" + "".join(f"{f},{l}\n" for f, l in edges))
    lines = [json.dumps({"t_start": span[0], "t_end": span[1]})]
    for ts, user, kind, origin in events:
        lines.append(json.dumps({"ts": ts, "user": user, "kind": kind, "origin": origin}))
    (tmp_path / "events.jsonl").write_text("\n".join(lines) + "\n")
    return tmp_path / "users.csv", tmp_path / "edges.csv", tmp_path / "events.jsonl"


def test_unknown_affiliation_removed(tmp_path):
    files = write_dataset(
        tmp_path,
        [(1, "EM"), (2, "FN"), (3, "?")],
        [(1, 2), (2, 1), (3, 1)],
        [(1.0, 1, "tweet", "?"), (2.0, 2, "tweet", "?"), (3.0, 3, "tweet", "?")],
    )
    graph, events = load_dataset(*files)
    assert graph.user_ids == ("1", "2")
    assert len(events) == 2
    assert graph.n_edges == 2


def test_all_known_and_active_is_identity(tmp_path):
    files = write_dataset(
        tmp_path,
        [(1, "EM"), (2, "FN"), (3, "PS")],
        [(1, 2), (2, 3), (3, 1)],
        [(1.0, 1, "tweet", "?"), (2.0, 2, "retweet", "1"), (3.0, 3, "tweet", "?")],
    )
    graph, events = load_dataset(*files)
    assert graph.user_ids == ("1", "2", "3")
    assert len(events) == 3


def test_inactive_user_removed(tmp_path):
    files = write_dataset(
        tmp_path,
        [(1, "EM"), (2, "FN"), (3, "PS")],
        [(1, 2), (2, 1), (3, 1), (1, 3)],
        [(1.0, 1, "tweet", "?"), (2.0, 2, "retweet", "1")],
    )
    graph, _ = load_dataset(*files)
    assert graph.user_ids == ("1", "2")
    assert graph.edge_list() == [(0, 1), (1, 0)]


def test_event_labels_follow_original_creator(tmp_path):
    files = write_dataset(
        tmp_path,
        [(1, "EM"), (2, "PS/FN"), (3, "?")],
        [(1, 2), (2, 1)],
        [(1.0, 1, "tweet", "?"), (2.0, 1, "retweet", "2"), (3.0, 2, "retweet", "3"), (4.0, 2, "retweet", "?")],
    )
    graph, events = load_dataset(*files)
    em, ps, fn = (graph.parties.index(p) for p in ("EM", "PS", "FN"))
    assert [ev.label for ev in events.events] == [(em,), tuple(sorted((ps, fn))), (), ()]


def test_party_order_from_list(tmp_path):
    files = write_dataset(tmp_path, [(1, "EM"), (2, "FN")], [(1, 2), (2, 1)],
                          [(1.0, 1, "tweet", "?"), (1.5, 2, "tweet", "?")])
    (tmp_path / "parties.csv").write_text("party\nFI\nPS\nEM\nLR\nFN\n")
    graph, _ = load_dataset(*files, parties=tmp_path / "parties.csv")
    assert graph.parties.labels == ("FI", "PS", "EM", "LR", "FN")
    assert graph.affiliations == ((2,), (4,))


def test_events_sorted_stably(tmp_path):
    files = write_dataset(tmp_path, [(1, "EM"), (2, "FN")], [(1, 2), (2, 1)],
                          [(5.0, 2, "tweet", "?"), (1.0, 1, "tweet", "?"), (5.0, 1, "retweet", "2")])
    _, events = load_dataset(*files)
    assert [(e.ts, e.user) for e in events.events] == [(1.0, "1"), (5.0, "2"), (5.0, "1")]


@pytest.mark.parametrize(
    "users, edges, events, match",
    [
        ([(1, "EM"), (1, "FN")], [], [], "duplicate user id"),
        ([(1, "EM"), (2, "EM/FN/PS")], [], [], "bad affiliation"),
        ([(1, "EM"), (2, "FN")], [], [(1.0, 7, "tweet", "?")], "unknown user '7'"),
        ([(1, "EM"), (2, "FN")], [(1, 9)], [], "unknown user '9'"),
        ([(1, "EM"), (2, "FN")], [], [(11.0, 1, "tweet", "?")], "outside log span"),
        ([(1, "EM"), (2, "FN")], [], [(1.0, 1, "like", "?")], "tweet|retweet"),
    ],
)
def test_rejections(tmp_path, users, edges, events, match):
    files = write_dataset(tmp_path, users, edges, events)
    with pytest.raises(DatasetError, match=match):
        load_dataset(*files)


def test_unknown_party_against_list(tmp_path):
    files = write_dataset(tmp_path, [(1, "EM"), (2, "XX")], [], [])
    with pytest.raises(DatasetError, match="unknown party 'XX'"):
        load_dataset(*files, parties=("EM", "FN"))


def test_malformed_row_reports_line(tmp_path):
    files = write_dataset(tmp_path, [(1, "EM"), (2, "FN")], [(1, 2)], [])
    files[1].write_text("follower_id,leader_id\n1,2\n2\n")
    with pytest.raises(DatasetError) as err:
        load_dataset(*files)
    assert err.value.line == 3
    assert ":3:" in str(err.value)


def test_bad_json_line(tmp_path):
    files = write_dataset(tmp_path, [(1, "EM"), (2, "FN")], [(1, 2)], [])
    files[2].write_text('{"t_start": 0, "t_end": 1}\n{"ts": 0.5,\n')
    with pytest.raises(DatasetError) as err:
        load_dataset(*files)
    assert err.value.line == 2


def test_missing_file(tmp_path):
    files = write_dataset(tmp_path, [(1, "EM")], [], [])
    with pytest.raises(FileNotFoundError):
        load_dataset(files[0], tmp_path / "nope.csv", files[2])


def _graph(n, edges):
    return UserGraph.from_edges(("a", "b"), [(0,)] * n, edges)


def test_scc_drops_dangling_follower():
    g = _graph(4, [(0, 1), (1, 2), (2, 0), (3, 0)])
    sub = largest_scc(g)
    assert sub.user_ids == ("0", "1", "2")
    assert sub.n_edges == 3


def test_scc_identity_on_connected():
    g = _graph(3, [(0, 1), (1, 2), (2, 0), (0, 2)])
    sub = largest_scc(g)
    assert sub.user_ids == g.user_ids
    assert sub.edge_list() == g.edge_list()


def test_scc_tie_break_smallest_id():
    g = _graph(4, [(2, 3), (3, 2), (0, 1), (1, 0)])
    assert largest_scc(g).user_ids == ("0", "1")
    g = UserGraph.from_edges(("a",), [(0,)] * 4, [(0, 1), (1, 0), (2, 3), (3, 2)], user_ids=("10", "11", "2", "3"))
    # dense order is the caller's; the winner is the component of dense index 0
    assert largest_scc(g).user_ids == ("10", "11")


def test_scc_empty_graph():
    g = UserGraph.from_edges(("a",), [], [])
    with pytest.raises(ValueError):
        largest_scc(g)


def test_dense_ids_follow_numeric_order(tmp_path):
    files = write_dataset(tmp_path, [(10, "EM"), (9, "FN"), (100, "EM")], [(10, 9), (9, 100), (100, 10)],
                          [(1.0, 10, "tweet", "?"), (1.0, 9, "tweet", "?"), (1.0, 100, "tweet", "?")])
    graph, _ = load_dataset(*files)
    assert graph.user_ids == ("9", "10", "100")


def test_preprocessing_idempotent_and_connected(tmp_path):
    rng = np.random.default_rng(4)
    users = [(i, ["EM", "FN", "PS", "?"][i % 4]) for i in range(40)]
    edges = {(int(a), int(b)) for a, b in rng.integers(0, 40, size=(160, 2)) if a != b}
    events = [(float(t), int(u), "tweet", "?") for t, u in zip(np.sort(rng.uniform(0, 10, 60)), rng.integers(0, 40, 60))]
    files = write_dataset(tmp_path, users, sorted(edges), events)
    graph, log = preprocess(*load_dataset(*files))
    again, log2 = preprocess(graph, log)
    assert again.user_ids == graph.user_ids
    assert again.edge_list() == graph.edge_list()
    assert len(log2) == len(log)
    assert graph.is_strongly_connected()
    assert np.all(np.diff(graph.leaders.indptr) >= 1)
    assert graph.n_edges == sum(len(graph.leaders_of(n)) for n in range(graph.n_users))


def test_no_self_loops_or_duplicates():
    g = _graph(2, [(0, 0), (0, 1), (0, 1), (1, 0)])
    assert g.edge_list() == [(0, 1), (1, 0)]


def test_party_set_invariants():
    with pytest.raises(ValueError):
        PartySet(("a", "a"))
    with pytest.raises(ValueError):
        PartySet(("a", "?"))
    ps = PartySet(("FI", "PS", "EM"))
    assert ps.parse_affiliation("EM/PS") == (1, 2)
    assert ps.parse_affiliation("?") is None
    assert ps.format_affiliation((1, 2)) == "PS/EM"


def test_activity_rates_consistency():
    rates = ActivityRates.from_party_rates([[0.25, 0.5], [0.0, 1.0]], [1.0, 0.0])
    assert np.array_equal(rates.selfpost, [0.75, 1.0])
    with pytest.raises(ValueError):
        ActivityRates([1.0], [0.0], [[0.5, 0.4]])
    with pytest.raises(ValueError):
        ActivityRates.from_party_rates([[-1.0, 0.0]], [0.0])


def test_validate_k2_passes(k2):
    diag = validate(*k2)
    assert diag.ok, diag.failures
    assert all(diag.checks.values())


def test_validate_no_creator(k2):
    graph, _ = k2
    rates = ActivityRates.from_party_rates(np.zeros((2, 2)), [1.0, 1.0])
    diag = validate(graph, rates)
    assert not diag.ok
    assert "no creator" in diag.failures


def test_validate_inactive_leader_set():
    graph = UserGraph.from_edges(("a", "b"), [(0,), (1,), (0,)], [(0, 1), (1, 2), (2, 0), (1, 0)])
    # user 1 follows 0 and 2 ... make user 0's only leader (1) silent
    rates = ActivityRates.from_party_rates([[0, 0], [0, 0], [1, 0]], [0.0, 0.0, 1.0])
    diag = validate(graph, rates)
    assert not diag.checks["active_leaders"]
    assert any(f.startswith("inactive leader set") for f in diag.failures)


def test_validate_not_strongly_connected():
    graph = UserGraph.from_edges(("a", "b"), [(0,), (1,), (0,)], [(0, 1), (1, 0), (2, 0)])
    rates = ActivityRates.from_party_rates([[1, 0], [0, 1], [1, 0]], [1, 1, 1])
    diag = validate(graph, rates)
    assert "not strongly connected" in diag.failures
