"""
Reading feed composition off an activity log
============================================

With feeds of size one, a user's feed always holds the latest post of any
of their leaders. Replaying a timestamped log therefore gives the share of
time each party sat on the feed. Rational timestamps keep the arithmetic
exact.
"""

from fractions import Fraction as Fr

from echofeed import compute_echo_profile, replay_empirical
from echofeed.estimation import estimate_rates, occupation_times
from echofeed.graph import REPOST, SELFPOST, Event, EventLog, UserGraph

parties = ("FI", "PS", "EM", "LR", "FN")
FI, PS, EM, LR, FN = range(5)

# user 3 supports two parties; its posts count half for each
graph = UserGraph.from_edges(
    parties, [(EM,), (FN,), (PS, EM), (FI,)],
    [(1, 0), (2, 0), (2, 1), (3, 2), (0, 3)], user_ids=("1", "2", "3", "4"),
)
log = EventLog((
    Event(Fr(1), "1", SELFPOST, None, (EM,)),
    Event(Fr(2), "2", SELFPOST, None, (FN,)),
    Event(Fr(3), "3", REPOST, None, ()),        # origin unknown: label '?'
    Event(Fr(4), "3", SELFPOST, None, (PS, EM)),
    Event(Fr(6), "4", REPOST, "99", ()),
    Event(Fr(6), "1", REPOST, "2", (FN,)),
), Fr(0), Fr(8))

for uid, row in zip(graph.user_ids, occupation_times(log, graph)):
    held = ", ".join(f"{parties[s]} {v}" for s, v in enumerate(row) if v)
    print(f"user {uid}: {held or 'no labelled time'}")

state = replay_empirical(log, graph)
echo = compute_echo_profile(state, graph)
for n, uid in enumerate(graph.user_ids):
    if state.valid[n]:
        print(f"user {uid}: echo {echo[n]:.4f}")
    else:
        print(f"user {uid}: masked (feed never held a labelled post)")

rates = estimate_rates(log, graph)
print("selfpost rates:", rates.selfpost, " repost rates:", rates.repost)
