"""
A ten-minute session of the queue-reactive book
===============================================

Each of the six queues around the reference price is a birth-death chain
whose rates depend on its own size.  We start from the invariant law,
run the book for ten minutes and compare what we see with the theory.
"""

import numpy as np

from qrmexec import QrmParams, default_intensities
from qrmexec.intensities import invariant_distribution, stationary_event_rate
from qrmexec.qrm import EventKind, sample_invariant_book, simulate_until
from qrmexec.rng import BufferedUniform, stream

table = default_intensities()
params = QrmParams(table, theta=0.7, theta_reinit=0.85)
rng = BufferedUniform(stream(0, "demo-simulate"))

# invariant queue laws, level by level
for level in (1, 2, 3):
    pi = invariant_distribution(table, level)
    n = np.arange(len(pi))
    print(f"level {level}: P(empty)={pi[0]:.4f}  mean size={n @ pi:.2f}")
print(f"stationary event rate {stationary_event_rate(table):.2f} per second")

state = sample_invariant_book(params, rng)
print("starting book", state.queues, "reference", state.ref_price)
state, log = simulate_until(state, 600.0, params, rng)

kinds = np.array([r.kind for r in log])
mids = np.array([r.mid for r in log])
print(f"\n{len(log)} events in 600 s ({len(log) / 600:.2f} per second)")
for k in (EventKind.LIMIT, EventKind.CANCEL, EventKind.MARKET):
    print(f"  {k.name.lower():<7}{np.mean(kinds == k):.3f}")

moves = np.diff(mids)
print(f"mid moved {np.count_nonzero(moves)} times, range {mids.min():.3f} .. {mids.max():.3f}")
print("final book", state.queues, "reference", state.ref_price)

# the reference only moves after a depletion, and then only with probability theta
refs = np.array([r.ref for r in log])
print(f"reference moved {np.count_nonzero(np.diff(refs))} times")
