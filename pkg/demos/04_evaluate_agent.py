"""
How the trained agent compares with simple schedules
====================================================

Every strategy plays the same test episodes.  Leftover shares at the
horizon are bought at once by a forced final trade, so the reward below is
minus the implementation shortfall.  We then look at how the agent spreads
its trades and which inputs move its decisions.
"""

from pathlib import Path

import numpy as np

from qrmexec import QrmParams, default_intensities
from qrmexec.benchmarks import default_benchmarks
from qrmexec.ddqn import DdqnPolicy, load_agent
from qrmexec.env import EnvConfig
from qrmexec.evaluation import (
    compare,
    episode_analytics,
    evaluate,
    feature_importance,
    greedy_states,
)

EPISODES = 2000
CANDIDATES = [Path("artifacts/ddqn_default/checkpoint.qnet"), Path("runs/demo_train/checkpoint.qnet")]

params = QrmParams(default_intensities())
env = EnvConfig()
path = next((p for p in CANDIDATES if p.exists()), None)
if path is None:
    raise SystemExit("no checkpoint found; run 03_train_agent.py first")
net, stats, meta = load_agent(path, env)
print(f"checkpoint {path} ({meta.get('episodes_done', '?')} training episodes)\n")

agent = DdqnPolicy(net, env.action_set)
reports = [evaluate(p, env, params, EPISODES, seed=3, stats=stats)
           for p in [agent, *default_benchmarks()]]
table = compare(reports)
print(table.text())

# when does the agent trade?
an = episode_analytics(reports[0].records, env.n_intervals)
print("\nepisode lengths (decision steps):", an.length_hist)
print("mean shares bought by step 5, 10, 15, 20, 25:",
      np.round(an.mean_trajectory[[4, 9, 14, 19, 24]], 2))
for g in an.gaps.values():
    if g.count >= 20:
        print(f"  length {g.length:>2}: {g.count:>5} episodes, average idle gap {g.mean:.2f}")

# mean absolute input gradient on states the agent actually visits
X = greedy_states(net, stats, env, params, 200, seed=4)
imp = feature_importance(net, X)
print(f"\nfeature importance over {len(X)} visited states")
print(f"{'action':>8}" + "".join(f"{f:>13}" for f in env.state_features))
for a, row in zip(env.action_set, imp):
    print(f"{a:>8.1f}" + "".join(f"{v:>13.4f}" for v in row))
