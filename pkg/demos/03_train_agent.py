"""
Teaching a Double-DQN to buy 25 shares in ten minutes
=====================================================

The agent sees (time, inventory, best ask, best bid size, best ask size)
every 24 seconds and picks 0, 50% or 100% of the best-ask queue.  Anything
left at the end costs one price unit per share.  A short run already beats
buying blindly; the checkpoint used in the evaluation demo is the same loop
run for 1e5 episodes.
"""

from pathlib import Path

import numpy as np

from qrmexec import QrmParams, default_intensities
from qrmexec.ddqn import TrainConfig, q_surface, save_agent, train
from qrmexec.env import EnvConfig

EPISODES = 3000   # about five minutes on one core
OUT = Path("runs/demo_train")

params = QrmParams(default_intensities())
env = EnvConfig()
cfg = TrainConfig(episodes=EPISODES)


def show(ep, res):
    r = res.episode_rewards[ep - 500:ep]
    print(f"episode {ep:>6}  mean reward {np.nanmean(r):+.3f}  epsilon {res.meta['epsilon']:.2f}"
          f"  {res.seconds:.0f} s")


res = train(cfg, env, params, seed=1, progress=show, progress_every=500)
print(f"{res.n_updates} gradient steps, last 1000 TD losses average {res.losses[-1000:].mean():.4f}")
print("normalisation stats:", res.stats.to_dict())

OUT.mkdir(parents=True, exist_ok=True)
save_agent(OUT / "checkpoint.qnet", res.net, env, res.stats, {"episodes_done": EPISODES})

# value of a state with average market features, over time and inventory
surf = q_surface(res.net, res.stats, env, params.tick, p0=params.initial_ref_price)
V = surf.state_value
print("\nstate value max_a Q (rows: time in s, columns: inventory 5, 10, 15, 20, 25)")
for i in range(0, len(surf.times), 4):
    print(f"{surf.times[i]:>6.0f}" + "".join(f"{V[i, j]:>9.3f}" for j in (4, 9, 14, 19, 24)))
print("share of adjacent pairs decreasing in time:", np.mean(np.diff(V, axis=0) < 0).round(3),
      " in inventory:", np.mean(np.diff(V, axis=1) < 0).round(3))

best = np.argmax(surf.values, axis=0)
print("\ngreedy action index at inventory 25 over time:", best[:, -1])
