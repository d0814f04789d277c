"""
What a single market order does to the price
============================================

A buyer wipes out the best ask.  How far does the mid jump, what happens on
the next quote change, and does the move stick?  The answers depend on the
two reaction probabilities theta and theta_reinit.
"""

import numpy as np

from qrmexec import QrmParams, default_intensities
from qrmexec.impact import (
    ImpactExperimentSpec,
    depletion_response,
    impact_heatmap,
    repeated_depletion_path,
    theoretical_jump,
    theoretical_next_drift,
)
from qrmexec.rng import BufferedUniform, stream

N_SIMS = 4000   # raise for tighter error bars

params = QrmParams(default_intensities(), theta=0.7, theta_reinit=0.85)
tick = params.tick

full = depletion_response(ImpactExperimentSpec(n_sims=N_SIMS, horizon=75), params,
                          BufferedUniform(stream(0, "demo-full")))
print(f"immediate jump  {full.jump_mean:.5f} +- {full.jump_se:.5f}"
      f"   closed form {theoretical_jump(0.7, 0.85, tick):.5f}")
print(f"next mid move   {full.next_mean:+.5f} +- {full.next_se:.5f}"
      f"   closed form {theoretical_next_drift(0.7, 0.85, tick):+.5f}")
print("scenarios of the first quote change:", full.scenario_counts)

# consuming only half the queue leaves the best ask in place
half = depletion_response(ImpactExperimentSpec(n_sims=N_SIMS, horizon=75, mo_fraction=0.5),
                          params, BufferedUniform(stream(0, "demo-half")))
print("\nmean mid change after k events (price units)")
print(f"{'k':>4}{'full queue':>14}{'half queue':>14}")
for k in (0, 1, 5, 25, 75):
    print(f"{k:>4}{full.mean[k + 1]:>14.5f}{half.mean[k + 1]:>14.5f}")

# conditioning on who refills first
for cond in ("bid-refill", "ask-refill"):
    res = depletion_response(ImpactExperimentSpec(n_sims=N_SIMS, horizon=75, conditioning=cond),
                             params, BufferedUniform(stream(0, "demo-full")))
    print(f"{cond:<11} ({res.n_used} paths): next move {res.next_mean:+.5f}, "
          f"after 75 events {res.mean[-1]:+.5f}")

# the sign of the next move flips across theta (2 - theta_reinit) = 1
grid = np.linspace(0.5, 1.0, 6)
hm = impact_heatmap(ImpactExperimentSpec(thetas=grid, theta_reinits=grid, n_sims=N_SIMS // 4),
                    params, seed=0, long_term=False)
print("\nnext-move drift in ticks (rows theta, columns theta_reinit)")
print("      " + "".join(f"{tr:>8.1f}" for tr in grid))
for i, th in enumerate(grid):
    print(f"{th:>6.1f}" + "".join(f"{hm.short_mean[i, j] / tick:>8.3f}" for j in range(len(grid))))

# five trades 10 s apart, price measured in seconds since the first one
rep = repeated_depletion_path(10.0, 5, params, BufferedUniform(stream(0, "demo-repeat")),
                              n_sims=N_SIMS // 4)
print("\nrepeated depletions, mean mid change at t = 0, 10, ..., 50 s:",
      np.round(rep.mean[::10] / tick, 3), "ticks")
