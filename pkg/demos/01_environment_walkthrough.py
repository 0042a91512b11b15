"""Walk through one FANET episode step by step.

Shows the world state, the mutual-consent link resolution, path-to-ground
computation, and the global reward, then dumps a JSON-lines trajectory.
"""

import numpy as np

from fanetq.env import dump_trajectory, path_to_ground
from fanetq.experiments import load_scenario
from fanetq.env import FanetEnv

cfg = load_scenario("4a1s")
print(f"scenario 4a1s: {cfg.n_aircraft} aircraft + {cfg.n_ground} ground station, "
      f"horizon {cfg.horizon}, comm range {cfg.comm_range}")
print(f"observation dim {cfg.obs_dim}, action dim {cfg.action_dim}, "
      f"global obs dim {cfg.global_obs_dim}")

env = FanetEnv(cfg)
obs = env.reset(seed=42)
print("\ninitial positions:")
for e in env.world.entities:
    print(f"  {e.kind:8s} {e.id}: pos=({e.pos[0]:.3f}, {e.pos[1]:.3f}) vel=({e.vel[0]:+.3f}, {e.vel[1]:+.3f})")

rng = np.random.default_rng(0)
total = 0.0
for t in range(cfg.horizon):
    actions = rng.uniform(0, 1, size=(cfg.n_aircraft, cfg.action_dim))
    obs, r, done = env.step(actions)
    total += r * cfg.n_aircraft
    if t < 3 or done:
        ptg = path_to_ground(env.world.links, env.world)
        print(f"\nstep {env.world.t}: links={sorted(env.world.links.edges)}")
        print(f"  path-to-ground={ptg.tolist()}  reward={r:.3f}")
print(f"\nepisode cumulative reward (CR): {total:.1f} of max {cfg.horizon * cfg.n_aircraft}")

dump_trajectory("trajectory_4a1s.jsonl", cfg, seed=42,
                action_fn=lambda obs, t: rng.uniform(0, 1, size=(cfg.n_aircraft, cfg.action_dim)))
print("wrote trajectory_4a1s.jsonl (one JSON record per step)")
