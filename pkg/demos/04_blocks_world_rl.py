#!/usr/bin/env python3
"""Learn an interpretable unstacking policy with the actor-critic loop.

The actor is the logic machine reading IsFloor/Top/On; its Move(X, Y) head,
softmaxed at temperature 0.01, is the action distribution.  A recurrent
value head enables clipped-surrogate updates over five trajectories at a
time.  Every ten updates the extracted policy is scored on the five frozen
evaluation variations; training stops once the program solves all of them
and the selection weights have committed.
"""

from logiclearn.extraction import render_text
from logiclearn.rl import RLConfig, train_rl


def log(row):
    print(f"update {row['update']:4d}  episodes {row['episodes']:4d}  "
          f"train-reward {row['train_reward']:.3f}  "
          f"program det/stoch {row['program_det_success']:.2f}/"
          f"{row['program_stoch_success']:.2f}  gauge {row['gauge']:.2f}",
          flush=True)


result = train_rl("unstack", seed=0, cfg=RLConfig(episode_cap=4000), log=log)
print(f"\nsolved: {result.solved} after {result.episodes} episodes "
      f"({result.wall_seconds:.0f}s)\n")
print("extracted policy (scores actions; ties resolved by the softmax):")
print(render_text(result.program))
print("\nevaluation on the frozen variations:", result.final_eval["program_stoch"])
