#!/usr/bin/env python3
"""Why extraction matters at deployment time: soft forward vs Boolean program.

A machine is trained on is-grandparent (20 people), then both the soft
forward pass and the extracted Boolean program are timed across growing
object counts.  The program works on byte tensors and touches only the
rules reachable from the target, so it is orders of magnitude lighter; the
parameters never change with the object count, so the same artifacts run at
every size.
"""

import time
import tracemalloc

import numpy as np

from logiclearn import autodiff as ad
from logiclearn.extraction import evaluate_boolean
from logiclearn.ilp import TASKS, make_instance, train_supervised
from logiclearn.predicates import input_groups
from logiclearn.network import supervised_noise

print("training is-grandparent (stops at the first perfect program) ...")
result = train_supervised("is-grandparent", seed=0, log=None)
print(f"done after {result.epochs_run} epochs ({result.wall_seconds:.0f}s), "
      f"converged={result.converged}\n")

spec = TASKS["is-grandparent"]
rng = np.random.default_rng(0)
print(f"{'people':>8} {'soft ms':>10} {'soft MB':>9} {'program ms':>12} {'program MB':>11}")
for n in (10, 20, 40, 60, 80, 100):
    inst = make_instance(spec, n, rng)
    floats = {k: v.astype(float) for k, v in inst.inputs.items()}

    def soft():
        with ad.no_grad():
            result.machine.forward(input_groups(floats, n), supervised_noise())

    def prog():
        evaluate_boolean(result.program, inst.inputs, n)

    row = []
    for fn in (soft, prog):
        fn()  # warmup
        tracemalloc.start()
        t0 = time.perf_counter()
        fn()
        dt = time.perf_counter() - t0
        _, peak = tracemalloc.get_traced_memory()
        tracemalloc.stop()
        row += [dt * 1e3, peak / 1e6]
    print(f"{n:>8} {row[0]:>10.1f} {row[1]:>9.1f} {row[2]:>12.2f} {row[3]:>11.2f}")
