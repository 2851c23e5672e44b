#!/usr/bin/env python3
"""Exact program extraction, simplification, and Boolean evaluation.

A redundant seven-rule grandparent program (the kind a generously sized
trained network produces) is simplified to three rules by idempotence,
constant identities, alias inlining, and merging of rules that are equal up
to an argument permutation.  Both versions evaluate identically on Boolean
tensors, and the Boolean evaluator runs on any number of objects.
"""

import numpy as np

from logiclearn.extraction import (Atom, Program, Rule, evaluate_boolean,
                                   render_text, simplify)

child1, child2 = (1, 2, 0), (1, 2, 1)
gcp, gpc1, gpc2, gp, tgt = (2, 3, 0), (2, 3, 1), (3, 3, 0), (4, 2, 0), (5, 2, 0)
son, daughter = ("input", "IsSon", 2), ("input", "IsDaughter", 2)

rules = {
    child1: Rule(child1, 2, "disj", (Atom(son, (0, 1)), Atom(daughter, (0, 1)))),
    child2: Rule(child2, 2, "disj", (Atom(son, (0, 1)), Atom(daughter, (0, 1)))),
    gcp: Rule(gcp, 3, "conj", (Atom(("rule", child2), (0, 2)),
                               Atom(("rule", child2), (2, 1)))),
    gpc1: Rule(gpc1, 3, "conj", (Atom(("rule", child1), (2, 0)),
                                 Atom(("rule", child1), (1, 2)))),
    gpc2: Rule(gpc2, 3, "disj", (Atom(("rule", gpc1), (0, 1, 2)),
                                 Atom(("rule", gcp), (1, 0, 2)))),
    gp: Rule(gp, 2, "conj", (Atom(("rule", gpc2), (0, 1, -1), "exists"),
                             Atom(("rule", gpc2), (0, 1, -1), "exists"))),
    tgt: Rule(tgt, 2, "conj", (Atom(("rule", gp), (0, 1)),
                               Atom(("rule", gp), (0, 1)))),
}
raw = Program(rules, tgt, "IsGrandParent",
              [("IsFather", 2), ("IsMother", 2), ("IsSon", 2), ("IsDaughter", 2)])

print("raw extracted program:")
print(render_text(raw))

slim = simplify(raw)
print(f"\nafter simplification ({len(raw.rules)} -> {len(slim.rules)} rules):")
print(render_text(slim))

# Boolean evaluation on a hand-built family: e is the grandchild of g via p
names = ["e", "p", "g", "x", "y"]
n = len(names)
inputs = {k: np.zeros((n, n), dtype=bool)
          for k in ("IsFather", "IsMother", "IsSon", "IsDaughter")}
inputs["IsFather"][0, 1] = True      # p is e's father ...
inputs["IsSon"][1, 0] = True         # ... equivalently, e is p's son
inputs["IsFather"][1, 2] = True      # g is p's father
inputs["IsSon"][2, 1] = True         # p is g's son
out = evaluate_boolean(slim, inputs, n)
print("\n(child, grandparent) pairs:",
      [(names[a], names[b]) for a, b in zip(*np.nonzero(out))])

rng = np.random.default_rng(0)
for trial in range(1000):
    size = int(rng.integers(2, 8))
    sample = {k: rng.random((size, size)) < 0.3 for k in inputs}
    assert np.array_equal(evaluate_boolean(raw, sample, size),
                          evaluate_boolean(slim, sample, size))
print("raw and simplified programs agree on 1000 random instances")
