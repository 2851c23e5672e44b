#!/usr/bin/env python3
"""Predicate tensors and one fuzzy logic unit, on a tiny blocks world.

Objects: u, v, w and the floor.  Facts: On(u,v), On(v,floor), On(w,floor),
Top(u), Top(w).  We build the candidate predicates a unit at breadth 1 sees
(direct, universally and existentially reduced), then hand-wire a
conjunction-with-negation unit that invents BlockNotTop(X): the blocks that
are neither the floor nor on top of a stack.
"""

import numpy as np

from logiclearn import autodiff as ad
from logiclearn import predicates as pr
from logiclearn.network import UnitSpec, module_forward

objects = ["u", "v", "w", "floor"]
n = len(objects)

on = np.zeros((n, n))
on[0, 1] = on[1, 3] = on[2, 3] = 1.0
top = np.array([1.0, 0.0, 1.0, 0.0])

groups = pr.input_groups({"Top": top, "On": on}, n)

print("reduction of On(X,Y): forall block, then exists block")
reduced = pr.reduce_both(groups[2])
for name, values in zip(reduced.names, reduced.node.value.T):
    print(f"  {name}: {values}")

print("\npermutations of the binary predicates:")
perms = pr.all_permutations(groups[2])
print(" ", perms.names, "(On_perm10[x,y] = On[y,x])")

candidates = pr.build_candidates(groups, 1, breadth_max=3)
print("\ncandidates for a unit at breadth 1:", candidates.names)
print("negated variants:", candidates.negated_names)

# a unit with 4 outputs: [conj, conj-neg, disj, disj-neg]; we aim unit 1
# (conj-neg) at: BlockNotTop(X) <- not Top(X) and exists Y On(X, Y)
spec = UnitSpec(n_out=4, n_atoms=2)
k = candidates.layout.k
theta = np.zeros((spec.n_selectors, k + 1))
theta[spec.selector_index(1, 0), candidates.names.index("Top")] = 50.0
theta[spec.selector_index(1, 1), candidates.names.index("On_any")] = 50.0

out = module_forward(candidates, ad.leaf(theta), spec, harden=True)
print("\nBlockNotTop grounding:", dict(zip(objects, out.node.value[:, 1])))
print("(only v: it is a block, covered by u, and it rests on something)")
