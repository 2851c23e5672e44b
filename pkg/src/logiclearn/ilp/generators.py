"""Random instance generators for the benchmark tasks.

Family trees grow by sequential insertion: each new person either starts a
root (and marries an existing person of the opposite gender, forming a new
couple) or attaches as a child of a uniformly chosen existing couple, with
gender sampled uniformly.  This guarantees at most one father and one mother
per person and an acyclic ancestry.

Graphs are Erdos-Renyi with edge probability edge_factor / n, undirected and
symmetric for the connectivity and color tasks, directed for the out-degree
tasks.  Edge factors are tuned so target labels stay reasonably balanced at
both the training and the generalization sizes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tasks import TASKS, TaskSpec, oracle


@dataclass
class ILPInstance:
    n: int
    inputs: dict
    target: np.ndarray


def gen_family_tree(n: int, rng: np.random.Generator, p_child: float = 0.6) -> dict:
    if n < 2:
        raise ValueError("need at least two people")
    male = rng.random(n) < 0.5
    male[1] = not male[0]  # the founding couple
    father = np.zeros((n, n), dtype=bool)
    mother = np.zeros((n, n), dtype=bool)
    son = np.zeros((n, n), dtype=bool)
    daughter = np.zeros((n, n), dtype=bool)

    def couple_of(a, b):
        return (a, b) if male[a] else (b, a)

    couples = [couple_of(0, 1)]
    for person in range(2, n):
        if rng.random() < p_child:
            dad, mom = couples[int(rng.integers(len(couples)))]
            father[person, dad] = True
            mother[person, mom] = True
            if male[person]:
                son[dad, person] = son[mom, person] = True
            else:
                daughter[dad, person] = daughter[mom, person] = True
        else:
            others = np.flatnonzero(male[:person] != male[person])
            partner = int(rng.choice(others))
            couples.append(couple_of(person, partner))
    return {"IsFather": father, "IsMother": mother, "IsSon": son,
            "IsDaughter": daughter}


def gen_graph(n: int, rng: np.random.Generator, *, edge_factor: float = 2.0,
              directed: bool = False, p_red: float = None) -> dict:
    if n < 2:
        raise ValueError("need at least two nodes")
    p = min(1.0, edge_factor / n)
    if directed:
        edge = rng.random((n, n)) < p
        np.fill_diagonal(edge, False)
    else:
        upper = np.triu(rng.random((n, n)) < p, k=1)
        edge = upper | upper.T
    out = {"HasEdge": edge}
    if p_red is not None:
        out["IsRed"] = rng.random(n) < p_red
    return out


def instance_inputs(spec: TaskSpec, n: int, rng: np.random.Generator) -> dict:
    if spec.domain == "family":
        return gen_family_tree(n, rng, **spec.gen_params)
    inputs = gen_graph(n, rng, **{k: v for k, v in spec.gen_params.items()
                                  if k in ("edge_factor", "directed", "p_red")})
    if any(name == "SameNode" for name, _ in spec.inputs):
        inputs["SameNode"] = np.eye(n, dtype=bool)
    return inputs


def make_instance(task, n: int, rng: np.random.Generator) -> ILPInstance:
    """Fresh instance with its target computed by the ground-truth oracle."""
    spec = task if isinstance(task, TaskSpec) else TASKS[task]
    inputs = instance_inputs(spec, n, rng)
    return ILPInstance(n, inputs, oracle(spec, inputs, n))
