"""Benchmark task registry: family-tree and graph reasoning targets.

Each task carries its background predicate signature, the unit-grid
architecture used to learn it, train/evaluation object counts, and a
brute-force ground-truth oracle that evaluates the target definition over
all groundings.

Family tasks share the background predicates IsFather, IsMother, IsSon and
IsDaughter, where e.g. IsFather(X, Y) holds when Y is X's father.  Graph
tasks observe HasEdge (undirected for connectivity and color adjacency,
directed for the out-degree tasks); AdjacentToRed also observes IsRed, and
the out-degree tasks also observe the identity relation SameNode, without
which exact-count properties are not expressible in the equality-free
fragment the network searches.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..network import NetworkConfig

FAMILY_INPUTS = (("IsFather", 2), ("IsMother", 2), ("IsSon", 2), ("IsDaughter", 2))


def _hits(a, b) -> np.ndarray:
    """Boolean matrix product: exists z with a[x, z] and b[z, y]."""
    return (a.astype(np.int64) @ b.astype(np.int64)) > 0


# -- family oracles ---------------------------------------------------------

def has_father(inp, n):
    return inp["IsFather"].any(axis=1)


def is_sister(inp, n):
    # IsSister(X, Y) <- exists Z, IsDaughter(Z, Y) and IsMother(X, Z)
    return _hits(inp["IsMother"], inp["IsDaughter"])


def has_sister(inp, n):
    return is_sister(inp, n).any(axis=1)


def is_grandparent(inp, n):
    # exists Z, (IsSon(Y,Z) and IsFather(X,Z)) or (IsDaughter(Y,Z) and IsMother(X,Z))
    return (_hits(inp["IsFather"], inp["IsSon"].T)
            | _hits(inp["IsMother"], inp["IsDaughter"].T))


def is_brother(inp, n):
    # exists Z, IsSon(Z,Y) and (IsSon(Z,X) or IsDaughter(Z,X))
    child = inp["IsSon"] | inp["IsDaughter"]
    return _hits(child.T, inp["IsSon"])


def is_uncle(inp, n):
    parent = inp["IsMother"] | inp["IsFather"]
    return _hits(parent, is_brother(inp, n))


def is_mg_uncle(inp, n):
    return _hits(inp["IsMother"], is_uncle(inp, n))


# -- graph oracles ----------------------------------------------------------

def adjacent_to_red(inp, n):
    return (inp["HasEdge"] & inp["IsRed"][None, :]).any(axis=1)


def four_connectivity(inp, n):
    e = inp["HasEdge"]
    d2 = _hits(e, e)
    return e | d2 | _hits(d2, e) | _hits(d2, d2)


def six_connectivity(inp, n):
    e = inp["HasEdge"]
    d2 = _hits(e, e)
    d3 = _hits(e, d2)
    return e | d2 | d3 | _hits(d2, d2) | _hits(d3, d2) | _hits(d3, d3)


def one_outdegree(inp, n):
    return inp["HasEdge"].sum(axis=1) == 1


def two_outdegree(inp, n):
    return inp["HasEdge"].sum(axis=1) == 2


# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TaskSpec:
    task_id: str
    domain: str                  # family | graph
    inputs: tuple
    target_name: str
    target_arity: int
    oracle_fn: object
    train_n: int
    general_n: int
    depth: int
    breadth: int
    n_out: int = 8
    n_atoms: int = 2
    residual: bool = False
    epoch_cap: int = 400
    gen_params: dict = field(default_factory=dict)


def network_config(spec: TaskSpec) -> NetworkConfig:
    return NetworkConfig(depth=spec.depth, breadth=spec.breadth, n_out=spec.n_out,
                         n_atoms=spec.n_atoms, input_signature=list(spec.inputs),
                         target_arity=spec.target_arity, residual=spec.residual)


def oracle(task, inputs: dict, n: int) -> np.ndarray:
    """Ground-truth target tensor for a task, by brute-force evaluation."""
    spec = task if isinstance(task, TaskSpec) else TASKS[task]
    return np.asarray(spec.oracle_fn(inputs, n), dtype=bool)


def _family(task_id, target, arity, fn, depth=5, breadth=3, cap=400):
    return TaskSpec(task_id, "family", FAMILY_INPUTS, target, arity, fn,
                    train_n=20, general_n=100, depth=depth, breadth=breadth,
                    epoch_cap=cap, gen_params={"p_child": 0.6})


def _graph(task_id, target, arity, fn, inputs, depth=5, breadth=3, cap=400, **gen):
    return TaskSpec(task_id, "graph", inputs, target, arity, fn,
                    train_n=10, general_n=50, depth=depth, breadth=breadth,
                    epoch_cap=cap, gen_params=gen)


TASKS = {s.task_id: s for s in [
    _family("has-father", "HasFather", 1, has_father),
    _family("has-sister", "HasSister", 1, has_sister),
    _family("is-grandparent", "IsGrandparent", 2, is_grandparent),
    _family("is-uncle", "IsUncle", 2, is_uncle, cap=800),
    _family("is-mg-uncle", "IsMGUncle", 2, is_mg_uncle, depth=9, cap=2000),
    _graph("adjacent-to-red", "AdjacentToRed", 1, adjacent_to_red,
           (("HasEdge", 2), ("IsRed", 1)), edge_factor=2.0, p_red=0.3),
    _graph("4-connectivity", "4Connectivity", 2, four_connectivity,
           (("HasEdge", 2),), edge_factor=1.0),
    _graph("6-connectivity", "6Connectivity", 2, six_connectivity,
           (("HasEdge", 2),), depth=9, cap=1200, edge_factor=0.8),
    _graph("1-outdegree", "1OutDegree", 1, one_outdegree,
           (("HasEdge", 2), ("SameNode", 2)), directed=True, edge_factor=2.0,
           cap=800),
    _graph("2-outdegree", "2OutDegree", 1, two_outdegree,
           (("HasEdge", 2), ("SameNode", 2)), directed=True, edge_factor=2.0,
           depth=7, breadth=4, cap=1200),
]}
