"""Predicate groups as tensors and the inter-layer plumbing.

A b-ary predicate over n objects grounds to an [n]^b tensor of truth
probabilities.  A PredicateGroup stacks all same-arity predicates along a
trailing axis: shape [n]^b x count (optionally with a leading batch axis
shared by a set of instances of the same size).

Candidate construction for a logic unit at breadth b gathers, from the
previous layer, the direct arity-b predicates, expansions of arity-(b-1),
universal and existential reductions of arity-(b+1), and optionally the
arity-b network inputs (residual connections), each under every argument
permutation.  Ordering is a pure function of the configuration so that
selection-logit indices stay stable across checkpoints and extraction.

Candidate naming grammar: `<base>[_perm<sigma>][_ex][_all|_any]`, with
`_res` appended for residual input candidates; the permutation tag is
omitted for the identity.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import permutations
from typing import Optional

import numpy as np

from . import autodiff as ad


def perm_tag(sigma) -> str:
    sigma = tuple(sigma)
    if sigma == tuple(range(len(sigma))):
        return ""
    return "_perm" + "".join(str(i) for i in sigma)


def sigmas_for(arity: int) -> list[tuple[int, ...]]:
    """All argument permutations of the given arity, lexicographic."""
    return list(permutations(range(arity))) if arity > 0 else [()]


@dataclass
class PredicateGroup:
    """All predicates of one arity at one point in the network, stacked."""

    arity: int
    n_objects: int
    names: list
    node: ad.Node
    batched: bool = False

    def __post_init__(self):
        lead = 1 if self.batched else 0
        expect = self.node.value.shape[lead:lead + self.arity]
        if len(self.node.value.shape) != lead + self.arity + 1:
            raise ValueError(f"group tensor rank {self.node.value.ndim} != arity {self.arity} + 1")
        if any(d != self.n_objects for d in expect):
            raise ValueError(f"group object dims {expect} != n_objects {self.n_objects}")
        if self.node.value.shape[-1] != len(self.names):
            raise ValueError(f"group has {self.node.value.shape[-1]} tensors for {len(self.names)} names")

    @property
    def count(self) -> int:
        return len(self.names)

    @property
    def lead(self) -> int:
        return 1 if self.batched else 0

    def select(self, index: int) -> ad.Node:
        """Tensor of one predicate, count axis removed."""
        return ad.index_axis(self.node, self.node.value.ndim - 1, index)


def group_from_arrays(named, n_objects: int, arity: int, batched=False) -> PredicateGroup:
    """Stack (name, array) pairs of one arity into a group; values cast to float64."""
    names = [nm for nm, _ in named]
    arrays = [np.asarray(a, dtype=np.float64) for _, a in named]
    node = ad.constant(np.stack(arrays, axis=-1)) if arrays else ad.constant(
        np.zeros(((0,) if batched else ()) + (n_objects,) * arity + (0,)))
    return PredicateGroup(arity, n_objects, names, node, batched=batched)


def input_groups(predicates: dict, n_objects: int, batched=False) -> dict[int, PredicateGroup]:
    """Group a {name: array} mapping by arity (layer-0 construction)."""
    lead = 1 if batched else 0
    by_arity: dict[int, list] = {}
    for name in predicates:
        arity = np.asarray(predicates[name]).ndim - lead
        by_arity.setdefault(arity, []).append((name, predicates[name]))
    return {b: group_from_arrays(items, n_objects, b, batched=batched)
            for b, items in sorted(by_arity.items())}


def expand(g: PredicateGroup) -> PredicateGroup:
    """Append an inert trailing argument: P_hat(X1..Xb, X_{b+1}) = P(X1..Xb)."""
    node = ad.expand_axis(g.node, g.lead + g.arity, g.n_objects)
    return PredicateGroup(g.arity + 1, g.n_objects, [nm + "_ex" for nm in g.names],
                          node, batched=g.batched)


def reduce_both(g: PredicateGroup) -> PredicateGroup:
    """Eliminate the trailing argument, universally then existentially.

    The first count outputs are the forall (min) reductions, the next count
    the exists (max) reductions.
    """
    if g.arity < 1:
        raise ValueError("reduce_both: needs arity >= 1")
    axis = g.lead + g.arity - 1
    forall = ad.reduce(g.node, axis, "min")
    exists = ad.reduce(g.node, axis, "max")
    names = [nm + "_all" for nm in g.names] + [nm + "_any" for nm in g.names]
    return PredicateGroup(g.arity - 1, g.n_objects, names,
                          ad.concat_last([forall, exists]), batched=g.batched)


def all_permutations(g: PredicateGroup) -> PredicateGroup:
    """One output per (predicate, argument permutation), source-major ordering."""
    sigmas = sigmas_for(g.arity)
    if len(sigmas) == 1:
        return g
    lead = g.lead
    rank = g.node.value.ndim
    permuted = []
    for sigma in sigmas:
        # candidate[i_0..] = P[i_{sigma(0)}, ..]: transpose by the inverse
        axes = tuple(range(lead)) + tuple(lead + int(a) for a in np.argsort(sigma)) \
            + (rank - 1,)
        permuted.append(ad.permute_axes(g.node, axes))
    stacked = ad.stack_last(permuted)  # [..., count, |S_b|]
    merged = ad.reshape(stacked, stacked.value.shape[:-2] + (g.count * len(sigmas),))
    names = [nm + perm_tag(s) for nm in g.names for s in sigmas]
    return PredicateGroup(g.arity, g.n_objects, names, merged, batched=g.batched)


# ---------------------------------------------------------------------------
# candidate sets

@dataclass(frozen=True)
class CandidateMeta:
    """How one candidate predicate was derived from the previous layer."""

    name: str
    source_level: str          # "prev" (previous layer) or "input" (layer 0)
    source_arity: int
    source_index: int
    sigma: tuple               # permutation of the candidate's own arguments
    quant: Optional[str]       # None | "forall" | "exists" (reduction tag)
    expanded: bool


@dataclass
class ModuleLayout:
    """Deterministic candidate bookkeeping for one logic unit position."""

    breadth: int
    sigmas: list
    base_metas: list           # per pre-permutation column, identity-sigma metas
    metas: list = field(default_factory=list)  # all K candidates, (source, sigma) order

    def __post_init__(self):
        if not self.metas:
            self.metas = [
                CandidateMeta(m.name + perm_tag(s), m.source_level, m.source_arity,
                              m.source_index, s, m.quant, m.expanded)
                for m in self.base_metas for s in self.sigmas
            ]

    @property
    def k0(self) -> int:
        return len(self.base_metas)

    @property
    def k(self) -> int:
        return len(self.metas)

    @property
    def names(self) -> list:
        return [m.name for m in self.metas]

    @property
    def negated_names(self) -> list:
        return ["~" + m.name for m in self.metas]


def module_layout(prev_names: dict, b: int, breadth_max: int,
                  residual_names=None) -> Optional[ModuleLayout]:
    """Candidate ordering for breadth b given previous-layer group contents.

    Order: direct, expanded, reduced-forall, reduced-exists, residual inputs;
    within each, source-predicate order then lexicographic permutation.
    Returns None when no candidates exist at this breadth.
    """
    if b < 0 or b > breadth_max:
        raise ValueError(f"breadth {b} outside [0, {breadth_max}]")
    base: list[CandidateMeta] = []
    ident = tuple(range(b))

    for i, nm in enumerate(prev_names.get(b, [])):
        base.append(CandidateMeta(nm, "prev", b, i, ident, None, False))
    if b - 1 >= 0:
        for i, nm in enumerate(prev_names.get(b - 1, [])):
            base.append(CandidateMeta(nm + "_ex", "prev", b - 1, i, ident, None, True))
    if b + 1 <= breadth_max:
        for i, nm in enumerate(prev_names.get(b + 1, [])):
            base.append(CandidateMeta(nm + "_all", "prev", b + 1, i, ident, "forall", False))
        for i, nm in enumerate(prev_names.get(b + 1, [])):
            base.append(CandidateMeta(nm + "_any", "prev", b + 1, i, ident, "exists", False))
    if residual_names:
        for i, nm in enumerate(residual_names):
            base.append(CandidateMeta(nm + "_res", "input", b, i, ident, None, False))

    if not base:
        return None
    return ModuleLayout(breadth=b, sigmas=sigmas_for(b), base_metas=base)


@dataclass
class CandidateSet:
    """Candidate predicates feeding one logic unit.

    `base` stacks the pre-permutation category tensors in layout order; the
    full candidate list (layout.metas) is every base column under every
    argument permutation, plus an implicit constant preservation slot handled
    analytically at selection time.  Negated candidates equal one minus the
    positive ones and share this ordering.
    """

    layout: ModuleLayout
    base: ad.Node
    n_objects: int
    batched: bool

    @property
    def names(self):
        return self.layout.names

    @property
    def negated_names(self):
        return self.layout.negated_names

    def materialize(self) -> PredicateGroup:
        """Explicit [.., K] candidate tensor (tests and small-scale paths)."""
        g = PredicateGroup(self.layout.breadth, self.n_objects,
                           [m.name for m in self.layout.base_metas],
                           self.base, batched=self.batched)
        return all_permutations(g)


def build_candidates(prev_groups: dict, b: int, breadth_max: int,
                     residual_group: Optional[PredicateGroup] = None) -> Optional[CandidateSet]:
    """Assemble the candidate set for breadth b from previous-layer groups."""
    present = {arity: g for arity, g in prev_groups.items() if g is not None and g.count > 0}
    prev_names = {a: g.names for a, g in present.items()}
    residual_names = residual_group.names if residual_group and residual_group.count else None
    layout = module_layout(prev_names, b, breadth_max, residual_names)
    if layout is None:
        return None

    some = next(iter(present.values())) if present else residual_group
    n = some.n_objects
    batched = some.batched
    pieces = []
    if b in present:
        pieces.append(present[b].node)
    if b - 1 >= 0 and (b - 1) in present:
        pieces.append(expand(present[b - 1]).node)
    if b + 1 <= breadth_max and (b + 1) in present:
        red = present[b + 1]
        axis = red.lead + red.arity - 1
        pieces.append(ad.reduce(red.node, axis, "min"))
        pieces.append(ad.reduce(red.node, axis, "max"))
    if residual_names:
        pieces.append(residual_group.node)

    base = pieces[0] if len(pieces) == 1 else ad.concat_last(pieces)
    if base.value.shape[-1] != layout.k0:
        raise AssertionError("candidate tensor/layout mismatch")
    return CandidateSet(layout=layout, base=base, n_objects=n, batched=batched)
