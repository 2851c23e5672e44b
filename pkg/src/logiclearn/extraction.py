"""Collapse a trained soft network into an exact first-order logic program.

Each selection softmax is replaced by its argmax (ties to the lowest index),
the fuzzy connectives by Boolean ones, and only units reachable from the
output head are kept.  The result is a DAG of rules over the input predicates
that evaluates on Boolean tensors of any object count.

An atom records one derivation step from the source predicate: an argument
map from source positions to head variables, an optional leading quantifier
over a fresh variable introduced by reduction (always the source's last
argument), a negation flag applied outside the quantifier, and constant
atoms for the preservation slots.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from itertools import permutations
from typing import Optional

import numpy as np

from .network import LogicMachine

QUANT_FLIP = {"forall": "exists", "exists": "forall"}


@dataclass(frozen=True)
class Atom:
    source: tuple            # ("input", name, arity) | ("rule", key) | ("const", bool)
    args: tuple = ()         # head-variable index per source position, -1 = quantified
    quant: Optional[str] = None
    negated: bool = False


@dataclass
class Rule:
    key: tuple               # (layer, breadth, unit)
    head_arity: int
    kind: str                # "conj" | "disj"
    atoms: tuple


@dataclass
class Program:
    rules: dict              # key -> Rule, topologically ordered, target last
    target_key: tuple
    target_name: str
    input_signature: list

    @property
    def target_arity(self) -> int:
        return self.rules[self.target_key].head_arity

    def rule_list(self):
        return list(self.rules.values())

    # -- structured serialization ------------------------------------------

    def to_json(self) -> str:
        def atom_d(a: Atom):
            src = list(a.source)
            if src[0] == "rule":
                src[1] = list(src[1])
            return {"source": src, "args": list(a.args), "quant": a.quant,
                    "negated": a.negated}

        return json.dumps({
            "target": list(self.target_key),
            "target_name": self.target_name,
            "input_signature": [list(p) for p in self.input_signature],
            "rules": [{"key": list(r.key), "head_arity": r.head_arity, "kind": r.kind,
                       "atoms": [atom_d(a) for a in r.atoms]} for r in self.rules.values()],
        }, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "Program":
        d = json.loads(text)

        def atom_up(a):
            src = a["source"]
            if src[0] == "rule":
                source = ("rule", tuple(src[1]))
            elif src[0] == "input":
                source = ("input", src[1], src[2])
            else:
                source = ("const", bool(src[1]))
            return Atom(source, tuple(a["args"]), a["quant"], a["negated"])

        rules = {}
        for r in d["rules"]:
            key = tuple(r["key"])
            rules[key] = Rule(key, r["head_arity"], r["kind"],
                              tuple(atom_up(a) for a in r["atoms"]))
        return cls(rules, tuple(d["target"]), d["target_name"],
                   [tuple(p) for p in d["input_signature"]])


# ---------------------------------------------------------------------------
# extraction

def _meta_to_atom(meta, negated: bool, prev_layer: int, input_names: dict):
    sigma = meta.sigma
    if meta.quant is not None:
        args = tuple(sigma) + (-1,)
    elif meta.expanded:
        args = tuple(sigma[:-1]) if sigma else ()
    else:
        args = tuple(sigma)
    if meta.source_level == "input" or prev_layer == 0:
        name = input_names[meta.source_arity][meta.source_index]
        source = ("input", name, meta.source_arity)
        ref = None
    else:
        source = ("rule", (prev_layer, meta.source_arity, meta.source_index))
        ref = source[1]
    return Atom(source, args, meta.quant, negated), ref


def _argmax_walk(machine: LogicMachine):
    """Rules and selectors reachable from the output head under argmax choice."""
    cfg = machine.config
    spec = machine.spec
    input_names = cfg.input_names_by_arity()
    target = (cfg.depth, cfg.target_arity, 0)
    rules: dict[tuple, Rule] = {}
    used: list[tuple] = []

    def visit(key):
        if key in rules:
            return
        layer, breadth, unit = key
        layout = machine.layouts[(layer, breadth)]
        theta = machine.theta[(layer, breadth)].value
        kind = "conj" if unit < cfg.n_out // 2 else "disj"
        atoms = []
        deps = []
        for slot in range(cfg.n_atoms):
            sel = spec.selector_index(unit, slot)
            used.append(((layer, breadth), unit, slot))
            pick = int(np.argmax(theta[sel]))
            if pick == layout.k:
                atoms.append(Atom(("const", spec.preserve_value(unit) == 1.0)))
                continue
            meta = layout.metas[pick]
            atom, ref = _meta_to_atom(meta, spec.selector_negated(unit, slot),
                                      layer - 1, input_names)
            atoms.append(atom)
            if ref is not None:
                deps.append(ref)
        rules[key] = Rule(key, breadth, kind, tuple(atoms))
        for dep in deps:
            visit(dep)

    visit(target)
    return rules, used, target


def _topo_sorted(rules: dict, target: tuple) -> dict:
    order = []
    seen = set()

    def visit(key):
        if key in seen:
            return
        seen.add(key)
        for atom in rules[key].atoms:
            if atom.source[0] == "rule":
                visit(atom.source[1])
        order.append(key)

    visit(target)
    return {k: rules[k] for k in order}


def extract(machine: LogicMachine, target_name: str = "Target") -> Program:
    """Argmax-harden the machine into a logic program (total in the parameters)."""
    rules, _, target = _argmax_walk(machine)
    return Program(_topo_sorted(rules, target), target, target_name,
                   list(machine.config.input_signature))


def interpretability_gauge(machine: LogicMachine, tau: float) -> float:
    """Min over used selection vectors of their maximum softmax weight."""
    _, used, _ = _argmax_walk(machine)
    worst = 1.0
    for key, unit, slot in used:
        row = machine.theta[key].value[machine.spec.selector_index(unit, slot)] / tau
        row = row - row.max()
        w = np.exp(row)
        worst = min(worst, float(1.0 / w.sum()))
    return worst


# ---------------------------------------------------------------------------
# simplification

def _compose(ref: Atom, body: Atom) -> Optional[Atom]:
    """Atom equal to `ref` with its single-atom alias rule inlined, if representable."""
    if ref.quant is not None and body.quant is not None:
        return None
    if body.source[0] == "const":
        value = body.source[1] != body.negated
        return Atom(("const", value != ref.negated))
    args = tuple(ref.args[a] if a >= 0 else -1 for a in body.args)
    if body.quant is not None:
        quant, negated = body.quant, ref.negated != body.negated
    elif body.negated and ref.quant is not None:
        quant, negated = QUANT_FLIP[ref.quant], not ref.negated
    else:
        quant, negated = ref.quant, ref.negated != body.negated
    return Atom(body.source, args, quant, negated)


def _apply_const_atoms(rule: Rule) -> Rule:
    """Idempotence plus identity/absorption for constant atoms."""
    seen = []
    for atom in rule.atoms:
        if atom not in seen:
            seen.append(atom)
    identity = rule.kind == "conj"
    absorbed = any(a.source == ("const", not identity) for a in seen)
    if absorbed:
        return replace(rule, atoms=(Atom(("const", not identity)),))
    kept = tuple(a for a in seen if a.source[0] != "const")
    if not kept:
        kept = (Atom(("const", identity)),)
    return replace(rule, atoms=kept)


def _canonical_key(rule: Rule, canon_ref: dict):
    """Minimal serialized body over head-variable permutations.

    Returns (key, rho) where renaming head variables by rho reaches the
    minimum; two rules with equal keys define the same relation up to a
    permutation of their arguments.
    """
    def ser(atom: Atom, rho):
        src = atom.source
        if src[0] == "rule":
            src = ("rule", canon_ref.get(src[1], src[1]))
        args = tuple(rho[a] if a >= 0 else -1 for a in atom.args)
        return (src, args, atom.quant or "", atom.negated)

    best = None
    best_rho = None
    for rho in permutations(range(rule.head_arity)):
        key = (rule.kind, rule.head_arity,
               tuple(sorted(ser(a, rho) for a in rule.atoms)))
        if best is None or key < best:
            best, best_rho = key, rho
    return best, best_rho


def simplify(program: Program, max_passes: int = 100) -> Program:
    """Rewrite to fixpoint: idempotence, constant identities, double negation
    via alias inlining, permutation-equivalent duplicate merging, pruning.

    The rewrite set is semantics-preserving on all groundings.
    """
    rules = {k: replace(r, atoms=tuple(r.atoms)) for k, r in program.rules.items()}
    target = program.target_key

    for _ in range(max_passes):
        changed = False

        for key in list(rules):
            new_rule = _apply_const_atoms(rules[key])
            if new_rule.atoms != rules[key].atoms:
                rules[key] = new_rule
                changed = True

        # fold rules that reduced to a constant into their referers
        const_rules = {k: r.atoms[0].source[1] for k, r in rules.items()
                       if len(r.atoms) == 1 and r.atoms[0].source[0] == "const"
                       and r.atoms[0].quant is None and not r.atoms[0].negated
                       and k != target}
        if const_rules:
            for key, rule in rules.items():
                atoms = list(rule.atoms)
                for i, a in enumerate(atoms):
                    if a.source[0] == "rule" and a.source[1] in const_rules:
                        value = const_rules[a.source[1]] != a.negated
                        atoms[i] = Atom(("const", value))
                        changed = True
                rules[key] = replace(rule, atoms=tuple(atoms))

        # inline single-atom alias rules where the composition is representable
        aliases = {k: r.atoms[0] for k, r in rules.items()
                   if len(r.atoms) == 1 and r.atoms[0].source[0] != "const"
                   and r.atoms[0].source != ("rule", k)}
        if aliases:
            for key, rule in rules.items():
                atoms = list(rule.atoms)
                for i, a in enumerate(atoms):
                    if a.source[0] == "rule" and a.source[1] in aliases:
                        merged = _compose(a, aliases[a.source[1]])
                        if merged is not None:
                            atoms[i] = merged
                            changed = True
                rules[key] = replace(rule, atoms=tuple(atoms))

        # merge rules that are equal up to an argument permutation
        canon_ref: dict = {}
        by_sig: dict = {}
        rho_of: dict = {}
        for key in _topo_sorted(rules, target):
            sig, rho = _canonical_key(rules[key], canon_ref)
            rho_of[key] = rho
            if sig in by_sig and key != target:
                canon_ref[key] = by_sig[sig]
            else:
                by_sig.setdefault(sig, key)
        if canon_ref:
            for key, rule in rules.items():
                atoms = list(rule.atoms)
                for i, a in enumerate(atoms):
                    if a.source[0] == "rule" and a.source[1] in canon_ref:
                        dup, rep = a.source[1], canon_ref[a.source[1]]
                        # renaming args by rho gives R_rho(Y) = R(Y_rho(0), ...);
                        # dup_rho_dup == rep_rho_rep, so dup(Z) = rep(Z_mu(0), ...)
                        # with mu = rho_dup^{-1} o rho_rep
                        rho_dup, rho_rep = rho_of[dup], rho_of[rep]
                        inv_dup = {rho_dup[p]: p for p in range(len(rho_dup))}
                        mu = tuple(inv_dup[rho_rep[p]] for p in range(len(rho_rep)))
                        new_args = tuple(a.args[mu[p]] for p in range(len(mu)))
                        atoms[i] = replace(a, source=("rule", rep), args=new_args)
                        changed = True
                rules[key] = replace(rule, atoms=tuple(atoms))

        reachable = _topo_sorted({k: r for k, r in rules.items()}, target)
        if len(reachable) != len(rules):
            changed = True
        rules = reachable

        if not changed:
            break

    return Program(rules, target, program.target_name, list(program.input_signature))


# ---------------------------------------------------------------------------
# Boolean evaluation

def _atom_tensor(atom: Atom, head_arity: int, n: int, values: dict) -> np.ndarray:
    has_q = atom.quant is not None
    full_rank = head_arity + (1 if has_q else 0)
    if atom.source[0] == "const":
        base = np.full((n,) * head_arity, atom.source[1], dtype=bool)
        return ~base if atom.negated else base

    src = values[atom.source]
    targets = [a if a >= 0 else head_arity for a in atom.args]
    order = np.argsort(np.asarray(targets, dtype=np.intp), kind="stable")
    t = np.transpose(src, order) if src.ndim else src
    present = sorted(targets)
    for axis in range(full_rank):
        if axis not in present:
            t = np.expand_dims(t, axis)
    t = np.broadcast_to(t, (n,) * full_rank)
    if has_q:
        t = t.all(axis=-1) if atom.quant == "forall" else t.any(axis=-1)
    return ~t if atom.negated else t


def evaluate_boolean(program: Program, inputs: dict, n: int) -> np.ndarray:
    """Evaluate the rule DAG on Boolean tensors; no floating point involved."""
    values: dict = {}
    for name, arity in program.input_signature:
        if name not in inputs:
            raise ValueError(f"missing input predicate {name!r}")
        arr = np.asarray(inputs[name])
        if arr.dtype != np.bool_:
            if not np.isin(arr, (0, 1)).all():
                raise ValueError(f"input {name!r} is not Boolean")
            arr = arr.astype(bool)
        if arr.shape != (n,) * arity:
            raise ValueError(f"input {name!r} shape {arr.shape} != {(n,) * arity}")
        values[("input", name, arity)] = arr

    for key, rule in program.rules.items():
        parts = [_atom_tensor(a, rule.head_arity, n, values) for a in rule.atoms]
        acc = parts[0]
        for p in parts[1:]:
            acc = (acc & p) if rule.kind == "conj" else (acc | p)
        values[("rule", key)] = acc
    return values[("rule", program.target_key)]


# ---------------------------------------------------------------------------
# rendering

def render_text(program: Program) -> str:
    """One rule per line, `Head(vars) <- body`, auxiliary rules named PredN."""
    names = {}
    aux = 0
    for key in program.rules:
        if key == program.target_key:
            names[key] = program.target_name
        else:
            aux += 1
            names[key] = f"Pred{aux}"

    def render_atom(atom: Atom, head_arity: int) -> str:
        if atom.source[0] == "const":
            text = "True" if atom.source[1] else "False"
            return ("¬" + text) if atom.negated else text
        qvar = chr(ord("A") + head_arity)
        argtext = ",".join(chr(ord("a") + a) if a >= 0 else qvar for a in atom.args)
        base = atom.source[1] if atom.source[0] == "input" else names[atom.source[1]]
        text = f"{base}({argtext})" if atom.args else base
        if atom.negated:
            text = "¬" + text
        if atom.quant == "exists":
            text = f"∃{qvar}, {text}"
        elif atom.quant == "forall":
            text = f"∀{qvar}, {text}"
        return text

    lines = []
    for key, rule in program.rules.items():
        headvars = ",".join(chr(ord("a") + i) for i in range(rule.head_arity))
        head = f"{names[key]}({headvars})" if rule.head_arity else names[key]
        sep = " ∧ " if rule.kind == "conj" else " ∨ "
        lines.append(f"{head} <- " + sep.join(render_atom(a, rule.head_arity)
                                              for a in rule.atoms))
    return "\n".join(lines)
