"""Layered fuzzy logic units over predicate tensors.

A network is depth x (breadth+1) logic units.  Each unit emits `n_out` new
predicates at its breadth: the first half are fuzzy conjunctions (componentwise
product) of `n_atoms` selected candidates, the second half fuzzy disjunctions
(probabilistic sum).  Within each half, half of the units draw the first
`n_atoms // 2` atom slots from the negated candidate list.  Every atom slot
carries a selection-logit vector over its candidate list plus one constant
preservation slot (true for conjunctions, false for disjunctions) that lets a
predicate pass through a layer unchanged.

During training the selection softmax is perturbed with i.i.d. Gumbel noise of
scale beta and temperature tau, and candidate logits are dropped out by masking
them to -inf; tau, beta and the dropout probability decay exponentially per
epoch toward configured floors.  Evaluation uses the plain softmax; hardened
evaluation replaces each softmax with a one-hot argmax (ties to the lowest
index), which is the bridge to exact program extraction.

Selection weights never multiply the constant slots explicitly: for a weight
vector w over candidates C plus preservation, sum_i w_i C_i + w_T * 1 for a
negated list equals 1 - sum_i w_i C_i because the softmax sums to one, so the
forward pass only ever mixes positive candidate tensors.
"""

from __future__ import annotations

import dataclasses
import io
import json
import struct
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import autodiff as ad
from .predicates import (CandidateSet, ModuleLayout, PredicateGroup,
                         build_candidates, module_layout)

CHECKPOINT_MAGIC = b"LGCMCKPT"
CHECKPOINT_VERSION = 1

MASK_NEG = -1e30  # stands in for -inf on dropped-out logits


# ---------------------------------------------------------------------------
# configuration

@dataclass
class NetworkConfig:
    depth: int
    breadth: int
    n_out: int
    n_atoms: int
    input_signature: list          # ordered [(name, arity), ...]
    target_arity: int
    residual: bool = False

    def __post_init__(self):
        if self.depth < 1:
            raise ValueError("depth must be >= 1")
        if self.breadth < 0:
            raise ValueError("breadth must be >= 0")
        if self.n_out % 4 != 0 or self.n_out <= 0:
            raise ValueError(f"n_out must be a positive multiple of 4, got {self.n_out}")
        if self.n_atoms < 2:
            raise ValueError("n_atoms must be >= 2")
        if not 0 <= self.target_arity <= self.breadth:
            raise ValueError(f"target arity {self.target_arity} > breadth {self.breadth}")
        self.input_signature = [(str(n), int(a)) for n, a in self.input_signature]

    def to_dict(self):
        return {"depth": self.depth, "breadth": self.breadth, "n_out": self.n_out,
                "n_atoms": self.n_atoms, "input_signature": [list(p) for p in self.input_signature],
                "target_arity": self.target_arity, "residual": self.residual}

    @classmethod
    def from_dict(cls, d):
        return cls(depth=d["depth"], breadth=d["breadth"], n_out=d["n_out"],
                   n_atoms=d["n_atoms"],
                   input_signature=[tuple(p) for p in d["input_signature"]],
                   target_arity=d["target_arity"], residual=d.get("residual", False))

    def input_names_by_arity(self) -> dict:
        out: dict[int, list] = {}
        for name, arity in self.input_signature:
            out.setdefault(arity, []).append(name)
        return out


# ---------------------------------------------------------------------------
# annealed noise

@dataclass(frozen=True)
class NoiseSchedule:
    """Temperature, Gumbel scale and dropout probability with per-epoch decay.

    The decay endpoints quoted for these schedules (about 0.5 temperature,
    0.005 scale, 0.0005 dropout for supervised runs) are where the values land
    when a typical run converges and stops; the floors here are protective
    clamps set low enough that annealing keeps sharpening the selections on
    runs that need longer.  A run that stops around epoch 138 ends with the
    quoted temperature.
    """

    tau: float = 1.0
    tau_decay: float = 0.995
    tau_floor: float = 0.01
    beta: float = 1.0
    beta_decay: float = 0.98
    beta_floor: float = 0.01
    dropout: float = 0.1
    dropout_decay: float = 0.98
    dropout_floor: float = 0.01
    kind: str = "gumbel"           # gumbel | gaussian | none
    dropout_mode: str = "logit-mask"   # logit-mask | off

    def anneal(self) -> "NoiseSchedule":
        return dataclasses.replace(
            self,
            tau=max(self.tau_floor, self.tau * self.tau_decay),
            beta=max(self.beta_floor, self.beta * self.beta_decay),
            dropout=max(self.dropout_floor, self.dropout * self.dropout_decay),
        )


def supervised_noise(**overrides) -> NoiseSchedule:
    return dataclasses.replace(NoiseSchedule(), **overrides)


def rl_noise(**overrides) -> NoiseSchedule:
    base = NoiseSchedule(tau=1.0, tau_decay=0.995, tau_floor=0.02,
                         beta=0.1, beta_decay=0.98, beta_floor=0.01,
                         dropout=0.01, dropout_decay=0.98, dropout_floor=0.0)
    return dataclasses.replace(base, **overrides)


def sample_gumbel(shape, beta: float, rng: np.random.Generator) -> np.ndarray:
    """i.i.d. Gumbel(0, beta) samples; beta = 0 degenerates to zeros."""
    if beta < 0:
        raise ValueError("gumbel scale must be >= 0")
    if beta == 0:
        return np.zeros(shape)
    u = np.clip(rng.random(shape), 1e-300, 1.0 - 1e-16)
    return -beta * np.log(-np.log(u))


def sample_selection_noise(shape, noise: NoiseSchedule, rng) -> np.ndarray:
    if noise.kind == "gumbel":
        return sample_gumbel(shape, noise.beta, rng)
    if noise.kind == "gaussian":
        return rng.normal(0.0, noise.beta, shape) if noise.beta > 0 else np.zeros(shape)
    if noise.kind == "none":
        return np.zeros(shape)
    raise ValueError(f"unknown noise kind {noise.kind!r}")


# ---------------------------------------------------------------------------
# logic units

class UnitSpec:
    """Selector bookkeeping shared by all units of one network configuration.

    Units are ordered [conj, conj-neg, disj, disj-neg], n_out/4 each.  Selector
    s = slot * n_out + unit.  For each selector, `signs` flips the candidate
    weights of negated slots and (`bias_a`, `bias_b`) express the constant part
    of the selection as bias_a * w_preserve + bias_b.
    """

    def __init__(self, n_out: int, n_atoms: int):
        self.n_out = n_out
        self.n_atoms = n_atoms
        self.n_selectors = n_out * n_atoms
        q = n_out // 4
        self.kinds = ["conj"] * q + ["conj_neg"] * q + ["disj"] * q + ["disj_neg"] * q

        signs = np.ones(self.n_selectors)
        bias_a = np.zeros(self.n_selectors)
        bias_b = np.zeros(self.n_selectors)
        for j in range(n_atoms):
            for u in range(n_out):
                s = j * n_out + u
                neg = self.selector_negated(u, j)
                if u < n_out // 2:  # conjunction
                    if neg:
                        signs[s], bias_a[s], bias_b[s] = -1.0, 0.0, 1.0
                    else:
                        signs[s], bias_a[s], bias_b[s] = 1.0, 1.0, 0.0
                else:               # disjunction
                    if neg:
                        signs[s], bias_a[s], bias_b[s] = -1.0, -1.0, 1.0
                    else:
                        signs[s], bias_a[s], bias_b[s] = 1.0, 0.0, 0.0
        self.signs = signs
        self.bias_a = bias_a
        self.bias_b = bias_b
        half = n_out // 2
        self.conj_cols = [j * n_out + np.arange(half) for j in range(n_atoms)]
        self.disj_cols = [j * n_out + np.arange(half, n_out) for j in range(n_atoms)]

    def unit_kind(self, u: int) -> str:
        return self.kinds[u]

    def selector_negated(self, u: int, j: int) -> bool:
        return self.kinds[u].endswith("_neg") and j < self.n_atoms // 2

    def selector_index(self, u: int, j: int) -> int:
        return j * self.n_out + u

    def preserve_value(self, u: int) -> float:
        return 1.0 if u < self.n_out // 2 else 0.0


def _mixture(base: ad.Node, weights: ad.Node, layout: ModuleLayout,
             signs: np.ndarray, lead: int) -> ad.Node:
    """sum over candidates of (signed) selection weight times candidate tensor.

    base holds the pre-permutation candidate columns; candidate k of the full
    list is base column k // |S_b| under permutation sigma_{k mod |S_b|}.  The
    preservation column of `weights` is ignored here (handled as a bias).
    All permutations share one matrix product in each direction.
    """
    sigmas = layout.sigmas
    n_sig = len(sigmas)
    k0 = layout.k0
    n_sel = weights.value.shape[0]
    lead_shape = base.value.shape[:-1]
    n_rows = int(np.prod(lead_shape)) if lead_shape else 1
    flat = np.ascontiguousarray(base.value.reshape(n_rows, k0))
    w_signed = weights.value[:, :-1] * signs[:, None]
    # [k0, n_sig, S]: block j holds the weights of all sigma_j candidates
    w_blocks = np.ascontiguousarray(w_signed.reshape(n_sel, k0, n_sig)
                                    .transpose(1, 2, 0))

    # permutation blocks are chunked so intermediates stay cache-friendly
    chunk = max(1, min(n_sig, 2_000_000 // max(1, n_rows * n_sel)))
    axes_fwd = [tuple(range(lead))
                + tuple(lead + int(a) for a in np.argsort(sigma))
                + (len(lead_shape),) for sigma in sigmas]

    out = np.zeros(lead_shape + (n_sel,))
    for j0 in range(0, n_sig, chunk):
        j1 = min(n_sig, j0 + chunk)
        res = (flat @ w_blocks[:, j0:j1].reshape(k0, (j1 - j0) * n_sel)) \
            .reshape(lead_shape + (j1 - j0, n_sel))
        for j in range(j0, j1):
            out += np.transpose(res[..., j - j0, :], axes_fwd[j])

    cache = {}

    def _shared(g):
        if "done" not in cache:
            d_base = np.zeros((n_rows, k0)) if base.requires_grad else None
            d_w3 = np.empty((k0, n_sig, n_sel))
            for j0 in range(0, n_sig, chunk):
                j1 = min(n_sig, j0 + chunk)
                g_blocks = np.empty((n_rows, (j1 - j0) * n_sel))
                for j in range(j0, j1):
                    gj = np.transpose(g, np.argsort(axes_fwd[j]))
                    g_blocks[:, (j - j0) * n_sel:(j - j0 + 1) * n_sel] = \
                        gj.reshape(n_rows, n_sel)
                wb = w_blocks[:, j0:j1].reshape(k0, (j1 - j0) * n_sel)
                if d_base is not None:
                    d_base += g_blocks @ wb.T
                d_w3[:, j0:j1] = (flat.T @ g_blocks).reshape(k0, j1 - j0, n_sel)
            d_w = np.zeros_like(weights.value)
            d_w[:, :-1] = d_w3.transpose(2, 0, 1).reshape(n_sel, k0 * n_sig) \
                * signs[:, None]
            cache["done"] = (None if d_base is None else d_base.reshape(base.value.shape),
                             d_w)
        return cache["done"]

    return ad.Node(out, [(base, lambda g: _shared(g)[0]),
                         (weights, lambda g: _shared(g)[1])])


def selection_weights(theta: ad.Node, noise: Optional[NoiseSchedule], *,
                      training: bool, rng=None, harden=False) -> ad.Node:
    """Per-selector weights over candidates + preservation slot, rows sum to 1."""
    if harden:
        idx = np.argmax(theta.value, axis=1)
        w = np.zeros_like(theta.value)
        w[np.arange(w.shape[0]), idx] = 1.0
        return ad.constant(w)
    if noise is None:
        raise ValueError("a noise schedule is required unless hardened")
    if not training:
        return ad.softmax_rows(theta, noise.tau)
    logits = ad.add_const(theta, sample_selection_noise(theta.value.shape, noise, rng))
    if noise.dropout_mode == "logit-mask" and noise.dropout > 0.0:
        mask = rng.random(theta.value.shape) < noise.dropout
        mask[mask.all(axis=1)] = False  # never drop an entire candidate list
        if mask.any():
            logits = ad.add_const(logits, np.where(mask, MASK_NEG, 0.0))
    return ad.softmax_rows(logits, noise.tau)


def module_forward(candidates: CandidateSet, theta: ad.Node, spec: UnitSpec,
                   noise: Optional[NoiseSchedule] = None, *, training=False,
                   rng=None, harden=False, names=None) -> PredicateGroup:
    """Run one logic unit over its candidate set, emitting n_out predicates."""
    if candidates is None or candidates.layout.k == 0:
        raise ValueError("module_forward: empty candidate set")
    layout = candidates.layout
    if theta.value.shape != (spec.n_selectors, layout.k + 1):
        raise ValueError(f"theta shape {theta.value.shape} != "
                         f"({spec.n_selectors}, {layout.k + 1})")

    lead = 1 if candidates.batched else 0
    w = selection_weights(theta, noise, training=training, rng=rng, harden=harden)
    w_last = ad.reshape(ad.index_select_last(w, np.array([layout.k])), (spec.n_selectors,))
    t = _mixture(candidates.base, w, layout, spec.signs, lead)
    bias = ad.add_const(ad.mul_const(w_last, spec.bias_a), spec.bias_b)
    s = ad.add_rowvec(t, bias)

    conj = ad.index_select_last(s, spec.conj_cols[0])
    disj = ad.index_select_last(s, spec.disj_cols[0])
    for j in range(1, spec.n_atoms):
        conj = ad.mul(conj, ad.index_select_last(s, spec.conj_cols[j]))
        nxt = ad.index_select_last(s, spec.disj_cols[j])
        disj = ad.add(disj, ad.mul(nxt, ad.affine_neg(disj)))
    out = ad.concat_last([conj, disj])

    if names is None:
        names = [f"u{i}" for i in range(spec.n_out)]
    return PredicateGroup(layout.breadth, candidates.n_objects, names, out,
                          batched=candidates.batched)


# ---------------------------------------------------------------------------
# the full machine

class LogicMachine:
    """depth x (breadth+1) grid of logic units with a designated output head.

    Parameters are independent of the number of objects: the same machine runs
    on instances of any size.  The output head is predicate 0 of the final
    layer's unit at the target arity.
    """

    def __init__(self, config: NetworkConfig, rng: Optional[np.random.Generator] = None,
                 init_scale: float = 0.1):
        self.config = config
        self.spec = UnitSpec(config.n_out, config.n_atoms)
        rng = rng or np.random.default_rng(0)

        self.layouts: dict[tuple, ModuleLayout] = {}
        self.theta: dict[tuple, ad.Node] = {}
        input_names = config.input_names_by_arity()
        residual_names = input_names if config.residual else {}
        prev_names = dict(input_names)
        for layer in range(1, config.depth + 1):
            next_names = {}
            for b in range(config.breadth + 1):
                layout = module_layout(prev_names, b, config.breadth,
                                       residual_names.get(b))
                if layout is None:
                    continue
                key = (layer, b)
                self.layouts[key] = layout
                shape = (self.spec.n_selectors, layout.k + 1)
                self.theta[key] = ad.leaf(rng.normal(0.0, init_scale, shape),
                                          requires_grad=True)
                next_names[b] = [f"P{layer}_{b}_{u}" for u in range(config.n_out)]
            prev_names = next_names
        self.layer_names = prev_names  # final layer unit names by arity

        if (config.depth, config.target_arity) not in self.layouts:
            raise ValueError(f"no unit at layer {config.depth}, arity {config.target_arity}: "
                             "the output head is unreachable for this input signature")

        # breadths whose outputs can still reach the head; units outside this
        # cone are parameters without influence, so forward passes skip them
        needed = {config.depth: {config.target_arity}}
        for layer in range(config.depth - 1, 0, -1):
            nxt = needed[layer + 1]
            needed[layer] = {b for nb in nxt for b in (nb - 1, nb, nb + 1)
                             if 0 <= b <= config.breadth}
        self.active_keys = {key for key in self.layouts if key[1] in needed[key[0]]}

    # -- parameters ---------------------------------------------------------

    def param_keys(self):
        return sorted(self.theta.keys())

    def parameters(self):
        return [self.theta[k] for k in self.param_keys()]

    def theta_for(self, layer: int, breadth: int, unit: int, slot: int) -> np.ndarray:
        """Selection logits of one atom slot (vector over candidates + preserve)."""
        return self.theta[(layer, breadth)].value[self.spec.selector_index(unit, slot)]

    # -- forward ------------------------------------------------------------

    def forward(self, inputs: dict, noise: Optional[NoiseSchedule] = None, *,
                training=False, rng=None, harden=False, return_groups=False):
        """Run the machine; `inputs` maps arity -> PredicateGroup (layer 0).

        Returns the head tensor node of shape [batch?] + [n]^target_arity.
        """
        if training and rng is None:
            raise ValueError("training forward needs an rng")
        cfg = self.config
        groups = {b: g for b, g in inputs.items() if g is not None and g.count > 0}
        for b, g in groups.items():
            if g.arity != b:
                raise ValueError(f"input group at key {b} has arity {g.arity}")

        current = groups
        for layer in range(1, cfg.depth + 1):
            nxt = {}
            for b in range(cfg.breadth + 1):
                key = (layer, b)
                if key not in self.layouts or key not in self.active_keys:
                    continue
                residual = groups.get(b) if cfg.residual else None
                cs = build_candidates(current, b, cfg.breadth, residual_group=residual)
                if cs is None or cs.layout.k != self.layouts[key].k:
                    raise RuntimeError(f"layer {layer} breadth {b}: candidate set does not "
                                       "match the configured layout")
                nxt[b] = module_forward(cs, self.theta[key], self.spec, noise,
                                        training=training, rng=rng, harden=harden,
                                        names=[f"P{layer}_{b}_{u}" for u in range(cfg.n_out)])
            current = nxt

        head_group = current[cfg.target_arity]
        head = head_group.select(0)
        if return_groups:
            return head, current
        return head

    # -- checkpointing ------------------------------------------------------

    def state_arrays(self) -> dict:
        return {f"theta/{l}/{b}": self.theta[(l, b)].value for l, b in self.param_keys()}

    def save(self, path, extra_arrays: Optional[dict] = None):
        arrays = dict(self.state_arrays())
        if extra_arrays:
            arrays.update(extra_arrays)
        write_checkpoint(path, self.config.to_dict(), arrays)

    @classmethod
    def load(cls, path, expected_config: Optional[NetworkConfig] = None):
        """Rebuild a machine from a checkpoint; returns (machine, extra_arrays)."""
        cfg_dict, arrays = read_checkpoint(path)
        config = NetworkConfig.from_dict(cfg_dict)
        if expected_config is not None:
            mism = [f"{k}: checkpoint {v} vs requested {getattr(expected_config, k)}"
                    for k, v in cfg_dict.items()
                    if k != "input_signature" and getattr(expected_config, k) != v]
            if expected_config.input_signature != config.input_signature:
                mism.append(f"input_signature: checkpoint {config.input_signature} "
                            f"vs requested {expected_config.input_signature}")
            if mism:
                raise ValueError("checkpoint/config mismatch: " + "; ".join(mism))
        machine = cls(config)
        extras = {}
        for name, arr in arrays.items():
            if name.startswith("theta/"):
                _, l, b = name.split("/")
                key = (int(l), int(b))
                if key not in machine.theta:
                    raise ValueError(f"checkpoint has parameters for unknown unit {key}")
                if machine.theta[key].value.shape != arr.shape:
                    raise ValueError(f"checkpoint theta{key} shape {arr.shape} vs "
                                     f"expected {machine.theta[key].value.shape}")
                machine.theta[key].value = arr
            else:
                extras[name] = arr
        return machine, extras


# ---------------------------------------------------------------------------
# checkpoint container
#
# Byte layout (all integers little-endian):
#   8 bytes magic "LGCMCKPT"
#   uint32 version
#   uint32 config length, then that many bytes of UTF-8 JSON
#   uint32 array count, then per array:
#     uint32 name length, name bytes,
#     uint32 ndim, int64 per dimension,
#     raw float64 data in C order

def write_checkpoint(path, config_dict: dict, arrays: dict):
    buf = io.BytesIO()
    buf.write(CHECKPOINT_MAGIC)
    buf.write(struct.pack("<I", CHECKPOINT_VERSION))
    cfg = json.dumps(config_dict, sort_keys=True).encode()
    buf.write(struct.pack("<I", len(cfg)))
    buf.write(cfg)
    buf.write(struct.pack("<I", len(arrays)))
    for name, arr in arrays.items():
        arr = np.ascontiguousarray(arr, dtype=np.float64)
        nm = name.encode()
        buf.write(struct.pack("<I", len(nm)))
        buf.write(nm)
        buf.write(struct.pack("<I", arr.ndim))
        for d in arr.shape:
            buf.write(struct.pack("<q", d))
        buf.write(arr.tobytes())
    with open(path, "wb") as fh:
        fh.write(buf.getvalue())


def read_checkpoint(path):
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:8] != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not a checkpoint file (bad magic)")
    off = 8
    (version,) = struct.unpack_from("<I", data, off); off += 4
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    (clen,) = struct.unpack_from("<I", data, off); off += 4
    config = json.loads(data[off:off + clen].decode()); off += clen
    (count,) = struct.unpack_from("<I", data, off); off += 4
    arrays = {}
    for _ in range(count):
        (nlen,) = struct.unpack_from("<I", data, off); off += 4
        name = data[off:off + nlen].decode(); off += nlen
        (ndim,) = struct.unpack_from("<I", data, off); off += 4
        shape = struct.unpack_from(f"<{ndim}q", data, off) if ndim else ()
        off += 8 * ndim
        size = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(data, dtype="<f8", count=size, offset=off).reshape(shape).copy()
        off += 8 * size
        arrays[name] = arr
    return config, arrays
