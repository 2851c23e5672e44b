"""Recurrent state-value estimator over raw predicate tensors.

For the binary predicates (stacked as a [n, n, c2] tensor), two recurrent
heads scan the object axis: head i summarizes, for each object o and
predicate P, the objects o relates to through P when o sits in position i,
yielding an [n, c2] summary per head.  A second recurrent unit scans the
object axis over the concatenated head summaries, with the unary observables
concatenated into its per-object inputs, and a final linear layer maps its
last hidden state to the scalar value.  Parameter count depends only on the
predicate signature and hidden width, never on the number of objects.

Gate biases start at zero, so an all-false observation produces the same
value for any object count.
"""

from __future__ import annotations

import numpy as np

from .. import autodiff as ad


def gru_cell(x: ad.Node, h: ad.Node, wx: ad.Node, wh: ad.Node, b: ad.Node,
             hidden: int) -> ad.Node:
    """h' = (1-z) * tanh(Wn x + r * (Un h) + bn) + z * h."""
    xg = ad.add_rowvec(ad.matmul(x, wx), b)
    hg = ad.matmul(h, wh)
    cols = np.arange(hidden)
    z = ad.sigmoid(ad.add(ad.index_select_last(xg, cols),
                          ad.index_select_last(hg, cols)))
    r = ad.sigmoid(ad.add(ad.index_select_last(xg, cols + hidden),
                          ad.index_select_last(hg, cols + hidden)))
    n = ad.tanh(ad.add(ad.index_select_last(xg, cols + 2 * hidden),
                       ad.mul(r, ad.index_select_last(hg, cols + 2 * hidden))))
    return ad.add(ad.mul(ad.affine_neg(z), n), ad.mul(z, h))


class ValueNet:
    def __init__(self, input_signature, hidden: int = 32,
                 rng: np.random.Generator = None):
        rng = rng or np.random.default_rng(0)
        arities = sorted({a for _, a in input_signature})
        if any(a > 2 for a in arities):
            raise ValueError(f"value net supports arity <= 2, got {max(arities)}")
        self.signature = [(str(n), int(a)) for n, a in input_signature]
        self.unary = [n for n, a in self.signature if a == 1]
        self.binary = [n for n, a in self.signature if a == 2]
        if not self.binary:
            raise ValueError("value net needs at least one binary predicate")
        self.hidden = hidden
        c1, c2 = len(self.unary), len(self.binary)

        def init(shape, fan_in):
            bound = 1.0 / np.sqrt(fan_in)
            return ad.leaf(rng.uniform(-bound, bound, shape), requires_grad=True)

        h = hidden
        self.params = {}
        for i in (1, 2):
            self.params[f"head{i}_wx"] = init((c2, 3 * h), c2)
            self.params[f"head{i}_wh"] = init((h, 3 * h), h)
            self.params[f"head{i}_b"] = ad.leaf(np.zeros(3 * h), requires_grad=True)
            self.params[f"head{i}_proj"] = init((h, c2), h)
        comb_in = 2 * c2 + c1
        self.params["comb_wx"] = init((comb_in, 3 * h), comb_in)
        self.params["comb_wh"] = init((h, 3 * h), h)
        self.params["comb_b"] = ad.leaf(np.zeros(3 * h), requires_grad=True)
        self.params["out_w"] = init((h, 1), h)
        self.params["out_b"] = ad.leaf(np.zeros(1), requires_grad=True)

    def parameters(self):
        return [self.params[k] for k in sorted(self.params)]

    def parameter_count(self) -> int:
        return sum(p.value.size for p in self.parameters())

    def state_arrays(self, prefix="critic/"):
        return {prefix + k: self.params[k].value for k in sorted(self.params)}

    def load_arrays(self, arrays, prefix="critic/"):
        for k in self.params:
            arr = arrays[prefix + k]
            if arr.shape != self.params[k].value.shape:
                raise ValueError(f"critic parameter {k}: shape {arr.shape} vs "
                                 f"{self.params[k].value.shape}")
            self.params[k].value = arr

    def forward(self, observations: dict, batched: bool = False) -> ad.Node:
        """Value estimates; observations map name -> bool/float arrays."""
        obs = {k: np.asarray(v, dtype=np.float64) for k, v in observations.items()}
        some = obs[self.binary[0]]
        n = some.shape[-1]
        batch = some.shape[0] if batched else 1
        p2 = np.stack([obs[k].reshape(batch, n, n) for k in self.binary], axis=-1)
        p1 = (np.stack([obs[k].reshape(batch, n) for k in self.unary], axis=-1)
              if self.unary else np.zeros((batch, n, 0)))

        h = self.hidden
        summaries = []
        for i, slicer in ((1, lambda j: p2[:, :, j, :]), (2, lambda j: p2[:, j, :, :])):
            wx, wh, b = (self.params[f"head{i}_wx"], self.params[f"head{i}_wh"],
                         self.params[f"head{i}_b"])
            state = ad.constant(np.zeros((batch * n, h)))
            for j in range(n):
                x = ad.constant(slicer(j).reshape(batch * n, -1))
                state = gru_cell(x, state, wx, wh, b, h)
            proj = ad.matmul(state, self.params[f"head{i}_proj"])
            summaries.append(ad.reshape(proj, (batch, n, len(self.binary))))

        comb = ad.constant(np.zeros((batch, h)))
        for o in range(n):
            pieces = [ad.index_axis(summaries[0], 1, o),
                      ad.index_axis(summaries[1], 1, o)]
            if self.unary:
                pieces.append(ad.constant(p1[:, o, :]))
            x = ad.concat_last(pieces)
            comb = gru_cell(x, comb, self.params["comb_wx"],
                            self.params["comb_wh"], self.params["comb_b"], h)
        value = ad.add_rowvec(ad.matmul(comb, self.params["out_w"]),
                              self.params["out_b"])
        return ad.reshape(value, (batch,)) if batched else ad.reshape(value, ())
