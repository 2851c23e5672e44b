"""Shared test utilities: independent finite-difference gradient oracles."""

import numpy as np

from logiclearn import autodiff as ad


def fd_gradients(f, arrays, h=1e-6):
    """Central finite differences of f(arrays) -> float, coordinate by coordinate."""
    grads = []
    for a in arrays:
        g = np.zeros_like(a)
        it = np.nditer(a, flags=["multi_index"])
        while not it.finished:
            idx = it.multi_index
            orig = a[idx]
            a[idx] = orig + h
            fp = f(arrays)
            a[idx] = orig - h
            fm = f(arrays)
            a[idx] = orig
            g[idx] = (fp - fm) / (2.0 * h)
            it.iternext()
        grads.append(g)
    return grads


def max_rel_err(analytic, numeric):
    analytic = np.asarray(analytic, dtype=float)
    numeric = np.asarray(numeric, dtype=float)
    return float((np.abs(analytic - numeric) / np.maximum(1.0, np.abs(numeric))).max())


def check_grads(build, arrays, tol=1e-5, h=1e-6):
    """build(leaves) -> scalar Node; asserts tape gradients match central FD."""
    leaves = [ad.leaf(a.copy(), requires_grad=True) for a in arrays]
    out = build(leaves)
    ad.backward(out)

    def f(arrs):
        return float(build([ad.leaf(x) for x in arrs]).value)

    numeric = fd_gradients(f, [a.copy() for a in arrays], h=h)
    worst = 0.0
    for lf, num in zip(leaves, numeric):
        got = lf.grad if lf.grad is not None else np.zeros_like(num)
        worst = max(worst, max_rel_err(got, num))
    assert worst < tol, f"gradient mismatch: max rel err {worst:.3g} >= {tol}"
    return worst


def fd_directional(f_arrays, arrays, direction, h=1e-6):
    """Central FD of f along one direction through a list of arrays."""
    plus = [a + h * d for a, d in zip(arrays, direction)]
    minus = [a - h * d for a, d in zip(arrays, direction)]
    return (f_arrays(plus) - f_arrays(minus)) / (2.0 * h)
