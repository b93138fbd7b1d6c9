"""Shared oracles for the test-suite."""

import numpy as np


def central_diff(f, arrays, step=1e-5):
    """Central finite differences of scalar ``f()`` w.r.t. every entry of ``arrays`` (mutated in place)."""
    out = []
    for a in arrays:
        g = np.zeros_like(a)
        it = np.nditer(a, flags=["multi_index"])
        for _ in it:
            i = it.multi_index
            old = a[i]
            a[i] = old + step
            fp = f()
            a[i] = old - step
            fm = f()
            a[i] = old
            g[i] = (fp - fm) / (2 * step)
        out.append(g)
    return out


def assert_grad_close(analytic, numeric, rtol, name=""):
    """Entry-wise relative check with an absolute floor scaled to the gradient's size."""
    analytic = np.asarray(analytic)
    numeric = np.asarray(numeric)
    floor = 1e-7 * max(1.0, float(np.max(np.abs(numeric))))
    err = np.abs(analytic - numeric)
    bound = rtol * np.abs(numeric) + floor
    bad = err > bound
    assert not np.any(bad), (
        f"{name}: {bad.sum()} entries off; worst rel err "
        f"{np.max(err / np.maximum(np.abs(numeric), 1e-300)):.3g}")
