"""Finite-difference gradient checking shared by the test suite."""

import numpy as np


def numeric_grad_at(f, x, flat_idx, eps=1e-5):
    """Central finite difference of scalar f at one flat index of x."""
    orig = x.flat[flat_idx]
    x.flat[flat_idx] = orig + eps
    fp = f()
    x.flat[flat_idx] = orig - eps
    fm = f()
    x.flat[flat_idx] = orig
    return (fp - fm) / (2.0 * eps)


def rel_err(a, b):
    return abs(a - b) / max(abs(a), abs(b), 1e-4)


def assert_grad_matches(f, x, analytic, rng, n_idx=8, eps=1e-5, rtol=1e-4):
    """Check analytic gradient of scalar-valued f w.r.t. array x at a
    random sample of coordinates."""
    total = x.size
    idxs = rng.choice(total, size=min(n_idx, total), replace=False)
    for i in idxs:
        num = numeric_grad_at(f, x, int(i), eps=eps)
        assert rel_err(analytic.flat[int(i)], num) < rtol, (
            f"grad mismatch at {i}: analytic={analytic.flat[int(i)]:.8g} "
            f"numeric={num:.8g}"
        )
