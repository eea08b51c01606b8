"""Finite-difference verification of analytic gradients."""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Parameter, Tensor


def grad_check(loss_fn: Callable[[], Tensor], params: Sequence[Parameter],
               eps: float = 1e-4, samples: int | None = None, seed: int = 0) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``loss_fn`` must return a scalar Tensor built from ``params``.  When
    ``samples`` is given, that many coordinates are checked per parameter
    (seeded choice); otherwise every coordinate is checked.
    relative error = |a - n| / max(|a|, |n|, 1e-8).
    """
    for p in params:
        p.zero_grad()
    loss = loss_fn()
    if not np.isfinite(loss.data).all():
        raise FloatingPointError("loss is not finite")
    loss.backward()
    analytic = {p.name: (p.grad.copy() if p.grad is not None else np.zeros_like(p.data)) for p in params}

    rng = np.random.default_rng(seed)
    worst = 0.0
    for p in params:
        flat = p.data.reshape(-1)
        if samples is None or samples >= flat.size:
            coords = np.arange(flat.size)
        else:
            coords = rng.choice(flat.size, size=samples, replace=False)
        ga = analytic[p.name].reshape(-1)
        for c in coords:
            orig = flat[c]
            flat[c] = orig + eps
            hi = float(loss_fn().data)
            flat[c] = orig - eps
            lo = float(loss_fn().data)
            flat[c] = orig
            num = (hi - lo) / (2.0 * eps)
            rel = abs(ga[c] - num) / max(abs(ga[c]), abs(num), 1e-8)
            worst = max(worst, rel)
    return worst
