# advdenoise/core/gradcheck.py

from typing import Callable, Optional

import numpy as np

from advdenoise.core.tensor import Tensor, no_grad

def finite_diff_check(
    fn: Callable[[Tensor], Tensor],
    x: Tensor,
    h: float = 1e-5,
    max_elements: Optional[int] = None,
    rng: Optional[np.random.Generator] = None,
    floor: float = 1e-10,
) -> float:
    """Compares backpropagated and central-difference gradients of ``fn`` at ``x``.

    Returns the largest elementwise relative error
    ``|a - n| / max(|a|, |n|, floor)``. ``fn`` must be deterministic and
    return a scalar tensor; run it in 64-bit precision. When
    ``max_elements`` is given only that many randomly chosen elements are
    perturbed.
    """
    x.data = np.ascontiguousarray(x.data)
    x.requires_grad = True
    x.grad = None
    fn(x).backward()
    analytic = np.zeros_like(x.data) if x.grad is None else x.grad.copy()
    x.grad = None

    flat = x.data.reshape(-1)
    indices = np.arange(flat.size)
    if max_elements is not None and max_elements < flat.size:
        rng = rng or np.random.default_rng(0)
        indices = rng.choice(flat.size, size=max_elements, replace=False)

    worst = 0.0
    analytic_flat = analytic.reshape(-1)
    with no_grad():
        for i in indices:
            original = flat[i]
            flat[i] = original + h
            plus = float(fn(x).data)
            flat[i] = original - h
            minus = float(fn(x).data)
            flat[i] = original

            numeric = (plus - minus) / (2.0 * h)
            a = float(analytic_flat[i])
            worst = max(worst, abs(a - numeric) / max(abs(a), abs(numeric), floor))
    return worst
