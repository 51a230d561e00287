"""Pure-numpy fallback kernel for full-batch gradient descent on the
free-feature objective. Mirrors the compiled kernel's update order exactly:

1. E = W H + b 1^T - Y at the current point, loss checked here;
2. H <- (1 - lr lambda_h / M) H - (lr / M) W^T E   (old W);
3. W <- (1 - lr lambda_w) W - (lr / M) E H_old^T;
4. b <- b - (lr / M) E 1.

The gradient of the fit term is evaluated once per step (simultaneous
update), so both backends walk the same trajectory up to rounding.
"""

from __future__ import annotations

import numpy as np

BACKEND_NAME = "numpy"


def run_gd_chunk(w, h, b, y, lambda_h, lambda_w, lr, steps, loss_cap):
    """Advance (w, h, b) in place by up to ``steps`` descent steps.

    Returns ``(taken, diverged, last_loss)``. ``last_loss`` is the objective
    at the point reached after ``taken`` steps' predecessor check: on a clean
    run it is the loss before the final update; on divergence it is the bad
    value that tripped the cap. The arrays hold the post-``taken`` state.
    """
    n, m = y.shape
    d = h.shape[0]
    e = np.empty((n, m))
    gw = np.empty((n, d))
    gh = np.empty((d, m))
    h_keep = 1.0 - lr * lambda_h / m
    w_keep = 1.0 - lr * lambda_w
    loss = np.nan
    for t in range(steps):
        np.dot(w, h, out=e)
        e += b[:, None]
        e -= y
        loss = (
            0.5 / m * float(np.vdot(e, e))
            + 0.5 * lambda_h / m * float(np.vdot(h, h))
            + 0.5 * lambda_w * float(np.vdot(w, w))
        )
        if not np.isfinite(loss) or loss > loss_cap:
            return t, True, loss
        np.dot(e, h.T, out=gw)
        np.dot(w.T, e, out=gh)
        h *= h_keep
        gh *= lr / m
        h -= gh
        w *= w_keep
        gw *= lr / m
        w -= gw
        b -= (lr / m) * e.sum(axis=1)
    return steps, False, loss
