"""Numpy fallback kernels.

Each backend (this module and the Cython twin _ckernels) is deterministic:
repeated calls on the same inputs are bitwise identical, and results never
depend on how callers chunk the sample axis. Across backends the term
grouping (x1*x2)*w, the RK4 update expression, and all precomputed exp()
weight tables are shared, so the two agree to a few ulp; only the
within-segment summation order differs (pairwise here, sequential in C),
which is why cross-backend equality is tolerance-checked, not bitwise.

Term tables arrive sorted by output slot: seg_bounds[s]:seg_bounds[s+1] is the
run of terms writing slot seg_slots[s]. State matrices carry a trailing
constant-one column (index nslots) so linear terms are ordinary bilinear terms.
"""

import numpy as np

BACKEND = "python"


def drift_batch(X, i1, i2, w, seg_bounds, seg_slots, nslots):
    """B[m, slot] = sum of (X[m,i1]*X[m,i2])*w over the slot's terms."""
    # overflow surfaces as non-finite state, checked explicitly by rk4_batch
    with np.errstate(over="ignore", invalid="ignore"):
        P = (X[:, i1] * X[:, i2]) * w
        sums = np.add.reduceat(P, seg_bounds[:-1], axis=1)
    B = np.zeros((X.shape[0], nslots))
    B[:, seg_slots] = sums
    return B


def rk4_batch(X0, dt, i1, i2, seg_bounds, seg_slots, w_stages, snap_steps):
    """Integrate dY/ds = -drift(s, Y) by classical fixed-step RK4.

    X0: (M, C+1) with the ones column; w_stages: (2*nsteps+1, n_terms) stage
    weights on the half-step grid; snap_steps: sorted step indices to record.
    Returns (len(snap_steps), M, C).
    """
    nsteps = (w_stages.shape[0] - 1) // 2
    M = X0.shape[0]
    C = X0.shape[1] - 1
    snap_at = {int(s): j for j, s in enumerate(snap_steps)}
    snaps = np.empty((len(snap_steps), M, C))
    Y = X0.copy()
    stage = np.empty_like(Y)
    stage[:, C] = 1.0
    if 0 in snap_at:
        snaps[snap_at[0]] = Y[:, :C]
    half = -0.5 * dt
    full = -dt
    sixth = -dt / 6.0
    with np.errstate(over="ignore", invalid="ignore"):
        for m in range(nsteps):
            b1 = drift_batch(Y, i1, i2, w_stages[2 * m], seg_bounds, seg_slots, C)
            stage[:, :C] = Y[:, :C] + half * b1
            b2 = drift_batch(stage, i1, i2, w_stages[2 * m + 1], seg_bounds, seg_slots, C)
            stage[:, :C] = Y[:, :C] + half * b2
            b3 = drift_batch(stage, i1, i2, w_stages[2 * m + 1], seg_bounds, seg_slots, C)
            stage[:, :C] = Y[:, :C] + full * b3
            b4 = drift_batch(stage, i1, i2, w_stages[2 * m + 2], seg_bounds, seg_slots, C)
            Y[:, :C] = Y[:, :C] + sixth * (((b1 + 2.0 * b2) + 2.0 * b3) + b4)
            if not np.all(np.isfinite(Y[:, :C])):
                raise FloatingPointError(f"non-finite state at step {m + 1}")
            if m + 1 in snap_at:
                snaps[snap_at[m + 1]] = Y[:, :C]
    return snaps
