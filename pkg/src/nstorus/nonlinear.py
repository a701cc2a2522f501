"""The truncated nonlinearity B^(n), its time-dependent transform B~, an
independent pseudo-spectral oracle, the Gaussian divergence, and the
convergence series.

B^(n) is evaluated through a precomputed term table: each entry is one
bilinear monomial out += coef * e^{nu s expo} * x[i1] * x[i2] on the dense
coefficient vector (a trailing constant-one slot turns the mean-flow coupling
into ordinary bilinear terms). The table is exactly the finite interaction
sum over |h| <= n with partner modes k+h and +/-(k-h); interactions whose
partner leaves the truncation are absent (exterior variables are zero).

Coefficients are bare-convention: quadratic channels carry
(partner-frame_i . h) / (2 |partner| |h|) times the frame-projection factor
(h-frame_j . k-frame_p)/|k|, the mean channel carries
+/- (u_0 . k)/(2 pi)^{d/2}. See convention_constants() for the frozen
resolution against the orthonormal-basis constants.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .field import GridSpec, SpectralField, get_layout, inner_product_r, synthesize
from .lattice import in_half_lattice, project_perp

TWO_PI = 2.0 * math.pi

CHAN_PLUS, CHAN_MINUS, CHAN_MEAN = 0, 1, 2


@dataclass(frozen=True)
class DriftEvaluation:
    field_out: SpectralField
    truncation: int
    mean_out: np.ndarray


@dataclass(frozen=True)
class TermTable:
    dim: int
    radius: int
    mean: tuple
    i1: np.ndarray
    i2: np.ndarray
    out: np.ndarray
    coef: np.ndarray
    expo: np.ndarray
    chan: np.ndarray
    seg_bounds: np.ndarray
    seg_slots: np.ndarray
    nslots: int

    @property
    def layout(self):
        return get_layout(self.dim, self.radius)


_table_cache = {}


def build_term_table(dim, radius, mean=None, plus_scale=1.0, frames=None):
    """Term table for B^(n) at truncation radius. mean is the u_0 constant
    (None = zero). plus_scale multiplies the k+h channel (mutation testing).
    frames optionally overrides the per-mode frame (frame-independence tests);
    overridden tables are not cached."""
    mean_key = None if mean is None else tuple(float(c) for c in mean)
    if mean_key is not None and not any(mean_key):
        mean_key = None
    key = (dim, radius, mean_key, float(plus_scale))
    if frames is None and key in _table_cache:
        return _table_cache[key]

    layout = get_layout(dim, radius)
    modes = layout.modes
    index = layout.index
    pol = layout.pol
    frame_of = (
        [np.asarray(k.frame, dtype=float) for k in modes]
        if frames is None
        else [np.asarray(frames[k.components], dtype=float) for k in modes]
    )
    norm_of = [k.norm for k in modes]
    comp_of = [k.components for k in modes]

    i1, i2, out, coef, expo, chan = [], [], [], [], [], []

    def add(o, a, b, c, e, ch):
        if c != 0.0:
            out.append(o)
            i1.append(a)
            i2.append(b)
            coef.append(c)
            expo.append(float(e))
            chan.append(ch)

    for ki in range(len(modes)):
        k = comp_of[ki]
        ksq = sum(c * c for c in k)
        frame_k = frame_of[ki]
        for hi in range(len(modes)):
            h = comp_of[hi]
            hv = np.asarray(h, dtype=float)
            hsq = sum(c * c for c in h)
            # projection factors (h-frame_j . k-frame_p)/|k|, shared by channels
            proj = frame_of[hi] @ frame_k.T / norm_of[ki]

            g = tuple(a + b for a, b in zip(k, h))
            gi = index.get(g)
            if gi is not None:
                e = ksq - sum(c * c for c in g) - hsq
                for i in range(pol):
                    a_i = float(frame_of[gi][i] @ hv)
                    if a_i == 0.0:
                        continue
                    c0 = plus_scale * a_i / (2.0 * norm_of[gi] * norm_of[hi])
                    for j in range(pol):
                        for p in range(pol):
                            w = c0 * proj[j, p]
                            if w == 0.0:
                                continue
                            ku, kv_ = layout.u_slot(ki, p), layout.v_slot(ki, p)
                            gu, gv = layout.u_slot(gi, i), layout.v_slot(gi, i)
                            hu, hv_ = layout.u_slot(hi, j), layout.v_slot(hi, j)
                            add(kv_, gu, hu, w, e, CHAN_PLUS)
                            add(kv_, gv, hv_, w, e, CHAN_PLUS)
                            add(ku, gu, hv_, w, e, CHAN_PLUS)
                            add(ku, gv, hu, -w, e, CHAN_PLUS)

            if h != k:
                diff = tuple(a - b for a, b in zip(k, h))
                if in_half_lattice(diff):
                    mvec, sg = diff, 1.0
                else:
                    mvec, sg = tuple(-c for c in diff), -1.0
                mi = index.get(mvec)
                if mi is not None:
                    e = ksq - sum(c * c for c in mvec) - hsq
                    for i in range(pol):
                        b_i = float(frame_of[mi][i] @ hv)
                        if b_i == 0.0:
                            continue
                        c0 = b_i / (2.0 * norm_of[mi] * norm_of[hi])
                        for j in range(pol):
                            for p in range(pol):
                                w = c0 * proj[j, p]
                                if w == 0.0:
                                    continue
                                ku, kv_ = layout.u_slot(ki, p), layout.v_slot(ki, p)
                                mu, mv = layout.u_slot(mi, i), layout.v_slot(mi, i)
                                hu, hv_ = layout.u_slot(hi, j), layout.v_slot(hi, j)
                                add(kv_, mv, hv_, sg * w, e, CHAN_MINUS)
                                add(kv_, mu, hu, -w, e, CHAN_MINUS)
                                add(ku, mu, hv_, w, e, CHAN_MINUS)
                                add(ku, mv, hu, sg * w, e, CHAN_MINUS)

        if mean_key is not None:
            cdotk = sum(c * kc for c, kc in zip(mean_key, k)) / TWO_PI ** (dim / 2.0)
            if cdotk != 0.0:
                for p in range(pol):
                    add(layout.v_slot(ki, p), layout.u_slot(ki, p), layout.size,
                        -cdotk, 0.0, CHAN_MEAN)
                    add(layout.u_slot(ki, p), layout.v_slot(ki, p), layout.size,
                        +cdotk, 0.0, CHAN_MEAN)

    out = np.asarray(out, dtype=np.int64)
    order = np.argsort(out, kind="stable")
    out = out[order]
    boundaries = np.flatnonzero(np.diff(out)) + 1
    seg_bounds = np.concatenate([[0], boundaries, [len(out)]]).astype(np.int64)
    seg_slots = out[seg_bounds[:-1]]
    table = TermTable(
        dim=dim,
        radius=radius,
        mean=mean_key,
        i1=np.asarray(i1, dtype=np.int64)[order],
        i2=np.asarray(i2, dtype=np.int64)[order],
        out=out,
        coef=np.asarray(coef, dtype=float)[order],
        expo=np.asarray(expo, dtype=float)[order],
        chan=np.asarray(chan, dtype=np.int8)[order],
        seg_bounds=seg_bounds,
        seg_slots=seg_slots,
        nslots=layout.size,
    )
    for arr in (table.i1, table.i2, table.out, table.coef, table.expo, table.chan):
        arr.setflags(write=False)
    if frames is None and plus_scale == 1.0:
        _table_cache[key] = table
    return table


def term_weights(table, s, nu):
    """Per-term weights coef * e^{nu s expo}; plain coef at s=0 or nu=0."""
    if s == 0.0 or nu == 0.0:
        return table.coef.copy()
    return table.coef * np.exp(nu * s * table.expo)


def stage_weights(table, t0, dt, nsteps, nu):
    """(2 nsteps + 1, n_terms) weights on the RK4 half-step time grid."""
    s = t0 + 0.5 * dt * np.arange(2 * nsteps + 1)
    if nu == 0.0:
        return np.broadcast_to(table.coef, (s.size, table.coef.size)).copy()
    # overflow to inf is legitimate here: the integrator reports the
    # resulting non-finite state as an overflow at the first step
    with np.errstate(over="ignore"):
        return table.coef[None, :] * np.exp(nu * np.outer(s, table.expo))


def extend_ones(X):
    """Append the constant-one column the kernels expect."""
    X = np.atleast_2d(X)
    return np.concatenate([X, np.ones((X.shape[0], 1))], axis=1)


def drift_matrix(table, X, s=0.0, nu=0.0, weights=None, backend=None):
    """Batched drift values for rows of X (coefficient vectors, no ones col)."""
    _, impl = kernels.get_backend(backend)
    w = term_weights(table, s, nu) if weights is None else weights
    return impl.drift_batch(
        extend_ones(X), table.i1, table.i2, w, table.seg_bounds, table.seg_slots,
        table.nslots,
    )


def _embed(f, layout_n):
    if f.layout is layout_n:
        return f.coeffs
    vec = np.zeros(layout_n.size)
    pol = f.layout.pol
    for i, k in enumerate(f.layout.modes):
        j = layout_n.index[k.components]
        vec[layout_n.u_slot(j):layout_n.u_slot(j) + pol] = f.coeffs[
            f.layout.u_slot(i):f.layout.u_slot(i) + pol]
        vec[layout_n.v_slot(j):layout_n.v_slot(j) + pol] = f.coeffs[
            f.layout.v_slot(i):f.layout.v_slot(i) + pol]
    return vec


def _mean_key(f):
    return tuple(f.mean) if f.mean.any() else None


def b_truncated(f, n):
    """B^(n)(f): the truncated drift, cos coordinates in the u slots and sin
    coordinates in the v slots. Requires f.radius <= n."""
    if f.radius > n:
        raise ValueError("field radius exceeds truncation")
    layout = get_layout(f.dim, n)
    table = build_term_table(f.dim, n, mean=_mean_key(f))
    b = drift_matrix(table, _embed(f, layout)[None, :])[0]
    return DriftEvaluation(
        field_out=SpectralField(layout, b, np.zeros(f.dim)),
        truncation=n,
        mean_out=np.zeros(f.dim),
    )


def b_tilde(s, f_tilde, n, nu):
    """B~(s, .): the k+h channel weighted by e^{-2(k+h,h)s nu}, the +/-(k-h)
    channel by e^{+2(k-h,h)s nu}, mean channel unweighted."""
    if s < 0:
        raise ValueError("s >= 0 required")
    if f_tilde.radius > n:
        raise ValueError("field radius exceeds truncation")
    layout = get_layout(f_tilde.dim, n)
    table = build_term_table(f_tilde.dim, n, mean=_mean_key(f_tilde))
    b = drift_matrix(table, _embed(f_tilde, layout)[None, :], s=s, nu=nu)[0]
    return DriftEvaluation(
        field_out=SpectralField(layout, b, np.zeros(f_tilde.dim)),
        truncation=n,
        mean_out=np.zeros(f_tilde.dim),
    )


def b_oracle(f, grid):
    """First-principles drift: synthesize y, form (y.grad)y by analytic
    differentiation on the grid, extract Fourier coefficients by exact
    quadrature, Leray-project, re-express on frames."""
    n = f.radius
    if grid.points_per_axis <= 4 * n:
        raise ValueError("alias-free oracle needs points_per_axis > 4*radius")
    if grid.dim != f.dim:
        raise ValueError("grid dimension mismatch")
    d = f.dim
    layout = f.layout
    axes = grid.axes()
    y = synthesize(f, grid)
    grad = np.zeros((d, d) + axes[0].shape)
    for i_mode, k in enumerate(layout.modes):
        uhat, vhat = f.full_coefficients(i_mode)
        if not uhat.any() and not vhat.any():
            continue
        phase = sum(k.components[a] * axes[a] for a in range(d))
        c, s = np.cos(phase), np.sin(phase)
        for i in range(d):
            for j in range(d):
                grad[i, j] += k.components[j] * (-uhat[i] * s + vhat[i] * c)
    F = np.einsum("j...,ij...->i...", y, grad)
    qw = grid.cell_volume
    b = np.zeros(layout.size)
    for i_mode, k in enumerate(layout.modes):
        phase = sum(k.components[a] * axes[a] for a in range(d))
        c, s = np.cos(phase), np.sin(phase)
        fc = np.array([np.sum(F[i] * c) for i in range(d)]) * qw * 2.0 / TWO_PI ** d
        fs = np.array([np.sum(F[i] * s) for i in range(d)]) * qw * 2.0 / TWO_PI ** d
        fc = project_perp(k, fc)
        fs = project_perp(k, fs)
        for p in range(layout.pol):
            b[layout.u_slot(i_mode, p)] = float(fc @ k.frame[p]) / k.norm
            b[layout.v_slot(i_mode, p)] = float(fs @ k.frame[p]) / k.norm
    mean_out = (
        np.array([np.sum(F[i]) for i in range(d)]) * qw / TWO_PI ** (d / 2.0)
    )
    return DriftEvaluation(
        field_out=SpectralField(layout, b, np.zeros(d)),
        truncation=n,
        mean_out=mean_out,
    )


def fd_diagonal_partials(table, x, s=0.0, nu=0.0, backend=None):
    """sum_c dB[c]/dx[c] by central differences, h = 1e-5 (1 + |x_c|).

    Analytically zero: the diagonal terms are absent from the table (the
    lambda+ coefficient at h=k and the lambda- coefficients at h=k, h=2k all
    vanish), so this measures pure finite-difference noise.
    """
    C = x.size
    h = 1e-5 * (1.0 + np.abs(x))
    Xp = np.tile(x, (C, 1))
    Xm = Xp.copy()
    Xp[np.arange(C), np.arange(C)] += h
    Xm[np.arange(C), np.arange(C)] -= h
    Bp = drift_matrix(table, Xp, s=s, nu=nu, backend=backend)
    Bm = drift_matrix(table, Xm, s=s, nu=nu, backend=backend)
    diag = (Bp[np.arange(C), np.arange(C)] - Bm[np.arange(C), np.arange(C)]) / (2.0 * h)
    return float(np.sum(diag))


def gaussian_divergence(f, spec, s, n, backend=None, table=None):
    """delta_gamma B~(s, ., 0) at the point f: (B~(s,f), f)_l minus the summed
    diagonal partials. Claimed to vanish identically; see divergence_sweep."""
    if f.radius != n:
        raise ValueError("divergence is evaluated at fields of radius n")
    parts = gaussian_divergence_parts(f, spec, s, n, backend=backend, table=table)
    return parts["delta"]


def gaussian_divergence_parts(f, spec, s, n, backend=None, table=None):
    layout = get_layout(f.dim, n)
    if table is None:
        table = build_term_table(f.dim, n, mean=_mean_key(f))
    x = _embed(f, layout)
    b = drift_matrix(table, x[None, :], s=s, nu=spec.nu, backend=backend)[0]
    w = layout.sobolev_weights(spec.ell)
    pairing = float(np.sum(w * b * x))
    partials = fd_diagonal_partials(table, x, s=s, nu=spec.nu, backend=backend)
    return {"pairing_l": pairing, "partials": partials, "delta": pairing - partials}


def drift_state_inner(f, spec, s=0.0, r=None):
    """(B~(s,f), f)_r; defaults to r = spec.ell."""
    r = spec.ell if r is None else r
    ev = b_tilde(s, f, f.radius, spec.nu)
    return inner_product_r(ev.field_out, f, r)


def randomized_frames(dim, radius, seed=0):
    """Alternative valid frame assignment: per mode, a random orthogonal mix
    of the standard frame rows (still pairwise orthogonal, length |k|,
    orthogonal to k)."""
    rng = np.random.default_rng(seed)
    layout = get_layout(dim, radius)
    frames = {}
    for k in layout.modes:
        F = np.asarray(k.frame, dtype=float)
        p = F.shape[0]
        # any orthogonal mix (reflections included) is a valid frame; the
        # explicit row signs matter at p = 1, where qr always returns [[1]]
        q, _ = np.linalg.qr(rng.standard_normal((p, p)))
        signs = np.where(rng.random(p) < 0.5, -1.0, 1.0)
        frames[k.components] = (signs[:, None] * q) @ F
    return frames


def frame_independence_residual(dim, radius, seed=0, backend=None):
    """Max absolute difference of the drift in physical R^d mode coordinates
    between the standard frames and a randomized alternative. The bare
    coordinates change with the frame; the velocity field must not."""
    layout = get_layout(dim, radius)
    rng = np.random.default_rng(seed)
    std = {k.components: np.asarray(k.frame, dtype=float) for k in layout.modes}
    alt = randomized_frames(dim, radius, seed=seed + 1)

    def to_coords(frames, phys):
        vec = np.zeros(layout.size)
        for i, k in enumerate(layout.modes):
            F = frames[k.components] / k.norm
            a, b = layout.u_slot(i), layout.v_slot(i)
            vec[a:a + layout.pol] = F @ phys[i, 0]
            vec[b:b + layout.pol] = F @ phys[i, 1]
        return vec

    def to_physical(frames, vec):
        phys = np.zeros((len(layout.modes), 2, dim))
        for i, k in enumerate(layout.modes):
            F = frames[k.components] / k.norm
            a, b = layout.u_slot(i), layout.v_slot(i)
            phys[i, 0] = vec[a:a + layout.pol] @ F
            phys[i, 1] = vec[b:b + layout.pol] @ F
        return phys

    phys0 = rng.standard_normal((len(layout.modes), 2, dim))
    for i, k in enumerate(layout.modes):
        phys0[i, 0] = project_perp(k, phys0[i, 0])
        phys0[i, 1] = project_perp(k, phys0[i, 1])
    b_std = drift_matrix(build_term_table(dim, radius),
                         to_coords(std, phys0)[None, :], backend=backend)[0]
    b_alt = drift_matrix(build_term_table(dim, radius, frames=alt),
                         to_coords(alt, phys0)[None, :], backend=backend)[0]
    return float(np.max(np.abs(to_physical(std, b_std) - to_physical(alt, b_alt))))


def _half_lattice_arrays(d, limit):
    from .lattice import enumerate_wavevectors

    modes = enumerate_wavevectors(d, limit)
    arr = np.array([k.components for k in modes], dtype=float)
    return arr, np.array([float(k.norm_sq) for k in modes])


@dataclass(frozen=True)
class SeriesTable:
    K: int
    H: int
    S: float
    h_vectors: np.ndarray
    h_norm_sq: np.ndarray
    inner: np.ndarray  # inner sum over k for each h

    def inner_over_scaling(self, alpha):
        """ratio inner(h) / |h|^{2 alpha} (the claimed growth order)."""
        return self.inner / self.h_norm_sq ** alpha


def series_partial_sums(spec, K, H):
    """S(K,H) = sum_{|h|<=H} |h|^{-(2l-2)} sum_{|k|<=K} |k|^{2a}
    (|k+h|^{-2l} + [k != h] |k-h|^{-2l}), with the per-h inner sums kept."""
    if K < 1 or H < 1:
        raise ValueError("cutoffs must be >= 1")
    d, alpha, ell = spec.dim, spec.alpha, spec.ell
    karr, ksq = _half_lattice_arrays(d, K)
    harr, hsq = _half_lattice_arrays(d, H)
    kw = ksq ** alpha
    inner = np.empty(len(harr))
    # chunk h so the (chunk, Nk) temporaries stay modest
    chunk = max(1, int(2e7 // max(1, len(karr))))
    for a in range(0, len(harr), chunk):
        b = min(a + chunk, len(harr))
        G = harr[a:b] @ karr.T
        plus = hsq[a:b, None] + 2.0 * G + ksq[None, :]
        minus = hsq[a:b, None] - 2.0 * G + ksq[None, :]
        terms = plus ** (-ell)
        nz = minus != 0.0
        terms[nz] += minus[nz] ** (-ell)
        inner[a:b] = terms @ kw
    S = float(np.sum(hsq ** (1.0 - ell) * inner))
    return SeriesTable(K=K, H=H, S=S, h_vectors=harr, h_norm_sq=hsq, inner=inner)


def convention_constants(dims=(2, 3)):
    """Frozen resolution of the coefficient conventions, fixed against
    b_oracle (see the docstrings above). Emitted by the CLI for reference."""
    out = {
        "stored_convention": "bare cos/sin coordinates against kbar^p/|k| "
                             "(mean term against e^p with coordinate (2pi)^{-d/2})",
        "orthonormal_conversion": "c_orth = c_bare / kappa, kappa = sqrt(2)/(2pi)^{d/2}",
        "lambda_plus_bare": "((k+h)bar^i . h) / (2 |k+h| |h|)",
        "lambda_minus_bare": "((+/-(k-h))bar^i . h) / (2 |k-h| |h|); 0 at k=h",
        "lambda_mean_bare": "k_i / ((2pi)^{d/2} |k|)  (e^i read as the unit vector)",
        "bare_to_orthonormal_quadratic": "lambda_bare = lambda_orth * (2pi)^{d/2} / sqrt(2)",
        "single_mode_l2_mass": "(|u_k|^2 + |v_k|^2) * (2pi)^d / 2",
        "kappa": {},
    }
    for d in dims:
        out["kappa"][str(d)] = math.sqrt(2.0) / TWO_PI ** (d / 2.0)
    return out
