"""Half-lattice enumeration, orthogonal frames, and interaction coefficients.

Wavevectors live in Z_d^+, the half-lattice of integer vectors whose first
nonzero component is positive, so each cos/sin mode pair is counted once.
Membership and difference logic is exact integer arithmetic; only frames and
coefficient values are floating point.
"""

import itertools
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

TWO_PI = 2.0 * math.pi


def in_half_lattice(components):
    """True iff the first nonzero component is positive (zero excluded)."""
    for c in components:
        if c != 0:
            return c > 0
    return False


@lru_cache(maxsize=None)
def _frame_cached(components):
    return _build_frame_array(components)


def _build_frame_array(components):
    k = np.asarray(components, dtype=float)
    d = len(components)
    norm = math.sqrt(float(sum(c * c for c in components)))
    if d == 2:
        # fixed convention, kept verbatim (no sign flip): (2,1) -> (-1,2)
        return np.array([[-k[1], k[0]]])
    # Gram-Schmidt over the standard axes ordered by descending |k_i|,
    # largest-|k_i| axis excluded so no seed is near-parallel to k.
    order = sorted(range(d), key=lambda i: (-abs(components[i]), i))
    vectors = []
    for axis in order[1:]:
        v = np.zeros(d)
        v[axis] = 1.0
        v -= (v @ k) / (norm * norm) * k
        for w in vectors:
            v -= (v @ w) / (w @ w) * w
        v *= norm / np.linalg.norm(v)
        for c in v:
            if abs(c) > 1e-12 * norm:
                if c < 0:
                    v = -v
                break
        vectors.append(v)
    arr = np.array(vectors)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class WaveVector:
    """Element of Z_d^+ with its squared norm and deterministic frame."""

    components: tuple
    norm_sq: int = field(init=False)

    def __post_init__(self):
        comps = tuple(int(c) for c in self.components)
        if len(comps) < 2:
            raise ValueError("wavevectors need d >= 2 components")
        if not in_half_lattice(comps):
            raise ValueError(f"{comps} is not in Z_d^+")
        object.__setattr__(self, "components", comps)
        object.__setattr__(self, "norm_sq", sum(c * c for c in comps))

    @property
    def dim(self):
        return len(self.components)

    @property
    def norm(self):
        return math.sqrt(self.norm_sq)

    @property
    def frame(self):
        """(d-1, d) array of pairwise orthogonal vectors of length |k|, all
        orthogonal to k."""
        return _frame_cached(self.components)

    def as_array(self):
        return np.asarray(self.components, dtype=float)


def enumerate_wavevectors(d, n):
    """All k in Z_d^+ with |k| <= n, ordered by |k|^2 then lexicographic.

    Within a norm shell the order is descending lexicographic, so the
    axis vectors come out as (1,0),(0,1) and (1,0,0),(0,1,0),(0,0,1).
    """
    if d < 2:
        raise ValueError("d >= 2 required (frames need d-1 >= 1 directions)")
    if n < 0:
        raise ValueError("truncation radius must be >= 0")
    out = []
    for comps in itertools.product(range(-n, n + 1), repeat=d):
        if sum(c * c for c in comps) <= n * n and in_half_lattice(comps):
            out.append(comps)
    out.sort(key=lambda c: (sum(x * x for x in c), tuple(-x for x in c)))
    return [WaveVector(c) for c in out]


def build_frame(k):
    if isinstance(k, WaveVector):
        return k.frame
    comps = tuple(int(c) for c in k)
    if all(c == 0 for c in comps):
        raise ValueError("zero vector has no frame")
    if not in_half_lattice(comps):
        raise ValueError(f"{comps} is not in Z_d^+")
    return _frame_cached(comps)


def project_perp(k, v):
    """Leray projector at k: v - (v.k) k / |k|^2."""
    kv = k.as_array() if isinstance(k, WaveVector) else np.asarray(k, dtype=float)
    v = np.asarray(v, dtype=float)
    nsq = kv @ kv
    if nsq == 0.0:
        raise ValueError("projection undefined at k = 0")
    return v - (v @ kv) / nsq * kv


def signed_difference(k, h):
    """(+/-(k-h), sign) with the sign making the vector land in Z_d^+.

    Returns None when k == h; that pair carries no interaction and the
    corresponding coefficient is taken to be zero.
    """
    kc = k.components if isinstance(k, WaveVector) else tuple(int(c) for c in k)
    hc = h.components if isinstance(h, WaveVector) else tuple(int(c) for c in h)
    diff = tuple(a - b for a, b in zip(kc, hc))
    if all(c == 0 for c in diff):
        return None
    if in_half_lattice(diff):
        return WaveVector(diff), 1
    return WaveVector(tuple(-c for c in diff)), -1


def _orthonormal_denominator(d):
    return math.sqrt(2.0) * TWO_PI ** (d / 2.0)


def _check_frame_index(k, i):
    # 1-based, and negative values must not wrap around
    if not 1 <= i <= k.dim - 1:
        raise ValueError(f"frame index {i} outside 1..{k.dim - 1}")


def lambda_plus(k, h, i):
    """Coefficient of the k+h interaction channel, orthonormal convention."""
    _check_frame_index(k, i)
    g = WaveVector(tuple(a + b for a, b in zip(k.components, h.components)))
    return float(g.frame[i - 1] @ h.as_array()) / (
        _orthonormal_denominator(k.dim) * h.norm * g.norm
    )


def lambda_minus(k, h, i):
    """Coefficient of the +/-(k-h) channel; zero at k = h by definition."""
    _check_frame_index(k, i)
    sd = signed_difference(k, h)
    if sd is None:
        return 0.0
    m, _ = sd
    return float(m.frame[i - 1] @ h.as_array()) / (
        _orthonormal_denominator(k.dim) * h.norm * m.norm
    )


def lambda_mean(k, i):
    """Mean-flow coupling coefficient k_i / ((2 pi)^{d/2} |k|).

    Normalization was fixed against the pseudo-spectral oracle: the constant
    vectors enter through their (2 pi)^{-d/2} coordinate, and this is also the
    bare-convention constant used by the drift term table.
    """
    if not 1 <= i <= k.dim:
        raise ValueError(f"component index {i} outside 1..{k.dim}")
    return k.components[i - 1] / (TWO_PI ** (k.dim / 2.0) * k.norm)
