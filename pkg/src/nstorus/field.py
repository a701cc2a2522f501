"""Truncated divergence-free fields in (u_k, v_k, u_0) coordinates.

Stored convention is the bare cos/sin expansion: the full R^d coefficient of
cos(k.theta) is sum_p u_k^p kbar^p / |k|, of sin(k.theta) is the same with
v_k^p, and the mean term contributes u_0^p (2 pi)^{-d/2} per axis. Conversion
to the orthonormal A/C basis divides coefficients by kappa = sqrt(2)/(2pi)^{d/2}.

Coefficient layout: one dense vector following enumerate_wavevectors order,
u_k^1..u_k^{d-1} then v_k^1..v_k^{d-1} per mode; u_0 stored separately.
"""

import json
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .lattice import enumerate_wavevectors

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class GridSpec:
    dim: int
    points_per_axis: int

    def __post_init__(self):
        if self.points_per_axis < 1:
            raise ValueError("points_per_axis must be >= 1")

    def axes(self):
        t = TWO_PI * np.arange(self.points_per_axis) / self.points_per_axis
        return np.meshgrid(*([t] * self.dim), indexing="ij")

    @property
    def cell_volume(self):
        return (TWO_PI / self.points_per_axis) ** self.dim


class Layout:
    """Slot arithmetic for the dense coefficient vector of a (d, n) pair."""

    def __init__(self, dim, radius):
        self.dim = dim
        self.radius = radius
        self.modes = enumerate_wavevectors(dim, radius)
        self.index = {k.components: i for i, k in enumerate(self.modes)}
        self.pol = dim - 1
        self.stride = 2 * self.pol
        self.size = self.stride * len(self.modes)
        # per-slot |k|^2, for Sobolev weights and semigroup factors
        self.slot_norm_sq = np.repeat(
            np.array([float(k.norm_sq) for k in self.modes]), self.stride
        )
        self.slot_norm_sq.setflags(write=False)

    def u_slot(self, mode_index, p=0):
        return mode_index * self.stride + p

    def v_slot(self, mode_index, p=0):
        return mode_index * self.stride + self.pol + p

    def sobolev_weights(self, r):
        return self.slot_norm_sq ** r


@lru_cache(maxsize=None)
def get_layout(dim, radius):
    return Layout(dim, radius)


class SpectralField:
    """Immutable truncated field. Construct via zero/from_modes/from_vector."""

    __slots__ = ("layout", "coeffs", "mean")

    def __init__(self, layout, coeffs, mean=None):
        coeffs = np.ascontiguousarray(coeffs, dtype=float)
        if coeffs.shape != (layout.size,):
            raise ValueError("coefficient vector does not match layout")
        mean = np.zeros(layout.dim) if mean is None else np.asarray(mean, dtype=float)
        if mean.shape != (layout.dim,):
            raise ValueError("mean vector must have d entries")
        coeffs.setflags(write=False)
        mean.setflags(write=False)
        object.__setattr__(self, "layout", layout)
        object.__setattr__(self, "coeffs", coeffs)
        object.__setattr__(self, "mean", mean)

    def __setattr__(self, *_):
        raise AttributeError("SpectralField is immutable")

    @property
    def dim(self):
        return self.layout.dim

    @property
    def radius(self):
        return self.layout.radius

    @classmethod
    def zero(cls, dim, radius):
        layout = get_layout(dim, radius)
        return cls(layout, np.zeros(layout.size), np.zeros(dim))

    @classmethod
    def from_vector(cls, dim, radius, coeffs, mean=None):
        layout = get_layout(dim, radius)
        if mean is None:
            mean = np.zeros(dim)
        return cls(layout, coeffs, mean)

    @classmethod
    def from_modes(cls, dim, radius, modes, mean=None):
        """modes: mapping from component tuple to (u array, v array)."""
        layout = get_layout(dim, radius)
        coeffs = np.zeros(layout.size)
        for comps, (u, v) in modes.items():
            comps = tuple(int(c) for c in comps)
            if comps not in layout.index:
                raise ValueError(f"mode {comps} outside radius {radius} lattice")
            i = layout.index[comps]
            u = np.atleast_1d(np.asarray(u, dtype=float))
            v = np.atleast_1d(np.asarray(v, dtype=float))
            if u.shape != (layout.pol,) or v.shape != (layout.pol,):
                raise ValueError("coefficient tuples need exactly d-1 entries")
            coeffs[layout.u_slot(i):layout.u_slot(i) + layout.pol] = u
            coeffs[layout.v_slot(i):layout.v_slot(i) + layout.pol] = v
        if mean is None:
            mean = np.zeros(dim)
        return cls(layout, coeffs, mean)

    def u(self, comps):
        i = self.layout.index[tuple(int(c) for c in comps)]
        return self.coeffs[self.layout.u_slot(i):self.layout.u_slot(i) + self.layout.pol]

    def v(self, comps):
        i = self.layout.index[tuple(int(c) for c in comps)]
        return self.coeffs[self.layout.v_slot(i):self.layout.v_slot(i) + self.layout.pol]

    def full_coefficients(self, mode_index):
        """(cos, sin) R^d coefficient vectors of mode k (frame expansion)."""
        k = self.layout.modes[mode_index]
        fr = k.frame / k.norm
        i = mode_index
        u = self.coeffs[self.layout.u_slot(i):self.layout.u_slot(i) + self.layout.pol]
        v = self.coeffs[self.layout.v_slot(i):self.layout.v_slot(i) + self.layout.pol]
        return u @ fr, v @ fr


def sobolev_norm_sq(f, r):
    """sum_k |k|^{2r} (|u_k|^2 + |v_k|^2); the mean u_0 is excluded."""
    w = f.layout.sobolev_weights(r)
    return float(np.sum(w * f.coeffs * f.coeffs))


def inner_product_r(f, g, r):
    if f.layout is not g.layout and (f.dim, f.radius) != (g.dim, g.radius):
        raise ValueError("mismatched field layouts")
    w = f.layout.sobolev_weights(r)
    return float(np.sum(w * f.coeffs * g.coeffs))


def add(f, g, a=1.0, b=1.0):
    if f.layout is not g.layout and (f.dim, f.radius) != (g.dim, g.radius):
        raise ValueError("mismatched field layouts")
    return SpectralField(f.layout, a * f.coeffs + b * g.coeffs, a * f.mean + b * g.mean)


def scale(f, a):
    return SpectralField(f.layout, a * f.coeffs, a * f.mean)


def synthesize(f, grid):
    """Velocity vectors on the uniform grid, direct summation (no FFT)."""
    if grid.dim != f.dim:
        raise ValueError("grid dimension mismatch")
    axes = grid.axes()
    shape = axes[0].shape
    d = f.dim
    y = np.zeros((d,) + shape)
    const = TWO_PI ** (-d / 2.0)
    for p in range(d):
        y[p] += f.mean[p] * const
    for i, k in enumerate(f.layout.modes):
        phase = sum(k.components[a] * axes[a] for a in range(d))
        uhat, vhat = f.full_coefficients(i)
        if not uhat.any() and not vhat.any():
            continue
        c, s = np.cos(phase), np.sin(phase)
        for p in range(d):
            y[p] += uhat[p] * c + vhat[p] * s
    return y


def orthonormal_gram(dim, radius, points_per_axis=None):
    """Grid-quadrature Gram matrix of the orthonormal system: the constant
    fields e^p/(2pi)^{d/2} plus kappa (kbar^p/|k|) cos(k.theta) and
    kappa (kbar^p/|k|) sin(k.theta) over |k| <= radius.

    Rectangle-rule quadrature is exact for the trig products as long as
    points_per_axis > 2*radius; returns (gram, labels).
    """
    m = points_per_axis or 2 * radius + 2
    if m <= 2 * radius:
        raise ValueError("points_per_axis must exceed 2*radius for exactness")
    layout = get_layout(dim, radius)
    grid = GridSpec(dim, m)
    axes = grid.axes()
    npts = axes[0].size
    kappa = math.sqrt(2.0) / TWO_PI ** (dim / 2.0)
    ncols = dim + 2 * layout.pol * len(layout.modes)
    # rows: grid points x components, scaled so Phi.T @ Phi is the L2 Gram
    phi = np.zeros((npts * dim, ncols))
    labels = []
    sq = math.sqrt(grid.cell_volume)
    col = 0
    for p in range(dim):
        comp = np.full(npts, TWO_PI ** (-dim / 2.0) * sq)
        phi[p * npts:(p + 1) * npts, col] = comp
        labels.append(f"e^{p + 1}")
        col += 1
    for k in layout.modes:
        phase = sum(k.components[a] * axes[a] for a in range(dim)).ravel()
        c, s = np.cos(phase) * sq, np.sin(phase) * sq
        for p in range(layout.pol):
            direction = kappa * k.frame[p] / k.norm
            for trig, tag in ((c, "A"), (s, "C")):
                for i in range(dim):
                    phi[i * npts:(i + 1) * npts, col] = direction[i] * trig
                labels.append(f"{tag}{list(k.components)}^{p + 1}")
                col += 1
    return phi.T @ phi, labels


def divergence_residual(f):
    """max_k |coefficient . k| / (|k| |coefficient| + eps); 0 iff div-free."""
    eps = 1e-300
    worst = 0.0
    for i, k in enumerate(f.layout.modes):
        kv = k.as_array()
        for coeff in f.full_coefficients(i):
            mag = np.linalg.norm(coeff)
            worst = max(worst, abs(coeff @ kv) / (k.norm * mag + eps))
    return worst


def heat_semigroup(f, t, nu):
    """Modewise e^{-t nu |k|^2}; identity on the mean flow."""
    if t < 0:
        raise ValueError("negative time rejected; use unscale_semigroup")
    return SpectralField(
        f.layout, f.coeffs * np.exp(-t * nu * f.layout.slot_norm_sq), f.mean
    )


def unscale_semigroup(f, t, nu):
    """Inverse of the tilde change of variables: modewise e^{+t nu |k|^2}.

    Kept separate from heat_semigroup because it amplifies.
    """
    if t < 0:
        raise ValueError("t >= 0 required")
    return SpectralField(
        f.layout, f.coeffs * np.exp(t * nu * f.layout.slot_norm_sq), f.mean
    )


def to_json(f):
    modes = []
    for i, k in enumerate(f.layout.modes):
        u = f.coeffs[f.layout.u_slot(i):f.layout.u_slot(i) + f.layout.pol]
        v = f.coeffs[f.layout.v_slot(i):f.layout.v_slot(i) + f.layout.pol]
        if u.any() or v.any():
            modes.append({"k": list(k.components), "u": u.tolist(), "v": v.tolist()})
    return json.dumps(
        {"dim": f.dim, "radius": f.radius, "mean": f.mean.tolist(), "modes": modes}
    )


def from_json(text):
    obj = json.loads(text)
    modes = {tuple(m["k"]): (m["u"], m["v"]) for m in obj["modes"]}
    return SpectralField.from_modes(obj["dim"], obj["radius"], modes, obj["mean"])
