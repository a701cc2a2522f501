"""Spectral fields: norms, synthesis, heat scaling, serialization."""

import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nstorus.field import (
    GridSpec,
    SpectralField,
    add,
    divergence_residual,
    from_json,
    get_layout,
    heat_semigroup,
    inner_product_r,
    orthonormal_gram,
    scale,
    sobolev_norm_sq,
    synthesize,
    to_json,
    unscale_semigroup,
)
from nstorus.lattice import build_frame


def random_field(dim, radius, seed, with_mean=True):
    rng = np.random.default_rng(seed)
    layout = get_layout(dim, radius)
    mean = rng.standard_normal(dim) * 0.5 if with_mean else None
    return SpectralField.from_vector(dim, radius, rng.standard_normal(layout.size) * 0.5, mean)


def grid_l2_sq(f, m):
    g = GridSpec(f.dim, m)
    vals = synthesize(f, g)
    return float(np.sum(vals * vals) * g.cell_volume)


def test_sobolev_zero_field():
    z = SpectralField.zero(2, 3)
    for r in (-1.0, 0.0, 2.5):
        assert sobolev_norm_sq(z, r) == 0.0


def test_sobolev_single_mode():
    f = SpectralField.from_modes(2, 2, {(0, 2): ([1.0], [0.0])})
    assert sobolev_norm_sq(f, 1) == 4.0
    assert sobolev_norm_sq(f, -1) == 0.25
    assert sobolev_norm_sq(f, 0) == 1.0


def test_synthesize_zero():
    vals = synthesize(SpectralField.zero(2, 2), GridSpec(2, 8))
    assert vals.shape == (2, 8, 8)
    assert np.all(vals == 0.0)


def test_synthesize_constant_mean():
    # mean (2 pi)^{d/2} (1, 0) appears on the grid as the constant (1, 0)
    tp = (2.0 * math.pi) ** 1.0
    f = SpectralField.from_vector(2, 2, np.zeros(12), mean=[tp, 0.0])
    vals = synthesize(f, GridSpec(2, 8))
    assert np.allclose(vals[0], 1.0, atol=1e-14)
    assert np.allclose(vals[1], 0.0, atol=1e-14)


def test_single_mode_grid_mass():
    f = SpectralField.from_modes(2, 2, {(1, 0): ([0.7], [-0.3])})
    want = (0.7 ** 2 + 0.3 ** 2) * (2.0 * math.pi) ** 2 / 2.0
    assert math.isclose(grid_l2_sq(f, 16), want, rel_tol=1e-12)


@pytest.mark.parametrize("dim,radius,m", [(2, 3, 16), (3, 2, 10)])
def test_parseval(dim, radius, m):
    # m > 2 radius, so quadrature on the grid is exact
    f = random_field(dim, radius, seed=7)
    vol_half = (2.0 * math.pi) ** dim / 2.0
    want = float(f.mean @ f.mean) + vol_half * sobolev_norm_sq(f, 0)
    assert math.isclose(grid_l2_sq(f, m), want, rel_tol=1e-10)


def test_divergence_residual_frame_fields():
    for dim, radius in ((2, 3), (3, 2)):
        f = random_field(dim, radius, seed=11)
        assert divergence_residual(f) <= 1e-14


def test_divergence_residual_many_modes_d3():
    rng = np.random.default_rng(5)
    modes = {}
    from nstorus.lattice import enumerate_wavevectors

    ks = enumerate_wavevectors(3, 3)
    for k in ks[:20]:
        modes[k.components] = (rng.standard_normal(2), rng.standard_normal(2))
    f = SpectralField.from_modes(3, 3, modes)
    assert divergence_residual(f) <= 1e-13


class _ParallelStub:
    """Duck-typed field whose full coefficient sits along k, not across it."""

    def __init__(self, dim, radius):
        self.layout = get_layout(dim, radius)

    def full_coefficients(self, mode_index):
        k = self.layout.modes[mode_index].as_array()
        both = np.zeros((2, k.size))
        if mode_index == 0:
            both[0] = k / np.linalg.norm(k)
        return both


def test_divergence_residual_detects_parallel_part():
    bad = _ParallelStub(2, 2)
    assert divergence_residual(bad) > 0.99


def test_heat_identity_at_t0():
    f = random_field(2, 3, seed=3)
    g = heat_semigroup(f, 0.0, 0.7)
    assert np.array_equal(g.coeffs, f.coeffs)
    assert np.array_equal(g.mean, f.mean)


def test_heat_halves_unit_shell():
    # t nu = ln 2 halves the |k|^2 = 1 coefficients and leaves the mean alone
    f = random_field(2, 2, seed=9)
    g = heat_semigroup(f, math.log(2.0), 1.0)
    assert np.allclose(g.u((1, 0)), 0.5 * f.u((1, 0)), rtol=1e-15)
    assert np.allclose(g.v((0, 1)), 0.5 * f.v((0, 1)), rtol=1e-15)
    assert np.allclose(g.u((0, 2)), f.u((0, 2)) * 2.0 ** -4, rtol=1e-14)
    assert np.array_equal(g.mean, f.mean)


def test_heat_semigroup_law():
    f = random_field(3, 2, seed=13)
    a = heat_semigroup(heat_semigroup(f, 0.3, 0.8), 0.45, 0.8)
    b = heat_semigroup(f, 0.75, 0.8)
    assert np.allclose(a.coeffs, b.coeffs, rtol=1e-14, atol=1e-300)


def test_unscale_inverts_heat():
    f = random_field(2, 3, seed=21)
    g = unscale_semigroup(heat_semigroup(f, 0.6, 0.9), 0.6, 0.9)
    assert np.allclose(g.coeffs, f.coeffs, rtol=1e-13)


@settings(max_examples=40)
@given(st.floats(0.0, 10.0), st.floats(0.0, 2.0), st.floats(-1.5, 2.0))
def test_heat_never_increases_norm(t, nu, r):
    f = random_field(2, 2, seed=1)
    g = heat_semigroup(f, t, nu)
    assert sobolev_norm_sq(g, r) <= sobolev_norm_sq(f, r) * (1.0 + 1e-12)


def test_inner_product_matches_norm():
    f = random_field(2, 3, seed=17)
    for r in (-1.0, 0.0, 3.0):
        assert math.isclose(inner_product_r(f, f, r), sobolev_norm_sq(f, r), rel_tol=1e-15)


def test_inner_product_symmetric_bilinear():
    f = random_field(2, 3, seed=23)
    g = random_field(2, 3, seed=29)
    assert math.isclose(inner_product_r(f, g, 2.0), inner_product_r(g, f, 2.0), rel_tol=1e-15)
    lhs = inner_product_r(add(f, g, 2.0, 1.0), g, 1.0)
    rhs = 2.0 * inner_product_r(f, g, 1.0) + inner_product_r(g, g, 1.0)
    assert math.isclose(lhs, rhs, rel_tol=1e-12)


def test_inner_product_layout_mismatch():
    f = random_field(2, 3, seed=1)
    g = random_field(2, 2, seed=1)
    with pytest.raises(ValueError):
        inner_product_r(f, g, 0.0)


def test_scale_zero():
    f = random_field(2, 2, seed=31)
    z = scale(f, 0.0)
    assert not z.coeffs.any() and not z.mean.any()


def test_json_roundtrip():
    f = random_field(3, 2, seed=37)
    doc = json.loads(to_json(f))
    assert set(doc) == {"dim", "radius", "mean", "modes"}
    assert set(doc["modes"][0]) == {"k", "u", "v"}
    g = from_json(to_json(f))
    assert np.array_equal(g.coeffs, f.coeffs)
    assert np.array_equal(g.mean, f.mean)


def test_from_json_rejects_outside_mode():
    doc = {"dim": 2, "radius": 1, "mean": [0, 0],
           "modes": [{"k": [2, 0], "u": [1.0], "v": [0.0]}]}
    with pytest.raises(ValueError):
        from_json(json.dumps(doc))


def test_from_modes_coefficient_arity():
    with pytest.raises(ValueError):
        SpectralField.from_modes(3, 2, {(1, 0, 0): ([1.0], [0.0])})


def test_orthonormal_gram_small():
    gram, labels = orthonormal_gram(2, 2)
    assert gram.shape == (len(labels), len(labels))
    assert np.max(np.abs(gram - np.eye(len(labels)))) <= 1e-10
    # d constants plus (u, v) per mode per polarization
    assert len(labels) == 2 + 2 * 6


def test_orthonormal_gram_needs_fine_grid():
    with pytest.raises(ValueError):
        orthonormal_gram(2, 3, points_per_axis=6)


def test_frame_rows_are_divergence_free_directions():
    # directions k-bar^p / |k| synthesize to divergence-free single modes
    f = SpectralField.from_modes(3, 2, {(1, 1, 0): ([1.0, 0.0], [0.0, -2.0])})
    assert divergence_residual(f) <= 1e-14
    F = build_frame(f.layout.modes[f.layout.index[(1, 1, 0)]])
    assert np.allclose(F @ np.array([1.0, 1.0, 0.0]), 0.0, atol=1e-14)
