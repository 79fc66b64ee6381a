from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lowreg_moments.oscillatory import fit_slope
from lowreg_moments.spectral import (
    SCHEME_IDS,
    GridMismatch,
    GridSpec,
    SpectralField,
    StepError,
    apply_filter,
    convolve,
    physical_scheme,
    product_coefficients,
    read_field,
    space_convolution,
    step,
    write_field,
)

from oracles import direct_convolution, quadrature_space_convolution


def random_field(grid, seed, decay=1.0):
    rng = np.random.default_rng(seed)
    k = grid.frequencies()
    c = (rng.normal(size=grid.N) + 1j * rng.normal(size=grid.N)) / (1 + np.abs(k)) ** decay
    return SpectralField(grid, c)


def hermitian_field(grid, seed, support):
    rng = np.random.default_rng(seed)
    modes = {0: rng.normal()}
    for q in range(1, support + 1):
        modes[q] = complex(rng.normal(), rng.normal()) / (1 + q) ** 2
        modes[-q] = np.conj(modes[q])
    return SpectralField.from_modes(grid, modes, hermitian=True)


class TestGrid:
    @pytest.mark.parametrize("N", [4, 12, 0])
    def test_rejects_bad_sizes(self, N):
        with pytest.raises(ValueError):
            GridSpec(N)

    def test_rejects_dimension(self):
        with pytest.raises(ValueError):
            GridSpec(16, d=4)

    def test_frequencies_in_fft_order(self):
        assert GridSpec(8).frequencies().tolist() == [0, 1, 2, 3, -4, -3, -2, -1]

    def test_shape_mismatch(self):
        with pytest.raises(GridMismatch):
            SpectralField(GridSpec(8), np.zeros(16))

    def test_mixed_grids(self):
        with pytest.raises(GridMismatch):
            convolve(random_field(GridSpec(8), 0), random_field(GridSpec(16), 0))


class TestField:
    def test_physical_roundtrip(self):
        g = GridSpec(32)
        u = random_field(g, 1)
        back = SpectralField.from_physical(g, u.physical())
        assert np.allclose(back.coeffs, u.coeffs, atol=1e-14)

    def test_single_mode_is_plane_wave(self):
        g = GridSpec(16)
        x = 2 * np.pi * np.arange(16) / 16
        assert np.allclose(SpectralField.from_modes(g, {1: 1.0}).physical(), np.exp(1j * x))

    def test_tilde(self):
        g = GridSpec(16)
        u = random_field(g, 2)
        x_vals = u.physical()
        reflected = np.conj(x_vals[(-np.arange(16)) % 16])
        assert np.allclose(u.tilde().physical(), reflected)

    def test_centered(self):
        u = SpectralField.from_modes(GridSpec(8), {-4: 1.0})
        assert u.centered()[0] == 1.0

    def test_io_roundtrip(self, tmp_path):
        g = GridSpec(16, dealias=False)
        u = random_field(g, 3)
        path = tmp_path / "u.bin"
        write_field(path, u)
        back = read_field(path)
        assert back.grid == g
        assert np.allclose(back.coeffs, u.coeffs, atol=1e-6)

    def test_io_size_check(self, tmp_path):
        path = tmp_path / "u.bin"
        path.write_bytes(b'{"N": 16}\n' + b"\0" * 8)
        with pytest.raises(ValueError):
            read_field(path)


class TestConvolution:
    @pytest.mark.parametrize("dealias", [True, False])
    def test_against_direct_sum(self, dealias):
        g = GridSpec(16)
        a, b = random_field(g, 4), random_field(g, 5)
        out = convolve(a, b, dealias=dealias).coeffs
        assert np.allclose(out, direct_convolution(a.coeffs, b.coeffs, truncated=dealias), atol=1e-12)

    def test_delta_is_identity(self):
        g = GridSpec(16)
        a = random_field(g, 6)
        delta = SpectralField.from_modes(g, {0: 1.0})
        assert np.allclose(convolve(a, delta).coeffs, a.coeffs, atol=1e-14)

    def test_triple_product_exact_with_padding(self):
        g = GridSpec(16)
        arrays = [random_field(g, s).coeffs for s in (7, 8, 9)]
        # a full linear convolution needs a grid large enough to hold it
        big = GridSpec(64)
        pad = [SpectralField.from_modes(big, dict(zip(g.frequencies(), x))).coeffs for x in arrays]
        full = product_coefficients(pad, dealias=False)
        trunc = product_coefficients(arrays, dealias=True)
        for k in g.frequencies():
            assert trunc[k % 16] == pytest.approx(full[k % 64], abs=1e-12)

    def test_space_convolution_against_quadrature(self):
        g = GridSpec(16)
        u, w = random_field(g, 10), random_field(g, 11)
        ref = quadrature_space_convolution(u.physical(), w.physical())
        assert np.allclose(space_convolution(u, w).physical(), ref, atol=1e-12)


class TestFilters:
    @pytest.mark.parametrize("fid", ["psi", "psi1", "psi3"])
    def test_unity_at_zero(self, fid):
        assert apply_filter(fid, 0.1, 0) == 1

    def test_psi2_unity_at_zero(self):
        assert apply_filter("psi2", 0.1, 0, 0) == 1

    @pytest.mark.parametrize("fid", ["psi", "psi3"])
    def test_vanishes_at_two_pi(self, fid):
        tau = 0.01
        k = 2 * np.pi / np.sqrt(tau)
        assert abs(apply_filter(fid, tau, k)) < 1e-15

    def test_psi1_closed_form(self):
        tau, k = 0.02, 7
        x = tau * k * k
        assert apply_filter("psi1", tau, k) == pytest.approx((1 - np.exp(-1j * x)) / (1j * x))

    @pytest.mark.parametrize("fid", ["psi", "psi1", "psi2", "psi3"])
    def test_consistency_slope(self, fid):
        taus = [1e-3, 5e-4, 2.5e-4]
        k = 5
        errs = [abs(apply_filter(fid, t, k, k) - 1) for t in taus]
        assert fit_slope(taus, errs) == pytest.approx(1.0, abs=0.02)

    @pytest.mark.parametrize("fid, bound", [("psi1", 2.0), ("psi3", 4.0), ("psi2", 4.0)])
    def test_suprema(self, fid, bound):
        # sup over the scaled frequency of |filter * tau k k1|
        tau = 1.0
        k = np.linspace(1e-3, 40, 400001)
        vals = np.abs(apply_filter(fid, tau, k, k) * tau * k * k)
        assert vals.max() == pytest.approx(bound, rel=1e-6)

    def test_guards(self):
        with pytest.raises(ValueError):
            apply_filter("psi", 0.0, 1)
        with pytest.raises(ValueError):
            apply_filter("psi2", 0.1, 1)
        with pytest.raises(ValueError):
            apply_filter("gauss", 0.1, 1)


class TestStep:
    @pytest.mark.parametrize("sid", ["nls1", "kdv1"])
    def test_first_order_is_exact_modulus(self, sid):
        g = GridSpec(32)
        u = random_field(g, 12)
        assert np.allclose(step(sid, u, 0.5).coeffs, np.abs(u.coeffs) ** 2, atol=1e-14)

    @pytest.mark.parametrize("sid", SCHEME_IDS)
    def test_output_is_real(self, sid):
        u = hermitian_field(GridSpec(32), 13, 6)
        out = step(sid, u, 0.05)
        assert np.max(np.abs(out.coeffs.imag)) < 1e-14

    @pytest.mark.parametrize("sid", ["nls2", "kdv2", "nls2_stab", "kdv2_stab"])
    def test_resolution_independent(self, sid):
        # band-limited data: a finer grid must not change the low modes
        coarse = hermitian_field(GridSpec(64), 14, 6)
        fine = hermitian_field(GridSpec(128), 14, 6)
        a, b = step(sid, coarse, 0.02), step(sid, fine, 0.02)
        for k in range(-20, 21):
            assert a.mode(k) == pytest.approx(b.mode(k), abs=1e-13)

    def test_nonfinite_input(self):
        g = GridSpec(16)
        c = np.zeros(16, dtype=complex)
        c[3] = np.nan
        with pytest.raises(StepError):
            step("nls2", SpectralField(g, c), 0.1)

    def test_overflow(self):
        g = GridSpec(16)
        u = SpectralField.from_modes(g, {1: 1e120, -1: 1e120})
        with pytest.raises(StepError):
            step("nls2", u, 0.1)

    def test_unknown_id(self):
        with pytest.raises(ValueError):
            step("nls3", random_field(GridSpec(16), 0), 0.1)
        with pytest.raises(ValueError):
            physical_scheme("heat1")

    def test_multidimensional_first_order(self):
        g = GridSpec(8, d=2)
        rng = np.random.default_rng(0)
        u = SpectralField(g, rng.normal(size=(8, 8)) + 1j * rng.normal(size=(8, 8)))
        assert np.allclose(step("nls1", u, 0.1).coeffs, np.abs(u.coeffs) ** 2)
        with pytest.raises(NotImplementedError):
            step("nls2", u, 0.1)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([8, 16, 32]))
def test_convolution_commutes(seed, N):
    g = GridSpec(N)
    a, b = random_field(g, seed), random_field(g, seed + 1)
    assert np.allclose(convolve(a, b).coeffs, convolve(b, a).coeffs, atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(1e-3, 1.0))
def test_first_order_step_is_self_convolution(seed, tau):
    g = GridSpec(16)
    u = random_field(g, seed)
    assert np.allclose(step("nls1", u, tau).coeffs, space_convolution(u, u.tilde()).coeffs, atol=1e-14)


@settings(max_examples=30, deadline=None)
@given(st.floats(1e-4, 1.0), st.floats(0, 60))
def test_filters_are_bounded_by_one(tau, k):
    for fid in ("psi", "psi1", "psi3"):
        assert abs(apply_filter(fid, tau, k)) <= 1 + 1e-12
