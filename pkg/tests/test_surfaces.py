import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rotodop.beams import LGGeometry
from rotodop.errors import DomainError, TruncationError
from rotodop.surfaces import (
    HeightField,
    Metasurface,
    RoughGaussian,
    column_norm_check,
    height_field_coeffs,
    height_overlap,
    jacobi_theta3,
    lattice_gaussian_sum,
    normalization,
    scatter_coeff,
    scattering_table,
)

GEOM = LGGeometry(w0=1e-3, wavelength=1e-6)
K = GEOM.k


def test_metasurface_coefficients():
    m = Metasurface(2)
    assert scatter_coeff(m, 3, 0, 1, 0) == -1
    assert scatter_coeff(m, 2, 0, 1, 0) == 0
    assert scatter_coeff(m, 3, 1, 1, 0) == 0
    with pytest.raises(DomainError):
        Metasurface(0)


def test_rough_zero_epsilon_is_mirror():
    r = RoughGaussian(0.0, 1.0, 1.0)
    assert scatter_coeff(r, 2, 1, 2, 1) == -1
    assert scatter_coeff(r, 3, 1, 2, 1) == 0


def test_rough_diffuse_magnitude_printed_norm():
    r = RoughGaussian(0.1, 1.0, 1.0, norm_convention="printed")
    assert abs(scatter_coeff(r, 1, 0, 0, 0)) == pytest.approx(0.1 * math.exp(-0.25) / normalization(1, 1), rel=1e-14)


def test_rough_specular_entry():
    r = RoughGaussian(0.2, 1.3, 0.7)
    # the diffuse term at zero shift cancels the -i eps / N part
    assert scatter_coeff(r, 4, 2, 4, 2) == pytest.approx(-math.sqrt(1 - 0.04), abs=1e-16)


def test_theta3_series():
    q = math.exp(-2 * math.pi ** 2)
    direct = 1 + 2 * sum(q ** (n * n) * math.cos(2 * n * math.pi) for n in range(1, 6))
    assert jacobi_theta3(math.pi, q) == pytest.approx(direct, rel=1e-15)


def test_normalization_values():
    # independent series: (sum_k exp(-k^2/2) - 1)^2 at 30 digits
    assert normalization(1.0, 1.0) ** 2 == pytest.approx(2.2699287983310964, rel=1e-12)
    assert normalization(1.0, 1.0) ** 2 == pytest.approx(2.2699, abs=5e-5)
    a = normalization(0.8, 0.8) ** 2
    assert math.sqrt(a) == pytest.approx(lattice_gaussian_sum(0.8) - 1, rel=1e-14)
    for s in (3.0, 6.0):
        assert normalization(s, s) ** 2 == pytest.approx((math.sqrt(2 * math.pi) * s - 1) ** 2, rel=1e-12)
    with pytest.raises(DomainError):
        normalization(0.0, 1.0)


def test_column_normalizer_values():
    # mpmath: S * sum_{k >= -p} exp(-k^2/2) - 1 for p = 0 and p = 2
    r = RoughGaussian(0.1, 1.0, 1.0)
    assert r.norm(0) ** 2 == pytest.approx(3.3949068312299065, rel=1e-12)
    assert r.norm(2) ** 2 == pytest.approx(5.2544889897621111, rel=1e-12)


def test_column_norms():
    assert column_norm_check(Metasurface(3), 0, 0) == 1.0
    assert column_norm_check(RoughGaussian(0.0, 1.0, 1.0), 0, 0) == 1.0
    for eps in (0.05, 0.1, 0.2):
        for s in (0.5, 1.0, 2.0):
            model = RoughGaussian(eps, s, s)
            for l_in in (-5, 0, 5):
                for p_in in range(4):
                    assert column_norm_check(model, l_in, p_in) == pytest.approx(1.0, abs=1e-12)


def test_printed_norm_overshoots_at_low_p():
    model = RoughGaussian(0.1, 1.0, 1.0, norm_convention="printed")
    # 1 - eps^2 + eps^2 * 3.3949068312299065 / 2.2699287983310964
    assert column_norm_check(model, 0, 0) == pytest.approx(1.0049560058171250, rel=1e-12)


def test_column_window_too_small():
    with pytest.raises(TruncationError):
        column_norm_check(RoughGaussian(0.1, 2.0, 2.0), 0, 0, L=2, P=2)
    with pytest.raises(TruncationError):
        column_norm_check(Metasurface(4), 0, 0, L=2)


def test_phase_table_antisymmetric_and_seeded():
    r = RoughGaussian(0.1, 1.0, 1.0, phase_seed=42)
    rng = np.random.default_rng(0)
    a = rng.integers(-5, 6, size=(50, 4))
    a[:, 1::2] = np.abs(a[:, 1::2])
    th_ab = r.phase(a[:, 0], a[:, 1], a[:, 2], a[:, 3])
    th_ba = r.phase(a[:, 2], a[:, 3], a[:, 0], a[:, 1])
    assert np.array_equal(th_ab, -th_ba)
    assert np.any(th_ab != 0)
    again = RoughGaussian(0.1, 1.0, 1.0, phase_seed=42).phase(a[:, 0], a[:, 1], a[:, 2], a[:, 3])
    assert np.array_equal(th_ab, again)
    assert np.all(RoughGaussian(0.1, 1.0, 1.0).phase(1, 0, 2, 0) == 0)


def test_random_phases_keep_magnitudes():
    plain = RoughGaussian(0.1, 1.0, 1.0)
    phased = RoughGaussian(0.1, 1.0, 1.0, phase_seed=7)
    ls, ps = np.meshgrid(np.arange(-4, 5), np.arange(0, 4), indexing="ij")
    assert np.allclose(np.abs(scatter_coeff(plain, ls, ps, 1, 1)), np.abs(scatter_coeff(phased, ls, ps, 1, 1)))


@settings(max_examples=30, deadline=None)
@given(st.floats(1e-4, 0.2))
def test_epsilon_continuity(eps):
    model = RoughGaussian(eps, 1.0, 1.0)
    ls, ps = np.meshgrid(np.arange(-6, 7), np.arange(0, 7), indexing="ij")
    c = scatter_coeff(model, ls, ps, 0, 2)
    mirror = np.where((ls == 0) & (ps == 2), -1.0, 0.0)
    # distance to the perfect mirror shrinks linearly with eps
    assert np.max(np.abs(c - mirror)) <= eps


def test_scattering_table_rows():
    rows = scattering_table(Metasurface(1), range(-1, 2), range(0, 2))
    assert all(c == -1 and lo == li + 1 and po == pi for lo, po, li, pi, c in rows)
    assert len(rows) == 4


def test_negative_radial_index():
    with pytest.raises(DomainError):
        scatter_coeff(Metasurface(1), 0, -1, 0, 0)


# ------------------------------------------------------------ height fields

def test_constant_height():
    h0 = 1e-3 / K
    f = HeightField.constant(h0)
    c = height_field_coeffs(f, GEOM, K, 0, 0, 0, 0)
    assert c == pytest.approx(-1 - 2j * K * h0, rel=1e-12)
    for lo, po in ((1, 0), (0, 1), (-2, 1)):
        assert abs(height_field_coeffs(f, GEOM, K, lo, po, 0, 0)) < 1e-12


def test_rotationally_symmetric_height():
    h0 = 1e-3 / K
    f = HeightField(lambda r, phi: h0 * np.exp(-(r / 1e-3) ** 2) + 0 * phi, h0, "radial bump")
    for dl in (1, -1, 2, 3):
        for p_out in (0, 1):
            v, _ = height_overlap(f, GEOM, dl, p_out, 0, 0)
            assert abs(v) < 1e-8 * h0
    # the radial-only field still couples p at fixed l
    assert abs(height_overlap(f, GEOM, 0, 1, 0, 0)[0]) > 1e-3 * h0


def test_cos_phi_height_couples_unit_shift_only():
    h0 = 1e-3 / K
    f = HeightField(lambda r, phi: h0 * np.cos(phi), h0 / math.sqrt(2), "cos phi")
    for l_in in (-1, 0, 2):
        for dl in (-3, -2, 2, 3):
            assert abs(height_field_coeffs(f, GEOM, K, l_in + dl, 0, l_in, 0)) < 1e-8
        for dl in (-1, 1):
            assert abs(height_field_coeffs(f, GEOM, K, l_in + dl, 0, l_in, 0)) > 1e-8
        assert height_field_coeffs(f, GEOM, K, l_in, 0, l_in, 0) == pytest.approx(-1, abs=1e-12)


def test_height_hermiticity():
    h0 = 1e-3 / K
    f = HeightField(lambda r, phi: h0 * (np.cos(phi) + 0.3 * np.sin(2 * phi)) * (r / 1e-3), h0, "mixed")
    for a, b in (((0, 0), (1, 0)), ((2, 1), (0, 0)), ((-1, 0), (1, 1))):
        hab, _ = height_overlap(f, GEOM, a[0], a[1], b[0], b[1])
        hba, _ = height_overlap(f, GEOM, b[0], b[1], a[0], a[1])
        assert abs(hab - np.conj(hba)) <= 1e-8 * max(1.0, abs(hab))


def test_sampled_grid_matches_function(tmp_path):
    h0 = 1e-3 / K
    r = np.linspace(0, 4e-3, 161)
    phi = np.linspace(0, 2 * np.pi, 256, endpoint=False)
    R, P = np.meshgrid(r, phi, indexing="ij")
    path = tmp_path / "h.csv"
    with open(path, "w") as fh:
        fh.write("r,phi,h\n")
        for rr, pp, hh in zip(R.ravel(), P.ravel(), (h0 * np.cos(P)).ravel()):
            fh.write(f"{float(rr)!r},{float(pp)!r},{float(hh)!r}\n")
    grid = HeightField.from_csv(path)
    exact = HeightField(lambda r, phi: h0 * np.cos(phi), h0, "")
    a, _ = height_overlap(grid, GEOM, 1, 0, 0, 0, tol=1e-6)
    b, _ = height_overlap(exact, GEOM, 1, 0, 0, 0)
    assert abs(a - b) < 1e-3 * abs(b)


def test_weak_scattering_flags():
    big = HeightField.constant(0.5 / K)
    with pytest.raises(DomainError):
        height_field_coeffs(big, GEOM, K, 0, 0, 0, 0, strict=True)
    with pytest.warns(RuntimeWarning):
        height_field_coeffs(big, GEOM, K, 0, 0, 0, 0)
    mid = HeightField.constant(0.05 / K)
    assert not mid.weak_scattering_ok(K)
    with pytest.warns(RuntimeWarning):
        height_field_coeffs(mid, GEOM, K, 0, 0, 0, 0)
    small = HeightField.constant(1e-3 / K)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        height_field_coeffs(small, GEOM, K, 0, 0, 0, 0)
