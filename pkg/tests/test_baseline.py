import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ambinet.array import ArrayGeometry, atf_matrix, sample_geometry
from ambinet.baseline import StaticEncoder, _svd_solve, apply_static_encoder, design_ls_encoder
from ambinet.dsp import SpectrogramTensor, bin_frequencies, stft
from ambinet.errors import FormatError, InputError, NumericalError
from ambinet.sh import sh_matrix, uniform_grid

FREQS = bin_frequencies()


def svd_oracle(g, order, beta, grid):
    """Regularized pseudo-inverse through an explicit SVD, one bin at a time."""
    y = sh_matrix(grid.azimuth, grid.elevation, order)
    h = atf_matrix(g, FREQS, grid.azimuth, grid.elevation)
    out = []
    for f in range(len(FREQS)):
        u, s, vh = np.linalg.svd(h[f], full_matrices=False)
        keep = s > (s[0] * max(h[f].shape) * np.finfo(float).eps if beta == 0 else 0)
        gain = np.where(keep, s / (s ** 2 + beta ** 2 + (~keep)), 0.0)
        out.append(y @ vh.conj().T @ np.diag(gain) @ u.conj().T)
    return np.array(out)


def test_single_omni_is_unity():
    enc = design_ls_encoder(ArrayGeometry([[0.0, 0.0, 0.0]]), order=0, beta=0.0)
    np.testing.assert_allclose(enc.matrices, 1.0, atol=1e-12)
    assert enc.matrices.shape == (513, 1, 1)


def test_huge_beta_vanishes():
    enc = design_ls_encoder(sample_geometry(np.random.default_rng(0), 5), beta=1e6)
    assert np.abs(enc.matrices).max() < 1e-6


@pytest.mark.parametrize("beta", [0.0, 0.01, 0.1])
def test_matches_svd_oracle(beta):
    grid = uniform_grid(1008)
    g = sample_geometry(np.random.default_rng(11), 5)
    enc = design_ls_encoder(g, 1, beta, grid=grid)
    ref = svd_oracle(g, 1, beta, grid)
    rel = np.linalg.norm(enc.matrices - ref, axis=(1, 2)) / np.linalg.norm(ref, axis=(1, 2))
    assert rel.max() < 1e-6


def test_internal_svd_path_agrees_with_cholesky():
    grid = uniform_grid(200)
    g = sample_geometry(np.random.default_rng(1), 4)
    y = sh_matrix(grid.azimuth, grid.elevation, 1)
    h = atf_matrix(g, FREQS[1::50], grid.azimuth, grid.elevation)
    enc = design_ls_encoder(g, 1, 0.05, grid=grid, freqs=FREQS[1::50])
    np.testing.assert_allclose(enc.matrices, _svd_solve(y, h, 0.05), rtol=1e-8, atol=1e-10)


def test_degenerate_geometry_without_regularization():
    coincident = ArrayGeometry([[0.01, 0, 0], [0.01, 0, 0], [-0.05, 0.02, 0.0]])
    with pytest.raises(NumericalError):
        design_ls_encoder(coincident, beta=0.0)
    assert np.all(np.isfinite(design_ls_encoder(coincident, beta=0.01).matrices))


def test_preconditions():
    g = sample_geometry(np.random.default_rng(0), 5)
    with pytest.raises(InputError):
        design_ls_encoder(g, beta=-1)
    with pytest.raises(InputError):
        design_ls_encoder(g, order=1, grid=uniform_grid(3))


def test_monotone_in_beta():
    g = sample_geometry(np.random.default_rng(2), 5)
    grid = uniform_grid(300)
    norms = [np.linalg.norm(design_ls_encoder(g, 1, b, grid=grid).matrices, axis=(1, 2)) for b in (0.0, 0.01, 0.1, 1.0)]
    for a, b in zip(norms, norms[1:]):
        assert np.all(b <= a * (1 + 1e-9))


def test_deterministic():
    g = sample_geometry(np.random.default_rng(3), 5)
    a, b = design_ls_encoder(g), design_ls_encoder(g)
    np.testing.assert_array_equal(a.matrices, b.matrices)


def static(mats):
    return StaticEncoder(np.asarray(mats), FREQS, 0, 0.0)


def test_apply_examples():
    rng = np.random.default_rng(0)
    x = SpectrogramTensor(rng.standard_normal((3, 513, 7)) + 1j * rng.standard_normal((3, 513, 7)))
    sel = np.zeros((513, 1, 3), complex)
    sel[:, 0, 0] = 1
    np.testing.assert_array_equal(apply_static_encoder(static(sel), x).data[0], x.data[0])
    assert not apply_static_encoder(static(sel), x.like(np.zeros_like(x.data))).data.any()


def test_apply_matches_loop_oracle():
    rng = np.random.default_rng(1)
    mats = rng.standard_normal((513, 4, 5)) + 1j * rng.standard_normal((513, 4, 5))
    x = SpectrogramTensor(rng.standard_normal((5, 513, 6)) + 1j * rng.standard_normal((5, 513, 6)))
    out = apply_static_encoder(StaticEncoder(mats, FREQS, 1, 0.0), x).data
    ref = np.zeros((4, 513, 6), complex)
    for f in range(513):
        for t in range(6):
            for c in range(4):
                ref[c, f, t] = sum(mats[f, c, q] * x.data[q, f, t] for q in range(5))
    np.testing.assert_allclose(out, ref, atol=1e-12)


def test_apply_shape_mismatch():
    x = SpectrogramTensor(np.zeros((4, 513, 2), complex))
    with pytest.raises(FormatError):
        apply_static_encoder(static(np.zeros((513, 1, 5))), x)


def test_save_load(tmp_path):
    enc = design_ls_encoder(sample_geometry(np.random.default_rng(4), 5), beta=0.02)
    enc.save(tmp_path / "e.enc")
    back = StaticEncoder.load(tmp_path / "e.enc")
    np.testing.assert_array_equal(back.matrices, enc.matrices)
    assert (back.order, back.beta, back.q, back.sample_rate) == (1, 0.02, 5, 24000)
    (tmp_path / "bad.enc").write_bytes(b"nonsense")
    with pytest.raises(FormatError):
        StaticEncoder.load(tmp_path / "bad.enc")


@settings(max_examples=10)
@given(st.integers(0, 2 ** 31))
def test_plane_wave_low_band_coherent(seed):
    from ambinet.metrics import coherence
    g = sample_geometry(np.random.default_rng(seed), 5)
    grid = uniform_grid(1008)
    enc = design_ls_encoder(g, grid=grid)
    d = seed % 1008
    s = stft(np.random.default_rng(seed).standard_normal(24000))
    h = atf_matrix(g, FREQS, grid.azimuth[d:d + 1], grid.elevation[d:d + 1])[:, :, 0]
    x = s.like(h.T[:, :, None] * s.data)
    b = s.like(sh_matrix(grid.azimuth[d:d + 1], grid.elevation[d:d + 1], 1)[:, :, None] * s.data)
    c = coherence(b, apply_static_encoder(enc, x))
    band = (c.bins >= 200) & (c.bins <= 800)
    assert c.values[band].mean() >= 0.95
