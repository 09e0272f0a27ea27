import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ambinet.array import ArrayGeometry, sample_geometry
from ambinet.errors import FormatError, GeometryError, SamplingError
from ambinet.room import (Room, Scene, SceneConfig, array_rirs, image_sources, ism_rir, reference_ambisonic_rirs,
                          render_scene, rir_length, sabine_absorption, sample_scene, schroeder_t60, taps_from_paths,
                          taps_from_paths_reference)
from ambinet.sh import cart_to_sph, sh_matrix

FS, C = 24000, 343.0


def dry_scene(*sources):
    return Scene(np.array(sources, dtype=float), np.zeros(3))


def small_room(t60=0.3, src=(1.5, 2.0, 1.2), center=(3.0, 3.5, 2.0)):
    dims = (4.0, 5.0, 3.0)
    return Scene([src], center, Room(dims, sabine_absorption(dims, t60)), t60)


def test_sample_scene_default():
    for seed in range(20):
        s = sample_scene(np.random.default_rng(seed))
        lx, ly, lz = s.room.dims
        assert 3 <= lx <= 20 and 3 <= ly <= 12 and 3 <= lz <= 8
        assert 0.4 <= s.t60_target <= 0.5
        assert np.all(s.array_center >= 1.0) and np.all(s.array_center <= np.array(s.room.dims) - 1.0)
        assert np.all(np.linalg.norm(s.sources - s.array_center, axis=1) >= 2.0)


def test_sample_scene_dry_and_deterministic():
    s = sample_scene(np.random.default_rng(0), SceneConfig(dry=True, n_sources=2))
    assert s.dry and s.room is None and s.t60_target is None and s.n_sources == 2
    assert s.to_record()["dims"] is None
    a = sample_scene(np.random.default_rng(5), n_sources=2)
    b = sample_scene(np.random.default_rng(5), n_sources=2)
    assert a.to_record() == b.to_record()
    assert Scene.from_record(a.to_record()).to_record() == a.to_record()


def test_sample_scene_infeasible():
    with pytest.raises(SamplingError):
        sample_scene(np.random.default_rng(0), SceneConfig(depth_range=(1.5, 1.8), max_tries=20))


def test_dry_direct_path():
    scene = dry_scene([3.0, 0.0, 0.0])
    h = ism_rir(scene, 0, np.zeros(3))
    tau = 3.0 / C * FS
    assert np.argmax(np.abs(h)) == round(tau)
    np.testing.assert_allclose(h, taps_from_paths_reference([3.0], [1.0], len(h)), atol=1e-15)
    # a windowed sinc integrates to ~1, so the tap sum recovers the 1/(4 pi d) gain
    assert h.sum() == pytest.approx(1 / (4 * np.pi * 3.0), rel=1e-2)


def test_first_order_images():
    pos, gain, order = image_sources(Room((4.0, 5.0, 3.0), (0.3,) * 6), np.array([1.0, 2.0, 1.5]), max_order=1)
    assert len(pos) == 7
    assert sorted(order.tolist()) == [0] + [1] * 6
    np.testing.assert_allclose(sorted(gain), [np.sqrt(0.7)] * 6 + [1.0])


def test_receiver_outside_room():
    scene = small_room()
    with pytest.raises(GeometryError):
        ism_rir(scene, 0, np.array([10.0, 1.0, 1.0]), max_order=1)
    g = ArrayGeometry([[0, 0, 0], [-0.1, 0, 0]])
    corner = Scene(scene.sources, [0.05, 2.0, 1.0], scene.room, scene.t60_target)
    with pytest.raises(GeometryError):
        array_rirs(corner, g, max_order=1)


def test_taps_numba_matches_reference():
    rng = np.random.default_rng(0)
    d = rng.uniform(1, 20, 300)
    gain = rng.uniform(0.1, 1, 300)
    np.testing.assert_allclose(taps_from_paths(d, gain, 2000), taps_from_paths_reference(d, gain, 2000), atol=1e-15)


def test_reverberant_t60():
    dims = (5.0, 6.0, 4.0)
    scene = Scene([[1.0, 1.5, 1.2]], [3.0, 3.5, 2.0], Room(dims, sabine_absorption(dims, 0.45)), 0.45)
    t60 = schroeder_t60(ism_rir(scene, 0, scene.array_center))
    assert 0.8 * 0.45 <= t60 <= 1.2 * 0.45


def test_reference_examples():
    u = np.array([0.6, -0.48, 0.64])
    scene = dry_scene(3.0 * u)
    ref = reference_ambisonic_rirs(scene, 1).responses[:, 0]
    omni = ism_rir(scene, 0, np.zeros(3))
    az, el, _ = cart_to_sph(u[None])
    y = sh_matrix(az, el, 1)[:, 0]
    np.testing.assert_allclose(ref, y[:, None] * omni[None], atol=1e-15)

    up = reference_ambisonic_rirs(dry_scene([0.0, 0.0, 2.5]), 1).responses[:, 0]
    assert np.abs(up[1]).max() < 1e-15 and np.abs(up[3]).max() < 1e-15
    np.testing.assert_allclose(up[2], up[0], atol=1e-15)


def test_reference_omni_channel_equals_pressure():
    scene = small_room()
    ref = reference_ambisonic_rirs(scene, 1)
    np.testing.assert_allclose(ref.responses[0, 0], ism_rir(scene, 0, scene.array_center), rtol=1e-12, atol=1e-16)


def test_array_rirs_examples():
    u = np.array([0.0, 1.0, 0.0])
    scene = dry_scene(3.0 * u)
    g = ArrayGeometry([[0, 0, 0], [0.0, 0.05, 0.0], [0.04, -0.03, 0.02]])
    arr = array_rirs(scene, g).responses[:, 0]
    np.testing.assert_array_equal(arr[0], ism_rir(scene, 0, np.zeros(3)))
    # mic 1 sits 5 cm closer to the source; the arrival lead is checked by cross-spectrum phase
    f = np.fft.rfftfreq(4096, 1 / FS)
    spec = np.fft.rfft(arr, 4096)
    band = (f > 100) & (f < 2000)
    for q in (1, 2):
        lead = (3.0 - np.linalg.norm(3.0 * u - g.coords[q])) / C
        phase = np.unwrap(np.angle(spec[q, band] / spec[0, band]))
        np.testing.assert_allclose(phase, 2 * np.pi * f[band] * lead, atol=2e-3)
    assert np.all(np.isfinite(arr))


def test_array_rirs_bounded_in_room():
    scene = small_room()
    g = sample_geometry(np.random.default_rng(2), 5)
    arr = array_rirs(scene, g, max_order=2).responses
    d_min = np.min(np.linalg.norm(scene.array_center + g.coords - scene.sources[0], axis=1))
    # the DC-blocking filter may overshoot a raw tap slightly
    assert np.abs(arr).max() <= 1.05 / (4 * np.pi * d_min)


def test_render_examples():
    rng = np.random.default_rng(4)
    scene = dry_scene([2.0, 1.0, -1.0], [-1.5, 2.5, 0.5])
    g = ArrayGeometry([[0, 0, 0], [0.05, 0.02, 0.0]])
    s1, s2 = rng.standard_normal(2400), rng.standard_normal(2000)
    x, b = render_scene(scene, g, [s1, s2])
    np.testing.assert_allclose(x[0], b[0], atol=1e-12)
    xa, ba = render_scene(scene, g, [s1, np.zeros(2000)])
    xb, bb = render_scene(scene, g, [np.zeros(2400), s2])
    np.testing.assert_allclose(x, xa + xb, atol=1e-9 * np.abs(x).max())
    np.testing.assert_allclose(b, ba + bb, atol=1e-9 * np.abs(b).max())
    xz, bz = render_scene(scene, g, [np.zeros(100), np.zeros(100)])
    assert not xz.any() and not bz.any()


def test_render_errors():
    scene = dry_scene([2.0, 1.0, -1.0])
    g = ArrayGeometry([[0, 0, 0], [0.05, 0.02, 0.0]])
    with pytest.raises(FormatError):
        render_scene(scene, g, [np.ones(10)], sample_rate=48000)
    with pytest.raises(FormatError):
        render_scene(scene, g, [np.ones(10), np.ones(10)])


def test_reciprocity_of_delay():
    near = ism_rir(dry_scene([2.0, 0, 0]), 0, np.zeros(3), n_taps=800)
    far = ism_rir(dry_scene([4.0, 0, 0]), 0, np.zeros(3), n_taps=800)
    t_near, t_far = 2.0 / C * FS, 4.0 / C * FS
    assert np.argmax(far) == round(t_far) and np.argmax(near) == round(t_near)
    assert far.sum() == pytest.approx(near.sum() / 2, rel=1e-3)


@given(st.floats(2.0, 5.0), st.floats(0, 2 * np.pi), st.floats(-1.4, 1.4))
def test_rir_length_covers_direct_path(d, az, el):
    src = d * np.array([np.cos(el) * np.cos(az), np.cos(el) * np.sin(az), np.sin(el)])
    scene = dry_scene(src)
    assert rir_length(scene) > d / C * FS + 40
