"""Shoebox image-source simulation and scene rendering.

Axes: x is room depth, y is width, z is height. Walls are ordered
(x=0, x=Lx, y=0, y=Ly, z=0, z=Lz).
"""
from dataclasses import dataclass, replace

import numpy as np
from numba import njit
from scipy.signal import butter, fftconvolve, sosfilt

from .array import SPEED_OF_SOUND
from .dsp import SAMPLE_RATE
from .errors import FormatError, GeometryError, InputError, SamplingError
from .sh import cart_to_sph, sh_matrix

SINC_TAPS = 81
TAIL_FACTOR = 1.5
SABINE_CONSTANT = 24 * np.log(10)
DC_BLOCK_HZ = 20.0


@dataclass(frozen=True)
class Room:
    dims: tuple
    absorption: tuple  # energy absorption per wall

    def contains(self, p, margin=0.0):
        p = np.asarray(p)
        return bool(np.all(p >= margin) and np.all(p <= np.asarray(self.dims) - margin))

    @property
    def volume(self):
        lx, ly, lz = self.dims
        return lx * ly * lz

    @property
    def surface(self):
        lx, ly, lz = self.dims
        return 2 * (lx * ly + lx * lz + ly * lz)


@dataclass(frozen=True)
class Scene:
    sources: np.ndarray
    array_center: np.ndarray
    room: Room | None = None
    t60_target: float | None = None
    id: str = ""
    seed: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "sources", np.atleast_2d(np.asarray(self.sources, dtype=float)))
        object.__setattr__(self, "array_center", np.asarray(self.array_center, dtype=float))

    @property
    def dry(self):
        return self.room is None

    @property
    def n_sources(self):
        return self.sources.shape[0]

    def as_dry(self):
        """Same source/receiver placement without room acoustics."""
        return replace(self, room=None, t60_target=None)

    def to_record(self):
        return {
            "id": self.id,
            "seed": self.seed,
            "dims": None if self.dry else list(self.room.dims),
            "absorption": None if self.dry else list(self.room.absorption),
            "t60": self.t60_target,
            "sources": self.sources.tolist(),
            "array_center": self.array_center.tolist(),
        }

    @classmethod
    def from_record(cls, rec):
        room = None
        if rec.get("dims") is not None:
            room = Room(tuple(rec["dims"]), tuple(rec["absorption"]))
        return cls(np.array(rec["sources"]), np.array(rec["array_center"]), room,
                   rec.get("t60"), rec.get("id", ""), rec.get("seed"))


@dataclass(frozen=True)
class SceneConfig:
    depth_range: tuple = (3.0, 20.0)
    width_range: tuple = (3.0, 12.0)
    height_range: tuple = (3.0, 8.0)
    t60_range: tuple = (0.4, 0.5)
    array_wall_distance: float = 1.0
    source_wall_distance: float = 0.5
    min_source_distance: float = 2.0
    dry_max_source_distance: float = 5.0
    n_sources: int = 1
    dry: bool = False
    max_tries: int = 1000


@dataclass
class ImpulseResponseSet:
    responses: np.ndarray  # [channels, sources, taps]
    sample_rate: int = SAMPLE_RATE

    @property
    def channels(self):
        return self.responses.shape[0]


def sabine_absorption(dims, t60, c=SPEED_OF_SOUND):
    """Uniform energy absorption giving ``t60`` by Sabine's formula."""
    room = Room(tuple(dims), (0.0,) * 6)
    alpha = SABINE_CONSTANT * room.volume / (c * room.surface * t60)
    if not 0 < alpha < 1:
        raise InputError(f"T60 {t60} s is not reachable in a {dims} room")
    return (float(alpha),) * 6


def sample_scene(rng, cfg=SceneConfig(), n_sources=None):
    """Random shoebox scene honouring the wall and source-distance constraints."""
    n_src = cfg.n_sources if n_sources is None else n_sources
    if cfg.dry:
        return _sample_dry(rng, cfg, n_src)
    for _ in range(cfg.max_tries):
        dims = (rng.uniform(*cfg.depth_range), rng.uniform(*cfg.width_range), rng.uniform(*cfg.height_range))
        lo = np.full(3, cfg.array_wall_distance)
        hi = np.asarray(dims) - cfg.array_wall_distance
        if np.any(hi < lo):
            continue
        center = rng.uniform(lo, hi)
        sources = []
        for _ in range(100):
            p = rng.uniform(cfg.source_wall_distance, np.asarray(dims) - cfg.source_wall_distance)
            if np.linalg.norm(p - center) >= cfg.min_source_distance:
                sources.append(p)
                if len(sources) == n_src:
                    break
        if len(sources) < n_src:
            continue
        t60 = rng.uniform(*cfg.t60_range)
        room = Room(tuple(float(d) for d in dims), sabine_absorption(dims, t60))
        return Scene(np.asarray(sources), center, room, float(t60))
    raise SamplingError(f"no feasible scene after {cfg.max_tries} tries")


def _sample_dry(rng, cfg, n_src):
    center = np.zeros(3)
    d = rng.uniform(cfg.min_source_distance, cfg.dry_max_source_distance, n_src)
    v = rng.normal(size=(n_src, 3))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    return Scene(center + d[:, None] * v, center)


def _axis_images(s, length, r0, r1, m_max):
    """Image coordinates and reflection gains along one axis."""
    m = np.arange(-m_max, m_max + 1)
    coord = np.concatenate([s + 2 * m * length, -s + 2 * m * length])
    hits0 = np.concatenate([np.abs(m), np.abs(m - 1)])
    hits1 = np.abs(np.concatenate([m, m]))
    return coord, r0 ** hits0 * r1 ** hits1, hits0 + hits1


def image_sources(room, source, max_order=None, max_distance=None, center=None):
    """Image-source positions, reflection gains and reflection orders.

    Either ``max_order`` bounds the total reflection count, or
    ``max_distance`` bounds the image distance from ``center``.
    """
    if max_order is None and max_distance is None:
        raise InputError("give max_order or max_distance")
    refl = np.sqrt(1.0 - np.asarray(room.absorption))
    axes = []
    for a in range(3):
        length = room.dims[a]
        m_max = max_order if max_order is not None else int(np.ceil(max_distance / (2 * length))) + 1
        if max_order is not None and max_distance is not None:
            m_max = min(m_max, int(np.ceil(max_distance / (2 * length))) + 1)
        axes.append(_axis_images(source[a], length, refl[2 * a], refl[2 * a + 1], m_max))
    (cx, gx, ox), (cy, gy, oy), (cz, gz, oz) = axes
    order = ox[:, None, None] + oy[None, :, None] + oz[None, None, :]
    keep = np.ones(order.shape, bool)
    if max_order is not None:
        keep &= order <= max_order
    if max_distance is not None:
        c = source if center is None else center
        d2 = ((cx - c[0]) ** 2)[:, None, None] + ((cy - c[1]) ** 2)[None, :, None] + ((cz - c[2]) ** 2)[None, None, :]
        keep &= d2 <= max_distance ** 2
    ix, iy, iz = np.nonzero(keep)
    pos = np.stack([cx[ix], cy[iy], cz[iz]], axis=1)
    gain = gx[ix] * gy[iy] * gz[iz]
    return pos, gain, order[ix, iy, iz]


def _sinc_window(t):
    half = (SINC_TAPS + 1) / 2
    return np.sinc(t) * 0.5 * (1 + np.cos(np.pi * t / half))


@njit(cache=True)
def _accumulate(out, tau, amp, weights, half):
    n_taps = out.shape[1]
    step = np.pi / (half + 1.0)
    two_cos = 2.0 * np.cos(step)
    for i in range(tau.size):
        base = int(np.floor(tau[i]))
        frac = tau[i] - base
        s = np.sin(np.pi * frac)
        sign = 1.0 if half % 2 == 0 else -1.0  # (-1)**(-half)
        # window cosines cos(step * (k - frac)) by the Chebyshev recurrence
        c_prev = np.cos(step * (-half - 1 - frac))
        c_cur = np.cos(step * (-half - frac))
        for k in range(-half, half + 1):
            n = base + k
            if 0 <= n < n_taps:
                t = k - frac
                if t == 0.0:
                    v = 1.0
                else:
                    # sin(pi (k - frac)) = -(-1)**k sin(pi frac)
                    v = -sign * s / (np.pi * t)
                val = amp[i] * v * 0.5 * (1.0 + c_cur)
                for c in range(weights.shape[0]):
                    out[c, n] += val * weights[c, i]
            sign = -sign
            c_next = two_cos * c_cur - c_prev
            c_prev = c_cur
            c_cur = c_next


def taps_from_paths(distances, gains, n_taps, fs=SAMPLE_RATE, c=SPEED_OF_SOUND, weights=None):
    """Sum fractional-delay impulses g/(4 pi d) at d/c for every path.

    Each path is spread over an 81-tap Hann-windowed sinc. ``weights`` of
    shape (channels, paths) scales each path per output channel; the result
    then has shape (channels, n_taps).
    """
    distances = np.ascontiguousarray(distances, dtype=float)
    amp = np.asarray(gains, dtype=float) / (4 * np.pi * distances)
    w = np.ones((1, distances.size)) if weights is None else np.ascontiguousarray(np.atleast_2d(weights), dtype=float)
    out = np.zeros((w.shape[0], n_taps))
    _accumulate(out, distances / c * fs, amp, w, SINC_TAPS // 2)
    return out if weights is not None else out[0]


def taps_from_paths_reference(distances, gains, n_taps, fs=SAMPLE_RATE, c=SPEED_OF_SOUND):
    """Vectorized twin of :func:`taps_from_paths` for one channel, used to cross-check it."""
    distances = np.asarray(distances, dtype=float)
    amp = np.asarray(gains, dtype=float) / (4 * np.pi * distances)
    tau = distances / c * fs
    half = SINC_TAPS // 2
    idx = np.floor(tau).astype(np.int64)[:, None] + np.arange(-half, half + 1)[None, :]
    vals = amp[:, None] * _sinc_window(idx - tau[:, None])
    ok = (idx >= 0) & (idx < n_taps)
    return np.bincount(idx[ok], weights=vals[ok], minlength=n_taps)


def _dc_block(scene, taps, fs):
    # all-positive image amplitudes pile up a slowly decaying DC offset
    if scene.dry:
        return taps
    return sosfilt(butter(2, DC_BLOCK_HZ, "high", fs=fs, output="sos"), taps, axis=-1)


def rir_length(scene, fs=SAMPLE_RATE, c=SPEED_OF_SOUND, margin=0.2):
    """Tap count, a function of the scene only so all receivers align."""
    if scene.dry:
        d = np.max(np.linalg.norm(scene.sources - scene.array_center, axis=1)) + margin
        return int(np.ceil(d / c * fs)) + SINC_TAPS + 1
    return int(np.ceil(TAIL_FACTOR * scene.t60_target * fs)) + SINC_TAPS + 1


def _paths(scene, source_index, max_order=None, c=SPEED_OF_SOUND):
    src = scene.sources[source_index]
    if scene.dry:
        return src[None, :], np.ones(1)
    if max_order is None:
        max_dist = TAIL_FACTOR * scene.t60_target * c + 1.0
        pos, gain, _ = image_sources(scene.room, src, max_distance=max_dist, center=scene.array_center)
    else:
        pos, gain, _ = image_sources(scene.room, src, max_order=max_order)
    return pos, gain


def _check_receiver(scene, receiver):
    if not scene.dry and not scene.room.contains(receiver):
        raise GeometryError(f"receiver {receiver} is outside the room")


def ism_rir(scene, source_index, receiver, max_order=None, fs=SAMPLE_RATE, c=SPEED_OF_SOUND, n_taps=None):
    """Pressure impulse response from one source to one omni receiver."""
    receiver = np.asarray(receiver, dtype=float)
    _check_receiver(scene, receiver)
    if max_order is not None and max_order < 0:
        raise InputError("max_order must be >= 0")
    pos, gain = _paths(scene, source_index, max_order, c)
    d = np.linalg.norm(pos - receiver, axis=1)
    return _dc_block(scene, taps_from_paths(d, gain, n_taps or rir_length(scene, fs, c), fs, c), fs)


def reference_ambisonic_rirs(scene, order=1, convention="SN3D", fs=SAMPLE_RATE, c=SPEED_OF_SOUND, max_order=None):
    """Ideal Ambisonic RIRs at the array centre, [(N+1)**2, sources, taps]."""
    n_taps = rir_length(scene, fs, c)
    out = []
    for s in range(scene.n_sources):
        pos, gain = _paths(scene, s, max_order, c)
        azi, ele, d = cart_to_sph(pos - scene.array_center)
        y = sh_matrix(azi, ele, order, convention)
        out.append(_dc_block(scene, taps_from_paths(d, gain, n_taps, fs, c, weights=y), fs))
    return ImpulseResponseSet(np.stack(out, axis=1), fs)


def array_rirs(scene, g, fs=SAMPLE_RATE, c=SPEED_OF_SOUND, max_order=None):
    """Omni RIRs at every mic of ``g`` placed around the array centre, [Q, sources, taps]."""
    n_taps = rir_length(scene, fs, c)
    mics = scene.array_center + g.coords
    for m in mics:
        _check_receiver(scene, m)
    out = np.zeros((g.q, scene.n_sources, n_taps))
    for s in range(scene.n_sources):
        pos, gain = _paths(scene, s, max_order, c)
        for q, m in enumerate(mics):
            out[q, s] = _dc_block(scene, taps_from_paths(np.linalg.norm(pos - m, axis=1), gain, n_taps, fs, c), fs)
    return ImpulseResponseSet(out, fs)


def convolve_sources(rirs, sources):
    """Mix sources through [channels, sources, taps] responses."""
    if len(sources) != rirs.responses.shape[1]:
        raise FormatError(f"{len(sources)} signals for {rirs.responses.shape[1]} sources")
    length = max(len(s) for s in sources) + rirs.responses.shape[2] - 1
    out = np.zeros((rirs.channels, length))
    for s, sig in enumerate(sources):
        sig = np.asarray(sig, dtype=float)
        if not np.any(sig):
            continue
        y = fftconvolve(rirs.responses[:, s, :], sig[None, :], axes=-1)
        out[:, :y.shape[1]] += y
    return out


def render_scene(scene, g, sources, order=1, sample_rate=SAMPLE_RATE, convention="SN3D", rirs=None):
    """Array signals [Q, n] and reference Ambisonics [(N+1)**2, n] for one scene.

    ``rirs`` may pass precomputed (array, reference) response sets.
    """
    if sample_rate != SAMPLE_RATE and rirs is None:
        raise FormatError(f"sources at {sample_rate} Hz, simulation runs at {SAMPLE_RATE} Hz")
    if len(sources) != scene.n_sources:
        raise FormatError(f"scene has {scene.n_sources} sources, got {len(sources)} signals")
    if rirs is None:
        arr = array_rirs(scene, g, sample_rate)
        ref = reference_ambisonic_rirs(scene, order, convention, sample_rate)
    else:
        arr, ref = rirs
        if arr.sample_rate != sample_rate or ref.sample_rate != sample_rate:
            raise FormatError("RIR and source sample rates differ")
    return convolve_sources(arr, sources), convolve_sources(ref, sources)


def schroeder_t60(rir, fs=SAMPLE_RATE, hi_db=-5.0, lo_db=-35.0):
    """T60 from a straight-line fit to the backward-integrated energy decay."""
    e = np.cumsum(np.asarray(rir, dtype=float)[::-1] ** 2)[::-1]
    edc = 10 * np.log10(e / e[0] + 1e-300)
    sel = np.nonzero((edc <= hi_db) & (edc >= lo_db))[0]
    if sel.size < 2:
        raise InputError("decay does not span the fit range")
    t = sel / fs
    slope, _ = np.polyfit(t, edc[sel], 1)
    return -60.0 / slope
