"""Microphone array geometries, coordinate quantization and ideal-omni ATFs."""
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .errors import InputError, RangeError, SamplingError
from .sh import unit_vector

SPEED_OF_SOUND = 343.0
GRID_STEPS = 24
D_MIN = 0.02
D_MAX = 0.18


@dataclass(frozen=True)
class ArrayGeometry:
    """Microphone positions in meters relative to the array origin, shape (Q, 3)."""

    coords: np.ndarray
    id: str = ""
    seed: int | None = None

    def __post_init__(self):
        c = np.array(self.coords, dtype=float)
        if c.ndim != 2 or c.shape[1] != 3:
            raise InputError(f"coords must be (Q, 3), got {c.shape}")
        c.setflags(write=False)
        object.__setattr__(self, "coords", c)

    @property
    def q(self):
        return self.coords.shape[0]

    def pairwise_distances(self):
        return np.array([np.linalg.norm(a - b) for a, b in combinations(self.coords, 2)])

    def to_record(self, d_max=D_MAX):
        return {
            "id": self.id,
            "seed": self.seed,
            "coords": self.coords.tolist(),
            "quantized": quantize_geometry(self, d_max).tolist(),
        }

    @classmethod
    def from_record(cls, rec):
        return cls(np.array(rec["coords"]), id=rec["id"], seed=rec.get("seed"))


def sample_geometry(rng, q, d_min=D_MIN, d_max=D_MAX, max_tries=10_000):
    """Rejection-sample Q mics inside the cube of side ``d_max`` centred on the origin.

    Mics are placed one at a time; a candidate is rejected if it violates the
    distance bounds against any already placed mic. If placement stalls, the
    whole array is restarted.
    """
    if q < 2:
        raise InputError("an array needs at least two microphones")
    if not 0 < d_min < d_max:
        raise InputError("need 0 < d_min < d_max")
    half = d_max / 2
    tries = 0
    while tries < max_tries:
        pts = [rng.uniform(-half, half, 3)]
        while len(pts) < q and tries < max_tries:
            tries += 1
            cand = rng.uniform(-half, half, 3)
            d = np.linalg.norm(np.asarray(pts) - cand, axis=1)
            if np.all(d >= d_min) and np.all(d <= d_max):
                pts.append(cand)
            elif tries % 200 == 0:
                break
        if len(pts) == q:
            return ArrayGeometry(np.asarray(pts))
    raise SamplingError(f"no {q}-mic geometry with distances in [{d_min}, {d_max}] after {max_tries} tries")


def quantize_geometry(g, d_max=D_MAX):
    """Integer grid indices 0..24 per axis for a geometry inside the cube of side ``d_max``."""
    coords = g.coords if isinstance(g, ArrayGeometry) else np.asarray(g, dtype=float)
    half = d_max / 2
    if np.any(np.abs(coords) > half * (1 + 1e-9)):
        raise RangeError(f"coordinates outside [-{half}, {half}]")
    step = d_max / GRID_STEPS
    idx = np.rint((coords + half) / step).astype(int)
    return np.clip(idx, 0, GRID_STEPS)


def dequantize_geometry(indices, d_max=D_MAX):
    idx = np.asarray(indices)
    if np.any(idx < 0) or np.any(idx > GRID_STEPS):
        raise RangeError("quantized index outside 0..24")
    return -d_max / 2 + idx * (d_max / GRID_STEPS)


def atf(g, freq, direction, c=SPEED_OF_SOUND):
    """Plane-wave transfer function of each mic, shape (Q,)."""
    u = direction.unit_vector()
    return np.exp(1j * 2 * np.pi * freq / c * (g.coords @ u))


def atf_matrix(g, freqs, azimuth, elevation, c=SPEED_OF_SOUND):
    """ATFs over frequencies and directions, shape (F, Q, D)."""
    u = unit_vector(azimuth, elevation)  # (D, 3)
    proj = g.coords @ u.T  # (Q, D)
    k = 2 * np.pi * np.asarray(freqs, dtype=float) / c
    return np.exp(1j * k[:, None, None] * proj[None])
