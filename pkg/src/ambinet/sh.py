"""Real spherical harmonics in ACN order and near-uniform direction grids.

Angles are azimuth in [0, 2pi) measured from +x towards +y, and elevation in
[-pi/2, pi/2] measured from the horizontal plane. Associated Legendre
functions are used without the Condon-Shortley phase, so the first-order
channels are (y, z, x) in ACN order.
"""
from dataclasses import dataclass
from math import factorial

import numpy as np
from scipy.special import lpmv

from .errors import ConfigurationError

MAX_ORDER = 8
CONVENTIONS = ("SN3D", "N3D")


@dataclass(frozen=True)
class Direction:
    azimuth: float
    elevation: float

    def unit_vector(self):
        return unit_vector(self.azimuth, self.elevation)


@dataclass(frozen=True)
class DirectionGrid:
    azimuth: np.ndarray
    elevation: np.ndarray
    weights: np.ndarray

    def __len__(self):
        return len(self.weights)

    @property
    def directions(self):
        return [Direction(float(a), float(e)) for a, e in zip(self.azimuth, self.elevation)]

    def unit_vectors(self):
        return unit_vector(self.azimuth, self.elevation)


def unit_vector(azimuth, elevation):
    """Cartesian unit vector(s), shape (..., 3)."""
    azimuth = np.asarray(azimuth, dtype=float)
    elevation = np.asarray(elevation, dtype=float)
    ce = np.cos(elevation)
    return np.stack([ce * np.cos(azimuth), ce * np.sin(azimuth), np.sin(elevation)], axis=-1)


def cart_to_sph(vectors):
    """Azimuth in [0, 2pi), elevation and radius of Cartesian vectors."""
    v = np.asarray(vectors, dtype=float)
    r = np.linalg.norm(v, axis=-1)
    azi = np.mod(np.arctan2(v[..., 1], v[..., 0]), 2 * np.pi)
    ele = np.arcsin(np.clip(v[..., 2] / np.where(r > 0, r, 1.0), -1.0, 1.0))
    return azi, ele, r


def acn(n, m):
    return n * (n + 1) + m


def acn_to_nm(index):
    n = int(np.floor(np.sqrt(index)))
    return n, index - n * (n + 1)


def n_channels(order):
    return (order + 1) ** 2


def channel_orders(order):
    """SH order n of every ACN channel up to ``order``."""
    return np.array([acn_to_nm(i)[0] for i in range(n_channels(order))])


def _check(order, convention):
    if not 0 <= order <= MAX_ORDER:
        raise ConfigurationError(f"SH order must be in 0..{MAX_ORDER}, got {order}")
    if convention not in CONVENTIONS:
        raise ConfigurationError(f"unknown SH normalization {convention!r}")


def sh_matrix(azimuth, elevation, order, convention="SN3D"):
    """Real SH values for many directions.

    Parameters
    ----------
    azimuth, elevation : array_like, shape (D,)
        Directions in radians.
    order : int
        Maximum SH order N.
    convention : {"SN3D", "N3D"}

    Returns
    -------
    ndarray, shape ((N+1)**2, D)
    """
    _check(order, convention)
    azi = np.atleast_1d(np.asarray(azimuth, dtype=float))
    sin_ele = np.sin(np.atleast_1d(np.asarray(elevation, dtype=float)))
    out = np.empty((n_channels(order), azi.size))
    for n in range(order + 1):
        for m in range(-n, n + 1):
            am = abs(m)
            # lpmv carries the Condon-Shortley phase; cancel it
            leg = (-1) ** am * lpmv(am, n, sin_ele)
            norm = np.sqrt((2.0 - (am == 0)) * factorial(n - am) / factorial(n + am))
            if convention == "N3D":
                norm *= np.sqrt(2 * n + 1)
            trig = np.cos(am * azi) if m >= 0 else np.sin(am * azi)
            out[acn(n, m)] = norm * leg * trig
    return out


def sh_eval(direction, order, convention="SN3D"):
    """SH vector of length (N+1)**2 for one direction."""
    return sh_matrix(direction.azimuth, direction.elevation, order, convention)[:, 0]


def uniform_grid(count):
    """Spherical Fibonacci lattice with equal weights summing to 4pi."""
    if count < 1:
        raise ConfigurationError("grid needs at least one direction")
    i = np.arange(count, dtype=float) + 0.5
    golden = (1.0 + np.sqrt(5.0)) / 2.0
    elevation = np.arcsin(1.0 - 2.0 * i / count)
    azimuth = np.mod(2.0 * np.pi * i / golden, 2.0 * np.pi)
    weights = np.full(count, 4.0 * np.pi / count)
    return DirectionGrid(azimuth, elevation, weights)
