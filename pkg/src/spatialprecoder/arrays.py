"""Antenna array geometry and its aperture mode decomposition.

A planar antenna array confined to a disk of radius ``r`` (in wavelengths)
excites a finite number ``2N + 1`` of effective circular-harmonic modes.  Each
antenna couples to mode ``n`` through a Bessel-weighted phase factor, so the
whole array is summarised by a deterministic configuration matrix whose rows
are antennas and whose columns are modes.  The singular values of this matrix
are the eigen-mode gains that drive the precoder design downstream.

All lengths are expressed in carrier wavelengths; angles are in radians.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import jv

__all__ = [
    "AntennaArray",
    "ApertureBasis",
    "mode_count",
    "smf",
    "config_matrix",
    "make_ula",
    "make_uca",
]


def _wrap_angle(phi):
    """Wrap angles to [-pi, pi)."""
    return np.mod(np.asarray(phi, dtype=float) + np.pi, 2.0 * np.pi) - np.pi


@dataclass(frozen=True)
class AntennaArray:
    """Antenna positions in polar coordinates relative to the array origin.

    Parameters
    ----------
    radii : ndarray
        Distance of each antenna from the origin, in wavelengths (>= 0).
    azimuths : ndarray
        Azimuth of each antenna in radians, stored wrapped to [-pi, pi).
    """

    radii: np.ndarray
    azimuths: np.ndarray

    def __init__(self, radii, azimuths):
        radii = np.atleast_1d(np.asarray(radii, dtype=float))
        azimuths = _wrap_angle(np.atleast_1d(azimuths))
        if radii.size == 0:
            raise ValueError("array must contain at least one antenna")
        if radii.shape != azimuths.shape:
            raise ValueError("radii and azimuths must have the same length")
        if np.any(radii < 0):
            raise ValueError("antenna radii must be non-negative")
        object.__setattr__(self, "radii", radii)
        object.__setattr__(self, "azimuths", azimuths)

    @property
    def n_antennas(self) -> int:
        return self.radii.size

    @property
    def aperture_radius(self) -> float:
        """Radius of the smallest origin-centred disk containing the array."""
        return float(self.radii.max())

    def rotated(self, angle) -> "AntennaArray":
        """Return a copy with every antenna rotated by ``angle`` radians."""
        return AntennaArray(self.radii, self.azimuths + angle)

    def cartesian(self) -> np.ndarray:
        """Antenna positions as an (n, 2) array of x/y coordinates."""
        return np.stack(
            [self.radii * np.cos(self.azimuths), self.radii * np.sin(self.azimuths)],
            axis=1,
        )


@dataclass(frozen=True)
class ApertureBasis:
    """Configuration matrix of an array together with its mode order.

    ``matrix`` has one row per antenna and ``2 * mode_order + 1`` columns,
    ordered from mode ``-N`` to mode ``+N``.
    """

    matrix: np.ndarray
    mode_order: int
    aperture_radius: float

    def __post_init__(self):
        if self.matrix.shape[1] != 2 * self.mode_order + 1:
            raise ValueError("matrix must have 2 * mode_order + 1 columns")

    @property
    def n_antennas(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_modes(self) -> int:
        return self.matrix.shape[1]


def mode_count(aperture_radius: float) -> int:
    """Highest effective mode order N of a disk of the given radius.

    An aperture of radius ``r`` wavelengths supports ``2N + 1`` modes with
    ``N = ceil(pi * e * r)``.  A point aperture keeps the single ``n = 0``
    mode.
    """
    if aperture_radius < 0:
        raise ValueError("aperture radius must be non-negative")
    return int(np.ceil(np.pi * np.e * aperture_radius))


def smf(radius, azimuth, order):
    """Spatial-to-mode function of a circular aperture.

    Maps an antenna at polar position ``(radius, azimuth)`` to its coupling
    with circular-harmonic mode ``order``:

        J_n(2 pi r) * exp(i n (azimuth - pi/2))

    where ``J_n`` is the Bessel function of the first kind.  Broadcasts over
    array-valued arguments.
    """
    radius = np.asarray(radius, dtype=float)
    if np.any(radius < 0):
        raise ValueError("radius must be non-negative")
    order = np.asarray(order)
    return jv(order, 2.0 * np.pi * radius) * np.exp(
        1j * order * (np.asarray(azimuth) - np.pi / 2.0)
    )


def config_matrix(array: AntennaArray) -> ApertureBasis:
    """Deterministic configuration matrix of an antenna array.

    Row ``t`` holds the SMF values of antenna ``t`` for modes ``-N .. N``,
    with ``N = mode_count(array.aperture_radius)``.
    """
    n = mode_count(array.aperture_radius)
    orders = np.arange(-n, n + 1)
    mat = smf(array.radii[:, None], array.azimuths[:, None], orders[None, :])
    return ApertureBasis(
        matrix=np.ascontiguousarray(mat),
        mode_order=n,
        aperture_radius=array.aperture_radius,
    )


def make_ula(n: int, spacing: float) -> AntennaArray:
    """Uniform linear array along the azimuth-0 axis, centred on the origin.

    The aperture radius is ``(n - 1) * spacing / 2``.  A single-antenna
    array degenerates to one element at the origin.
    """
    if n < 1:
        raise ValueError("antenna count must be >= 1")
    if spacing <= 0:
        raise ValueError("spacing must be positive")
    x = (np.arange(n) - (n - 1) / 2.0) * spacing
    return AntennaArray(np.abs(x), np.where(x >= 0, 0.0, np.pi))


def make_uca(n: int, min_adjacent_spacing: float) -> AntennaArray:
    """Uniform circular array with the given spacing between adjacent elements.

    The circle radius ``spacing / (2 sin(pi / n))`` makes every adjacent
    chord equal the requested spacing.  ``n = 1`` gives a single antenna at
    the origin.
    """
    if n < 1:
        raise ValueError("antenna count must be >= 1")
    if min_adjacent_spacing <= 0:
        raise ValueError("spacing must be positive")
    if n == 1:
        return AntennaArray([0.0], [0.0])
    radius = min_adjacent_spacing / (2.0 * np.sin(np.pi / n))
    return AntennaArray(np.full(n, radius), 2.0 * np.pi * np.arange(n) / n)
