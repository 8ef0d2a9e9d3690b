"""Ring-of-scatterers space-time correlation models.

Two geometric channel statistics used as alternatives to the mode-domain
Kronecker model: a MISO model where the receiver is surrounded by a scatterer
ring of radius ``a`` (Chen-style), and a MIMO model with a von Mises angle of
arrival at the receiver and a small angular spread at the transmitter
(Abdi-style).  Both produce space(-time) covariances in the package-wide
row-major ``E[conj(x_a) x_b]`` convention, from which Gaussian realizations
are drawn via :class:`spatialprecoder.channel.GaussianMatrixSampler`.

Pair-dependent quantities (spacings, orientation angles) enter the closed
forms through a signed displacement along the array baseline.  For the
ordered pair ``(m, n)`` with antenna ``n`` further along the baseline this
reduces to the printed formulas; the signed extension keeps the assembled
covariance exactly Hermitian and the lagged family consistent with
``R(-tau) = R(tau)^H``.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.special import iv, jv

__all__ = [
    "ChenRingSpec",
    "chen_correlation",
    "chen_covariance",
    "chen_space_time_covariance",
    "AbdiRingSpec",
    "abdi_correlation",
    "abdi_covariance",
]

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class ChenRingSpec:
    """Geometry of the MISO ring model.

    The transmit antennas sit on a line whose direction makes angle
    ``pair_angle`` with the line of sight for the first antenna pair; the
    receiver sits on the azimuth-0 axis at ``link_distance`` from the centre
    of that pair and is circled by scatterers on a ring of radius
    ``ring_radius``.  Remaining per-pair distances and angles follow from
    planar trigonometry.  Lengths in wavelengths, angles in radians,
    ``doppler`` is the normalised Doppler shift per codeword period (f_D T).
    """

    ring_radius: float
    link_distance: float
    tx_spacings: tuple
    pair_angle: float
    motion_angle: float
    doppler: float

    # derived planar geometry, filled in __post_init__
    tx_coords: np.ndarray = field(init=False, repr=False, compare=False)
    distances: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        spacings = np.atleast_1d(np.asarray(self.tx_spacings, dtype=float))
        if self.ring_radius <= 0:
            raise ValueError("ring radius must be positive")
        if self.link_distance <= 0:
            raise ValueError("link distance must be positive")
        if spacings.size < 1 or np.any(spacings <= 0):
            raise ValueError("transmit spacings must be positive")
        object.__setattr__(self, "tx_spacings", tuple(spacings))
        # baseline coordinates with the centre of pair (1, 2) at the origin
        coords = np.concatenate([[0.0], np.cumsum(spacings)]) - spacings[0] / 2.0
        object.__setattr__(self, "tx_coords", coords)
        u = np.array([np.cos(self.pair_angle), np.sin(self.pair_angle)])
        pos = coords[:, None] * u[None, :]
        rx = np.array([self.link_distance, 0.0])
        d = np.hypot(*(rx[None, :] - pos).T)
        if np.any(d <= self.ring_radius):
            raise ValueError(
                "scatterer ring must not enclose the transmit antennas"
            )
        object.__setattr__(self, "distances", d)

    @property
    def n_tx(self) -> int:
        return len(self.tx_spacings) + 1

    def _pair_geometry(self, m, n):
        """Signed spacing, distances and pair angles for antennas (m, n)."""
        u = np.array([np.cos(self.pair_angle), np.sin(self.pair_angle)])
        pos = self.tx_coords[:, None] * u[None, :]
        rx = np.array([self.link_distance, 0.0])
        centre = (pos[m] + pos[n]) / 2.0
        to_rx = rx - centre
        dist_pair = np.hypot(*to_rx)
        cos_beta = (u @ to_rx) / dist_pair
        sin_beta = (u[0] * to_rx[1] - u[1] * to_rx[0]) / dist_pair
        spacing = self.tx_coords[n] - self.tx_coords[m]
        return spacing, self.distances[m], self.distances[n], cos_beta, sin_beta


def chen_correlation(spec: ChenRingSpec, m: int, n: int, lag: float) -> complex:
    """Space-time cross correlation between transmit antennas ``m`` and ``n``.

    ``lag`` is measured in codeword periods; the temporal argument is
    ``spec.doppler * lag``.  Coincident antennas at zero lag give exactly 1,
    and at nonzero lag collapse to the Clarke correlation ``J_0(2 pi f_D tau)``.
    """
    n_tx = spec.n_tx
    if not (0 <= m < n_tx and 0 <= n < n_tx):
        raise IndexError("antenna index out of range")
    spacing, d_m, d_n, cos_beta, sin_beta = spec._pair_geometry(m, n)
    scale = 2.0 * spec.ring_radius / (d_m + d_n)
    z_c = scale * (spacing - (d_m - d_n) * cos_beta)
    z_s = scale * (d_m - d_n) * sin_beta
    ft = spec.doppler * lag
    arg = TWO_PI * np.hypot(
        ft * np.cos(spec.motion_angle) + z_c,
        ft * np.sin(spec.motion_angle) - z_s,
    )
    return np.exp(1j * TWO_PI * (d_m - d_n)) * jv(0, arg)


def chen_covariance(spec: ChenRingSpec, lag: float = 0.0):
    """Transmit covariance matrix at a single lag, ``E[conj(x_a) x_b]`` sense."""
    n_tx = spec.n_tx
    out = np.empty((n_tx, n_tx), dtype=complex)
    for a in range(n_tx):
        for b in range(n_tx):
            out[a, b] = chen_correlation(spec, b, a, lag)
    return out


def chen_space_time_covariance(spec: ChenRingSpec, n_blocks: int):
    """Block-Toeplitz covariance of the fading process over ``n_blocks`` codewords.

    Flat index ``k * n_tx + m`` addresses antenna ``m`` at block ``k``; block
    ``(k, k')`` is the lag-``(k - k')`` correlation matrix.  The result feeds
    one frame-long realization of the time-selective channel.
    """
    if n_blocks < 1:
        raise ValueError("need at least one block")
    n_tx = spec.n_tx
    lags = [chen_covariance(spec, float(lag)) for lag in range(n_blocks)]
    out = np.empty((n_blocks * n_tx, n_blocks * n_tx), dtype=complex)
    for k in range(n_blocks):
        for kp in range(n_blocks):
            block = lags[abs(kp - k)]
            if kp < k:
                block = block.conj().T
            out[k * n_tx:(k + 1) * n_tx, kp * n_tx:(kp + 1) * n_tx] = block
    return out


@dataclass(frozen=True)
class AbdiRingSpec:
    """Geometry and statistics of the MIMO ring model.

    Transmit antennas lie on a line of orientation ``tx_angle`` with adjacent
    spacing ``tx_spacing``; receive antennas likewise with ``rx_angle`` and
    ``rx_spacing``.  The angle of arrival at the receiver follows a von Mises
    distribution with concentration ``aoa_concentration`` around ``mean_aoa``;
    ``tx_spread`` is the (small) angular spread parameter at the transmitter.
    ``doppler`` is the normalised Doppler shift per codeword (f_D T) and
    ``motion_angle`` the receiver's direction of motion.
    """

    aoa_concentration: float = 0.0
    mean_aoa: float = 0.0
    motion_angle: float = 0.0
    tx_spread: float = 0.0
    tx_spacing: float = 0.0
    rx_spacing: float = 0.0
    tx_angle: float = 0.0
    rx_angle: float = 0.0
    doppler: float = 0.0

    def __post_init__(self):
        if self.aoa_concentration < 0:
            raise ValueError("aoa concentration must be non-negative")
        if not 0.0 <= self.tx_spread < np.pi:
            raise ValueError("tx spread must lie in [0, pi)")
        if self.tx_spacing < 0 or self.rx_spacing < 0:
            raise ValueError("antenna spacings must be non-negative")


def abdi_correlation(spec: AbdiRingSpec, rx_l: int, tx_p: int, rx_m: int,
                     tx_q: int, lag: float) -> complex:
    """Space-time cross correlation between channel entries (l, p) and (m, q).

    ``rx_l``/``rx_m`` index receive antennas, ``tx_p``/``tx_q`` transmit
    antennas; ``lag`` is in codeword periods.  Uses the modified Bessel
    function ``I_0`` with a complex argument, normalised by ``I_0(kappa)``.
    """
    kappa = spec.aoa_concentration
    a = TWO_PI * spec.doppler * lag
    b = TWO_PI * (rx_m - rx_l) * spec.rx_spacing
    c = TWO_PI * (tx_q - tx_p) * spec.tx_spacing
    sin_a = np.sin(spec.tx_angle)
    z = (
        kappa ** 2
        - a ** 2
        - b ** 2
        - (c * spec.tx_spread * sin_a) ** 2
        + 2.0 * a * b * np.cos(spec.rx_angle - spec.motion_angle)
        + 2.0 * c * spec.tx_spread * sin_a
        * (a * np.sin(spec.motion_angle) - b * np.sin(spec.rx_angle))
        - 2j * kappa * (
            a * np.cos(spec.mean_aoa - spec.motion_angle)
            - b * np.cos(spec.mean_aoa - spec.rx_angle)
            - c * spec.tx_spread * sin_a * np.sin(spec.mean_aoa)
        )
    )
    phase = np.exp(1j * c * np.cos(spec.tx_angle))
    return phase * iv(0, np.sqrt(z + 0j)) / iv(0, kappa)


def abdi_covariance(spec: AbdiRingSpec, n_rx: int, n_tx: int, lag: float = 0.0):
    """Covariance of the row-major flattened ``n_rx x n_tx`` channel at one lag."""
    if n_rx < 1 or n_tx < 1:
        raise ValueError("need at least one antenna per side")
    dim = n_rx * n_tx
    out = np.empty((dim, dim), dtype=complex)
    for l in range(n_rx):
        for p in range(n_tx):
            for m in range(n_rx):
                for q in range(n_tx):
                    # E[conj(h_{l,p}) h_{m,q}]: paper's rows indexed by (m, q)
                    out[l * n_tx + p, m * n_tx + q] = abdi_correlation(
                        spec, m, q, l, p, lag
                    )
    return out
