"""Scattering statistics and random MIMO channel realization.

The physical channel factors as ``H = J_R @ H_S @ J_T^H`` where the aperture
bases ``J_R``/``J_T`` are deterministic (see :mod:`spatialprecoder.arrays`)
and ``H_S`` collects the random complex gains between receive and transmit
modes.  This module builds second-order statistics for ``H_S`` (modal
correlation matrices and their Kronecker product) and draws Gaussian
realizations from any positive semi-definite covariance.

Vectorisation convention, used everywhere and asserted in the tests: a matrix
``A`` is flattened row-major, ``vec_row(A) = A.reshape(-1)``, which equals the
column-stacking of ``A.T``.  Covariances are stored in the sense
``C[a, b] = E[conj(x_a) * x_b]`` for the row-major flat vector ``x``, so that
the full channel covariance of ``vec_row(H)`` is
``kron(conj(J_R) @ M_R @ J_R.T, J_T @ M_T @ J_T^H)``.
"""

from dataclasses import dataclass

import numpy as np

from .arrays import ApertureBasis

__all__ = [
    "NotPositiveSemidefiniteError",
    "ModalCorrelation",
    "ChannelRealization",
    "realize_channel",
    "uniform_limited_modal_corr",
    "isotropic_modal_corr",
    "scattering_covariance",
    "psd_sqrt",
    "realize_scattering",
    "realize_from_covariance",
    "assemble_channel",
    "channel_covariance",
    "GaussianMatrixSampler",
    "complex_gaussian",
    "save_complex_csv",
]

#: eigenvalues in [-PSD_CLAMP, 0) are treated as rounding noise and clamped
PSD_CLAMP = 1e-10


class NotPositiveSemidefiniteError(ValueError):
    """Raised when a matrix required to be PSD has a genuinely negative mode."""


def _check_hermitian(mat, tol=1e-9):
    mat = np.asarray(mat, dtype=complex)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise ValueError("expected a square matrix")
    scale = max(1.0, float(np.abs(mat).max()))
    if np.abs(mat - mat.conj().T).max() > tol * scale:
        raise ValueError("matrix is not Hermitian")
    return mat


@dataclass(frozen=True)
class ModalCorrelation:
    """Correlation among aperture modes on one side of the link.

    ``matrix`` is Hermitian with unit diagonal and PSD up to rounding;
    ``side`` records whether it describes transmit or receive modes.
    """

    matrix: np.ndarray
    side: str

    def __post_init__(self):
        if self.side not in ("transmitter", "receiver"):
            raise ValueError("side must be 'transmitter' or 'receiver'")
        mat = _check_hermitian(self.matrix, tol=1e-12)
        if np.abs(np.diagonal(mat) - 1.0).max() > 1e-12:
            raise ValueError("modal correlation must have unit diagonal")
        if np.linalg.eigvalsh(mat).min() < -PSD_CLAMP:
            raise NotPositiveSemidefiniteError("modal correlation is not PSD")

    @property
    def n_modes(self) -> int:
        return self.matrix.shape[0]

    @property
    def mode_order(self) -> int:
        return (self.matrix.shape[0] - 1) // 2


def uniform_limited_modal_corr(spread, mean_angle, mode_order, side="transmitter"):
    """Modal correlation for a uniform-limited azimuth power distribution.

    Power leaves (or arrives) uniformly over ``mean_angle +- spread``.  The
    ``(m, m')`` entry is ``sinc((m - m') * spread) * exp(i (m - m') * phi0)``
    with the unnormalised ``sinc(x) = sin(x)/x``; the receiver side carries
    the conjugate phase so both sides compose into the same row-major
    covariance convention.  ``spread = pi`` recovers the isotropic identity.

    Parameters
    ----------
    spread : float
        Angular half-width Delta in radians, ``0 < spread <= pi``.  The
        r.m.s. angular spread of the distribution is ``spread / sqrt(3)``.
    mean_angle : float
        Mean angle of departure/arrival phi0 in radians.
    mode_order : int
        Aperture mode order N; the matrix is ``(2N+1) x (2N+1)``.
    """
    if not 0.0 < spread <= np.pi:
        raise ValueError("spread must lie in (0, pi]")
    orders = np.arange(-mode_order, mode_order + 1)
    diff = orders[:, None] - orders[None, :]
    x = diff * spread
    sinc = np.where(diff == 0, 1.0, np.sin(x) / np.where(diff == 0, 1.0, x))
    sign = 1.0 if side == "transmitter" else -1.0
    mat = sinc * np.exp(1j * sign * diff * mean_angle)
    # force exact unit diagonal / Hermitian symmetry against rounding
    mat = (mat + mat.conj().T) / 2.0
    np.fill_diagonal(mat, 1.0)
    return ModalCorrelation(matrix=mat, side=side)


def isotropic_modal_corr(mode_order, side="transmitter"):
    """Identity modal correlation (rich scattering on that side)."""
    n = 2 * mode_order + 1
    return ModalCorrelation(matrix=np.eye(n, dtype=complex), side=side)


def scattering_covariance(m_rx: ModalCorrelation, m_tx: ModalCorrelation):
    """Covariance of the row-major flattened scattering matrix.

    Kronecker product of the receive and transmit modal correlations; the
    receive index is the major axis, matching ``H_S.reshape(-1)``.
    """
    return np.kron(m_rx.matrix, m_tx.matrix)


def psd_sqrt(mat):
    """Hermitian square root of a positive semi-definite matrix.

    Eigenvalues in ``[-1e-10, 0)`` are clamped to zero; anything more
    negative raises :class:`NotPositiveSemidefiniteError` rather than being
    silently repaired.
    """
    mat = _check_hermitian(mat)
    w, v = np.linalg.eigh(mat)
    if w.min() < -PSD_CLAMP:
        raise NotPositiveSemidefiniteError(
            f"matrix has eigenvalue {w.min():.3e} below the -1e-10 clamp"
        )
    w = np.clip(w, 0.0, None)
    return (v * np.sqrt(w)[None, :]) @ v.conj().T


def complex_gaussian(rng, shape):
    """Zero-mean unit-variance circularly symmetric complex Gaussian draws."""
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


class GaussianMatrixSampler:
    """Draws matrices whose row-major flattening has a fixed covariance.

    The PSD factorisation is done once at construction; every draw is a
    matrix product.  With ``x = H.reshape(-1)`` the draws satisfy
    ``E[conj(x[a]) * x[b]] = cov[a, b]``.
    """

    def __init__(self, cov, shape):
        cov = np.asarray(cov, dtype=complex)
        rows, cols = shape
        if cov.shape != (rows * cols, rows * cols):
            raise ValueError("covariance size does not match the matrix shape")
        self.shape = (rows, cols)
        self._factor = np.conj(psd_sqrt(cov))

    def draw(self, rng, n):
        """Return ``n`` stacked realizations with shape ``(n, rows, cols)``."""
        w = complex_gaussian(rng, (self._factor.shape[0], n))
        flat = (self._factor @ w).T
        return np.ascontiguousarray(flat.reshape(n, *self.shape))


def realize_scattering(r_s, shape, rng):
    """One realization of the scattering matrix with covariance ``r_s``.

    ``shape`` is ``(2 N_R + 1, 2 N_T + 1)``; the white seed matrix has iid
    unit-variance circularly symmetric complex Gaussian entries.
    """
    return GaussianMatrixSampler(r_s, shape).draw(rng, 1)[0]


def realize_from_covariance(cov, shape, rng):
    """One matrix realization whose row-major flattening has covariance ``cov``."""
    return GaussianMatrixSampler(cov, shape).draw(rng, 1)[0]


@dataclass(frozen=True)
class ChannelRealization:
    """One seeded draw of the scattering matrix and the assembled channel.

    ``seed_key`` fully determines both matrices: rebuilding the realization
    from the same key reproduces them bit for bit.
    """

    h: np.ndarray
    h_s: np.ndarray
    seed_key: int


def realize_channel(j_rx: ApertureBasis, r_s, j_tx: ApertureBasis, seed_key: int):
    """Draw one physical channel ``H = J_R @ H_S @ J_T^H`` from a seed key."""
    rng = np.random.Generator(np.random.Philox(key=seed_key))
    h_s = realize_scattering(r_s, (j_rx.n_modes, j_tx.n_modes), rng)
    return ChannelRealization(
        h=assemble_channel(j_rx, h_s, j_tx), h_s=h_s, seed_key=seed_key
    )


def assemble_channel(j_rx: ApertureBasis, h_s, j_tx: ApertureBasis):
    """Physical channel ``H = J_R @ H_S @ J_T^H`` from a scattering draw."""
    h_s = np.asarray(h_s)
    if h_s.shape[-2:] != (j_rx.n_modes, j_tx.n_modes):
        raise ValueError(
            f"scattering matrix shape {h_s.shape[-2:]} does not match "
            f"({j_rx.n_modes}, {j_tx.n_modes}) modes"
        )
    return j_rx.matrix @ h_s @ j_tx.matrix.conj().T


def channel_covariance(j_tx: ApertureBasis, j_rx: ApertureBasis,
                       m_tx: ModalCorrelation, m_rx: ModalCorrelation):
    """Full covariance of the row-major flattened MIMO channel.

    Returns ``kron(conj(J_R) @ M_R @ J_R.T, J_T @ M_T @ J_T^H)``, an
    ``(n_R n_T)``-square Hermitian PSD matrix equal to
    ``E[conj(h)^T h]`` for the row vector ``h = H.reshape(-1)``.
    """
    if m_tx.n_modes != j_tx.n_modes or m_rx.n_modes != j_rx.n_modes:
        raise ValueError("modal correlation size does not match the aperture basis")
    rx_part = np.conj(j_rx.matrix) @ m_rx.matrix @ j_rx.matrix.T
    tx_part = j_tx.matrix @ m_tx.matrix @ j_tx.matrix.conj().T
    cov = np.kron(rx_part, tx_part)
    return (cov + cov.conj().T) / 2.0


def save_complex_csv(path, mat):
    """Write a complex matrix as CSV, row-major, alternating re/im columns."""
    mat = np.atleast_2d(np.asarray(mat, dtype=complex))
    out = np.empty((mat.shape[0], 2 * mat.shape[1]))
    out[:, 0::2] = mat.real
    out[:, 1::2] = mat.imag
    header = ",".join(f"re{j},im{j}" for j in range(mat.shape[1]))
    np.savetxt(path, out, delimiter=",", header=header, comments="")
