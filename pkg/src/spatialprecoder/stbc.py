"""Orthogonal space-time block codebooks, coherent and differential detection.

Codewords are ``n_T x T`` matrices with unitary rows (``S @ S^H = I``) built
from orthogonal designs over a PSK alphabet scaled to ``|c| = 1/sqrt(K)``.
For every distinct pair the difference Gram matrix is a scaled identity,
``(S_i - S_j)(S_i - S_j)^H = beta_ij * I``; the minimum ``beta_ij`` over all
pairs is the distance scalar that parameterises the precoder budget and the
analytic error bounds.
"""

from dataclasses import dataclass
from itertools import product

import numpy as np

__all__ = [
    "CodebookError",
    "Codebook",
    "DiffState",
    "psk_alphabet",
    "gray_bits",
    "build_codebook",
    "codeword_distance_scan",
    "ml_decode_coherent",
    "diff_encode",
    "diff_decode",
    "coherent_distances",
    "diff_metrics",
]

DESIGNS = ("alamouti", "rate34_3tx", "rate34_4tx", "real_orthogonal_4tx")

#: differential states are re-unitarised after this many encode steps
RENORM_INTERVAL = 512

_UNITARY_TOL = 1e-12
_GRAM_TOL = 1e-10


class CodebookError(ValueError):
    """Raised when a requested design cannot satisfy the code properties."""


def psk_alphabet(order: int):
    """Unit-modulus PSK points with their Gray-coded bit labels.

    Returns ``(points, bits)`` where ``bits[k]`` is the label of ``points[k]``
    as an array of ``log2(order)`` bits.  BPSK puts the points on the real
    axis; larger orders start at ``pi / order`` so QPSK reproduces
    ``(+-1 +- i)/sqrt(2)``.
    """
    if order < 2 or order & (order - 1):
        raise ValueError("PSK order must be a power of two >= 2")
    n_bits = order.bit_length() - 1
    k = np.arange(order)
    if order == 2:
        points = np.array([1.0, -1.0], dtype=complex)
    else:
        points = np.exp(1j * (np.pi / order + 2.0 * np.pi * k / order))
    labels = k ^ (k >> 1)
    bits = (labels[:, None] >> np.arange(n_bits - 1, -1, -1)[None, :]) & 1
    return points, bits


def gray_bits(order: int):
    """Bit labels of :func:`psk_alphabet` as an ``(order, log2(order))`` array."""
    return psk_alphabet(order)[1]


def _alamouti(c):
    c1, c2 = c
    return np.array([[c1, -np.conj(c2)], [c2, np.conj(c1)]])


def _rate34_4tx(c):
    # rate-3/4 complex orthogonal design, antennas as rows over four slots
    c1, c2, c3 = c
    z = 0.0
    return np.array(
        [
            [c1, -np.conj(c2), -np.conj(c3), z],
            [c2, np.conj(c1), z, -np.conj(c3)],
            [c3, z, np.conj(c1), np.conj(c2)],
            [z, c3, -c2, c1],
        ]
    )


def _rate34_3tx(c):
    return _rate34_4tx(c)[:3, :]


def _real_orthogonal_4tx(c):
    c1, c2, c3, c4 = c
    return np.array(
        [
            [c1, -c2, -c3, -c4],
            [c2, c1, c4, -c3],
            [c3, -c4, c1, c2],
            [c4, c3, -c2, c1],
        ],
        dtype=complex,
    )


_BUILDERS = {
    "alamouti": (_alamouti, 2),
    "rate34_3tx": (_rate34_3tx, 3),
    "rate34_4tx": (_rate34_4tx, 3),
    "real_orthogonal_4tx": (_real_orthogonal_4tx, 4),
}


@dataclass(frozen=True)
class Codebook:
    """Finite set of unitary-row codewords with alphabet metadata."""

    design: str
    codewords: np.ndarray      # (L, n_T, T)
    symbols_per_codeword: int
    alphabet: np.ndarray       # scaled constellation points
    bit_labels: np.ndarray     # (L, bits_per_codeword)
    beta_min: float
    min_pair: tuple

    @property
    def size(self) -> int:
        return self.codewords.shape[0]

    @property
    def n_tx(self) -> int:
        return self.codewords.shape[1]

    @property
    def block_len(self) -> int:
        return self.codewords.shape[2]

    @property
    def bits_per_codeword(self) -> int:
        return self.bit_labels.shape[1]

    @property
    def is_square(self) -> bool:
        return self.n_tx == self.block_len


def build_codebook(design: str, constellation: str) -> Codebook:
    """Enumerate the full codebook of a design over a PSK constellation.

    Symbols are scaled by ``1/sqrt(K)`` so every codeword has unitary rows;
    the scaled-identity pair property and the distance scalar are verified by
    an exhaustive scan at construction.
    """
    if design not in _BUILDERS:
        raise CodebookError(f"unknown design {design!r}")
    orders = {"bpsk": 2, "qpsk": 4, "8psk": 8}
    if constellation not in orders:
        raise CodebookError(f"unknown constellation {constellation!r}")
    builder, k_syms = _BUILDERS[design]
    points, sym_bits = psk_alphabet(orders[constellation])
    if design == "real_orthogonal_4tx" and np.abs(points.imag).max() > 0:
        raise CodebookError("the real orthogonal design requires a real alphabet")
    scaled = points / np.sqrt(k_syms)

    codewords = []
    labels = []
    for combo in product(range(points.size), repeat=k_syms):
        codewords.append(builder(scaled[list(combo)]))
        labels.append(np.concatenate([sym_bits[i] for i in combo]))
    codewords = np.asarray(codewords)
    labels = np.asarray(labels)

    gram_err = np.abs(
        np.einsum("lnt,lmt->lnm", codewords, codewords.conj())
        - np.eye(codewords.shape[1])[None]
    ).max()
    if gram_err > _UNITARY_TOL:
        raise CodebookError(f"codewords are not unitary-row (error {gram_err:.2e})")

    beta_min, min_pair, _ = codeword_distance_scan(codewords)
    return Codebook(
        design=design,
        codewords=codewords,
        symbols_per_codeword=k_syms,
        alphabet=scaled,
        bit_labels=labels,
        beta_min=beta_min,
        min_pair=min_pair,
    )


def codeword_distance_scan(codewords):
    """Exhaustive pair scan of the distance scalars ``beta_ij``.

    Asserts the scaled-identity structure of every difference Gram matrix and
    rejects duplicated codewords.  Returns ``(beta_min, argmin_pair, table)``
    with a symmetric table whose diagonal is zero.
    """
    codewords = np.asarray(codewords)
    n = codewords.shape[0]
    if n < 2:
        raise CodebookError("need at least two codewords")
    n_tx = codewords.shape[1]
    table = np.zeros((n, n))
    beta_min, min_pair = np.inf, (0, 0)
    for i in range(n):
        for j in range(i + 1, n):
            diff = codewords[i] - codewords[j]
            gram = diff @ diff.conj().T
            beta = float(gram[0, 0].real)
            if np.abs(gram - beta * np.eye(n_tx)).max() > _GRAM_TOL:
                raise CodebookError(
                    f"pair ({i}, {j}) violates the scaled-identity property"
                )
            if beta <= _GRAM_TOL:
                raise CodebookError(f"codewords {i} and {j} are duplicates")
            table[i, j] = table[j, i] = beta
            if beta < beta_min:
                beta_min, min_pair = beta, (i, j)
    return beta_min, min_pair, table


def coherent_distances(received, h_eff, codebook: Codebook, symbol_energy=1.0):
    """Squared distances ``||Y - sqrt(Es) H_eff S_l||_F^2`` for a batch.

    ``received`` is ``(..., n_R, T)`` and ``h_eff`` is ``(..., n_R, n_T)``;
    returns ``(..., L)``.
    """
    received = np.asarray(received, dtype=complex)
    h_eff = np.asarray(h_eff, dtype=complex)
    hs = np.sqrt(symbol_energy) * np.einsum(
        "...rn,lnt->...lrt", h_eff, codebook.codewords
    )
    return np.sum(np.abs(received[..., None, :, :] - hs) ** 2, axis=(-2, -1))


def ml_decode_coherent(received, h_eff, codebook: Codebook, symbol_energy=1.0):
    """Minimum-distance codeword index; ties break to the lowest index."""
    if codebook.size == 0:
        raise CodebookError("empty codebook")
    d = coherent_distances(received, h_eff, codebook, symbol_energy)
    return int(np.argmin(d)) if d.ndim == 1 else np.argmin(d, axis=-1)


@dataclass(frozen=True)
class DiffState:
    """Running unitary reference matrix of a differential encoder."""

    matrix: np.ndarray
    steps: int = 0

    @classmethod
    def initial(cls, n_tx: int) -> "DiffState":
        return cls(matrix=np.eye(n_tx, dtype=complex), steps=0)


def _polar_unitary(mat):
    u, _, vh = np.linalg.svd(mat)
    return u @ vh


def diff_encode(state: DiffState, index: int, codebook: Codebook):
    """One differential encoding step ``X(k) = X(k-1) @ S_index``.

    Requires a square codebook (block length equal to the antenna count).
    Returns the advanced state and the matrix to transmit; the state is
    re-unitarised by polar projection every ``RENORM_INTERVAL`` steps to
    bound drift.
    """
    if not codebook.is_square:
        raise CodebookError("differential encoding needs a square codebook")
    x = state.matrix @ codebook.codewords[index]
    steps = state.steps + 1
    if steps % RENORM_INTERVAL == 0:
        x = _polar_unitary(x)
    return DiffState(matrix=x, steps=steps), x


def diff_metrics(prev_block, cur_block, codebook: Codebook):
    """Differential correlation metrics ``Re tr(Y_prev S_l Y_cur^H)``.

    ``prev_block``/``cur_block`` are ``(..., n_R, T)``; returns ``(..., L)``.
    """
    return np.real(
        np.einsum(
            "...rn,lnt,...rt->...l",
            np.asarray(prev_block, dtype=complex),
            codebook.codewords,
            np.conj(cur_block),
        )
    )


def diff_decode(prev_block, cur_block, codebook: Codebook):
    """Maximum-correlation codeword index; ties break to the lowest index."""
    if codebook.size == 0:
        raise CodebookError("empty codebook")
    m = diff_metrics(prev_block, cur_block, codebook)
    return int(np.argmax(m)) if m.ndim == 1 else np.argmax(m, axis=-1)
