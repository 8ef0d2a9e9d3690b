"""Monte-Carlo link-level experiments: BER and PEP sweeps over SNR.

An :class:`Experiment` fixes the geometry, scattering statistics, code,
detection scheme and seeding; :func:`run_ber` and :func:`run_pep` sweep the
SNR grid.  The precoder is re-solved at every grid point because its power
budget scales with the SNR.

Randomness is organised around counter-based Philox streams: trial chunk
``c`` of grid point ``k`` draws from a generator keyed by
``(master_seed, k, c)``, and chunk sizes are fixed constants, so results are
bit-identical no matter how many worker threads evaluate the chunks.
"""

import csv
import json
import os
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .arrays import AntennaArray, config_matrix
from .channel import (
    GaussianMatrixSampler,
    channel_covariance,
    complex_gaussian,
    isotropic_modal_corr,
    scattering_covariance,
    uniform_limited_modal_corr,
)
from .precoder import (
    coherent_precoder,
    differential_precoder,
    eigenmodes,
    EigenmodeProfile,
    pep_bound_coherent,
    pep_bound_differential,
)
from .scatterers import (
    AbdiRingSpec,
    ChenRingSpec,
    abdi_covariance,
    chen_space_time_covariance,
)
from .stbc import Codebook, build_codebook, coherent_distances, diff_metrics

__all__ = [
    "IidScattering",
    "KroneckerModalScattering",
    "ChenScattering",
    "AbdiScattering",
    "Trials",
    "Experiment",
    "BerPoint",
    "PepPoint",
    "run_ber",
    "run_pep",
    "precoding_gain",
    "interpolate_snr_at_ber",
    "write_ber_csv",
    "write_pep_csv",
    "write_json",
]

# fixed chunk sizes keep the RNG stream layout independent of thread count
_CODEWORD_CHUNK = 4096
_FRAME_CHUNK = 64

SYMBOL_ENERGY = 1.0


@dataclass(frozen=True)
class IidScattering:
    """Ideal uncorrelated Rayleigh channel: H itself has iid CN(0,1) entries."""


@dataclass(frozen=True)
class KroneckerModalScattering:
    """Mode-domain scattering with per-side uniform-limited azimuth power.

    ``None`` spreads mean isotropic scattering (identity modal correlation)
    on that side; otherwise the spread is the half-width of the uniform
    distribution in radians.
    """

    tx_spread: float | None = None
    tx_mean_angle: float = 0.0
    rx_spread: float | None = None
    rx_mean_angle: float = 0.0


@dataclass(frozen=True)
class ChenScattering:
    """Time-selective MISO ring model; requires a single receive antenna."""

    spec: ChenRingSpec


@dataclass(frozen=True)
class AbdiScattering:
    """Quasi-static MIMO ring model with von Mises angle of arrival."""

    spec: AbdiRingSpec


@dataclass(frozen=True)
class Trials:
    """Stopping rule: a fixed codeword count or a codeword-error target."""

    codewords: int | None = None
    target_errors: int | None = None
    max_codewords: int = 1_000_000

    def __post_init__(self):
        if (self.codewords is None) == (self.target_errors is None):
            raise ValueError("set exactly one of codewords / target_errors")
        if self.codewords is not None and self.codewords < 1:
            raise ValueError("codeword count must be >= 1")
        if self.target_errors is not None and self.target_errors < 1:
            raise ValueError("error target must be >= 1")


@dataclass(frozen=True)
class Experiment:
    """Complete description of one reproducible link-level experiment."""

    tx_array: AntennaArray
    rx_array: AntennaArray
    scattering: object
    design: str
    constellation: str
    scheme: str
    precoding: bool
    snr_db: tuple
    trials: Trials
    frame_len: int = 100
    master_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "snr_db", tuple(float(s) for s in self.snr_db))
        if len(self.snr_db) == 0:
            raise ValueError("SNR grid must be non-empty")
        if self.scheme not in ("coherent", "differential"):
            raise ValueError("scheme must be 'coherent' or 'differential'")
        if self.scheme == "differential" and self.frame_len < 2:
            raise ValueError("differential detection needs frame_len >= 2")
        if self.frame_len < 1:
            raise ValueError("frame_len must be >= 1")
        if not 0 <= self.master_seed < 2 ** 64:
            raise ValueError("master seed must fit in 64 bits")


@dataclass(frozen=True)
class BerPoint:
    snr_db: float
    codewords: int
    frames: int
    bits: int
    bit_errors: int
    codeword_errors: int

    @property
    def ber(self) -> float:
        return self.bit_errors / self.bits


@dataclass(frozen=True)
class PepPoint:
    snr_db: float
    trials: int
    errors: int
    bound: float

    @property
    def pep(self) -> float:
        return self.errors / self.trials


def _chunk_rng(master_seed, point_idx, chunk_idx):
    key = (int(master_seed) << 64) | (int(point_idx) << 32) | int(chunk_idx)
    return np.random.Generator(np.random.Philox(key=key))


class _Setup:
    """Per-experiment immutable state shared by all chunk workers."""

    def __init__(self, exp: Experiment):
        self.exp = exp
        self.codebook: Codebook = build_codebook(exp.design, exp.constellation)
        self.j_tx = config_matrix(exp.tx_array)
        self.j_rx = config_matrix(exp.rx_array)
        self.n_tx = exp.tx_array.n_antennas
        self.n_rx = exp.rx_array.n_antennas
        if self.codebook.n_tx != self.n_tx:
            raise ValueError(
                f"design {exp.design!r} needs {self.codebook.n_tx} transmit "
                f"antennas, array has {self.n_tx}"
            )
        if exp.scheme == "differential" and not self.codebook.is_square:
            raise ValueError("differential scheme needs a square codebook")
        self.profile = eigenmodes(self.j_tx, self.j_rx)
        self.beta = self.codebook.beta_min
        labels = self.codebook.bit_labels
        self.bit_dist = (labels[:, None, :] != labels[None, :, :]).sum(axis=2)
        self._static_sampler = None
        self._chen_samplers = {}
        self._build_channel()

    def _build_channel(self):
        sc = self.exp.scattering
        if isinstance(sc, IidScattering):
            self.channel_kind = "static"
        elif isinstance(sc, KroneckerModalScattering):
            self.channel_kind = "static"
            m_tx = (
                isotropic_modal_corr(self.j_tx.mode_order, "transmitter")
                if sc.tx_spread is None
                else uniform_limited_modal_corr(
                    sc.tx_spread, sc.tx_mean_angle, self.j_tx.mode_order, "transmitter"
                )
            )
            m_rx = (
                isotropic_modal_corr(self.j_rx.mode_order, "receiver")
                if sc.rx_spread is None
                else uniform_limited_modal_corr(
                    sc.rx_spread, sc.rx_mean_angle, self.j_rx.mode_order, "receiver"
                )
            )
            self.modal = (m_tx, m_rx)
            self._static_sampler = GaussianMatrixSampler(
                scattering_covariance(m_rx, m_tx),
                (self.j_rx.n_modes, self.j_tx.n_modes),
            )
        elif isinstance(sc, ChenScattering):
            if self.n_rx != 1:
                raise ValueError("the Chen ring model is MISO (one receive antenna)")
            if sc.spec.n_tx != self.n_tx:
                raise ValueError("Chen geometry does not match the transmit array")
            self.channel_kind = "process"
        elif isinstance(sc, AbdiScattering):
            self.channel_kind = "static"
            self._static_sampler = GaussianMatrixSampler(
                abdi_covariance(sc.spec, self.n_rx, self.n_tx),
                (self.n_rx, self.n_tx),
            )
        else:
            raise TypeError(f"unknown scattering spec {type(sc).__name__}")

    def draw_static(self, rng, n):
        """``n`` independent quasi-static channels, shape (n, n_R, n_T)."""
        sc = self.exp.scattering
        if isinstance(sc, IidScattering):
            return complex_gaussian(rng, (n, self.n_rx, self.n_tx))
        if isinstance(sc, ChenScattering):
            return self.draw_process(rng, n, 1)[:, 0]
        h_s = self._static_sampler.draw(rng, n)
        if isinstance(sc, AbdiScattering):
            return h_s
        return self.j_rx.matrix @ h_s @ self.j_tx.matrix.conj().T

    def draw_process(self, rng, n_frames, n_blocks):
        """Frame-long fading processes, shape (n_frames, n_blocks, n_R, n_T)."""
        sc = self.exp.scattering
        if isinstance(sc, ChenScattering):
            sampler = self._chen_samplers.get(n_blocks)
            if sampler is None:
                cov = chen_space_time_covariance(sc.spec, n_blocks)
                sampler = GaussianMatrixSampler(cov, (n_blocks, self.n_tx))
                self._chen_samplers[n_blocks] = sampler
            flat = sampler.draw(rng, n_frames)
            return flat.reshape(n_frames, n_blocks, 1, self.n_tx)
        h = self.draw_static(rng, n_frames)
        return np.broadcast_to(
            h[:, None, :, :], (n_frames, n_blocks, self.n_rx, self.n_tx)
        )

    def bound_reference(self):
        """Channel covariance basis for the analytic PEP bounds."""
        sc = self.exp.scattering
        if isinstance(sc, IidScattering):
            return EigenmodeProfile(
                t=np.ones(self.n_tx),
                r=np.ones(self.n_rx),
                u_tx=np.eye(self.n_tx, dtype=complex),
            )
        if isinstance(sc, KroneckerModalScattering):
            if sc.tx_spread is None and sc.rx_spread is None:
                return self.profile
            return channel_covariance(self.j_tx, self.j_rx, *self.modal)
        if isinstance(sc, AbdiScattering):
            return abdi_covariance(sc.spec, self.n_rx, self.n_tx)
        return chen_space_time_covariance(sc.spec, 1)

    def precoder_matrix(self, snr):
        if not self.exp.precoding:
            return np.eye(self.n_tx, dtype=complex)
        solve = (
            coherent_precoder
            if self.exp.scheme == "coherent"
            else differential_precoder
        )
        return solve(self.profile, self.beta, snr).matrix


def _noise(rng, shape, sigma2):
    return complex_gaussian(rng, shape) * np.sqrt(sigma2)


def _coherent_chunk(setup: _Setup, f_mat, sigma2, n_codewords, rng):
    """Simulate one chunk of coherent codewords; channel redrawn per codeword."""
    cb = setup.codebook
    idx = rng.integers(0, cb.size, n_codewords)
    if setup.channel_kind == "process":
        frame_len = setup.exp.frame_len
        n_frames = -(-n_codewords // frame_len)
        h = setup.draw_process(rng, n_frames, frame_len)
        h = h.reshape(n_frames * frame_len, setup.n_rx, setup.n_tx)[:n_codewords]
    else:
        n_frames = n_codewords
        h = setup.draw_static(rng, n_codewords)
    h_eff = h @ f_mat
    clean = np.sqrt(SYMBOL_ENERGY) * h_eff @ cb.codewords[idx]
    received = clean + _noise(rng, clean.shape, sigma2)
    dist = coherent_distances(received, h_eff, cb, SYMBOL_ENERGY)
    decided = np.argmin(dist, axis=-1)
    cw_err = int(np.count_nonzero(decided != idx))
    bit_err = int(setup.bit_dist[idx, decided].sum())
    return {
        "codewords": n_codewords,
        "frames": n_frames,
        "bits": n_codewords * cb.bits_per_codeword,
        "bit_errors": bit_err,
        "codeword_errors": cw_err,
    }


def _differential_chunk(setup: _Setup, f_mat, sigma2, frame_lens, rng):
    """Simulate frames of differentially encoded codewords.

    Within a frame the reference block X(0) = I is sent first and the state
    is advanced by the drawn codewords; static channels stay fixed over the
    frame while the Chen process varies per block.
    """
    cb = setup.codebook
    n_frames = len(frame_lens)
    max_len = int(max(frame_lens))
    lens = np.asarray(frame_lens)
    idx = rng.integers(0, cb.size, (n_frames, max_len))
    h = setup.draw_process(rng, n_frames, max_len + 1)
    nr, nt = setup.n_rx, setup.n_tx
    x = np.broadcast_to(np.eye(nt, dtype=complex), (n_frames, nt, nt)).copy()
    y_prev = np.sqrt(SYMBOL_ENERGY) * (h[:, 0] @ f_mat) @ x
    y_prev = y_prev + _noise(rng, y_prev.shape, sigma2)
    bit_err = 0
    cw_err = 0
    codewords = 0
    for k in range(max_len):
        live = lens > k
        x = x @ cb.codewords[idx[:, k]]
        y = np.sqrt(SYMBOL_ENERGY) * (h[:, k + 1] @ f_mat) @ x
        y = y + _noise(rng, y.shape, sigma2)
        decided = np.argmax(diff_metrics(y_prev, y, cb), axis=-1)
        sent = idx[:, k]
        cw_err += int(np.count_nonzero((decided != sent) & live))
        bit_err += int((setup.bit_dist[sent, decided] * live).sum())
        codewords += int(live.sum())
        y_prev = y
    return {
        "codewords": codewords,
        "frames": n_frames,
        "bits": codewords * cb.bits_per_codeword,
        "bit_errors": bit_err,
        "codeword_errors": cw_err,
    }


def _frame_schedule(n_codewords, frame_len):
    """Frame lengths covering exactly ``n_codewords`` data codewords."""
    full, rem = divmod(n_codewords, frame_len)
    lens = [frame_len] * full
    if rem:
        lens.append(rem)
    return lens


def _chunk_plan(setup: _Setup, n_codewords):
    """Split a codeword count into fixed-size chunk descriptors."""
    if setup.exp.scheme == "coherent":
        sizes = []
        remaining = n_codewords
        while remaining > 0:
            take = min(_CODEWORD_CHUNK, remaining)
            sizes.append(take)
            remaining -= take
        return sizes
    frames = _frame_schedule(n_codewords, setup.exp.frame_len)
    return [
        frames[i: i + _FRAME_CHUNK] for i in range(0, len(frames), _FRAME_CHUNK)
    ]


def _run_chunk(setup, f_mat, sigma2, point_idx, chunk_idx, chunk):
    rng = _chunk_rng(setup.exp.master_seed, point_idx, chunk_idx)
    if setup.exp.scheme == "coherent":
        return _coherent_chunk(setup, f_mat, sigma2, chunk, rng)
    return _differential_chunk(setup, f_mat, sigma2, chunk, rng)


def _merge(acc, part):
    for key in acc:
        acc[key] += part[key]
    return acc


def _run_point(setup: _Setup, point_idx, snr_db, threads):
    snr = 10.0 ** (snr_db / 10.0)
    sigma2 = SYMBOL_ENERGY / snr
    f_mat = setup.precoder_matrix(snr)
    trials = setup.exp.trials
    totals = {
        "codewords": 0, "frames": 0, "bits": 0, "bit_errors": 0,
        "codeword_errors": 0,
    }

    if trials.codewords is not None:
        chunks = _chunk_plan(setup, trials.codewords)
        results = _map_chunks(setup, f_mat, sigma2, point_idx, chunks, threads)
        for part in results:
            _merge(totals, part)
    else:
        # first-to-N-errors: chunks are included strictly in index order, so
        # the stopping point cannot depend on scheduling
        chunks = _chunk_plan(setup, trials.max_codewords)
        pos = 0
        while pos < len(chunks):
            wave = chunks[pos: pos + max(1, threads)]
            results = _map_chunks(
                setup, f_mat, sigma2, point_idx, wave, threads, offset=pos
            )
            stop = False
            for part in results:
                _merge(totals, part)
                if totals["codeword_errors"] >= trials.target_errors:
                    stop = True
                    break
            if stop:
                break
            pos += len(wave)

    return BerPoint(snr_db=snr_db, **totals)


def _map_chunks(setup, f_mat, sigma2, point_idx, chunks, threads, offset=0):
    if threads <= 1 or len(chunks) <= 1:
        return [
            _run_chunk(setup, f_mat, sigma2, point_idx, offset + i, chunk)
            for i, chunk in enumerate(chunks)
        ]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        futures = [
            pool.submit(
                _run_chunk, setup, f_mat, sigma2, point_idx, offset + i, chunk
            )
            for i, chunk in enumerate(chunks)
        ]
        return [f.result() for f in futures]


def run_ber(exp: Experiment, threads: int = 1):
    """Bit-error-rate sweep over the experiment's SNR grid."""
    setup = _Setup(exp)
    return [
        _run_point(setup, k, snr_db, threads)
        for k, snr_db in enumerate(exp.snr_db)
    ]


def _pep_chunk_coherent(setup, f_mat, sigma2, pair, n_trials, rng):
    cb = setup.codebook
    i, j = pair
    h = setup.draw_static(rng, n_trials)
    h_eff = h @ f_mat
    sent = np.sqrt(SYMBOL_ENERGY) * h_eff @ cb.codewords[i]
    received = sent + _noise(rng, sent.shape, sigma2)
    cand = np.sqrt(SYMBOL_ENERGY) * np.einsum(
        "crn,lnt->clrt", h_eff, cb.codewords[[i, j]]
    )
    dist = np.sum(np.abs(received[:, None] - cand) ** 2, axis=(-2, -1))
    if i < j:
        errors = dist[:, 1] < dist[:, 0]
    else:
        errors = dist[:, 1] <= dist[:, 0]
    return int(np.count_nonzero(errors))


def _pep_chunk_differential(setup, f_mat, sigma2, pair, n_trials, rng):
    cb = setup.codebook
    i, j = pair
    h = setup.draw_static(rng, n_trials)
    h_eff = np.sqrt(SYMBOL_ENERGY) * h @ f_mat
    y0 = h_eff + _noise(rng, h_eff.shape, sigma2)           # X(0) = I
    y1 = h_eff @ cb.codewords[i] + _noise(rng, h_eff.shape, sigma2)
    metrics = diff_metrics(y0, y1, cb)[:, [i, j]]
    if i < j:
        errors = metrics[:, 1] > metrics[:, 0]
    else:
        errors = metrics[:, 1] >= metrics[:, 0]
    return int(np.count_nonzero(errors))


def run_pep(exp: Experiment, pair, threads: int = 1):
    """Two-codeword pairwise error rate with its analytic upper bound.

    Transmits codeword ``pair[0]`` and counts decisions for ``pair[1]`` in a
    decoder reduced to the two candidates; the bound is evaluated with the
    pair's own distance scalar.
    """
    i, j = int(pair[0]), int(pair[1])
    if i == j:
        raise ValueError("pair must contain two distinct codewords")
    setup = _Setup(exp)
    diff = setup.codebook.codewords[i] - setup.codebook.codewords[j]
    beta_ij = float((diff @ diff.conj().T)[0, 0].real)
    reference = setup.bound_reference()
    n_trials = exp.trials.codewords or exp.trials.max_codewords
    points = []
    for k, snr_db in enumerate(exp.snr_db):
        snr = 10.0 ** (snr_db / 10.0)
        sigma2 = SYMBOL_ENERGY / snr
        f_mat = setup.precoder_matrix(snr)
        if exp.scheme == "coherent":
            bound = pep_bound_coherent(reference, f_mat, beta_ij, snr)
            worker = _pep_chunk_coherent
        else:
            bound = pep_bound_differential(reference, f_mat, beta_ij, snr)
            worker = _pep_chunk_differential

        sizes = []
        remaining = n_trials
        while remaining > 0:
            take = min(_CODEWORD_CHUNK, remaining)
            sizes.append(take)
            remaining -= take

        def job(chunk_idx, size):
            rng = _chunk_rng(exp.master_seed, k, chunk_idx)
            return worker(setup, f_mat, sigma2, (i, j), size, rng)

        if threads <= 1 or len(sizes) <= 1:
            errors = sum(job(c, s) for c, s in enumerate(sizes))
        else:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                futures = [pool.submit(job, c, s) for c, s in enumerate(sizes)]
                errors = sum(f.result() for f in futures)
        points.append(
            PepPoint(snr_db=snr_db, trials=n_trials, errors=errors, bound=bound)
        )
    return points


def interpolate_snr_at_ber(points, target_ber):
    """SNR (dB) at which a BER curve crosses ``target_ber``.

    Log-linear interpolation between grid points; raises ``ValueError``
    when the target lies outside the curve's range.
    """
    snrs = np.array([p.snr_db for p in points])
    bers = np.array([p.ber for p in points])
    order = np.argsort(snrs)
    snrs, bers = snrs[order], bers[order]
    log_t = np.log10(target_ber)
    with np.errstate(divide="ignore"):
        log_b = np.log10(bers)
    for a in range(len(snrs) - 1):
        lo, hi = log_b[a], log_b[a + 1]
        if not (np.isfinite(lo) and np.isfinite(hi)) or lo == hi:
            continue
        if (lo - log_t) * (hi - log_t) <= 0:
            return float(
                snrs[a] + (log_t - lo) * (snrs[a + 1] - snrs[a]) / (hi - lo)
            )
    raise ValueError(f"target BER {target_ber} is outside the simulated curve")


def precoding_gain(exp: Experiment, target_ber: float, threads: int = 1):
    """Horizontal distance (dB) between precoded-off and precoded-on curves.

    Both runs share the master seed, so the comparison uses common random
    numbers.
    """
    on = run_ber(replace(exp, precoding=True), threads)
    off = run_ber(replace(exp, precoding=False), threads)
    return interpolate_snr_at_ber(off, target_ber) - interpolate_snr_at_ber(
        on, target_ber
    )


def _atomic_write(path, writer):
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as handle:
            writer(handle)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_ber_csv(path, exp: Experiment, points):
    """BER results as CSV with the documented column set, written atomically."""

    def emit(handle):
        out = csv.writer(handle)
        out.writerow(
            ["scheme", "precoded", "snr_db", "trials", "bits", "bit_errors", "ber"]
        )
        for p in points:
            out.writerow(
                [
                    exp.scheme,
                    int(exp.precoding),
                    f"{p.snr_db:g}",
                    p.codewords,
                    p.bits,
                    p.bit_errors,
                    f"{p.ber:.10g}",
                ]
            )

    _atomic_write(path, emit)


def write_pep_csv(path, exp: Experiment, pair, points):
    """Paired empirical/analytic PEP results as CSV, written atomically."""

    def emit(handle):
        out = csv.writer(handle)
        out.writerow(
            ["scheme", "pair_i", "pair_j", "snr_db", "trials", "errors",
             "pep", "bound"]
        )
        for p in points:
            out.writerow(
                [
                    exp.scheme,
                    pair[0],
                    pair[1],
                    f"{p.snr_db:g}",
                    p.trials,
                    p.errors,
                    f"{p.pep:.10g}",
                    f"{p.bound:.10g}",
                ]
            )

    _atomic_write(path, emit)


def write_json(path, payload):
    """Pretty-printed JSON with stable key order, written atomically."""
    _atomic_write(path, lambda h: json.dump(payload, h, indent=2, sort_keys=True))
