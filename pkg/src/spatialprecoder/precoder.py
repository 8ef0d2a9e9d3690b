"""Pairwise-error-probability-minimising spatial precoders.

Given the eigen-mode gains ``t_i`` (transmit side) and ``r_j`` (receive side)
of the aperture bases, the optimal power allocation minimises

    -sum_j sum_i log(1 + t_i q_i r_j)    s.t.  q >= 0, sum q = budget,

whose KKT stationarity condition on active modes is

    level = sum_j r_j t_i / (1 + r_j t_i q_i).

For one receive branch this is classical water-filling; for two and three
branches the per-mode condition is a quadratic / cubic with a closed-form
positive root; for any branch count the sum is strictly decreasing in
``q_i`` so a safeguarded scalar root-find gives the unique positive root.
The budget fixes the outer level by bisection: total power is monotone in
the level.

The coherent precoder uses budget ``n_T * snr * beta / 4`` and scale
``sqrt(4 / (beta * snr))``; the differential precoder uses budget
``n_T * snr * beta / (8 + beta)`` and scale ``sqrt((8 + beta) / (beta * snr))``.
Both assemble ``F = scale * U_T @ diag(sqrt(q))``.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from .arrays import ApertureBasis

__all__ = [
    "EigenmodeProfile",
    "AllocationBudget",
    "PrecoderSolution",
    "SingularModeProfileError",
    "WaterfillError",
    "eigenmodes",
    "waterfill_miso",
    "waterfill_two_rx",
    "waterfill_three_rx",
    "waterfill_general",
    "kkt_level_residuals",
    "coherent_precoder",
    "differential_precoder",
    "coherent_budget",
    "differential_budget",
    "pep_bound_coherent",
    "pep_bound_differential",
]

#: relative threshold below which a squared singular value counts as zero rank
RANK_TOL = 1e-9

#: relative convergence target for water levels and per-mode roots
LEVEL_TOL = 1e-12

_MAX_BISECT = 200


class SingularModeProfileError(ValueError):
    """Raised when a PEP bound is requested for a singular channel covariance."""


class WaterfillError(RuntimeError):
    """Raised when a water-filling solve fails to converge."""


@dataclass(frozen=True)
class EigenmodeProfile:
    """Squared singular values of the aperture bases, sorted descending.

    ``t`` has length ``n_T`` (zero-padded if the transmit aperture supports
    fewer modes than antennas), ``r`` likewise for the receiver.  ``u_tx``
    holds the left singular vectors of the transmit basis in matching order.
    ``tx_rank_deficient`` flags transmit gains below ``1e-9`` of the largest,
    which invalidates the PEP bounds.
    """

    t: np.ndarray
    r: np.ndarray
    u_tx: np.ndarray
    tx_rank_deficient: bool = False

    @property
    def n_tx(self) -> int:
        return self.t.size

    @property
    def n_rx(self) -> int:
        return self.r.size


def _squared_singulars(basis: ApertureBasis):
    u, s, _ = np.linalg.svd(basis.matrix)
    vals = np.zeros(basis.n_antennas)
    vals[: s.size] = s[: basis.n_antennas] ** 2
    return vals, u


def eigenmodes(j_tx: ApertureBasis, j_rx: ApertureBasis) -> EigenmodeProfile:
    """Eigen-mode gains of a transmit/receive aperture pair."""
    t, u_tx = _squared_singulars(j_tx)
    r, _ = _squared_singulars(j_rx)
    deficient = bool(t.min() < RANK_TOL * t.max())
    if deficient:
        warnings.warn(
            "transmit aperture is numerically rank deficient; "
            "PEP bounds are not valid for this geometry",
            stacklevel=2,
        )
    return EigenmodeProfile(t=t, r=r, u_tx=u_tx, tx_rank_deficient=deficient)


@dataclass(frozen=True)
class AllocationBudget:
    """Total mode power with a record of which scheme produced it."""

    value: float
    origin: str

    def __post_init__(self):
        if self.origin not in ("coherent", "differential"):
            raise ValueError("origin must be 'coherent' or 'differential'")
        if self.value <= 0:
            raise ValueError("budget must be positive")


def coherent_budget(n_tx: int, beta: float, snr: float) -> AllocationBudget:
    return AllocationBudget(value=n_tx * snr * beta / 4.0, origin="coherent")


def differential_budget(n_tx: int, beta: float, snr: float) -> AllocationBudget:
    return AllocationBudget(
        value=n_tx * snr * beta / (8.0 + beta), origin="differential"
    )


@dataclass(frozen=True)
class PrecoderSolution:
    """Optimal allocation, its water level and the assembled precoder."""

    allocation: np.ndarray
    level: float
    active_set: tuple
    matrix: np.ndarray
    budget: AllocationBudget


def _as_budget_value(budget):
    value = budget.value if isinstance(budget, AllocationBudget) else float(budget)
    if value <= 0:
        raise ValueError("budget must be positive")
    return value


def waterfill_miso(t, budget):
    """Classical water-filling against a single receive branch.

    Active modes receive ``1/level - 1/t_i``; the level follows exactly from
    the active-set candidate with the most modes that stays consistent.
    """
    t = np.asarray(t, dtype=float)
    budget = _as_budget_value(budget)
    if np.all(t <= 0):
        raise ValueError("at least one transmit gain must be positive")
    order = np.argsort(t)[::-1]
    ts = t[order]
    n_pos = int(np.sum(ts > 0))
    for k in range(n_pos, 0, -1):
        inv_level = (budget + np.sum(1.0 / ts[:k])) / k
        if inv_level >= 1.0 / ts[k - 1]:
            q = np.zeros_like(t)
            q[order[:k]] = inv_level - 1.0 / ts[:k]
            return q
    raise WaterfillError("no consistent active set found")  # pragma: no cover


def _budget_slope(level, t, r, q):
    """d(sum q)/d(level), from the implicit KKT stationarity condition.

    Each active ``q_i`` satisfies ``g_i(q_i) = level`` with ``g_i`` strictly
    decreasing, so ``dq_i/dlevel = 1 / g_i'(q_i)`` regardless of how the root
    was obtained.
    """
    active = q > 0
    if not np.any(active):
        return -np.inf
    ti = t[active][:, None]
    qi = q[active][:, None]
    d = 1.0 + r[None, :] * ti * qi
    gp = -np.sum((r[None, :] * ti) ** 2 / d ** 2, axis=1)
    return float(np.sum(1.0 / gp))


def _miso_level(gains, budget):
    """Exact single-branch water level for gains ``g_i``: q = 1/level - 1/g."""
    g = np.sort(gains[gains > 0])[::-1]
    for k in range(g.size, 0, -1):
        inv_level = (budget + np.sum(1.0 / g[:k])) / k
        if inv_level >= 1.0 / g[k - 1]:
            return 1.0 / inv_level
    return float(g[0])  # pragma: no cover


def _outer_level_solve(q_of_level, t, r, budget):
    """Find the water level meeting the budget: total power is monotone in it.

    Safeguarded Newton inside a bisection bracket; the Newton slope comes
    from the implicit KKT condition so any per-mode solver can plug in.
    The single-branch closed form seeds the bracket near the answer.
    """
    t = np.asarray(t, dtype=float)
    r = np.asarray(r, dtype=float)
    r_sum = float(r[r > 0].sum())
    hi = float(np.max(t) * r_sum)  # all modes shut off at or above this level
    lo = min(hi / 2.0, _miso_level(t * r_sum, budget))
    for _ in range(64):
        if q_of_level(lo).sum() >= budget:
            break
        lo /= 2.0
    else:
        raise WaterfillError("could not bracket the water level")
    level = min(lo * 2.0, 0.5 * (lo + hi))
    q = q_of_level(level)
    for _ in range(_MAX_BISECT):
        excess = q.sum() - budget
        if abs(excess) <= LEVEL_TOL * budget:
            break
        if excess > 0:
            lo = level
        else:
            hi = level
        if (hi - lo) <= 1e-16 * hi:
            break
        slope = _budget_slope(level, t, r, q)
        new = level - excess / slope if slope < 0 and np.isfinite(slope) else np.nan
        if not (lo < new < hi):
            new = 0.5 * (lo + hi)
        level = new
        q = q_of_level(level)
    return q, level


def waterfill_two_rx(t, r1, r2, budget):
    """Closed-form allocation for two receive branches.

    Per active mode the KKT condition is the quadratic
    ``level*r1*r2*t^2 q^2 + (level*t*(r1+r2) - 2 r1 r2 t^2) q
    + (level - t*(r1+r2)) = 0`` whose positive root is taken.
    """
    t = np.asarray(t, dtype=float)
    if r1 <= 0 or r2 <= 0:
        raise ValueError("receive gains must be positive")
    budget = _as_budget_value(budget)
    if np.all(t <= 0):
        raise ValueError("at least one transmit gain must be positive")

    def q_of_level(level):
        q = np.zeros_like(t)
        active = (t > 0) & (level < t * (r1 + r2))
        ti = t[active]
        a = (2.0 * r1 * r2 * ti ** 2 - level * ti * (r1 + r2)) / (
            2.0 * level * r1 * r2 * ti ** 2
        )
        k = (level ** 2 * ti ** 2 * (r1 - r2) ** 2 + 4.0 * r1 ** 2 * r2 ** 2 * ti ** 4) / (
            2.0 * level * r1 * r2 * ti ** 2
        ) ** 2
        q[active] = a + np.sqrt(k)
        return q

    q, _ = _outer_level_solve(q_of_level, t, np.array([r1, r2]), budget)
    return q


def _cubic_positive_root(a3, a2, a1, a0):
    """Largest real root of a cubic via the Cardano resolvents, elementwise.

    For the water-filling cubic the largest real root is the unique positive
    one whenever the mode is active.
    """
    q = (3.0 * a1 * a3 - a2 ** 2) / (9.0 * a3 ** 2)
    r = (9.0 * a1 * a2 * a3 - 27.0 * a0 * a3 ** 2 - 2.0 * a2 ** 3) / (54.0 * a3 ** 3)
    disc = q ** 3 + r ** 2
    # disc >= 0: one real root, real cube roots apply; disc < 0: the real
    # parts of the principal complex cube roots pick the largest real root
    real_branch = np.cbrt(r + np.sqrt(np.maximum(disc, 0.0))) + np.cbrt(
        r - np.sqrt(np.maximum(disc, 0.0))
    )
    s = (r + 1j * np.sqrt(np.maximum(-disc, 0.0))) ** (1.0 / 3.0)
    trig_branch = 2.0 * s.real
    return -a2 / (3.0 * a3) + np.where(disc >= 0, real_branch, trig_branch)


def waterfill_three_rx(t, r, budget):
    """Closed-form allocation for three receive branches (cubic per mode)."""
    t = np.asarray(t, dtype=float)
    r = np.asarray(r, dtype=float)
    if r.shape != (3,):
        raise ValueError("expected exactly three receive gains")
    if np.any(r <= 0):
        raise ValueError("receive gains must be positive")
    budget = _as_budget_value(budget)
    if np.all(t <= 0):
        raise ValueError("at least one transmit gain must be positive")
    r_sum = r.sum()
    e2 = r[0] * r[1] + r[0] * r[2] + r[1] * r[2]
    e3 = r[0] * r[1] * r[2]

    def q_of_level(level):
        q = np.zeros_like(t)
        active = (t > 0) & (level < t * r_sum)
        ti = t[active]
        a3 = level * e3 * ti ** 3
        a2 = level * ti ** 2 * e2 - 3.0 * e3 * ti ** 3
        a1 = level * ti * r_sum - 2.0 * ti ** 2 * e2
        a0 = level - ti * r_sum
        q[active] = _cubic_positive_root(a3, a2, a1, a0)
        return q

    q, _ = _outer_level_solve(q_of_level, t, r, budget)
    return q


def _roots_general(level, t_act, r, guess=None):
    """Positive roots of ``level = sum_j r_j t_i / (1 + r_j t_i q_i)``.

    Vectorised over the active modes ``t_act``.  The right-hand side is
    strictly decreasing in ``q_i``, so each root is unique; safeguarded
    Newton inside a per-mode shrinking bracket, warm-started from the
    previous outer iteration when available.
    """
    rt = r[None, :] * t_act[:, None]
    lo = np.zeros_like(t_act)
    hi = np.full_like(t_act, r.size / level)  # rhs(hi) <= n_R / hi <= level
    q = np.minimum(1.0 / level, hi)
    if guess is not None:
        q = np.where((guess > 0) & (guess < hi), guess, q)
    for _ in range(_MAX_BISECT):
        d = 1.0 + rt * q[:, None]
        rd = rt / d
        f = rd.sum(axis=1) - level
        pos = f > 0
        lo = np.where(pos, q, lo)
        hi = np.where(pos, hi, q)
        fp = -(rd * rd).sum(axis=1)
        new = q - f / fp
        outside = (new <= lo) | (new >= hi)
        new = np.where(outside, 0.5 * (lo + hi), new)
        if np.abs(new - q).max() <= LEVEL_TOL * new.max():
            return new
        q = new
    return q


def waterfill_general(t, r, budget):
    """Generalised water-filling for any number of receive branches.

    Reduces to :func:`waterfill_miso` for one branch and matches the
    closed-form solvers for two and three; receive branches with zero gain
    drop out of the stationarity sum.
    """
    t = np.asarray(t, dtype=float)
    r = np.asarray(r, dtype=float)
    budget = _as_budget_value(budget)
    if np.all(t <= 0):
        raise ValueError("at least one transmit gain must be positive")
    if np.any(r < 0) or r.sum() <= 0:
        raise ValueError("receive gains must be non-negative with positive sum")
    r_pos = r[r > 0]
    r_sum = r_pos.sum()
    prev = np.zeros_like(t)

    def q_of_level(level):
        q = np.zeros_like(t)
        active = (t > 0) & (level < t * r_sum)
        if np.any(active):
            q[active] = _roots_general(level, t[active], r_pos, prev[active])
        prev[:] = q
        return q

    q, _ = _outer_level_solve(q_of_level, t, r_pos, budget)
    return q


def kkt_level_residuals(t, r, q, level):
    """Stationarity residuals ``level - sum_j r_j t_i / (1 + r_j t_i q_i)``."""
    t = np.asarray(t, dtype=float)
    r = np.asarray(r, dtype=float)
    q = np.asarray(q, dtype=float)
    d = 1.0 + r[None, :] * t[:, None] * q[:, None]
    return level - np.sum(r[None, :] * t[:, None] / d, axis=1)


def _solve_allocation(t, r, budget_value):
    r = np.asarray(r, dtype=float)
    if r.size == 1:
        # single branch: absorb r into the gains, classic water-filling
        return waterfill_miso(np.asarray(t, dtype=float) * r[0], budget_value)
    if r.size == 2 and np.all(r > 0):
        return waterfill_two_rx(t, r[0], r[1], budget_value)
    if r.size == 3 and np.all(r > 0):
        return waterfill_three_rx(t, r, budget_value)
    return waterfill_general(t, r, budget_value)


def _implied_level(t, r, q):
    t = np.asarray(t, dtype=float)
    r = np.asarray(r, dtype=float)
    active = q > 0
    if not np.any(active):
        return float(np.max(t) * r.sum())
    i = int(np.argmax(q))
    return float(np.sum(r * t[i] / (1.0 + r * t[i] * q[i])))


def _assemble(profile: EigenmodeProfile, budget: AllocationBudget, scale: float):
    q = _solve_allocation(profile.t, profile.r, budget.value)
    level = _implied_level(profile.t, profile.r, q)
    active = tuple(int(i) for i in np.flatnonzero(q > 0))
    f = scale * (profile.u_tx * np.sqrt(q)[None, :])
    return PrecoderSolution(
        allocation=q, level=level, active_set=active, matrix=f, budget=budget
    )


def coherent_precoder(profile: EigenmodeProfile, beta: float, snr: float):
    """Optimal fixed precoder for coherent detection at average SNR ``snr``."""
    if beta <= 0 or snr <= 0:
        raise ValueError("beta and snr must be positive")
    budget = coherent_budget(profile.n_tx, beta, snr)
    return _assemble(profile, budget, np.sqrt(4.0 / (beta * snr)))


def differential_precoder(profile: EigenmodeProfile, beta: float, snr: float):
    """Optimal fixed precoder for differential detection at average SNR ``snr``."""
    if beta <= 0 or snr <= 0:
        raise ValueError("beta and snr must be positive")
    budget = differential_budget(profile.n_tx, beta, snr)
    return _assemble(profile, budget, np.sqrt((8.0 + beta) / (beta * snr)))


def _resolve_bound_inputs(profile_or_cov, f):
    """Kron-factor pieces of ``I + c * R_H (I kron F F^H)`` for either input."""
    f = np.asarray(f, dtype=complex)
    n_tx = f.shape[0]
    ffh = f @ f.conj().T
    if isinstance(profile_or_cov, EigenmodeProfile):
        profile = profile_or_cov
        if profile.tx_rank_deficient or np.min(profile.r) < RANK_TOL * np.max(profile.r):
            raise SingularModeProfileError(
                "channel covariance is singular; the PEP bound does not hold"
            )
        u = profile.u_tx
        core = np.kron(np.diag(profile.r), np.diag(profile.t)) @ np.kron(
            np.eye(profile.n_rx), u.conj().T @ ffh @ u
        )
        return core, profile.n_tx * profile.n_rx
    cov = np.asarray(profile_or_cov, dtype=complex)
    dim = cov.shape[0]
    n_rx = dim // n_tx
    w = np.linalg.eigvalsh((cov + cov.conj().T) / 2.0)
    if w.min() < RANK_TOL * w.max():
        raise SingularModeProfileError(
            "channel covariance is singular; the PEP bound does not hold"
        )
    core = cov @ np.kron(np.eye(n_rx), ffh)
    return core, dim


def _logdet_bound(core, dim, coeff):
    sign, logdet = np.linalg.slogdet(np.eye(dim) + coeff * core)
    if sign.real <= 0:  # pragma: no cover - determinant of I + PSD is positive
        raise ArithmeticError("bound determinant is not positive")
    return float(logdet)


def pep_bound_coherent(profile_or_cov, f, beta, snr):
    """Chernoff-style upper bound on the coherent pairwise error probability.

    ``1 / det(I + (snr * beta / 4) R_H (I kron F F^H))`` evaluated through a
    log-determinant; accepts either an :class:`EigenmodeProfile` (isotropic
    scattering) or an explicit channel covariance matrix.
    """
    core, dim = _resolve_bound_inputs(profile_or_cov, f)
    return float(np.exp(-_logdet_bound(core, dim, snr * beta / 4.0)))


def pep_bound_differential(profile_or_cov, f, beta, snr):
    """High-SNR upper bound on the differential pairwise error probability.

    ``(1/2) ((8 + beta)/8)^(-n_T n_R) / det(I + (beta snr / (8 + beta))
    R_H (I kron F F^H))``.
    """
    core, dim = _resolve_bound_inputs(profile_or_cov, f)
    logdet = _logdet_bound(core, dim, beta * snr / (8.0 + beta))
    prefactor = -dim * np.log((8.0 + beta) / 8.0)
    return float(0.5 * np.exp(prefactor - logdet))
