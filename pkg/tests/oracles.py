"""Independent reference implementations used as test oracles.

Everything here is deliberately written from first principles (series,
quadrature, enumeration, projected gradient) so it shares no code with the
package paths it checks.
"""

import math

import numpy as np
from scipy.integrate import quad


def bessel_j_series(order, x):
    """Bessel J_n by ascending power series, |x| <= 12.

    Terms are accumulated until the ratio falls below 1e-17; accuracy is
    better than 1e-12 absolute in this range.
    """
    if abs(x) > 12:
        raise ValueError("series oracle limited to |x| <= 12")
    n = abs(int(order))
    half = x / 2.0
    term = half ** n / math.factorial(n)
    total = term
    k = 0
    while True:
        k += 1
        term *= -(half * half) / (k * (k + n))
        total += term
        if abs(term) <= 1e-17 * max(abs(total), 1e-30):
            break
    if order < 0 and n % 2 == 1:
        total = -total
    return total


def smf_series(radius, azimuth, order):
    """Spatial-to-mode function evaluated through the series oracle."""
    return bessel_j_series(order, 2.0 * np.pi * radius) * np.exp(
        1j * order * (azimuth - np.pi / 2.0)
    )


def i0_series(z):
    """Modified Bessel I_0 with complex argument by power series."""
    z = complex(z)
    term = 1.0 + 0j
    total = term
    w = z * z / 4.0
    k = 0
    while True:
        k += 1
        term *= w / (k * k)
        total += term
        if abs(term) <= 1e-16 * max(abs(total), 1e-30):
            break
    return total


def modal_entry_quadrature(spread, mean_angle, mode_diff):
    """Uniform-limited APD Fourier coefficient by numeric quadrature."""

    def integrand_re(phi):
        return np.cos(mode_diff * phi) / (2.0 * spread)

    def integrand_im(phi):
        return np.sin(mode_diff * phi) / (2.0 * spread)

    lo, hi = mean_angle - spread, mean_angle + spread
    re, _ = quad(integrand_re, lo, hi, epsabs=1e-13, epsrel=1e-13)
    im, _ = quad(integrand_im, lo, hi, epsabs=1e-13, epsrel=1e-13)
    return re + 1j * im


def allocation_objective(t, r, q):
    """Negative sum-log objective of the precoder optimisation."""
    t = np.asarray(t, dtype=float)
    r = np.asarray(r, dtype=float)
    q = np.asarray(q, dtype=float)
    return -np.sum(np.log1p(t[:, None] * q[:, None] * r[None, :]))


def miso_active_set_enumeration(t, budget):
    """Water-filling by brute-force enumeration of active sets."""
    t = np.asarray(t, dtype=float)
    n = t.size
    best = None
    for mask in range(1, 2 ** n):
        active = np.array([(mask >> i) & 1 for i in range(n)], dtype=bool)
        if np.any(t[active] <= 0):
            continue
        inv_level = (budget + np.sum(1.0 / t[active])) / active.sum()
        q = np.zeros(n)
        q[active] = inv_level - 1.0 / t[active]
        if np.any(q[active] < -1e-12):
            continue
        if np.any(~active) and np.any(inv_level > 1.0 / t[~active] + 1e-12):
            continue
        if best is None or allocation_objective(t, [1.0], q) < best[0] - 1e-15:
            best = (allocation_objective(t, [1.0], q), q)
    return best[1]


def project_simplex(v, total):
    """Euclidean projection onto {q >= 0, sum q = total}."""
    v = np.asarray(v, dtype=float)
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - total
    rho = np.nonzero(u - css / (np.arange(v.size) + 1) > 0)[0][-1]
    theta = css[rho] / (rho + 1.0)
    return np.maximum(v - theta, 0.0)


def projected_gradient_allocation(t, r, budget, iters=20000):
    """Convex reference solver: projected gradient on the simplex."""
    t = np.asarray(t, dtype=float)
    r = np.asarray(r, dtype=float)
    q = np.full(t.size, budget / t.size)
    step = 0.5 * budget / max(1.0, np.max(t) * np.sum(r))
    for _ in range(iters):
        grad = -np.sum(
            t[:, None] * r[None, :] / (1.0 + t[:, None] * q[:, None] * r[None, :]),
            axis=1,
        )
        q = project_simplex(q - step * grad, budget)
    return q


def random_feasible_allocations(rng, n, budget, count):
    """Uniform Dirichlet sample of feasible allocations."""
    w = rng.dirichlet(np.ones(n), size=count)
    return w * budget


def mrc2_qpsk_ber(snr):
    """Analytic BER of non-precoded 2x1 Alamouti QPSK over iid Rayleigh.

    Alamouti with the power split across two antennas is two-branch maximal
    ratio combining at branch bit-SNR ``snr / 4``; Gray-coded QPSK then has
    the classical diversity-2 closed form.
    """
    gc = snr / 4.0
    mu = math.sqrt(gc / (1.0 + gc))
    return ((1.0 - mu) / 2.0) ** 2 * (2.0 + mu)


def binomial_sigma(p, n):
    return math.sqrt(max(p * (1.0 - p), 1e-300) / n)
