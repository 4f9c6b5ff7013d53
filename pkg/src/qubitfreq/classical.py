"""Classical frequency estimation on decimated measurement records.

Three estimators operate on coarse samples y_n (sums of fine record
increments, about fifty per oscillation cycle): maximization of the
periodogram, the Quinn-Fernandes iterative notch-filter method, and MUSIC
on the eigenvectors of a small Toeplitz autocovariance matrix. A
Butterworth bandpass pre-filter (+-10% of the nominal frequency) tames the
occasional large MUSIC outliers.
"""

import cmath
import math
from dataclasses import dataclass

import numpy as np
from scipy import signal

from .common import (BandEmpty, BandOutOfRange, FlatSpectrum,
                     FrequencyEstimate, IncompatibleSteps, NoConvergence,
                     OutOfRange, RecordTooShort)

DEFAULT_SAMPLES_PER_CYCLE = 50
DEFAULT_MUSIC_ORDER = 5
DEFAULT_FILTER_ORDER = 4
DEFAULT_FRAC_BAND = 0.10
PERIODOGRAM_PEAK_MEDIAN_MIN = 10.0
MUSIC_PEAK_MEDIAN_MIN = 5.0


@dataclass
class DiscreteRecord:
    """Coarse samples y_n at step delta_t."""

    samples: np.ndarray
    delta_t: float

    @property
    def n(self):
        return len(self.samples)

    @property
    def times(self):
        return np.arange(self.n) * self.delta_t

    @property
    def nyquist(self):
        return math.pi / self.delta_t

    def prefix(self, n):
        return DiscreteRecord(samples=self.samples[:n],
                              delta_t=self.delta_t)


@dataclass
class ToeplitzCov:
    """Symmetric Toeplitz matrix of autocovariances C_0 .. C_{M-1}."""

    order: int
    autocov: np.ndarray

    def matrix(self):
        idx = np.abs(np.subtract.outer(np.arange(self.order),
                                       np.arange(self.order)))
        return self.autocov[idx]


@dataclass
class EigenPairs:
    """Eigenvalues in ascending order with orthonormal eigenvectors
    (columns)."""

    values: np.ndarray
    vectors: np.ndarray


def decimate(record, samples_per_cycle=DEFAULT_SAMPLES_PER_CYCLE,
             omega_nominal=2.0 * math.pi):
    """Sum fine increments into coarse samples, samples_per_cycle per
    nominal oscillation period."""
    period = 2.0 * math.pi / omega_nominal
    delta_t = period / samples_per_cycle
    ratio = delta_t / record.dt
    steps = int(round(ratio))
    if steps < 1 or abs(ratio - steps) > 1e-9 * steps:
        raise IncompatibleSteps(
            f"coarse step {delta_t} is not an integer multiple of fine "
            f"step {record.dt}")
    n = record.n // steps
    y = record.increments[:n * steps].reshape(n, steps).sum(axis=1)
    return DiscreteRecord(samples=y, delta_t=delta_t)


def snr_db(k, delta_t):
    """Per-sample signal-to-noise ratio of the record, 10 log10(4 k dt)."""
    if k <= 0 or delta_t <= 0:
        raise ValueError("k and delta_t must be positive")
    return 10.0 * math.log10(4.0 * k * delta_t)


def periodogram(disc, omega):
    """|sum_n y_n exp(-i omega n dt)|^2 with the sample mean removed.

    omega may be a scalar or an array of trial frequencies.
    """
    y = disc.samples - disc.samples.mean()
    t = disc.times
    om = np.atleast_1d(np.asarray(omega, dtype=float))
    out = np.abs(np.exp(-1j * np.outer(om, t)) @ y) ** 2
    return out[0] if np.isscalar(omega) or np.ndim(omega) == 0 else out


def _periodogram_scalar(y, dt, omega):
    # Horner-style accumulation; y already mean-removed
    ph = cmath.exp(-1j * omega * dt)
    acc = 0.0 + 0.0j
    f = 1.0 + 0.0j
    for v in y:
        acc += v * f
        f *= ph
    return abs(acc) ** 2


def _golden_max(fun, lo, hi, rel_tol):
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = fun(c), fun(d)
    while (b - a) > rel_tol * abs(0.5 * (a + b)):
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = fun(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = fun(d)
    return 0.5 * (a + b)


def periodogram_max(disc, band, oversample=8,
                    peak_median_min=PERIODOGRAM_PEAK_MEDIAN_MIN,
                    refine_tol=1e-6):
    """Maximize the periodogram over a frequency band.

    Coarse search on a zero-padded FFT grid of spacing
    2*pi/(N*dt*oversample), then golden-section refinement on the bracket
    around the grid maximum. Raises FlatSpectrum when the in-band
    peak/median power ratio falls below peak_median_min (no detectable
    line).
    """
    lo, hi = band
    if not (0.0 < lo < hi < disc.nyquist):
        raise BandEmpty(f"band ({lo}, {hi}) not inside (0, Nyquist)")
    y = disc.samples - disc.samples.mean()
    n = disc.n
    if n < 2:
        raise BandEmpty("need at least 2 samples")
    nfft = n * oversample
    power = np.abs(np.fft.rfft(y, nfft)) ** 2
    omegas = 2.0 * math.pi * np.arange(len(power)) / (nfft * disc.delta_t)
    in_band = (omegas >= lo) & (omegas <= hi)
    if not np.any(in_band):
        raise BandEmpty("no grid points inside band; widen it or oversample")
    band_power = power[in_band]
    band_omega = omegas[in_band]
    i_pk = int(np.argmax(band_power))
    peak = float(band_power[i_pk])
    med = float(np.median(band_power))
    ratio = peak / med if med > 0 else math.inf
    if ratio < peak_median_min:
        raise FlatSpectrum(
            f"peak/median = {ratio:.2f} < {peak_median_min}")

    # second-highest local maximum, for the diagnostics
    interior = band_power[1:-1]
    local = (interior > band_power[:-2]) & (interior >= band_power[2:])
    peaks = np.sort(interior[local])[::-1]
    second_ratio = float(peaks[1] / peaks[0]) if len(peaks) > 1 else 0.0

    glo = band_omega[max(i_pk - 1, 0)]
    ghi = band_omega[min(i_pk + 1, len(band_omega) - 1)]
    if glo == ghi:
        omega_hat = float(band_omega[i_pk])
    else:
        omega_hat = _golden_max(
            lambda om: _periodogram_scalar(y, disc.delta_t, om),
            glo, ghi, refine_tol)
    return FrequencyEstimate(
        mean=omega_hat, std=0.0, map=omega_hat, method="periodogram",
        diagnostics={"grid_peak": peak, "peak_median_ratio": ratio,
                     "second_peak_ratio": second_ratio})


def quinn_fernandes(disc, omega_init, tol=1e-6, max_iter=20,
                    variant="resonator"):
    """Iterative notch-filter frequency estimator.

    Starting from alpha_1 = 2 cos(omega_init dt), each pass filters the
    record through the two-pole resonator

        zeta_n = y_n + alpha_j zeta_{n-1} - zeta_{n-2}

    and re-estimates beta_j = sum (zeta_n + zeta_{n-2}) zeta_{n-1} /
    sum zeta_{n-1}^2, stopping when |alpha_j - beta_j| <= tol. The
    frequency is acos(beta/2)/dt. variant="as_printed" flips the recursion
    signs (zeta_n = y_n - alpha zeta_{n-1} + zeta_{n-2}); the resonator
    form is the one that converges on synthetic sinusoids and is the
    default.
    """
    dt = disc.delta_t
    if not (0.0 < omega_init * dt < math.pi):
        raise OutOfRange(f"omega_init * dt = {omega_init * dt} not in "
                         "(0, pi)")
    if tol <= 0:
        raise ValueError("tol must be positive")
    x = disc.samples
    alpha = 2.0 * math.cos(omega_init * dt)
    trace = []
    converged = False
    beta = alpha
    for _ in range(max_iter):
        if variant == "resonator":
            a = [1.0, -alpha, 1.0]
        elif variant == "as_printed":
            a = [1.0, alpha, -1.0]
        else:
            raise ValueError(f"unknown variant {variant!r}")
        # an unstable variant is allowed to blow up to inf/nan; that is
        # caught below as OutOfRange rather than warned about
        with np.errstate(over="ignore", invalid="ignore"):
            zeta = signal.lfilter([1.0], a, x)
            num = float(zeta[1:] @ zeta[:-1]) + float(zeta[:-2] @ zeta[1:-1])
            den = float(zeta[:-1] @ zeta[:-1])
        if den == 0.0:
            raise OutOfRange("filtered record vanished")
        beta = num / den
        trace.append((alpha, beta))
        if not math.isfinite(beta) or abs(beta) > 2.0:
            raise OutOfRange(f"beta = {beta} outside [-2, 2]; estimate "
                             "diverged")
        if abs(alpha - beta) <= tol:
            converged = True
            break
        alpha = beta
    omega_hat = math.acos(0.5 * beta) / dt
    return FrequencyEstimate(
        mean=omega_hat, std=0.0, map=omega_hat, method="quinn_fernandes",
        diagnostics={"trace": trace, "converged": converged,
                     "iterations": len(trace)})


def autocovariance_toeplitz(disc, order):
    """Mean-removed biased autocovariances C_0 .. C_{order-1} assembled as
    a symmetric Toeplitz matrix."""
    if order <= 2:
        raise ValueError("autocovariance order must be > 2")
    n = disc.n
    if n < 4 * order:
        raise RecordTooShort(f"need at least {4 * order} samples, "
                             f"have {n}")
    y = disc.samples - disc.samples.mean()
    acov = np.array([float(y[j:] @ y[:n - j]) / n for j in range(order)])
    return ToeplitzCov(order=order, autocov=acov)


def symmetric_eig(cov, tol_factor=1e-12, max_sweeps=60):
    """Cyclic Jacobi eigendecomposition of a small symmetric matrix.

    Sweeps until the off-diagonal Frobenius norm drops below
    tol_factor * ||C||_F. Returns eigenpairs sorted ascending.
    """
    a = cov.matrix() if isinstance(cov, ToeplitzCov) else np.array(
        cov, dtype=float)
    m = a.shape[0]
    if a.shape != (m, m) or m > 32:
        raise ValueError("expected a small square matrix (M <= 32)")
    a = a.copy()
    v = np.eye(m)
    norm = np.linalg.norm(a)
    if norm == 0.0:
        return EigenPairs(values=np.zeros(m), vectors=v)
    target = tol_factor * norm
    for _ in range(max_sweeps):
        off = math.sqrt(2.0 * sum(
            a[p, q] ** 2 for p in range(m - 1) for q in range(p + 1, m)))
        if off <= target:
            order = np.argsort(np.diag(a), kind="stable")
            return EigenPairs(values=np.diag(a)[order].copy(),
                              vectors=v[:, order].copy())
        for p in range(m - 1):
            for q in range(p + 1, m):
                apq = a[p, q]
                if abs(apq) <= target / (m * m):
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = math.copysign(1.0, theta) / (
                    abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                rot_p = c * a[:, p] - s * a[:, q]
                rot_q = s * a[:, p] + c * a[:, q]
                a[:, p], a[:, q] = rot_p, rot_q
                a[p, :], a[q, :] = c * a[p, :] - s * a[q, :], \
                    s * a[p, :] + c * a[q, :]
                v[:, p], v[:, q] = c * v[:, p] - s * v[:, q], \
                    s * v[:, p] + c * v[:, q]
    raise NoConvergence(f"Jacobi sweeps exceeded {max_sweeps}")


def music_spectrum(disc, omegas, order=DEFAULT_MUSIC_ORDER, p=1,
                   noise_dim=None):
    """MUSIC pseudo-spectrum S(omega) = 1 / sum_m |e*(omega) nu_m|^2 over
    the noise-subspace eigenvectors."""
    if p >= order:
        raise ValueError("need p < order")
    if noise_dim is None:
        noise_dim = order - 2 * p
    if not 0 < noise_dim < order:
        raise ValueError(f"noise_dim {noise_dim} must lie in (0, order)")
    cov = autocovariance_toeplitz(disc, order)
    pairs = symmetric_eig(cov)
    noise = pairs.vectors[:, :noise_dim]
    m_idx = np.arange(order)
    steer = np.exp(1j * np.outer(omegas, m_idx) * disc.delta_t)
    denom = (np.abs(steer.conj() @ noise) ** 2).sum(axis=1)
    return 1.0 / np.maximum(denom, 1e-300)


def music_estimate(disc, order=DEFAULT_MUSIC_ORDER, p=1, band=None,
                   noise_dim=None, grid_spacing=None,
                   peak_median_min=MUSIC_PEAK_MEDIAN_MIN):
    """MUSIC frequency estimate: peak of the pseudo-spectrum over a band.

    noise_dim defaults to order - 2*p: a real sinusoid occupies a rank-2
    signal subspace (a conjugate pair of complex lines), so both must be
    excluded from the noise subspace or the pseudo-spectrum peak collapses
    onto the band edge. The dense-grid peak is refined by parabolic
    interpolation on log S. A peak/median ratio below peak_median_min sets
    diagnostics["low_confidence"] instead of failing: the caller decides
    what to do with weak lines.
    """
    if band is None:
        raise BandEmpty("a search band is required")
    lo, hi = band
    if not (0.0 < lo < hi < disc.nyquist):
        raise BandEmpty(f"band ({lo}, {hi}) not inside (0, Nyquist)")
    if grid_spacing is None:
        grid_spacing = 1e-3 * 0.5 * (lo + hi)
    n_grid = max(int(math.ceil((hi - lo) / grid_spacing)) + 1, 8)
    omegas = np.linspace(lo, hi, n_grid)
    spec = music_spectrum(disc, omegas, order=order, p=p,
                          noise_dim=noise_dim)
    i_pk = int(np.argmax(spec))
    peak = float(spec[i_pk])
    med = float(np.median(spec))
    ratio = peak / med if med > 0 else math.inf

    if 0 < i_pk < n_grid - 1:
        la, lb, lc = np.log(spec[i_pk - 1:i_pk + 2])
        denom = la - 2.0 * lb + lc
        shift = 0.5 * (la - lc) / denom if denom < 0 else 0.0
        shift = min(max(shift, -0.5), 0.5)
        omega_hat = float(omegas[i_pk] + shift * (omegas[1] - omegas[0]))
    else:
        omega_hat = float(omegas[i_pk])
    return FrequencyEstimate(
        mean=omega_hat, std=0.0, map=omega_hat, method="music",
        diagnostics={"peak": peak, "peak_median_ratio": ratio,
                     "low_confidence": ratio < peak_median_min})


def butterworth_bandpass(disc, omega_center, frac_band=DEFAULT_FRAC_BAND,
                         order=DEFAULT_FILTER_ORDER):
    """Causal Butterworth bandpass with edges at omega_center*(1 -+ frac).

    Implemented as a bilinear-transformed cascade of second-order sections.
    Returns (filtered record, diagnostics); diagnostics carries the section
    coefficients, the slowest pole radius, and the number of startup
    samples (about five time constants) to treat as transient.
    """
    lo = omega_center * (1.0 - frac_band)
    hi = omega_center * (1.0 + frac_band)
    if not (0.0 < lo < hi < disc.nyquist):
        raise BandOutOfRange(
            f"passband ({lo}, {hi}) not strictly inside (0, Nyquist)")
    fs = 2.0 * math.pi / disc.delta_t
    sos = signal.butter(order, [lo, hi], btype="bandpass", output="sos",
                        fs=fs)
    poles = np.concatenate([
        np.roots(section[3:]) for section in sos])
    pole_max = float(np.max(np.abs(poles)))
    if pole_max >= 1.0:
        raise BandOutOfRange(f"unstable design: pole radius {pole_max}")
    transient = int(math.ceil(5.0 / -math.log(pole_max)))
    filtered = signal.sosfilt(sos, disc.samples)
    out = DiscreteRecord(samples=filtered, delta_t=disc.delta_t)
    diag = {"sos": sos, "pole_max": pole_max,
            "transient_samples": transient}
    return out, diag
