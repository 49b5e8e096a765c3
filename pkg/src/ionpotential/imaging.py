"""Ion positions from fluorescence images.

Synthetic frames are rendered from Gaussian spots with Poisson noise.  The
extraction sums columns, removes a slowly varying background with a masked
moving median, then locates each ion by a count-weighted centroid refined
with a pixel-integrated Gaussian fit.
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.optimize import least_squares
from scipy.signal import find_peaks
from scipy.special import erf

from .physics import DEFAULT_UNITS, IonString, UnitSystem

log = logging.getLogger(__name__)

DEFAULT_PITCH_UM = 2.0
DEFAULT_EXPOSURE_S = 0.1
DEFAULT_PEAK_COUNTS = 1e4
MAD_TO_SIGMA = 1.4826
MERGED_WIDTH_RATIO = 1.1  # a fitted spot this much wider than the PSF hides two ions


class NoPeaksError(ValueError):
    pass


@dataclass(frozen=True)
class Frame:
    counts: np.ndarray  # (rows, columns)
    pitch_um: float = DEFAULT_PITCH_UM
    exposure_s: float = DEFAULT_EXPOSURE_S
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        c = np.asarray(self.counts)
        if c.ndim != 2 or c.size == 0:
            raise ValueError("frame must be a non-empty 2D array")
        if np.any(c < 0):
            raise ValueError("photon counts must be non-negative")
        if not self.pitch_um > 0:
            raise ValueError("pixel pitch must be positive")
        object.__setattr__(self, "counts", c)

    @property
    def shape(self):
        return self.counts.shape


@dataclass(frozen=True)
class Profile1D:
    counts: np.ndarray
    columns: np.ndarray


@dataclass(frozen=True)
class FitConfig:
    psf_sigma_px: float = 1.0
    background_window: int = 25
    threshold_sigma: float = 5.0
    min_separation_px: float = 2.0


@dataclass(frozen=True)
class FitResult:
    positions_px: np.ndarray
    sigma_px: np.ndarray
    amplitudes: np.ndarray
    background: np.ndarray
    pitch_um: float
    merged: np.ndarray  # neighbour closer than min_separation_px, or a broadened spot

    @property
    def positions_um(self) -> np.ndarray:
        return self.positions_px * self.pitch_um

    @property
    def sigma_um(self) -> np.ndarray:
        return self.sigma_px * self.pitch_um


def _pixel_integrated(edges_lo, edges_hi, mu, s):
    r2 = math.sqrt(2.0) * s
    return 0.5 * (erf((edges_hi - mu) / r2) - erf((edges_lo - mu) / r2))


def render_frame(positions_um, psf_sigma_um: float = 2.0, peak_counts: float = DEFAULT_PEAK_COUNTS,
                 background=0.0, pitch_um: float = DEFAULT_PITCH_UM, shape: tuple = (15, 256),
                 seed: Optional[int] = None, exposure_s: float = DEFAULT_EXPOSURE_S) -> Frame:
    """Gaussian ion spots plus background, Poisson-sampled when ``seed`` is given.

    Pixel ``k`` is centred on coordinate ``k * pitch_um``.  ``peak_counts``
    is the integrated count per ion.  ``background`` is counts per pixel:
    a scalar, a per-column array, or a full frame.  Without a seed the
    expected (noiseless) counts are returned.
    """
    rows, cols = shape
    pos = np.asarray(positions_um, dtype=float) / pitch_um
    if not psf_sigma_um > 0:
        raise ValueError("psf_sigma must be positive")
    if peak_counts < 0:
        raise ValueError("peak_counts must be non-negative")
    if pos.size and (pos.min() < 0 or pos.max() > cols - 1):
        raise ValueError("ion positions outside the frame")
    bg = np.broadcast_to(np.asarray(background, dtype=float), shape) if np.ndim(background) != 1 \
        else np.broadcast_to(np.asarray(background, dtype=float)[None, :], shape)
    if np.any(bg < 0):
        raise ValueError("background must be non-negative")
    s = psf_sigma_um / pitch_um
    k = np.arange(cols, dtype=float)
    r = np.arange(rows, dtype=float)
    row_c = 0.5 * (rows - 1)
    row_w = _pixel_integrated(r - 0.5, r + 0.5, row_c, s)
    col_w = np.zeros(cols)
    for p in pos:
        col_w += _pixel_integrated(k - 0.5, k + 0.5, p, s)
    expected = peak_counts * np.outer(row_w, col_w) + bg
    if seed is None:
        counts = expected
    else:
        counts = np.random.default_rng(seed).poisson(expected).astype(float)
    return Frame(counts, pitch_um, exposure_s, {"seed": seed, "psf_sigma_um": psf_sigma_um})


def column_profile(frame: Frame) -> Profile1D:
    c = np.asarray(frame.counts, dtype=float)
    return Profile1D(c.sum(axis=0), np.arange(c.shape[1], dtype=float))


def _padded(y, half):
    # point reflection keeps linear trends intact at the edges
    left = 2 * y[0] - y[1:half + 1][::-1]
    right = 2 * y[-1] - y[-half - 1:-1][::-1]
    return np.concatenate((left, y, right))


def _masked_median(y, mask, window):
    # median of the detrended profile: masked gaps make windows lopsided,
    # which would otherwise bias the median on a sloped background
    idx = np.arange(y.size)
    keep = ~mask if np.count_nonzero(~mask) >= 2 else np.ones(y.size, dtype=bool)
    trend = np.polyval(np.polyfit(idx[keep], y[keep], 1), idx)
    y = y - trend
    half = window // 2
    vals = _padded(y, half)
    m = np.pad(mask, half, mode="reflect")
    # pads hinge on the end samples; drop them if those are masked
    m[:half] |= mask[0]
    m[-half:] |= mask[-1]
    vals[m] = np.nan
    win = sliding_window_view(vals, window)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        med = np.nanmedian(win, axis=1)
    good = np.isfinite(med)
    if not np.any(good):
        return trend + np.median(y)
    return trend + np.interp(idx, idx[good], med[good])


def robust_noise(residual) -> float:
    r = np.asarray(residual, dtype=float)
    return MAD_TO_SIGMA * float(np.median(np.abs(r - np.median(r))))


def estimate_background(profile: Profile1D, window: int = 25, threshold_sigma: float = 5.0,
                        iterations: int = 4) -> np.ndarray:
    """Slowly varying background under a peaked profile.

    Moving median over ``window`` pixels; pixels standing out by more than
    ``threshold_sigma`` robust noise units are masked (with a small guard
    band) and the median is recomputed from the rest, gaps bridged linearly.
    """
    y = np.asarray(profile.counts, dtype=float)
    if window < 3 or window % 2 == 0:
        raise ValueError("window must be odd and at least 3")
    if window > y.size:
        raise ValueError("window wider than the profile")
    mask = np.zeros(y.size, dtype=bool)
    bg = _masked_median(y, mask, window)
    scale = float(np.max(np.abs(y))) if y.size else 0.0
    for _ in range(iterations):
        resid = y - bg
        noise = robust_noise(resid[~mask]) if np.any(~mask) else 0.0
        # Poisson floor from the background level itself
        noise = max(noise, math.sqrt(max(float(np.median(bg)), 0.0)) if noise > 0 else 0.0)
        thr = max(threshold_sigma * noise, 1e-9 * scale)
        new = resid > thr
        # guard band around every flagged pixel
        new = np.convolve(new.astype(float), np.ones(5), mode="same") > 0
        if np.array_equal(new, mask):
            break
        mask = new
        bg = _masked_median(y, mask, window)
    return bg


def _gauss_model(p, k):
    amp, mu, s = p
    return amp * _pixel_integrated(k - 0.5, k + 0.5, mu, s)


def _gauss_jac(p, k):
    amp, mu, s = p
    a, b = k - 0.5 - mu, k + 0.5 - mu
    norm = 1.0 / (math.sqrt(2 * math.pi) * s)
    pa, pb = norm * np.exp(-0.5 * (a / s) ** 2), norm * np.exp(-0.5 * (b / s) ** 2)
    return np.column_stack((_pixel_integrated(k - 0.5, k + 0.5, mu, s),
                            amp * (pa - pb),
                            amp * (a * pa - b * pb) / s))


def fit_positions(profile: Profile1D, background, config: FitConfig = FitConfig(),
                  pitch_um: float = DEFAULT_PITCH_UM) -> FitResult:
    """Sub-pixel ion positions from a background-subtracted column profile.

    Peaks above ``threshold_sigma`` robust noise units are located, a
    count-weighted centroid seeds a joint fit of pixel-integrated Gaussians
    (amplitude, centre, width per spot) over the +-3 PSF-sigma windows, and
    the fit covariance with Poisson weights gives the uncertainty.
    """
    y = np.asarray(profile.counts, dtype=float)
    bg = np.asarray(background, dtype=float)
    if bg.shape != y.shape:
        raise ValueError("background must match the profile length")
    resid = y - bg
    k = np.asarray(profile.columns, dtype=float)
    s0 = config.psf_sigma_px
    noise = robust_noise(resid)
    noise = max(noise, math.sqrt(max(float(np.median(bg)), 1.0)) if noise > 0 else 0.0)
    thr = max(config.threshold_sigma * noise, 1e-9 * float(np.max(np.abs(y), initial=0.0)))
    peaks, _ = find_peaks(resid, height=thr, prominence=thr)
    if peaks.size == 0:
        raise NoPeaksError("no peaks found above the detection threshold")
    half = max(1, int(math.ceil(3 * s0)))
    var = np.maximum(y, 1.0)

    # weighted centroids
    params = []
    for p in peaks:
        lo, hi = max(p - half, 0), min(p + half + 1, y.size)
        w = np.clip(resid[lo:hi], 0, None)
        mu = float(np.sum(w * k[lo:hi]) / np.sum(w)) if np.sum(w) > 0 else float(k[p])
        params.append([float(np.sum(resid[lo:hi])), mu, s0])
    params = np.array(params)

    # joint fit of all spots on the union of their windows
    sel = np.zeros(y.size, dtype=bool)
    for p in peaks:
        sel[max(p - half, 0):p + half + 1] = True
    kk, data, sd = k[sel], resid[sel], np.sqrt(var[sel])
    n = len(peaks)
    lb = np.column_stack((np.zeros(n), params[:, 1] - half - 0.5, np.full(n, 0.2 * s0))).ravel()
    ub = np.column_stack((np.full(n, np.inf), params[:, 1] + half + 0.5, np.full(n, 5.0 * s0))).ravel()
    params[:, 0] = np.maximum(params[:, 0], 1e-12)
    q0 = np.clip(params.ravel(), lb + 1e-12, ub - 1e-12)

    def model(q):
        return sum((_gauss_model(qi, kk) for qi in q.reshape(n, 3)), np.zeros(kk.size))

    def jac(q):
        return np.hstack([_gauss_jac(qi, kk) for qi in q.reshape(n, 3)]) / sd[:, None]

    scale = np.column_stack((params[:, 0], np.ones(n), np.full(n, s0))).ravel()
    sol = least_squares(lambda q: (model(q) - data) / sd, q0, jac=jac, bounds=(lb, ub),
                        x_scale=scale, xtol=1e-12, ftol=1e-12, gtol=1e-12, max_nfev=500)
    params = sol.x.reshape(n, 3)
    try:
        cov = np.linalg.inv(sol.jac.T @ sol.jac)
        cov_mu = np.sqrt(np.maximum(np.diag(cov)[1::3], 0.0))
    except np.linalg.LinAlgError:
        cov_mu = np.full(n, s0)
    order = np.argsort(params[:, 1])
    pos = params[order, 1]
    merged = params[order, 2] > MERGED_WIDTH_RATIO * s0
    if np.any(merged):
        log.warning("%d spots wider than the PSF, probably unresolved pairs", int(merged.sum()))
    if pos.size > 1:
        close = np.diff(pos) < config.min_separation_px
        merged[1:] |= close
        merged[:-1] |= close
        if np.any(close):
            log.warning("%d ion pairs closer than %g px", int(close.sum()), config.min_separation_px)
    sig = np.maximum(cov_mu[order], 1e-12)
    return FitResult(pos, sig, params[order, 0], bg, pitch_um, merged)


def extract_string(frame: Frame, config: FitConfig = FitConfig(), units: UnitSystem = DEFAULT_UNITS):
    """Image -> column profile -> background -> fit -> IonString.

    Returns ``(IonString, FitResult)``; the string carries the per-ion fit
    uncertainties.
    """
    profile = column_profile(frame)
    bg = estimate_background(profile, config.background_window, config.threshold_sigma)
    fit = fit_positions(profile, bg, config, frame.pitch_um)
    string = IonString.from_physical(fit.positions_um, "um", units, sigma=fit.sigma_um)
    return string, fit
