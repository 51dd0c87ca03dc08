"""
Kernels, widths and resolvability metrics.

Widths are measured on whatever quantity a curve carries: the single-arm
APSF and h_g are amplitude curves, detector images are intensity curves.
fwhm(curve, quantity="intensity") squares an amplitude curve first; the two
numbers differ, so every reported width names its quantity.
"""
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import bisect
from scipy.signal import find_peaks

from ghostscope import DomainError
from ghostscope import constants
from ghostscope import logger
from ghostscope.core import Profile, make_grid

# valley of two sinc^2 spots one first-zero apart
RESOLVED_DIP_DEPTH = 1.0 - 8.0 / math.pi**2

KERNEL_LABELS = ("single_arm_apsf", "two_arm_kernel")


@dataclass(frozen=True)
class KernelCurve:
    """Dimensionless amplitude kernel on object-plane offsets u."""

    grid: object
    values: np.ndarray
    label: str

    def __post_init__(self):
        if self.label not in KERNEL_LABELS:
            raise DomainError(f"kernel label must be one of {KERNEL_LABELS}, got {self.label!r}")

    @property
    def quantity(self):
        return "amplitude"

    def as_profile(self):
        return Profile(self.grid, self.values, "amplitude", self.label)


@dataclass(frozen=True)
class ResolutionReport:
    fwhm: float
    rayleigh_limit: float
    dip_depth: Optional[float] = None
    resolvable: bool = False
    label: str = ""
    quantity: str = "intensity"

    def as_row(self):
        return {
            "label": self.label,
            "quantity": self.quantity,
            "fwhm_m": self.fwhm,
            "rayleigh_limit_m": self.rayleigh_limit,
            "dip_depth": self.dip_depth,
            "resolvable": str(self.resolvable).lower(),
        }


def single_arm_apsf(arm, wavelength, offset_grid):
    """sinc{u * L / (lambda * d_object)}, the object-plane APSF of one arm."""
    u = offset_grid.coordinates()
    values = np.sinc(u * arm.aperture / (wavelength * arm.d_object))
    return KernelCurve(offset_grid, values, "single_arm_apsf")


def kernel_hg(test_arm, ref_arm, wavelength, offset_grid):
    """
    Two-arm imaging kernel, the product of both arms' APSFs,
    sinc{u L_t/(lambda d1)} * sinc{u L_r/(lambda d3)} with u = x0 + x_t/M_t.
    :return: KernelCurve labeled two_arm_kernel
    """
    u = offset_grid.coordinates()
    values = np.sinc(u * test_arm.aperture / (wavelength * test_arm.d_object)) * np.sinc(
        u * ref_arm.aperture / (wavelength * ref_arm.d_object)
    )
    return KernelCurve(offset_grid, values, "two_arm_kernel")


def _curve_values(profile, quantity):
    values = np.asarray(profile.values, dtype=float)
    own = getattr(profile, "quantity", "intensity")
    if quantity is None or quantity == own:
        return values
    if own == "amplitude" and quantity == "intensity":
        return values**2
    raise DomainError(f"cannot measure a {own} curve as {quantity}")


def fwhm(profile, quantity=None):
    """
    Full width at half maximum of the peak holding the global maximum,
    each crossing linearly interpolated between its bracketing samples.
    :param profile: Profile or KernelCurve
    :param quantity: None measures the curve as is; 'intensity' squares amplitude curves
    :return: width in meters
    """
    values = _curve_values(profile, quantity)
    peak = int(np.argmax(values))
    top = values[peak]
    if not top > 0:
        raise DomainError("profile has no positive maximum")
    half = top / 2.0
    x = profile.grid.coordinates()

    below = np.nonzero(values[:peak] <= half)[0]
    if below.size == 0:
        raise DomainError("profile never drops to half maximum left of the peak")
    j = below[-1]
    left = x[j] + (half - values[j]) / (values[j + 1] - values[j]) * (x[j + 1] - x[j])

    below = np.nonzero(values[peak + 1:] <= half)[0]
    if below.size == 0:
        raise DomainError("profile never drops to half maximum right of the peak")
    k = peak + 1 + below[0]
    right = x[k - 1] + (values[k - 1] - half) / (values[k - 1] - values[k]) * (x[k] - x[k - 1])
    return float(right - left)


def half_max_root(func, lo, hi):
    """Bisection root of func(v) = 1/2 on [lo, hi] to BISECTION_XTOL."""
    return bisect(lambda v: func(v) - 0.5, lo, hi, xtol=constants.BISECTION_XTOL)


def _width_grid(zero, samples=constants.FWHM_GRID_SAMPLES):
    """Offsets spanning two first zeros either side, fine enough for sub-percent widths."""
    return make_grid(4.0 * zero, samples)


def fwhm_ratio_fig3(test_arm, ref_arm, wavelength):
    """
    FWHM of the two-arm kernel over the FWHM of the test arm's APSF, both
    measured on the amplitude curves.
    """
    single_zero = wavelength * test_arm.d_object / test_arm.aperture
    kernel_zero = min(single_zero, wavelength * ref_arm.d_object / ref_arm.aperture)
    single = fwhm(single_arm_apsf(test_arm, wavelength, _width_grid(single_zero)))
    product = fwhm(kernel_hg(test_arm, ref_arm, wavelength, _width_grid(kernel_zero)))
    ratio = product / single
    logger.debug(f"FWHM ratio {product:.6g} / {single:.6g} = {ratio:.6f}")
    return ratio


def normalize_profile(profile):
    """Scale to peak 1; the baseline is left in place."""
    peak = float(np.max(profile.values))
    if not peak > 0:
        raise DomainError(f"cannot normalize a profile with maximum {peak}")
    return profile.with_values(np.asarray(profile.values) / peak)


def detect_peaks(values):
    """
    Local maxima above PEAK_FRACTION of the global maximum whose prominence
    exceeds PEAK_FRACTION of the curve's range.
    :return: (peak indices, prominences)
    """
    values = np.asarray(values, dtype=float)
    top, bottom = float(np.max(values)), float(np.min(values))
    if not top > 0 or top == bottom:
        return np.zeros(0, dtype=int), np.zeros(0)
    peaks, props = find_peaks(
        values,
        height=constants.PEAK_FRACTION * top,
        prominence=constants.PEAK_FRACTION * (top - bottom),
    )
    return peaks, props["prominences"]


def _dip_between(values, first, second):
    base = float(np.min(values))
    lower_peak = min(values[first], values[second]) - base
    valley = float(np.min(values[first:second + 1])) - base
    if not lower_peak > 0:
        return 0.0
    return float(np.clip(1.0 - valley / lower_peak, 0.0, 1.0))


def _main_pair(values):
    """(first, second) indices of the two most prominent peaks, plus the peak count."""
    peaks, prominences = detect_peaks(values)
    if peaks.size < 2:
        return None, peaks.size
    first, second = np.sort(peaks[np.argsort(prominences, kind="stable")[-2:]])
    return (int(first), int(second)), peaks.size


def dip_depth(profile, expected_peaks=2):
    """
    1 - valley / lower peak, both measured above the curve minimum, between
    the two most prominent peaks.
    0 means the two peaks have merged, 1 means the valley reaches the baseline.
    :param profile: Profile (or anything with .values)
    :param expected_peaks: only two-peak profiles are scored
    """
    if expected_peaks != 2:
        raise DomainError(
            f"dip depth is defined for two peaks, got expected_peaks={expected_peaks}"
        )
    values = np.asarray(profile.values, dtype=float)
    pair, found = _main_pair(values)
    if pair is None:
        raise DomainError(f"dip depth needs at least 2 peaks, detected {found}")
    return _dip_between(values, *pair)


def resolution_report(profile, rayleigh_limit, label="", quantity=None):
    """FWHM, the classical limit for comparison, and the dip depth when there are two peaks."""
    quantity = quantity or getattr(profile, "quantity", "intensity")
    width = fwhm(profile, quantity)
    values = _curve_values(profile, quantity)
    pair, _ = _main_pair(values)
    dip = None if pair is None else _dip_between(values, *pair)
    resolvable = dip is not None and dip >= RESOLVED_DIP_DEPTH
    return ResolutionReport(width, rayleigh_limit, dip, resolvable, label, quantity)


def row_dip_depths(image):
    """
    Dip depth of every row of a 2-D image, between the row's two most prominent
    peaks; rows with fewer than two peaks score 0.
    """
    image = np.asarray(image, dtype=float)
    depths = np.zeros(image.shape[0])
    for r, row in enumerate(image):
        pair, _ = _main_pair(row)
        if pair is not None:
            depths[r] = _dip_between(row, *pair)
    return depths


def median_row_dip_depth(image, rows=None):
    """Median of row_dip_depths over the selected row indices (all rows by default)."""
    depths = row_dip_depths(image)
    if rows is not None:
        depths = depths[np.asarray(rows, dtype=int)]
    if depths.size == 0:
        raise DomainError("no rows selected")
    return float(np.median(depths))


def nrms_distance(profile, reference, window=None):
    """
    RMS difference of the two peak-normalized curves over an optional
    (lo, hi) window in meters.
    """
    if profile.grid != reference.grid:
        raise DomainError("profiles are sampled on different grids")
    a = normalize_profile(profile).values
    b = normalize_profile(reference).values
    if window is not None:
        x = profile.grid.coordinates()
        inside = (x >= window[0]) & (x <= window[1])
        if not inside.any():
            raise DomainError(f"window {window} holds no samples")
        a, b = a[inside], b[inside]
    return float(np.sqrt(np.mean((a - b) ** 2)))
