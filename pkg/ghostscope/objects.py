"""
Object transmission functions t(x0).

t is an amplitude transmittance: it multiplies the field. A grayscale mask
scanned from an intensity transparency would need a square root first.
"""
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ghostscope import DomainError
from ghostscope import constants
from ghostscope import logger
from ghostscope.core import Grid
from ghostscope.fileio import read_pgm


@dataclass(frozen=True)
class TransmissionFunction:
    """
    Sampled complex transmittance, [y, x] in 2-D.
    intervals: closed (lo, hi) ranges where t = 1 exactly, t = 0 elsewhere.
    points: (x, weight) deltas standing for single-sample objects.
    Either one, when present, describes the object exactly for quadrature.
    """

    grid: Grid
    values: np.ndarray
    grid_y: Optional[Grid] = None
    intervals: Optional[tuple] = None
    points: Optional[tuple] = None
    label: str = ""

    def __post_init__(self):
        values = np.array(self.values, dtype=np.complex128, copy=True)
        shape = (
            (self.grid.n_samples,)
            if self.grid_y is None
            else (self.grid_y.n_samples, self.grid.n_samples)
        )
        if values.shape != shape:
            raise DomainError(f"transmission has shape {values.shape}, grid expects {shape}")
        if not np.all(np.isfinite(values)):
            raise DomainError("transmission values must be finite")
        if np.max(np.abs(values), initial=0.0) > 1 + 1e-12:
            raise DomainError("transmission magnitude exceeds 1")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    @property
    def is_2d(self):
        return self.grid_y is not None

    @property
    def has_descriptor(self):
        return self.intervals is not None or self.points is not None

    def support_half_width(self):
        """
        Largest |coordinate| of a transmitting sample plus half a step, over all axes.
        None when the object reaches the grid edge (it fills the field of view).
        """
        lit = np.abs(self.values) > 0
        if not lit.any():
            return 0.0
        axes = [(self.grid, lit if self.grid_y is None else lit.any(axis=0))]
        if self.grid_y is not None:
            axes.append((self.grid_y, lit.any(axis=1)))
        half_width = 0.0
        for axis, lit_axis in axes:
            if lit_axis[0] or lit_axis[-1]:
                return None
            x = axis.coordinates()[lit_axis]
            half_width = max(half_width, float(np.max(np.abs(x))) + axis.dx / 2.0)
        return half_width

    def open_fraction(self, lo=None, hi=None):
        """
        Transmitted fraction of [lo, hi] along x. Exact from the interval
        descriptor when there is one, otherwise the mean of |t|^2 over the
        samples in the window.
        """
        x = self.grid.coordinates()
        lo = x[0] if lo is None else lo
        hi = x[-1] if hi is None else hi
        if not hi > lo:
            raise DomainError(f"empty window [{lo}, {hi}]")
        if self.intervals is not None:
            covered = sum(
                max(0.0, min(b, hi) - max(a, lo)) for a, b in self.intervals
            )
            return covered / (hi - lo)
        inside = (x >= lo) & (x <= hi)
        power = np.abs(self.values) ** 2
        window = power[..., inside]
        return float(np.mean(window))

    def evaluate(self, x):
        """Exact t at positions x from the interval descriptor."""
        if self.intervals is None:
            raise DomainError(f"object {self.label!r} has no interval descriptor")
        x = np.asarray(x, dtype=float)
        t = np.zeros(x.shape)
        for lo, hi in self.intervals:
            t[(x >= lo) & (x <= hi)] = 1.0
        return t


def _closed_interval_mask(x, lo, hi, dx):
    tol = 1e-9 * dx
    return (x >= lo - tol) & (x <= hi + tol)


def double_slit(slit_width, separation, grid):
    """
    Two unit-transmission slits centered at +-separation/2.
    :param slit_width: meters
    :param separation: center-to-center distance in meters
    :param grid: 1-D Grid
    :return: TransmissionFunction with the slit edges as its descriptor
    """
    if not (slit_width > 0 and separation > 0):
        raise DomainError(
            f"slit width and separation must be positive, got {slit_width}, {separation}"
        )
    if separation < slit_width:
        raise DomainError(
            f"slits of width {slit_width:.6g} m overlap at separation {separation:.6g} m"
        )
    if slit_width / grid.dx < constants.MIN_SAMPLES_PER_SLIT:
        raise DomainError(
            f"slit width {slit_width:.6g} m spans {slit_width / grid.dx:.2f} samples, "
            f"at least {constants.MIN_SAMPLES_PER_SLIT} are needed "
            f"(dx <= {slit_width / constants.MIN_SAMPLES_PER_SLIT:.6g} m)"
        )
    intervals = tuple(
        (c - slit_width / 2.0, c + slit_width / 2.0)
        for c in (-separation / 2.0, separation / 2.0)
    )
    x = grid.coordinates()
    if intervals[0][0] < x[0] or intervals[1][1] > x[-1]:
        raise DomainError("double slit does not fit on the grid")
    values = np.zeros(grid.n_samples)
    for lo, hi in intervals:
        values[_closed_interval_mask(x, lo, hi, grid.dx)] = 1.0
    logger.debug(
        f"double slit: width {slit_width:.6g} m, separation {separation:.6g} m, "
        f"{int(values.sum())} open samples"
    )
    return TransmissionFunction(grid, values, intervals=intervals, label="double_slit")


def pinhole(position, grid):
    """Single open sample nearest to position."""
    index = grid.index_of(position)
    if not 0 <= index < grid.n_samples:
        raise DomainError(
            f"pinhole position {position:.6g} m is off the grid "
            f"[{grid.coordinate(0):.6g}, {grid.coordinate(grid.n_samples - 1):.6g}] m"
        )
    values = np.zeros(grid.n_samples)
    values[index] = 1.0
    points = ((grid.coordinate(index), grid.dx),)
    return TransmissionFunction(grid, values, points=points, label="pinhole")


def open_object(grid, grid_y=None):
    """t = 1 everywhere."""
    shape = (grid.n_samples,) if grid_y is None else (grid_y.n_samples, grid.n_samples)
    return TransmissionFunction(grid, np.ones(shape), grid_y, label="open")


def opaque_object(grid, grid_y=None):
    """t = 0 everywhere."""
    shape = (grid.n_samples,) if grid_y is None else (grid_y.n_samples, grid.n_samples)
    return TransmissionFunction(grid, np.zeros(shape), grid_y, intervals=(), label="opaque")


def _nearest_pixel(coordinates, pitch, n_pixels):
    """Pixel index under each coordinate for an image centered on the axis, -1 outside."""
    index = np.floor(coordinates / pitch + n_pixels / 2.0).astype(int)
    index[(index < 0) | (index >= n_pixels)] = -1
    return index


def mask_from_image(path, pixel_pitch, threshold, grid, grid_y=None):
    """
    Amplitude mask from a grayscale image (PGM P2/P5 at any maxval, or any format
    Pillow decodes; color images are converted to luminance).
    :param path: image file
    :param pixel_pitch: object-plane size of one pixel in meters
    :param threshold: 0 keeps gray levels, otherwise binarize at this amplitude
    :param grid: x Grid of the simulation
    :param grid_y: y Grid; None takes the image's middle row as a 1-D object
    :return: TransmissionFunction, zero outside the image
    """
    if not pixel_pitch > 0:
        raise DomainError(f"pixel_pitch must be positive, got {pixel_pitch}")
    if not 0 <= threshold <= 1:
        raise DomainError(f"threshold must be within [0, 1], got {threshold}")
    pixels, maxval = read_pgm(path)
    amplitude = pixels.astype(float) / maxval
    if threshold > 0:
        amplitude = (amplitude >= threshold).astype(float)

    height, width = amplitude.shape
    cols = _nearest_pixel(grid.coordinates() - grid.x_center, pixel_pitch, width)
    if grid_y is None:
        rows = np.array([height // 2])
    else:
        rows = _nearest_pixel(grid_y.coordinates() - grid_y.x_center, pixel_pitch, height)
    padded = np.zeros((height + 1, width + 1))
    padded[:height, :width] = amplitude
    values = padded[rows[:, None], cols[None, :]]
    if grid_y is None:
        values = values[0]
    logger.info(
        f"Succeeded to load mask {path}: {width}x{height} pixels at "
        f"{pixel_pitch:.6g} m, open fraction {float(np.mean(values**2)):.4f}"
    )
    return TransmissionFunction(grid, values, grid_y, label="mask")
