"""
Units, sampling grids, the complex field container and the shared special
functions every other module builds on.

All lengths are SI meters internally. Config text carries explicit suffixes
(mm, um, nm) and is converted once by parse_length.

Sinc convention: sinc(u) = sin(pi*u)/(pi*u), the Fourier transform of a unit
rect. Its first zero is at u = 1, so sinc{x*L/(lambda*d)} vanishes first at
x = lambda*d/L.

Grid convention: sample i sits at x_center + (i - n_samples // 2) * dx, so
there is always a sample exactly at x_center (the optical axis when
x_center = 0), for even and odd n_samples alike.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import TYPE_CHECKING, Optional

import numpy as np

from ghostscope import DomainError
from ghostscope import constants

if TYPE_CHECKING:
    from ghostscope.objects import TransmissionFunction
    from ghostscope.speckle import SourceSpec

_LENGTH_RE = re.compile(r"^\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)\s*(mm|um|µm|nm)\s*$")


def parse_length(text):
    """
    Convert a length with an explicit unit suffix to meters.
    :param text: e.g. '800 mm', '90um', '532 nm'
    :return: the length in meters
    """
    if not isinstance(text, str):
        raise DomainError(
            f"Length {text!r} has no unit suffix, expected one of mm, um, nm"
        )
    match = _LENGTH_RE.match(text)
    if match is None:
        raise DomainError(
            f"Cannot parse length {text!r}, expected a number followed by mm, um or nm"
        )
    value, unit = match.groups()
    return float(value) * constants.UNIT_SCALE[unit]


def format_length(meters):
    """Inverse of parse_length, picking the unit that keeps the mantissa readable."""
    for unit in ("mm", "um", "nm"):
        scaled = meters / constants.UNIT_SCALE[unit]
        if abs(scaled) >= 1 or unit == "nm":
            return f"{scaled:.12g} {unit}"


def _require_positive(**values):
    for name, value in values.items():
        if not (np.isfinite(value) and value > 0):
            raise DomainError(f"{name} must be a positive finite length, got {value!r}")


def sinc(u):
    """
    Normalized sinc, sin(pi*u)/(pi*u), exactly 1 at u = 0.
    Accepts scalars or arrays.
    """
    return np.sinc(u)


def rayleigh_limit(wavelength, d_object, aperture):
    """
    Object-plane Rayleigh limit of a lens of width aperture at distance d_object,
    in the small-angle form 1.22 * wavelength * d_object / aperture.
    """
    _require_positive(wavelength=wavelength, d_object=d_object, aperture=aperture)
    return constants.RAYLEIGH_FACTOR * wavelength * d_object / aperture


def numerical_aperture(d_object, aperture):
    """Object-side NA = sin(half angle) of a lens of width aperture seen from d_object (n = 1)."""
    _require_positive(d_object=d_object, aperture=aperture)
    return math.sin(math.atan(aperture / (2.0 * d_object)))


def rayleigh_limit_na(wavelength, na):
    """General Rayleigh form 0.61 * wavelength / NA."""
    _require_positive(wavelength=wavelength, na=na)
    if na > 1:
        raise DomainError(f"numerical aperture {na} exceeds 1 in air")
    return constants.RAYLEIGH_NA_FACTOR * wavelength / na


def focal_depth(wavelength, na):
    """Half-range of the focal depth, wavelength / (2 NA^2)."""
    _require_positive(wavelength=wavelength, na=na)
    return 0.5 * wavelength / na**2


@dataclass(frozen=True)
class Grid:
    """Uniform 1-D sampling: n_samples points spaced dx, centered on x_center."""

    n_samples: int
    dx: float
    x_center: float = 0.0

    def __post_init__(self):
        if int(self.n_samples) != self.n_samples or self.n_samples < 2:
            raise DomainError(f"n_samples must be an integer >= 2, got {self.n_samples}")
        _require_positive(dx=self.dx)
        if not np.isfinite(self.x_center):
            raise DomainError(f"x_center must be finite, got {self.x_center}")

    @property
    def span(self):
        return self.n_samples * self.dx

    @property
    def center_index(self):
        return self.n_samples // 2

    def coordinates(self):
        return self.x_center + (np.arange(self.n_samples) - self.center_index) * self.dx

    def coordinate(self, index):
        return self.x_center + (index - self.center_index) * self.dx

    def index_of(self, x):
        """Index of the sample nearest to x (may fall outside the grid)."""
        return int(np.rint((x - self.x_center) / self.dx)) + self.center_index

    def contains(self, x):
        return 0 <= self.index_of(x) < self.n_samples

    def frequencies(self):
        """Spatial frequencies (cycles/m) in FFT order."""
        return np.fft.fftfreq(self.n_samples, self.dx)

    @property
    def nyquist(self):
        return 0.5 / self.dx

    def mirrored(self, magnification):
        """
        Object-plane grid conjugate to this image-plane grid through an
        inverting system of the given magnification (x_obj = -x_img / M).
        Sample j of the returned grid pairs with image sample
        (2 * (n // 2) - j) mod n.
        """
        _require_positive(magnification=magnification)
        return Grid(self.n_samples, self.dx / magnification, -self.x_center / magnification)


def make_grid(span, n_samples, x_center=0.0):
    """
    Build a Grid of n_samples covering span meters, dx = span / n_samples.
    The central sample (index n_samples // 2) sits at x_center.
    """
    _require_positive(span=span)
    if int(n_samples) != n_samples or n_samples < 2:
        raise DomainError(f"n_samples must be an integer >= 2, got {n_samples}")
    return Grid(int(n_samples), span / n_samples, x_center)


def _frozen_array(values, dtype):
    array = np.array(values, dtype=dtype, copy=True)
    array.flags.writeable = False
    return array


@dataclass(frozen=True)
class ComplexField:
    """
    Scalar complex amplitude sampled on grid (1-D) or on grid_y x grid (2-D,
    values indexed [y, x]).
    """

    grid: Grid
    values: np.ndarray
    wavelength: float
    grid_y: Optional[Grid] = None

    def __post_init__(self):
        _require_positive(wavelength=self.wavelength)
        object.__setattr__(self, "values", _frozen_array(self.values, np.complex128))
        expected = self.shape
        if self.values.shape != expected:
            raise DomainError(
                f"field values have shape {self.values.shape}, grid expects {expected}"
            )
        if not np.all(np.isfinite(self.values)):
            raise DomainError("field values must be finite")

    @property
    def shape(self):
        if self.grid_y is None:
            return (self.grid.n_samples,)
        return (self.grid_y.n_samples, self.grid.n_samples)

    @property
    def is_2d(self):
        return self.grid_y is not None

    @property
    def intensity(self):
        return np.abs(self.values) ** 2

    def with_values(self, values):
        return ComplexField(self.grid, values, self.wavelength, self.grid_y)

    def power(self):
        """Sum of |E|^2 times the sample area."""
        area = self.grid.dx if self.grid_y is None else self.grid.dx * self.grid_y.dx
        return float(np.sum(self.intensity) * area)


@dataclass(frozen=True)
class ArmGeometry:
    """One imaging arm: object plane, thin lens of width aperture, image plane."""

    d_object: float
    d_image: float
    focal_length: float
    aperture: float

    def __post_init__(self):
        _require_positive(
            d_object=self.d_object,
            d_image=self.d_image,
            focal_length=self.focal_length,
            aperture=self.aperture,
        )
        mismatch = 1.0 / self.d_object + 1.0 / self.d_image - 1.0 / self.focal_length
        if abs(mismatch) > constants.THIN_LENS_RTOL / self.focal_length:
            raise DomainError(
                f"thin-lens equation violated: 1/{self.d_object} + 1/{self.d_image} "
                f"- 1/{self.focal_length} = {mismatch:.3e} 1/m"
            )

    @classmethod
    def symmetric(cls, focal_length, aperture):
        """Unit-magnification arm, d_object = d_image = 2f."""
        return cls(2.0 * focal_length, 2.0 * focal_length, focal_length, aperture)

    @property
    def magnification(self):
        return self.d_image / self.d_object

    def rayleigh_limit(self, wavelength):
        return rayleigh_limit(wavelength, self.d_object, self.aperture)

    def numerical_aperture(self):
        return numerical_aperture(self.d_object, self.aperture)

    def first_zero(self, wavelength):
        """Object-plane offset of the first APSF zero, wavelength * d_object / aperture."""
        return wavelength * self.d_object / self.aperture


@dataclass(frozen=True)
class SystemConfig:
    """Full two-arm geometry plus the Monte-Carlo ensemble parameters."""

    wavelength: float
    d_source_to_object: float
    test_arm: ArmGeometry
    reference_arm: ArmGeometry
    source: "SourceSpec"
    object: "TransmissionFunction"
    grid: Grid
    ensemble_size: int = 1
    seed: int = 0
    grid_y: Optional[Grid] = None
    block_size: int = constants.DEFAULT_BLOCK_SIZE

    def __post_init__(self):
        _require_positive(
            wavelength=self.wavelength, d_source_to_object=self.d_source_to_object
        )
        if int(self.ensemble_size) != self.ensemble_size or self.ensemble_size < 1:
            raise DomainError(f"ensemble_size must be >= 1, got {self.ensemble_size}")
        if not 0 <= int(self.seed) < 2**64:
            raise DomainError(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        if self.block_size < 1:
            raise DomainError(f"block_size must be >= 1, got {self.block_size}")
        if self.object.grid != self.grid or self.object.grid_y != self.grid_y:
            raise DomainError("object is sampled on a different grid than the system")
        self.source.check_grid(self.grid, self.grid_y)

    @property
    def is_2d(self):
        return self.grid_y is not None

    @property
    def shape(self):
        if self.grid_y is None:
            return (self.grid.n_samples,)
        return (self.grid_y.n_samples, self.grid.n_samples)


@dataclass(frozen=True)
class Profile:
    """
    Real-valued curve on a Grid.
    quantity is 'amplitude' or 'intensity' so width measurements know what they measure.
    """

    grid: Grid
    values: np.ndarray
    quantity: str = "intensity"
    label: str = ""

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen_array(self.values, float))
        if self.values.shape != (self.grid.n_samples,):
            raise DomainError(
                f"profile has {self.values.shape} values for a grid of {self.grid.n_samples}"
            )
        if self.quantity not in ("amplitude", "intensity"):
            raise DomainError(
                f"quantity must be 'amplitude' or 'intensity', got {self.quantity!r}"
            )

    def coordinates(self):
        return self.grid.coordinates()

    def with_values(self, values, label=None):
        return Profile(self.grid, values, self.quantity, self.label if label is None else label)
