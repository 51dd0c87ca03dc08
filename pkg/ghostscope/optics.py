"""
Paraxial scalar propagation on periodic grids.

Free space uses the band-limited angular-spectrum form of the Fresnel
transfer function, H(f) = exp(ikz) * exp(-i*pi*lambda*z*f^2), zeroed above

    f_limit = 1 / (lambda * sqrt((2*z/P)^2 + 1))        P = grid span

This transfer function is the exact Fourier pair of the Fresnel kernel
exp(ikz)/(i*lambda*z) * exp(i*pi*r^2/(lambda*z)) in 2-D, and of
exp(ikz)/sqrt(i*lambda*z) * exp(i*pi*x^2/(lambda*z)) per axis, so the global
phase and prefactor are carried implicitly and the transform is unitary.

Validity: a stage is trusted only if the band the caller needs (the highest
spatial frequency that carries light from where it is to where it will be
measured) lies below both f_limit and the Nyquist frequency. The arm plans
work that band out from aperture, object support and distance. The
source-to-object stage of a Monte-Carlo plan is propagated without band limit:
the source is statistically stationary and periodic, so the periodic transform
is exact for it.
"""
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.integrate import simpson

from ghostscope import DomainError, SamplingError
from ghostscope import constants
from ghostscope import logger
from ghostscope.core import Profile


@dataclass(frozen=True)
class FreeSpace:
    """
    :param distance: propagation distance in meters
    :param band_limit: zero the angular spectrum above f_limit
    :param band: spatial frequency (1/m) that must survive, None for the default bin check
    """

    distance: float
    band_limit: bool = True
    band: Optional[float] = None

    def __post_init__(self):
        if not (np.isfinite(self.distance) and self.distance > 0):
            raise DomainError(f"free-space distance must be positive, got {self.distance}")
        if self.band is not None and not self.band > 0:
            raise DomainError(f"required band must be positive, got {self.band}")


@dataclass(frozen=True)
class ThinLens:
    focal_length: float
    aperture: float

    def __post_init__(self):
        if not (np.isfinite(self.focal_length) and self.focal_length > 0):
            raise DomainError(f"focal_length must be positive, got {self.focal_length}")
        if not (np.isfinite(self.aperture) and self.aperture > 0):
            raise DomainError(f"aperture must be positive, got {self.aperture}")


@dataclass(frozen=True)
class Mask:
    transmission: "TransmissionFunction"  # noqa: F821


def _stage_band(aperture, half_width, wavelength, distance):
    """Band carrying light between |x| <= half_width and the lens aperture."""
    if half_width is None:
        return None
    return (aperture / 2.0 + half_width) / (wavelength * distance)


@dataclass(frozen=True)
class PropagationPlan:
    """Ordered FreeSpace / ThinLens / Mask stages."""

    stages: tuple = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "stages", tuple(self.stages))
        for stage in self.stages:
            if not isinstance(stage, (FreeSpace, ThinLens, Mask)):
                raise DomainError(f"unknown propagation stage {stage!r}")

    def __add__(self, other):
        return PropagationPlan(self.stages + other.stages)

    @classmethod
    def imaging(cls, arm, wavelength, support=None):
        """
        Object plane -> lens -> image plane of one arm.
        :param arm: ArmGeometry
        :param wavelength: meters
        :param support: half-width of the lit object region, None if it fills the grid
        """
        return cls(
            (
                FreeSpace(
                    arm.d_object,
                    band=_stage_band(arm.aperture, support, wavelength, arm.d_object),
                ),
                ThinLens(arm.focal_length, arm.aperture),
                FreeSpace(
                    arm.d_image,
                    band=_stage_band(
                        arm.aperture,
                        None if support is None else support * arm.magnification,
                        wavelength,
                        arm.d_image,
                    ),
                ),
            )
        )

    @classmethod
    def test_arm(cls, config, periodic_source=True):
        """
        [free_space(d0), mask(t), free_space(d1), thin_lens(f_t, L_t), free_space(d2)]
        :param periodic_source: propagate d0 without band limit (Monte-Carlo sources);
            False for impulse responses of a single source point
        """
        support = config.object.support_half_width()
        head = cls(
            (
                FreeSpace(config.d_source_to_object, band_limit=not periodic_source),
                Mask(config.object),
            )
        )
        return head + cls.imaging(config.test_arm, config.wavelength, support)

    @classmethod
    def reference_arm(cls, config, periodic_source=True):
        """The test-arm plan without the mask, with (d3, f_r, L_r, d4)."""
        support = config.object.support_half_width()
        head = cls((FreeSpace(config.d_source_to_object, band_limit=not periodic_source),))
        return head + cls.imaging(config.reference_arm, config.wavelength, support)


def band_limit_frequency(axis, wavelength, distance):
    """f_limit of the band-limited transfer function on one grid axis."""
    return 1.0 / (wavelength * math.sqrt((2.0 * distance / axis.span) ** 2 + 1.0))


def check_band(axis, wavelength, distance, band=None):
    """
    Raise SamplingError unless the transfer function at this distance keeps `band`.
    With band None, at least MIN_BAND_BINS frequency bins must survive.
    """
    if band is None:
        band = constants.MIN_BAND_BINS / axis.span
    if band > axis.nyquist:
        raise SamplingError(
            f"propagation over {distance:.6g} m needs spatial frequency {band:.6g} 1/m "
            f"above the grid Nyquist frequency {axis.nyquist:.6g} 1/m; "
            f"use a grid step dx <= {0.5 / band:.6g} m"
        )
    f_limit = band_limit_frequency(axis, wavelength, distance)
    if band > f_limit * (1 + 1e-12):
        ratio = 1.0 / (wavelength * band) ** 2 - 1.0
        if ratio <= 0:
            raise SamplingError(
                f"spatial frequency {band:.6g} 1/m is evanescent at wavelength {wavelength:.6g} m"
            )
        z_max = 0.5 * axis.span * math.sqrt(ratio)
        span_min = 2.0 * distance / math.sqrt(ratio)
        raise SamplingError(
            f"propagation over {distance:.6g} m keeps spatial frequencies up to "
            f"{f_limit:.6g} 1/m but {band:.6g} 1/m is needed; maximum safe distance "
            f"on this grid is {z_max:.6g} m, or use a grid span >= {span_min:.6g} m "
            f"({math.ceil(span_min / axis.dx)} samples at dx = {axis.dx:.6g} m)"
        )
    return f_limit


def _global_phase(wavelength, distance):
    cycles = math.fmod(distance / wavelength, 1.0)
    return complex(np.exp(2j * np.pi * cycles))


def transfer_function(axis, wavelength, distance, band_limit=True):
    """Per-axis Fresnel transfer function in FFT order, without the exp(ikz) phase."""
    freqs = axis.frequencies()
    h = np.exp(-1j * np.pi * wavelength * distance * freqs**2)
    if band_limit:
        h[np.abs(freqs) > band_limit_frequency(axis, wavelength, distance)] = 0.0
    return h


def lens_phase(axis, wavelength, focal_length, aperture):
    """exp(-i*pi*x^2/(lambda*f)) inside |x| <= aperture/2, zero outside."""
    if aperture > axis.span * (1 + 1e-12):
        raise DomainError(
            f"lens aperture {aperture:.6g} m exceeds the grid span {axis.span:.6g} m"
        )
    if aperture / (2.0 * wavelength * focal_length) > axis.nyquist:
        raise SamplingError(
            f"lens phase of f = {focal_length:.6g} m over aperture {aperture:.6g} m aliases; "
            f"use a grid step dx <= {wavelength * focal_length / aperture:.6g} m"
        )
    x = axis.coordinates()
    inside = np.abs(x) <= aperture / 2.0 * (1 + 1e-12)
    return np.where(inside, np.exp(-1j * np.pi * x**2 / (wavelength * focal_length)), 0.0)


class CompiledPlan:
    """
    A PropagationPlan bound to one wavelength and grid, with every transfer
    function and lens phase precomputed. apply() works on any leading batch
    shape, so a block of realizations propagates in one FFT call.
    """

    def __init__(self, plan, wavelength, grid, grid_y=None):
        self.plan = plan
        self.wavelength = wavelength
        self.grid = grid
        self.grid_y = grid_y
        self.axes = (-1,) if grid_y is None else (-2, -1)
        self.operations = [self._compile(stage) for stage in plan.stages]

    def _separable(self, per_axis):
        hx = per_axis(self.grid)
        if self.grid_y is None:
            return hx
        return per_axis(self.grid_y)[:, None] * hx[None, :]

    def _compile(self, stage):
        if isinstance(stage, FreeSpace):
            for axis in (self.grid, self.grid_y):
                if axis is not None and stage.band_limit:
                    check_band(axis, self.wavelength, stage.distance, stage.band)
            h = self._separable(
                lambda axis: transfer_function(
                    axis, self.wavelength, stage.distance, stage.band_limit
                )
            )
            h = h * _global_phase(self.wavelength, stage.distance)
            return ("propagate", h)
        if isinstance(stage, ThinLens):
            phase = self._separable(
                lambda axis: lens_phase(
                    axis, self.wavelength, stage.focal_length, stage.aperture
                )
            )
            return ("multiply", phase)
        transmission = stage.transmission
        if transmission.grid != self.grid or transmission.grid_y != self.grid_y:
            raise DomainError("mask transmission is sampled on a different grid than the field")
        return ("multiply", transmission.values)

    def apply(self, values):
        out = np.asarray(values, dtype=np.complex128)
        for kind, operand in self.operations:
            if kind == "multiply":
                out = out * operand
            else:
                spectrum = np.fft.fftn(out, axes=self.axes)
                out = np.fft.ifftn(spectrum * operand, axes=self.axes)
        return out


def compile_plan(plan, wavelength, grid, grid_y=None):
    return CompiledPlan(plan, wavelength, grid, grid_y)


def fresnel_propagate(field, distance, band_limit=True, band=None):
    """
    Propagate a field through free space.
    :param field: ComplexField
    :param distance: meters, > 0
    :param band_limit: apply the angular band limit
    :param band: spatial frequency (1/m) the caller needs preserved
    :return: ComplexField on the same grid
    """
    plan = PropagationPlan((FreeSpace(distance, band_limit, band),))
    return run_plan(field, plan)


def apply_thin_lens(field, focal_length, aperture):
    """
    Multiply by the thin-lens phase inside a hard-edged aperture.
    In 2-D the aperture is square, |x| and |y| <= aperture/2.
    """
    plan = PropagationPlan((ThinLens(focal_length, aperture),))
    return run_plan(field, plan)


def run_plan(field, plan):
    """
    Apply every stage of plan to field, in order.
    :param field: ComplexField
    :param plan: PropagationPlan
    :return: ComplexField on the same grid
    """
    if not plan.stages:
        return field
    compiled = compile_plan(plan, field.wavelength, field.grid, field.grid_y)
    return field.with_values(compiled.apply(field.values))


def apsf_closed_form(arm, x_object, x_image, wavelength):
    """
    sinc{(x_object/d_object + x_image/d_image) * aperture / wavelength},
    1 at the conjugate point x_image = -M * x_object.
    """
    u = np.asarray(x_object) / arm.d_object + np.asarray(x_image) / arm.d_image
    return np.sinc(u * arm.aperture / wavelength)


def minimum_quadrature_points(arm, x_object, image_grid, wavelength):
    """
    Points needed to sample every phase cycle of the aperture integrand
    QUADRATURE_SAMPLES_PER_CYCLE times. The local phase rate over the
    aperture is bounded by the three chirps' slopes at the aperture edge.
    """
    half = arm.aperture / 2.0
    x_image_max = np.max(np.abs(image_grid.coordinates()))
    rate = (
        (abs(x_object) + half) / (wavelength * arm.d_object)
        + half / (wavelength * arm.focal_length)
        + (x_image_max + half) / (wavelength * arm.d_image)
    )
    cycles = rate * arm.aperture
    return max(
        constants.MIN_QUADRATURE_POINTS,
        int(math.ceil(constants.QUADRATURE_SAMPLES_PER_CYCLE * cycles)),
    )


def apsf_integrand_integral(arm, x_object, x_image, wavelength, quadrature_points):
    """
    Complex aperture integral of the single-arm impulse response,
    integral over |x_f| <= L/2 of
    exp(i*pi*[(x0 - x_f)^2/(lambda*d1) - x_f^2/(lambda*f) + (x_i - x_f)^2/(lambda*d2)]).
    """
    x_f = np.linspace(-arm.aperture / 2.0, arm.aperture / 2.0, quadrature_points)
    x_i = np.atleast_1d(np.asarray(x_image, dtype=float))
    phase = (
        (x_object - x_f[None, :]) ** 2 / arm.d_object
        - x_f[None, :] ** 2 / arm.focal_length
        + (x_i[:, None] - x_f[None, :]) ** 2 / arm.d_image
    )
    integrand = np.exp(1j * np.pi * phase / wavelength)
    scale = wavelength * math.sqrt(arm.d_object * arm.d_image)
    return simpson(integrand, x=x_f, axis=-1) / scale


def apsf_numeric(
    arm, x_object, image_grid, wavelength, quadrature_points=constants.DEFAULT_QUADRATURE_POINTS
):
    """
    Modulus of the direct quadrature of the single-arm APSF over the aperture.
    :param arm: ArmGeometry
    :param x_object: object point in meters
    :param image_grid: Grid of image-plane positions
    :param wavelength: meters
    :param quadrature_points: Simpson points across the aperture
    :return: Profile of amplitudes on image_grid
    """
    needed = minimum_quadrature_points(arm, x_object, image_grid, wavelength)
    if quadrature_points < needed:
        raise SamplingError(
            f"{quadrature_points} quadrature points cannot resolve the aperture integrand, "
            f"at least {needed} are needed for this geometry and image grid"
        )
    x_image = image_grid.coordinates()
    rows = max(1, constants.BATCH_ELEMENTS // quadrature_points)
    values = np.concatenate(
        [
            apsf_integrand_integral(
                arm, x_object, x_image[start:start + rows], wavelength, quadrature_points
            )
            for start in range(0, x_image.size, rows)
        ]
    )
    logger.debug(
        f"APSF quadrature with {quadrature_points} points (minimum {needed}) "
        f"over {image_grid.n_samples} image samples"
    )
    return Profile(image_grid, np.abs(values), quantity="amplitude", label="apsf_numeric")
