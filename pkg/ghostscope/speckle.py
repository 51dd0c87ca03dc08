"""
Pseudo-thermal source: circular complex Gaussian speckle realizations.

Each realization k is drawn from its own counter-based generator
(Philox keyed by SeedSequence(seed, spawn_key=(k,))), so realization k is
bit-identical no matter how many realizations were drawn before it or on
which worker it is drawn.

With coherence_length == dx the field is white (delta-correlated at grid
resolution). Longer coherence lengths filter white noise so that the
normalized field autocorrelation is exp(-lag^2 / coherence_length^2).
"""
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ghostscope import DomainError
from ghostscope import constants
from ghostscope import logger
from ghostscope.core import ComplexField


@dataclass(frozen=True)
class SourceSpec:
    """
    :param coherence_length: transverse field correlation length, None means one grid step
    :param extent: full width of the emitting region, None means it covers the grid
    :param profile: 'uniform' or 'gaussian'
    :param width: 1/e^2 half-width of the gaussian profile
    :param mean_intensity: I0
    """

    coherence_length: Optional[float] = None
    extent: Optional[float] = None
    profile: str = "uniform"
    width: Optional[float] = None
    mean_intensity: float = 1.0

    def __post_init__(self):
        if self.profile not in constants.SOURCE_PROFILES:
            raise DomainError(
                f"source profile must be one of {constants.SOURCE_PROFILES}, got {self.profile!r}"
            )
        if self.profile == "gaussian" and not (self.width and self.width > 0):
            raise DomainError("gaussian source profile needs a positive width")
        if not self.mean_intensity > 0:
            raise DomainError(f"mean_intensity must be positive, got {self.mean_intensity}")
        if self.extent is not None and not self.extent > 0:
            raise DomainError(f"source extent must be positive, got {self.extent}")
        if self.coherence_length is not None and not self.coherence_length > 0:
            raise DomainError(
                f"coherence_length must be positive, got {self.coherence_length}"
            )

    def effective_coherence(self, grid):
        return grid.dx if self.coherence_length is None else self.coherence_length

    def check_grid(self, grid, grid_y=None):
        """Raise DomainError if the coherence length is not resolvable on the grid(s)."""
        coherence = self.effective_coherence(grid)
        for axis in (grid, grid_y):
            if axis is not None and coherence < axis.dx * (1 - 1e-9):
                raise DomainError(
                    f"coherence_length {coherence:.4g} m is shorter than the grid step "
                    f"{axis.dx:.4g} m"
                )

    def is_white(self, grid):
        return self.effective_coherence(grid) <= grid.dx * (1 + 1e-9)

    def intensity_profile(self, grid, grid_y=None):
        """Mean intensity I(x) on the grid, [y, x] in 2-D."""
        axes = [grid.coordinates()]
        if grid_y is not None:
            axes = [grid_y.coordinates()[:, None], grid.coordinates()[None, :]]
        r2 = sum(a**2 for a in axes)
        profile = np.full(np.broadcast_shapes(*(a.shape for a in axes)), self.mean_intensity)
        if self.profile == "gaussian":
            profile = profile * np.exp(-2.0 * r2 / self.width**2)
        if self.extent is not None:
            inside = np.ones(profile.shape, dtype=bool)
            for a in axes:
                inside &= np.abs(a) <= self.extent / 2
            profile = np.where(inside, profile, 0.0)
        return profile


@dataclass(frozen=True)
class SpeckleRealization:
    field: ComplexField
    realization_index: int
    seed_used: int


def realization_rng(seed, index):
    """Counter-based generator for realization index of the ensemble seeded by seed."""
    sequence = np.random.SeedSequence(int(seed), spawn_key=(int(index),))
    return np.random.Generator(np.random.Philox(sequence))


def _axis_filter(axis, coherence):
    freqs = axis.frequencies()
    return np.exp(-0.5 * (np.pi * coherence * freqs) ** 2)


def coherence_filter(spec, grid, grid_y=None):
    """
    Transfer function that turns unit white noise into unit-variance noise
    with autocorrelation exp(-lag^2 / coherence^2). None for white sources.
    """
    if spec.is_white(grid):
        return None
    coherence = spec.effective_coherence(grid)
    h = _axis_filter(grid, coherence)
    h = h * np.sqrt(h.size / np.sum(h**2))
    if grid_y is None:
        return h
    hy = _axis_filter(grid_y, coherence)
    hy = hy * np.sqrt(hy.size / np.sum(hy**2))
    return hy[:, None] * h[None, :]


def expected_g1(spec, grid, lag_samples):
    """
    Normalized field autocorrelation the generator produces at an integer lag
    (periodic grid). Exactly the discrete counterpart of exp(-lag^2/coherence^2).
    """
    h = coherence_filter(spec, grid)
    if h is None:
        return 1.0 if lag_samples % grid.n_samples == 0 else 0.0
    autocorr = np.fft.ifft(h**2).real
    return float(autocorr[lag_samples % grid.n_samples] / autocorr[0])


def draw_source_fields(spec, grid, seed, indices, grid_y=None):
    """
    Stack of source-plane fields, one row per realization index.
    Row j equals generate_realization(spec, grid, seed, indices[j]).field.values.
    """
    spec.check_grid(grid, grid_y)
    shape = (grid.n_samples,) if grid_y is None else (grid_y.n_samples, grid.n_samples)
    noise = np.empty((len(indices),) + shape, dtype=np.complex128)
    for row, index in enumerate(indices):
        gauss = realization_rng(seed, index).standard_normal((2,) + shape)
        noise[row].real = gauss[0]
        noise[row].imag = gauss[1]
    noise *= np.sqrt(0.5)

    h = coherence_filter(spec, grid, grid_y)
    if h is not None:
        if grid_y is None:
            noise = np.fft.ifft(np.fft.fft(noise, axis=-1) * h, axis=-1)
        else:
            noise = np.fft.ifft2(np.fft.fft2(noise, axes=(-2, -1)) * h, axes=(-2, -1))
    return noise * np.sqrt(spec.intensity_profile(grid, grid_y))


def generate_realization(spec, grid, seed, index, grid_y=None, wavelength=1.0):
    """
    One thermal-source realization on the grid.
    :param spec: SourceSpec
    :param grid: Grid (x axis)
    :param seed: 64-bit ensemble seed
    :param index: realization index
    :param grid_y: optional y Grid for 2-D sources
    :param wavelength: carried on the returned ComplexField
    :return: SpeckleRealization
    """
    values = draw_source_fields(spec, grid, seed, [index], grid_y)[0]
    field = ComplexField(grid, values, wavelength, grid_y)
    return SpeckleRealization(field=field, realization_index=int(index), seed_used=int(seed))


def empirical_g1(realizations, x, x_prime):
    """
    Ensemble average <E(x) E*(x')> over 1-D realizations.
    :param realizations: sequence of SpeckleRealization on a common grid
    :param x: first position in meters
    :param x_prime: second position in meters
    :return: complex mutual intensity estimate
    """
    if len(realizations) < 2:
        raise DomainError(f"need at least 2 realizations, got {len(realizations)}")
    grid = realizations[0].field.grid
    for r in realizations[1:]:
        if r.field.grid != grid or r.field.grid_y is not None:
            raise DomainError("realizations must share one 1-D grid")
    i, j = grid.index_of(x), grid.index_of(x_prime)
    if not (0 <= i < grid.n_samples and 0 <= j < grid.n_samples):
        raise DomainError(f"positions {x}, {x_prime} fall outside the grid")
    stack = np.array([r.field.values for r in realizations])
    g1 = complex(np.mean(stack[:, i] * np.conj(stack[:, j])))
    logger.debug(f"g1({x:.3e}, {x_prime:.3e}) = {g1:.4g} over {len(realizations)} realizations")
    return g1


def intensity_contrast(realizations):
    """Per-sample Var(I)/<I>^2 over the ensemble; 1 for fully developed speckle."""
    intensity = np.array([r.field.intensity for r in realizations])
    mean = intensity.mean(axis=0)
    return intensity.var(axis=0) / mean**2
