"""
Monte-Carlo ghost imaging: both arms see the same speckle realization, the
detectors record intensities, and the fluctuation correlation
<I_t I_r> - <I_t><I_r> is accumulated along the diagonal x_r = (M_r/M_t) x_t.

Reduction order: frames are grouped into fixed blocks of config.block_size
consecutive indices. Each block is accumulated from an empty accumulator and
the block accumulators are merged in index order. Neither the grouping nor the
order depends on the worker count, so the sums are bit-identical for any
number of workers.
"""
import math
from dataclasses import dataclass, replace
from multiprocessing import Pool
from typing import Optional

import numpy as np
from numpy.polynomial.legendre import leggauss

from ghostscope import DomainError, SamplingError
from ghostscope import constants
from ghostscope import logger
from ghostscope.core import Grid, Profile
from ghostscope.optics import PropagationPlan, compile_plan
from ghostscope.speckle import draw_source_fields


@dataclass(frozen=True)
class FramePair:
    intensity_test: np.ndarray
    intensity_ref: np.ndarray
    realization_index: int


def _match_index(axis, ratio):
    """Index on axis nearest to ratio * x for every sample x of axis."""
    x = axis.coordinates()
    index = np.rint((ratio * x - axis.x_center) / axis.dx).astype(int) + axis.center_index
    outside = (index < 0) | (index >= axis.n_samples)
    if outside.any():
        logger.warning(
            f"{int(outside.sum())} detector samples map outside the reference grid "
            f"at ratio {ratio:.6g}, clipped to the edge"
        )
        index = np.clip(index, 0, axis.n_samples - 1)
    return index


class CorrelationAccumulator:
    """
    Running sums of I_t, I_r and I_t * I_r(matched) over frames.

    accumulate/accumulate_batch update in place and return the accumulator;
    merge returns a new one.
    """

    def __init__(self, grid, grid_y=None, magnification_ratio=1.0, keep_matrix=False):
        """
        :param grid: detector Grid (x), shared by both detectors
        :param grid_y: detector Grid (y) in 2-D
        :param magnification_ratio: M_r / M_t
        :param keep_matrix: also sum the full I_t(x) I_r(x') matrix (1-D only)
        """
        if keep_matrix and grid_y is not None:
            raise DomainError("the full correlation matrix is only kept for 1-D grids")
        if not magnification_ratio > 0:
            raise DomainError(f"magnification ratio must be positive, got {magnification_ratio}")
        self.grid = grid
        self.grid_y = grid_y
        self.magnification_ratio = magnification_ratio
        self.shape = (grid.n_samples,) if grid_y is None else (grid_y.n_samples, grid.n_samples)
        self.match_x = _match_index(grid, magnification_ratio)
        self.match_y = None if grid_y is None else _match_index(grid_y, magnification_ratio)
        self.sum_t = np.zeros(self.shape)
        self.sum_r = np.zeros(self.shape)
        self.sum_cross = np.zeros(self.shape)
        self.sum_matrix = np.zeros(self.shape * 2) if keep_matrix else None
        self.count = 0

    @classmethod
    def for_config(cls, config, keep_matrix=False):
        ratio = config.reference_arm.magnification / config.test_arm.magnification
        return cls(config.grid, config.grid_y, ratio, keep_matrix)

    @property
    def keeps_matrix(self):
        return self.sum_matrix is not None

    def matched(self, values):
        """Reference-detector values read at x_r = (M_r/M_t) x_t, trailing axes."""
        values = values[..., self.match_x]
        if self.match_y is not None:
            values = values[..., self.match_y, :]
        return values

    def _check(self, intensity_test, intensity_ref):
        if intensity_test.shape[-len(self.shape):] != self.shape or (
            intensity_ref.shape != intensity_test.shape
        ):
            raise DomainError(
                f"frame shapes {intensity_test.shape} / {intensity_ref.shape} do not match "
                f"the accumulator grid {self.shape}"
            )

    def accumulate(self, frame):
        """Add one FramePair."""
        intensity_test = np.asarray(frame.intensity_test, dtype=float)
        intensity_ref = np.asarray(frame.intensity_ref, dtype=float)
        self._check(intensity_test, intensity_ref)
        if intensity_test.shape != self.shape:
            raise DomainError(f"frame shape {intensity_test.shape} is not {self.shape}")
        self.sum_t += intensity_test
        self.sum_r += intensity_ref
        self.sum_cross += intensity_test * self.matched(intensity_ref)
        if self.sum_matrix is not None:
            self.sum_matrix += np.multiply.outer(intensity_test, intensity_ref)
        self.count += 1
        return self

    def accumulate_batch(self, intensity_test, intensity_ref):
        """Add a stack of frames, leading axis = frame."""
        intensity_test = np.asarray(intensity_test, dtype=float)
        intensity_ref = np.asarray(intensity_ref, dtype=float)
        self._check(intensity_test, intensity_ref)
        if intensity_test.ndim != len(self.shape) + 1:
            raise DomainError(f"expected a stack of frames of shape {self.shape}")
        self.sum_t += intensity_test.sum(axis=0)
        self.sum_r += intensity_ref.sum(axis=0)
        self.sum_cross += (intensity_test * self.matched(intensity_ref)).sum(axis=0)
        if self.sum_matrix is not None:
            self.sum_matrix += intensity_test.T @ intensity_ref
        self.count += intensity_test.shape[0]
        return self

    def compatible(self, other):
        return (
            self.grid == other.grid
            and self.grid_y == other.grid_y
            and self.magnification_ratio == other.magnification_ratio
            and self.keeps_matrix == other.keeps_matrix
        )

    def merge(self, other):
        """New accumulator holding self's frames followed by other's."""
        if not self.compatible(other):
            raise DomainError("cannot merge accumulators built on different grids")
        merged = CorrelationAccumulator(
            self.grid, self.grid_y, self.magnification_ratio, self.keeps_matrix
        )
        merged.sum_t = self.sum_t + other.sum_t
        merged.sum_r = self.sum_r + other.sum_r
        merged.sum_cross = self.sum_cross + other.sum_cross
        if self.sum_matrix is not None:
            merged.sum_matrix = self.sum_matrix + other.sum_matrix
        merged.count = self.count + other.count
        return merged


@dataclass(frozen=True)
class DetectorImage:
    """Real image on the test detector grid, [y, x] in 2-D."""

    grid: Grid
    values: np.ndarray
    frames_used: int
    grid_y: Optional[Grid] = None

    @property
    def is_2d(self):
        return self.grid_y is not None

    def profile(self, quantity="intensity", label=""):
        if self.is_2d:
            raise DomainError("a 2-D image has no single profile, take a row first")
        return Profile(self.grid, self.values, quantity, label)

    def row(self, y):
        """1-D Profile through the row nearest to y."""
        if not self.is_2d:
            raise DomainError("row() needs a 2-D image")
        index = self.grid_y.index_of(y)
        if not 0 <= index < self.grid_y.n_samples:
            raise DomainError(f"row {y} m is off the grid")
        return Profile(self.grid, self.values[index])

    def to_object_plane(self, magnification):
        """Same image on object-plane coordinates x_obj = -x_img / M."""
        grid, grid_y, values = reparameterize(self.values, self.grid, magnification, self.grid_y)
        return replace(self, grid=grid, grid_y=grid_y, values=values)


@dataclass(frozen=True)
class GhostImage(DetectorImage):
    """G(x_t, M_r x_t / M_t) with the direct image <I_t> recorded alongside."""

    direct: Optional[np.ndarray] = None

    def direct_image(self):
        return DetectorImage(self.grid, self.direct, self.frames_used, self.grid_y)

    def to_object_plane(self, magnification):
        grid, grid_y, values = reparameterize(self.values, self.grid, magnification, self.grid_y)
        _, _, direct = reparameterize(self.direct, self.grid, magnification, self.grid_y)
        return replace(self, grid=grid, grid_y=grid_y, values=values, direct=direct)


def _mirror_axis(values, axis_grid, axis):
    n = axis_grid.n_samples
    index = (2 * axis_grid.center_index - np.arange(n)) % n
    return np.take(values, index, axis=axis)


def reparameterize(values, grid, magnification, grid_y=None):
    """
    Map an inverted image onto object coordinates: sample j of the returned
    grid sits at -x_img / M of image sample (2 * (n // 2) - j) mod n.
    :return: (object grid, object grid_y or None, reordered values)
    """
    values = _mirror_axis(np.asarray(values), grid, -1)
    object_grid_y = None
    if grid_y is not None:
        values = _mirror_axis(values, grid_y, -2)
        object_grid_y = grid_y.mirrored(magnification)
    return grid.mirrored(magnification), object_grid_y, values


def ghost_image(acc):
    """
    Fluctuation correlation along the matched diagonal,
    sum_cross/n - (sum_t/n) * (sum_r_matched/n). Negative samples are kept.
    """
    if acc.count < 2:
        raise DomainError(f"ghost image needs at least 2 frames, got {acc.count}")
    n = acc.count
    mean_t = acc.sum_t / n
    values = acc.sum_cross / n - mean_t * acc.matched(acc.sum_r / n)
    return GhostImage(acc.grid, values, n, acc.grid_y, direct=mean_t)


def direct_image(acc):
    """The conventional image <I_t> of the test arm."""
    if acc.count < 1:
        raise DomainError("direct image needs at least 1 frame, got 0")
    return DetectorImage(acc.grid, acc.sum_t / acc.count, acc.count, acc.grid_y)


def correlation_matrix(acc):
    """Full G(x_t, x_r) = <I_t(x_t) I_r(x_r)> - <I_t(x_t)><I_r(x_r)>, 1-D only."""
    if acc.sum_matrix is None:
        raise DomainError("accumulator was built without keep_matrix")
    if acc.count < 2:
        raise DomainError(f"correlation matrix needs at least 2 frames, got {acc.count}")
    n = acc.count
    return acc.sum_matrix / n - np.multiply.outer(acc.sum_t / n, acc.sum_r / n)


class FrameSimulator:
    """Source draw plus both compiled arm plans for one SystemConfig."""

    def __init__(self, config):
        self.config = config
        self.test_plan = compile_plan(
            PropagationPlan.test_arm(config), config.wavelength, config.grid, config.grid_y
        )
        self.reference_plan = compile_plan(
            PropagationPlan.reference_arm(config), config.wavelength, config.grid, config.grid_y
        )

    def intensities(self, indices):
        """(I_t, I_r) stacks for the given realization indices."""
        config = self.config
        source = draw_source_fields(
            config.source, config.grid, config.seed, indices, config.grid_y
        )
        test = self.test_plan.apply(source)
        reference = self.reference_plan.apply(source)
        return np.abs(test) ** 2, np.abs(reference) ** 2

    def batch_size(self):
        elements = int(np.prod(self.config.shape))
        return max(1, constants.BATCH_ELEMENTS // elements)


def simulate_frame(config, index):
    """
    One realization recorded by both detectors.
    :param config: SystemConfig
    :param index: realization index
    :return: FramePair, a pure function of (config.seed, index)
    """
    intensity_test, intensity_ref = FrameSimulator(config).intensities([index])
    return FramePair(intensity_test[0], intensity_ref[0], int(index))


def simulate_block(config, start, stop, keep_matrix=False, simulator=None):
    """Accumulator over realization indices [start, stop), from empty."""
    simulator = simulator or FrameSimulator(config)
    acc = CorrelationAccumulator.for_config(config, keep_matrix)
    batch = simulator.batch_size()
    for first in range(start, stop, batch):
        indices = range(first, min(first + batch, stop))
        acc.accumulate_batch(*simulator.intensities(indices))
    return acc


def _simulate_block_task(task):
    config, start, stop, keep_matrix = task
    return simulate_block(config, start, stop, keep_matrix)


class MonteCarloEngine:
    """
    Usage:
        engine = MonteCarloEngine(config, threads=4)
        acc = engine.run()
        image = ghost_image(acc)
    """

    def __init__(self, config, threads=1, keep_matrix=False, progress=None):
        """
        :param config: SystemConfig
        :param threads: worker processes, 1 runs inline; results never depend on it
        :param keep_matrix: accumulate the full correlation matrix (1-D)
        :param progress: optional callable(frames_done, frames_total)
        """
        if int(threads) != threads or threads < 1:
            raise DomainError(f"threads must be a positive integer, got {threads}")
        self.config = config
        self.threads = int(threads)
        self.keep_matrix = keep_matrix
        self.progress = progress

    def blocks(self, frames):
        size = self.config.block_size
        return [(start, min(start + size, frames)) for start in range(0, frames, size)]

    def run(self, frames=None):
        """
        Simulate and accumulate frames 0 .. frames-1 (default config.ensemble_size).
        :return: CorrelationAccumulator
        """
        frames = self.config.ensemble_size if frames is None else int(frames)
        if frames < 1:
            raise DomainError(f"frames must be >= 1, got {frames}")
        tasks = [(self.config, a, b, self.keep_matrix) for a, b in self.blocks(frames)]
        total = CorrelationAccumulator.for_config(self.config, self.keep_matrix)
        logger.info(
            f"Simulating {frames} frames in {len(tasks)} blocks on {self.threads} worker(s)"
        )
        if self.threads == 1:
            simulator = FrameSimulator(self.config)
            results = (
                simulate_block(config, a, b, keep, simulator) for config, a, b, keep in tasks
            )
            total = self._reduce(total, results, frames)
        else:
            with Pool(processes=min(self.threads, len(tasks))) as pool:
                total = self._reduce(total, pool.imap(_simulate_block_task, tasks), frames)
        logger.info(f"Succeeded to simulate {total.count} frames")
        return total

    def _reduce(self, total, results, frames):
        for block in results:
            total = total.merge(block)
            logger.info(f"Simulated {total.count}/{frames} frames")
            if self.progress is not None:
                self.progress(total.count, frames)
        return total


def _kernel(u, config):
    """Product of the two arms' sincs at object-plane offset u."""
    test, reference = config.test_arm, config.reference_arm
    wl = config.wavelength
    return np.sinc(u * test.aperture / (wl * test.d_object)) * np.sinc(
        u * reference.aperture / (wl * reference.d_object)
    )


def _kernel_zero(config):
    wl = config.wavelength
    return min(
        wl * config.test_arm.d_object / config.test_arm.aperture,
        wl * config.reference_arm.d_object / config.reference_arm.aperture,
    )


def _quadrature_nodes(obj, config, object_phase):
    """
    (x0, weight * t(x0)) pairs for integrals over the object.
    Interval descriptors use composite Gauss-Legendre, point descriptors their
    delta weights, plain arrays a sample-sum that must resolve the kernel.
    """
    if obj.is_2d:
        raise DomainError("the analytic image is computed for 1-D objects")
    zero = _kernel_zero(config)
    if obj.points is not None:
        x = np.array([p[0] for p in obj.points], dtype=float)
        w = np.array([p[1] for p in obj.points], dtype=complex)
    elif obj.intervals is not None:
        gauss_x, gauss_w = leggauss(constants.GAUSS_LEGENDRE_ORDER)
        xs, ws = [], []
        for lo, hi in obj.intervals:
            pieces = max(1, math.ceil((hi - lo) / (zero / 4.0)))
            edges = np.linspace(lo, hi, pieces + 1)
            half = np.diff(edges)[:, None] / 2.0
            mid = (edges[:-1] + edges[1:])[:, None] / 2.0
            xs.append((mid + half * gauss_x[None, :]).ravel())
            ws.append((half * gauss_w[None, :]).ravel())
        x = np.concatenate(xs) if xs else np.zeros(0)
        w = np.concatenate(ws).astype(complex) if ws else np.zeros(0, dtype=complex)
    else:
        if obj.grid.dx > zero / constants.KERNEL_SAMPLES_PER_ZERO:
            raise SamplingError(
                f"object sampling dx = {obj.grid.dx:.6g} m cannot resolve the imaging kernel "
                f"(first zero {zero:.6g} m); use dx <= "
                f"{zero / constants.KERNEL_SAMPLES_PER_ZERO:.6g} m"
            )
        lit = np.abs(obj.values) > 0
        x = obj.grid.coordinates()[lit]
        w = obj.values[lit] * obj.grid.dx
    if object_phase:
        residual = 1.0 / config.test_arm.d_object - 1.0 / config.reference_arm.d_object
        w = w * np.exp(1j * np.pi * x**2 * residual / config.wavelength)
    return x, w


def _peak_normalized(output_grid, values, label):
    peak = np.max(values)
    if peak > 0:
        values = values / peak
    return Profile(output_grid, values, "intensity", label)


def analytic_ghost_image(obj, config, output_grid, object_phase=False):
    """
    Infinite-incoherent-source ghost image on object-plane coordinates,
    |integral t(x0) sinc{(x0 - x) L_t/(lambda d1)} sinc{(x0 - x) L_r/(lambda d3)} dx0|^2,
    peak-normalized.
    :param obj: TransmissionFunction (1-D)
    :param config: SystemConfig supplying arms and wavelength
    :param output_grid: object-plane Grid to evaluate on
    :param object_phase: keep the residual phase exp{i pi x0^2 (1/d1 - 1/d3)/lambda}
    :return: Profile
    """
    x0, weights = _quadrature_nodes(obj, config, object_phase)
    x = output_grid.coordinates()
    amplitude = np.zeros(x.size, dtype=complex)
    rows = max(1, constants.BATCH_ELEMENTS // max(1, x0.size))
    for start in range(0, x.size, rows):
        u = x0[None, :] - x[start:start + rows, None]
        amplitude[start:start + rows] = _kernel(u, config) @ weights
    return _peak_normalized(output_grid, np.abs(amplitude) ** 2, "analytic_ghost")


def analytic_direct_image(obj, config, output_grid):
    """
    Incoherent test-arm image on object-plane coordinates,
    integral |t(x0)|^2 sinc^2{(x0 - x) L_t/(lambda d1)} dx0, peak-normalized.
    """
    x0, weights = _quadrature_nodes(obj, config, object_phase=False)
    test = config.test_arm
    if obj.intervals is not None and obj.points is None:
        power = np.abs(weights)
    else:
        # sample weights are t * dx, so |t|^2 dx = |weight|^2 / dx
        power = np.abs(weights) ** 2 / obj.grid.dx
    x = output_grid.coordinates()
    values = np.zeros(x.size)
    rows = max(1, constants.BATCH_ELEMENTS // max(1, x0.size))
    for start in range(0, x.size, rows):
        u = x0[None, :] - x[start:start + rows, None]
        kernel = np.sinc(u * test.aperture / (config.wavelength * test.d_object)) ** 2
        values[start:start + rows] = kernel @ power
    return _peak_normalized(output_grid, values, "analytic_direct")
