import os

import numpy as np
import pytest

from ghostscope import DomainError
from ghostscope.analysis import (
    detect_peaks,
    dip_depth,
    fwhm,
    kernel_hg,
    median_row_dip_depth,
    nrms_distance,
)
from ghostscope.config import load
from ghostscope.core import ArmGeometry, make_grid
from ghostscope.correlate import (
    CorrelationAccumulator,
    DetectorImage,
    FramePair,
    FrameSimulator,
    GhostImage,
    MonteCarloEngine,
    analytic_direct_image,
    analytic_ghost_image,
    correlation_matrix,
    direct_image,
    ghost_image,
    reparameterize,
    simulate_block,
    simulate_frame,
)
from ghostscope.objects import double_slit, opaque_object, open_object, pinhole
from ghostscope.optics import PropagationPlan, compile_plan

from conftest import (
    CONFIG_DIR,
    SINC2_HALF,
    SLIT_SEPARATION,
    SLIT_WIDTH,
    WAVELENGTH,
    make_system,
    microscope_arm,
)


# accumulation


def test_opaque_object_blocks_test_arm_only(grid_1024):
    opaque = make_system(opaque_object(grid_1024), grid_1024)
    clear = make_system(open_object(grid_1024), grid_1024)
    blocked = simulate_frame(opaque, 3)
    lit = simulate_frame(clear, 3)
    assert np.all(blocked.intensity_test == 0)
    assert np.array_equal(blocked.intensity_ref, lit.intensity_ref)
    assert blocked.realization_index == 3


def test_simulate_frame_is_deterministic(slit_system):
    a = simulate_frame(slit_system, 11)
    b = simulate_frame(slit_system, 11)
    assert np.array_equal(a.intensity_test, b.intensity_test)
    assert np.array_equal(a.intensity_ref, b.intensity_ref)
    assert not np.array_equal(a.intensity_ref, simulate_frame(slit_system, 12).intensity_ref)


def test_ghost_needs_two_frames(slit_system):
    acc = CorrelationAccumulator.for_config(slit_system)
    acc.accumulate(simulate_frame(slit_system, 0))
    with pytest.raises(DomainError, match="at least 2"):
        ghost_image(acc)
    assert direct_image(acc).frames_used == 1
    with pytest.raises(DomainError):
        direct_image(CorrelationAccumulator.for_config(slit_system))


def test_identical_frames_have_no_correlation(slit_system):
    frame = simulate_frame(slit_system, 5)
    acc = CorrelationAccumulator.for_config(slit_system)
    acc.accumulate(frame).accumulate(frame)
    image = ghost_image(acc)
    assert np.all(image.values == 0)
    assert np.array_equal(image.direct, frame.intensity_test)


def test_batch_and_single_accumulation_agree(slit_system):
    intensity_test, intensity_ref = FrameSimulator(slit_system).intensities(range(6))
    batch = CorrelationAccumulator.for_config(slit_system)
    batch.accumulate_batch(intensity_test, intensity_ref)
    single = CorrelationAccumulator.for_config(slit_system)
    for k in range(6):
        single.accumulate(FramePair(intensity_test[k], intensity_ref[k], k))
    assert batch.count == single.count == 6
    for name in ("sum_t", "sum_r", "sum_cross"):
        assert np.allclose(getattr(batch, name), getattr(single, name), rtol=1e-12)


def test_frame_shape_is_checked(slit_system):
    acc = CorrelationAccumulator.for_config(slit_system)
    with pytest.raises(DomainError):
        acc.accumulate(FramePair(np.zeros(10), np.zeros(10), 0))
    with pytest.raises(DomainError):
        acc.accumulate_batch(np.zeros(1024), np.zeros(1024))


def test_merge_equals_one_pass(slit_system):
    whole = simulate_block(slit_system, 0, 10)
    merged = simulate_block(slit_system, 0, 4).merge(simulate_block(slit_system, 4, 10))
    assert merged.count == whole.count == 10
    assert np.allclose(merged.sum_t, whole.sum_t, rtol=1e-12)
    assert np.allclose(merged.sum_cross, whole.sum_cross, rtol=1e-12)
    other = CorrelationAccumulator(make_grid(1e-3, 64))
    with pytest.raises(DomainError, match="different grids"):
        whole.merge(other)


def test_worker_count_does_not_change_sums(slit_1024, grid_1024):
    system = make_system(slit_1024, grid_1024, block_size=64)
    inline = MonteCarloEngine(system, threads=1).run(300)
    pooled = MonteCarloEngine(system, threads=2).run(300)
    assert inline.count == pooled.count == 300
    for name in ("sum_t", "sum_r", "sum_cross"):
        assert np.array_equal(getattr(inline, name), getattr(pooled, name))


def test_engine_arguments(slit_system):
    with pytest.raises(DomainError):
        MonteCarloEngine(slit_system, threads=0)
    with pytest.raises(DomainError):
        MonteCarloEngine(slit_system).run(0)
    seen = []
    MonteCarloEngine(slit_system, progress=lambda done, total: seen.append((done, total))).run(
        300
    )
    assert seen == [(256, 300), (300, 300)]


def test_correlation_matrix_diagonal_is_ghost(slit_system):
    acc = MonteCarloEngine(slit_system, keep_matrix=True).run(32)
    matrix = correlation_matrix(acc)
    assert matrix.shape == (1024, 1024)
    ghost = ghost_image(acc)
    scale = np.abs(ghost.direct * acc.sum_r / acc.count).max()
    assert np.allclose(np.diag(matrix), ghost.values, rtol=0, atol=1e-9 * scale)
    with pytest.raises(DomainError, match="keep_matrix"):
        correlation_matrix(simulate_block(slit_system, 0, 4))


# coordinates


def test_reparameterize_flips_and_scales():
    grid = make_grid(1e-3, 100, x_center=20e-6)
    values = np.zeros(100)
    values[60] = 1.0
    x_image = grid.coordinate(60)
    image = DetectorImage(grid, values, 10)
    for magnification in (1.0, 2.0):
        mapped = image.to_object_plane(magnification)
        peak = int(np.argmax(mapped.values))
        assert mapped.grid.coordinate(peak) == pytest.approx(-x_image / magnification)
        assert mapped.grid.dx == pytest.approx(grid.dx / magnification)


def test_reparameterize_2d_and_ghost_direct():
    grid = make_grid(8e-6, 8)
    grid_y = make_grid(4e-6, 4)
    values = np.arange(32.0).reshape(4, 8)
    object_grid, object_grid_y, mapped = reparameterize(values, grid, 1.0, grid_y)
    assert object_grid_y == grid_y.mirrored(1.0)
    # sample j pairs with image sample (2 * (n // 2) - j) mod n on both axes
    assert mapped[1, 3] == values[3, 5]
    assert mapped[0, 0] == values[0, 0]
    image = GhostImage(grid, np.arange(8.0), 2, direct=np.arange(8.0) * 2)
    flipped = image.to_object_plane(1.0)
    assert np.array_equal(flipped.direct, flipped.values * 2)
    assert flipped.direct_image().frames_used == 2


def test_detector_image_rows():
    grid = make_grid(8e-6, 8)
    grid_y = make_grid(4e-6, 4)
    image = DetectorImage(grid, np.arange(32.0).reshape(4, 8), 3, grid_y)
    assert list(image.row(0.0).values) == list(range(16, 24))
    with pytest.raises(DomainError):
        image.row(1.0)
    with pytest.raises(DomainError):
        image.profile()


# Monte-Carlo against the analytic limit


def test_open_object_ghost_is_flat():
    grid = make_grid(5.12e-3, 512)
    system = make_system(open_object(grid), grid, ensemble_size=4000, seed=11)
    image = ghost_image(MonteCarloEngine(system).run())
    inside = np.abs(grid.coordinates()) <= 0.5e-3
    ghost = image.values[inside]
    direct = image.direct[inside]
    assert direct.std() / direct.mean() < 0.05
    assert ghost.std() / ghost.mean() < 0.1
    # identical arms and t = 1: G = <I>^2
    assert ghost.mean() / direct.mean() ** 2 == pytest.approx(1.0, abs=0.1)


def test_pinhole_direct_width(grid_1024):
    system = make_system(pinhole(0.0, grid_1024), grid_1024)
    acc = MonteCarloEngine(system).run(8)
    profile = direct_image(acc).to_object_plane(1.0).profile()
    expected = 2 * SINC2_HALF * WAVELENGTH * 0.8 / 3e-3
    assert fwhm(profile) == pytest.approx(expected, rel=0.02)


def test_analytic_pinhole_is_kernel_squared(grid_1024):
    system = make_system(
        pinhole(0.0, grid_1024), grid_1024, reference_arm=microscope_arm(aperture=6e-3)
    )
    out = make_grid(1e-3, 1000)
    ghost = analytic_ghost_image(system.object, system, out)
    kernel = kernel_hg(system.test_arm, system.reference_arm, WAVELENGTH, out).values
    assert np.allclose(ghost.values, kernel**2, rtol=1e-9, atol=1e-14)
    assert ghost.label == "analytic_ghost"


def test_wide_reference_aperture_recovers_object(slit_1024, grid_1024):
    system = make_system(slit_1024, grid_1024, reference_arm=ArmGeometry(0.8, 0.8, 0.4, 0.3))
    out = make_grid(400e-6, 400)
    values = analytic_ghost_image(slit_1024, system, out).values
    distance = np.abs(np.abs(out.coordinates()) - SLIT_SEPARATION / 2)
    inside = distance <= SLIT_WIDTH / 2 - 15e-6
    outside = distance >= SLIT_WIDTH / 2 + 15e-6
    # Gibbs overshoot at the edges sets the peak, the interior stays flat
    assert values[inside].min() > 0.75
    assert values[inside].max() / values[inside].min() < 1.1
    assert np.all(values[outside] < 0.01)


def test_analytic_double_slit_peaks(slit_system):
    out = make_grid(1e-3, 1000)
    values = analytic_ghost_image(slit_system.object, slit_system, out).values
    assert values.max() == pytest.approx(1.0)
    assert np.allclose(values[1:], values[1:][::-1], rtol=0, atol=1e-9)
    peaks, _ = detect_peaks(values)
    assert len(peaks) == 2
    x = out.coordinates()
    assert x[peaks[0]] == pytest.approx(-SLIT_SEPARATION / 2, abs=10e-6)
    assert x[peaks[1]] == pytest.approx(SLIT_SEPARATION / 2, abs=10e-6)


def test_analytic_dip_ordering(slit_1024, grid_1024):
    out = make_grid(1e-3, 1000)
    base = make_system(slit_1024, grid_1024)
    direct = dip_depth(analytic_direct_image(slit_1024, base, out))
    ghost_3mm = dip_depth(analytic_ghost_image(slit_1024, base, out))
    wide = make_system(slit_1024, grid_1024, reference_arm=microscope_arm(aperture=6e-3))
    ghost_6mm = dip_depth(analytic_ghost_image(slit_1024, wide, out))
    short = make_system(slit_1024, grid_1024, reference_arm=microscope_arm(focal_length=0.25))
    ghost_250 = dip_depth(analytic_ghost_image(slit_1024, short, out))
    assert direct < ghost_3mm < ghost_6mm
    assert ghost_250 > ghost_3mm
    assert ghost_6mm > 0.9


@pytest.fixture(scope="module")
def slit_runs():
    """Accumulators over the first 10^2, 10^3 and 10^4 frames of one ensemble."""
    grid = make_grid(5.12e-3, 1024)
    system = make_system(double_slit(SLIT_WIDTH, SLIT_SEPARATION, grid), grid, seed=20100501)
    runs = {100: simulate_block(system, 0, 100)}
    runs[1000] = runs[100].merge(simulate_block(system, 100, 1000))
    runs[10000] = runs[1000].merge(simulate_block(system, 1000, 10000))
    return system, runs


def test_monte_carlo_converges_to_analytic(slit_runs):
    system, runs = slit_runs
    distances = []
    for frames in (100, 1000, 10000):
        image = ghost_image(runs[frames]).to_object_plane(1.0).profile()
        analytic = analytic_ghost_image(system.object, system, image.grid)
        distances.append(nrms_distance(image, analytic))
    assert distances[0] > distances[1] > distances[2]
    assert distances[2] < 0.05


def test_monte_carlo_ghost_dip_beats_direct(slit_runs):
    system, runs = slit_runs
    image = ghost_image(runs[10000]).to_object_plane(1.0)
    ghost = dip_depth(image.profile())
    direct = dip_depth(image.direct_image().profile())
    assert direct < ghost
    out = image.profile().grid
    assert direct == pytest.approx(
        dip_depth(analytic_direct_image(system.object, system, out)), abs=0.05
    )
    assert ghost == pytest.approx(
        dip_depth(analytic_ghost_image(system.object, system, out)), abs=0.05
    )


def test_mean_reference_intensity_is_incoherent_image(slit_system):
    grid = slit_system.grid
    acc = MonteCarloEngine(slit_system).run(6000)
    mean_ref = acc.sum_r / acc.count
    plan = compile_plan(PropagationPlan.reference_arm(slit_system), WAVELENGTH, grid)
    responses = plan.apply(np.eye(grid.n_samples, dtype=complex))
    expected = np.sum(np.abs(responses) ** 2, axis=0)
    lit = expected > 0.5 * expected.max()
    ratio = mean_ref[lit] / expected[lit]
    assert np.sqrt(np.mean((ratio - 1) ** 2)) < 0.03
    assert np.mean(ratio) == pytest.approx(1.0, abs=0.01)


def test_monte_carlo_ghost_is_even(slit_runs):
    _, runs = slit_runs
    values = ghost_image(runs[10000]).to_object_plane(1.0).profile().values
    # the grid has one extra sample on the negative side
    odd = values[1:] - values[1:][::-1]
    assert np.sqrt(np.mean(odd**2)) / values.max() < 0.03


@pytest.mark.slow
def test_monte_carlo_converges_further(slit_runs):
    system, runs = slit_runs
    acc = runs[10000].merge(simulate_block(system, 10000, 40000))
    image = ghost_image(acc).to_object_plane(1.0).profile()
    analytic = analytic_ghost_image(system.object, system, image.grid)
    assert nrms_distance(image, analytic) < 0.05


@pytest.mark.slow
def test_monte_carlo_reference_arm_ordering(grid_2048):
    obj = double_slit(SLIT_WIDTH, SLIT_SEPARATION, grid_2048)
    depths = {}
    for label, arm in (
        ("3mm", microscope_arm()),
        ("6mm", microscope_arm(aperture=6e-3)),
        ("250mm", microscope_arm(focal_length=0.25)),
    ):
        system = make_system(obj, grid_2048, reference_arm=arm, ensemble_size=10000)
        image = ghost_image(MonteCarloEngine(system, threads=2).run()).to_object_plane(1.0)
        depths[label] = dip_depth(image.profile())
        if label == "3mm":
            depths["direct"] = dip_depth(image.direct_image().profile())
    assert depths["direct"] < depths["3mm"] < depths["6mm"]
    assert depths["250mm"] > depths["3mm"]


@pytest.mark.slow
def test_two_dimensional_mask_ghost_resolves_rows():
    run_config = load(os.path.join(CONFIG_DIR, "fig5.json"), ["ensemble_size=3000"])
    system = run_config.system
    image = ghost_image(MonteCarloEngine(system, threads=2).run()).to_object_plane(1.0)
    lit = np.nonzero(np.abs(system.object.values).max(axis=1) > 0)[0]
    ghost = median_row_dip_depth(image.values, lit)
    direct = median_row_dip_depth(image.direct, lit)
    assert ghost > direct
