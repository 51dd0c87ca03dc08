import math

import numpy as np
import pytest

from ghostscope import DomainError
from ghostscope.core import (
    ArmGeometry,
    ComplexField,
    Grid,
    Profile,
    focal_depth,
    format_length,
    make_grid,
    numerical_aperture,
    parse_length,
    rayleigh_limit,
    rayleigh_limit_na,
    sinc,
)
from ghostscope.analysis import half_max_root
from ghostscope.objects import double_slit, open_object

from conftest import make_system


@pytest.mark.parametrize(
    "text, meters",
    [
        ("800 mm", 0.8),
        ("90um", 90e-6),
        ("90 µm", 90e-6),
        ("532 nm", 532e-9),
        ("1.5e1 mm", 15e-3),
        (" -2 mm ", -2e-3),
    ],
)
def test_parse_length(text, meters):
    assert parse_length(text) == pytest.approx(meters, rel=1e-12)


@pytest.mark.parametrize("text", ["800", "8 m", "mm", "", 0.8, None])
def test_parse_length_rejects_missing_unit(text):
    with pytest.raises(DomainError):
        parse_length(text)


def test_format_length_round_trips():
    for meters in (0.8, 90e-6, 532e-9, 10.24e-3):
        assert parse_length(format_length(meters)) == pytest.approx(meters, rel=1e-12)


def test_sinc_convention():
    assert sinc(0.0) == 1.0
    assert abs(sinc(1.0)) < 1e-15
    assert abs(sinc(np.arange(1, 6))).max() < 1e-15
    assert half_max_root(sinc, 0.0, 1.0) == pytest.approx(0.6034, abs=1e-3)
    assert sinc(half_max_root(sinc, 0.0, 1.0)) == pytest.approx(0.5, abs=1e-9)


def test_rayleigh_limit_matches_microscope_geometry():
    assert rayleigh_limit(0.532e-6, 0.8, 3e-3) == pytest.approx(173.1e-6, abs=0.5e-6)


def test_rayleigh_limit_rejects_nonpositive():
    with pytest.raises(DomainError):
        rayleigh_limit(0.532e-6, 0.0, 3e-3)
    with pytest.raises(DomainError):
        rayleigh_limit(-1.0, 0.8, 3e-3)


def test_na_form_reduces_to_small_angle_rayleigh():
    na = numerical_aperture(0.8, 3e-3)
    assert na == pytest.approx(3e-3 / 1.6, rel=1e-5)
    assert rayleigh_limit_na(0.532e-6, na) == pytest.approx(
        rayleigh_limit(0.532e-6, 0.8, 3e-3), rel=1e-5
    )
    assert focal_depth(0.532e-6, na) == pytest.approx(0.5 * 0.532e-6 / na**2)
    with pytest.raises(DomainError):
        rayleigh_limit_na(0.532e-6, 1.5)


def test_grid_has_a_sample_on_center():
    for n in (7, 8):
        grid = make_grid(n * 1e-6, n, x_center=2e-6)
        x = grid.coordinates()
        assert x[grid.center_index] == 2e-6
        assert np.allclose(np.diff(x), 1e-6)
        assert grid.index_of(2e-6) == grid.center_index
    grid = make_grid(8e-6, 8)
    assert grid.span == pytest.approx(8e-6)
    assert grid.nyquist == pytest.approx(0.5e6)
    assert grid.contains(0.0)
    assert not grid.contains(10e-6)


@pytest.mark.parametrize("n, dx", [(1, 1e-6), (4, 0.0), (4, -1e-6), (4.5, 1e-6)])
def test_grid_rejects_bad_sampling(n, dx):
    with pytest.raises(DomainError):
        Grid(n, dx)


def test_mirrored_grid_scales_and_flips():
    grid = Grid(8, 2e-6, x_center=4e-6)
    mirrored = grid.mirrored(2.0)
    assert mirrored.dx == pytest.approx(1e-6)
    assert mirrored.x_center == pytest.approx(-2e-6)
    assert mirrored.n_samples == 8


def test_complex_field_shape_and_power():
    grid = make_grid(8e-6, 8)
    field = ComplexField(grid, np.full(8, 2.0 + 0j), 532e-9)
    assert field.shape == (8,)
    assert not field.is_2d
    assert field.power() == pytest.approx(4.0 * 8e-6)
    with pytest.raises(DomainError):
        ComplexField(grid, np.zeros(7), 532e-9)
    with pytest.raises(DomainError):
        ComplexField(grid, np.full(8, np.nan), 532e-9)
    with pytest.raises(ValueError):
        field.values[0] = 1.0


def test_complex_field_2d():
    grid = make_grid(8e-6, 8)
    grid_y = make_grid(4e-6, 4)
    field = ComplexField(grid, np.ones((4, 8)), 532e-9, grid_y)
    assert field.is_2d
    assert field.power() == pytest.approx(32 * 1e-12)


def test_arm_geometry_thin_lens_check():
    arm = ArmGeometry(0.8, 0.8, 0.4, 3e-3)
    assert arm.magnification == 1.0
    assert arm.first_zero(532e-9) == pytest.approx(141.9e-6, abs=0.05e-6)
    assert ArmGeometry(0.6, 1.2, 0.4, 3e-3).magnification == pytest.approx(2.0)
    with pytest.raises(DomainError, match="thin-lens"):
        ArmGeometry(0.8, 0.81, 0.4, 3e-3)
    with pytest.raises(DomainError):
        ArmGeometry(0.8, 0.8, 0.4, 0.0)


def test_symmetric_arm():
    arm = ArmGeometry.symmetric(0.25, 3e-3)
    assert (arm.d_object, arm.d_image) == (0.5, 0.5)
    assert arm.rayleigh_limit(532e-9) == pytest.approx(1.22 * 532e-9 * 0.5 / 3e-3)
    assert arm.numerical_aperture() == pytest.approx(math.sin(math.atan(3e-3 / 1.0)))


def test_system_config_checks(grid_1024):
    obj = double_slit(90e-6, 180e-6, grid_1024)
    system = make_system(obj, grid_1024)
    assert system.shape == (1024,)
    assert not system.is_2d
    with pytest.raises(DomainError, match="different grid"):
        make_system(open_object(make_grid(5.12e-3, 512)), grid_1024)
    with pytest.raises(DomainError):
        make_system(obj, grid_1024, ensemble_size=0)
    with pytest.raises(DomainError):
        make_system(obj, grid_1024, seed=-1)
    with pytest.raises(DomainError):
        make_system(obj, grid_1024, block_size=0)


def test_profile_validates_quantity():
    grid = make_grid(4e-6, 4)
    profile = Profile(grid, [0, 1, 2, 1], "amplitude", "p")
    assert profile.with_values([1, 1, 1, 1]).label == "p"
    assert profile.with_values([1, 1, 1, 1], label="q").quantity == "amplitude"
    with pytest.raises(DomainError):
        Profile(grid, [0, 1, 2], "intensity")
    with pytest.raises(DomainError):
        Profile(grid, [0, 1, 2, 1], "power")
