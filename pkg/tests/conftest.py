import json
import os
import tempfile

os.environ.setdefault(
    "GHOSTSCOPE_LOG_DIR", os.path.join(tempfile.gettempdir(), "ghostscope-test-logs")
)

import numpy as np  # noqa: E402
import pytest  # noqa: E402

from ghostscope.analysis import half_max_root  # noqa: E402
from ghostscope.core import ArmGeometry, SystemConfig, make_grid  # noqa: E402
from ghostscope.objects import double_slit  # noqa: E402
from ghostscope.speckle import SourceSpec  # noqa: E402

CONFIG_DIR = os.path.join(os.path.dirname(os.path.dirname(__file__)), "ghostscope", "configs")

WAVELENGTH = 532e-9
D_SOURCE = 0.1
SLIT_WIDTH = 90e-6
SLIT_SEPARATION = 180e-6

# half-maximum offsets of sinc and sinc^2 in units of the first zero
SINC_HALF = half_max_root(np.sinc, 0.0, 1.0)
SINC2_HALF = half_max_root(lambda v: np.sinc(v) ** 2, 0.0, 1.0)
# FWHM of the matched two-arm kernel over the single-arm APSF, both amplitude
MATCHED_RATIO = SINC2_HALF / SINC_HALF


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long Monte-Carlo acceptance runs")


def microscope_arm(focal_length=0.4, aperture=3e-3):
    return ArmGeometry.symmetric(focal_length, aperture)


def make_system(obj, grid, reference_arm=None, ensemble_size=1000, seed=7, block_size=256,
                test_arm=None, grid_y=None, source=None):
    return SystemConfig(
        wavelength=WAVELENGTH,
        d_source_to_object=D_SOURCE,
        test_arm=test_arm or microscope_arm(),
        reference_arm=reference_arm or microscope_arm(),
        source=source or SourceSpec(),
        object=obj,
        grid=grid,
        ensemble_size=ensemble_size,
        seed=seed,
        grid_y=grid_y,
        block_size=block_size,
    )


@pytest.fixture
def wavelength():
    return WAVELENGTH


@pytest.fixture
def test_arm():
    return microscope_arm()


@pytest.fixture
def grid_1024():
    """5.12 mm at 5 um: enough for 3 mm apertures."""
    return make_grid(5.12e-3, 1024)


@pytest.fixture
def grid_2048():
    """10.24 mm at 5 um: needed once an arm has a 6 mm aperture."""
    return make_grid(10.24e-3, 2048)


@pytest.fixture
def slit_1024(grid_1024):
    return double_slit(SLIT_WIDTH, SLIT_SEPARATION, grid_1024)


@pytest.fixture
def slit_system(slit_1024, grid_1024):
    return make_system(slit_1024, grid_1024)


@pytest.fixture
def small_config(tmp_path):
    """The fig4b document shrunk to a 1024-sample grid and 512 frames."""
    with open(os.path.join(CONFIG_DIR, "fig4b.json"), encoding="utf-8") as f:
        document = json.load(f)
    document["grid"] = {"span": "5.12 mm", "n_samples": 1024}
    document["ensemble_size"] = 512
    document["block_size"] = 128
    document["output_dir"] = str(tmp_path / "out")
    path = tmp_path / "small.json"
    path.write_text(json.dumps(document, indent=2))
    return str(path)
