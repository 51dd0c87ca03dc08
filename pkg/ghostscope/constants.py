UNIT_SCALE = {"mm": 1e-3, "um": 1e-6, "µm": 1e-6, "nm": 1e-9}

RAYLEIGH_FACTOR = 1.22
RAYLEIGH_NA_FACTOR = 0.61
THIN_LENS_RTOL = 1e-9

MIN_SAMPLES_PER_SLIT = 8
MIN_BAND_BINS = 8
QUADRATURE_SAMPLES_PER_CYCLE = 8
MIN_QUADRATURE_POINTS = 33
DEFAULT_QUADRATURE_POINTS = 4097
KERNEL_SAMPLES_PER_ZERO = 8
GAUSS_LEGENDRE_ORDER = 8
GUARD_BAND_FACTOR = 4

PEAK_FRACTION = 0.1
BISECTION_XTOL = 1e-10
FWHM_GRID_SAMPLES = 4096

DEFAULT_BLOCK_SIZE = 256
BATCH_ELEMENTS = 1 << 20

MODES = ["direct", "ghost", "both", "apsf", "fig3", "sweep"]
OBJECT_TYPES = ["double_slit", "pinhole", "mask", "open", "opaque"]
SOURCE_PROFILES = ["uniform", "gaussian"]

PGM_MAXVAL_16 = 65535
PGM_MAXVAL_8 = 255

MANIFEST_NAME = "manifest.json"
STAGING_PREFIX = ".ghostscope-"
CSV_FLOAT_FORMAT = "%.12e"
