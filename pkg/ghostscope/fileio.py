"""
Image, CSV readers/writers plus content digests.
Profiles go out as CSV (x_meters,value), images as 16-bit binary PGM (P5).
Grayscale images are decoded by Pillow; any maxval is rescaled to the full
8- or 16-bit range, so pixels / maxval is the gray level either way.
"""
import csv
import hashlib
import os

import numpy as np
from PIL import Image

from ghostscope import InputError
from ghostscope import constants
from ghostscope import logger

WIDE_MODES = ("I", "I;16", "I;16B", "I;16L")


def read_pgm(path):
    """
    Read a grayscale image, PGM (P2 or P5) or anything else Pillow decodes.
    :param path: file path
    :return: (pixels as uint8 or uint16 array [rows, cols], maxval)
    """
    try:
        with Image.open(path) as img:
            img.load()
            if img.mode in WIDE_MODES:
                pixels = np.asarray(img, dtype=np.int64)
                maxval = constants.PGM_MAXVAL_16
            else:
                if img.mode != "L":
                    logger.debug(f"{path}: converting {img.mode} image to grayscale")
                    img = img.convert("L")
                pixels = np.asarray(img, dtype=np.int64)
                maxval = constants.PGM_MAXVAL_8
    except (OSError, ValueError, SyntaxError) as e:
        raise InputError(f"{path}: cannot read mask image: {e}")
    if pixels.ndim != 2 or pixels.size == 0:
        raise InputError(f"{path}: expected a non-empty 2-D grayscale raster, got {pixels.shape}")
    if pixels.min() < 0 or pixels.max() > maxval:
        raise InputError(f"{path}: pixel values outside [0, {maxval}]")
    return pixels.astype(np.uint16 if maxval > constants.PGM_MAXVAL_8 else np.uint8), maxval


def scale_to_pgm(image, maxval=constants.PGM_MAXVAL_16):
    """
    Linear map min -> 0, max -> maxval, rounded to integers.
    :return: (pixels, scaling dict recording the map for the manifest)
    """
    image = np.asarray(image, dtype=float)
    low, high = float(image.min()), float(image.max())
    span = high - low
    if span > 0:
        pixels = np.rint((image - low) / span * maxval)
    else:
        pixels = np.zeros(image.shape)
    scaling = {
        "min_value": low,
        "max_value": high,
        "maxval": int(maxval),
        "value": "min_value + pixel / maxval * (max_value - min_value)",
    }
    return pixels.astype(np.uint16 if maxval > constants.PGM_MAXVAL_8 else np.uint8), scaling


def write_pgm(path, pixels, maxval=constants.PGM_MAXVAL_16):
    """
    Write integer pixels [rows, cols] as P5.
    :param maxval: 255 writes 8-bit, 65535 writes big-endian 16-bit
    """
    pixels = np.asarray(pixels)
    if maxval not in (constants.PGM_MAXVAL_8, constants.PGM_MAXVAL_16):
        raise InputError(f"{path}: maxval must be 255 or 65535, got {maxval}")
    if pixels.ndim != 2:
        raise InputError(f"{path}: expected a 2-D raster, got shape {pixels.shape}")
    if pixels.size and (pixels.min() < 0 or pixels.max() > maxval):
        raise InputError(f"{path}: pixel values outside [0, {maxval}]")
    if maxval == constants.PGM_MAXVAL_8:
        img = Image.fromarray(pixels.astype(np.uint8))
    else:
        img = Image.fromarray(pixels.astype(np.int32))
    try:
        img.save(path, format="PPM")
    except OSError as e:
        raise InputError(f"{path}: cannot write image: {e}")
    height, width = pixels.shape
    logger.debug(f"wrote {width}x{height} PGM {path}")
    return path


def write_image(path, image):
    """Scale a real image to 16 bits and write it; returns the scaling record."""
    pixels, scaling = scale_to_pgm(image)
    write_pgm(path, pixels)
    return scaling


def write_profile_csv(path, x, values, header=("x_meters", "value")):
    """Two-column CSV with a header row, floats in CSV_FLOAT_FORMAT."""
    data = np.column_stack([np.asarray(x, dtype=float), np.asarray(values, dtype=float)])
    np.savetxt(
        path,
        data,
        fmt=constants.CSV_FLOAT_FORMAT,
        delimiter=",",
        header=",".join(header),
        comments="",
    )
    return path


def write_table_csv(path, columns, rows):
    """Small CSV table; floats in CSV_FLOAT_FORMAT, cells quoted where needed."""

    def cell(value):
        if isinstance(value, float):
            return constants.CSV_FLOAT_FORMAT % value
        return "" if value is None else str(value)

    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([cell(row.get(c)) for c in columns])
    return path


def read_profile_csv(path):
    """Inverse of write_profile_csv: (x, values)."""
    try:
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    except (OSError, ValueError) as e:
        raise InputError(f"{path}: cannot read profile CSV: {e}")
    return data[:, 0], data[:, 1]


def sha256_file(path):
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def digest_directory(directory, exclude=(constants.MANIFEST_NAME,)):
    """sha256 of every regular file under directory, keyed by relative posix path."""
    digests = {}
    for root, _dirs, files in os.walk(directory):
        for name in files:
            full = os.path.join(root, name)
            rel = os.path.relpath(full, directory).replace(os.sep, "/")
            if rel in exclude:
                continue
            digests[rel] = sha256_file(full)
    return dict(sorted(digests.items()))
