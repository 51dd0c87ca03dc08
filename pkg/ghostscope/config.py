"""
Run configurations.

A run configuration is a JSON document. Every length is a string carrying its
unit ("800 mm", "90 um", "532 nm"); bare numbers for lengths are rejected.
Command-line overrides (--set a.b=value) are applied to the document before it
is parsed, so the echoed document always holds the effective values.
"""
import copy
import json
import os
import re
from dataclasses import dataclass, field, replace
from typing import Optional

from ghostscope import ConfigError, DomainError, FailException, InputError, SamplingError
from ghostscope import constants
from ghostscope import logger
from ghostscope.core import ArmGeometry, SystemConfig, make_grid, parse_length
from ghostscope.objects import (
    double_slit,
    mask_from_image,
    opaque_object,
    open_object,
    pinhole,
)
from ghostscope.optics import PropagationPlan, compile_plan
from ghostscope.speckle import SourceSpec

TOP_LEVEL_FIELDS = (
    "wavelength",
    "d_source_to_object",
    "test_arm",
    "reference_arm",
    "source",
    "object",
    "grid",
    "ensemble_size",
    "seed",
    "block_size",
    "mode",
    "output_dir",
    "emit_matrix",
    "sweep",
)
ARM_FIELDS = ("d_object", "d_image", "focal_length", "aperture")
# sweep labels end up in output file names
LABEL_PATTERN = re.compile(r"[A-Za-z0-9][A-Za-z0-9_.-]*")


@dataclass(frozen=True)
class SweepVariant:
    """Reference arm of an experimental variant, imaged at unit magnification."""

    focal_length: float
    aperture: float
    label: str

    def arm(self):
        return ArmGeometry.symmetric(self.focal_length, self.aperture)


@dataclass(frozen=True)
class RunConfig:
    system: SystemConfig
    mode: str
    output_dir: str
    emit_matrix: bool = False
    sweep: tuple = ()
    document: dict = field(default_factory=dict)
    config_path: Optional[str] = None

    def variant_system(self, variant):
        """SystemConfig with the reference arm swapped for a sweep variant."""
        return replace(self.system, reference_arm=variant.arm())


def load_document(path):
    """Read a JSON config file into a dict."""
    try:
        with open(path, encoding="utf-8") as f:
            document = json.load(f)
    except OSError as e:
        raise InputError(f"{path}: cannot read config: {e}")
    except json.JSONDecodeError as e:
        raise InputError(f"{path}: invalid JSON at line {e.lineno} column {e.colno}: {e.msg}")
    if not isinstance(document, dict):
        raise InputError(f"{path}: top level must be a JSON object")
    return document


def _parse_override_value(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(document, overrides):
    """
    Return a copy of document with every 'a.b.c=value' override applied.
    Values are read as JSON when they parse, otherwise kept as strings.
    """
    document = copy.deepcopy(document)
    for item in overrides or ():
        key, sep, text = item.partition("=")
        key = key.strip()
        if not sep or not key:
            raise ConfigError("--set", f"override {item!r} is not of the form key=value")
        node = document
        parts = key.split(".")
        for depth, part in enumerate(parts[:-1]):
            child = node.setdefault(part, {})
            if not isinstance(child, dict):
                raise ConfigError(
                    ".".join(parts[: depth + 1]), "is not an object, cannot override below it"
                )
            node = child
        node[parts[-1]] = _parse_override_value(text.strip())
        logger.debug(f"override {key} = {node[parts[-1]]!r}")
    return document


def _get(section, key, path, default=KeyError):
    if key not in section:
        if default is KeyError:
            raise ConfigError(f"{path}{key}", "is required")
        return default
    return section[key]


def _section(document, key, path=""):
    value = _get(document, key, path)
    if not isinstance(value, dict):
        raise ConfigError(f"{path}{key}", f"must be an object, got {type(value).__name__}")
    return value


def _length(section, key, path, default=KeyError):
    value = _get(section, key, path, default)
    if value is None:
        return None
    if not isinstance(value, str):
        raise ConfigError(
            f"{path}{key}", f"length {value!r} needs a unit suffix, e.g. \"{value} mm\""
        )
    try:
        return parse_length(value)
    except DomainError as e:
        raise ConfigError(f"{path}{key}", str(e))


def _integer(section, key, path, default=KeyError, minimum=None):
    value = _get(section, key, path, default)
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{path}{key}", f"must be an integer, got {value!r}")
    if minimum is not None and value < minimum:
        raise ConfigError(f"{path}{key}", f"must be >= {minimum}, got {value}")
    return value


def _number(section, key, path, default=KeyError):
    value = _get(section, key, path, default)
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{path}{key}", f"must be a number, got {value!r}")
    return float(value)


def _domain(path, build):
    """Run a constructor, reporting its DomainError against a config field."""
    try:
        return build()
    except DomainError as e:
        raise ConfigError(path, str(e))


def parse_arm(document, key):
    section = _section(document, key)
    path = f"{key}."
    unknown = sorted(set(section) - set(ARM_FIELDS))
    if unknown:
        raise ConfigError(f"{path}{unknown[0]}", "unknown field")
    values = {name: _length(section, name, path) for name in ARM_FIELDS}
    return _domain(key, lambda: ArmGeometry(**values))


def parse_grid(document):
    section = _section(document, "grid")
    span = _length(section, "span", "grid.")
    n_samples = _integer(section, "n_samples", "grid.", minimum=2)
    x_center = _length(section, "x_center", "grid.", None) or 0.0
    grid = _domain("grid", lambda: make_grid(span, n_samples, x_center))
    grid_y = None
    if "span_y" in section or "n_samples_y" in section:
        span_y = _length(section, "span_y", "grid.")
        n_y = _integer(section, "n_samples_y", "grid.", minimum=2)
        grid_y = _domain("grid", lambda: make_grid(span_y, n_y))
    return grid, grid_y


def parse_source(document):
    section = _get(document, "source", "", {})
    if not isinstance(section, dict):
        raise ConfigError("source", "must be an object")
    path = "source."
    return _domain(
        "source",
        lambda: SourceSpec(
            coherence_length=_length(section, "coherence_length", path, None),
            extent=_length(section, "extent", path, None),
            profile=_get(section, "profile", path, "uniform"),
            width=_length(section, "width", path, None),
            mean_intensity=_number(section, "mean_intensity", path, 1.0),
        ),
    )


def parse_object(document, grid, grid_y, base_dir):
    section = _section(document, "object")
    path = "object."
    kind = _get(section, "type", path)
    if kind not in constants.OBJECT_TYPES:
        raise ConfigError(f"{path}type", f"must be one of {constants.OBJECT_TYPES}, got {kind!r}")
    if grid_y is not None and kind in ("double_slit", "pinhole"):
        raise ConfigError(f"{path}type", f"{kind} objects are 1-D, use a mask on a 2-D grid")
    if kind == "double_slit":
        width = _length(section, "slit_width", path)
        separation = _length(section, "separation", path)
        return _domain("object", lambda: double_slit(width, separation, grid))
    if kind == "pinhole":
        position = _length(section, "position", path, None) or 0.0
        return _domain("object", lambda: pinhole(position, grid))
    if kind == "open":
        return open_object(grid, grid_y)
    if kind == "opaque":
        return opaque_object(grid, grid_y)
    mask_path = _get(section, "path", path)
    if not os.path.isabs(mask_path):
        mask_path = os.path.join(base_dir, mask_path)
    pitch = _length(section, "pixel_pitch", path)
    threshold = _number(section, "threshold", path, 0.5)
    try:
        return mask_from_image(mask_path, pitch, threshold, grid, grid_y)
    except FailException as e:
        raise ConfigError("object", str(e))


def parse_sweep(document):
    entries = _get(document, "sweep", "", [])
    if not isinstance(entries, list):
        raise ConfigError("sweep", "must be a list of {focal_length, aperture, label}")
    variants = []
    for i, entry in enumerate(entries):
        path = f"sweep[{i}]."
        if not isinstance(entry, dict):
            raise ConfigError(f"sweep[{i}]", "must be an object")
        f = _length(entry, "focal_length", path)
        aperture = _length(entry, "aperture", path)
        label = str(_get(entry, "label", path, f"variant{i}"))
        if not LABEL_PATTERN.fullmatch(label):
            raise ConfigError(
                f"{path}label",
                f"{label!r} must start with a letter or digit and hold only letters, digits, "
                f"'_', '.' or '-'",
            )
        variant = SweepVariant(f, aperture, label)
        _domain(f"sweep[{i}]", variant.arm)
        variants.append(variant)
    labels = [v.label for v in variants]
    if len(set(labels)) != len(labels):
        raise ConfigError("sweep", f"variant labels must be unique, got {labels}")
    return tuple(variants)


def parse_run_config(document, base_dir=".", config_path=None):
    """
    Build a RunConfig from a (possibly overridden) document.
    :raise ConfigError: naming the first offending field
    """
    unknown = sorted(set(document) - set(TOP_LEVEL_FIELDS))
    if unknown:
        raise ConfigError(unknown[0], "unknown field")
    wavelength = _length(document, "wavelength", "")
    d0 = _length(document, "d_source_to_object", "")
    test_arm = parse_arm(document, "test_arm")
    reference_arm = parse_arm(document, "reference_arm")
    grid, grid_y = parse_grid(document)
    source = parse_source(document)
    obj = parse_object(document, grid, grid_y, base_dir)
    ensemble_size = _integer(document, "ensemble_size", "", 1000, minimum=1)
    seed = _integer(document, "seed", "", 0, minimum=0)
    if seed >= 2**64:
        raise ConfigError("seed", "must fit in 64 bits")
    block_size = _integer(document, "block_size", "", constants.DEFAULT_BLOCK_SIZE, minimum=1)

    mode = _get(document, "mode", "", "both")
    if mode not in constants.MODES:
        raise ConfigError("mode", f"must be one of {constants.MODES}, got {mode!r}")
    output_dir = _get(document, "output_dir", "", "output")
    if not isinstance(output_dir, str) or not output_dir:
        raise ConfigError("output_dir", "must be a non-empty path")
    emit_matrix = _get(document, "emit_matrix", "", False)
    if not isinstance(emit_matrix, bool):
        raise ConfigError("emit_matrix", f"must be true or false, got {emit_matrix!r}")
    if emit_matrix and grid_y is not None:
        raise ConfigError("emit_matrix", "the correlation matrix is only available in 1-D")
    sweep = parse_sweep(document)
    if mode == "sweep" and not sweep:
        raise ConfigError("sweep", "mode 'sweep' needs at least one variant")

    system = _domain(
        "grid",
        lambda: SystemConfig(
            wavelength=wavelength,
            d_source_to_object=d0,
            test_arm=test_arm,
            reference_arm=reference_arm,
            source=source,
            object=obj,
            grid=grid,
            ensemble_size=ensemble_size,
            seed=seed,
            grid_y=grid_y,
            block_size=block_size,
        ),
    )
    return RunConfig(
        system=system,
        mode=mode,
        output_dir=output_dir,
        emit_matrix=emit_matrix,
        sweep=sweep,
        document=copy.deepcopy(document),
        config_path=config_path,
    )


def load(config_path, overrides=()):
    """Read, override and parse a config file."""
    document = apply_overrides(load_document(config_path), overrides)
    base_dir = os.path.dirname(os.path.abspath(config_path))
    run_config = parse_run_config(document, base_dir, config_path)
    logger.info(f"Succeeded to load config {config_path} (mode {run_config.mode})")
    return run_config


def _arm_diagnostics(system, arm, name):
    problems = []
    axes = [("grid", system.grid)] + ([("grid_y", system.grid_y)] if system.grid_y else [])
    for axis_name, axis in axes:
        if arm.aperture > axis.span:
            problems.append(
                f"{name}.aperture: lens aperture {arm.aperture:.6g} m exceeds the "
                f"{axis_name} span {axis.span:.6g} m"
            )
    if problems:
        return problems
    plan = (
        PropagationPlan.test_arm(system)
        if name == "test_arm"
        else PropagationPlan.reference_arm(replace(system, reference_arm=arm))
    )
    try:
        compile_plan(plan, system.wavelength, system.grid, system.grid_y)
    except (SamplingError, DomainError) as e:
        problems.append(f"{name}: {e}")
    return problems


def physics_diagnostics(run_config):
    """Grid/aperture fit, sampling bounds and guard band of a parsed RunConfig."""
    system = run_config.system
    problems = _arm_diagnostics(system, system.test_arm, "test_arm")
    problems += _arm_diagnostics(system, system.reference_arm, "reference_arm")
    for i, variant in enumerate(run_config.sweep):
        problems += _arm_diagnostics(system, variant.arm(), f"sweep[{i}]")
    support = system.object.support_half_width()
    if support:
        for axis_name, axis in (("span", system.grid), ("span_y", system.grid_y)):
            if axis is None:
                continue
            needed = constants.GUARD_BAND_FACTOR * 2.0 * support
            if axis.span < needed:
                problems.append(
                    f"grid.{axis_name}: {axis.span:.6g} m is less than "
                    f"{constants.GUARD_BAND_FACTOR}x the object support ({needed:.6g} m)"
                )
    return problems


def validate(config_path, overrides=()):
    """
    Full schema and physics validation without running anything.
    :return: list of diagnostic strings, empty when the config is runnable
    """
    try:
        document = apply_overrides(load_document(config_path), overrides)
    except FailException as e:
        return [str(e)]
    base_dir = os.path.dirname(os.path.abspath(config_path))

    problems = []
    for check in (
        lambda: _length(document, "wavelength", ""),
        lambda: _length(document, "d_source_to_object", ""),
        lambda: parse_arm(document, "test_arm"),
        lambda: parse_arm(document, "reference_arm"),
        lambda: parse_source(document),
        lambda: parse_sweep(document),
    ):
        try:
            check()
        except FailException as e:
            problems.append(str(e))
    if problems:
        return problems
    try:
        run_config = parse_run_config(document, base_dir, config_path)
    except FailException as e:
        return [str(e)]
    problems = physics_diagnostics(run_config)
    for problem in problems:
        logger.warning(problem)
    return problems


def object_grid(system):
    """Object-plane grid the test detector maps onto (x_obj = -x_t / M_t)."""
    return system.grid.mirrored(system.test_arm.magnification)

