"""
Executes a run configuration and writes its outputs.

Every output except manifest.json is a pure function of the effective config
(seed included): profiles as CSV on object-plane coordinates, 2-D images as
16-bit PGM, report.txt / report.csv. The manifest adds the wall-clock time,
the worker count and a sha256 for every other file the run wrote.

Outputs are written to a staging directory next to output_dir and moved in
only once the run has finished, so a failed run leaves output_dir untouched.
"""
import json
import os
import tempfile
import time
from dataclasses import dataclass, field

import numpy as np

from ghostscope import ConfigError, DomainError, SamplingError
from ghostscope import constants
from ghostscope import logger
from ghostscope.analysis import (
    RESOLVED_DIP_DEPTH,
    fwhm,
    fwhm_ratio_fig3,
    kernel_hg,
    median_row_dip_depth,
    normalize_profile,
    resolution_report,
    single_arm_apsf,
)
from ghostscope.config import load, physics_diagnostics
from ghostscope.core import ArmGeometry, Profile, focal_depth, make_grid, rayleigh_limit_na
from ghostscope.correlate import (
    MonteCarloEngine,
    analytic_direct_image,
    analytic_ghost_image,
    correlation_matrix,
    direct_image,
    ghost_image,
)
from ghostscope.fileio import (
    digest_directory,
    write_image,
    write_profile_csv,
    write_table_csv,
)
from ghostscope.optics import apsf_closed_form, apsf_numeric

REPORT_COLUMNS = ["label", "quantity", "fwhm_m", "rayleigh_limit_m", "dip_depth", "resolvable"]


def _with_aperture(arm, aperture):
    return ArmGeometry(arm.d_object, arm.d_image, arm.focal_length, aperture)


@dataclass(frozen=True)
class RunManifest:
    config: dict
    seed: int
    frames: int
    wall_clock_seconds: float
    files: dict
    images: dict = field(default_factory=dict)
    threads: int = 1
    output_dir: str = ""

    def to_dict(self):
        return {
            "config": self.config,
            "seed": self.seed,
            "frames": self.frames,
            "wall_clock_seconds": self.wall_clock_seconds,
            "runtime": {"threads": self.threads},
            "images": self.images,
            "files": self.files,
        }


def _clear_previous_outputs(output_dir):
    """Remove the files a previous manifest in output_dir listed."""
    manifest_path = os.path.join(output_dir, constants.MANIFEST_NAME)
    if not os.path.isfile(manifest_path):
        return
    try:
        with open(manifest_path, encoding="utf-8") as f:
            previous = json.load(f)
    except (OSError, ValueError):
        logger.warning(f"Failed to read previous manifest {manifest_path}, leaving files alone")
        return
    for name in previous.get("files", {}):
        path = os.path.join(output_dir, name)
        if os.path.isfile(path):
            os.remove(path)
    os.remove(manifest_path)


class Runner:
    def __init__(self, run_config, threads=1):
        """
        :param run_config: RunConfig
        :param threads: worker processes for frame simulation
        """
        self.run_config = run_config
        self.system = run_config.system
        self.threads = threads
        self.output_dir = run_config.output_dir
        self.images = {}
        self.reports = []
        self.notes = []
        self.frames = 0
        self.work_dir = None

    def path(self, name):
        return os.path.join(self.work_dir, name)

    def run(self):
        """Execute the configured mode; returns the RunManifest."""
        started = time.perf_counter()
        parent = os.path.dirname(os.path.abspath(self.output_dir))
        os.makedirs(parent, exist_ok=True)
        mode = self.run_config.mode
        logger.info(f"Running mode {mode} into {self.output_dir}")
        with tempfile.TemporaryDirectory(prefix=constants.STAGING_PREFIX, dir=parent) as work:
            self.work_dir = work
            getattr(self, f"_run_{mode}")()
            self._write_reports()
            manifest = RunManifest(
                config=self.run_config.document,
                seed=self.system.seed,
                frames=self.frames,
                wall_clock_seconds=round(time.perf_counter() - started, 3),
                files=digest_directory(work),
                images=self.images,
                threads=self.threads,
                output_dir=self.output_dir,
            )
            with open(self.path(constants.MANIFEST_NAME), "w", encoding="utf-8") as f:
                json.dump(manifest.to_dict(), f, indent=2, sort_keys=True)
                f.write("\n")
            self._publish(list(manifest.files) + [constants.MANIFEST_NAME])
        logger.info(f"Succeeded to write {len(manifest.files)} files to {self.output_dir}")
        return manifest

    def _publish(self, names):
        """Replace the previous outputs in output_dir with the staged files."""
        os.makedirs(self.output_dir, exist_ok=True)
        _clear_previous_outputs(self.output_dir)
        for name in names:
            target = os.path.join(self.output_dir, name)
            os.makedirs(os.path.dirname(target), exist_ok=True)
            os.replace(self.path(name), target)

    # Monte-Carlo modes

    def _simulate(self, system, keep_matrix=False):
        acc = MonteCarloEngine(system, threads=self.threads, keep_matrix=keep_matrix).run()
        self.frames = acc.count
        return acc

    def _rayleigh(self):
        return self.system.test_arm.rayleigh_limit(self.system.wavelength)

    def _report(self, profile, label):
        if not np.max(profile.values) > 0:
            self.notes.append(f"{label}: empty profile, no width measured")
            return None
        try:
            report = resolution_report(profile, self._rayleigh(), label=label)
        except DomainError as e:
            self.notes.append(f"{label}: {e}")
            return None
        self.reports.append(report)
        return report

    def _emit_profile(self, name, profile, report=True):
        write_profile_csv(self.path(f"{name}.csv"), profile.grid.coordinates(), profile.values)
        if report:
            self._report(profile, name)

    def _emit_image(self, name, image, lit_rows):
        self.images[f"{name}.pgm"] = write_image(self.path(f"{name}.pgm"), image.values)
        if lit_rows.size:
            median = median_row_dip_depth(image.values, lit_rows)
            self.notes.append(
                f"{name}: median row dip depth {median:.6f} over {lit_rows.size} rows"
            )

    def _lit_rows(self, image):
        obj = self.system.object
        lit_y = obj.grid_y.coordinates()[np.abs(obj.values).max(axis=1) > 0]
        rows = {image.grid_y.index_of(y) for y in lit_y}
        return np.array(sorted(r for r in rows if 0 <= r < image.grid_y.n_samples), dtype=int)

    def _monte_carlo_images(self, system, suffix="", direct=True, ghost=True):
        keep = self.run_config.emit_matrix and not suffix
        acc = self._simulate(system, keep_matrix=keep)
        image = ghost_image(acc) if acc.count >= 2 else None
        if image is None and ghost:
            raise ConfigError("ensemble_size", "the ghost image needs at least 2 frames")
        magnification = system.test_arm.magnification
        if image is None:
            direct_obj = direct_image(acc).to_object_plane(magnification)
            ghost_obj = None
        else:
            ghost_obj = image.to_object_plane(magnification)
            direct_obj = ghost_obj.direct_image()

        if system.is_2d:
            rows = self._lit_rows(direct_obj)
            if direct:
                self._emit_image("direct", direct_obj, rows)
            if ghost:
                self._emit_image(f"ghost{suffix}", ghost_obj, rows)
            return

        if direct:
            self._emit_profile("direct", direct_obj.profile(label="direct"))
            self._emit_analytic("analytic_direct", system, direct=True)
        if ghost:
            self._emit_profile(f"ghost{suffix}", ghost_obj.profile(label=f"ghost{suffix}"))
            self._emit_analytic(f"analytic_ghost{suffix}", system, direct=False)
        if keep:
            np.savetxt(
                self.path("correlation_matrix.csv"),
                correlation_matrix(acc),
                fmt=constants.CSV_FLOAT_FORMAT,
                delimiter=",",
            )

    def _emit_analytic(self, name, system, direct):
        out_grid = system.grid.mirrored(system.test_arm.magnification)
        try:
            if direct:
                profile = analytic_direct_image(system.object, system, out_grid)
            else:
                profile = analytic_ghost_image(system.object, system, out_grid)
        except SamplingError as e:
            self.notes.append(f"{name}: skipped, {e}")
            return
        if np.max(profile.values) > 0:
            self._emit_profile(name, profile)

    def _run_direct(self):
        self._monte_carlo_images(self.system, ghost=False)

    def _run_ghost(self):
        self._monte_carlo_images(self.system, direct=False)

    def _run_both(self):
        self._monte_carlo_images(self.system)
        self._run_variants(direct_done=True)

    def _run_sweep(self):
        self._run_variants(direct_done=False)

    def _run_variants(self, direct_done):
        for variant in self.run_config.sweep:
            logger.info(
                f"Sweep variant {variant.label}: f_r = {variant.focal_length:.6g} m, "
                f"L_r = {variant.aperture:.6g} m"
            )
            self._monte_carlo_images(
                self.run_config.variant_system(variant),
                suffix=f"_{variant.label}",
                direct=not direct_done,
            )
            direct_done = True

    # analytic modes

    def _run_apsf(self):
        system = self.system
        wl = system.wavelength
        x = system.grid.coordinates()
        for name, arm in (("test", system.test_arm), ("reference", system.reference_arm)):
            numeric = normalize_profile(apsf_numeric(arm, 0.0, system.grid, wl))
            closed = Profile(
                system.grid, np.abs(apsf_closed_form(arm, 0.0, x, wl)), "amplitude", "closed"
            )
            write_profile_csv(self.path(f"apsf_{name}.csv"), x, numeric.values)
            write_profile_csv(self.path(f"apsf_{name}_closed_form.csv"), x, closed.values)
            na = arm.numerical_aperture()
            deviation = np.max(np.abs(numeric.values - closed.values))
            width = fwhm(numeric)
            self.reports.append(
                resolution_report(numeric, arm.rayleigh_limit(wl), label=f"apsf_{name}")
            )
            self.notes.append(
                f"apsf_{name}: amplitude FWHM {width:.6e} m (image plane), "
                f"Rayleigh limit {arm.rayleigh_limit(wl):.6e} m, NA {na:.6e}, "
                f"0.61 lambda/NA {rayleigh_limit_na(wl, na):.6e} m, "
                f"focal depth +-{focal_depth(wl, na):.6e} m, "
                f"max deviation from closed form {deviation:.3e}"
            )

    def _run_fig3(self):
        system = self.system
        wl = system.wavelength
        test, ref = system.test_arm, system.reference_arm
        zero = test.first_zero(wl)
        offsets = make_grid(4.0 * zero, constants.FWHM_GRID_SAMPLES)
        curves = {
            "A": single_arm_apsf(test, wl, offsets),
            "B": kernel_hg(test, _with_aperture(ref, test.aperture), wl, offsets),
            "C": kernel_hg(test, _with_aperture(ref, 2 * test.aperture), wl, offsets),
        }
        widths = {}
        for name, curve in curves.items():
            write_profile_csv(self.path(f"kernel_{name}.csv"), offsets.coordinates(), curve.values)
            widths[name] = fwhm(curve)
        rows = [
            {
                "curve": name,
                "label": curve.label,
                "fwhm_m": widths[name],
                "fwhm_over_first_zero": widths[name] / zero,
                "ratio_to_A": widths[name] / widths["A"],
            }
            for name, curve in curves.items()
        ]
        write_table_csv(
            self.path("fig3_fwhm.csv"),
            ["curve", "label", "fwhm_m", "fwhm_over_first_zero", "ratio_to_A"],
            rows,
        )
        self.notes.append(
            f"FWHM ratio of the configured arms: {fwhm_ratio_fig3(test, ref, wl):.6f}"
        )
        self.notes.append(f"Rayleigh limit 1.22 lambda d1 / L_t: {self._rayleigh():.6e} m")

    # reports

    def _ordering(self):
        scored = [(r.dip_depth, r.label) for r in self.reports if r.dip_depth is not None]
        if len(scored) < 2:
            return None
        scored.sort()
        return " < ".join(f"{label} ({dip:.4f})" for dip, label in scored)

    def _write_reports(self):
        write_table_csv(
            self.path("report.csv"), REPORT_COLUMNS, [r.as_row() for r in self.reports]
        )
        lines = [
            f"mode: {self.run_config.mode}",
            f"seed: {self.system.seed}",
            f"frames: {self.frames}",
            f"wavelength: {self.system.wavelength:.6e} m",
            f"resolvable when dip depth >= {RESOLVED_DIP_DEPTH:.4f}",
            "",
        ]
        for r in self.reports:
            dip = "-" if r.dip_depth is None else f"{r.dip_depth:.4f}"
            lines.append(
                f"{r.label:<28} {r.quantity:<9} fwhm {r.fwhm:.6e} m  "
                f"rayleigh {r.rayleigh_limit:.6e} m  dip {dip:<6}  "
                f"{'resolvable' if r.resolvable else 'not resolvable'}"
            )
        ordering = self._ordering()
        if ordering:
            lines += ["", f"dip depth ordering: {ordering}"]
        if self.notes:
            lines += [""] + self.notes
        with open(self.path("report.txt"), "w", encoding="utf-8", newline="\n") as f:
            f.write("\n".join(lines) + "\n")


def run(config_path, overrides=(), threads=1):
    """
    Load, validate and execute a config file.
    :param config_path: JSON run configuration
    :param overrides: 'key=value' strings applied before parsing
    :param threads: worker processes; never changes the written bytes
    :return: RunManifest
    """
    run_config = load(config_path, overrides)
    problems = physics_diagnostics(run_config)
    if problems:
        raise ConfigError(config_path, "; ".join(problems))
    return Runner(run_config, threads).run()
