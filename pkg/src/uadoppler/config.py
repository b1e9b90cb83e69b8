"""Run configuration: JSON file with one section per pipeline module."""

import json
from dataclasses import dataclass, field, fields

from .probe import ProbeConfig
from .spectrum import SpectrumConfig


class ConfigError(ValueError):
    pass


@dataclass
class EvalConfig:
    fold: bool = False
    n_range: list = field(default_factory=lambda: [1.0, 30.0, 1.0])  # start, stop, step


@dataclass
class CliConfig:
    jobs: int = 1
    overlay: bool = False


# (low, high) inclusive; None leaves a side open
_RANGES = {
    "probe_geometry": {
        "green_min": (0, 255), "red_max": (0, 255), "blue_max": (0, 255),
        "marker_radius": (0, 50), "angle_bins": (2, 7200), "rho_resolution": (0.01, None),
        "nms_rho": (0, None), "nms_theta_deg": (0, 90), "min_votes": (1, None),
        "min_votes_fraction": (0, 1), "refine_band": (0, None), "parallel_tol_deg": (0, 90),
        "arc_min_votes": (1, None), "arcs_required": (0, 10),
    },
    "spectrum_qa": {
        "overlay_std": (0, 1), "overlay_dilation": (0, 50), "beta": (0, None),
        "weight_eps": (0, 1), "bg_top_fraction": (0, 1), "bg_top_max": (0, 1),
        "bg_border_max": (0, 1), "fg_min": (0, 1), "solver_tol": (1e-15, 1),
        "axis_tilt_deg": (0, 45), "axis_min_intensity": (0, 1), "axis_edge_contrast": (0, 1),
        "axis_vote_fraction": (0, 1), "smooth_sigma": (0, None), "min_distance": (1, None),
        "good_threshold": (0, 1), "poor_threshold": (0, 1), "sweep_min": (0, None),
        "sweep_max": (0, None), "range_pct": (0, 100), "clarity_run": (1, None),
    },
    "eval_harness": {},
    "cli": {"jobs": (1, 256)},
}

SECTIONS = {
    "probe_geometry": ProbeConfig,
    "spectrum_qa": SpectrumConfig,
    "eval_harness": EvalConfig,
    "cli": CliConfig,
}


@dataclass
class RunConfig:
    probe_geometry: ProbeConfig = field(default_factory=ProbeConfig)
    spectrum_qa: SpectrumConfig = field(default_factory=SpectrumConfig)
    eval_harness: EvalConfig = field(default_factory=EvalConfig)
    cli: CliConfig = field(default_factory=CliConfig)

    def section_dict(self, name):
        obj = getattr(self, name)
        return {f.name: getattr(obj, f.name) for f in fields(obj)}


def _check_value(section, key, value, default):
    where = f"{section}.{key}"
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{where} must be a boolean")
        return value
    if key == "n_range":
        if (not isinstance(value, list) or len(value) not in (2, 3)
                or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in value)):
            raise ConfigError(f"{where} must be [start, stop] or [start, stop, step]")
        parse_n_range(value)
        return [float(v) for v in value]
    if key == "min_votes":
        if value is None:
            return None
        default = 1
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{where} must be numeric")
    if isinstance(default, int) and not float(value).is_integer():
        raise ConfigError(f"{where} must be an integer")
    lo, hi = _RANGES[section].get(key, (None, None))
    if (lo is not None and value < lo) or (hi is not None and value > hi):
        raise ConfigError(f"{where}={value} outside [{lo}, {hi}]")
    return int(value) if isinstance(default, int) else value


def config_from_dict(doc):
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    cfg = RunConfig()
    for section, body in doc.items():
        if section not in SECTIONS:
            raise ConfigError(f"unknown config section {section!r}")
        if not isinstance(body, dict):
            raise ConfigError(f"section {section!r} must be an object")
        obj = getattr(cfg, section)
        known = {f.name: getattr(obj, f.name) for f in fields(obj)}
        for key, value in body.items():
            if key not in known:
                raise ConfigError(f"unknown config key {section}.{key}")
            setattr(obj, key, _check_value(section, key, value, known[key]))
    sq = cfg.spectrum_qa
    if sq.poor_threshold > sq.good_threshold:
        raise ConfigError("spectrum_qa.poor_threshold exceeds good_threshold")
    if sq.sweep_min > sq.sweep_max:
        raise ConfigError("spectrum_qa.sweep_min exceeds sweep_max")
    return cfg


def load_config(path=None):
    if path is None:
        return RunConfig()
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from exc
    return config_from_dict(doc)


def parse_n_range(value):
    """``"start:stop[:step]"`` or a list -> ascending thresholds, stop inclusive."""
    if isinstance(value, str):
        try:
            parts = [float(v) for v in value.split(":")]
        except ValueError as exc:
            raise ConfigError(f"bad n range {value!r}") from exc
    else:
        parts = [float(v) for v in value]
    if len(parts) == 2:
        parts.append(1.0)
    if len(parts) != 3:
        raise ConfigError(f"bad n range {value!r}")
    start, stop, step = parts
    if start <= 0 or step <= 0 or stop < start:
        raise ConfigError(f"n range must be positive and ascending, got {value!r}")
    count = int((stop - start) / step + 1e-9) + 1
    return [start + k * step for k in range(count)]
